#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastab/errors.hpp"
#include "metastab/generators.hpp"
#include "metastab/metastability.hpp"
#include "metastab/oracle.hpp"
#include "metastab/potential.hpp"
#include "support.hpp"

using namespace metastab;
using testing::rel_diff;

namespace {

SetFamily wells(std::size_t n, std::initializer_list<std::size_t> xs) {
    SetFamily out;
    for (auto x : xs) out.push_back(StateSet(n, {x}));
    return out;
}

}  // namespace

TEST_CASE("two-state chain diagnostics") {
    const auto c = two_state_chain(0.3, 0.1);
    const auto sets = wells(2, {0, 1});
    const auto rho = rho_metastability(c, sets);
    CHECK(rho.denominator_empty);
    CHECK(rho.rho == 0.0);
    CHECK(rho.escape[0] == doctest::Approx(0.3));
    CHECK(rho.numerator == doctest::Approx(2 * 0.3));

    const auto vs = metastable_partition(c, sets);
    CHECK(vs.partition[0] == sets[0]);
    CHECK(vs.partition[1] == sets[1]);

    const auto k = constants_report(c, sets, vs.partition, 4, 1);
    CHECK(k.c_mass == doctest::Approx(std::log1p(std::exp(2.0))).epsilon(1e-14));
    CHECK(k.eta == 0.0);

    const auto me = mean_exit_asymptotics(c, sets, vs.partition, 0);
    CHECK(me.main_term == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
    CHECK(me.exact == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
    CHECK(me.deeper == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(mean_exit_asymptotics(c, sets, vs.partition, 1), DomainError);

    const auto est = pi_lsi_estimates(c, sets, vs.partition);
    CHECK(*est.pi_point == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(*est.lsi_point == doctest::Approx(2.5 / log_mean(0.25, 0.75)).epsilon(1e-12));
}

TEST_CASE("mass constant on a uniform block") {
    std::vector<Transition> ring;
    for (int i = 0; i < 4; ++i) {
        ring.push_back({std::to_string(i), std::to_string((i + 1) % 4), 0.25});
        ring.push_back({std::to_string((i + 1) % 4), std::to_string(i), 0.25});
    }
    const ReversibleChain rc({"0", "1", "2", "3"}, ring, std::nullopt, TimeKind::discrete);
    const SetFamily one{StateSet(4, {0, 1})};
    const auto k = constants_report(rc, one, {StateSet(4, {0, 1, 2, 3})}, 4, 1);
    CHECK(k.c_mass == doctest::Approx(3.419568409405342).epsilon(1e-14));
    const auto halves = constants_report(rc, {StateSet(4, {0}), StateSet(4, {2})},
                                         {StateSet(4, {0, 1}), StateSet(4, {2, 3})}, 4, 1);
    CHECK(halves.c_mass == doctest::Approx(2.7586236756795133).epsilon(1e-14));
}

TEST_CASE("family validation") {
    const auto c = testing::path3();
    CHECK_THROWS_AS(rho_metastability(c, {}), EmptySet);
    CHECK_THROWS_AS(rho_metastability(c, {StateSet(3, {0, 1}), StateSet(3, {1})}), OverlappingSets);
    CHECK_THROWS_AS(rho_metastability(c, {StateSet(3), StateSet(3, {1})}), EmptySet);
}

TEST_CASE("rho: exact enumeration against the singleton relaxation") {
    const auto c = triple_well_chain(2.0);
    const auto sets = wells(13, {0, 6, 12});
    const auto ex = rho_metastability(c, sets, RhoMode::exact);
    const auto sb = rho_metastability(c, sets, RhoMode::singleton_bound);
    CHECK(ex.exact);
    CHECK(!sb.exact);
    CHECK(ex.rho <= sb.rho * (1 + 1e-12));
    CHECK(ex.rho < 1);
    // doubling beta sharpens the separation
    CHECK(rho_metastability(triple_well_chain(4.0), sets).rho < ex.rho);
}

TEST_CASE("valley partition of the triple well") {
    const auto c = triple_well_chain(3.0);
    const auto sets = wells(13, {0, 6, 12});
    const auto rho = rho_metastability(c, sets).rho;
    const auto vs = metastable_partition(c, sets, rho);
    CHECK_NOTHROW(validate_partition(vs.partition, 13));
    for (std::size_t i = 0; i < 3; ++i) CHECK(sets[i].subset_of(vs.partition[i]));
    CHECK(vs.overlap_certified);
    for (std::size_t x = 0; x < 13; ++x) CHECK(vs.hit.row(static_cast<Eigen::Index>(x)).sum() == doctest::Approx(1.0));

    // wells ordered by depth: 12 is deepest, then 0, then 6
    const auto me6 = mean_exit_asymptotics(c, sets, vs.partition, 1, rho);
    CHECK(me6.deeper.size() == 2);
    CHECK(me6.relative_error < 0.2);
    REQUIRE(me6.error_scale);

    const auto hn = harmonic_neighborhood(c, sets, vs.partition, {0}, {1, 2}, 0.1, rho);
    CHECK(hn.ratio_certified);
    CHECK(hn.ua.contains(0));
    CHECK(hn.ub.contains(12));
    CHECK_THROWS_AS(harmonic_neighborhood(c, sets, vs.partition, {0}, {1}, 0.7), DomainError);
}

TEST_CASE("regularity constant") {
    const auto c = random_reversible_chain(12, 5, 2);
    CHECK(eta_regularity(c, StateSet(12, {3}), StateSet(12, {7, 8})).eta == 0.0);
    const auto reg = eta_regularity(c, StateSet(12, {0, 1, 2}), StateSet(12, {9}));
    CHECK(reg.variance >= 0);
    CHECK(reg.eta == doctest::Approx(reg.variance * reg.capacity / mass(c.mu(), StateSet(12, {0, 1, 2}))));
}

TEST_CASE("two-well Poincare estimate sharpens with beta") {
    double prev = 1e300;
    for (double beta : {1.0, 2.0, 3.0}) {
        const auto c = double_well_chain(beta);
        const auto sets = wells(11, {0, 10});
        const auto vs = metastable_partition(c, sets);
        const auto est = pi_lsi_estimates(c, sets, vs.partition);
        const double err = std::abs(exact_cpi(c).c_pi / *est.pi_point - 1);
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 0.05);
}
