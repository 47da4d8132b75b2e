#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>

#include "metastab/errors.hpp"
#include "metastab/oracle.hpp"
#include "metastab/potential.hpp"
#include "metastab/rfcw.hpp"
#include "support.hpp"

using namespace metastab;
using testing::rel_diff;

namespace {

RfcwModel two_valued(int n, double beta, std::uint64_t seed = 3) {
    return RfcwModel::build(n, beta, parse_field_spec("discrete:-0.3,0.3"), seed);
}

}  // namespace

TEST_CASE("field specs") {
    CHECK(parse_field_spec("zero").h_inf == 0.0);
    CHECK(parse_field_spec("zero:0.5").h_inf == 0.5);
    const auto u = parse_field_spec("uniform:0.2");
    CHECK(u.kind == FieldSpec::Kind::uniform);
    CHECK(u.h_inf == 0.2);
    const auto d = parse_field_spec("discrete:-0.1,0.4");
    CHECK(d.values.size() == 2);
    CHECK(d.h_inf == 0.4);
    CHECK_THROWS_AS(parse_field_spec("gaussian:1"), InvalidInput);
    CHECK_THROWS_AS(parse_field_spec("uniform:x"), InvalidInput);
    CHECK_THROWS_AS(parse_field_spec("discrete:"), InvalidInput);
    CHECK_THROWS_AS(RfcwModel::build(3, 1.0, parse_field_spec("values:0.1,0.2"), 0), InvalidInput);
    CHECK_THROWS_AS(RfcwModel(3, 1.0, {0.1, 0.2, 0.5}, 0.3), DomainError);
    CHECK_THROWS_AS(RfcwModel(3, -1.0, {0, 0, 0}, 0), DomainError);
}

TEST_CASE("field sampling is deterministic and bounded") {
    const auto spec = parse_field_spec("uniform:0.25");
    const auto a = RfcwModel::build(12, 1.0, spec, 9), b = RfcwModel::build(12, 1.0, spec, 9);
    CHECK(a.field() == b.field());
    for (double h : a.field()) CHECK(std::abs(h) <= 0.25);
    CHECK(RfcwModel::build(12, 1.0, spec, 10).field() != a.field());
}

TEST_CASE("two-spin Glauber chain") {
    const RfcwModel m(2, 1.0, {0.0, 0.0}, 0.0);
    const auto chain = m.micro_chain();
    // from ++ a flip raises the energy by 1
    CHECK(chain.jump(3, 1) == doctest::Approx(0.18393972058572117).epsilon(1e-14));
    CHECK(chain.jump(1, 3) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(chain.names()[3] == "++");
    const Vector g = m.gibbs();
    CHECK(g.sum() == doctest::Approx(1.0));
    CHECK(g[3] / g[1] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("hamiltonian decomposes through the coarse graining") {
    const auto m = two_valued(8, 1.3);
    const auto cg = coarse_grain(m, 2);
    CHECK(cg.blocks == 2);
    for (Config c = 0; c < (1u << 8); c += 7) {
        const auto pt = cg.project(c);
        const auto x = cg.coordinates(pt, 8);
        double tilde = 0;
        for (int i = 0; i < 8; ++i) tilde += RfcwModel::spin(c, i) * cg.htilde[static_cast<std::size_t>(i)];
        CHECK(m.hamiltonian(c) == doctest::Approx(8 * mesoscopic_energy(cg, x) - tilde).epsilon(1e-12));
        CHECK(cg.point(cg.counts(pt)) == pt);
        // flip energy is the hamiltonian difference
        CHECK(m.flip_energy(c, 2) == doctest::Approx(m.hamiltonian(RfcwModel::flip(c, 2)) - m.hamiltonian(c)));
    }
    // two-valued field split by sign leaves nothing inside a block
    for (double t : cg.htilde) CHECK(std::abs(t) < 1e-15);
}

TEST_CASE("block rate function") {
    const RfcwModel m(6, 1.0, std::vector<double>(6, 0.0), 0.0);
    const auto cg = coarse_grain(m, 1);
    CHECK(block_rate(m, cg, 0, 0.0) == doctest::Approx(0.0));
    CHECK(block_rate(m, cg, 0, 1.0) == doctest::Approx(std::log(2.0)));
    const double y = 0.4;
    const double closed = 0.5 * ((1 + y) * std::log1p(y) + (1 - y) * std::log1p(-y));
    CHECK(block_rate(m, cg, 0, y) == doctest::Approx(closed).epsilon(1e-12));
    CHECK_THROWS_AS(block_rate(m, cg, 0, 1.5), DomainError);

    // with spread fields the rate stays convex
    const auto u = RfcwModel::build(10, 2.0, parse_field_spec("uniform:0.5"), 4);
    const auto cu = coarse_grain(u, 2);
    for (int l = 0; l < 2; ++l) {
        if (cu.members[static_cast<std::size_t>(l)].empty()) continue;
        for (double t = -0.9; t < 0.85; t += 0.1) {
            const double a = block_rate(u, cu, l, t), b = block_rate(u, cu, l, t + 0.05),
                         c = block_rate(u, cu, l, t + 0.1);
            CHECK(a - 2 * b + c >= -1e-12);
        }
    }
}

TEST_CASE("zero-field free energy minimum") {
    const RfcwModel m(10, 1.5, std::vector<double>(10, 0.0), 0.0);
    const auto land = free_energy_landscape(m, coarse_grain(m, 1));
    REQUIRE(land.minima.size() == 2);
    for (const auto& cp : land.critical) {
        CHECK(std::abs(std::abs(cp.z) - 0.8585596366401104) < 1e-10);
        CHECK(cp.closed_form == doctest::Approx(-0.07679611258766311).epsilon(1e-10));
        CHECK(std::abs(cp.free_energy - cp.closed_form) < 1e-8);
        CHECK(cp.residual < 1e-8);
    }
    CHECK(land.depths.size() == 1);
    CHECK(land.monotone);
    const double phi = communication_height(land, land.minima[0], land.minima[1]);
    CHECK(phi >= land.f[static_cast<Eigen::Index>(land.minima[0][0])]);
    CHECK(phi == doctest::Approx(land.f[5]));
}

TEST_CASE("fibers") {
    const auto m = two_valued(6, 1.0);
    const auto cg = coarse_grain(m, 2);
    const StateSet f = fiber(m, cg, {0, 3});
    CHECK(is_fiber_set(m, cg, f));
    StateSet g = fiber(m, cg, {1});
    REQUIRE(g.count() > 1);
    g.erase(g.indices().back());
    CHECK(!is_fiber_set(m, cg, g));
    std::size_t total = 0;
    for (std::size_t p = 0; p < cg.lattice_size; ++p) total += fiber(m, cg, {p}).count();
    CHECK(total == 64);
}

TEST_CASE("barred chain is lumpable for a two-valued field") {
    const auto m = two_valued(6, 1.2);
    const auto cg = coarse_grain(m, 2);
    const auto rep = barred_chain(m, cg);
    CHECK(rep.certified);
    CHECK(rep.lumpability_residual <= 1e-10);
    CHECK(rep.log_mu_ratio_max <= rep.log_mu_bound + 1e-12);
    CHECK(rep.log_p_ratio_max <= rep.log_p_bound + 1e-12);
    CHECK(lumped_hitting_residual(m, cg, rep.barred, {0}, {cg.lattice_size - 1}) <= 1e-10);
}

TEST_CASE("mesoscopic chain dominates micro capacities") {
    const auto m = RfcwModel::build(8, 1.5, parse_field_spec("uniform:0.3"), 2);
    const auto cg = coarse_grain(m, 2);
    const auto meso = mesoscopic_chain(m, cg);
    const auto micro = m.micro_chain();
    CHECK(meso.mass.sum() == doctest::Approx(1.0));
    const std::vector<std::size_t> a{0}, b{cg.lattice_size - 1};
    const double cmicro = capacity(micro, fiber(m, cg, a), fiber(m, cg, b));
    const double cmeso = capacity(meso.chain, StateSet(cg.lattice_size, {0}), StateSet(cg.lattice_size, {cg.lattice_size - 1}));
    CHECK(cmicro <= cmeso * (1 + 1e-10));
    CHECK(escape_lower_bound(m, cg, meso, b) > 0);
}

TEST_CASE("Bernoulli-Laplace constants") {
    auto one = bernoulli_laplace_constants(4, 2);
    CHECK(one.c_pi == doctest::Approx(1.0));
    CHECK(*one.spectral_c_pi == doctest::Approx(1.0).epsilon(1e-12));
    auto half = bernoulli_laplace_constants(2, 1);
    CHECK(half.c_pi == doctest::Approx(0.5));
    CHECK(*half.spectral_c_pi == doctest::Approx(0.5).epsilon(1e-12));
    for (int l = 2; l <= 8; ++l)
        for (int k = 1; k < l; ++k) {
            const auto bl = bernoulli_laplace_constants(l, k);
            CHECK(rel_diff(*bl.spectral_c_pi, bl.c_pi) < 1e-10);
            CHECK(bl.pi_within_quarter);
        }
    CHECK(bernoulli_laplace_constants(6, 2).c_pi == doctest::Approx(4.0 / 3.0));
    CHECK_THROWS_AS(bernoulli_laplace_constants(4, 4), DomainError);
}

TEST_CASE("two-step comparison") {
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto m = RfcwModel::build(6, 1.0, parse_field_spec("uniform:0.4"), s);
        const auto rep = two_step_comparison(m.micro_chain(), s);
        CHECK(rep.max_energy_ratio <= 2 + 1e-12);
        CHECK(rep.max_spectral_ratio <= 2 + 1e-12);
        CHECK(rep.certified);
    }
}

TEST_CASE("exchange rates within a fiber") {
    const auto m = RfcwModel::build(8, 1.0, parse_field_spec("uniform:0.5"), 6);
    const auto cg = coarse_grain(m, 2);
    for (std::size_t p = 0; p < cg.lattice_size; ++p) {
        const auto rep = exchange_rate_check(m, cg, cg.counts(p));
        CHECK(rep.max_ratio <= rep.bound);
    }
    CHECK(local_pi_ceiling(m, cg) > 0);
}

TEST_CASE("certificate on the zero-field model") {
    const RfcwModel m(8, 2.0, std::vector<double>(8, 0.0), 0.0);
    const auto land = free_energy_landscape(m, coarse_grain(m, 1));
    const auto cert = rho_certificate(m, land);
    CHECK(cert.numerator > 0);
    CHECK(cert.denominator_lower > 0);
    CHECK(cert.rho_upper == doctest::Approx(cert.numerator / cert.denominator_lower));
}
