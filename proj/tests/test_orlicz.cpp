#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metastab/errors.hpp"
#include "metastab/generators.hpp"
#include "metastab/oracle.hpp"
#include "metastab/orlicz.hpp"
#include "metastab/potential.hpp"
#include "metastab/rng.hpp"
#include "support.hpp"

using namespace metastab;
using testing::rel_diff;

namespace {

const double e2 = std::exp(2.0);

std::vector<YoungPair> pairs_under_test() {
    auto out = builtin_pairs();
    for (std::uint64_t r = 0; r < 20; ++r) {
        CounterRng rng(9, r, 0, Stream::test);
        const std::size_t pieces = 1 + rng.below(4);
        std::vector<double> breaks{0}, slopes{rng.uniform()};
        for (std::size_t k = 1; k < pieces; ++k) {
            breaks.push_back(breaks.back() + 0.1 + 2 * rng.uniform());
            slopes.push_back(slopes.back() + 0.1 + 2 * rng.uniform());
        }
        out.push_back(piecewise_linear_pair(breaks, slopes));
    }
    return out;
}

}  // namespace

TEST_CASE("pseudo-inverse values") {
    CHECK(entropy_pair().psi_inverse(0.0) == 0.0);
    CHECK(linear_pair().psi_inverse(5.0) == 1.0);
    CHECK(linear_pair().psi_inverse(0.0) == 0.0);  // indicator of (0, inf)
    CHECK(power_pair(2).psi_inverse(2.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(power_pair(2).psi(3.0) == doctest::Approx(4.5));
    CHECK(entropy_pair().psi(1.0) == doctest::Approx(std::exp(1.0) - 1));
    CHECK(entropy_pair().phi(0.5) == 0.0);
    CHECK(entropy_pair().phi(std::exp(1.0)) == doctest::Approx(1.0));
    CHECK(std::isinf(linear_pair().psi(1.5)));
    CHECK_THROWS_AS(power_pair(1.0), DomainError);
    CHECK_THROWS_AS(young_pair_by_name("cubic"), InvalidInput);
    CHECK(young_pair_by_name("power:3").psi(2.0) == doctest::Approx(std::pow(2.0, 1.5) / 1.5));
}

TEST_CASE("Young function properties") {
    for (const auto& pair : pairs_under_test()) {
        CAPTURE(pair.name);
        CHECK(pair.phi(0.0) == 0.0);
        double prev_phi = 0, prev_psi = 0;
        std::vector<double> inv;
        for (int i = 0; i <= 400; ++i) {
            const double s = i * 0.0125;
            const double ph = pair.phi(s), ps = pair.psi(s);
            CHECK(ph >= prev_phi - 1e-12);
            CHECK(ps >= prev_psi - 1e-12);
            prev_phi = ph;
            prev_psi = ps;
            for (int j = 0; j <= 40; ++j) {
                const double r = j * 0.1;
                CHECK(s * r <= pair.phi(s) + pair.psi(r) + 1e-10);
            }
            inv.push_back(pair.psi_inverse(0.05 + s));
        }
        for (std::size_t i = 1; i + 1 < inv.size(); ++i) {
            CHECK(inv[i] >= inv[i - 1] - 1e-12);
            if (std::isfinite(inv[i + 1])) CHECK(inv[i + 1] - 2 * inv[i] + inv[i - 1] <= 1e-12);
        }
    }
}

TEST_CASE("indicator norm closed forms") {
    CHECK(indicator_norm(0.3, linear_pair(), 1.0) == doctest::Approx(0.3));
    CHECK(indicator_norm(0.5, entropy_pair(), e2) == doctest::Approx(1.3793118378397566).epsilon(1e-14));
    CHECK(indicator_norm(1.0, entropy_pair(), e2) == doctest::Approx(2.1269280110429722).epsilon(1e-14));
    CHECK_THROWS_AS(indicator_norm(0.3, entropy_pair(), 0.0), DomainError);
}

TEST_CASE("dual Orlicz norm") {
    Vector nu(3), f(3);
    nu << 0.2, 0.3, 0.5;
    SUBCASE("constant function, linear pair") {
        f << 2, 2, 2;
        CHECK(orlicz_norm(nu, f, linear_pair(), 1.0).value == doctest::Approx(2.0).epsilon(1e-10));
    }
    SUBCASE("indicators") {
        f << 1, 0, 1;
        for (const auto& pair : {entropy_pair(), power_pair(2), power_pair(1.5)})
            for (double k : {0.5, 1.0, e2}) {
                const double closed = indicator_norm(0.7, pair, k);
                CHECK(rel_diff(orlicz_norm(nu, f, pair, k).value, closed) < 1e-8);
            }
    }
    SUBCASE("entropy is dominated by the K = 1 entropy norm") {
        for (std::uint64_t r = 0; r < 50; ++r) {
            CounterRng rng(4, r, 0, Stream::test);
            Vector g(3);
            for (auto& v : g) v = 3 * rng.uniform();
            CHECK(entropy(nu, g) <= orlicz_norm(nu, g, entropy_pair(), 1.0).value + 1e-10);
        }
    }
    SUBCASE("brute force agreement") {
        f << 0.4, 1.3, 0.9;
        for (const auto& pair : {entropy_pair(), power_pair(2), linear_pair()}) {
            const double dual = orlicz_norm(nu, f, pair, 1.0).value;
            const double brute = brute_force_orlicz(nu, f, pair, 1.0);
            CHECK(std::abs(dual - brute) <= 1e-4 * std::max(1.0, dual));
        }
    }
}

TEST_CASE("capacitary integral on the two-state chain") {
    const auto c = two_state_chain(0.3, 0.1);
    const StateSet b(2, {1});
    Vector f(2);
    f << 1, 0;
    auto ci = capacitary_integral(c, f, b);
    CHECK(ci.lhs == doctest::Approx(0.075).epsilon(1e-14));
    CHECK(ci.rhs == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(ci.holds);
    f << 2, 0;
    ci = capacitary_integral(c, f, b);
    CHECK(ci.lhs == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(ci.rhs == doctest::Approx(1.2).epsilon(1e-14));
    f << 2, 1;
    CHECK_THROWS_AS(capacitary_integral(c, f, b), InvalidInput);
}

TEST_CASE("capacitary integral on random chains") {
    for (std::uint64_t r = 0; r < 60; ++r) {
        const auto c = random_reversible_chain(3 + r % 20, 8, r);
        CounterRng rng(8, r, 0, Stream::test);
        StateSet b(c.size(), {rng.below(c.size())});
        Vector f(c.size());
        for (std::size_t x = 0; x < c.size(); ++x)
            f[static_cast<Eigen::Index>(x)] = b.contains(x) ? 0.0 : (rng.uniform() < 0.3 ? 1.0 : 6 * rng.uniform() - 3);
        const auto ci = capacitary_integral(c, f, b);
        CHECK(ci.lhs <= ci.rhs + 1e-10);
        CHECK(ci.lhs >= 0);
        // single level sets reduce to the capacity
        Vector ind = Vector::Zero(c.size());
        ind[static_cast<Eigen::Index>((b.indices()[0] + 1) % c.size())] = 1;
        const StateSet top(c.size(), {(b.indices()[0] + 1) % c.size()});
        CHECK(rel_diff(capacitary_integral(c, ind, b).lhs, capacity(c, top, b)) < 1e-10);
    }
}

TEST_CASE("measure-capacity constants") {
    const auto c = two_state_chain(0.3, 0.1);
    const StateSet b(2, {1});
    const auto lin = measure_capacity_constant(c, c.mu(), b, linear_pair(), 1.0);
    CHECK(lin.value == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
    CHECK(lin.exact);
    const auto ent = measure_capacity_constant(c, c.mu(), b, entropy_pair(), e2);
    CHECK(ent.value == doctest::Approx(11.398561364684472).epsilon(1e-12));
    CHECK_THROWS_AS(measure_capacity_constant(c, c.mu(), StateSet(2, {0, 1}), linear_pair(), 1.0), EmptySet);
}

TEST_CASE("Muckenhoupt scan") {
    const std::vector<double> w{0.5, 0.25, 0.25};
    const auto m = muckenhoupt_constant(w, w);
    CHECK(m.value == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(m.argmax == 2);
    const std::vector<double> q{0.2, 0.8};
    CHECK(muckenhoupt_constant(q, q).value == doctest::Approx(0.8 / 0.2));
    const std::vector<double> u{0.5, 0.5};
    CHECK(muckenhoupt_constant(u, u).value == doctest::Approx(1.0));
    CHECK_THROWS(muckenhoupt_constant(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("universal mixed constants") {
    const auto c = two_state_chain(0.2, 0.2);
    const auto u = universal_mixed_constants(c, c.mu());
    CHECK(u.c_var == doctest::Approx(0.5 / capacity(c, StateSet(2, {0}), StateSet(2, {1}))).epsilon(1e-12));
    CHECK(u.c_ent == doctest::Approx(0.5 * std::log1p(2 * e2) / 0.1).epsilon(1e-12));

    // a heavy state must sit on the B side
    std::vector<Transition> e{{"a", "h", 0.4}, {"h", "a", 0.05}, {"b", "h", 0.4}, {"h", "b", 0.05}};
    const ReversibleChain heavy({"a", "b", "h"}, e, std::nullopt, TimeKind::discrete);
    const auto hu = universal_mixed_constants(heavy, heavy.mu());
    CHECK(hu.var_b.contains(2));
    CHECK(!hu.var_a.contains(2));

    // four-state uniform ring against enumeration
    std::vector<Transition> ring;
    for (int i = 0; i < 4; ++i) {
        ring.push_back({std::to_string(i), std::to_string((i + 1) % 4), 0.25});
        ring.push_back({std::to_string((i + 1) % 4), std::to_string(i), 0.25});
    }
    const ReversibleChain rc({"0", "1", "2", "3"}, ring, std::nullopt, TimeKind::discrete);
    double best = 0;
    for (std::uint64_t am = 1; am < 16; ++am)
        for (std::uint64_t bm = 1; bm < 16; ++bm) {
            if (am & bm) continue;
            const auto a = StateSet::from_bits(4, am), b = StateSet::from_bits(4, bm);
            if (mass(rc.mu(), a) > 0.5 + 1e-12 || mass(rc.mu(), b) < 0.5 - 1e-12) continue;
            best = std::max(best, mass(rc.mu(), a) / capacity(rc, a, b));
        }
    CHECK(universal_mixed_constants(rc, rc.mu()).c_var == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("Rothaus shift inequality") {
    for (std::uint64_t r = 0; r < 100; ++r) {
        CounterRng rng(12, r, 0, Stream::test);
        const std::size_t n = 2 + rng.below(6);
        Vector nu(n), f(n);
        for (auto& v : nu) v = 0.05 + rng.uniform();
        nu /= nu.sum();
        for (auto& v : f) v = 4 * rng.uniform() - 2;
        const double b = f[static_cast<Eigen::Index>(rng.below(n))];
        const Vector fb = (f.array() - b).matrix();
        const double lhs = entropy(nu, f.cwiseAbs2());
        const double rhs = entropy(nu, fb.cwiseAbs2()) + 2 * mean(nu, fb.cwiseAbs2());
        CHECK(lhs <= rhs + 1e-12);
    }
}
