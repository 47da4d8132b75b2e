#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "metastab/errors.hpp"
#include "metastab/generators.hpp"
#include "metastab/oracle.hpp"
#include "metastab/potential.hpp"
#include "metastab/rng.hpp"
#include "support.hpp"

using namespace metastab;
using testing::path3;
using testing::rel_diff;

namespace {

// random nonempty disjoint A, B
std::pair<StateSet, StateSet> random_pair(std::size_t n, CounterRng& rng) {
    StateSet a(n), b(n);
    a.insert(rng.below(n));
    std::size_t y;
    do y = rng.below(n);
    while (a.contains(y));
    b.insert(y);
    for (std::size_t x = 0; x < n; ++x) {
        if (a.contains(x) || b.contains(x)) continue;
        const double u = rng.uniform();
        if (u < 0.15) a.insert(x);
        else if (u < 0.3) b.insert(x);
    }
    return {a, b};
}

}  // namespace

TEST_CASE("two-state equilibrium solution") {
    const auto c = two_state_chain(0.3, 0.1);
    const auto sol = equilibrium_potential(c, StateSet(2, {0}), StateSet(2, {1}));
    CHECK(sol.potential[0] == 1.0);
    CHECK(sol.potential[1] == 0.0);
    CHECK(sol.capacity == doctest::Approx(0.075).epsilon(1e-14));
    CHECK(sol.capacity_energy == doctest::Approx(0.075).epsilon(1e-14));
    CHECK(sol.escape[0] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(sol.last_exit[0] == doctest::Approx(1.0));
}

TEST_CASE("three-state path") {
    const auto c = path3();
    const StateSet a(3, {2}), b(3, {0});
    const auto sol = equilibrium_potential(c, a, b);
    CHECK(sol.potential[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sol.capacity == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(capacity(c, b, a) == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(escape_probability(c, a, b) == doctest::Approx(0.25).epsilon(1e-14));
    const auto rev = equilibrium_potential(c, b, a);
    CHECK(rev.potential[1] == doctest::Approx(1 - sol.potential[1]));
    CHECK(sol.escape_reverse[0] == doctest::Approx(rev.escape[0]));
}

TEST_CASE("direct edge escape") {
    // from a the only way out is the edge to b, so e = q
    std::vector<Transition> e{{"a", "b", 0.2}, {"b", "a", 0.1}, {"b", "c", 0.3}, {"c", "b", 0.6}};
    const ReversibleChain c({"a", "b", "c"}, e, std::nullopt, TimeKind::discrete);
    const auto sol = equilibrium_potential(c, StateSet(3, {0}), StateSet(3, {1, 2}));
    CHECK(sol.escape[0] == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("mean hitting times") {
    const auto c = two_state_chain(0.3, 0.1);
    Vector start(2);
    start << 1, 0;
    CHECK(mean_hitting_time(c, start, StateSet(2, {1})) == doctest::Approx(1 / 0.3).epsilon(1e-14));
    CHECK_THROWS_AS(mean_hitting_time(c, start, StateSet(2, {0})), InvalidInput);
    CHECK_THROWS(hitting_times(c, StateSet(2, {0, 1})));
}

TEST_CASE("set errors") {
    const auto c = path3();
    CHECK_THROWS_AS(equilibrium_potential(c, StateSet(3, {0, 1}), StateSet(3, {1})), OverlappingSets);
    CHECK_THROWS_AS(equilibrium_potential(c, StateSet(3), StateSet(3, {1})), EmptySet);
    CHECK_THROWS_AS(equilibrium_potential(c, StateSet(4, {0}), StateSet(4, {1})), InvalidInput);
}

TEST_CASE("one-dimensional path capacity") {
    const std::vector<double> w{0.5, 0.25};
    CHECK(path_capacity_1d(w) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    const std::vector<double> one{0.7};
    CHECK(path_capacity_1d(one) == doctest::Approx(0.7));
    CHECK_THROWS_AS(path_capacity_1d(std::vector<double>{0.5, 0.0}), DomainError);
    CHECK_THROWS_AS(path_capacity_1d(std::vector<double>{}), EmptySet);

    // agreement with the generic solver on the birth-death generator
    for (std::uint64_t r = 0; r < 20; ++r) {
        CounterRng rng(3, r, 0, Stream::test);
        const std::size_t n = 2 + rng.below(12);
        std::vector<double> weights(n);
        double total = 0;
        for (auto& v : weights) total += v = std::exp(4 * rng.uniform() - 2);
        const auto chain = weighted_path_chain(weights);
        const std::size_t x = n - 1;
        const std::span<const double> edges(weights.data(), x);
        const auto sol = equilibrium_potential(chain, StateSet(n, {x}), StateSet(n, {0}));
        CHECK(rel_diff(sol.capacity, path_capacity_1d(edges) / total) < 1e-10);
        const Vector h = path_potential_1d(edges);
        CHECK((h - sol.potential).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("random chains: variational and monotonicity properties") {
    for (std::uint64_t r = 0; r < 30; ++r) {
        const auto time = r % 3 == 0 ? TimeKind::continuous : TimeKind::discrete;
        const auto c = random_reversible_chain(4 + r * 2, 21, r, 0.4, time);
        const auto n = c.size();
        CounterRng rng(17, r, 0, Stream::test);
        const auto [a, b] = random_pair(n, rng);
        const auto sol = equilibrium_potential(c, a, b);
        CHECK(sol.max_residual < 1e-10);
        CHECK(rel_diff(sol.capacity, sol.capacity_energy) < 1e-8);
        CHECK(rel_diff(sol.capacity, capacity(c, b, a)) < 1e-10);
        CHECK(sol.potential.minCoeff() >= 0);
        CHECK(sol.potential.maxCoeff() <= 1);
        CHECK(sol.last_exit.sum() == doctest::Approx(1.0));
        for (std::size_t x = 0; x < n; ++x) {
            if (!a.contains(x)) CHECK(sol.last_exit[static_cast<Eigen::Index>(x)] == 0.0);
            else CHECK(sol.escape[static_cast<Eigen::Index>(x)] <= sol.capacity / c.mu()[static_cast<Eigen::Index>(x)] * (1 + 1e-12));
        }

        // Dirichlet principle over feasible clipped functions
        for (int k = 0; k < 10; ++k) {
            Vector f(n);
            for (std::size_t x = 0; x < n; ++x) {
                const auto i = static_cast<Eigen::Index>(x);
                f[i] = a.contains(x) ? 1.0 : b.contains(x) ? 0.0 : std::clamp(sol.potential[i] + 0.3 * (rng.uniform() - 0.5), 0.0, 1.0);
            }
            CHECK(dirichlet_form(c, f) >= sol.capacity - 1e-10);
        }

        // shrinking B lowers the capacity
        if (b.count() > 1) {
            StateSet smaller = b;
            smaller.erase(b.indices().back());
            CHECK(capacity(c, a, smaller) <= sol.capacity + 1e-12);
        }

        // hitting identity on the last-exit law
        Vector hmass = c.mu().cwiseProduct(sol.potential);
        CHECK(rel_diff(mean_hitting_time(c, sol.last_exit, b), hmass.sum() / sol.capacity) < 1e-8);
    }
}
