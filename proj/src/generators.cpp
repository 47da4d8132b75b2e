#include "metastab/generators.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "metastab/errors.hpp"
#include "metastab/rng.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;

ReversibleChain from_conductances(std::size_t n, const std::vector<double>& weight,
                                  const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges, TimeKind time,
                                  double max_row) {
    std::vector<double> row(n, 0.0);
    for (const auto& [x, y, c] : edges) {
        row[x] += c / weight[x];
        row[y] += c / weight[y];
    }
    double scale = 1;
    if (time == TimeKind::discrete) scale = max_row / *std::max_element(row.begin(), row.end());
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& [x, y, c] : edges) {
        trips.emplace_back(static_cast<Index>(x), static_cast<Index>(y), scale * c / weight[x]);
        trips.emplace_back(static_cast<Index>(y), static_cast<Index>(x), scale * c / weight[y]);
    }
    SparseRowMatrix jumps(static_cast<Index>(n), static_cast<Index>(n));
    jumps.setFromTriplets(trips.begin(), trips.end());
    return ReversibleChain::from_jumps(jumps, std::nullopt, time);
}

ReversibleChain metropolis(std::span<const double> v, double beta, bool ring) {
    const std::size_t n = v.size();
    if (n < 2) throw InvalidInput("potential needs at least two states");
    std::vector<Eigen::Triplet<double>> trips;
    auto rate = [&](std::size_t x, std::size_t y) { return 0.5 * std::min(1.0, std::exp(-beta * (v[y] - v[x]))); };
    const std::size_t links = ring && n > 2 ? n : n - 1;
    for (std::size_t x = 0; x < links; ++x) {
        const std::size_t y = (x + 1) % n;
        trips.emplace_back(static_cast<Index>(x), static_cast<Index>(y), rate(x, y));
        trips.emplace_back(static_cast<Index>(y), static_cast<Index>(x), rate(y, x));
    }
    SparseRowMatrix jumps(static_cast<Index>(n), static_cast<Index>(n));
    jumps.setFromTriplets(trips.begin(), trips.end());
    Vector mu(static_cast<Index>(n));
    const double low = *std::min_element(v.begin(), v.end());
    for (std::size_t x = 0; x < n; ++x) mu[static_cast<Index>(x)] = std::exp(-beta * (v[x] - low));
    std::vector<std::string> names;
    for (std::size_t x = 0; x < n; ++x) names.push_back(std::to_string(x));
    return ReversibleChain::from_jumps(jumps, mu / mu.sum(), TimeKind::discrete, std::move(names));
}

}  // namespace

ReversibleChain random_reversible_chain(std::size_t n, std::uint64_t seed, std::uint64_t index, double extra_edges,
                                        TimeKind time) {
    if (n < 2) throw InvalidInput("random chain needs at least two states");
    CounterRng rng(seed, index, 0, Stream::test);
    std::vector<double> weight(n);
    for (auto& w : weight) w = std::exp(6 * rng.uniform() - 3);
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    std::vector<char> linked(n * n, 0);
    auto add = [&](std::size_t x, std::size_t y) {
        if (linked[x * n + y]) return;
        linked[x * n + y] = linked[y * n + x] = 1;
        edges.emplace_back(x, y, std::exp(4 * rng.uniform() - 2));
    };
    for (std::size_t x = 1; x < n; ++x) add(static_cast<std::size_t>(rng.below(x)), x);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = x + 1; y < n; ++y)
            if (rng.uniform() < extra_edges) add(x, y);
    return from_conductances(n, weight, edges, time, 0.9);
}

ReversibleChain random_birth_death_chain(std::size_t n, std::uint64_t seed, std::uint64_t index) {
    if (n < 2) throw InvalidInput("birth-death chain needs at least two states");
    CounterRng rng(seed, index, 1, Stream::test);
    std::vector<double> weight(n);
    for (auto& w : weight) w = std::exp(6 * rng.uniform() - 3);
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t x = 0; x + 1 < n; ++x) edges.emplace_back(x, x + 1, std::exp(4 * rng.uniform() - 2));
    return from_conductances(n, weight, edges, TimeKind::discrete, 0.9);
}

ReversibleChain two_state_chain(double p, double q) {
    if (!(p > 0 && p <= 1 && q > 0 && q <= 1)) throw DomainError("two-state rates must lie in (0, 1]");
    return ReversibleChain({"a", "b"}, {{"a", "b", p}, {"b", "a", q}}, std::nullopt, TimeKind::discrete);
}

ReversibleChain metropolis_path(std::span<const double> potential, double beta) {
    return metropolis(potential, beta, false);
}

ReversibleChain metropolis_ring(std::span<const double> potential, double beta) {
    return metropolis(potential, beta, true);
}

ReversibleChain double_well_chain(double beta) {
    std::vector<double> v(11);
    for (int x = 0; x <= 10; ++x) {
        const double y = x - 5;
        v[static_cast<std::size_t>(x)] = (y * y - 25) * (y * y - 25) / 100;
    }
    return metropolis_path(v, beta);
}

ReversibleChain triple_well_chain(double beta) {
    // piecewise linear: wells at 0, 6, 12; saddles at 3 and 9
    const std::vector<double> v{0.0, 1.0, 2.0, 3.0, 2.0, 1.5, 1.0, 1.75, 2.5, 3.25, 1.5, 0.25, -0.5};
    return metropolis_path(v, beta);
}

}  // namespace metastab
