#pragma once

#include <cstdint>
#include <span>

#include "metastab/chain.hpp"

namespace metastab {

// Irreducible chain on n states: random weights, a random spanning tree plus
// extra edges, symmetric log-uniform conductances. Discrete chains are scaled
// so that no row sum exceeds 0.9.
ReversibleChain random_reversible_chain(std::size_t n, std::uint64_t seed, std::uint64_t index,
                                        double extra_edges = 0.3, TimeKind time = TimeKind::discrete);
// Random nearest-neighbour chain on {0..n-1}.
ReversibleChain random_birth_death_chain(std::size_t n, std::uint64_t seed, std::uint64_t index);

// States "a", "b" with p(a,b) = p and p(b,a) = q.
ReversibleChain two_state_chain(double p, double q);
// Metropolis walk on a path: p(x, x+-1) = min(1, exp(-beta (V(x+-1) - V(x)))) / 2.
ReversibleChain metropolis_path(std::span<const double> potential, double beta);
// Metropolis walk on a cycle with the same rule.
ReversibleChain metropolis_ring(std::span<const double> potential, double beta);
// V(x) = ((x-5)^2 - 25)^2 / 100 on {0..10}; wells at 0 and 10.
ReversibleChain double_well_chain(double beta);
// Wells at 0, 6 and 12 on {0..12}; escape barriers 3, 2 and 3.75.
ReversibleChain triple_well_chain(double beta);

}  // namespace metastab
