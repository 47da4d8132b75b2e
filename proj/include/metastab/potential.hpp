#pragma once

#include <span>

#include "metastab/chain.hpp"

namespace metastab {

struct EquilibriumSolution {
    Vector potential;        // h_{A,B}
    Vector escape;           // e_{A,B}, supported on A
    Vector escape_reverse;   // e_{B,A}, supported on B
    Vector last_exit;        // nu_{A,B}
    double capacity = 0;     // sum over A of mu e_{A,B}
    double capacity_energy = 0;  // E(h_{A,B})
    double max_residual = 0;     // max |L h| / exit rate off A and B
};

// Solves L h = 0 off A u B with h = 1 on A and h = 0 on B.
EquilibriumSolution equilibrium_potential(const ReversibleChain& chain, const StateSet& a, const StateSet& b);
double capacity(const ReversibleChain& chain, const StateSet& a, const StateSet& b);
// P_{mu_A}[tau_B < tau_A]
double escape_probability(const ReversibleChain& chain, const StateSet& a, const StateSet& b);

// Expected hitting times of `target`; zero on the target.
Vector hitting_times(const ReversibleChain& chain, const StateSet& target);
double mean_hitting_time(const ReversibleChain& chain, const Vector& start, const StateSet& target);

// Capacity between {x, x+1, ...} and {0} on the weighted half-line with
// conductance w(z) on the edge z -- z+1, for w = weights[0..x-1].
double path_capacity_1d(std::span<const double> weights);
// h_{x,0}(y) for y = 0..x
Vector path_potential_1d(std::span<const double> weights);

}  // namespace metastab
