#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "metastab/chain.hpp"
#include "metastab/orlicz.hpp"

namespace metastab {

struct SpectralReport {
    Vector generator_spectrum;  // eigenvalues of the symmetrised -L, ascending
    double gap = 0;
    double c_pi = 0;           // Rayleigh quotient of the computed gap eigenfunction
    double c_pi_eigen = 0;     // 1 / gap
    Vector eigenfunction;
};
SpectralReport exact_cpi(const ReversibleChain& chain);

// sup Var_{mu_M}[f] / E(f) with the energy of the whole chain.
double local_cpi(const ReversibleChain& chain, const StateSet& m);

struct LsiEstimate {
    double lower_bound = 0;
    Vector maximiser;
    std::size_t starts = 0;
    std::size_t iterations = 0;
};
inline constexpr std::size_t kDefaultMultistarts = 32;
// Maximises Ent_nu[f^2] / E(f); nu defaults to mu. Every returned value is the
// ratio of an actual function, hence a lower bound on the constant.
LsiEstimate estimate_clsi(const ReversibleChain& chain, std::size_t multistarts, std::uint64_t seed,
                          std::optional<Vector> nu = std::nullopt);

struct CheegerReport {
    double value = 0;
    StateSet argmax;
};
CheegerReport cheeger_constant(const ReversibleChain& chain);

// Best C in sum_{x>=1} nu(x) f(x)^2 <= C sum_{x>=0} mu(x) (f(x+1)-f(x))^2, f(0) = 0.
double hardy_constant(std::span<const double> mu, std::span<const double> nu);
// Continuous-time chain on {0..n-1}: rate 1 upwards, mu(y-1)/mu(y) downwards.
ReversibleChain weighted_path_chain(std::span<const double> weights);

// Maximises E_nu[|f| g] subject to E_nu[psi(g)] <= K by searching over budget
// allocations; independent of the dual formula. Up to 6 states.
double brute_force_orlicz(const Vector& nu, const Vector& f, const YoungPair& pair, double k, int grid = 24);

enum class Functional { dirichlet, variance, entropy };
double gradient_check(const ReversibleChain& chain, Functional which, const Vector& f, double h = 1e-6);

// P_x[first visit to the union lands in sets[i]] by repeated squaring of the
// absorbed jump chain; columns indexed by set.
Matrix absorption_by_squaring(const ReversibleChain& chain, const std::vector<StateSet>& sets);

}  // namespace metastab
