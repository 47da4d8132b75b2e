#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "metastab/chain.hpp"

namespace metastab {

// A complementary pair of Young functions. psi may return +inf outside its
// domain [0, slope_cap]; phi_slope is the right derivative of phi.
struct YoungPair {
    std::string name;
    std::function<double(double)> phi;
    std::function<double(double)> psi;
    std::function<double(double)> psi_inverse;  // inf{s : psi(s) > t}
    std::function<double(double)> phi_slope;
    double slope_cap = std::numeric_limits<double>::infinity();
};

YoungPair power_pair(double p);
YoungPair linear_pair();
YoungPair entropy_pair();
// Convex piecewise-linear phi through (0,0) with the given breakpoints and
// slopes: slopes[k] applies on [breaks[k], breaks[k+1]), breaks[0] == 0, and
// the last slope continues to infinity.
YoungPair piecewise_linear_pair(std::vector<double> breaks, std::vector<double> slopes);
// "linear", "entropy" or "power:<p>"
YoungPair young_pair_by_name(const std::string& name);
std::vector<YoungPair> builtin_pairs();

double indicator_norm(double set_mass, const YoungPair& pair, double k);

struct OrliczNorm {
    double value = 0;
    double lambda = 0;        // minimiser of lambda (K + E phi(|f|/lambda)), 0 for the limit
    double primal_value = 0;  // E[|f| g] for the feasible g read off at lambda
};
OrliczNorm orlicz_norm(const Vector& nu, const Vector& f, const YoungPair& pair, double k);

struct CapacitaryIntegral {
    double lhs = 0;  // integral of 2t cap({|f| > t}, B) dt
    double rhs = 0;  // 4 E(f)
    bool holds = false;
};
CapacitaryIntegral capacitary_integral(const ReversibleChain& chain, const Vector& f, const StateSet& b);

struct CapacityConstant {
    double value = 0;
    StateSet argmax;
    bool exact = true;  // false: restricted scan, value is a lower bound
    std::size_t sets_evaluated = 0;
};
inline constexpr std::size_t kExactSubsetLimit = 20;
CapacityConstant measure_capacity_constant(const ReversibleChain& chain, const Vector& nu, const StateSet& b,
                                           const YoungPair& pair, double k);

struct MuckenhouptConstant {
    double value = 0;
    std::size_t argmax = 0;
};
// mu, nu indexed by 0..n
MuckenhouptConstant muckenhoupt_constant(std::span<const double> mu, std::span<const double> nu);

struct UniversalConstants {
    double c_var = 0;
    double c_ent = 0;
    StateSet var_a, var_b, ent_a, ent_b;
};
// Maximises over disjoint A, B with nu[A] <= 1/2 <= nu[B].
UniversalConstants universal_mixed_constants(const ReversibleChain& chain, const Vector& nu);

}  // namespace metastab
