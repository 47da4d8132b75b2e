#pragma once

#include <optional>
#include <vector>

#include "metastab/chain.hpp"

namespace metastab {

using SetFamily = std::vector<StateSet>;

void validate_family(const ReversibleChain& chain, const SetFamily& sets);

enum class RhoMode { automatic, exact, singleton_bound };

struct RhoReport {
    double numerator = 0;    // K max_M P_{mu_M}[tau_{rest} < tau_M]
    double denominator = 0;  // min_A P_{mu_A}[tau_{union} < tau_A] (or its lower bound)
    double rho = 0;
    bool exact = true;     // false: denominator relaxed to singletons, rho is an upper bound
    bool denominator_empty = false;
    std::vector<double> escape;  // per set
    StateSet argmin;
};
RhoReport rho_metastability(const ReversibleChain& chain, const SetFamily& sets, RhoMode mode = RhoMode::automatic);

struct ValleyStructure {
    std::vector<StateSet> valleys;
    Partition partition;         // S_i, M_i inside S_i
    std::vector<int> owner;      // partition block of each state
    std::vector<char> contested; // state lies in two or more valleys
    Matrix hit;                  // hit(x, i) = P_x[tau_{M_i} < tau_{rest}], harmonic convention on the sets
    bool overlap_certified = true;
    double overlap_worst = 0;    // max over pairs of overlap mass / (rho K min mu[M])
};
ValleyStructure metastable_partition(const ReversibleChain& chain, const SetFamily& sets,
                                     std::optional<double> rho = std::nullopt);

struct RegularityReport {
    double eta = 0;
    double variance = 0;  // Var_{mu_A}[nu_{A,B} / mu_A]
    double capacity = 0;
};
RegularityReport eta_regularity(const ReversibleChain& chain, const StateSet& a, const StateSet& b);

struct ConstantsReport {
    double c_mass = 0;
    std::vector<double> local_pi;
    std::vector<double> local_lsi;  // optimiser lower bounds
    double c_pi_family = 1;
    double c_lsi_family = 1;
    double eta = 0;  // max over ordered pairs
    Matrix eta_pairs;
};
ConstantsReport constants_report(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                 std::size_t lsi_multistarts, std::uint64_t seed);

struct MeanExitReport {
    std::size_t index = 0;
    std::vector<std::size_t> deeper;  // J
    double main_term = 0;             // mu[S_i] / cap(M_i, B)
    double exact = 0;                 // E_{nu_{M_i,B}}[tau_B]
    double relative_error = 0;
    double delta = 0;
    double c_ratio = 0;
    std::optional<double> error_scale;  // delta + rho log(c_ratio / rho)
};
MeanExitReport mean_exit_asymptotics(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                     std::size_t i, std::optional<double> rho = std::nullopt);

struct PiLsiEstimates {
    double pi_lower = 0, pi_upper = 0;
    double lsi_lower = 0, lsi_upper = 0;
    std::optional<double> pi_point, lsi_point;  // two sets only
    std::optional<double> pi_error_factor, lsi_error_factor;
    Matrix pair_terms;
};
PiLsiEstimates pi_lsi_estimates(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                const ConstantsReport* constants = nullptr, std::optional<double> rho = std::nullopt);

struct HarmonicNeighborhood {
    StateSet ua, ub;
    double capacity_ratio = 0;  // cap(A,B) / cap(U_A, U_B)
    bool ratio_certified = false;
    std::vector<double> leftover;  // mu[S_i \ U_A] / mu[M_i] for i in the A side
    std::optional<bool> leftover_certified;
};
HarmonicNeighborhood harmonic_neighborhood(const ReversibleChain& chain, const SetFamily& sets,
                                           const Partition& parts, const std::vector<std::size_t>& a_side,
                                           const std::vector<std::size_t>& b_side, double delta,
                                           std::optional<double> rho = std::nullopt);

}  // namespace metastab
