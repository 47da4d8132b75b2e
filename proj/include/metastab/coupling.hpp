#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "metastab/rfcw.hpp"

namespace metastab {

// Laws on {-1, +1}; index 0 is -1, index 1 is +1.
using SpinLaw = std::array<double, 2>;

struct TwoPointCoupling {
    std::array<SpinLaw, 2> joint{};      // joint[a][b] = P[X = a, X' = b]
    std::array<SpinLaw, 2> gate_off{};   // law of (X, X') given V = 0
    double delta = 0;
    double disagreement = 0;
    double total_variation = 0;
};
// Largest delta with delta nu <= nu' pointwise (capped at 1).
double max_domination(const SpinLaw& nu, const SpinLaw& nu_prime);
TwoPointCoupling optimal_two_point_coupling(const SpinLaw& nu, const SpinLaw& nu_prime, double delta);

struct CouplingOptions {
    std::size_t horizon = 1'000'000;  // T
    std::size_t gates = 0;            // M
    std::uint64_t seed = 0;
    std::uint64_t run = 0;
    std::vector<char> target;  // lattice mask of the mesoscopic set B; empty means no B
    bool record_paths = false;
    bool stop_at_cover = true;  // stop once every spin of sigma has flipped
};

struct CouplingTrace {
    std::vector<Config> sigma, varsigma;  // only with record_paths
    std::vector<char> gates;              // V_0 .. V_{M-1}
    std::vector<char> effective_gates;    // V after any domination downgrade
    std::size_t gates_used = 0;           // M_t at the end
    bool xi = false;
    long xi_time = -1;
    std::vector<long> first_flip;  // t_i, -1 if spin i never flipped
    long cover_time = -1;          // max_i t_i once all spins flipped
    std::size_t attempts = 0;      // number of attempts until each site's first flip
    long hit_target = -1;          // tau_B for sigma
    bool event_a_nominal = false;  // all V_k = 1
    bool event_a = false;          // all effective gates = 1
    bool event_b = false;
    bool merged = false;
    long merged_time = -1;
    std::size_t downgrades = 0;
    bool aligned_at_cover = false;  // sigma(t) == varsigma(t) at t = cover_time
    bool containment_ok = true;     // event_a && event_b implies aligned_at_cover
    bool synchrony_ok = true;       // rho(sigma) == rho(varsigma) during the coupled phase
    std::size_t steps = 0;
};

CouplingTrace run_coupling(const RfcwModel& model, const CoarseGraining& cg, Config sigma0, Config varsigma0,
                           const CouplingOptions& options);

// Transition counts of single-spin-flip paths for goodness-of-fit tests.
class TransitionTally {
public:
    explicit TransitionTally(int n_spins);
    void add(const std::vector<Config>& path);
    void merge(const TransitionTally& other);
    std::size_t transitions() const { return total_; }
    // count of moves from c flipping site i; i == N means staying
    std::uint64_t count(Config c, int i) const { return counts_[c * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(i)]; }

private:
    int n_;
    std::vector<std::uint64_t> counts_;
    std::size_t total_ = 0;
};

struct GoodnessOfFit {
    double min_p_value = 1;
    std::size_t states_tested = 0;
    double threshold = 0;  // level / states_tested
    bool pass = true;
};
GoodnessOfFit chi_square_marginal(const RfcwModel& model, const TransitionTally& tally, double level = 0.01,
                                  std::size_t min_visits = 50);

struct CouplingExperiment {
    std::size_t runs = 0;
    std::size_t gates = 0;
    double delta = 0;
    double prob_a = 0;  // nominal gates
    double prob_a_expected = 0;
    double prob_a_sigma = 0;
    double prob_a_effective = 0;
    std::size_t events_b = 0;
    std::size_t containment_checked = 0;
    std::size_t containment_violations = 0;
    std::size_t synchrony_violations = 0;
    std::size_t downgrades = 0;
    std::size_t runs_with_downgrade = 0;
    std::size_t merged = 0;
    double mean_attempts = 0;
    std::size_t steps = 0;
    GoodnessOfFit sigma_fit, varsigma_fit;
};
CouplingExperiment coupling_experiment(const RfcwModel& model, const CoarseGraining& cg, Config sigma0, Config varsigma0,
                                       CouplingOptions options, std::size_t runs);

// I_alpha(s - 1) for the negative binomial tail.
double negative_binomial_rate(double alpha, double s);
// exp(-2 beta (1 + h_inf)), the lower bound on any flip probability
double flip_floor(const RfcwModel& model);

struct TailBoundReport {
    double alpha = 0;
    double s = 0;
    double rate = 0;
    double bound = 0;  // exp(-rate N)
    double empirical = 0;
    double sigma = 0;
    bool holds = false;
    std::size_t samples = 0;
    std::size_t domination_violations = 0;  // runs with N > R + N
    double mean_attempts = 0;
};
TailBoundReport tail_bound_check(const RfcwModel& model, double s, std::size_t samples, std::uint64_t seed,
                                 Config start = 0);

struct HittingBoundReport {
    double factor = 0;     // exp(-4 beta eps s N)
    double tail = 0;       // exp(-I N)
    double min_margin = 0;  // min over fiber pairs of lhs - rhs
    double min_margin_sigma = 0;  // Monte Carlo standard error of the margin, zero when exact
    Config worst_sigma = 0, worst_varsigma = 0;
    std::size_t pairs = 0;
    double max_fiber_spread = 0;  // spread of P[tau_B < tau_A] within a fiber
    bool exact = false;
    bool holds = false;
};
HittingBoundReport hitting_lower_bound_check(const RfcwModel& model, const CoarseGraining& cg,
                                             const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                                             double s, std::size_t runs, std::uint64_t seed);

struct EtaCouplingReport {
    double variance = 0;  // Var_{mu_A}[nu_{A,B} / mu_A]
    double capacity = 0;
    double mass = 0;      // mu[A]
    double eta = 0;       // variance cap / mu[A]
    double bound = 0;     // coupling-derived bound on the variance
    double slack = 0;
    bool holds = false;
    bool single_fiber = false;
};
EtaCouplingReport eta_from_coupling(const RfcwModel& model, const CoarseGraining& cg, const std::vector<std::size_t>& a,
                                    const std::vector<std::size_t>& b, std::optional<double> s = std::nullopt);

}  // namespace metastab
