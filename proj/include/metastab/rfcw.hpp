#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metastab/chain.hpp"

namespace metastab {

// Configurations are bit masks: bit i set means spin i is +1.
using Config = std::uint32_t;

struct FieldSpec {
    enum class Kind { zero, uniform, discrete, values } kind = Kind::zero;
    double h_inf = 0;
    std::vector<double> values;  // support for discrete, the field itself for values
};
// "zero", "uniform:<h>", "discrete:<a>,<b>,...", "values:<h1>,<h2>,..."
FieldSpec parse_field_spec(const std::string& text);

class RfcwModel {
public:
    RfcwModel(int n_spins, double beta, std::vector<double> field, double h_inf);
    static RfcwModel build(int n_spins, double beta, const FieldSpec& spec, std::uint64_t seed);

    int spins() const { return n_; }
    double beta() const { return beta_; }
    double h_inf() const { return h_inf_; }
    const std::vector<double>& field() const { return h_; }

    static int spin(Config c, int i) { return ((c >> i) & 1u) ? 1 : -1; }
    static Config flip(Config c, int i) { return c ^ (Config{1} << i); }
    int magnetisation(Config c) const;
    double hamiltonian(Config c) const;
    double flip_energy(Config c, int i) const;
    // nu_{i,sigma}(-sigma_i): probability that a selected site i flips
    double flip_probability(Config c, int i) const;

    static constexpr int kMaxMaterialised = 14;
    std::string config_name(Config c) const;
    Vector gibbs() const;
    ReversibleChain micro_chain() const;

private:
    int n_;
    double beta_;
    std::vector<double> h_;
    double h_inf_;
};

struct CoarseGraining {
    int blocks = 0;
    double eps = 0;  // interval width 2 h_inf / n
    std::vector<int> block_of;
    std::vector<std::vector<int>> members;
    std::vector<double> hbar;
    std::vector<double> htilde;
    std::vector<std::size_t> radix;  // |Lambda_l| + 1
    std::size_t lattice_size = 0;

    std::vector<int> counts(std::size_t point) const;  // number of + spins per block
    std::size_t point(const std::vector<int>& counts) const;
    std::vector<double> coordinates(std::size_t point, int n_spins) const;
    std::size_t project(Config c) const;
    std::vector<std::size_t> neighbours(std::size_t point) const;
};
CoarseGraining coarse_grain(const RfcwModel& model, int n);

// -1/2 (sum x)^2 - sum hbar x, so that H = N energy(rho) - sum sigma htilde.
double mesoscopic_energy(const CoarseGraining& cg, const std::vector<double>& x);
// Legendre dual of t -> |Lambda_l|^{-1} sum log cosh(t + beta htilde_i), at y in [-1,1].
double block_rate(const RfcwModel& model, const CoarseGraining& cg, int block, double y);
double free_energy(const RfcwModel& model, const CoarseGraining& cg, const std::vector<double>& x);

struct CriticalPoint {
    double z = 0;
    std::vector<double> x;
    double residual = 0;     // |z - N^{-1} sum tanh(beta (z + h_i))|
    double free_energy = 0;  // evaluated through the block rate functions
    double closed_form = 0;  // z^2/2 - (beta N)^{-1} sum log cosh(beta (z + h_i))
};

struct Landscape {
    CoarseGraining cg;
    Vector f;                                    // F on the lattice
    std::vector<std::vector<std::size_t>> minima;  // plateaus, ascending lattice index
    std::vector<std::size_t> order;              // order[k] = index into minima of m_{k+1}
    std::vector<double> depths;                  // Delta_1 .. Delta_{K-1}
    std::vector<CriticalPoint> critical;         // refined minimum per entry of minima
    bool monotone = true;
};
Landscape free_energy_landscape(const RfcwModel& model, const CoarseGraining& cg);
// min over lattice paths from A to B of the maximal F along the path
double communication_height(const Landscape& land, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

StateSet fiber(const RfcwModel& model, const CoarseGraining& cg, const std::vector<std::size_t>& points);
bool is_fiber_set(const RfcwModel& model, const CoarseGraining& cg, const StateSet& micro);

struct MesoscopicChain {
    ReversibleChain chain;
    Vector mass;
};
MesoscopicChain mesoscopic_chain(const RfcwModel& model, const CoarseGraining& cg);

struct BarredReport {
    ReversibleChain barred;
    double log_mu_ratio_max = 0;  // max |log(mubar/mu)|
    double log_mu_bound = 0;      // 2 beta eps N
    double log_p_ratio_max = 0;   // max over edges |log(pbar/p)|
    double log_p_bound = 0;       // 2 beta eps
    double lumpability_residual = 0;
    bool certified = false;
};
BarredReport barred_chain(const RfcwModel& model, const CoarseGraining& cg);
// Spread of the barred hitting probabilities across each fiber.
double lumped_hitting_residual(const RfcwModel& model, const CoarseGraining& cg, const ReversibleChain& barred,
                               const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct BernoulliLaplace {
    double c_pi = 0;
    double c_lsi = 0;
    bool pi_within_quarter = false;
    bool lsi_at_least_twice_pi = false;
    std::optional<double> spectral_c_pi;  // materialised exchange chain
};
BernoulliLaplace bernoulli_laplace_constants(int l, int k, double c_bl = 1.0, bool materialise = true);
// Exchange chain on configurations of l sites with k particles; each step swaps
// a uniformly chosen particle-hole pair.
ReversibleChain bernoulli_laplace_chain(int l, int k);

struct TwoStepReport {
    double max_energy_ratio = 0;  // max over probes of E_2(f) / E(f)
    double max_spectral_ratio = 0;
    bool certified = false;
};
TwoStepReport two_step_comparison(const ReversibleChain& chain, std::uint64_t seed, std::size_t probes = 16);
ReversibleChain two_step_chain(const ReversibleChain& chain);

struct ExchangeRateCheck {
    double max_ratio = 0;
    double bound = 0;  // N^2 exp(beta (eps N + 4 + 4 h_inf))
    std::size_t edges = 0;
};
ExchangeRateCheck exchange_rate_check(const RfcwModel& model, const CoarseGraining& cg, const std::vector<int>& counts);
double local_pi_ceiling(const RfcwModel& model, const CoarseGraining& cg);

struct RhoCertificate {
    double numerator = 0;
    double denominator_lower = 0;
    double rho_upper = 0;
};
// Two-set certificate from the mesoscopic chain; the numerator uses micro
// capacities of the minimum fibers.
RhoCertificate rho_certificate(const RfcwModel& model, const Landscape& land);
// |Gamma|^{-1} exp(-4 beta eps (2N+1)) min_x cap(x, B) / mu(x)
double escape_lower_bound(const RfcwModel& model, const CoarseGraining& cg, const MesoscopicChain& meso,
                          const std::vector<std::size_t>& b);

}  // namespace metastab
