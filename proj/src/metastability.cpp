#include "metastab/metastability.hpp"

#include <algorithm>
#include <cmath>

#include "metastab/errors.hpp"
#include "metastab/oracle.hpp"
#include "metastab/orlicz.hpp"
#include "metastab/parallel.hpp"
#include "metastab/potential.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;
constexpr double kTieTol = 1e-12;

StateSet union_of(const SetFamily& sets, std::size_t n) {
    StateSet u(n);
    for (const auto& s : sets) u = u | s;
    return u;
}

}  // namespace

void validate_family(const ReversibleChain& chain, const SetFamily& sets) {
    if (sets.empty()) throw EmptySet("metastable family is empty");
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].universe() != chain.size()) throw InvalidInput("set universe does not match chain size");
        if (sets[i].empty()) throw EmptySet("metastable set " + std::to_string(i) + " is empty");
        for (std::size_t j = 0; j < i; ++j)
            if (sets[i].intersects(sets[j]))
                throw OverlappingSets("metastable sets " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
    }
}

RhoReport rho_metastability(const ReversibleChain& chain, const SetFamily& sets, RhoMode mode) {
    validate_family(chain, sets);
    const std::size_t n = chain.size();
    const StateSet all = union_of(sets, n);
    RhoReport out;
    out.escape.assign(sets.size(), 0.0);
    if (sets.size() >= 2) {
        for (std::size_t i = 0; i < sets.size(); ++i)
            out.escape[i] = escape_probability(chain, sets[i], all.minus(sets[i]));
    }
    out.numerator = static_cast<double>(sets.size()) * *std::max_element(out.escape.begin(), out.escape.end());

    const auto free = all.complement().indices();
    out.argmin = StateSet(n);
    if (free.empty()) {
        out.denominator_empty = true;
        out.rho = 0;
        return out;
    }
    if (mode == RhoMode::automatic)
        mode = free.size() <= kExactSubsetLimit ? RhoMode::exact : RhoMode::singleton_bound;

    if (mode == RhoMode::exact) {
        if (free.size() > kExactSubsetLimit) throw TooLarge("exact rho enumerates subsets of at most 20 free states");
        const std::size_t total = (std::size_t{1} << free.size()) - 1;
        std::vector<double> vals(total);
        parallel_for(total, [&](std::size_t i) {
            StateSet a(n);
            for (std::size_t t = 0; t < free.size(); ++t)
                if (((i + 1) >> t) & 1u) a.insert(free[t]);
            vals[i] = escape_probability(chain, a, all);
        });
        const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
        out.denominator = vals[best];
        for (std::size_t t = 0; t < free.size(); ++t)
            if (((best + 1) >> t) & 1u) out.argmin.insert(free[t]);
        out.exact = true;
    } else {
        std::vector<double> vals(free.size());
        parallel_for(free.size(), [&](std::size_t i) {
            vals[i] = escape_probability(chain, StateSet(n, {free[i]}), all);
        });
        const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
        out.denominator = vals[best] / static_cast<double>(n);
        out.argmin.insert(free[best]);
        out.exact = false;
    }
    out.rho = out.numerator / out.denominator;
    return out;
}

ValleyStructure metastable_partition(const ReversibleChain& chain, const SetFamily& sets, std::optional<double> rho) {
    validate_family(chain, sets);
    const std::size_t n = chain.size();
    const std::size_t k = sets.size();
    const StateSet all = union_of(sets, n);
    ValleyStructure out;
    out.hit = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(k));
    if (k == 1) {
        out.hit.col(0).setOnes();
    } else {
        for (std::size_t i = 0; i < k; ++i)
            out.hit.col(static_cast<Index>(i)) = equilibrium_potential(chain, sets[i], all.minus(sets[i])).potential;
    }
    out.valleys.assign(k, StateSet(n));
    out.partition.assign(k, StateSet(n));
    out.owner.assign(n, -1);
    out.contested.assign(n, 0);
    for (std::size_t x = 0; x < n; ++x) {
        const auto row = out.hit.row(static_cast<Index>(x));
        const double top = row.maxCoeff();
        int members = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (row[static_cast<Index>(i)] >= top - kTieTol) {
                out.valleys[i].insert(x);
                if (members++ == 0) out.owner[x] = static_cast<int>(i);
            }
        }
        out.contested[x] = members > 1 ? 1 : 0;
        out.partition[static_cast<std::size_t>(out.owner[x])].insert(x);
    }

    if (rho) {
        const auto& mu = chain.mu();
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a + 1; b < k; ++b) {
                const double overlap = mass(mu, (out.valleys[a] & out.valleys[b]).minus(sets[a] | sets[b]));
                const double bound = *rho * static_cast<double>(k) * std::min(mass(mu, sets[a]), mass(mu, sets[b]));
                if (overlap > bound * (1 + 1e-12)) out.overlap_certified = false;
                if (overlap > 0) out.overlap_worst = std::max(out.overlap_worst, bound > 0 ? overlap / bound : INFINITY);
            }
        }
    }
    return out;
}

RegularityReport eta_regularity(const ReversibleChain& chain, const StateSet& a, const StateSet& b) {
    const auto sol = equilibrium_potential(chain, a, b);
    const auto& mu = chain.mu();
    const double ma = mass(mu, a);
    const auto idx = a.indices();
    double mean_g = 0;
    for (auto x : idx) mean_g += mu[static_cast<Index>(x)] / ma * (sol.escape[static_cast<Index>(x)] * ma / sol.capacity);
    double var = 0;
    for (auto x : idx) {
        const double g = sol.escape[static_cast<Index>(x)] * ma / sol.capacity;
        var += mu[static_cast<Index>(x)] / ma * (g - mean_g) * (g - mean_g);
    }
    RegularityReport out;
    out.variance = var;
    out.capacity = sol.capacity;
    out.eta = var * sol.capacity / ma;
    return out;
}

ConstantsReport constants_report(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                 std::size_t lsi_multistarts, std::uint64_t seed) {
    validate_family(chain, sets);
    validate_partition(parts, chain.size());
    if (parts.size() != sets.size()) throw InvalidInput("partition and family sizes differ");
    const auto& mu = chain.mu();
    const double e2 = std::exp(2.0);
    ConstantsReport out;
    for (const auto& s : parts) {
        const double ms = mass(mu, s);
        for (auto x : s.indices()) out.c_mass = std::max(out.c_mass, std::log1p(e2 * ms / mu[static_cast<Index>(x)]));
    }
    double pi_sum = 0, lsi_sum = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const double lp = local_cpi(chain, sets[i]);
        double ll = 0;
        if (sets[i].count() > 1)
            ll = estimate_clsi(chain, lsi_multistarts, seed + i, restrict_normalized(mu, sets[i])).lower_bound;
        out.local_pi.push_back(lp);
        out.local_lsi.push_back(ll);
        pi_sum += mass(mu, sets[i]) * lp;
        lsi_sum += mass(mu, sets[i]) * ll;
    }
    out.c_pi_family = std::max(1.0, pi_sum);
    out.c_lsi_family = std::max(1.0, lsi_sum);
    const auto k = static_cast<Index>(sets.size());
    out.eta_pairs = Matrix::Zero(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j)
            if (i != j) {
                out.eta_pairs(i, j) =
                    eta_regularity(chain, sets[static_cast<std::size_t>(i)], sets[static_cast<std::size_t>(j)]).eta;
                out.eta = std::max(out.eta, out.eta_pairs(i, j));
            }
    return out;
}

MeanExitReport mean_exit_asymptotics(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                     std::size_t i, std::optional<double> rho) {
    validate_family(chain, sets);
    validate_partition(parts, chain.size());
    if (i >= sets.size()) throw InvalidInput("set index out of range");
    const auto& mu = chain.mu();
    const double mi = mass(mu, sets[i]);
    const double si = mass(mu, parts[i]);
    MeanExitReport out;
    out.index = i;
    StateSet b(chain.size());
    for (std::size_t j = 0; j < sets.size(); ++j) {
        if (j == i) continue;
        const double sj = mass(mu, parts[j]) / si;
        if (mass(mu, sets[j]) >= mi) {
            out.deeper.push_back(j);
            b = b | sets[j];
            out.c_ratio = std::max(out.c_ratio, sj);
        } else {
            out.delta = std::max(out.delta, sj);
        }
    }
    if (out.deeper.empty()) throw DomainError("no metastable set at least as deep as set " + std::to_string(i));
    const auto sol = equilibrium_potential(chain, sets[i], b);
    out.main_term = si / sol.capacity;
    out.exact = mean_hitting_time(chain, sol.last_exit, b);
    out.relative_error = std::abs(out.exact / out.main_term - 1);
    if (rho && *rho > 0) out.error_scale = out.delta + *rho * std::log(out.c_ratio / *rho);
    return out;
}

PiLsiEstimates pi_lsi_estimates(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                const ConstantsReport* constants, std::optional<double> rho) {
    validate_family(chain, sets);
    validate_partition(parts, chain.size());
    const std::size_t k = sets.size();
    if (k < 2) throw DomainError("estimates need at least two metastable sets");
    const auto& mu = chain.mu();
    PiLsiEstimates out;
    out.pair_terms = Matrix::Zero(static_cast<Index>(k), static_cast<Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double a = mass(mu, parts[i]);
            const double b = mass(mu, parts[j]);
            const double t = a * b / capacity(chain, sets[i], sets[j]);
            const double tl = t / log_mean(a, b);
            out.pair_terms(static_cast<Index>(i), static_cast<Index>(j)) = t;
            out.pair_terms(static_cast<Index>(j), static_cast<Index>(i)) = t;
            out.pi_lower = std::max(out.pi_lower, t);
            out.lsi_lower = std::max(out.lsi_lower, tl);
            out.pi_upper += t;
            out.lsi_upper += tl;
        }
    }
    if (k == 2) {
        out.pi_point = out.pi_upper;
        out.lsi_point = out.lsi_upper;
    }
    if (constants && rho) {
        const double slack = *rho + constants->eta;
        out.pi_error_factor = std::sqrt(constants->c_pi_family * slack);
        out.lsi_error_factor = std::sqrt(constants->c_mass * constants->c_lsi_family * slack);
    }
    return out;
}

HarmonicNeighborhood harmonic_neighborhood(const ReversibleChain& chain, const SetFamily& sets, const Partition& parts,
                                           const std::vector<std::size_t>& a_side,
                                           const std::vector<std::size_t>& b_side, double delta,
                                           std::optional<double> rho) {
    validate_family(chain, sets);
    validate_partition(parts, chain.size());
    if (!(delta > 0 && delta < 0.5)) throw DomainError("delta must lie in (0, 1/2)");
    const std::size_t n = chain.size();
    StateSet a(n), b(n), sa(n), sb(n);
    for (auto i : a_side) {
        a = a | sets.at(i);
        sa = sa | parts.at(i);
    }
    for (auto j : b_side) {
        b = b | sets.at(j);
        sb = sb | parts.at(j);
    }
    const auto sol = equilibrium_potential(chain, a, b);
    HarmonicNeighborhood out;
    out.ua = StateSet(n);
    out.ub = StateSet(n);
    for (std::size_t x = 0; x < n; ++x) {
        const double h = sol.potential[static_cast<Index>(x)];
        if (sa.contains(x) && h >= 1 - delta) out.ua.insert(x);
        if (sb.contains(x) && 1 - h >= 1 - delta) out.ub.insert(x);
    }
    out.capacity_ratio = sol.capacity / capacity(chain, out.ua, out.ub);
    out.ratio_certified = out.capacity_ratio >= 1 - 2 * delta - 1e-12 && out.capacity_ratio <= 1 + 1e-9;
    const auto& mu = chain.mu();
    bool ok = true;
    for (auto i : a_side) {
        const double left = mass(mu, parts[i].minus(out.ua)) / mass(mu, sets[i]);
        out.leftover.push_back(left);
        if (rho && left > *rho / delta * (1 + 1e-12)) ok = false;
    }
    if (rho) out.leftover_certified = ok;
    return out;
}

}  // namespace metastab
