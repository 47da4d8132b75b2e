#include "metastab/orlicz.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "metastab/errors.hpp"
#include "metastab/parallel.hpp"
#include "metastab/potential.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfTol = 1e-12;

}  // namespace

YoungPair power_pair(double p) {
    if (!(p > 1)) throw DomainError("power pair needs p > 1");
    const double q = p / (p - 1);
    YoungPair y;
    y.name = "power:" + std::to_string(p);
    y.phi = [p](double r) { return std::pow(r, p) / p; };
    y.psi = [q](double r) { return std::pow(r, q) / q; };
    y.psi_inverse = [q](double t) { return std::pow(q * std::max(t, 0.0), 1.0 / q); };
    y.phi_slope = [p](double r) { return std::pow(r, p - 1); };
    return y;
}

YoungPair linear_pair() {
    YoungPair y;
    y.name = "linear";
    y.phi = [](double r) { return r; };
    y.psi = [](double r) { return r <= 1 ? 0.0 : kInf; };
    // Value 0 at t = 0 follows the explicit formula for this pair rather than
    // the generic infimum, which would give 1.
    y.psi_inverse = [](double t) { return t > 0 ? 1.0 : 0.0; };
    y.phi_slope = [](double) { return 1.0; };
    y.slope_cap = 1;
    return y;
}

YoungPair entropy_pair() {
    YoungPair y;
    y.name = "entropy";
    y.phi = [](double r) { return r >= 1 ? r * std::log(r) - r + 1 : 0.0; };
    y.psi = [](double r) { return std::expm1(r); };
    y.psi_inverse = [](double t) { return std::log1p(std::max(t, 0.0)); };
    y.phi_slope = [](double r) { return r >= 1 ? std::log(r) : 0.0; };
    return y;
}

YoungPair piecewise_linear_pair(std::vector<double> breaks, std::vector<double> slopes) {
    if (breaks.empty() || breaks.size() != slopes.size() || breaks[0] != 0)
        throw InvalidInput("piecewise-linear pair needs matching breaks starting at 0");
    for (std::size_t k = 1; k < breaks.size(); ++k) {
        if (!(breaks[k] > breaks[k - 1]) || !(slopes[k] >= slopes[k - 1]))
            throw InvalidInput("breaks must increase and slopes must not decrease");
    }
    if (!(slopes[0] >= 0)) throw InvalidInput("slopes must be nonnegative");
    std::vector<double> values(breaks.size(), 0.0);
    for (std::size_t k = 1; k < breaks.size(); ++k)
        values[k] = values[k - 1] + slopes[k - 1] * (breaks[k] - breaks[k - 1]);

    YoungPair y;
    y.name = "piecewise-linear";
    y.slope_cap = slopes.back();
    y.phi = [=](double r) {
        const auto k = static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), r) - breaks.begin()) - 1;
        return values[k] + slopes[k] * (r - breaks[k]);
    };
    y.phi_slope = [=](double r) {
        const auto k = static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), r) - breaks.begin()) - 1;
        return slopes[k];
    };
    // The conjugate is piecewise linear in g with slope breaks[k] between
    // consecutive slopes of phi.
    auto psi = [=](double g) {
        if (g > slopes.back()) return kInf;
        const auto k = static_cast<std::size_t>(std::lower_bound(slopes.begin(), slopes.end(), g) - slopes.begin());
        return g * breaks[k] - values[k];
    };
    y.psi = psi;
    y.psi_inverse = [=](double t) {
        double prev = slopes[0];
        for (std::size_t k = 1; k < slopes.size(); ++k) {
            if (slopes[k] == prev) continue;
            const double top = psi(slopes[k]);
            if (top > t) return prev + (t - psi(prev)) / breaks[k];
            prev = slopes[k];
        }
        return slopes.back();
    };
    return y;
}

YoungPair young_pair_by_name(const std::string& name) {
    if (name == "linear" || name == "phi1") return linear_pair();
    if (name == "entropy" || name == "ent") return entropy_pair();
    if (name.rfind("power:", 0) == 0) return power_pair(std::stod(name.substr(6)));
    throw InvalidInput("unknown Young pair \"" + name + "\"");
}

std::vector<YoungPair> builtin_pairs() { return {linear_pair(), entropy_pair(), power_pair(2.0)}; }

double indicator_norm(double set_mass, const YoungPair& pair, double k) {
    if (!(k > 0)) throw DomainError("budget K must be positive");
    if (set_mass < 0) throw DomainError("negative set mass");
    if (set_mass == 0) return 0;
    return set_mass * pair.psi_inverse(k / set_mass);
}

OrliczNorm orlicz_norm(const Vector& nu, const Vector& f, const YoungPair& pair, double k) {
    if (!(k > 0)) throw DomainError("budget K must be positive");
    if (nu.size() != f.size()) throw InvalidInput("measure and function lengths differ");
    if ((nu.array() < 0).any()) throw DomainError("measure must be nonnegative");
    const Vector a = f.cwiseAbs();
    const double l1 = nu.dot(a);
    OrliczNorm out;
    if (l1 == 0) return out;

    auto budget = [&](double lambda) {
        double s = 0;
        for (Index x = 0; x < a.size(); ++x)
            if (nu[x] > 0) s += nu[x] * pair.psi(pair.phi_slope(a[x] / lambda));
        return s;
    };
    auto dual = [&](double lambda) {
        double s = 0;
        for (Index x = 0; x < a.size(); ++x)
            if (nu[x] > 0) s += nu[x] * pair.phi(a[x] / lambda);
        return lambda * (k + s);
    };
    // For a linear-growth phi the dual decreases to slope_cap * E|f| as lambda -> 0.
    const double limit = std::isfinite(pair.slope_cap) ? pair.slope_cap * l1 : kInf;

    double hi = a.maxCoeff();
    for (int i = 0; budget(hi) > k; ++i) {
        hi *= 2;
        if (i > 2000) throw SolverNotConverged("could not bracket the Orlicz multiplier");
    }
    double lo = hi;
    bool infeasible_found = false;
    for (int i = 0; i < 2200; ++i) {
        lo /= 2;
        if (lo < 1e-300) break;
        if (budget(lo) > k) {
            infeasible_found = true;
            break;
        }
        hi = lo;
    }
    if (!infeasible_found) {
        if (!std::isfinite(limit)) throw Unbounded("Young function psi stays below the budget; the norm is infinite");
        out.value = std::min(limit, dual(hi));
        out.lambda = 0;
        double primal = 0;
        for (Index x = 0; x < a.size(); ++x) primal += nu[x] * a[x] * pair.slope_cap;
        out.primal_value = primal;
        return out;
    }
    for (int i = 0; i < 400 && hi / lo > 1 + 1e-15; ++i) {
        const double mid = std::sqrt(lo * hi);
        if (budget(mid) > k)
            lo = mid;
        else
            hi = mid;
    }
    out.lambda = hi;
    out.value = std::min({dual(hi), dual(lo), limit});
    double primal = 0;
    for (Index x = 0; x < a.size(); ++x) primal += nu[x] * a[x] * pair.phi_slope(a[x] / hi);
    out.primal_value = primal;
    return out;
}

CapacitaryIntegral capacitary_integral(const ReversibleChain& chain, const Vector& f, const StateSet& b) {
    if (f.size() != static_cast<Index>(chain.size())) throw InvalidInput("function length does not match chain");
    if (b.empty()) throw EmptySet("B must be nonempty");
    for (auto x : b.indices())
        if (std::abs(f[static_cast<Index>(x)]) > 1e-14) throw InvalidInput("f must vanish on B");
    std::vector<double> levels;
    for (Index x = 0; x < f.size(); ++x)
        if (!b.contains(static_cast<std::size_t>(x)) && f[x] != 0) levels.push_back(std::abs(f[x]));
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    CapacitaryIntegral out;
    double prev = 0;
    for (double v : levels) {
        StateSet a(chain.size());
        for (Index x = 0; x < f.size(); ++x)
            if (!b.contains(static_cast<std::size_t>(x)) && std::abs(f[x]) >= v) a.insert(static_cast<std::size_t>(x));
        out.lhs += capacity(chain, a, b) * (v * v - prev * prev);
        prev = v;
    }
    out.rhs = 4 * dirichlet_form(chain, f);
    out.holds = out.lhs <= out.rhs * (1 + 1e-10);
    return out;
}

CapacityConstant measure_capacity_constant(const ReversibleChain& chain, const Vector& nu, const StateSet& b,
                                           const YoungPair& pair, double k) {
    if (nu.size() != static_cast<Index>(chain.size())) throw InvalidInput("measure length does not match chain");
    if (b.empty()) throw EmptySet("B must be nonempty");
    const auto free = b.complement().indices();
    if (free.empty()) throw EmptySet("no states outside B");
    const std::size_t n = chain.size();

    auto score = [&](const StateSet& a) {
        const double m = mass(nu, a);
        if (!(m > 0)) return -1.0;
        return indicator_norm(m, pair, k) / capacity(chain, a, b);
    };

    CapacityConstant out;
    if (free.size() <= kExactSubsetLimit) {
        const std::size_t total = (std::size_t{1} << free.size()) - 1;
        std::vector<double> vals(total);
        parallel_for(total, [&](std::size_t i) {
            StateSet a(n);
            const std::size_t bits = i + 1;
            for (std::size_t t = 0; t < free.size(); ++t)
                if ((bits >> t) & 1u) a.insert(free[t]);
            vals[i] = score(a);
        });
        std::size_t best = 0;
        for (std::size_t i = 1; i < total; ++i)
            if (vals[i] > vals[best]) best = i;
        out.value = std::max(0.0, vals[best]);
        out.argmax = StateSet(n);
        for (std::size_t t = 0; t < free.size(); ++t)
            if (((best + 1) >> t) & 1u) out.argmax.insert(free[t]);
        out.exact = true;
        out.sets_evaluated = total;
        return out;
    }

    // Restricted scan: singletons and super-level sets of each h_{x,B}.
    std::vector<StateSet> candidates;
    std::map<std::vector<std::size_t>, bool> seen;
    auto add = [&](StateSet s) {
        if (seen.emplace(s.indices(), true).second) candidates.push_back(std::move(s));
    };
    for (auto x : free) {
        StateSet single(n, {x});
        const auto sol = equilibrium_potential(chain, single, b);
        std::vector<std::size_t> order(free);
        std::sort(order.begin(), order.end(), [&](std::size_t u, std::size_t v) {
            return sol.potential[static_cast<Index>(u)] > sol.potential[static_cast<Index>(v)];
        });
        StateSet level(n);
        for (auto y : order) {
            level.insert(y);
            add(level);
        }
        add(single);
    }
    std::vector<double> vals(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) { vals[i] = score(candidates[i]); });
    std::size_t best = 0;
    for (std::size_t i = 1; i < vals.size(); ++i)
        if (vals[i] > vals[best]) best = i;
    out.value = std::max(0.0, vals[best]);
    out.argmax = candidates[best];
    out.exact = false;
    out.sets_evaluated = candidates.size();
    return out;
}

MuckenhouptConstant muckenhoupt_constant(std::span<const double> mu, std::span<const double> nu) {
    if (mu.size() != nu.size() || mu.size() < 2) throw InvalidInput("mu and nu need equal length of at least 2");
    for (double m : mu)
        if (!(m > 0)) throw DomainError("mu must be positive");
    std::vector<double> tail(nu.size() + 1, 0.0);
    for (std::size_t y = nu.size(); y-- > 0;) tail[y] = tail[y + 1] + nu[y];
    MuckenhouptConstant out;
    double resist = 0;
    for (std::size_t x = 1; x < mu.size(); ++x) {
        resist += 1.0 / mu[x - 1];
        const double v = resist * tail[x];
        if (v > out.value) {
            out.value = v;
            out.argmax = x;
        }
    }
    return out;
}

UniversalConstants universal_mixed_constants(const ReversibleChain& chain, const Vector& nu) {
    const std::size_t n = chain.size();
    if (n > 14) throw TooLarge("universal constants enumerate set pairs; at most 14 states");
    if (nu.size() != static_cast<Index>(n)) throw InvalidInput("measure length does not match chain");
    const std::uint64_t full = (std::uint64_t{1} << n) - 1;
    std::vector<double> bitmass(std::size_t{1} << n, 0.0);
    for (std::uint64_t m = 1; m <= full; ++m) {
        const int low = __builtin_ctzll(m);
        bitmass[m] = bitmass[m & (m - 1)] + nu[low];
    }
    const double total = nu.sum();
    const double half = 0.5 * total;
    const double e2 = std::exp(2.0);

    struct Best {
        double var = -1, ent = -1;
        std::uint64_t va = 0, vb = 0, ea = 0, eb = 0;
    };
    std::vector<Best> per_a(static_cast<std::size_t>(full) + 1);
    parallel_for(static_cast<std::size_t>(full), [&](std::size_t idx) {
        const std::uint64_t a = idx + 1;
        const double ma = bitmass[a];
        if (!(ma > 0) || ma > half + kHalfTol * total) return;
        const std::uint64_t comp = full & ~a;
        Best best;
        for (std::uint64_t b = comp; b; b = (b - 1) & comp) {
            if (bitmass[b] < half - kHalfTol * total) continue;
            bool minimal = true;
            for (std::uint64_t r = b; r; r &= r - 1) {
                if (bitmass[b & ~(r & -r)] >= half - kHalfTol * total) {
                    minimal = false;
                    break;
                }
            }
            if (!minimal) continue;
            const double cap = capacity(chain, StateSet::from_bits(n, a), StateSet::from_bits(n, b));
            const double pa = ma / total;
            const double v = ma / cap;
            const double e = ma * std::log1p(e2 / pa) / cap;
            if (v > best.var) {
                best.var = v;
                best.va = a;
                best.vb = b;
            }
            if (e > best.ent) {
                best.ent = e;
                best.ea = a;
                best.eb = b;
            }
        }
        per_a[idx] = best;
    });
    UniversalConstants out;
    Best top;
    for (const auto& b : per_a) {
        if (b.var > top.var) {
            top.var = b.var;
            top.va = b.va;
            top.vb = b.vb;
        }
        if (b.ent > top.ent) {
            top.ent = b.ent;
            top.ea = b.ea;
            top.eb = b.eb;
        }
    }
    if (top.var < 0) throw EmptySet("no admissible pair (A, B)");
    out.c_var = top.var;
    out.c_ent = top.ent;
    out.var_a = StateSet::from_bits(n, top.va);
    out.var_b = StateSet::from_bits(n, top.vb);
    out.ent_a = StateSet::from_bits(n, top.ea);
    out.ent_b = StateSet::from_bits(n, top.eb);
    return out;
}

}  // namespace metastab
