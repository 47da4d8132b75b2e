#include "metastab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "metastab/errors.hpp"
#include "metastab/potential.hpp"
#include "metastab/rng.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;
constexpr std::size_t kDenseLimit = 16384;

struct SymmetricGenerator {
    Vector gamma;  // ascending
    Matrix u;      // orthonormal eigenvectors in the sqrt(mu)-weighted frame
    Vector sqrt_mu;
};

SymmetricGenerator decompose(const ReversibleChain& chain) {
    const auto n = static_cast<Index>(chain.size());
    if (n < 2) throw DomainError("spectral quantities need at least two states");
    if (chain.size() > kDenseLimit) throw TooLarge("dense eigendecomposition limited to 16384 states");
    SymmetricGenerator s;
    s.sqrt_mu = chain.mu().cwiseSqrt();
    Matrix g = Matrix(chain.energy_matrix());
    for (Index x = 0; x < n; ++x)
        for (Index y = 0; y < n; ++y) g(x, y) /= s.sqrt_mu[x] * s.sqrt_mu[y];
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    if (es.info() != Eigen::Success) throw SolverNotConverged("eigendecomposition failed");
    s.gamma = es.eigenvalues();
    s.u = es.eigenvectors();
    return s;
}

double gaussian(CounterRng& rng) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
}

}  // namespace

SpectralReport exact_cpi(const ReversibleChain& chain) {
    const auto s = decompose(chain);
    SpectralReport r;
    r.generator_spectrum = s.gamma;
    r.gap = s.gamma[1];
    if (!(r.gap > 0)) throw SolverNotConverged("spectral gap not resolved");
    r.eigenfunction = s.u.col(1).cwiseQuotient(s.sqrt_mu);
    r.c_pi_eigen = 1.0 / r.gap;
    // Constants mixed into the eigenvector by round-off cancel in this ratio.
    r.c_pi = variance(chain.mu(), r.eigenfunction) / dirichlet_form(chain, r.eigenfunction);
    return r;
}

double local_cpi(const ReversibleChain& chain, const StateSet& m) {
    if (m.universe() != chain.size() || m.empty()) throw EmptySet("local constant needs a nonempty set");
    if (m.count() == 1) return 0;
    const auto s = decompose(chain);
    const auto n = static_cast<Index>(chain.size());
    const Vector w = restrict_normalized(chain.mu(), m);
    Matrix v = Matrix::Zero(n, n);
    for (Index x = 0; x < n; ++x) {
        if (w[x] == 0) continue;
        for (Index y = 0; y < n; ++y) {
            if (w[y] == 0) continue;
            v(x, y) = ((x == y ? w[x] : 0.0) - w[x] * w[y]) / (s.sqrt_mu[x] * s.sqrt_mu[y]);
        }
    }
    Matrix c = s.u.rightCols(n - 1);
    for (Index k = 0; k < n - 1; ++k) c.col(k) /= std::sqrt(s.gamma[k + 1]);
    const Matrix t = c.transpose() * v * c;
    Eigen::SelfAdjointEigenSolver<Matrix> es(t, Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
}

LsiEstimate estimate_clsi(const ReversibleChain& chain, std::size_t multistarts, std::uint64_t seed,
                          std::optional<Vector> nu_opt) {
    const auto n = static_cast<Index>(chain.size());
    Vector nu = nu_opt ? *nu_opt : chain.mu();
    if (nu.size() != n || (nu.array() < 0).any() || !(nu.sum() > 0)) throw InvalidInput("invalid reference measure");
    nu /= nu.sum();
    const auto s = decompose(chain);

    // f = c + C b has energy |b|^2.
    Matrix cmat = s.u.rightCols(n - 1);
    for (Index k = 0; k < n - 1; ++k) cmat.col(k) *= 1.0 / std::sqrt(s.gamma[k + 1]);
    for (Index x = 0; x < n; ++x) cmat.row(x) /= s.sqrt_mu[x];

    auto ent = [&](const Vector& g, double c) {
        return entropy(nu, (g.array() + c).square().matrix());
    };
    auto best_shift = [&](const Vector& g, std::optional<double> around) {
        const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-300);
        auto shift_at = [&](double th) { return scale * std::tan(th); };
        const double edge = 0.5 * std::numbers::pi * (1 - 1e-9);
        double lo_t, hi_t;
        if (!around) {
            constexpr int grid = 801;
            int best = 0;
            double bestv = -1;
            for (int i = 0; i < grid; ++i) {
                const double th = -edge + 2 * edge * i / (grid - 1);
                const double v = ent(g, shift_at(th));
                if (v > bestv) {
                    bestv = v;
                    best = i;
                }
            }
            lo_t = -edge + 2 * edge * std::max(0, best - 1) / (grid - 1);
            hi_t = -edge + 2 * edge * std::min(grid - 1, best + 1) / (grid - 1);
        } else {
            const double th = std::atan(*around / scale);
            lo_t = std::max(-edge, th - 1e-2);
            hi_t = std::min(edge, th + 1e-2);
        }
        const double phi = (std::sqrt(5.0) - 1) / 2;
        double a = lo_t, b = hi_t;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = ent(g, shift_at(x1)), f2 = ent(g, shift_at(x2));
        for (int it = 0; it < 90 && b - a > 1e-15; ++it) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = ent(g, shift_at(x2));
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = ent(g, shift_at(x1));
            }
        }
        const double cand = shift_at(f1 > f2 ? x1 : x2);
        if (around && ent(g, *around) >= ent(g, cand)) return *around;
        return cand;
    };

    std::vector<Vector> seeds;
    seeds.push_back(s.u.col(1).cwiseQuotient(s.sqrt_mu));
    CounterRng rng(seed, 0, 0, Stream::optimizer);
    while (seeds.size() < std::max<std::size_t>(multistarts, 1)) {
        const std::size_t kind = seeds.size() % 3;
        if (kind == 1 && n >= 2) {
            const auto x = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
            auto y = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - 1)));
            if (y >= x) ++y;
            seeds.push_back(equilibrium_potential(chain, StateSet(chain.size(), {x}), StateSet(chain.size(), {y})).potential);
        } else if (kind == 2) {
            const Vector& base = seeds.front();
            Vector f(n);
            for (Index i = 0; i < n; ++i) f[i] = base[i] + 0.3 * gaussian(rng) * base.cwiseAbs().maxCoeff();
            seeds.push_back(f);
        } else {
            Vector f(n);
            for (Index i = 0; i < n; ++i) f[i] = gaussian(rng);
            seeds.push_back(f);
        }
    }

    LsiEstimate out;
    out.starts = seeds.size();
    double best_ratio = -1;
    for (const auto& f0 : seeds) {
        Vector b = (s.u.rightCols(n - 1).transpose() * f0.cwiseProduct(s.sqrt_mu));
        for (Index k = 0; k < n - 1; ++k) b[k] *= std::sqrt(s.gamma[k + 1]);
        const double nb = b.norm();
        if (!(nb > 0)) continue;
        b /= nb;
        Vector g = cmat * b;
        double c = best_shift(g, std::nullopt);
        double val = ent(g, c);
        double angle = 0.5;
        int stall = 0;
        for (int it = 0; it < 600; ++it) {
            ++out.iterations;
            const double start = val;
            const Vector f = g.array() + c;
            const double m = nu.dot(f.cwiseProduct(f));
            Vector gf(n);
            for (Index x = 0; x < n; ++x)
                gf[x] = f[x] == 0 ? 0.0 : 2 * nu[x] * f[x] * (std::log(f[x] * f[x]) - std::log(m));
            Vector gb = cmat.transpose() * gf;
            gb -= b.dot(gb) * b;
            const double gn = gb.norm();
            if (!(gn > 1e-14 * std::max(val, 1e-300))) break;
            const Vector d = gb / gn;
            for (int tries = 0; tries < 50; ++tries) {
                Vector cand = std::cos(angle) * b + std::sin(angle) * d;
                cand.normalize();
                const Vector gc = cmat * cand;
                const double v = ent(gc, c);
                if (v > val) {
                    b = cand;
                    g = gc;
                    val = v;
                    angle = std::min(1.0, angle * 2);
                    break;
                }
                angle *= 0.5;
            }
            c = (it % 25 == 24) ? best_shift(g, std::nullopt) : best_shift(g, c);
            val = std::max(val, ent(g, c));
            stall = val - start <= 1e-14 * val ? stall + 1 : 0;
            if (angle < 1e-12 || stall > 8) break;
        }
        const double energy = dirichlet_form(chain, g);
        const double ratio = ent(g, c) / energy;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            out.maximiser = g.array() + c;
        }
    }
    out.lower_bound = std::max(0.0, best_ratio);
    return out;
}

CheegerReport cheeger_constant(const ReversibleChain& chain) {
    const std::size_t n = chain.size();
    if (n < 2) throw DomainError("Cheeger constant needs at least two states");
    if (n > kExactSubsetLimit) throw TooLarge("Cheeger enumeration limited to 20 states");
    const auto& j = chain.jumps();
    const auto& mu = chain.mu();
    const std::uint64_t full = (std::uint64_t{1} << n) - 1;
    CheegerReport out;
    std::uint64_t best = 0;
    // Sets containing state 0 cover every split once.
    for (std::uint64_t a = 1; a < full; a += 2) {
        double ma = 0, flow = 0;
        for (std::size_t x = 0; x < n; ++x) {
            if (!((a >> x) & 1u)) continue;
            ma += mu[static_cast<Index>(x)];
            for (SparseRowMatrix::InnerIterator it(j, static_cast<Index>(x)); it; ++it)
                if (!((a >> it.col()) & 1u)) flow += mu[static_cast<Index>(x)] * it.value();
        }
        const double v = ma * (1 - ma) / flow;
        if (v > out.value) {
            out.value = v;
            best = a;
        }
    }
    out.argmax = StateSet::from_bits(n, best);
    return out;
}

double hardy_constant(std::span<const double> mu, std::span<const double> nu) {
    if (mu.size() != nu.size() || mu.size() < 2) throw InvalidInput("mu and nu need equal length of at least 2");
    const auto n = static_cast<Index>(mu.size()) - 1;
    Matrix a = Matrix::Zero(n, n);
    Matrix b = Matrix::Zero(n, n);
    // unknowns f(1..n); edge z -- z+1 carries weight mu(z)
    for (Index z = 0; z < n; ++z) {
        const double w = mu[static_cast<std::size_t>(z)];
        if (!(w > 0)) throw DomainError("mu must be positive");
        const Index hi = z;      // local index of z+1
        const Index lo = z - 1;  // local index of z, -1 for the pinned state
        a(hi, hi) += w;
        if (lo >= 0) {
            a(lo, lo) += w;
            a(lo, hi) -= w;
            a(hi, lo) -= w;
        }
    }
    for (Index x = 0; x < n; ++x) b(x, x) = nu[static_cast<std::size_t>(x) + 1];
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(b, a, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw SolverNotConverged("generalised eigenproblem failed");
    return es.eigenvalues().maxCoeff();
}

ReversibleChain weighted_path_chain(std::span<const double> weights) {
    const auto n = static_cast<Index>(weights.size());
    if (n < 2) throw InvalidInput("path needs at least two states");
    std::vector<Eigen::Triplet<double>> trips;
    double total = 0;
    for (Index y = 0; y < n; ++y) {
        const double w = weights[static_cast<std::size_t>(y)];
        if (!(w > 0)) throw DomainError("weights must be positive");
        total += w;
        if (y + 1 < n) trips.emplace_back(y, y + 1, 1.0);
        if (y > 0) trips.emplace_back(y, y - 1, weights[static_cast<std::size_t>(y) - 1] / w);
    }
    SparseRowMatrix jumps(n, n);
    jumps.setFromTriplets(trips.begin(), trips.end());
    Vector mu(n);
    for (Index y = 0; y < n; ++y) mu[y] = weights[static_cast<std::size_t>(y)] / total;
    return ReversibleChain::from_jumps(jumps, mu, TimeKind::continuous);
}

double brute_force_orlicz(const Vector& nu, const Vector& f, const YoungPair& pair, double k, int grid) {
    std::vector<Index> active;
    for (Index x = 0; x < f.size(); ++x)
        if (nu[x] > 0 && f[x] != 0) active.push_back(x);
    if (active.empty()) return 0;
    if (f.size() > 6) throw TooLarge("brute-force Orlicz norm limited to 6 states");
    const std::size_t m = active.size();

    // share[i]: fraction of the budget K spent on active[i]
    auto value = [&](const std::vector<double>& share) {
        double s = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const Index x = active[i];
            s += nu[x] * std::abs(f[x]) * pair.psi_inverse(k * share[i] / nu[x]);
        }
        return s;
    };

    std::vector<double> best(m, 1.0 / static_cast<double>(m));
    double bestv = value(best);
    std::vector<int> u(m, 0);
    auto visit = [&](auto&& self, std::size_t pos, int left) -> void {
        if (pos + 1 == m) {
            u[pos] = left;
            std::vector<double> share(m);
            for (std::size_t i = 0; i < m; ++i) share[i] = static_cast<double>(u[i]) / grid;
            const double v = value(share);
            if (v > bestv) {
                bestv = v;
                best = share;
            }
            return;
        }
        for (int t = 0; t <= left; ++t) {
            u[pos] = t;
            self(self, pos + 1, left - t);
        }
    };
    visit(visit, 0, grid);

    double step = 1.0 / grid;
    while (step > 1e-13) {
        bool improved = false;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j || best[j] < step) continue;
                auto cand = best;
                cand[i] += step;
                cand[j] -= step;
                const double v = value(cand);
                if (v > bestv) {
                    bestv = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return bestv;
}

double gradient_check(const ReversibleChain& chain, Functional which, const Vector& f, double h) {
    const auto n = static_cast<Index>(chain.size());
    if (f.size() != n) throw InvalidInput("function length does not match chain");
    const Vector& mu = chain.mu();
    auto value = [&](const Vector& g) {
        switch (which) {
            case Functional::dirichlet: return dirichlet_form(chain, g);
            case Functional::variance: return variance(mu, g);
            case Functional::entropy: return entropy(mu, g.cwiseProduct(g));
        }
        return 0.0;
    };
    Vector grad(n);
    switch (which) {
        case Functional::dirichlet: grad = 2.0 * (chain.energy_matrix() * f); break;
        case Functional::variance: grad = 2.0 * mu.cwiseProduct((f.array() - mean(mu, f)).matrix()); break;
        case Functional::entropy: {
            const double m = mu.dot(f.cwiseProduct(f));
            for (Index x = 0; x < n; ++x)
                grad[x] = f[x] == 0 ? 0.0 : 2 * mu[x] * f[x] * (std::log(f[x] * f[x]) - std::log(m));
            break;
        }
    }
    double worst = 0;
    for (Index x = 0; x < n; ++x) {
        const double step = h * std::max(1.0, std::abs(f[x]));
        Vector up = f, dn = f;
        up[x] += step;
        dn[x] -= step;
        const double num = (value(up) - value(dn)) / (2 * step);
        const double denom = std::max({std::abs(num), std::abs(grad[x]), 1e-10});
        worst = std::max(worst, std::abs(num - grad[x]) / denom);
    }
    return worst;
}

Matrix absorption_by_squaring(const ReversibleChain& chain, const std::vector<StateSet>& sets) {
    const auto n = static_cast<Index>(chain.size());
    if (chain.size() > 400) throw TooLarge("absorption by squaring limited to 400 states");
    StateSet all(chain.size());
    for (const auto& s : sets) all = all | s;
    Matrix p = Matrix::Zero(n, n);
    const auto& j = chain.jumps();
    for (Index x = 0; x < n; ++x) {
        if (all.contains(static_cast<std::size_t>(x))) {
            p(x, x) = 1;
            continue;
        }
        const double scale = chain.time() == TimeKind::discrete ? 1.0 : 1.0 / chain.exit_rate(static_cast<std::size_t>(x));
        for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) p(x, it.col()) = it.value() * scale;
        if (chain.time() == TimeKind::discrete) p(x, x) = 1 - chain.exit_rate(static_cast<std::size_t>(x));
    }
    for (int i = 0; i < 80; ++i) p = p * p;
    Matrix out = Matrix::Zero(n, static_cast<Index>(sets.size()));
    for (std::size_t k = 0; k < sets.size(); ++k)
        for (auto y : sets[k].indices()) out.col(static_cast<Index>(k)) += p.col(static_cast<Index>(y));
    return out;
}

}  // namespace metastab
