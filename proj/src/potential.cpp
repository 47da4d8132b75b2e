#include "metastab/potential.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "metastab/errors.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;

constexpr Index kDirectLimit = 10000;
constexpr double kOvershoot = 1e-9;
constexpr double kResidualTol = 1e-10;

// Energy-form system restricted to the states outside `boundary`.
class InteriorSystem {
public:
    InteriorSystem(const ReversibleChain& chain, const StateSet& boundary) : chain_(chain) {
        const auto n = chain.size();
        local_.assign(n, -1);
        for (std::size_t x = 0; x < n; ++x) {
            if (!boundary.contains(x)) {
                local_[x] = static_cast<Index>(interior_.size());
                interior_.push_back(x);
            }
        }
        const auto m = static_cast<Index>(interior_.size());
        if (m == 0) return;
        const auto& j = chain.jumps();
        const auto& mu = chain.mu();
        std::vector<Eigen::Triplet<double>> trips;
        for (Index k = 0; k < m; ++k) {
            const auto x = static_cast<Index>(interior_[static_cast<std::size_t>(k)]);
            double diag = 0;
            for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) {
                const double w = 0.5 * (mu[x] * it.value() + mu[it.col()] * j.coeff(it.col(), x));
                diag += w;
                const Index ly = local_[static_cast<std::size_t>(it.col())];
                if (ly >= 0) trips.emplace_back(k, ly, -w);
            }
            trips.emplace_back(k, k, diag);
        }
        mat_.resize(m, m);
        mat_.setFromTriplets(trips.begin(), trips.end());
        if (m <= kDirectLimit) {
            direct_.compute(mat_);
            if (direct_.info() != Eigen::Success) throw SolverNotConverged("factorisation of the interior system failed");
        } else {
            iterative_.setTolerance(1e-14);
            iterative_.setMaxIterations(20 * m);
            iterative_.compute(mat_);
        }
    }

    std::size_t interior_size() const { return interior_.size(); }
    const std::vector<std::size_t>& interior() const { return interior_; }

    // Right-hand side: edge weights from each interior state into `source`.
    Vector boundary_flux(const StateSet& source) const {
        const auto& j = chain_.jumps();
        const auto& mu = chain_.mu();
        Vector rhs = Vector::Zero(static_cast<Index>(interior_.size()));
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            const auto x = static_cast<Index>(interior_[k]);
            for (SparseRowMatrix::InnerIterator it(j, x); it; ++it)
                if (source.contains(static_cast<std::size_t>(it.col())))
                    rhs[static_cast<Index>(k)] += 0.5 * (mu[x] * it.value() + mu[it.col()] * j.coeff(it.col(), x));
        }
        return rhs;
    }

    Vector solve(const Vector& rhs) const {
        if (rhs.size() == 0) return rhs;
        if (mat_.rows() <= kDirectLimit) {
            Vector sol = direct_.solve(rhs);
            if (direct_.info() != Eigen::Success) throw SolverNotConverged("interior solve failed");
            return sol;
        }
        Vector sol = iterative_.solve(rhs);
        if (iterative_.info() != Eigen::Success)
            throw SolverNotConverged("conjugate gradient did not converge, residual " +
                                     std::to_string(iterative_.error()));
        return sol;
    }

private:
    const ReversibleChain& chain_;
    std::vector<Index> local_;
    std::vector<std::size_t> interior_;
    SparseMatrix mat_;
    Eigen::SimplicialLDLT<SparseMatrix> direct_;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> iterative_;
};

void check_disjoint_nonempty(const ReversibleChain& chain, const StateSet& a, const StateSet& b) {
    if (a.universe() != chain.size() || b.universe() != chain.size())
        throw InvalidInput("set universe does not match chain size");
    if (a.empty() || b.empty()) throw EmptySet("capacity needs nonempty A and B");
    if (a.intersects(b)) throw OverlappingSets("A and B must be disjoint");
}

Vector clamp_probability(Vector v) {
    for (Index i = 0; i < v.size(); ++i) {
        if (v[i] < -kOvershoot || v[i] > 1 + kOvershoot)
            throw SolverNotConverged("harmonic function left [0,1] by " +
                                     std::to_string(v[i] < 0 ? -v[i] : v[i] - 1));
        v[i] = std::clamp(v[i], 0.0, 1.0);
    }
    return v;
}

}  // namespace

EquilibriumSolution equilibrium_potential(const ReversibleChain& chain, const StateSet& a, const StateSet& b) {
    check_disjoint_nonempty(chain, a, b);
    const auto n = static_cast<Index>(chain.size());
    InteriorSystem sys(chain, a | b);

    // Solving for h and for 1 - h separately keeps both small tails accurate.
    Vector h = Vector::Zero(n);
    Vector g = Vector::Zero(n);
    for (auto x : a.indices()) h[static_cast<Index>(x)] = 1;
    for (auto x : b.indices()) g[static_cast<Index>(x)] = 1;
    if (sys.interior_size() > 0) {
        const Vector hi = sys.solve(sys.boundary_flux(a));
        const Vector gi = sys.solve(sys.boundary_flux(b));
        for (std::size_t k = 0; k < sys.interior_size(); ++k) {
            h[static_cast<Index>(sys.interior()[k])] = hi[static_cast<Index>(k)];
            g[static_cast<Index>(sys.interior()[k])] = gi[static_cast<Index>(k)];
        }
    }
    h = clamp_probability(h);
    g = clamp_probability(g);

    EquilibriumSolution out;
    out.potential = h;
    for (Index x = 0; x < n; ++x)
        if (h[x] > 0.5) out.potential[x] = 1.0 - g[x];

    const auto& j = chain.jumps();
    const auto& mu = chain.mu();
    out.escape = Vector::Zero(n);
    out.escape_reverse = Vector::Zero(n);
    double cap = 0;
    double cap_rev = 0;
    for (Index x = 0; x < n; ++x) {
        const auto sx = static_cast<std::size_t>(x);
        if (a.contains(sx)) {
            double e = 0;
            for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) e += it.value() * g[it.col()];
            out.escape[x] = e;
            cap += mu[x] * e;
        } else if (b.contains(sx)) {
            double e = 0;
            for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) e += it.value() * h[it.col()];
            out.escape_reverse[x] = e;
            cap_rev += mu[x] * e;
        }
    }
    if (!(cap > 0)) throw SolverNotConverged("capacity evaluated to zero");
    out.capacity = cap;
    out.last_exit = Vector::Zero(n);
    for (auto x : a.indices())
        out.last_exit[static_cast<Index>(x)] = mu[static_cast<Index>(x)] * out.escape[static_cast<Index>(x)] / cap;

    // Energy of h; differences are taken on whichever of h, 1-h is small.
    double energy = 0;
    for (Index x = 0; x < n; ++x) {
        for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) {
            const Index y = it.col();
            double d;
            if (h[x] <= 0.5 && h[y] <= 0.5)
                d = h[x] - h[y];
            else if (g[x] <= 0.5 && g[y] <= 0.5)
                d = g[y] - g[x];
            else
                d = h[x] - h[y];
            energy += mu[x] * it.value() * d * d;
        }
    }
    out.capacity_energy = 0.5 * energy;

    double res = 0;
    for (auto x : sys.interior()) {
        const auto ix = static_cast<Index>(x);
        double lh = 0;
        for (SparseRowMatrix::InnerIterator it(j, ix); it; ++it) {
            const Index y = it.col();
            lh += it.value() * (h[x] <= 0.5 ? h[y] - h[ix] : g[ix] - g[y]);
        }
        res = std::max(res, std::abs(lh) / chain.exit_rate(x));
    }
    out.max_residual = res;
    if (res > kResidualTol) throw SolverNotConverged("harmonic residual " + std::to_string(res));
    (void)cap_rev;
    return out;
}

double capacity(const ReversibleChain& chain, const StateSet& a, const StateSet& b) {
    return equilibrium_potential(chain, a, b).capacity;
}

double escape_probability(const ReversibleChain& chain, const StateSet& a, const StateSet& b) {
    return capacity(chain, a, b) / mass(chain.mu(), a);
}

Vector hitting_times(const ReversibleChain& chain, const StateSet& target) {
    if (target.universe() != chain.size()) throw InvalidInput("set universe does not match chain size");
    if (target.empty()) throw EmptySet("hitting target is empty");
    if (target.count() == chain.size()) throw InvalidInput("hitting target is the whole space");
    const auto n = static_cast<Index>(chain.size());
    InteriorSystem sys(chain, target);
    Vector rhs(static_cast<Index>(sys.interior_size()));
    for (std::size_t k = 0; k < sys.interior_size(); ++k)
        rhs[static_cast<Index>(k)] = chain.mu()[static_cast<Index>(sys.interior()[k])];
    const Vector wi = sys.solve(rhs);
    Vector w = Vector::Zero(n);
    for (std::size_t k = 0; k < sys.interior_size(); ++k) w[static_cast<Index>(sys.interior()[k])] = wi[static_cast<Index>(k)];
    return w;
}

double mean_hitting_time(const ReversibleChain& chain, const Vector& start, const StateSet& target) {
    if (start.size() != static_cast<Index>(chain.size())) throw InvalidInput("start measure has wrong length");
    if ((start.array() < 0).any() || !(start.sum() > 0)) throw InvalidInput("start must be a nonnegative nonzero measure");
    for (auto x : target.indices())
        if (start[static_cast<Index>(x)] > 0) throw InvalidInput("start measure charges the target set");
    const Vector w = hitting_times(chain, target);
    return start.dot(w) / start.sum();
}

double path_capacity_1d(std::span<const double> weights) {
    if (weights.empty()) throw EmptySet("path needs at least one edge");
    double r = 0;
    for (double w : weights) {
        if (!(w > 0)) throw DomainError("path weights must be positive");
        r += 1.0 / w;
    }
    return 1.0 / r;
}

Vector path_potential_1d(std::span<const double> weights) {
    const double cap = path_capacity_1d(weights);
    Vector h(static_cast<Index>(weights.size()) + 1);
    double r = 0;
    h[0] = 0;
    for (std::size_t z = 0; z < weights.size(); ++z) {
        r += 1.0 / weights[z];
        h[static_cast<Index>(z) + 1] = r * cap;
    }
    h[h.size() - 1] = 1;
    return h;
}

}  // namespace metastab
