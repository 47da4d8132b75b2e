#include "metastab/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "metastab/errors.hpp"

namespace metastab {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kBalanceTol = 1e-10;
constexpr double kMassTol = 1e-12;

using Index = Eigen::Index;

std::string describe(std::size_t x, const std::vector<std::string>& names) {
    return x < names.size() ? names[x] : std::to_string(x);
}

}  // namespace

std::string to_string(TimeKind t) { return t == TimeKind::discrete ? "discrete" : "continuous"; }

TimeKind time_kind_from_string(std::string_view s) {
    if (s == "discrete") return TimeKind::discrete;
    if (s == "continuous") return TimeKind::continuous;
    throw InvalidInput("time must be \"discrete\" or \"continuous\", got \"" + std::string(s) + "\"");
}

StateSet::StateSet(std::size_t universe, std::initializer_list<std::size_t> members) : mask_(universe, 0) {
    for (auto i : members) {
        if (i >= universe) throw InvalidInput("state index " + std::to_string(i) + " out of range");
        insert(i);
    }
}

StateSet StateSet::from_indices(std::size_t universe, std::span<const std::size_t> members) {
    StateSet s(universe);
    for (auto i : members) {
        if (i >= universe) throw InvalidInput("state index " + std::to_string(i) + " out of range");
        s.insert(i);
    }
    return s;
}

StateSet StateSet::from_bits(std::size_t universe, std::uint64_t bits) {
    StateSet s(universe);
    for (std::size_t i = 0; i < universe; ++i)
        if ((bits >> i) & 1u) s.mask_[i] = 1;
    return s;
}

std::size_t StateSet::count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), char{1}));
}

std::vector<std::size_t> StateSet::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask_.size(); ++i)
        if (mask_[i]) out.push_back(i);
    return out;
}

StateSet StateSet::complement() const {
    StateSet s(universe());
    for (std::size_t i = 0; i < mask_.size(); ++i) s.mask_[i] = mask_[i] ? 0 : 1;
    return s;
}

StateSet StateSet::operator|(const StateSet& o) const {
    StateSet s(*this);
    for (std::size_t i = 0; i < mask_.size(); ++i) s.mask_[i] |= o.mask_.at(i);
    return s;
}

StateSet StateSet::operator&(const StateSet& o) const {
    StateSet s(*this);
    for (std::size_t i = 0; i < mask_.size(); ++i) s.mask_[i] &= o.mask_.at(i);
    return s;
}

StateSet StateSet::minus(const StateSet& o) const {
    StateSet s(*this);
    for (std::size_t i = 0; i < mask_.size(); ++i)
        if (o.mask_.at(i)) s.mask_[i] = 0;
    return s;
}

bool StateSet::intersects(const StateSet& o) const {
    for (std::size_t i = 0; i < mask_.size(); ++i)
        if (mask_[i] && o.mask_.at(i)) return true;
    return false;
}

bool StateSet::subset_of(const StateSet& o) const {
    for (std::size_t i = 0; i < mask_.size(); ++i)
        if (mask_[i] && !o.mask_.at(i)) return false;
    return true;
}

ReversibleChain::ReversibleChain(std::vector<std::string> states, const std::vector<Transition>& edges,
                                 std::optional<std::vector<double>> mu, TimeKind time) {
    if (states.empty()) throw InvalidInput("chain has no states");
    names_ = std::move(states);
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!lookup_.emplace(names_[i], i).second) throw InvalidInput("duplicate state id \"" + names_[i] + "\"");
    }
    const auto n = static_cast<Index>(names_.size());
    time_ = time;

    std::vector<Eigen::Triplet<double>> trips;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::optional<double>> diagonal(names_.size());
    for (const auto& e : edges) {
        const auto x = index(e.from);
        const auto y = index(e.to);
        if (!std::isfinite(e.p)) throw InvalidInput("non-finite transition entry");
        if (!seen.emplace(x, y).second)
            throw InvalidInput("duplicate edge " + e.from + " -> " + e.to);
        if (x == y) {
            diagonal[x] = e.p;
            continue;
        }
        if (e.p < 0) throw InvalidInput("negative entry on edge " + e.from + " -> " + e.to);
        if (e.p > 0) trips.emplace_back(static_cast<Index>(x), static_cast<Index>(y), e.p);
    }
    jumps_.resize(n, n);
    jumps_.setFromTriplets(trips.begin(), trips.end());
    jumps_.makeCompressed();

    // Explicit diagonal entries are only checked for consistency.
    Vector out = jumps_ * Vector::Ones(n);
    for (Index x = 0; x < n; ++x) {
        if (!diagonal[static_cast<std::size_t>(x)]) continue;
        const double d = *diagonal[static_cast<std::size_t>(x)];
        const double total = time_ == TimeKind::discrete ? out[x] + d : out[x] + d;
        const double want = time_ == TimeKind::discrete ? 1.0 : 0.0;
        if (std::abs(total - want) > kRowSumTol * std::max(1.0, out[x]))
            throw BadRowSum("row " + names_[static_cast<std::size_t>(x)] + " sums to " + std::to_string(total));
    }

    std::optional<Vector> m;
    if (mu) m = Eigen::Map<const Vector>(mu->data(), static_cast<Index>(mu->size()));
    validate_and_finish(std::move(m));
}

ReversibleChain ReversibleChain::from_jumps(const SparseRowMatrix& jumps, std::optional<Vector> mu, TimeKind time,
                                            std::vector<std::string> names) {
    if (jumps.rows() != jumps.cols() || jumps.rows() == 0) throw InvalidInput("jump matrix must be square and nonempty");
    ReversibleChain c;
    c.time_ = time;
    const Index n = jumps.rows();
    std::vector<Eigen::Triplet<double>> trips;
    for (Index x = 0; x < n; ++x) {
        for (SparseRowMatrix::InnerIterator it(jumps, x); it; ++it) {
            if (it.col() == x) continue;
            if (!std::isfinite(it.value()) || it.value() < 0) throw InvalidInput("invalid jump entry");
            if (it.value() > 0) trips.emplace_back(x, it.col(), it.value());
        }
    }
    c.jumps_.resize(n, n);
    c.jumps_.setFromTriplets(trips.begin(), trips.end());
    c.jumps_.makeCompressed();
    if (names.empty()) {
        names.reserve(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) names.push_back(std::to_string(i));
    }
    if (names.size() != static_cast<std::size_t>(n)) throw InvalidInput("name count does not match state count");
    c.names_ = std::move(names);
    for (std::size_t i = 0; i < c.names_.size(); ++i) {
        if (!c.lookup_.emplace(c.names_[i], i).second) throw InvalidInput("duplicate state id \"" + c.names_[i] + "\"");
    }
    c.validate_and_finish(std::move(mu));
    return c;
}

void ReversibleChain::validate_and_finish(std::optional<Vector> mu) {
    const Index n = jumps_.rows();
    exit_ = jumps_ * Vector::Ones(n);
    if (time_ == TimeKind::discrete) {
        for (Index x = 0; x < n; ++x)
            if (exit_[x] > 1.0 + kRowSumTol)
                throw BadRowSum("row " + describe(static_cast<std::size_t>(x), names_) + " sums to " +
                                std::to_string(exit_[x]));
    }

    // Strong connectivity of the jump graph.
    SparseRowMatrix back = SparseRowMatrix(jumps_.transpose());
    for (const SparseRowMatrix* g : {&jumps_, &back}) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::queue<Index> q;
        q.push(0);
        seen[0] = 1;
        while (!q.empty()) {
            const Index x = q.front();
            q.pop();
            for (SparseRowMatrix::InnerIterator it(*g, x); it; ++it) {
                if (!seen[static_cast<std::size_t>(it.col())]) {
                    seen[static_cast<std::size_t>(it.col())] = 1;
                    q.push(it.col());
                }
            }
        }
        const auto miss = std::find(seen.begin(), seen.end(), char{0});
        if (miss != seen.end())
            throw NotIrreducible("state " + describe(static_cast<std::size_t>(miss - seen.begin()), names_) +
                                 " is not mutually reachable from state " + describe(0, names_));
    }

    if (mu) {
        if (mu->size() != n) throw InvalidInput("mu has wrong length");
        double total = 0;
        for (Index x = 0; x < n; ++x) {
            if (!((*mu)[x] > 0) || !std::isfinite((*mu)[x]))
                throw InvalidInput("mu must be strictly positive at every state");
            total += (*mu)[x];
        }
        if (std::abs(total - 1.0) > kMassTol) throw InvalidInput("mu must sum to 1, got " + std::to_string(total));
        mu_ = *mu / total;
    } else {
        // Reversibility fixes mu up to normalisation along any spanning tree;
        // the edge-wise balance check below rejects chains where it does not.
        Vector logmu = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
        logmu[0] = 0;
        std::queue<Index> q;
        q.push(0);
        while (!q.empty()) {
            const Index x = q.front();
            q.pop();
            for (SparseRowMatrix::InnerIterator it(jumps_, x); it; ++it) {
                const Index y = it.col();
                if (!std::isnan(logmu[y])) continue;
                const double back_p = jumps_.coeff(y, x);
                if (back_p <= 0)
                    throw DetailedBalanceViolation("edge " + describe(static_cast<std::size_t>(x), names_) + " -> " +
                                                   describe(static_cast<std::size_t>(y), names_) +
                                                   " has no reverse edge");
                logmu[y] = logmu[x] + std::log(it.value()) - std::log(back_p);
                q.push(y);
            }
        }
        const double top = logmu.maxCoeff();
        mu_ = (logmu.array() - top).exp().matrix();
        mu_ /= mu_.sum();
    }

    for (Index x = 0; x < n; ++x) {
        for (SparseRowMatrix::InnerIterator it(jumps_, x); it; ++it) {
            const Index y = it.col();
            const double fwd = mu_[x] * it.value();
            const double bwd = mu_[y] * jumps_.coeff(y, x);
            if (std::abs(fwd - bwd) > kBalanceTol * std::max(fwd, bwd)) {
                std::ostringstream os;
                os << "detailed balance fails on edge " << describe(static_cast<std::size_t>(x), names_) << " <-> "
                   << describe(static_cast<std::size_t>(y), names_) << ": " << fwd << " vs " << bwd;
                throw DetailedBalanceViolation(os.str());
            }
        }
    }
}

std::size_t ReversibleChain::index(std::string_view name) const {
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) throw InvalidInput("unknown state id \"" + std::string(name) + "\"");
    return it->second;
}

double ReversibleChain::jump(std::size_t x, std::size_t y) const {
    if (x == y) return 0;
    return jumps_.coeff(static_cast<Index>(x), static_cast<Index>(y));
}

Matrix ReversibleChain::dense_kernel() const {
    Matrix k = Matrix(jumps_);
    for (Index x = 0; x < k.rows(); ++x)
        k(x, x) = time_ == TimeKind::discrete ? 1.0 - exit_[x] : -exit_[x];
    return k;
}

SparseMatrix ReversibleChain::energy_matrix() const {
    const Index n = jumps_.rows();
    std::vector<Eigen::Triplet<double>> trips;
    for (Index x = 0; x < n; ++x) {
        double diag = 0;
        for (SparseRowMatrix::InnerIterator it(jumps_, x); it; ++it) {
            const Index y = it.col();
            const double w = 0.5 * (mu_[x] * it.value() + mu_[y] * jumps_.coeff(y, x));
            trips.emplace_back(x, y, -w);
            diag += w;
        }
        trips.emplace_back(x, x, diag);
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

double mass(const Vector& nu, const StateSet& a) {
    double s = 0;
    for (auto i : a.indices()) s += nu[static_cast<Index>(i)];
    return s;
}

Vector restrict_normalized(const Vector& nu, const StateSet& a) {
    const double m = mass(nu, a);
    if (!(m > 0)) throw EmptySet("set has zero mass");
    Vector out = Vector::Zero(nu.size());
    for (auto i : a.indices()) out[static_cast<Index>(i)] = nu[static_cast<Index>(i)] / m;
    return out;
}

double mean(const Vector& nu, const Vector& f) { return nu.dot(f) / nu.sum(); }

double variance(const Vector& nu, const Vector& f) {
    const double m = mean(nu, f);
    return nu.dot((f.array() - m).square().matrix()) / nu.sum();
}

namespace {

// (1+d) log(1+d) - d, accurate near d = 0.
double relative_entropy_density(double d) {
    if (d <= -1.0) return 1.0;
    if (std::abs(d) < 0.1) {
        double term = d * d;
        double s = 0;
        for (int k = 2; k < 30; ++k) {
            s += term / (static_cast<double>(k) * (k - 1)) * ((k % 2 == 0) ? 1.0 : -1.0);
            term *= d;
        }
        return s;
    }
    return (1.0 + d) * std::log1p(d) - d;
}

}  // namespace

double entropy(const Vector& nu, const Vector& F) {
    if ((F.array() < 0).any()) throw DomainError("entropy argument must be nonnegative");
    const double total = nu.sum();
    const double m = nu.dot(F) / total;
    if (m == 0) return 0;
    double s = 0;
    for (Index x = 0; x < F.size(); ++x) {
        if (nu[x] == 0) continue;
        s += nu[x] * relative_entropy_density(F[x] / m - 1.0);
    }
    return std::max(0.0, m * s / total);
}

double log_mean(double a, double b) {
    if (!(a > 0) || !(b > 0)) throw DomainError("logarithmic mean needs positive arguments");
    if (a == b) return a;
    const double x = a / b - 1.0;
    if (std::abs(x) < 1e-4) return b * (1.0 + x / 2 - x * x / 12 + x * x * x / 24);
    return (a - b) / std::log(a / b);
}

Vector generator_apply(const ReversibleChain& chain, const Vector& f) {
    const auto& j = chain.jumps();
    Vector out = Vector::Zero(f.size());
    for (Index x = 0; x < j.rows(); ++x)
        for (SparseRowMatrix::InnerIterator it(j, x); it; ++it) out[x] += it.value() * (f[it.col()] - f[x]);
    return out;
}

double dirichlet_form(const ReversibleChain& chain, const Vector& f) { return dirichlet_form(chain, f, f); }

double dirichlet_form(const ReversibleChain& chain, const Vector& f, const Vector& g) {
    if (f.size() != static_cast<Index>(chain.size()) || g.size() != f.size())
        throw InvalidInput("function length does not match chain");
    const auto& j = chain.jumps();
    const auto& mu = chain.mu();
    double s = 0;
    for (Index x = 0; x < j.rows(); ++x)
        for (SparseRowMatrix::InnerIterator it(j, x); it; ++it)
            s += mu[x] * it.value() * (f[x] - f[it.col()]) * (g[x] - g[it.col()]);
    return 0.5 * s;
}

void validate_partition(const Partition& parts, std::size_t universe) {
    std::vector<int> owner(universe, -1);
    for (std::size_t b = 0; b < parts.size(); ++b) {
        if (parts[b].universe() != universe) throw InvalidInput("partition block has wrong universe");
        if (parts[b].empty()) throw EmptySet("partition block " + std::to_string(b) + " is empty");
        for (auto i : parts[b].indices()) {
            if (owner[i] >= 0) throw OverlappingSets("state " + std::to_string(i) + " lies in two blocks");
            owner[i] = static_cast<int>(b);
        }
    }
    for (std::size_t i = 0; i < universe; ++i)
        if (owner[i] < 0) throw InvalidInput("partition does not cover state " + std::to_string(i));
}

Vector conditional_expectation(const Vector& nu, const Partition& parts, const Vector& f) {
    validate_partition(parts, static_cast<std::size_t>(nu.size()));
    Vector out(f.size());
    for (const auto& block : parts) {
        const auto idx = block.indices();
        double m = 0;
        double s = 0;
        for (auto i : idx) {
            m += nu[static_cast<Index>(i)];
            s += nu[static_cast<Index>(i)] * f[static_cast<Index>(i)];
        }
        if (!(m > 0)) throw EmptySet("partition block has zero mass");
        for (auto i : idx) out[static_cast<Index>(i)] = s / m;
    }
    return out;
}

}  // namespace metastab
