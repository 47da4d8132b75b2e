#include "metastab/rfcw.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "metastab/errors.hpp"
#include "metastab/oracle.hpp"
#include "metastab/potential.hpp"
#include "metastab/rng.hpp"

namespace metastab {

namespace {

using Index = Eigen::Index;
constexpr double kPlateauTol = 1e-12;

double log_cosh(double u) {
    const double a = std::abs(u);
    return a + std::log1p(std::exp(-2 * a)) - std::log(2.0);
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InvalidInput("bad number \"" + item + "\" in field spec");
        }
    }
    return out;
}

void require_materialisable(const RfcwModel& model) {
    if (model.spins() > RfcwModel::kMaxMaterialised)
        throw TooLarge("micro chain is only materialised for N <= 14");
}

}  // namespace

FieldSpec parse_field_spec(const std::string& text) {
    FieldSpec spec;
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "zero") {
        spec.kind = FieldSpec::Kind::zero;
        spec.h_inf = tail.empty() ? 0.0 : std::stod(tail);
    } else if (head == "uniform") {
        spec.kind = FieldSpec::Kind::uniform;
        const auto v = parse_list(tail);
        if (v.size() != 1 || !(v[0] > 0)) throw InvalidInput("uniform field needs one positive bound");
        spec.h_inf = v[0];
    } else if (head == "discrete" || head == "values") {
        spec.kind = head == "discrete" ? FieldSpec::Kind::discrete : FieldSpec::Kind::values;
        spec.values = parse_list(tail);
        if (spec.values.empty()) throw InvalidInput("field spec lists no values");
        for (double v : spec.values) spec.h_inf = std::max(spec.h_inf, std::abs(v));
    } else {
        throw InvalidInput("unknown field spec \"" + text + "\"");
    }
    if (spec.h_inf < 0) throw InvalidInput("field bound must be nonnegative");
    return spec;
}

RfcwModel::RfcwModel(int n_spins, double beta, std::vector<double> field, double h_inf)
    : n_(n_spins), beta_(beta), h_(std::move(field)), h_inf_(h_inf) {
    if (n_ < 1 || n_ > 31) throw DomainError("spin count must lie in [1, 31]");
    if (!(beta_ > 0) || !std::isfinite(beta_)) throw DomainError("beta must be positive and finite");
    if (static_cast<int>(h_.size()) != n_) throw InvalidInput("field length must equal N");
    for (double v : h_)
        if (!std::isfinite(v) || std::abs(v) > h_inf_ + 1e-15)
            throw DomainError("field value " + std::to_string(v) + " exceeds h_inf");
}

RfcwModel RfcwModel::build(int n_spins, double beta, const FieldSpec& spec, std::uint64_t seed) {
    if (n_spins < 1) throw DomainError("spin count must be positive");
    std::vector<double> h(static_cast<std::size_t>(n_spins), 0.0);
    for (int i = 0; i < n_spins; ++i) {
        CounterRng rng(seed, 0, static_cast<std::uint64_t>(i), Stream::field);
        switch (spec.kind) {
            case FieldSpec::Kind::zero: break;
            case FieldSpec::Kind::uniform: h[static_cast<std::size_t>(i)] = spec.h_inf * (2 * rng.uniform() - 1); break;
            case FieldSpec::Kind::discrete:
                h[static_cast<std::size_t>(i)] = spec.values[rng.below(spec.values.size())];
                break;
            case FieldSpec::Kind::values:
                if (static_cast<int>(spec.values.size()) != n_spins) throw InvalidInput("field list length must equal N");
                h[static_cast<std::size_t>(i)] = spec.values[static_cast<std::size_t>(i)];
                break;
        }
    }
    return RfcwModel(n_spins, beta, std::move(h), spec.h_inf);
}

int RfcwModel::magnetisation(Config c) const { return 2 * std::popcount(c) - n_; }

double RfcwModel::hamiltonian(Config c) const {
    const double m = magnetisation(c);
    double s = -m * m / (2.0 * n_);
    for (int i = 0; i < n_; ++i) s -= h_[static_cast<std::size_t>(i)] * spin(c, i);
    return s;
}

double RfcwModel::flip_energy(Config c, int i) const {
    const int s = spin(c, i);
    return (2.0 * s * magnetisation(c) - 2.0) / n_ + 2.0 * h_[static_cast<std::size_t>(i)] * s;
}

double RfcwModel::flip_probability(Config c, int i) const {
    return std::exp(-beta_ * std::max(0.0, flip_energy(c, i)));
}

std::string RfcwModel::config_name(Config c) const {
    std::string s(static_cast<std::size_t>(n_), '-');
    for (int i = 0; i < n_; ++i)
        if (spin(c, i) > 0) s[static_cast<std::size_t>(i)] = '+';
    return s;
}

Vector RfcwModel::gibbs() const {
    if (n_ > 24) throw TooLarge("Gibbs vector limited to N <= 24");
    const std::size_t size = std::size_t{1} << n_;
    Vector logw(static_cast<Index>(size));
    for (std::size_t c = 0; c < size; ++c) logw[static_cast<Index>(c)] = -beta_ * hamiltonian(static_cast<Config>(c));
    const double top = logw.maxCoeff();
    Vector w = (logw.array() - top).exp().matrix();
    return w / w.sum();
}

ReversibleChain RfcwModel::micro_chain() const {
    require_materialisable(*this);
    const std::size_t size = std::size_t{1} << n_;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(size * static_cast<std::size_t>(n_));
    for (std::size_t c = 0; c < size; ++c)
        for (int i = 0; i < n_; ++i)
            trips.emplace_back(static_cast<Index>(c), static_cast<Index>(flip(static_cast<Config>(c), i)),
                               flip_probability(static_cast<Config>(c), i) / n_);
    SparseRowMatrix jumps(static_cast<Index>(size), static_cast<Index>(size));
    jumps.setFromTriplets(trips.begin(), trips.end());
    std::vector<std::string> names;
    names.reserve(size);
    for (std::size_t c = 0; c < size; ++c) names.push_back(config_name(static_cast<Config>(c)));
    return ReversibleChain::from_jumps(jumps, gibbs(), TimeKind::discrete, std::move(names));
}

std::vector<int> CoarseGraining::counts(std::size_t pt) const {
    std::vector<int> k(static_cast<std::size_t>(blocks));
    for (int l = 0; l < blocks; ++l) {
        k[static_cast<std::size_t>(l)] = static_cast<int>(pt % radix[static_cast<std::size_t>(l)]);
        pt /= radix[static_cast<std::size_t>(l)];
    }
    return k;
}

std::size_t CoarseGraining::point(const std::vector<int>& k) const {
    std::size_t pt = 0;
    for (int l = blocks; l-- > 0;) pt = pt * radix[static_cast<std::size_t>(l)] + static_cast<std::size_t>(k[static_cast<std::size_t>(l)]);
    return pt;
}

std::vector<double> CoarseGraining::coordinates(std::size_t pt, int n_spins) const {
    const auto k = counts(pt);
    std::vector<double> x(static_cast<std::size_t>(blocks));
    for (int l = 0; l < blocks; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        x[ul] = (2.0 * k[ul] - static_cast<double>(members[ul].size())) / n_spins;
    }
    return x;
}

std::size_t CoarseGraining::project(Config c) const {
    std::vector<int> k(static_cast<std::size_t>(blocks), 0);
    for (std::size_t i = 0; i < block_of.size(); ++i)
        if ((c >> i) & 1u) ++k[static_cast<std::size_t>(block_of[i])];
    return point(k);
}

std::vector<std::size_t> CoarseGraining::neighbours(std::size_t pt) const {
    auto k = counts(pt);
    std::vector<std::size_t> out;
    for (int l = 0; l < blocks; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        if (k[ul] > 0) {
            --k[ul];
            out.push_back(point(k));
            ++k[ul];
        }
        if (k[ul] < static_cast<int>(members[ul].size())) {
            ++k[ul];
            out.push_back(point(k));
            --k[ul];
        }
    }
    return out;
}

CoarseGraining coarse_grain(const RfcwModel& model, int n) {
    if (n < 1) throw DomainError("number of blocks must be positive");
    CoarseGraining cg;
    cg.blocks = n;
    const double hinf = model.h_inf();
    cg.eps = hinf > 0 ? 2 * hinf / n : 0.0;
    cg.members.assign(static_cast<std::size_t>(n), {});
    for (int i = 0; i < model.spins(); ++i) {
        int l = 0;
        if (hinf > 0) {
            const double width = 2 * hinf / n;
            l = std::clamp(static_cast<int>(std::floor((model.field()[static_cast<std::size_t>(i)] + hinf) / width)), 0, n - 1);
        }
        cg.block_of.push_back(l);
        cg.members[static_cast<std::size_t>(l)].push_back(i);
    }
    cg.hbar.assign(static_cast<std::size_t>(n), 0.0);
    for (int l = 0; l < n; ++l) {
        const auto& m = cg.members[static_cast<std::size_t>(l)];
        if (m.empty()) continue;
        double s = 0;
        for (int i : m) s += model.field()[static_cast<std::size_t>(i)];
        cg.hbar[static_cast<std::size_t>(l)] = s / static_cast<double>(m.size());
    }
    for (int i = 0; i < model.spins(); ++i)
        cg.htilde.push_back(model.field()[static_cast<std::size_t>(i)] -
                            cg.hbar[static_cast<std::size_t>(cg.block_of[static_cast<std::size_t>(i)])]);
    cg.lattice_size = 1;
    for (const auto& m : cg.members) {
        cg.radix.push_back(m.size() + 1);
        cg.lattice_size *= m.size() + 1;
    }
    return cg;
}

double mesoscopic_energy(const CoarseGraining& cg, const std::vector<double>& x) {
    double total = 0, lin = 0;
    for (std::size_t l = 0; l < x.size(); ++l) {
        total += x[l];
        lin += cg.hbar[l] * x[l];
    }
    return -0.5 * total * total - lin;
}

double block_rate(const RfcwModel& model, const CoarseGraining& cg, int block, double y) {
    const auto& m = cg.members.at(static_cast<std::size_t>(block));
    if (m.empty()) {
        if (std::abs(y) > 1e-12) throw DomainError("empty block must have zero magnetisation");
        return 0;
    }
    if (std::abs(y) > 1 + 1e-12) throw DomainError("block magnetisation outside [-1, 1]");
    // The tilde fields average to zero in a block, so the limit at |y| = 1 is log 2.
    if (std::abs(y) >= 1 - 1e-15) return std::log(2.0);
    const double beta = model.beta();
    double spread = 0;
    for (int i : m) spread = std::max(spread, std::abs(cg.htilde[static_cast<std::size_t>(i)]));
    const double size = static_cast<double>(m.size());
    auto slope = [&](double t, double* curvature) {
        double s = 0, c = 0;
        for (int i : m) {
            const double th = std::tanh(t + beta * cg.htilde[static_cast<std::size_t>(i)]);
            s += th;
            c += 1 - th * th;
        }
        if (curvature) *curvature = c / size;
        return s / size;
    };
    const double centre = std::atanh(y);
    double lo = centre - beta * spread - 1e-12, hi = centre + beta * spread + 1e-12;
    double t = centre;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        double curv = 0;
        const double r = slope(t, &curv) - y;
        if (std::abs(r) <= 1e-15) {
            converged = true;
            break;
        }
        if (r > 0)
            hi = t;
        else
            lo = t;
        double next = curv > 0 ? t - r / curv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-15 * (1 + std::abs(t))) {
            t = next;
            converged = std::abs(slope(t, nullptr) - y) <= 1e-12;
            break;
        }
        t = next;
    }
    if (!converged && std::abs(slope(t, nullptr) - y) > 1e-12)
        throw SolverNotConverged("block rate Newton iteration did not converge");
    double phi = 0;
    for (int i : m) phi += log_cosh(t + beta * cg.htilde[static_cast<std::size_t>(i)]);
    return y * t - phi / size;
}

double free_energy(const RfcwModel& model, const CoarseGraining& cg, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != cg.blocks) throw InvalidInput("coordinate count differs from block count");
    const double n = model.spins();
    double ent = 0;
    for (int l = 0; l < cg.blocks; ++l) {
        const auto size = static_cast<double>(cg.members[static_cast<std::size_t>(l)].size());
        if (size == 0) {
            ent += block_rate(model, cg, l, x[static_cast<std::size_t>(l)]);
            continue;
        }
        ent += size / n * block_rate(model, cg, l, n * x[static_cast<std::size_t>(l)] / size);
    }
    return mesoscopic_energy(cg, x) + ent / model.beta();
}

namespace {

CriticalPoint refine_minimum(const RfcwModel& model, const CoarseGraining& cg, double z0) {
    const double beta = model.beta();
    const auto& h = model.field();
    const double n = model.spins();
    auto g = [&](double z) {
        double s = 0;
        for (double hi : h) s += std::tanh(beta * (z + hi));
        return z - s / n;
    };
    auto dg = [&](double z) {
        double s = 0;
        for (double hi : h) {
            const double th = std::tanh(beta * (z + hi));
            s += 1 - th * th;
        }
        return 1 - beta * s / n;
    };
    constexpr int grid = 4001;
    std::vector<double> roots;
    double prev_z = -1, prev_g = g(-1.0);
    for (int k = 1; k < grid; ++k) {
        const double z = -1 + 2.0 * k / (grid - 1);
        const double gz = g(z);
        if (prev_g == 0) roots.push_back(prev_z);
        if ((prev_g < 0 && gz > 0) || (prev_g > 0 && gz < 0)) {
            double lo = prev_z, hi = z, glo = prev_g;
            for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double gm = g(mid);
                if ((gm < 0) == (glo < 0)) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            roots.push_back(0.5 * (lo + hi));
        }
        prev_z = z;
        prev_g = gz;
    }
    if (roots.empty()) throw SolverNotConverged("no critical point found");
    double best = roots.front();
    double best_d = INFINITY;
    for (double r : roots) {
        if (dg(r) <= 0) continue;  // not a minimum of the scalar reduction
        if (std::abs(r - z0) < best_d) {
            best_d = std::abs(r - z0);
            best = r;
        }
    }
    // Newton polish
    for (int it = 0; it < 5; ++it) {
        const double d = dg(best);
        if (d == 0) break;
        const double next = best - g(best) / d;
        if (std::abs(g(next)) < std::abs(g(best))) best = next;
    }
    CriticalPoint cp;
    cp.z = best;
    cp.residual = std::abs(g(best));
    cp.x.assign(static_cast<std::size_t>(cg.blocks), 0.0);
    for (int i = 0; i < model.spins(); ++i)
        cp.x[static_cast<std::size_t>(cg.block_of[static_cast<std::size_t>(i)])] +=
            std::tanh(beta * (best + h[static_cast<std::size_t>(i)])) / n;
    cp.free_energy = free_energy(model, cg, cp.x);
    double lc = 0;
    for (double hi : h) lc += log_cosh(beta * (best + hi));
    cp.closed_form = 0.5 * best * best - lc / (beta * n);
    return cp;
}

std::vector<double> bottleneck_from(const Landscape& land, const std::vector<std::size_t>& sources) {
    const std::size_t size = land.cg.lattice_size;
    std::vector<double> dist(size, INFINITY);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (auto s : sources) {
        dist[s] = land.f[static_cast<Index>(s)];
        pq.emplace(dist[s], s);
    }
    while (!pq.empty()) {
        const auto [d, x] = pq.top();
        pq.pop();
        if (d > dist[x]) continue;
        for (auto y : land.cg.neighbours(x)) {
            const double nd = std::max(d, land.f[static_cast<Index>(y)]);
            if (nd < dist[y]) {
                dist[y] = nd;
                pq.emplace(nd, y);
            }
        }
    }
    return dist;
}

}  // namespace

double communication_height(const Landscape& land, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() || b.empty()) throw EmptySet("communication height needs nonempty sets");
    const auto dist = bottleneck_from(land, a);
    double best = INFINITY;
    for (auto y : b) best = std::min(best, dist.at(y));
    return best;
}

Landscape free_energy_landscape(const RfcwModel& model, const CoarseGraining& cg) {
    Landscape land;
    land.cg = cg;
    const std::size_t size = cg.lattice_size;
    land.f.resize(static_cast<Index>(size));
    for (std::size_t p = 0; p < size; ++p)
        land.f[static_cast<Index>(p)] = free_energy(model, cg, cg.coordinates(p, model.spins()));

    auto same = [&](double a, double b) { return std::abs(a - b) <= kPlateauTol * std::max(1.0, std::abs(a)); };
    // plateaus: connected components of equal F
    std::vector<std::size_t> comp(size, SIZE_MAX);
    std::vector<std::vector<std::size_t>> comps;
    for (std::size_t p = 0; p < size; ++p) {
        if (comp[p] != SIZE_MAX) continue;
        std::vector<std::size_t> members{p};
        comp[p] = comps.size();
        for (std::size_t k = 0; k < members.size(); ++k) {
            for (auto q : cg.neighbours(members[k])) {
                if (comp[q] == SIZE_MAX && same(land.f[static_cast<Index>(q)], land.f[static_cast<Index>(p)])) {
                    comp[q] = comps.size();
                    members.push_back(q);
                }
            }
        }
        std::sort(members.begin(), members.end());
        comps.push_back(std::move(members));
    }
    for (const auto& members : comps) {
        const double level = land.f[static_cast<Index>(members.front())];
        bool minimum = true;
        for (auto p : members) {
            for (auto q : cg.neighbours(p)) {
                if (std::binary_search(members.begin(), members.end(), q)) continue;
                if (!(land.f[static_cast<Index>(q)] > level)) {
                    minimum = false;
                    break;
                }
            }
            if (!minimum) break;
        }
        if (minimum) land.minima.push_back(members);
    }
    std::sort(land.minima.begin(), land.minima.end());

    for (const auto& m : land.minima) {
        const auto x = cg.coordinates(m.front(), model.spins());
        land.critical.push_back(refine_minimum(model, cg, std::accumulate(x.begin(), x.end(), 0.0)));
    }

    // Remove the shallowest minimum first; ties remove the larger lattice index,
    // so m_1 is the lexicographically smallest among equally deep minima.
    std::vector<std::size_t> remaining(land.minima.size());
    std::iota(remaining.begin(), remaining.end(), 0);
    land.order.assign(land.minima.size(), 0);
    std::vector<double> depth_by_label(land.minima.size(), 0.0);
    while (remaining.size() > 1) {
        double best = INFINITY;
        std::size_t pick = 0;
        for (std::size_t r = 0; r < remaining.size(); ++r) {
            std::vector<std::size_t> others;
            for (std::size_t s = 0; s < remaining.size(); ++s)
                if (s != r)
                    for (auto p : land.minima[remaining[s]]) others.push_back(p);
            const auto& me = land.minima[remaining[r]];
            const double d = communication_height(land, me, others) - land.f[static_cast<Index>(me.front())];
            if (d < best - kPlateauTol || (std::abs(d - best) <= kPlateauTol && me.front() > land.minima[remaining[pick]].front())) {
                best = d;
                pick = r;
            }
        }
        land.order[remaining.size() - 1] = remaining[pick];
        depth_by_label[remaining.size() - 1] = best;
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (!remaining.empty()) land.order[0] = remaining[0];
    for (std::size_t k = 1; k < land.minima.size(); ++k) land.depths.push_back(depth_by_label[k]);
    for (std::size_t k = 1; k < land.depths.size(); ++k)
        if (land.depths[k] > land.depths[k - 1] + kPlateauTol) land.monotone = false;
    return land;
}

StateSet fiber(const RfcwModel& model, const CoarseGraining& cg, const std::vector<std::size_t>& points) {
    if (model.spins() > 20) throw TooLarge("fibers are enumerated for N <= 20");
    const std::size_t size = std::size_t{1} << model.spins();
    std::vector<char> want(cg.lattice_size, 0);
    for (auto p : points) want.at(p) = 1;
    StateSet out(size);
    for (std::size_t c = 0; c < size; ++c)
        if (want[cg.project(static_cast<Config>(c))]) out.insert(c);
    return out;
}

bool is_fiber_set(const RfcwModel& model, const CoarseGraining& cg, const StateSet& micro) {
    const std::size_t size = std::size_t{1} << model.spins();
    if (micro.universe() != size) throw InvalidInput("micro set has wrong universe");
    std::vector<int> state(cg.lattice_size, -1);
    for (std::size_t c = 0; c < size; ++c) {
        const auto p = cg.project(static_cast<Config>(c));
        const int in = micro.contains(c) ? 1 : 0;
        if (state[p] < 0)
            state[p] = in;
        else if (state[p] != in)
            return false;
    }
    return true;
}

MesoscopicChain mesoscopic_chain(const RfcwModel& model, const CoarseGraining& cg) {
    require_materialisable(model);
    const auto micro = model.micro_chain();
    const auto& mu = micro.mu();
    const auto size = static_cast<Index>(cg.lattice_size);
    Vector mass = Vector::Zero(size);
    Matrix flow = Matrix::Zero(size, size);
    for (Index c = 0; c < mu.size(); ++c) {
        const auto x = static_cast<Index>(cg.project(static_cast<Config>(c)));
        mass[x] += mu[c];
        for (SparseRowMatrix::InnerIterator it(micro.jumps(), c); it; ++it) {
            const auto y = static_cast<Index>(cg.project(static_cast<Config>(it.col())));
            if (y != x) flow(x, y) += mu[c] * it.value();
        }
    }
    std::vector<Eigen::Triplet<double>> trips;
    for (Index x = 0; x < size; ++x)
        for (Index y = 0; y < size; ++y)
            if (flow(x, y) > 0) trips.emplace_back(x, y, flow(x, y) / mass[x]);
    SparseRowMatrix jumps(size, size);
    jumps.setFromTriplets(trips.begin(), trips.end());
    std::vector<std::string> names;
    for (Index x = 0; x < size; ++x) {
        const auto k = cg.counts(static_cast<std::size_t>(x));
        std::string s = "k";
        for (std::size_t l = 0; l < k.size(); ++l) s += (l ? "," : ":") + std::to_string(k[l]);
        names.push_back(s);
    }
    return {ReversibleChain::from_jumps(jumps, mass / mass.sum(), TimeKind::discrete, std::move(names)), mass};
}

BarredReport barred_chain(const RfcwModel& model, const CoarseGraining& cg) {
    require_materialisable(model);
    const int n = model.spins();
    const double beta = model.beta();
    const std::size_t size = std::size_t{1} << n;
    std::vector<double> hbar_energy(size);
    for (std::size_t c = 0; c < size; ++c)
        hbar_energy[c] = n * mesoscopic_energy(cg, cg.coordinates(cg.project(static_cast<Config>(c)), n));
    Vector logw(static_cast<Index>(size));
    for (std::size_t c = 0; c < size; ++c) logw[static_cast<Index>(c)] = -beta * hbar_energy[c];
    Vector mubar = (logw.array() - logw.maxCoeff()).exp().matrix();
    mubar /= mubar.sum();

    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t c = 0; c < size; ++c)
        for (int i = 0; i < n; ++i) {
            const auto d = RfcwModel::flip(static_cast<Config>(c), i);
            trips.emplace_back(static_cast<Index>(c), static_cast<Index>(d),
                               std::exp(-beta * std::max(0.0, hbar_energy[d] - hbar_energy[c])) / n);
        }
    SparseRowMatrix jumps(static_cast<Index>(size), static_cast<Index>(size));
    jumps.setFromTriplets(trips.begin(), trips.end());
    const auto micro = model.micro_chain();

    BarredReport out{ReversibleChain::from_jumps(jumps, mubar, TimeKind::discrete, micro.names()), 0, 0, 0, 0, 0, false};
    out.log_mu_bound = 2 * beta * cg.eps * n;
    out.log_p_bound = 2 * beta * cg.eps;
    for (std::size_t c = 0; c < size; ++c) {
        out.log_mu_ratio_max =
            std::max(out.log_mu_ratio_max, std::abs(std::log(mubar[static_cast<Index>(c)] / micro.mu()[static_cast<Index>(c)])));
        for (int i = 0; i < n; ++i) {
            const auto d = RfcwModel::flip(static_cast<Config>(c), i);
            out.log_p_ratio_max = std::max(
                out.log_p_ratio_max, std::abs(std::log(out.barred.jump(c, d) / micro.jump(c, d))));
        }
    }
    // Aggregated barred rates must agree across each fiber.
    std::vector<std::vector<double>> reference(cg.lattice_size);
    for (std::size_t c = 0; c < size; ++c) {
        const auto x = cg.project(static_cast<Config>(c));
        std::vector<double> agg(cg.lattice_size, 0.0);
        for (int i = 0; i < n; ++i) {
            const auto d = RfcwModel::flip(static_cast<Config>(c), i);
            agg[cg.project(d)] += out.barred.jump(c, d);
        }
        if (reference[x].empty()) {
            reference[x] = agg;
        } else {
            for (std::size_t y = 0; y < agg.size(); ++y)
                out.lumpability_residual = std::max(out.lumpability_residual, std::abs(agg[y] - reference[x][y]));
        }
    }
    out.certified = out.log_mu_ratio_max <= out.log_mu_bound + 1e-12 && out.log_p_ratio_max <= out.log_p_bound + 1e-12 &&
                    out.lumpability_residual <= 1e-10;
    return out;
}

double lumped_hitting_residual(const RfcwModel& model, const CoarseGraining& cg, const ReversibleChain& barred,
                               const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const auto fa = fiber(model, cg, a);
    const auto fb = fiber(model, cg, b);
    const auto sol = equilibrium_potential(barred, fa, fb);
    std::vector<double> lo(cg.lattice_size, INFINITY), hi(cg.lattice_size, -INFINITY);
    for (std::size_t c = 0; c < barred.size(); ++c) {
        const auto x = cg.project(static_cast<Config>(c));
        double v = sol.potential[static_cast<Index>(c)];
        if (fa.contains(c)) v = sol.escape[static_cast<Index>(c)];
        if (fb.contains(c)) v = sol.escape_reverse[static_cast<Index>(c)];
        lo[x] = std::min(lo[x], v);
        hi[x] = std::max(hi[x], v);
    }
    double spread = 0;
    for (std::size_t x = 0; x < cg.lattice_size; ++x) spread = std::max(spread, hi[x] - lo[x]);
    return spread;
}

ReversibleChain bernoulli_laplace_chain(int l, int k) {
    if (l < 2 || l > 16 || k <= 0 || k >= l) throw DomainError("exchange chain needs 0 < k < l <= 16");
    std::vector<std::uint32_t> states;
    for (std::uint32_t c = 0; c < (1u << l); ++c)
        if (std::popcount(c) == k) states.push_back(c);
    std::vector<Index> where(1u << l, -1);
    for (std::size_t s = 0; s < states.size(); ++s) where[states[s]] = static_cast<Index>(s);
    const double p = 1.0 / (static_cast<double>(k) * (l - k));
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto c = states[s];
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < l; ++j)
                if (((c >> i) & 1u) && !((c >> j) & 1u))
                    trips.emplace_back(static_cast<Index>(s), where[c ^ (1u << i) ^ (1u << j)], p);
    }
    const auto m = static_cast<Index>(states.size());
    SparseRowMatrix jumps(m, m);
    jumps.setFromTriplets(trips.begin(), trips.end());
    return ReversibleChain::from_jumps(jumps, Vector::Constant(m, 1.0 / static_cast<double>(m)), TimeKind::discrete);
}

BernoulliLaplace bernoulli_laplace_constants(int l, int k, double c_bl, bool materialise) {
    if (l < 2 || k <= 0 || k >= l) throw DomainError("Bernoulli-Laplace constants need 0 < k < l");
    if (!(c_bl > 0)) throw DomainError("c_BL must be positive");
    BernoulliLaplace out;
    const double kk = static_cast<double>(k) * (l - k);
    out.c_pi = kk / l;
    out.c_lsi = out.c_pi / (c_bl * std::log(static_cast<double>(l) * l / kk));
    out.pi_within_quarter = out.c_pi <= l / 4.0 + 1e-12;
    out.lsi_at_least_twice_pi = out.c_lsi >= 2 * out.c_pi;
    if (materialise && l <= 12) out.spectral_c_pi = exact_cpi(bernoulli_laplace_chain(l, k)).c_pi;
    return out;
}

ReversibleChain two_step_chain(const ReversibleChain& chain) {
    if (chain.time() != TimeKind::discrete) throw DomainError("two-step chain needs discrete time");
    const auto n = static_cast<Index>(chain.size());
    SparseRowMatrix p = chain.jumps();
    SparseRowMatrix diag(n, n);
    std::vector<Eigen::Triplet<double>> d;
    for (Index x = 0; x < n; ++x) d.emplace_back(x, x, 1 - chain.exit_rate(static_cast<std::size_t>(x)));
    diag.setFromTriplets(d.begin(), d.end());
    p += diag;
    SparseRowMatrix p2 = (p * p).pruned();
    return ReversibleChain::from_jumps(p2, chain.mu(), TimeKind::discrete, chain.names());
}

TwoStepReport two_step_comparison(const ReversibleChain& chain, std::uint64_t seed, std::size_t probes) {
    const auto two = two_step_chain(chain);
    TwoStepReport out;
    const auto n = static_cast<Index>(chain.size());
    for (std::size_t t = 0; t < probes; ++t) {
        CounterRng rng(seed, t, 0, Stream::test);
        Vector f(n);
        for (Index x = 0; x < n; ++x) f[x] = 2 * rng.uniform() - 1;
        const double e = dirichlet_form(chain, f);
        if (e > 0) out.max_energy_ratio = std::max(out.max_energy_ratio, dirichlet_form(two, f) / e);
    }
    if (chain.size() <= 4096) {
        Matrix g = Matrix(chain.energy_matrix());
        const Vector s = chain.mu().cwiseSqrt();
        for (Index x = 0; x < n; ++x)
            for (Index y = 0; y < n; ++y) g(x, y) /= s[x] * s[y];
        Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
        for (Index k = 1; k < n; ++k) {
            const double lambda = 1 - es.eigenvalues()[k];
            out.max_spectral_ratio = std::max(out.max_spectral_ratio, 1 + lambda);
        }
    }
    out.certified = out.max_energy_ratio <= 2 + 1e-12 && out.max_spectral_ratio <= 2 + 1e-12;
    return out;
}

ExchangeRateCheck exchange_rate_check(const RfcwModel& model, const CoarseGraining& cg, const std::vector<int>& counts) {
    require_materialisable(model);
    const int n = model.spins();
    const double beta = model.beta();
    const auto target = cg.point(counts);
    const std::size_t size = std::size_t{1} << n;
    std::vector<Config> fib;
    for (std::size_t c = 0; c < size; ++c)
        if (cg.project(static_cast<Config>(c)) == target) fib.push_back(static_cast<Config>(c));
    std::vector<double> logw;
    for (auto c : fib) logw.push_back(-beta * model.hamiltonian(c));
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0;
    for (double v : logw) z += std::exp(v - top);

    ExchangeRateCheck out;
    out.bound = static_cast<double>(n) * n * std::exp(beta * (cg.eps * n + 4 + 4 * model.h_inf()));
    const double pi_m = 1.0 / static_cast<double>(fib.size());
    auto p = [&](Config c, int i) { return model.flip_probability(c, i) / n; };
    for (std::size_t s = 0; s < fib.size(); ++s) {
        const auto c = fib[s];
        const double mu_m = std::exp(logw[s] - top) / z;
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (cg.block_of[static_cast<std::size_t>(j)] != cg.block_of[static_cast<std::size_t>(k)]) continue;
                if (!(RfcwModel::spin(c, j) > 0 && RfcwModel::spin(c, k) < 0)) continue;
                const Config d = RfcwModel::flip(RfcwModel::flip(c, j), k);
                const double p2 = p(c, j) * p(RfcwModel::flip(c, j), k) + p(c, k) * p(RfcwModel::flip(c, k), j);
                const double rate = 1.0 / static_cast<double>(cg.members[static_cast<std::size_t>(cg.block_of[static_cast<std::size_t>(j)])].size());
                out.max_ratio = std::max(out.max_ratio, pi_m * rate / (mu_m * p2));
                ++out.edges;
                (void)d;
            }
    }
    return out;
}

double local_pi_ceiling(const RfcwModel& model, const CoarseGraining& cg) {
    const double n = model.spins();
    return n * n * n / 2 * std::exp(2 * model.beta() * (cg.eps * n + 2 + 2 * model.h_inf()));
}

double escape_lower_bound(const RfcwModel& model, const CoarseGraining& cg, const MesoscopicChain& meso,
                          const std::vector<std::size_t>& b) {
    StateSet target(cg.lattice_size);
    for (auto p : b) target.insert(p);
    double best = INFINITY;
    for (std::size_t x = 0; x < cg.lattice_size; ++x) {
        if (target.contains(x)) continue;
        best = std::min(best, escape_probability(meso.chain, StateSet(cg.lattice_size, {x}), target));
    }
    const double n = model.spins();
    return std::exp(-4 * model.beta() * cg.eps * (2 * n + 1)) * best / static_cast<double>(cg.lattice_size);
}

RhoCertificate rho_certificate(const RfcwModel& model, const Landscape& land) {
    if (land.minima.size() < 2) throw DomainError("certificate needs at least two minima");
    const auto micro = model.micro_chain();
    const auto meso = mesoscopic_chain(model, land.cg);
    std::vector<StateSet> sets;
    std::vector<std::size_t> all_points;
    for (const auto& m : land.minima) {
        sets.push_back(fiber(model, land.cg, m));
        all_points.insert(all_points.end(), m.begin(), m.end());
    }
    StateSet all(micro.size());
    for (const auto& s : sets) all = all | s;
    RhoCertificate out;
    double worst = 0;
    for (const auto& s : sets) worst = std::max(worst, escape_probability(micro, s, all.minus(s)));
    out.numerator = static_cast<double>(sets.size()) * worst;
    out.denominator_lower = escape_lower_bound(model, land.cg, meso, all_points);
    out.rho_upper = out.numerator / out.denominator_lower;
    return out;
}

}  // namespace metastab
