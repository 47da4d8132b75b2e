#include "metastab/coupling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "metastab/errors.hpp"
#include "metastab/metastability.hpp"
#include "metastab/parallel.hpp"
#include "metastab/potential.hpp"
#include "metastab/rng.hpp"

namespace metastab {

namespace {

std::array<SpinLaw, 2> optimal_pair(const SpinLaw& a, const SpinLaw& b) {
    std::array<SpinLaw, 2> q{};
    for (int s = 0; s < 2; ++s) q[s][s] = std::min(a[s], b[s]);
    // the remaining mass of a sits on the side where a exceeds b
    q[0][1] = std::max(0.0, a[0] - b[0]);
    q[1][0] = std::max(0.0, a[1] - b[1]);
    return q;
}

void check_law(const SpinLaw& nu) {
    if (nu[0] < 0 || nu[1] < 0 || std::abs(nu[0] + nu[1] - 1) > 1e-12)
        throw InvalidInput("a law on {-1, +1} needs nonnegative weights summing to 1");
}

}  // namespace

double max_domination(const SpinLaw& nu, const SpinLaw& nu_prime) {
    double d = 1;
    for (int s = 0; s < 2; ++s)
        if (nu[s] > 0) d = std::min(d, nu_prime[s] / nu[s]);
    return d;
}

TwoPointCoupling optimal_two_point_coupling(const SpinLaw& nu, const SpinLaw& nu_prime, double delta) {
    check_law(nu);
    check_law(nu_prime);
    if (!(delta >= 0 && delta < 1)) throw DomainError("delta must lie in [0, 1)");
    for (int s = 0; s < 2; ++s)
        if (delta * nu[s] > nu_prime[s] + 1e-15)
            throw DominationFailure("delta nu exceeds nu' at s = " + std::to_string(2 * s - 1));
    TwoPointCoupling out;
    out.delta = delta;
    SpinLaw rest{};
    for (int s = 0; s < 2; ++s) rest[s] = std::max(0.0, (nu_prime[s] - delta * nu[s]) / (1 - delta));
    const double z = rest[0] + rest[1];
    rest[0] /= z;
    rest[1] /= z;
    out.gate_off = optimal_pair(nu, rest);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            out.joint[a][b] = (a == b ? delta * nu[a] : 0.0) + (1 - delta) * out.gate_off[a][b];
    out.disagreement = out.joint[0][1] + out.joint[1][0];
    out.total_variation = 0.5 * (std::abs(nu[0] - nu_prime[0]) + std::abs(nu[1] - nu_prime[1]));
    return out;
}

CouplingTrace run_coupling(const RfcwModel& model, const CoarseGraining& cg, Config sigma0, Config varsigma0,
                           const CouplingOptions& opt) {
    const int n = model.spins();
    if (cg.project(sigma0) != cg.project(varsigma0))
        throw InvalidInput("coupled configurations must share the mesoscopic value");
    if (!opt.target.empty() && opt.target.size() != cg.lattice_size)
        throw InvalidInput("target mask has the wrong lattice size");
    const double delta = std::exp(-4 * model.beta() * cg.eps);
    const std::uint64_t seed = opt.seed, run = opt.run;

    CouplingTrace tr;
    tr.gates.resize(opt.gates);
    for (std::size_t k = 0; k < opt.gates; ++k) tr.gates[k] = CounterRng(seed, run, k, Stream::gate).bernoulli(delta);
    tr.effective_gates = tr.gates;
    tr.first_flip.assign(static_cast<std::size_t>(n), -1);

    Config sigma = sigma0, vs = varsigma0;
    int unflipped = n;
    auto in_target = [&](Config c) { return !opt.target.empty() && opt.target[cg.project(c)]; };
    if (in_target(sigma)) tr.hit_target = 0;
    if (sigma == vs) {
        tr.merged = true;
        tr.merged_time = 0;
    }
    if (opt.record_paths) {
        tr.sigma.push_back(sigma);
        tr.varsigma.push_back(vs);
    }

    std::vector<int> partners;
    for (std::size_t t = 0; t < opt.horizon; ++t) {
        const bool coupled = !tr.xi && tr.gates_used < opt.gates;
        const int i = static_cast<int>(CounterRng(seed, run, t, Stream::site).below(static_cast<std::uint64_t>(n)));
        const Config before = sigma;
        Config next_sigma = sigma, next_vs = vs;

        if (sigma == vs || (coupled && RfcwModel::spin(sigma, i) == RfcwModel::spin(vs, i))) {
            if (CounterRng(seed, run, t, Stream::spin).uniform() < model.flip_probability(sigma, i)) {
                next_sigma = RfcwModel::flip(sigma, i);
                next_vs = RfcwModel::flip(vs, i);
            }
        } else if (coupled) {
            const int s0 = RfcwModel::spin(sigma, i);
            partners.clear();
            for (int j : cg.members[static_cast<std::size_t>(cg.block_of[static_cast<std::size_t>(i)])])
                if (RfcwModel::spin(vs, j) != RfcwModel::spin(sigma, j) && RfcwModel::spin(vs, j) == s0)
                    partners.push_back(j);
            if (partners.empty()) throw std::logic_error("coupling partner set is empty");
            const int j = partners[CounterRng(seed, run, t, Stream::partner).below(partners.size())];
            const double p = model.flip_probability(sigma, i);
            const double q = model.flip_probability(vs, j);
            // laws of the decision "stay" (index 0) or "flip" (index 1)
            const SpinLaw nu{1 - p, p}, nu_prime{1 - q, q};
            const std::size_t k = tr.gates_used;
            double step_delta = delta;
            const double feasible = max_domination(nu, nu_prime);
            if (feasible < delta) {
                ++tr.downgrades;
                step_delta = feasible;
                if (!CounterRng(seed, run, k, Stream::gate_downgrade).bernoulli(feasible / delta))
                    tr.effective_gates[k] = 0;
            }
            CounterRng rng(seed, run, t, Stream::coupled);
            const int x = rng.uniform() < p ? 1 : 0;
            int y = x;
            if (!tr.effective_gates[k]) {
                const auto law = optimal_two_point_coupling(nu, nu_prime, step_delta).gate_off;
                const double row = law[x][0] + law[x][1];
                y = rng.uniform() * row < law[x][x] ? x : 1 - x;
                tr.xi = true;
                tr.xi_time = static_cast<long>(t);
            }
            ++tr.gates_used;
            if (x) next_sigma = RfcwModel::flip(sigma, i);
            if (y) next_vs = RfcwModel::flip(vs, j);
        } else {
            if (CounterRng(seed, run, t, Stream::spin).uniform() < model.flip_probability(sigma, i))
                next_sigma = RfcwModel::flip(sigma, i);
            CounterRng other(seed, run, t, Stream::independent_varsigma);
            const int j = static_cast<int>(other.below(static_cast<std::uint64_t>(n)));
            if (other.uniform() < model.flip_probability(vs, j)) next_vs = RfcwModel::flip(vs, j);
        }

        auto& first = tr.first_flip[static_cast<std::size_t>(i)];
        if (first < 0) {
            ++tr.attempts;
            if (next_sigma != before) {
                first = static_cast<long>(t);
                if (--unflipped == 0) {
                    tr.cover_time = static_cast<long>(t);
                    tr.aligned_at_cover = sigma == vs;
                }
            }
        }
        sigma = next_sigma;
        vs = next_vs;
        if (coupled && !tr.xi && cg.project(sigma) != cg.project(vs)) tr.synchrony_ok = false;
        if (tr.hit_target < 0 && in_target(sigma)) tr.hit_target = static_cast<long>(t + 1);
        if (!tr.merged && sigma == vs) {
            tr.merged = true;
            tr.merged_time = static_cast<long>(t + 1);
        }
        if (opt.record_paths) {
            tr.sigma.push_back(sigma);
            tr.varsigma.push_back(vs);
        }
        tr.steps = t + 1;
        if (opt.stop_at_cover && tr.cover_time >= 0) break;
    }

    tr.event_a_nominal = std::all_of(tr.gates.begin(), tr.gates.end(), [](char v) { return v != 0; });
    tr.event_a = std::all_of(tr.effective_gates.begin(), tr.effective_gates.end(), [](char v) { return v != 0; });
    tr.event_b = tr.cover_time >= 0 && (tr.hit_target < 0 || tr.cover_time <= tr.hit_target) && tr.attempts <= opt.gates;
    tr.containment_ok = !(tr.event_a && tr.event_b) || tr.aligned_at_cover;
    return tr;
}

TransitionTally::TransitionTally(int n_spins) : n_(n_spins) {
    if (n_spins < 1 || n_spins > 20) throw TooLarge("transition tallies need N <= 20");
    counts_.assign((std::size_t{1} << n_spins) * static_cast<std::size_t>(n_spins + 1), 0);
}

void TransitionTally::add(const std::vector<Config>& path) {
    for (std::size_t t = 1; t < path.size(); ++t) {
        const Config diff = path[t - 1] ^ path[t];
        int site = n_;
        if (diff != 0) {
            if (std::popcount(diff) != 1) throw std::logic_error("path makes a multi-spin move");
            site = std::countr_zero(diff);
        }
        ++counts_[path[t - 1] * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(site)];
        ++total_;
    }
}

void TransitionTally::merge(const TransitionTally& other) {
    if (other.n_ != n_) throw InvalidInput("tallies of different sizes");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    total_ += other.total_;
}

GoodnessOfFit chi_square_marginal(const RfcwModel& model, const TransitionTally& tally, double level,
                                  std::size_t min_visits) {
    const int n = model.spins();
    GoodnessOfFit out;
    std::vector<double> pvalues;
    for (std::size_t c = 0; c < (std::size_t{1} << n); ++c) {
        std::vector<std::pair<double, double>> cells;  // expected, observed
        std::uint64_t visits = 0;
        for (int i = 0; i <= n; ++i) visits += tally.count(static_cast<Config>(c), i);
        if (visits < min_visits) continue;
        double stay = 1;
        bool impossible = false;
        for (int i = 0; i <= n; ++i) {
            double prob;
            if (i < n) {
                prob = model.flip_probability(static_cast<Config>(c), i) / n;
                stay -= prob;
            } else {
                prob = std::max(0.0, stay);
            }
            const double obs = static_cast<double>(tally.count(static_cast<Config>(c), i));
            if (prob <= 1e-15) {
                if (obs > 0) impossible = true;
                continue;
            }
            cells.emplace_back(prob * static_cast<double>(visits), obs);
        }
        double p;
        if (impossible) {
            p = 0;
        } else {
            // pool cells with small expectation
            std::sort(cells.begin(), cells.end());
            std::vector<std::pair<double, double>> pooled;
            std::pair<double, double> acc{0, 0};
            for (const auto& cell : cells) {
                if (cell.first < 5 || acc.first > 0) {
                    acc.first += cell.first;
                    acc.second += cell.second;
                    if (acc.first >= 5) {
                        pooled.push_back(acc);
                        acc = {0, 0};
                    }
                } else {
                    pooled.push_back(cell);
                }
            }
            if (acc.first > 0) {
                if (pooled.empty()) {
                    pooled.push_back(acc);
                } else {
                    pooled.front().first += acc.first;
                    pooled.front().second += acc.second;
                }
            }
            if (pooled.size() < 2) continue;
            double stat = 0;
            for (const auto& [e, o] : pooled) stat += (o - e) * (o - e) / e;
            boost::math::chi_squared dist(static_cast<double>(pooled.size() - 1));
            p = boost::math::cdf(boost::math::complement(dist, stat));
        }
        pvalues.push_back(p);
    }
    out.states_tested = pvalues.size();
    out.threshold = out.states_tested ? level / static_cast<double>(out.states_tested) : level;
    for (double p : pvalues) out.min_p_value = std::min(out.min_p_value, p);
    out.pass = out.min_p_value >= out.threshold;
    return out;
}

CouplingExperiment coupling_experiment(const RfcwModel& model, const CoarseGraining& cg, Config sigma0, Config varsigma0,
                                       CouplingOptions options, std::size_t runs) {
    if (runs == 0) throw InvalidInput("need at least one run");
    options.record_paths = true;
    struct Chunk {
        std::size_t a = 0, a_eff = 0, b = 0, checked = 0, violations = 0, async = 0, downgrades = 0, downgraded_runs = 0,
                    merged = 0, attempts = 0, steps = 0;
        TransitionTally sigma, varsigma;
        explicit Chunk(int n) : sigma(n), varsigma(n) {}
    };
    const std::size_t chunks = std::min<std::size_t>(runs, std::max(1u, thread_count()));
    std::vector<Chunk> slots(chunks, Chunk(model.spins()));
    parallel_for(chunks, [&](std::size_t c) {
        auto& s = slots[c];
        for (std::size_t r = c; r < runs; r += chunks) {
            auto opt = options;
            opt.run = r;
            const auto tr = run_coupling(model, cg, sigma0, varsigma0, opt);
            s.a += tr.event_a_nominal;
            s.a_eff += tr.event_a;
            s.b += tr.event_b;
            if (tr.event_a && tr.event_b) ++s.checked;
            s.violations += !tr.containment_ok;
            s.async += !tr.synchrony_ok;
            s.downgrades += tr.downgrades;
            s.downgraded_runs += tr.downgrades > 0;
            s.merged += tr.merged;
            s.attempts += tr.attempts;
            s.steps += tr.steps;
            s.sigma.add(tr.sigma);
            s.varsigma.add(tr.varsigma);
        }
    });
    CouplingExperiment out;
    out.runs = runs;
    out.gates = options.gates;
    out.delta = std::exp(-4 * model.beta() * cg.eps);
    TransitionTally sig(model.spins()), var(model.spins());
    std::size_t a = 0, a_eff = 0, attempts = 0;
    for (const auto& s : slots) {
        a += s.a;
        a_eff += s.a_eff;
        out.events_b += s.b;
        out.containment_checked += s.checked;
        out.containment_violations += s.violations;
        out.synchrony_violations += s.async;
        out.downgrades += s.downgrades;
        out.runs_with_downgrade += s.downgraded_runs;
        out.merged += s.merged;
        attempts += s.attempts;
        out.steps += s.steps;
        sig.merge(s.sigma);
        var.merge(s.varsigma);
    }
    const double r = static_cast<double>(runs);
    out.prob_a = static_cast<double>(a) / r;
    out.prob_a_effective = static_cast<double>(a_eff) / r;
    out.prob_a_expected = std::pow(out.delta, static_cast<double>(options.gates));
    out.prob_a_sigma = std::sqrt(out.prob_a_expected * (1 - out.prob_a_expected) / r);
    out.mean_attempts = static_cast<double>(attempts) / r;
    out.sigma_fit = chi_square_marginal(model, sig);
    out.varsigma_fit = chi_square_marginal(model, var);
    return out;
}

double negative_binomial_rate(double alpha, double s) {
    if (!(alpha > 0 && alpha < 1)) throw DomainError("alpha must lie in (0, 1)");
    if (!(s > 1)) throw DomainError("s must exceed 1");
    return (s - 1) * std::log((s - 1) / (s * (1 - alpha))) - std::log(alpha * s);
}

double flip_floor(const RfcwModel& model) { return std::exp(-2 * model.beta() * (1 + model.h_inf())); }

TailBoundReport tail_bound_check(const RfcwModel& model, double s, std::size_t samples, std::uint64_t seed, Config start) {
    if (samples == 0) throw InvalidInput("need at least one sample");
    const int n = model.spins();
    TailBoundReport out;
    out.alpha = flip_floor(model);
    out.s = s;
    out.rate = negative_binomial_rate(out.alpha, s);
    out.bound = std::exp(-out.rate * n);
    out.samples = samples;
    struct Slot {
        std::size_t attempts = 0;
        bool exceeded = false, violated = false;
    };
    std::vector<Slot> slots(samples);
    parallel_for(samples, [&](std::size_t r) {
        std::vector<char> flipped(static_cast<std::size_t>(n), 0);
        int left = n, successes = 0;
        std::size_t relevant = 0, dominating = 0;
        Config sigma = start;
        for (std::size_t t = 0; left > 0; ++t) {
            const int i = static_cast<int>(CounterRng(seed, r, t, Stream::site).below(static_cast<std::uint64_t>(n)));
            const double u = CounterRng(seed, r, t, Stream::spin).uniform();
            const bool flips = u < model.flip_probability(sigma, i);
            if (!flipped[static_cast<std::size_t>(i)]) {
                ++relevant;
                if (u < out.alpha && ++successes == n) dominating = relevant;
                if (flips) {
                    flipped[static_cast<std::size_t>(i)] = 1;
                    --left;
                }
            }
            if (flips) sigma = RfcwModel::flip(sigma, i);
        }
        std::size_t k = relevant;
        while (successes < n) {
            ++k;
            if (CounterRng(seed, r, k, Stream::tail).uniform() < out.alpha && ++successes == n) dominating = k;
        }
        slots[r] = {relevant, static_cast<double>(relevant) > s * n, relevant > dominating};
    });
    std::size_t exceeded = 0, total = 0;
    for (const auto& sl : slots) {
        exceeded += sl.exceeded;
        out.domination_violations += sl.violated;
        total += sl.attempts;
    }
    out.empirical = static_cast<double>(exceeded) / static_cast<double>(samples);
    out.sigma = std::sqrt(out.empirical * (1 - out.empirical) / static_cast<double>(samples));
    out.mean_attempts = static_cast<double>(total) / static_cast<double>(samples);
    out.holds = out.empirical <= out.bound + 3 * out.sigma;
    return out;
}

namespace {

// Fraction of `runs` Glauber paths from c that reach B before A (times t >= 1).
double simulate_hitting(const RfcwModel& model, const CoarseGraining& cg, Config c, const std::vector<char>& a,
                        const std::vector<char>& b, std::size_t runs, std::uint64_t seed, std::uint64_t tag) {
    constexpr std::size_t kCap = 10'000'000;
    std::vector<char> hit(runs, 0);
    const int n = model.spins();
    parallel_for(runs, [&](std::size_t r) {
        Config sigma = c;
        for (std::size_t t = 0; t < kCap; ++t) {
            const std::uint64_t key = (tag << 32) ^ r;
            const int i = static_cast<int>(CounterRng(seed, key, t, Stream::site).below(static_cast<std::uint64_t>(n)));
            if (CounterRng(seed, key, t, Stream::spin).uniform() < model.flip_probability(sigma, i))
                sigma = RfcwModel::flip(sigma, i);
            const auto x = cg.project(sigma);
            if (b[x]) {
                hit[r] = 1;
                return;
            }
            if (a[x]) return;
        }
        throw SolverNotConverged("hitting simulation exceeded the step cap");
    });
    std::size_t k = 0;
    for (char h : hit) k += static_cast<std::size_t>(h);
    return static_cast<double>(k) / static_cast<double>(runs);
}

}  // namespace

HittingBoundReport hitting_lower_bound_check(const RfcwModel& model, const CoarseGraining& cg,
                                             const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                                             double s, std::size_t runs, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw EmptySet("mesoscopic sets must be nonempty");
    std::vector<char> ma(cg.lattice_size, 0), mb(cg.lattice_size, 0);
    for (auto x : a) ma.at(x) = 1;
    for (auto x : b) {
        if (ma.at(x)) throw OverlappingSets("mesoscopic sets intersect");
        mb[x] = 1;
    }
    const int n = model.spins();
    const double alpha = flip_floor(model);
    HittingBoundReport out;
    out.factor = std::exp(-4 * model.beta() * cg.eps * s * n);
    out.tail = std::exp(-negative_binomial_rate(alpha, s) * n);
    out.min_margin = INFINITY;
    const std::size_t size = std::size_t{1} << n;

    if (n <= 10) {
        out.exact = true;
        const auto micro = model.micro_chain();
        const auto fa = fiber(model, cg, a), fb = fiber(model, cg, b);
        const auto sol = equilibrium_potential(micro, fb, fa);
        std::vector<double> lo(cg.lattice_size, INFINITY), hi(cg.lattice_size, -INFINITY);
        std::vector<Config> arg_lo(cg.lattice_size, 0), arg_hi(cg.lattice_size, 0);
        std::vector<std::size_t> count(cg.lattice_size, 0);
        for (std::size_t c = 0; c < size; ++c) {
            const auto idx = static_cast<Eigen::Index>(c);
            double p = sol.potential[idx];
            if (fa.contains(c)) p = sol.escape_reverse[idx];
            if (fb.contains(c)) p = 1 - sol.escape[idx];
            const auto x = cg.project(static_cast<Config>(c));
            ++count[x];
            if (p < lo[x]) {
                lo[x] = p;
                arg_lo[x] = static_cast<Config>(c);
            }
            if (p > hi[x]) {
                hi[x] = p;
                arg_hi[x] = static_cast<Config>(c);
            }
        }
        for (std::size_t x = 0; x < cg.lattice_size; ++x) {
            out.pairs += count[x] * count[x];
            out.max_fiber_spread = std::max(out.max_fiber_spread, hi[x] - lo[x]);
            const double margin = lo[x] - out.factor * (hi[x] - out.tail);
            if (margin < out.min_margin) {
                out.min_margin = margin;
                out.worst_varsigma = arg_lo[x];
                out.worst_sigma = arg_hi[x];
            }
        }
        out.holds = out.min_margin >= -1e-12;
        return out;
    }

    if (n > 20) throw TooLarge("fiber enumeration is limited to N <= 20");
    if (runs == 0) throw InvalidInput("Monte Carlo mode needs runs > 0");
    std::vector<Config> first(cg.lattice_size, 0), last(cg.lattice_size, 0);
    std::vector<char> seen(cg.lattice_size, 0);
    for (std::size_t c = 0; c < size; ++c) {
        const auto x = cg.project(static_cast<Config>(c));
        if (!seen[x]) first[x] = static_cast<Config>(c);
        seen[x] = 1;
        last[x] = static_cast<Config>(c);
    }
    bool ok = true;
    for (std::size_t x = 0; x < cg.lattice_size; ++x) {
        if (first[x] == last[x]) continue;
        const double p1 = simulate_hitting(model, cg, first[x], ma, mb, runs, seed, 2 * x);
        const double p2 = simulate_hitting(model, cg, last[x], ma, mb, runs, seed, 2 * x + 1);
        const double v1 = p1 * (1 - p1) / static_cast<double>(runs), v2 = p2 * (1 - p2) / static_cast<double>(runs);
        out.pairs += 2;
        out.max_fiber_spread = std::max(out.max_fiber_spread, std::abs(p1 - p2));
        for (int dir = 0; dir < 2; ++dir) {
            const double lhs = dir ? p2 : p1, rhs = dir ? p1 : p2;
            const double sd = std::sqrt((dir ? v2 : v1) + out.factor * out.factor * (dir ? v1 : v2));
            const double margin = lhs - out.factor * (rhs - out.tail);
            if (margin < -3 * sd) ok = false;
            if (margin < out.min_margin) {
                out.min_margin = margin;
                out.min_margin_sigma = sd;
                out.worst_varsigma = dir ? last[x] : first[x];
                out.worst_sigma = dir ? first[x] : last[x];
            }
        }
    }
    if (out.pairs == 0) out.min_margin = 0;
    out.holds = ok;
    return out;
}

EtaCouplingReport eta_from_coupling(const RfcwModel& model, const CoarseGraining& cg, const std::vector<std::size_t>& a,
                                    const std::vector<std::size_t>& b, std::optional<double> s) {
    const auto micro = model.micro_chain();
    const auto fa = fiber(model, cg, a), fb = fiber(model, cg, b);
    const auto reg = eta_regularity(micro, fa, fb);
    EtaCouplingReport out;
    out.single_fiber = a.size() == 1;
    out.variance = reg.variance;
    out.capacity = reg.capacity;
    out.mass = mass(micro.mu(), fa);
    out.eta = reg.eta;
    const double alpha = flip_floor(model);
    const double tail_s = s.value_or(2 / alpha);
    const double n = model.spins();
    const double spread = 4 * model.beta() * cg.eps * tail_s * n;
    out.bound = std::expm1(spread) + out.mass / out.capacity * std::exp(spread - negative_binomial_rate(alpha, tail_s) * n);
    out.slack = out.bound - out.variance;
    out.holds = out.variance <= out.bound * (1 + 1e-12) + 1e-300;
    return out;
}

}  // namespace metastab
