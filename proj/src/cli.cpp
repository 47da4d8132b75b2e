#include "metastab/cli.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "metastab/coupling.hpp"
#include "metastab/errors.hpp"
#include "metastab/generators.hpp"
#include "metastab/metastability.hpp"
#include "metastab/oracle.hpp"
#include "metastab/orlicz.hpp"
#include "metastab/parallel.hpp"
#include "metastab/potential.hpp"
#include "metastab/report.hpp"
#include "metastab/rfcw.hpp"
#include "metastab/rng.hpp"

namespace metastab::cli {

namespace {

using Index = Eigen::Index;

struct Outcome {
    Json body = Json::object();
    int code = kOk;
    std::string mode = "exact";
};

struct Globals {
    std::string seed_text;
    std::optional<std::uint64_t> seed;
    double tol = 1e-10;
};

std::uint64_t require_seed(const Globals& g, const std::string& command) {
    if (!g.seed) throw InvalidInput("--seed: required for " + command);
    return *g.seed;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

double parse_k(const std::string& text) {
    // "e2" stands for e^2
    if (!text.empty() && text[0] == 'e') {
        const double power = text.size() == 1 ? 1.0 : parse_double(text.substr(1), "--K");
        return std::exp(power);
    }
    return parse_double(text, "--K");
}

Json per_state(const ReversibleChain& chain, const Vector& v, const StateSet* only = nullptr) {
    Json out = Json::object();
    for (std::size_t x = 0; x < chain.size(); ++x)
        if (!only || only->contains(x)) out[chain.names()[x]] = number(v[static_cast<Index>(x)]);
    return out;
}

Json value_or_bound(double v, bool is_exact, const std::string& side) {
    return is_exact ? exact(number(v)) : bound(number(v), side);
}

// ---- capacity ---------------------------------------------------------------

Outcome cmd_capacity(const std::string& chain_path, const std::string& a_text, const std::string& b_text) {
    const auto chain = build_chain(load_chain_spec(chain_path));
    const auto a = parse_states(chain, a_text), b = parse_states(chain, b_text);
    const auto sol = equilibrium_potential(chain, a, b);
    Outcome o;
    o.body["A"] = state_names(chain, a);
    o.body["B"] = state_names(chain, b);
    o.body["capacity"] = exact(number(sol.capacity));
    o.body["capacity_energy"] = exact(number(sol.capacity_energy));
    o.body["capacity_reverse"] = exact(number(capacity(chain, b, a)));
    o.body["potential"] = exact(per_state(chain, sol.potential));
    o.body["equilibrium_measure"] = exact(per_state(chain, sol.escape, &a));
    o.body["last_exit"] = exact(per_state(chain, sol.last_exit, &a));
    o.body["mean_hitting_time"] = exact(number(mean_hitting_time(chain, sol.last_exit, b)));
    o.body["max_residual"] = number(sol.max_residual);
    return o;
}

// ---- orlicz -----------------------------------------------------------------

Outcome cmd_orlicz(const std::string& chain_path, const std::string& pair_name, const std::string& k_text,
                   const std::string& b_text, const std::string& f_text) {
    const auto chain = build_chain(load_chain_spec(chain_path));
    const auto pair = young_pair_by_name(pair_name);
    const double k = parse_k(k_text);
    if (!(k > 0)) throw InvalidInput("--K: must be positive");
    const auto b = parse_states(chain, b_text);
    const auto cc = measure_capacity_constant(chain, chain.mu(), b, pair, k);
    Outcome o;
    o.body["pair"] = pair.name;
    o.body["K"] = number(k);
    o.body["B"] = state_names(chain, b);
    o.body["capacity_constant"] = value_or_bound(cc.value, cc.exact, "lower");
    o.body["argmax"] = state_names(chain, cc.argmax);
    o.body["argmax_indicator_norm"] = exact(number(indicator_norm(mass(chain.mu(), cc.argmax), pair, k)));
    o.body["argmax_capacity"] = exact(number(capacity(chain, cc.argmax, b)));
    o.body["sets_evaluated"] = cc.sets_evaluated;
    if (!cc.exact) o.mode = "heuristic";
    if (!f_text.empty()) {
        const auto vals = split(f_text);
        if (vals.size() != chain.size()) throw InvalidInput("--f: needs one value per state");
        Vector f(static_cast<Index>(chain.size()));
        for (std::size_t x = 0; x < vals.size(); ++x) f[static_cast<Index>(x)] = parse_double(vals[x], "--f");
        try {
            const auto norm = orlicz_norm(chain.mu(), f, pair, k);
            o.body["orlicz_norm"] = exact(number(norm.value));
            o.body["orlicz_lambda"] = number(norm.lambda);
        } catch (const Unbounded&) {
            o.body["orlicz_norm"] = exact("inf");
        }
    }
    return o;
}

// ---- capineq ----------------------------------------------------------------

Outcome cmd_capineq(std::size_t samples, std::size_t max_states, std::uint64_t seed, double tol) {
    if (samples == 0) throw InvalidInput("--samples: must be positive");
    if (max_states < 3 || max_states > 64) throw InvalidInput("--max-states: must lie in [3, 64]");
    struct Slot {
        double lhs = 0, rhs = 0;
        std::size_t states = 0;
    };
    std::vector<Slot> slots(samples);
    parallel_for(samples, [&](std::size_t r) {
        CounterRng rng(seed, r, 1, Stream::start);
        const std::size_t n = 3 + rng.below(max_states - 2);
        const auto time = rng.bernoulli(0.5) ? TimeKind::continuous : TimeKind::discrete;
        const auto chain = random_reversible_chain(n, seed, r, 0.3, time);
        StateSet b(n);
        for (std::size_t x = 0; x < n; ++x)
            if (rng.bernoulli(0.3)) b.insert(x);
        if (b.empty()) b.insert(rng.below(n));
        if (b.count() == n) b.erase(rng.below(n));
        Vector f = Vector::Zero(static_cast<Index>(n));
        for (std::size_t x = 0; x < n; ++x) {
            if (b.contains(x)) continue;
            const double u = rng.uniform();
            // a third of the values are drawn from a small set to produce level ties
            f[static_cast<Index>(x)] = u < 0.33 ? static_cast<double>(rng.below(3)) - 1.0 : 6 * rng.uniform() - 3;
        }
        const auto ci = capacitary_integral(chain, f, b);
        slots[r] = {ci.lhs, ci.rhs, n};
    });
    std::size_t violations = 0, worst = 0;
    double max_ratio = 0;
    for (std::size_t r = 0; r < samples; ++r) {
        if (slots[r].lhs > slots[r].rhs + tol) ++violations;
        if (slots[r].rhs > 0 && slots[r].lhs / slots[r].rhs > max_ratio) {
            max_ratio = slots[r].lhs / slots[r].rhs;
            worst = r;
        }
    }
    Outcome o;
    o.body["instances"] = samples;
    o.body["violations"] = violations;
    o.body["max_ratio"] = exact(number(max_ratio));
    o.body["worst_instance"] = worst;
    o.body["worst_lhs"] = exact(number(slots[worst].lhs));
    o.body["worst_rhs"] = exact(number(slots[worst].rhs));
    o.body["holds"] = violations == 0;
    if (violations) o.code = kInequalityFailed;
    return o;
}

// ---- oracle -----------------------------------------------------------------

Outcome cmd_oracle(const std::string& chain_path, const std::string& what, const Globals& g, std::size_t starts) {
    const auto chain = build_chain(load_chain_spec(chain_path));
    Outcome o;
    std::optional<SpectralReport> spectral;
    auto cpi = [&]() -> const SpectralReport& {
        if (!spectral) spectral = exact_cpi(chain);
        return *spectral;
    };
    const auto items = split(what);
    if (items.empty()) throw InvalidInput("--what: expected cpi, clsi or cheeger");
    for (const auto& item : items) {
        if (item == "cpi") {
            const auto& s = cpi();
            Json spec = Json::array();
            for (Index k = 0; k < std::min<Index>(s.generator_spectrum.size(), 10); ++k)
                spec.push_back(number(s.generator_spectrum[k]));
            o.body["cpi"] = {{"c_pi", exact(number(s.c_pi))},
                             {"c_pi_eigen", exact(number(s.c_pi_eigen))},
                             {"gap", exact(number(s.gap))},
                             {"spectrum_head", spec}};
        } else if (item == "clsi") {
            const auto seed = require_seed(g, "oracle --what clsi");
            const auto est = estimate_clsi(chain, starts, seed);
            const double twice = 2 * cpi().c_pi;
            o.body["clsi"] = {{"c_lsi", bound(number(est.lower_bound), "lower")},
                              {"twice_c_pi", exact(number(twice))},
                              {"starts", est.starts},
                              {"iterations", est.iterations}};
            o.mode = "heuristic";
        } else if (item == "cheeger") {
            const auto ch = cheeger_constant(chain);
            const double c = cpi().c_pi;
            const bool holds = ch.value <= c * (1 + 1e-12) && c <= 8 * ch.value * ch.value * (1 + 1e-12);
            o.body["cheeger"] = {{"value", exact(number(ch.value))},
                                 {"argmax", state_names(chain, ch.argmax)},
                                 {"c_pi", exact(number(c))},
                                 {"sandwich_holds", holds}};
            if (!holds) o.code = kInequalityFailed;
        } else {
            throw InvalidInput("--what: unknown item \"" + item + "\"");
        }
    }
    return o;
}

// ---- analyze ----------------------------------------------------------------

Outcome cmd_analyze(const std::string& chain_path, const std::string& sets_path, bool exact_mode, const Globals& g,
                    std::size_t starts) {
    const auto chain = build_chain(load_chain_spec(chain_path));
    const auto sets = load_sets(chain, sets_path);
    // Without a seed the optimiser runs only from its deterministic start.
    const std::size_t multistarts = g.seed ? starts : 1;
    const std::uint64_t seed = g.seed.value_or(0);
    Outcome o;
    o.mode = "heuristic";

    const auto rho = rho_metastability(chain, sets);
    Json rj;
    rj["rho"] = value_or_bound(rho.rho, rho.exact, "upper");
    rj["numerator"] = exact(number(rho.numerator));
    rj["denominator"] = value_or_bound(rho.denominator, rho.exact, "lower");
    rj["denominator_empty"] = rho.denominator_empty;
    rj["argmin"] = state_names(chain, rho.argmin);
    o.body["rho"] = rj;

    const auto valleys = metastable_partition(chain, sets, rho.rho);
    Json parts = Json::array();
    for (std::size_t i = 0; i < sets.size(); ++i)
        parts.push_back({{"set", state_names(chain, sets[i])},
                         {"valley", state_names(chain, valleys.valleys[i])},
                         {"block", state_names(chain, valleys.partition[i])},
                         {"set_mass", exact(number(mass(chain.mu(), sets[i])))},
                         {"block_mass", exact(number(mass(chain.mu(), valleys.partition[i])))}});
    Json contested = Json::array();
    for (std::size_t x = 0; x < chain.size(); ++x)
        if (valleys.contested[x]) contested.push_back(chain.names()[x]);
    o.body["partition"] = {{"blocks", parts},
                           {"contested", contested},
                           {"overlap_certified", valleys.overlap_certified},
                           {"overlap_worst", number(valleys.overlap_worst)}};

    const auto constants = constants_report(chain, sets, valleys.partition, multistarts, seed);
    Json lp = Json::array(), ll = Json::array();
    for (double v : constants.local_pi) lp.push_back(number(v));
    for (double v : constants.local_lsi) ll.push_back(number(v));
    o.body["constants"] = {{"c_mass", exact(number(constants.c_mass))},
                           {"local_pi", exact(lp)},
                           {"local_lsi", bound(ll, "lower")},
                           {"c_pi_family", exact(number(constants.c_pi_family))},
                           {"c_lsi_family", bound(number(constants.c_lsi_family), "lower")},
                           {"eta", exact(number(constants.eta))}};

    Json exits = Json::array();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        try {
            const auto me = mean_exit_asymptotics(chain, sets, valleys.partition, i, rho.rho);
            Json e{{"set", i},
                   {"main_term", exact(number(me.main_term))},
                   {"exact", exact(number(me.exact))},
                   {"relative_error", number(me.relative_error)},
                   {"delta", number(me.delta)},
                   {"c_ratio", number(me.c_ratio)}};
            e["error_scale"] = me.error_scale ? number(*me.error_scale) : Json(nullptr);
            exits.push_back(e);
        } catch (const DomainError&) {
            // deepest set: nothing to exit to
        }
    }
    o.body["mean_exit"] = exits;

    if (sets.size() >= 2) {
        const auto est = pi_lsi_estimates(chain, sets, valleys.partition, &constants, rho.rho);
        Json ej{{"pi_lower", number(est.pi_lower)},
                {"pi_upper", number(est.pi_upper)},
                {"lsi_lower", number(est.lsi_lower)},
                {"lsi_upper", number(est.lsi_upper)}};
        ej["pi_point"] = est.pi_point ? number(*est.pi_point) : Json(nullptr);
        ej["lsi_point"] = est.lsi_point ? number(*est.lsi_point) : Json(nullptr);
        ej["pi_error_factor"] = est.pi_error_factor ? number(*est.pi_error_factor) : Json(nullptr);
        ej["lsi_error_factor"] = est.lsi_error_factor ? number(*est.lsi_error_factor) : Json(nullptr);
        o.body["estimates"] = {{"mode", "estimate"}, {"value", ej}};
    }

    if (exact_mode) {
        const auto s = exact_cpi(chain);
        const auto lsi = estimate_clsi(chain, multistarts, seed);
        o.body["oracle"] = {{"c_pi", exact(number(s.c_pi))}, {"c_lsi", bound(number(lsi.lower_bound), "lower")}};
    }
    return o;
}

// ---- rfcw -------------------------------------------------------------------

Json lattice_points(const CoarseGraining& cg, const std::vector<std::size_t>& pts, int n_spins) {
    Json out = Json::array();
    for (auto p : pts) {
        Json x = Json::array();
        for (double v : cg.coordinates(p, n_spins)) x.push_back(number(v));
        out.push_back(x);
    }
    return out;
}

struct TrendRow {
    double beta = 0;
    std::size_t minima = 0;
    std::optional<double> rho;
    bool rho_exact = false;
    std::optional<double> gap;
};

TrendRow trend_row(const RfcwModel& model, int blocks) {
    TrendRow row;
    row.beta = model.beta();
    const auto cg = coarse_grain(model, blocks);
    const auto land = free_energy_landscape(model, cg);
    row.minima = land.minima.size();
    const int n = model.spins();
    if (n <= 10) {
        const auto micro = model.micro_chain();
        if (land.minima.size() >= 2) {
            SetFamily fam;
            for (const auto& m : land.minima) fam.push_back(fiber(model, cg, m));
            const auto r = rho_metastability(micro, fam);
            row.rho = r.rho;
            row.rho_exact = r.exact;
        }
        row.gap = exact_cpi(micro).gap;
    } else if (n <= RfcwModel::kMaxMaterialised && land.minima.size() >= 2) {
        row.rho = rho_certificate(model, land).rho_upper;
    }
    return row;
}

Outcome cmd_rfcw(int n_spins, double beta, const std::string& field, int blocks, bool materialise,
                 const std::string& trend, const Globals& g) {
    const auto spec = parse_field_spec(field);
    std::uint64_t seed = 0;
    if (spec.kind == FieldSpec::Kind::uniform || spec.kind == FieldSpec::Kind::discrete)
        seed = require_seed(g, "random fields");
    const auto model = RfcwModel::build(n_spins, beta, spec, seed);
    const auto cg = coarse_grain(model, blocks);
    const auto land = free_energy_landscape(model, cg);
    Outcome o;

    Json h = Json::array();
    for (double v : model.field()) h.push_back(number(v));
    Json members = Json::array();
    for (const auto& m : cg.members) members.push_back(m);
    Json hbar = Json::array();
    for (double v : cg.hbar) hbar.push_back(number(v));
    o.body["model"] = {{"N", n_spins}, {"beta", number(beta)}, {"h_inf", number(model.h_inf())}, {"field", h}};
    o.body["coarse_graining"] = {{"blocks", blocks}, {"eps", number(cg.eps)}, {"members", members}, {"hbar", hbar},
                                 {"lattice_size", cg.lattice_size}};

    Json columns = Json::array();
    for (int l = 0; l < blocks; ++l) columns.push_back("x" + std::to_string(l + 1));
    columns.push_back("F");
    Json rows = Json::array();
    for (std::size_t p = 0; p < cg.lattice_size; ++p) {
        Json r = Json::array();
        for (double v : cg.coordinates(p, n_spins)) r.push_back(number(v));
        r.push_back(number(land.f[static_cast<Index>(p)]));
        rows.push_back(r);
    }
    o.body["landscape"] = {{"mode", "exact"}, {"columns", columns}, {"rows", rows}};

    Json minima = Json::array();
    for (std::size_t k = 0; k < land.minima.size(); ++k) {
        const auto& cp = land.critical[k];
        Json x = Json::array();
        for (double v : cp.x) x.push_back(number(v));
        minima.push_back({{"points", lattice_points(cg, land.minima[k], n_spins)},
                          {"F", exact(number(land.f[static_cast<Index>(land.minima[k].front())]))},
                          {"critical",
                           {{"z", number(cp.z)},
                            {"x", x},
                            {"residual", number(cp.residual)},
                            {"free_energy", number(cp.free_energy)},
                            {"closed_form", number(cp.closed_form)}}}});
    }
    Json depths = Json::array();
    for (double d : land.depths) depths.push_back(number(d));
    o.body["minima"] = minima;
    o.body["order"] = land.order;
    o.body["depths"] = exact(depths);
    o.body["depths_monotone"] = land.monotone;

    if (materialise) {
        if (n_spins > RfcwModel::kMaxMaterialised) throw TooLarge("--materialize: needs N <= 14");
        const auto micro = model.micro_chain();
        const auto meso = mesoscopic_chain(model, cg);
        const auto barred = barred_chain(model, cg);
        o.body["barred"] = {{"log_mu_ratio_max", number(barred.log_mu_ratio_max)},
                            {"log_mu_bound", number(barred.log_mu_bound)},
                            {"log_p_ratio_max", number(barred.log_p_ratio_max)},
                            {"log_p_bound", number(barred.log_p_bound)},
                            {"lumpability_residual", number(barred.lumpability_residual)},
                            {"certified", barred.certified}};
        if (!barred.certified) o.code = kInequalityFailed;
        if (land.minima.size() >= 2) {
            std::vector<StateSet> fibers;
            for (const auto& m : land.minima) fibers.push_back(fiber(model, cg, m));
            Json caps = Json::array();
            bool dominated = true;
            for (std::size_t i = 0; i < fibers.size(); ++i)
                for (std::size_t j = i + 1; j < fibers.size(); ++j) {
                    StateSet mi(cg.lattice_size), mj(cg.lattice_size);
                    for (auto p : land.minima[i]) mi.insert(p);
                    for (auto p : land.minima[j]) mj.insert(p);
                    const double c_micro = capacity(micro, fibers[i], fibers[j]);
                    const double c_meso = capacity(meso.chain, mi, mj);
                    const bool ok = c_micro <= c_meso * (1 + 1e-10);
                    dominated = dominated && ok;
                    caps.push_back({{"pair", {i, j}},
                                    {"micro", exact(number(c_micro))},
                                    {"meso", exact(number(c_meso))},
                                    {"dominated", ok}});
                }
            o.body["capacities"] = caps;
            if (!dominated) o.code = kInequalityFailed;
            const auto cert = rho_certificate(model, land);
            o.body["rho_certificate"] = {{"numerator", exact(number(cert.numerator))},
                                         {"denominator", bound(number(cert.denominator_lower), "lower")},
                                         {"rho", bound(number(cert.rho_upper), "upper")}};
            if (n_spins <= 10) {
                const auto r = rho_metastability(micro, fibers);
                o.body["rho"] = value_or_bound(r.rho, r.exact, "upper");
            }
        }
    }

    if (!trend.empty()) {
        Json tr = Json::array();
        for (const auto& b : split(trend)) {
            const double bt = parse_double(b, "--trend");
            const auto row = trend_row(RfcwModel(n_spins, bt, model.field(), model.h_inf()), blocks);
            Json r{{"beta", number(row.beta)}, {"minima", row.minima}};
            r["rho"] = row.rho ? value_or_bound(*row.rho, row.rho_exact, "upper") : Json(nullptr);
            r["gap"] = row.gap ? exact(number(*row.gap)) : Json(nullptr);
            tr.push_back(r);
        }
        o.body["trend"] = tr;
    }
    return o;
}

// ---- couple -----------------------------------------------------------------

struct CoupleArgs {
    int n_spins = 8;
    double beta = 1;
    int blocks = 2;
    std::size_t runs = 10000;
    std::string field = "discrete:-0.2,0.2";
    std::string gates_text, s_text;
    std::size_t tail_samples = 10000;
    std::size_t hitting_runs = 2000;
    std::size_t horizon = 1'000'000;
    std::string trace;
};

Outcome cmd_couple(const CoupleArgs& a, const Globals& g) {
    const auto seed = require_seed(g, "couple");
    const auto model = RfcwModel::build(a.n_spins, a.beta, parse_field_spec(a.field), seed);
    const auto cg = coarse_grain(model, a.blocks);
    const auto land = free_energy_landscape(model, cg);
    const auto& m1 = land.minima[land.order[0]];
    const auto counts = cg.counts(m1.front());

    Config sigma0 = 0, varsigma0 = 0;
    for (int l = 0; l < cg.blocks; ++l) {
        const auto& mem = cg.members[static_cast<std::size_t>(l)];
        const int k = counts[static_cast<std::size_t>(l)];
        for (int q = 0; q < k; ++q) {
            sigma0 |= Config{1} << mem[static_cast<std::size_t>(q)];
            varsigma0 |= Config{1} << mem[mem.size() - 1 - static_cast<std::size_t>(q)];
        }
    }

    const double alpha = flip_floor(model);
    const double s = a.s_text.empty() ? 2 / alpha : parse_double(a.s_text, "--s");
    if (!(s > 1)) throw InvalidInput("--s: must exceed 1");
    const std::size_t gates = a.gates_text.empty() ? static_cast<std::size_t>(std::ceil(s * a.n_spins))
                                                    : static_cast<std::size_t>(parse_double(a.gates_text, "--gates"));

    std::vector<std::size_t> others;
    for (std::size_t k = 1; k < land.order.size(); ++k)
        for (auto p : land.minima[land.order[k]]) others.push_back(p);

    CouplingOptions opt;
    opt.horizon = a.horizon;
    opt.gates = gates;
    opt.seed = seed;
    if (!others.empty()) {
        opt.target.assign(cg.lattice_size, 0);
        for (auto p : others) opt.target[p] = 1;
    }
    const auto ex = coupling_experiment(model, cg, sigma0, varsigma0, opt, a.runs);

    Outcome o;
    o.mode = "mc";
    o.body["model"] = {{"N", a.n_spins}, {"beta", number(a.beta)}, {"field", a.field}, {"blocks", a.blocks},
                       {"eps", number(cg.eps)}};
    o.body["start"] = {{"sigma", model.config_name(sigma0)}, {"varsigma", model.config_name(varsigma0)}};
    const bool a_ok = std::abs(ex.prob_a - ex.prob_a_expected) <= 3 * ex.prob_a_sigma + 1e-12;
    auto fit = [](const GoodnessOfFit& f) {
        return Json{{"min_p_value", number(f.min_p_value)}, {"states_tested", f.states_tested},
                    {"threshold", number(f.threshold)}, {"pass", f.pass}};
    };
    o.body["coupling"] = {{"runs", ex.runs},
                          {"gates", ex.gates},
                          {"delta", exact(number(ex.delta))},
                          {"prob_a", monte_carlo(ex.prob_a, ex.prob_a_sigma, ex.runs)},
                          {"prob_a_expected", exact(number(ex.prob_a_expected))},
                          {"prob_a_within_3sigma", a_ok},
                          {"prob_a_effective", monte_carlo(ex.prob_a_effective, ex.prob_a_sigma, ex.runs)},
                          {"events_b", ex.events_b},
                          {"containment_checked", ex.containment_checked},
                          {"containment_violations", ex.containment_violations},
                          {"synchrony_violations", ex.synchrony_violations},
                          {"downgrades", ex.downgrades},
                          {"runs_with_downgrade", ex.runs_with_downgrade},
                          {"merged", ex.merged},
                          {"mean_attempts", number(ex.mean_attempts)},
                          {"steps", ex.steps},
                          {"sigma_fit", fit(ex.sigma_fit)},
                          {"varsigma_fit", fit(ex.varsigma_fit)}};
    bool ok = a_ok && ex.containment_violations == 0 && ex.synchrony_violations == 0 && ex.sigma_fit.pass &&
              ex.varsigma_fit.pass;

    const auto tail = tail_bound_check(model, s, a.tail_samples, seed, sigma0);
    o.body["tail_bound"] = {{"alpha", exact(number(tail.alpha))},
                            {"s", number(tail.s)},
                            {"rate", exact(number(tail.rate))},
                            {"bound", exact(number(tail.bound))},
                            {"empirical", monte_carlo(tail.empirical, tail.sigma, tail.samples)},
                            {"domination_violations", tail.domination_violations},
                            {"holds", tail.holds}};
    ok = ok && tail.holds && tail.domination_violations == 0;

    if (!others.empty()) {
        const auto hb = hitting_lower_bound_check(model, cg, m1, others, s, a.hitting_runs, seed);
        o.body["hitting_bound"] = {{"factor", exact(number(hb.factor))},
                                   {"tail", exact(number(hb.tail))},
                                   {"min_margin", hb.exact ? exact(number(hb.min_margin))
                                                           : monte_carlo(hb.min_margin, hb.min_margin_sigma, a.hitting_runs)},
                                   {"pairs", hb.pairs},
                                   {"max_fiber_spread", number(hb.max_fiber_spread)},
                                   {"holds", hb.holds}};
        ok = ok && hb.holds;
        if (a.n_spins <= RfcwModel::kMaxMaterialised) {
            const auto& m2 = land.minima[land.order[1]];
            const auto eta = eta_from_coupling(model, cg, m1, m2, s);
            o.body["regularity"] = {{"variance", exact(number(eta.variance))},
                                    {"eta", exact(number(eta.eta))},
                                    {"bound", bound(number(eta.bound), "upper")},
                                    {"slack", number(eta.slack)},
                                    {"single_fiber", eta.single_fiber},
                                    {"holds", eta.holds}};
            ok = ok && eta.holds;
        }
    }

    if (!a.trace.empty()) {
        auto topt = opt;
        topt.record_paths = true;
        const auto tr = run_coupling(model, cg, sigma0, varsigma0, topt);
        std::ofstream csv(a.trace);
        if (!csv) throw InvalidInput("--trace: cannot write " + a.trace);
        csv << "t,sigma,varsigma\n";
        for (std::size_t t = 0; t < tr.sigma.size(); ++t)
            csv << t << ',' << model.config_name(tr.sigma[t]) << ',' << model.config_name(tr.varsigma[t]) << '\n';
    }
    if (!ok) o.code = kInequalityFailed;
    return o;
}

// ---- export -----------------------------------------------------------------

std::string csv_cell(const Json& v) {
    if (v.is_null()) return "";
    if (v.is_object() && v.contains("value")) return csv_cell(v["value"]);
    if (v.is_number()) return format_double(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

std::string export_csv(const Json& report, const std::string& what) {
    if (report.is_null() || (report.is_object() && report.empty())) throw InvalidInput("--report: report is empty");
    std::ostringstream csv;
    if (what == "landscape") {
        if (!report.contains("landscape")) throw InvalidInput("/landscape: report has no landscape table");
        const auto& land = report["landscape"];
        bool first = true;
        for (const auto& c : land.at("columns")) {
            csv << (first ? "" : ",") << c.get<std::string>();
            first = false;
        }
        csv << '\n';
        for (const auto& row : land.at("rows")) {
            for (std::size_t k = 0; k < row.size(); ++k) csv << (k ? "," : "") << csv_cell(row[k]);
            csv << '\n';
        }
    } else if (what == "trend") {
        if (!report.contains("trend")) throw InvalidInput("/trend: report has no trend table");
        csv << "beta,rho,gap\n";
        for (const auto& row : report["trend"])
            csv << csv_cell(row.at("beta")) << ',' << csv_cell(row.at("rho")) << ',' << csv_cell(row.at("gap")) << '\n';
    } else {
        throw InvalidInput("--what: unknown export key \"" + what + "\"");
    }
    return csv.str();
}

std::vector<std::string> recorded_arguments(const std::vector<std::string>& args) {
    // worker count and output path do not change the report
    std::vector<std::string> out;
    for (std::size_t k = 0; k < args.size(); ++k) {
        const auto& a = args[k];
        if (a == "--threads" || a == "--output") {
            ++k;
            continue;
        }
        if (a.rfind("--threads=", 0) == 0 || a.rfind("--output=", 0) == 0) continue;
        out.push_back(a);
    }
    return out;
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message) {
    Json e{{"kind", kind}, {"message", message}};
    if (!message.empty() && message[0] == '/') e["field"] = message.substr(0, message.find(':'));
    else if (message.rfind("--", 0) == 0) e["field"] = message.substr(0, message.find(':'));
    err << Json{{"error", e}}.dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Potential theory and metastability diagnostics for reversible Markov chains", "metastab"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    Globals g;
    unsigned threads = 0;
    std::string output;
    app.add_option("--threads", threads, "worker threads (default: METASTAB_THREADS or all cores)");
    app.add_option("--output", output, "write the JSON report to this file");
    app.add_option("--seed", g.seed_text, "seed for every randomised step");
    app.add_option("--tol", g.tol, "inequality tolerance");

    std::string chain_path, a_text, b_text, sets_path, pair = "ent", k_text = "1", f_text, what = "cpi", field = "zero",
                trend, report_path, out_path, export_what;
    bool exact_mode = false, materialise = false;
    std::size_t samples = 1000, max_states = 12, starts = kDefaultMultistarts;
    int n_spins = 8, blocks = 1;
    double beta = 1;
    CoupleArgs ca;

    auto* cap = app.add_subcommand("capacity", "equilibrium potential, capacity and last-exit distribution");
    cap->add_option("--chain", chain_path)->required();
    cap->add_option("--A", a_text)->required();
    cap->add_option("--B", b_text)->required();

    auto* orl = app.add_subcommand("orlicz", "capacitary Orlicz constant for a Young pair");
    orl->add_option("--chain", chain_path)->required();
    orl->add_option("--pair", pair, "linear, ent or power:<p>");
    orl->add_option("--K", k_text, "budget K; e<k> means exp(k)");
    orl->add_option("--B", b_text)->required();
    orl->add_option("--f", f_text, "comma separated values of f for its Orlicz norm");

    auto* cin = app.add_subcommand("capineq", "capacitary inequality on random instances");
    cin->add_option("--samples", samples);
    cin->add_option("--max-states", max_states);

    auto* orc = app.add_subcommand("oracle", "exact spectral, LSI and Cheeger oracles");
    orc->add_option("--chain", chain_path)->required();
    orc->add_option("--what", what, "comma list of cpi, clsi, cheeger");
    orc->add_option("--starts", starts);

    auto* ana = app.add_subcommand("analyze", "metastable structure and constant estimates");
    ana->add_option("--chain", chain_path)->required();
    ana->add_option("--sets", sets_path)->required();
    ana->add_flag("--exact", exact_mode, "also run the spectral and LSI oracles");
    ana->add_option("--starts", starts);

    auto* rf = app.add_subcommand("rfcw", "random field Curie-Weiss landscape and certificates");
    rf->add_option("--N", n_spins)->required();
    rf->add_option("--beta", beta)->required();
    rf->add_option("--field", field, "zero, uniform:<h>, discrete:<a>,<b>,... or values:<h1>,...");
    rf->add_option("--n", blocks, "number of field intervals");
    rf->add_flag("--materialize", materialise, "build the microscopic chain (N <= 14)");
    rf->add_option("--trend", trend, "comma separated beta values");

    auto* cp = app.add_subcommand("couple", "coupling construction and regularity bounds");
    cp->add_option("--N", ca.n_spins);
    cp->add_option("--beta", ca.beta);
    cp->add_option("--n", ca.blocks);
    cp->add_option("--runs", ca.runs);
    cp->add_option("--field", ca.field);
    cp->add_option("--gates", ca.gates_text, "number M of gate variables (default ceil(s N))");
    cp->add_option("--s", ca.s_text, "tail parameter (default 2 / alpha)");
    cp->add_option("--tail-samples", ca.tail_samples);
    cp->add_option("--hitting-runs", ca.hitting_runs);
    cp->add_option("--horizon", ca.horizon);
    cp->add_option("--trace", ca.trace, "CSV dump of the first run");

    auto* ex = app.add_subcommand("export", "CSV plot data from a report");
    ex->add_option("--report", report_path)->required();
    ex->add_option("--what", export_what, "landscape or trend")->required();
    ex->add_option("--out", out_path);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        write_error(err, "InvalidInput", e.what());
        return kInvalid;
    }

    try {
        if (threads > 0) set_thread_count(threads);
        if (!g.seed_text.empty()) {
            std::uint64_t v = 0;
            const char* end = g.seed_text.data() + g.seed_text.size();
            const auto res = std::from_chars(g.seed_text.data(), end, v);
            if (res.ec != std::errc() || res.ptr != end) throw InvalidInput("--seed: expected an unsigned integer");
            g.seed = v;
        }
        if (!(g.tol >= 16 * std::numeric_limits<double>::epsilon())) throw InvalidInput("--tol: below 16 machine epsilons");

        if (ex->parsed()) {
            const auto csv = export_csv(read_json_file(report_path), export_what);
            if (out_path.empty()) {
                out << csv;
            } else {
                std::ofstream f(out_path);
                if (!f) throw InvalidInput("--out: cannot write " + out_path);
                f << csv;
            }
            return kOk;
        }

        Outcome o;
        std::string command;
        if (cap->parsed()) {
            command = "capacity";
            o = cmd_capacity(chain_path, a_text, b_text);
        } else if (orl->parsed()) {
            command = "orlicz";
            o = cmd_orlicz(chain_path, pair, k_text, b_text, f_text);
        } else if (cin->parsed()) {
            command = "capineq";
            o = cmd_capineq(samples, max_states, require_seed(g, "capineq"), g.tol);
        } else if (orc->parsed()) {
            command = "oracle";
            o = cmd_oracle(chain_path, what, g, starts);
        } else if (ana->parsed()) {
            command = "analyze";
            o = cmd_analyze(chain_path, sets_path, exact_mode, g, starts);
        } else if (rf->parsed()) {
            command = "rfcw";
            o = cmd_rfcw(n_spins, beta, field, blocks, materialise, trend, g);
        } else {
            command = "couple";
            o = cmd_couple(ca, g);
        }

        Json report;
        report["provenance"] = {{"tool", "metastab"},
                                {"version", kVersion},
                                {"command", command},
                                {"arguments", recorded_arguments(args)},
                                {"seed", g.seed ? Json(*g.seed) : Json(nullptr)},
                                {"mode", o.mode},
                                {"tolerances", {{"inequality", g.tol}, {"residual", 1e-10}, {"detailed_balance", 1e-10}}}};
        for (auto it = o.body.begin(); it != o.body.end(); ++it) report[it.key()] = it.value();
        const std::string text = report.dump(2) + "\n";
        if (output.empty()) {
            out << text;
        } else {
            std::ofstream f(output);
            if (!f) throw InvalidInput("--output: cannot write " + output);
            f << text;
        }
        return o.code;
    } catch (const Error& e) {
        write_error(err, e.kind(), e.what());
        return kInvalid;
    } catch (const std::exception& e) {
        write_error(err, "Internal", e.what());
        return kInvalid;
    }
}

}  // namespace metastab::cli
