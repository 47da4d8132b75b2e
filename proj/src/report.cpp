#include "metastab/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "metastab/errors.hpp"

namespace metastab {

bool ChainSpec::operator==(const ChainSpec& o) const {
    if (states != o.states || mu != o.mu || time != o.time || edges.size() != o.edges.size()) return false;
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (edges[k].from != o.edges[k].from || edges[k].to != o.edges[k].to || edges[k].p != o.edges[k].p) return false;
    return true;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& where) {
    double v = 0;
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw InvalidInput(where + ": \"" + text + "\" is not a number");
    return v;
}

Json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

Json number_list(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(number(v[k]));
    return out;
}

Json exact(const Json& value) { return Json{{"mode", "exact"}, {"value", value}}; }

Json bound(const Json& value, const std::string& side) {
    return Json{{"mode", "bound"}, {"side", side}, {"value", value}};
}

Json monte_carlo(double value, double sigma, std::size_t samples) {
    return Json{{"mode", "mc"}, {"value", number(value)}, {"sigma", number(sigma)}, {"samples", samples}};
}

namespace {

double read_probability(const Json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_double(j.get<std::string>(), where);
    throw InvalidInput(where + ": expected a number or decimal string");
}

std::string read_name(const Json& j, const std::string& where) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw InvalidInput(where + ": expected a state id");
}

}  // namespace

ChainSpec parse_chain_spec(const Json& j) {
    if (!j.is_object()) throw InvalidInput("/: chain spec must be an object");
    ChainSpec spec;
    if (!j.contains("states") || !j["states"].is_array()) throw InvalidInput("/states: missing or not an array");
    for (std::size_t k = 0; k < j["states"].size(); ++k)
        spec.states.push_back(read_name(j["states"][k], "/states/" + std::to_string(k)));
    if (!j.contains("edges") || !j["edges"].is_array()) throw InvalidInput("/edges: missing or not an array");
    const std::set<std::string> known(spec.states.begin(), spec.states.end());
    auto endpoint = [&](const Json& v, const std::string& where) {
        auto name = read_name(v, where);
        if (!known.count(name)) throw InvalidInput(where + ": unknown state id \"" + name + "\"");
        return name;
    };
    for (std::size_t k = 0; k < j["edges"].size(); ++k) {
        const auto& e = j["edges"][k];
        const std::string where = "/edges/" + std::to_string(k);
        if (!e.is_array() || e.size() != 3) throw InvalidInput(where + ": expected [from, to, p]");
        spec.edges.push_back({endpoint(e[0], where + "/0"), endpoint(e[1], where + "/1"), read_probability(e[2], where + "/2")});
    }
    if (j.contains("mu")) {
        if (!j["mu"].is_array()) throw InvalidInput("/mu: expected an array");
        std::vector<double> mu;
        for (std::size_t k = 0; k < j["mu"].size(); ++k) mu.push_back(read_probability(j["mu"][k], "/mu/" + std::to_string(k)));
        spec.mu = std::move(mu);
    }
    if (j.contains("time")) {
        if (!j["time"].is_string()) throw InvalidInput("/time: expected \"discrete\" or \"continuous\"");
        try {
            spec.time = time_kind_from_string(j["time"].get<std::string>());
        } catch (const Error& e) {
            throw InvalidInput(std::string("/time: ") + e.what());
        }
    }
    return spec;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(path + ": " + e.what());
    }
}

ChainSpec load_chain_spec(const std::string& path) { return parse_chain_spec(read_json_file(path)); }

Json to_json(const ChainSpec& spec) {
    Json j;
    j["states"] = spec.states;
    Json edges = Json::array();
    for (const auto& e : spec.edges) edges.push_back(Json::array({e.from, e.to, format_double(e.p)}));
    j["edges"] = edges;
    if (spec.mu) {
        Json mu = Json::array();
        for (double v : *spec.mu) mu.push_back(format_double(v));
        j["mu"] = mu;
    }
    j["time"] = to_string(spec.time);
    return j;
}

ChainSpec spec_of(const ReversibleChain& chain) {
    ChainSpec spec;
    spec.states = chain.names();
    spec.time = chain.time();
    for (std::size_t x = 0; x < chain.size(); ++x)
        for (SparseRowMatrix::InnerIterator it(chain.jumps(), static_cast<Eigen::Index>(x)); it; ++it)
            spec.edges.push_back({chain.names()[x], chain.names()[static_cast<std::size_t>(it.col())], it.value()});
    spec.mu = std::vector<double>(chain.mu().begin(), chain.mu().end());
    return spec;
}

ReversibleChain build_chain(const ChainSpec& spec) { return ReversibleChain(spec.states, spec.edges, spec.mu, spec.time); }

StateSet parse_states(const ReversibleChain& chain, const std::string& text) {
    StateSet s(chain.size());
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        s.insert(chain.index(item));
    }
    if (s.empty()) throw EmptySet("state list \"" + text + "\" is empty");
    return s;
}

Json state_names(const ReversibleChain& chain, const StateSet& s) {
    Json out = Json::array();
    for (auto x : s.indices()) out.push_back(chain.names()[x]);
    return out;
}

SetFamily parse_sets(const ReversibleChain& chain, const Json& j) {
    const Json& arr = j.is_object() && j.contains("sets") ? j["sets"] : j;
    if (!arr.is_array() || arr.empty()) throw InvalidInput("/sets: expected a nonempty array of state lists");
    SetFamily out;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string where = "/sets/" + std::to_string(k);
        if (!arr[k].is_array()) throw InvalidInput(where + ": expected an array of state ids");
        StateSet s(chain.size());
        for (std::size_t m = 0; m < arr[k].size(); ++m) {
            const auto name = read_name(arr[k][m], where + "/" + std::to_string(m));
            try {
                s.insert(chain.index(name));
            } catch (const Error&) {
                throw InvalidInput(where + "/" + std::to_string(m) + ": unknown state \"" + name + "\"");
            }
        }
        out.push_back(std::move(s));
    }
    validate_family(chain, out);
    return out;
}

SetFamily load_sets(const ReversibleChain& chain, const std::string& path) { return parse_sets(chain, read_json_file(path)); }

}  // namespace metastab
