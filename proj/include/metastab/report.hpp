#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metastab/chain.hpp"
#include "metastab/metastability.hpp"

namespace metastab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

// File form of a chain: {"states": [...], "edges": [[x, y, p], ...],
// "mu": [...], "time": "discrete" | "continuous"}. Probabilities may be JSON
// numbers or decimal strings; both parse to the nearest double.
struct ChainSpec {
    std::vector<std::string> states;
    std::vector<Transition> edges;
    std::optional<std::vector<double>> mu;
    TimeKind time = TimeKind::discrete;

    bool operator==(const ChainSpec&) const;
};

ChainSpec parse_chain_spec(const Json& j);
ChainSpec load_chain_spec(const std::string& path);
// Decimal strings are written with the shortest representation that reads back exactly.
Json to_json(const ChainSpec& spec);
ChainSpec spec_of(const ReversibleChain& chain);
ReversibleChain build_chain(const ChainSpec& spec);

std::string format_double(double v);
double parse_double(const std::string& text, const std::string& where);
// Json number when finite, otherwise "inf", "-inf" or "nan".
Json number(double v);
Json number_list(const Vector& v);

// Every reported quantity carries its provenance mode.
Json exact(const Json& value);
Json bound(const Json& value, const std::string& side);  // side: "upper" or "lower"
Json monte_carlo(double value, double sigma, std::size_t samples);

// Comma separated state names; an empty name list is an error.
StateSet parse_states(const ReversibleChain& chain, const std::string& text);
Json state_names(const ReversibleChain& chain, const StateSet& s);
// {"sets": [[names...], ...]} or a bare array of name arrays.
SetFamily parse_sets(const ReversibleChain& chain, const Json& j);
SetFamily load_sets(const ReversibleChain& chain, const std::string& path);

Json read_json_file(const std::string& path);

}  // namespace metastab
