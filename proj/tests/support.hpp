#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "metastab/chain.hpp"

namespace testing {

inline double rel_diff(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

// mu = (1/4, 1/2, 1/4); p(0,1) = p(2,1) = 1/2, p(1,0) = p(1,2) = 1/4
inline metastab::ReversibleChain path3() {
    using metastab::Transition;
    std::vector<Transition> edges{{"0", "1", 0.5}, {"1", "0", 0.25}, {"1", "2", 0.25}, {"2", "1", 0.5}};
    return metastab::ReversibleChain({"0", "1", "2"}, edges, std::nullopt, metastab::TimeKind::discrete);
}

inline metastab::StateSet set_of(std::size_t n, std::initializer_list<std::size_t> xs) {
    return metastab::StateSet(n, xs);
}

}  // namespace testing
