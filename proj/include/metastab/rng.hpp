#pragma once

#include <cstdint>
#include <limits>

namespace metastab {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Purpose tags for the coupling and sampling streams.
enum class Stream : std::uint64_t {
    field = 1,
    site,
    spin,
    partner,
    coupled,
    gate,
    gate_downgrade,
    independent_sigma,
    independent_varsigma,
    start,
    optimizer,
    tail,
    test,
};

// Counter-based generator: every (seed, run, step, purpose) key selects its own
// SplitMix64 sequence, so results do not depend on evaluation order.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t run, std::uint64_t step, Stream purpose) {
        std::uint64_t k = splitmix64(seed);
        k = splitmix64(k ^ run);
        k = splitmix64(k ^ step);
        state_ = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) {
        // rejection keeps the draw exactly uniform
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = (*this)();
        } while (r >= limit);
        return r % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

}  // namespace metastab
