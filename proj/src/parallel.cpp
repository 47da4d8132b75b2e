#include "metastab/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace metastab {

namespace {
std::atomic<unsigned> forced{0};
}

void set_thread_count(unsigned n) { forced = n; }

unsigned thread_count() {
    if (const unsigned f = forced.load(); f > 0) return f;
    if (const char* env = std::getenv("METASTAB_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace metastab
