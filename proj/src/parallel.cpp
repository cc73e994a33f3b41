#include "riccdiff/parallel.hpp"

#include <cstdlib>
#include <string>

namespace riccdiff {

namespace {

int configured_threads = 0;

}  // namespace

int default_thread_count() {
    if (configured_threads > 0) return configured_threads;
    if (const char* env = std::getenv("RICCDIFF_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_default_thread_count(int n) { configured_threads = n > 0 ? n : 0; }

}  // namespace riccdiff
