#pragma once

#include <cstdint>
#include <random>

namespace riccdiff {

// Purpose tags keep streams for different roles of the same path disjoint.
enum class StreamTag : std::uint64_t {
    MatrixNoise = 1,
    VechNoise = 2,
    InverseNoise = 3,
    Eigenvalue = 4,
    Signal = 5,
    Ensemble = 6,
    Initial = 7,
    ErrorProcess = 8,
    Auxiliary = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index, StreamTag tag) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL));
    return h;
}

/// Gaussian source for one path; the state depends only on the derived seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t master, std::uint64_t index, StreamTag tag) : engine_(stream_seed(master, index, tag)) {}

    double normal() { return gauss_(engine_); }
    double uniform() { return unif_(engine_); }
    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace riccdiff
