#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace adkit {

/// 64-bit FNV-1a over raw bytes. Stable across platforms and runs; used for
/// replay-store keys and per-clip seed derivation.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// splitmix64 finalizer. Decorrelates small consecutive seeds before they
/// reach an engine or a single-bit draw.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// mt19937_64 behind an explicit bounded mapping. The standard engine's
/// sequence is portable; std::uniform_int_distribution is not, so sampling
/// goes through below() to keep selections byte-identical everywhere.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, n). Plain modulo; the bias is ~n/2^64 and irrelevant at
    // demonstration-pool scale, determinism is what matters here.
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(next() % static_cast<std::uint64_t>(n));
    }

    bool coin() { return (next() & 1ull) != 0; }

private:
    std::mt19937_64 engine_;
};

}  // namespace adkit
