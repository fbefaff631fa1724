#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace floe {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: format/config/io -> 3,
// numeric -> 4. Anything thrown by CLI11 itself is a usage error (2).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Counter-based RNG. Every random draw in the project is a pure function of
// (seed, counter), so reruns with the same seed are bit-identical and
// independent streams never interact.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (0x9E3779B97F4A7C15ull + b + (a << 6) + (a >> 2)));
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }
inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) { return mix(mix(a, b, c), d); }

// Tag for deriving purpose-specific seed streams ("shuffle", "eps", ...).
inline uint64_t seed_stream(uint64_t seed, const char* tag) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const char* p = tag; *p; ++p) h = (h ^ static_cast<uint8_t>(*p)) * 0x100000001b3ull;
    return mix(seed, h);
}

// Uniform in [0,1).
inline double uniform01(uint64_t seed, uint64_t counter) {
    return static_cast<double>(splitmix64(mix(seed, counter)) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; one value per counter.
inline double gaussian(uint64_t seed, uint64_t counter) {
    const double u1 = 1.0 - uniform01(seed, 2 * counter);      // (0,1]
    const double u2 = uniform01(seed, 2 * counter + 1);        // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Mean-one gamma speckle with the given number of looks (sum of L exponentials / L).
inline double gamma_speckle(uint64_t seed, uint64_t counter, int looks) {
    double acc = 0.0;
    for (int i = 0; i < looks; ++i) {
        const double u = 1.0 - uniform01(mix(seed, static_cast<uint64_t>(i) + 101), counter);
        acc += -std::log(u);
    }
    return acc / static_cast<double>(looks);
}

// ---------------------------------------------------------------------------
// FNV-1a, used for determinism checks over artifact bytes.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
    return h;
}

// ---------------------------------------------------------------------------
// Worker pool for data-parallel loops. Partitioning is static, so results do
// not depend on the worker count; each index is processed by exactly one
// thread with identical arithmetic.
// ---------------------------------------------------------------------------

int worker_count();          // FLOEFORMER_THREADS override, else hardware
void set_worker_count(int);  // CLI flag hook; <=0 restores the default

// Runs fn(begin, end) over a static partition of [0, n). work_per_item is a
// rough operation count per index; loops too small to amortize the pool
// handoff run inline. Nested calls always run inline.
void parallel_for(int64_t n, int64_t work_per_item, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace floe
