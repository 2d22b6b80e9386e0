#pragma once
// Shared plumbing: deterministic RNG, seed mixing, checked-mode guard.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace dreamlab {

// SplitMix64 finalizer. Used to derive independent sub-seeds from a base
// seed without correlating the resulting mt19937_64 streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream));
}

// Wrapper around mt19937_64 with explicit, platform-stable draw rules.
// std::uniform_real_distribution and friends are implementation-defined;
// everything that must be bit-reproducible draws through this class.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // avoid log(0)
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Draw an index from an unnormalized non-negative weight vector by
    // inverse CDF walk. Deterministic given the engine state.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Checked mode turns on NaN/Inf validation in tensor construction.
// Tests enable it; sweep runs leave it off.
inline bool& checked_mode() {
    static thread_local bool on = false;
    return on;
}

struct CheckedModeGuard {
    bool prev;
    explicit CheckedModeGuard(bool on) : prev(checked_mode()) { checked_mode() = on; }
    ~CheckedModeGuard() { checked_mode() = prev; }
};

}  // namespace dreamlab
