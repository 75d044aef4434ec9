#ifndef DYNTRACE_RNG_HPP
#define DYNTRACE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace dyntrace {

namespace detail {

// splitmix64 finalizer; used both as a bit mixer and as a cheap PRNG step.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t id) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + (id << 6) + (id >> 2));
    std::uint64_t z = splitmix64(s);
    return z ^ id;
}

} // namespace detail

/// Deterministic random stream with hierarchical substream derivation.
///
/// Substreams are derived from the stream's seed (not its draw position),
/// so `substream(a, b)` yields the same generator no matter how many values
/// were drawn from the parent. Gaussian variates use an explicit Box-Muller
/// transform to keep byte-identical output across standard libraries.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(bootstrap(seed)) {}

    template <typename... Ids>
    RngStream substream(Ids... ids) const {
        std::uint64_t s = seed_;
        ((s = detail::mix(s, static_cast<std::uint64_t>(ids))), ...);
        return RngStream(s);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    double rademacher() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::mt19937_64 bootstrap(std::uint64_t seed) {
        // Warm the 64-bit state through splitmix so that nearby seeds
        // (0, 1, 2, ...) do not produce correlated initial outputs.
        std::uint64_t s = seed;
        return std::mt19937_64(detail::splitmix64(s));
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace dyntrace

#endif // DYNTRACE_RNG_HPP
