#ifndef MGDP_RNG_HPP
#define MGDP_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace mgdp {

// splitmix64, used to derive independent stream seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/**
 * Deterministic random stream. mt19937_64 is fully specified by the
 * standard, and all conversions below are hand-rolled, so a given
 * (seed, stream name) pair yields the same draws on every platform.
 */
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent stream derived from a master seed and a label.
    static Rng stream(std::uint64_t master_seed, std::string_view label, std::uint64_t index = 0)
    {
        std::uint64_t s = splitmix64(master_seed ^ fnv1a64(label));
        s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
        return Rng(s);
    }

    // Uniform on the open interval (0, 1).
    double uniform01()
    {
        const std::uint64_t bits = engine_() >> 11;             // 53 random bits
        return static_cast<double>(bits) * 0x1p-53 + 0x1p-54;   // in (0, 1)
    }

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n)
    {
        // Rejection sampling keeps the distribution exact and deterministic.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do
        {
            v = engine_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform on [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    std::mt19937_64 engine_;
};

} // namespace mgdp

#endif // MGDP_RNG_HPP
