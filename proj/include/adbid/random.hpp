#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace adbid {

/// What a random stream is used for. Streams for different purposes never
/// overlap, so one policy's decisions cannot shift another policy's noise.
enum class Purpose : std::uint64_t {
    Hob = 1,
    Conversion = 2,
    Context = 3,
    Instance = 4,
    Policy = 5,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

using Engine = std::mt19937_64;

/// Seedable family of independent streams. A stream is identified by
/// (trial, customer, round, purpose); its engine seed is a splitmix64 chain
/// over the master seed and the four keys.
class RandomSource
{
public:
    explicit RandomSource(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t stream_seed(std::uint64_t trial, std::uint64_t customer, std::uint64_t round,
                              Purpose purpose) const
    {
        std::uint64_t z = detail::splitmix64(seed_);
        z = detail::splitmix64(z ^ trial);
        z = detail::splitmix64(z ^ customer);
        z = detail::splitmix64(z ^ round);
        z = detail::splitmix64(z ^ static_cast<std::uint64_t>(purpose));
        return z;
    }

    Engine stream(std::uint64_t trial, std::uint64_t customer, std::uint64_t round, Purpose purpose) const
    {
        return Engine(stream_seed(trial, customer, round, purpose));
    }

private:
    std::uint64_t seed_;
};

/// Uniform on the open interval (0, 1), 53-bit resolution.
inline double uniform_open(Engine& eng)
{
    double u;
    do {
        u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    } while (u <= 0.0);
    return u;
}

/// Standard normal variate by Box-Muller on two fresh uniforms (no caching,
/// so each call consumes exactly two engine outputs).
inline double standard_normal(Engine& eng)
{
    const double u1 = uniform_open(eng);
    const double u2 = uniform_open(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Poisson variate. Rates up to 500 use inversion from a single uniform, which
/// couples draws across different rates on the same stream; larger rates fall
/// back to the standard-library sampler.
inline long poisson(double rate, Engine& eng)
{
    if (!(rate > 0))
        return 0;
    if (rate > 500.0) {
        std::poisson_distribution<long> dist(rate);
        return dist(eng);
    }
    const double u = uniform_open(eng);
    double p = std::exp(-rate);
    double cdf = p;
    long k = 0;
    while (u > cdf) {
        ++k;
        p *= rate / static_cast<double>(k);
        cdf += p;
        if (p == 0.0 && cdf < u) // exhausted double precision in the far tail
            break;
    }
    return k;
}

} // namespace adbid
