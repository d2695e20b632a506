#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sparj {

/// Seedable Mersenne-Twister stream with the handful of draws the sampler
/// and the system generators need. Copies are independent replicas of the
/// current stream position.
class Rng {
public:
    using engine_type = std::mt19937_64;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        double u = 0.0;
        do {
            u = std::generate_canonical<double, 64>(engine_);
        } while (u <= 0.0);
        return u;
    }

    double uniform(double low, double high) { return low + (high - low) * uniform(); }

    double normal() { return normal_(engine_); }

    /// Laplace(location, scale) by inverse CDF.
    double laplace(double location, double scale)
    {
        const double u = uniform() - 0.5;
        const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
        return u < 0.0 ? location - magnitude : location + magnitude;
    }

    /// Uniform integer in [low, high].
    std::int64_t uniform_int(std::int64_t low, std::int64_t high)
    {
        return std::uniform_int_distribution<std::int64_t>(low, high)(engine_);
    }

    engine_type& engine() { return engine_; }

private:
    engine_type engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for stream `index` under `master`. Depends only on the pair, so adding
/// streams never perturbs existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Seed for a named sub-stream (e.g. "data", "chain") of a run.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t purpose)
{
    return mix64(derive_seed(master, index) ^ mix64(purpose * 0xd1b54a32d192ed03ULL));
}

} // namespace sparj
