#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace unroll {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for an independent stream identified by (master, tags...). Streams
/// never depend on execution order, so parallel and serial runs agree.
inline std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t h = mix64(master);
    for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags)
{
    return Rng(stream_seed(master, tags));
}

/// Vector of i.i.d. N(0, stddev²) draws.
inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n, double stddev = 1.0)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = stddev * normal(rng);
    return v;
}

// Stream tags used across modules.
namespace stream {
inline constexpr std::uint64_t kInitWeights = 1;
inline constexpr std::uint64_t kTrainSample = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kEvalInit = 4;
inline constexpr std::uint64_t kOodShift = 5;
inline constexpr std::uint64_t kLayerNoise = 6;
inline constexpr std::uint64_t kDictionary = 7;
inline constexpr std::uint64_t kSignals = 8;
inline constexpr std::uint64_t kSplits = 9;
inline constexpr std::uint64_t kGradCheck = 10;
} // namespace stream

} // namespace unroll
