#pragma once

// Synthetic datasets: Gaussian dictionaries, sparse-code signals and oracle
// labels, with a bit-exact binary format.

#include "unroll/optimizee.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace unroll {

struct LabeledSample {
    Vector x;
    Vector y_star;
    double oracle_residual = 0.0;
    std::uint32_t oracle_iters = 0;
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

const char* to_string(Split split);

struct GenMetadata {
    std::uint64_t seed = 0;
    std::uint32_t sparsity = 0;
    double noise_std = 0.0;
    std::uint32_t oracle_iters = 0; // budget K
    double oracle_tol = 0.0;
};

struct Dataset {
    ProblemSpec spec;
    std::vector<LabeledSample> samples;
    std::array<std::vector<std::uint32_t>, 3> splits; // train, validation, test
    GenMetadata gen;

    const std::vector<std::uint32_t>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }

    /// Samples whose oracle residual exceeds the declared tolerance.
    std::size_t unconverged_count() const;
};

struct Dictionary {
    Matrix mat;
    double nu = 0.0;
};

/// p×d matrix of i.i.d. N(0,1) entries with nu = 1.01·λ_max(DᵀD). Requires d > p ≥ 1.
Dictionary gen_dictionary(Index p, Index d, std::uint64_t seed);

/// x = D·c + N(0, noise_std²I) with c having `sparsity` N(0,1) nonzeros at
/// uniformly chosen positions.
std::vector<Vector> gen_signals(const ProblemSpec& spec, std::size_t n, std::size_t sparsity,
                                double noise_std, std::uint64_t seed);

struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

/// Labels every signal with the oracle for spec.kind (ISTA with budget
/// meta.oracle_iters / tol meta.oracle_tol, or the least-squares solve) and
/// assigns splits by a seeded shuffle.
Dataset build_dataset(const ProblemSpec& spec, std::vector<Vector> signals, const GenMetadata& meta,
                      const SplitFractions& fractions);

/// Labels a single signal with the dataset's oracle.
LabeledSample label_signal(const ProblemSpec& spec, Vector x, int budget, double tol);

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Throws std::invalid_argument unless the splits are disjoint and cover all samples.
void validate_splits(const Dataset& data);

} // namespace unroll
