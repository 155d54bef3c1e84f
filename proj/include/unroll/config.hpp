#pragma once

// Flat `key = value` experiment configuration shared by every CLI command.

#include "unroll/data.hpp"
#include "unroll/training.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace unroll {

struct GenConfig {
    ProblemKind kind = ProblemKind::Lasso;
    Index p = 32;
    Index d = 64;
    std::size_t n = 2000;
    std::size_t sparsity = 8;
    double noise_std = 0.05;
    double alpha = 0.5;
    std::uint32_t oracle_iters = 5000;
    double oracle_tol = 1e-8;
    SplitFractions fractions;
};

struct GradCheckConfig {
    std::size_t instances = 20;
    std::size_t coords = 64;
    std::size_t batch = 4;
    double step = 1e-5;
    double threshold = 1e-4;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GenConfig gen;
    TrainConfig train;
    GradCheckConfig gradcheck;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
KeyValues parse_key_values(std::string_view text);

/// Applies settings in order. Unknown keys and malformed values are all
/// collected and reported together in one ConfigError.
void apply_settings(ExperimentConfig& config, const KeyValues& values);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Every recognised key.
std::vector<std::string> config_keys();

/// The full effective configuration in file syntax.
std::string to_text(const ExperimentConfig& config);

/// Builds the optimizee spec for generation (dictionary from the seed).
ProblemSpec make_generation_spec(const GenConfig& gen, std::uint64_t seed);

} // namespace unroll
