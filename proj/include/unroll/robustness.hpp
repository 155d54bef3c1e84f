#pragma once

// Out-of-distribution and per-layer perturbation harnesses.

#include "unroll/eval.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace unroll {

struct LabeledModel {
    std::string label;
    ModelParams params;
};

/// Pooled standard deviation of every signal entry in the dataset.
double signal_std(const Dataset& data);

/// Shifts x̃ = x + N(0, p²I) for every sample of `split` and re-solves its
/// label with the dataset's oracle budget. Other samples are copied as is,
/// so sample ids (and hence evaluation y0 draws) stay aligned.
Dataset make_ood_dataset(const Dataset& data, double p, std::uint64_t seed, Split split = Split::Test);

struct OodRow {
    double p = 0.0;          // perturbation as a multiple of signal_std
    std::string model;
    MetricsReport metrics;   // against the re-solved labels
    Vector slack_mean;       // per-layer mean slack on the shifted data (l = 1..L)
};

struct OodReport {
    double x_std = 0.0;
    std::vector<OodRow> rows; // p-major, models in input order
};

/// Evaluates every model on the test split shifted by each p·signal_std.
OodReport ood_sweep(const std::vector<LabeledModel>& models, const Dataset& data,
                    const std::vector<double>& p_list, const ConstraintKind& ck,
                    const EvalOptions& options, std::uint64_t seed);

void export_ood(const OodReport& report, const std::filesystem::path& path);

struct NoiseSweepRow {
    double sigma_hat = 0.0;
    std::string model;
    MetricsReport metrics; // with gradient-proportional noise injected at inference
};

struct NoiseSweepReport {
    std::vector<NoiseSweepRow> rows;
};

/// Runs each model on the test split with GradProportional layer noise at
/// every σ̂ in the list. σ̂ = 0 reproduces the clean evaluation bit for bit.
NoiseSweepReport layer_noise_sweep(const std::vector<LabeledModel>& models, const Dataset& data,
                                   const std::vector<double>& sigma_list, const ConstraintKind& ck,
                                   const EvalOptions& options, std::uint64_t seed);

void export_noise_sweep(const NoiseSweepReport& report, const std::filesystem::path& path);

} // namespace unroll
