#pragma once

// Per-layer diagnostics of trained unrolled optimizers. Evaluation never
// injects noise: the public entry points take no noise schedule.

#include "unroll/data.hpp"
#include "unroll/grad.hpp"

#include <filesystem>
#include <vector>

namespace unroll {

/// Per-layer statistics over l = 0..L (L+1 rows).
struct MetricsReport {
    Vector dist_mean;     // mean ‖y_l − y*‖
    Vector obj_mean;      // mean f(y_l; x)
    Vector gradnorm_mean; // Z_l = mean ‖∇f(y_l; x)‖ (min-norm subgradient for lasso)
    Vector l1_mean;       // mean ‖y_l‖₁
    Vector satisfaction;  // fraction of samples with slack_l ≤ 0; row 0 is 1 (no constraint)
    Vector zbest;         // min_{k≤l} Z_k
    std::size_t sample_count = 0;

    Matrix slacks;     // L × n per-sample slacks (column k ↔ sample_ids[k])
    Matrix l1_samples; // (L+1) × n per-sample ‖y_l‖₁
    std::vector<std::uint32_t> sample_ids;

    std::size_t layers() const { return static_cast<std::size_t>(dist_mean.size()) - 1; }
};

struct EvalOptions {
    std::uint64_t y0_seed = 0;
    double y0_std = 1.0;
};

/// Noise-free evaluation of `params` on one split.
MetricsReport layer_metrics(const ModelParams& params, const Dataset& data, Split split,
                            const ConstraintKind& ck, const EvalOptions& options);

/// Aggregates precomputed trajectories (one per sample, same order as `ids`).
MetricsReport summarize_trajectories(const std::vector<Trajectory>& trajectories,
                                     const std::vector<LabeledSample>& samples,
                                     const std::vector<std::uint32_t>& ids, const ProblemSpec& spec,
                                     const ConstraintKind& ck);

struct EnvelopeReport {
    bool pass = false;
    double delta_hat = 0.0; // 1 − min_l satisfaction_l
    double offset = 0.0;    // fitted c
    double tau = 0.10;
    Vector envelope;        // ((1−δ̂)(1−ε))^l·Z_0 + c(1+τ)
    std::vector<std::size_t> violations; // layers with Z_l above the envelope
};

/// Checks Z_l ≤ ((1−δ̂)(1−ε))^l·Z_0 + c(1+τ) at every layer, where
/// c = max(0, min_{l≥1}(Z_l − ((1−δ̂)(1−ε))^l·Z_0)) when `offset_fit` is set
/// and 0 otherwise.
EnvelopeReport rate_envelope_check(const MetricsReport& report, double epsilon, bool offset_fit = true,
                                   double tau = 0.10);

/// Metrics CSV with 17 significant digits.
void export_metrics(const MetricsReport& report, const std::filesystem::path& path);

/// Reads the per-layer arrays back from a metrics CSV.
MetricsReport parse_metrics(const std::filesystem::path& path);

/// `layer,sample,slack` rows for l = 1..L.
void export_slacks(const MetricsReport& report, const std::filesystem::path& path);

/// `layer,sample,l1` rows for l = 0..L.
void export_l1_samples(const MetricsReport& report, const std::filesystem::path& path);

} // namespace unroll
