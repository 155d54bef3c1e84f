#pragma once

// Primal-dual training of unrolled optimizers: ADAM descent on the empirical
// Lagrangian per batch, projected dual ascent once per epoch.

#include "unroll/data.hpp"
#include "unroll/grad.hpp"

#include <filesystem>
#include <span>
#include <utility>

namespace unroll {

struct DualState {
    Vector lambda; // one nonnegative entry per layer
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

/// One bias-corrected ADAM update, then LISTA thresholds projected onto ≥ 0.
void primal_step(ModelParams& params, const ParamGrads& grads, AdamState& state, double mu_w,
                 const AdamConfig& adam = {});

/// λ ← max(λ + mu_lambda·slacks, 0).
DualState dual_step(const DualState& duals, const Vector& slacks, double mu_lambda);

enum class DualSlackEstimate : std::uint8_t { EpochMean = 0, LastBatch = 1 };

struct TrainConfig {
    Arch arch = Arch::Lista;
    std::size_t layers = 10;
    Index hidden = 0; // ResGd width; 0 selects 4(d+p)
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double mu_w = 1e-5;
    double mu_lambda = 1e-3;
    ConstraintKind constraint{ConstraintFamily::DistToOpt, 0.05};
    NoiseSchedule noise{NoiseMode::GradProportional, 1.0};
    bool constraints_enabled = true;
    bool noise_enabled = true;
    bool skip_first_layer_constraint = false;
    std::uint64_t seed = 0;
    AdamConfig adam;
    DualSlackEstimate dual_slack = DualSlackEstimate::EpochMean;
    double divergence_factor = 1e3;
    double y0_std = 1.0; // y0 ~ N(0, y0_std²·I)
};

/// Throws ConfigError on invalid settings.
void validate(const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0; // epoch mean of the Lagrangian value
    double train_mse = 0.0;
    Vector mean_slacks;      // epoch mean of per-batch mean slacks
    Vector lambda;           // duals after this epoch's dual step
    double val_mse = 0.0;    // final-layer MSE on the validation split, noise off
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    ModelParams params;
    DualState duals;
    TrainHistory history;
};

/// Initial parameters train() starts from: init_lista or init_resgd(seed).
ModelParams initial_params(const TrainConfig& config, const ProblemSpec& spec);

/// Shuffled mini-batches of the training split for one epoch.
std::vector<std::vector<std::uint32_t>> epoch_batches(const Dataset& data, const TrainConfig& config,
                                                      std::size_t epoch);

/// Training batch with fresh y0 and noise streams for (seed, epoch, sample).
Batch make_train_batch(const Dataset& data, std::span<const std::uint32_t> indices,
                       const TrainConfig& config, std::size_t epoch);

/// Evaluation initial estimate for sample `index`: N(0, std²·I) from a
/// stream keyed only by (seed, index), so every model sees the same y0.
Vector eval_initial_estimate(std::uint64_t seed, std::uint64_t index, Index d, double stddev = 1.0);

/// Noise-free final-layer MSE over a split.
double split_mse(const ModelParams& params, const Dataset& data, Split split, std::uint64_t y0_seed,
                 double y0_std = 1.0);

/// Runs the primal-dual loop. Deterministic given config.seed.
TrainResult train(const TrainConfig& config, const Dataset& data);
TrainResult train(const TrainConfig& config, const Dataset& data, ModelParams init);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const DualState& duals,
                     const std::filesystem::path& path);
std::pair<ModelParams, DualState> load_checkpoint(const std::filesystem::path& path);

} // namespace unroll
