#pragma once

// Empirical Lagrangian of the constrained unrolling problem and its exact
// reverse-mode gradient with respect to all network parameters.

#include "unroll/network.hpp"

#include <cstdint>
#include <vector>

namespace unroll {

enum class ConstraintFamily : std::uint8_t {
    GradNorm = 0,  // ‖∇f(y_l)‖ ≤ (1−ε)‖∇f(y_{l−1})‖
    DistToOpt = 1, // ‖y_l − y*‖ ≤ (1−ε)‖y_{l−1} − y*‖
};

const char* to_string(ConstraintFamily family);

struct ConstraintKind {
    ConstraintFamily family = ConstraintFamily::DistToOpt;
    double epsilon = 0.05;
};

/// Validates 0 < epsilon < 1.
ConstraintKind make_constraint(ConstraintFamily family, double epsilon);

using ParamGrads = ModelParams;

/// One training example plus its initial estimate. Layer-input noise for the
/// sample is drawn from a stream seeded by `noise_seed`, so repeated calls
/// with the same batch see identical draws.
struct BatchSample {
    Vector x;
    Vector y_star;
    Vector y0;
    std::uint64_t noise_seed = 0;
};

using Batch = std::vector<BatchSample>;

/// Per-layer slack C(y_l, y_{l−1}) for l = 1..L; negative means satisfied.
/// GradNorm on a lasso spec is rejected.
Vector constraint_slacks(const Trajectory& traj, const Vector& x, const Vector& y_star,
                         const ProblemSpec& spec, const ConstraintKind& ck);

struct LagrangianValue {
    double value = 0.0;  // mse + Σ_l λ_l·mean_slacks_l
    double mse = 0.0;    // batch mean of ‖y_L − y*‖²
    Vector mean_slacks;  // L entries
};

struct LagrangianResult {
    LagrangianValue value;
    ParamGrads grads;
};

LagrangianValue empirical_lagrangian(const Batch& batch, const ModelParams& params,
                                     const Vector& duals, const ConstraintKind& ck,
                                     const NoiseSchedule& schedule, const ProblemSpec& spec);

ParamGrads lagrangian_grad(const Batch& batch, const ModelParams& params, const Vector& duals,
                           const ConstraintKind& ck, const NoiseSchedule& schedule,
                           const ProblemSpec& spec);

/// Value and gradient from the same forward passes (same noise draws).
LagrangianResult lagrangian_value_and_grad(const Batch& batch, const ModelParams& params,
                                           const Vector& duals, const ConstraintKind& ck,
                                           const NoiseSchedule& schedule, const ProblemSpec& spec);

/// Flat view helpers over ModelParams, in for_each_block order.
double& param_at(ModelParams& params, std::size_t flat_index);
double param_at(const ModelParams& params, std::size_t flat_index);

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t samples = 64;
    std::uint64_t seed = 0;
    /// Floor on the relative-error denominator; entries whose true magnitude
    /// is below it are compared in absolute terms.
    double abs_floor = 1e-4;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_near_kink = 0;
};

/// Central differences of the noise-free Lagrangian on randomly chosen
/// coordinates versus lagrangian_grad. Coordinates whose ±10h perturbation
/// flips a soft-threshold activation are skipped.
GradCheckResult finite_diff_check(const ModelParams& params, const Batch& batch,
                                  const Vector& duals, const ConstraintKind& ck,
                                  const ProblemSpec& spec, const GradCheckOptions& options = {});

/// Same check against a caller-supplied gradient on explicit coordinates.
GradCheckResult finite_diff_check(const ModelParams& params, const Batch& batch,
                                  const Vector& duals, const ConstraintKind& ck,
                                  const ProblemSpec& spec, const ParamGrads& analytic,
                                  const std::vector<std::size_t>& coords,
                                  const GradCheckOptions& options = {});

} // namespace unroll
