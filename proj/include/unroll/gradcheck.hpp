#pragma once

// Finite-difference verification of the Lagrangian gradient over random
// instances: LISTA with distance constraints on lasso problems and ResGd
// with gradient-norm constraints on least-squares problems.

#include "unroll/config.hpp"

#include <vector>

namespace unroll {

struct GradCheckInstance {
    std::size_t index = 0;
    Arch arch = Arch::Lista;
    GradCheckResult result;
};

struct GradCheckReport {
    std::vector<GradCheckInstance> instances;
    double max_rel_error = 0.0;
    double threshold = 0.0;
    bool pass() const { return max_rel_error <= threshold; }
};

/// Problem, batch, parameters and duals of one check instance.
struct GradCheckProblem {
    ProblemSpec spec;
    Batch batch;
    ModelParams params;
    Vector duals;
    ConstraintKind ck;
};

GradCheckProblem make_gradcheck_problem(const ExperimentConfig& config, Arch arch, std::size_t index);

GradCheckReport run_gradcheck(const ExperimentConfig& config);

} // namespace unroll
