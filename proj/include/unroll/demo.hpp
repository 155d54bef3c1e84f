#pragma once

// Two-dimensional least-squares toy: gradient descent next to unconstrained
// and constrained residual-MLP unrolled optimizers, clean and with one
// mid-trajectory perturbation.

#include "unroll/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace unroll {

struct DemoQuadConfig {
    std::uint64_t seed = 0;
    std::size_t layers = 10;
    std::size_t samples = 1000;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double mu_w = 3e-4;
    double mu_lambda = 0.1;
    double epsilon = 0.05;
    std::size_t perturb_layer = 3;  // noise is added to this layer's output
    double perturb_scale = 0.5;     // noise norm as a fraction of ‖y0 − y*‖, pointing away from y*
};

/// Hessian eigenvalues 1 and 1/9 along rotated axes, so descent zig-zags.
ProblemSpec demo_quad_problem();

struct DemoTrajectory {
    std::string name;
    std::vector<Vector> y; // y_0..y_L
    Vector dist;
    Vector obj;
};

struct DemoQuadResult {
    ProblemSpec spec;
    Vector x;
    Vector y_star;
    Vector y0;
    Vector perturbation;
    ModelParams unconstrained;
    ModelParams constrained;
    std::vector<DemoTrajectory> trajectories; // gd, unconstrained, constrained, then the perturbed runs
    const DemoTrajectory& find(const std::string& name) const;
};

/// L steps of gradient descent with step 1/nu.
std::vector<Vector> gradient_descent(const Vector& x, const Vector& y0, const ProblemSpec& spec,
                                     std::size_t steps, const std::vector<Vector>& perturbations = {});

DemoQuadResult run_demo_quad(const DemoQuadConfig& config);

/// `layer,y_1..y_d,dist,obj`, one row per layer.
void export_trajectory(const DemoTrajectory& t, const std::filesystem::path& path);

} // namespace unroll
