#pragma once

// Unrolled architectures: LISTA and residual-MLP unrolled gradient descent.

#include "unroll/optimizee.hpp"
#include "unroll/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace unroll {

enum class Arch : std::uint8_t { Lista = 0, ResGd = 1 };

const char* to_string(Arch arch);

struct ModelDims {
    Index signal = 0; // p
    Index code = 0;   // d
    Index hidden = 0; // h (ResGd only)
};

/// y_l = S_beta(d_u·x + d_e·y_{l−1}).
struct ListaLayer {
    Matrix d_u;  // d×p
    Matrix d_e;  // d×d
    Vector beta; // d, kept ≥ 0
};

/// y_l = y_{l−1} − (w2·tanh(w1·[y_{l−1}; x] + b1) + b2).
struct ResGdLayer {
    Matrix w1; // h×(d+p)
    Vector b1; // h
    Matrix w2; // d×h
    Vector b2; // d
};

/// Per-layer parameters of one unrolled network. Only the vector matching
/// `arch` is populated. Also used as the container for gradients and ADAM
/// moments, which share the exact same shapes.
struct ModelParams {
    Arch arch = Arch::Lista;
    ModelDims dims;
    std::vector<ListaLayer> lista;
    std::vector<ResGdLayer> resgd;

    std::size_t num_layers() const { return arch == Arch::Lista ? lista.size() : resgd.size(); }

    /// Same shapes, every entry zero.
    ModelParams zeros_like() const;

    /// Total scalar parameter count.
    std::size_t size() const;
};

/// Visits every parameter array in declaration order (layer by layer; within
/// a layer d_u, d_e, beta or w1, b1, w2, b2). The callback receives the
/// layer index, the array name, and the array's storage.
template <class Params, class F>
void for_each_block(Params& params, F&& fn)
{
    using Scalar = std::conditional_t<std::is_const_v<Params>, const double, double>;
    auto span_of = [](auto& m) { return std::span<Scalar>(m.data(), static_cast<std::size_t>(m.size())); };
    if (params.arch == Arch::Lista) {
        for (std::size_t l = 0; l < params.lista.size(); ++l) {
            auto& layer = params.lista[l];
            fn(l, "d_u", span_of(layer.d_u));
            fn(l, "d_e", span_of(layer.d_e));
            fn(l, "beta", span_of(layer.beta));
        }
    } else {
        for (std::size_t l = 0; l < params.resgd.size(); ++l) {
            auto& layer = params.resgd[l];
            fn(l, "w1", span_of(layer.w1));
            fn(l, "b1", span_of(layer.b1));
            fn(l, "w2", span_of(layer.w2));
            fn(l, "b2", span_of(layer.b2));
        }
    }
}

/// Throws std::invalid_argument unless every layer matches `dims`.
void validate(const ModelParams& params);

enum class NoiseMode : std::uint8_t { Off = 0, GradProportional = 1, InverseLayer = 2 };

const char* to_string(NoiseMode mode);

enum class GradNoiseScale { Raw, Step };

const char* to_string(GradNoiseScale scale);

struct NoiseSchedule {
    NoiseMode mode = NoiseMode::Off;
    double sigma_hat = 0.0;
    // Step: the gradient norm is divided by nu, so the noise is measured in
    // gradient-step lengths. Raw: the bare gradient norm.
    GradNoiseScale grad_scale = GradNoiseScale::Step;

    static NoiseSchedule off() { return {}; }
};

/// Outputs y_0..y_L of one pass and the noise n_1..n_L added to each layer input.
struct Trajectory {
    std::vector<Vector> y;
    std::vector<Vector> noise;
};

/// Every layer at the ISTA point: d_u = Dᵀ/ν, d_e = I − DᵀD/ν, beta = α/ν.
ModelParams init_lista(const ProblemSpec& spec, std::size_t layers);

/// Weights i.i.d. N(0, 1/fan_in), biases zero. Hidden width defaults to 4(d+p)
/// when dims.hidden is 0.
ModelParams init_resgd(ModelDims dims, std::size_t layers, std::uint64_t seed);

/// Per-coordinate noise standard deviation for the input of layer `layer`
/// (1-based), given the previous output.
double noise_stddev(const NoiseSchedule& schedule, std::size_t layer, const Vector& y_prev,
                    const Vector& x, const ProblemSpec& spec);

/// Single layer map φ(u; W_l) with u the (possibly noisy) layer input.
Vector apply_layer(const ModelParams& params, std::size_t layer, const Vector& x, const Vector& u);

/// Runs the unrolled network from y0, drawing layer-input noise from `rng`
/// according to `schedule`. Throws NumericalError on a non-finite output.
Trajectory forward(const Vector& x, const Vector& y0, const ModelParams& params,
                   const NoiseSchedule& schedule, const ProblemSpec& spec, Rng& rng);

/// Noise-free pass.
Trajectory forward(const Vector& x, const Vector& y0, const ModelParams& params);

/// Pass with explicit layer-input perturbations (one per layer; an empty
/// vector means no perturbation at that layer).
Trajectory forward_with_noise(const Vector& x, const Vector& y0, const ModelParams& params,
                              const std::vector<Vector>& noise);

} // namespace unroll
