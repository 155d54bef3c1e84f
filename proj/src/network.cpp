#include "unroll/network.hpp"

#include "unroll/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace unroll {

const char* to_string(Arch arch) { return arch == Arch::Lista ? "lista" : "resgd"; }

const char* to_string(NoiseMode mode)
{
    switch (mode) {
    case NoiseMode::Off: return "off";
    case NoiseMode::GradProportional: return "grad";
    case NoiseMode::InverseLayer: return "inverse";
    }
    return "?";
}

const char* to_string(GradNoiseScale scale)
{
    return scale == GradNoiseScale::Step ? "step" : "raw";
}

ModelParams ModelParams::zeros_like() const
{
    ModelParams out = *this;
    for_each_block(out, [](std::size_t, const char*, std::span<double> a) {
        std::fill(a.begin(), a.end(), 0.0);
    });
    return out;
}

std::size_t ModelParams::size() const
{
    std::size_t n = 0;
    for_each_block(*this, [&n](std::size_t, const char*, std::span<const double> a) { n += a.size(); });
    return n;
}

void validate(const ModelParams& params)
{
    const auto [p, d, h] = params.dims;
    if (params.num_layers() == 0) throw std::invalid_argument("model has no layers");
    auto shape = [](const auto& m, Index r, Index c) { return m.rows() == r && m.cols() == c; };
    if (params.arch == Arch::Lista) {
        if (!params.resgd.empty()) throw std::invalid_argument("LISTA model carries ResGd layers");
        for (const auto& layer : params.lista) {
            if (!shape(layer.d_u, d, p) || !shape(layer.d_e, d, d) || layer.beta.size() != d)
                throw std::invalid_argument("LISTA layer shape does not match model dims");
        }
    } else {
        if (!params.lista.empty()) throw std::invalid_argument("ResGd model carries LISTA layers");
        for (const auto& layer : params.resgd) {
            if (!shape(layer.w1, h, d + p) || layer.b1.size() != h || !shape(layer.w2, d, h)
                || layer.b2.size() != d)
                throw std::invalid_argument("ResGd layer shape does not match model dims");
        }
    }
}

ModelParams init_lista(const ProblemSpec& spec, std::size_t layers)
{
    if (spec.kind != ProblemKind::Lasso) throw std::invalid_argument("init_lista needs a lasso spec");
    if (layers == 0) throw std::invalid_argument("init_lista: zero layers");
    const Index p = spec.signal_dim();
    const Index d = spec.code_dim();
    const double step = 1.0 / spec.nu;

    ListaLayer layer;
    layer.d_u = step * spec.mat.transpose();
    layer.d_e = Matrix::Identity(d, d) - step * (spec.mat.transpose() * spec.mat);
    layer.beta = Vector::Constant(d, spec.alpha * step);

    ModelParams params;
    params.arch = Arch::Lista;
    params.dims = {p, d, 0};
    params.lista.assign(layers, layer);
    return params;
}

ModelParams init_resgd(ModelDims dims, std::size_t layers, std::uint64_t seed)
{
    if (layers == 0) throw std::invalid_argument("init_resgd: zero layers");
    if (dims.signal < 1 || dims.code < 1) throw std::invalid_argument("init_resgd: empty dims");
    if (dims.hidden == 0) dims.hidden = 4 * (dims.code + dims.signal);
    const Index p = dims.signal, d = dims.code, h = dims.hidden;

    Rng rng = make_rng(seed, {stream::kInitWeights});
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Index rows, Index cols) {
        const double scale = 1.0 / std::sqrt(double(cols));
        Matrix m(rows, cols);
        // Fill row-major so the draw order matches the checkpoint layout.
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
        return m;
    };

    ModelParams params;
    params.arch = Arch::ResGd;
    params.dims = dims;
    params.resgd.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        ResGdLayer layer;
        layer.w1 = draw(h, d + p);
        layer.b1 = Vector::Zero(h);
        layer.w2 = draw(d, h);
        layer.b2 = Vector::Zero(d);
        params.resgd.push_back(std::move(layer));
    }
    return params;
}

double noise_stddev(const NoiseSchedule& schedule, std::size_t layer, const Vector& y_prev,
                    const Vector& x, const ProblemSpec& spec)
{
    switch (schedule.mode) {
    case NoiseMode::Off: return 0.0;
    case NoiseMode::GradProportional: {
        double g = objective_gradient(y_prev, x, spec).norm() / std::sqrt(double(y_prev.size()));
        if (schedule.grad_scale == GradNoiseScale::Step) g /= spec.nu;
        return schedule.sigma_hat * g;
    }
    case NoiseMode::InverseLayer: return schedule.sigma_hat / std::sqrt(double(layer));
    }
    return 0.0;
}

Vector apply_layer(const ModelParams& params, std::size_t layer, const Vector& x, const Vector& u)
{
    if (params.arch == Arch::Lista) {
        const auto& w = params.lista[layer];
        return soft_threshold(w.d_u * x + w.d_e * u, w.beta);
    }
    const auto& w = params.resgd[layer];
    const Index d = params.dims.code;
    const Vector pre = w.w1.leftCols(d) * u + w.w1.rightCols(x.size()) * x + w.b1;
    return u - (w.w2 * pre.array().tanh().matrix() + w.b2);
}

namespace {

void check_inputs(const Vector& x, const Vector& y0, const ModelParams& params)
{
    if (x.size() != params.dims.signal || y0.size() != params.dims.code)
        throw std::invalid_argument("forward: input dimensions do not match the model");
}

void check_finite(const Vector& y, std::size_t layer)
{
    if (!y.allFinite())
        throw NumericalError("non-finite output at layer " + std::to_string(layer));
}

} // namespace

Trajectory forward(const Vector& x, const Vector& y0, const ModelParams& params,
                   const NoiseSchedule& schedule, const ProblemSpec& spec, Rng& rng)
{
    check_inputs(x, y0, params);
    const std::size_t L = params.num_layers();
    const Index d = params.dims.code;
    Trajectory traj;
    traj.y.reserve(L + 1);
    traj.noise.reserve(L);
    traj.y.push_back(y0);
    for (std::size_t l = 1; l <= L; ++l) {
        const Vector& prev = traj.y.back();
        const double sigma = noise_stddev(schedule, l, prev, x, spec);
        Vector n = schedule.mode == NoiseMode::Off ? Vector::Zero(d) : gaussian_vector(rng, d, sigma);
        Vector next = apply_layer(params, l - 1, x, prev + n);
        check_finite(next, l);
        traj.noise.push_back(std::move(n));
        traj.y.push_back(std::move(next));
    }
    return traj;
}

Trajectory forward(const Vector& x, const Vector& y0, const ModelParams& params)
{
    return forward_with_noise(x, y0, params, {});
}

Trajectory forward_with_noise(const Vector& x, const Vector& y0, const ModelParams& params,
                              const std::vector<Vector>& noise)
{
    check_inputs(x, y0, params);
    const std::size_t L = params.num_layers();
    const Index d = params.dims.code;
    if (!noise.empty() && noise.size() != L)
        throw std::invalid_argument("forward_with_noise: need one noise entry per layer");
    Trajectory traj;
    traj.y.reserve(L + 1);
    traj.noise.reserve(L);
    traj.y.push_back(y0);
    for (std::size_t l = 1; l <= L; ++l) {
        const bool has = !noise.empty() && noise[l - 1].size() != 0;
        if (has && noise[l - 1].size() != d)
            throw std::invalid_argument("forward_with_noise: noise dimension mismatch");
        Vector n = has ? noise[l - 1] : Vector::Zero(d);
        Vector next = apply_layer(params, l - 1, x, traj.y.back() + n);
        check_finite(next, l);
        traj.noise.push_back(std::move(n));
        traj.y.push_back(std::move(next));
    }
    return traj;
}

} // namespace unroll
