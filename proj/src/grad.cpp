#include "unroll/grad.hpp"

#include "unroll/errors.hpp"
#include "unroll/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unroll {

namespace {

constexpr double kNormGuard = 1e-12;
// Fixed reduction chunk; the summation order never depends on thread count.
constexpr std::size_t kChunk = 8;

/// u/‖u‖, or zero below the guard.
Vector unit_or_zero(const Vector& u)
{
    const double n = u.norm();
    return n >= kNormGuard ? Vector(u / n) : Vector::Zero(u.size());
}

double constraint_measure(const Vector& y, const Vector& x, const Vector& y_star,
                          const ProblemSpec& spec, ConstraintFamily family)
{
    return family == ConstraintFamily::DistToOpt ? (y - y_star).norm()
                                                 : quad_gradient(y, x, spec).norm();
}

/// ∂/∂y of the constraint measure at y.
Vector constraint_measure_grad(const Vector& y, const Vector& x, const Vector& y_star,
                               const ProblemSpec& spec, ConstraintFamily family)
{
    if (family == ConstraintFamily::DistToOpt) return unit_or_zero(y - y_star);
    const Vector g = quad_gradient(y, x, spec);
    return spec.mat.transpose() * (spec.mat * unit_or_zero(g));
}

void check_duals(const Vector& duals, std::size_t layers)
{
    if (static_cast<std::size_t>(duals.size()) != layers)
        throw std::invalid_argument("dual vector length must equal the layer count");
    if (!(duals.array() >= 0.0).all()) throw std::invalid_argument("dual variables must be >= 0");
}

void check_family(const ConstraintKind& ck, const ProblemSpec& spec)
{
    if (ck.family == ConstraintFamily::GradNorm && spec.kind != ProblemKind::Quadratic)
        throw std::invalid_argument("gradient-norm constraints need a smooth (quadratic) objective");
}

struct SampleOutcome {
    double loss = 0.0; // ‖y_L − y*‖²
    Vector slacks;
};

/// Backpropagates one sample's Lagrangian contribution into `grads`.
void backward(const BatchSample& s, const Trajectory& traj, const ModelParams& params,
              const Vector& duals, const ConstraintKind& ck, const ProblemSpec& spec,
              ParamGrads& grads)
{
    const std::size_t L = params.num_layers();
    const Index d = params.dims.code;
    std::vector<Vector> adj(L + 1, Vector::Zero(d));
    adj[L] = 2.0 * (traj.y[L] - s.y_star);

    const double keep = 1.0 - ck.epsilon;
    for (std::size_t l = 1; l <= L; ++l) {
        const double lam = duals(Index(l - 1));
        if (lam == 0.0) continue;
        adj[l] += lam * constraint_measure_grad(traj.y[l], s.x, s.y_star, spec, ck.family);
        if (l >= 2)
            adj[l - 1] -= (lam * keep)
                        * constraint_measure_grad(traj.y[l - 1], s.x, s.y_star, spec, ck.family);
    }

    for (std::size_t l = L; l >= 1; --l) {
        const Vector u = traj.y[l - 1] + traj.noise[l - 1];
        const Vector& a = adj[l];
        Vector gu;
        if (params.arch == Arch::Lista) {
            const auto& w = params.lista[l - 1];
            auto& g = grads.lista[l - 1];
            const Vector pre = w.d_u * s.x + w.d_e * u;
            Vector gpre(d);
            for (Index i = 0; i < d; ++i) {
                const bool active = std::abs(pre(i)) > w.beta(i);
                gpre(i) = active ? a(i) : 0.0;
                if (active) g.beta(i) -= pre(i) > 0.0 ? a(i) : -a(i);
            }
            g.d_u.noalias() += gpre * s.x.transpose();
            g.d_e.noalias() += gpre * u.transpose();
            gu = w.d_e.transpose() * gpre;
        } else {
            const auto& w = params.resgd[l - 1];
            auto& g = grads.resgd[l - 1];
            const Index p = params.dims.signal;
            Vector z(d + p);
            z << u, s.x;
            const Vector h = (w.w1 * z + w.b1).array().tanh().matrix();
            const Vector gout = -a;
            g.w2.noalias() += gout * h.transpose();
            g.b2 += gout;
            const Vector gpre = ((w.w2.transpose() * gout).array() * (1.0 - h.array().square())).matrix();
            g.w1.noalias() += gpre * z.transpose();
            g.b1 += gpre;
            gu = a + w.w1.leftCols(d).transpose() * gpre;
        }
        if (l >= 2) adj[l - 1] += gu;
    }
}

void check_finite_grads(const ParamGrads& grads)
{
    for_each_block(grads, [](std::size_t layer, const char* name, std::span<const double> a) {
        for (double v : a)
            if (!std::isfinite(v))
                throw NumericalError("non-finite gradient in layer " + std::to_string(layer + 1)
                                     + " parameter " + name);
    });
}

void accumulate(ParamGrads& into, const ParamGrads& from)
{
    std::vector<std::span<const double>> src;
    for_each_block(from, [&](std::size_t, const char*, std::span<const double> a) { src.push_back(a); });
    std::size_t k = 0;
    for_each_block(into, [&](std::size_t, const char*, std::span<double> a) {
        const auto& b = src[k++];
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    });
}

LagrangianResult evaluate(const Batch& batch, const ModelParams& params, const Vector& duals,
                          const ConstraintKind& ck, const NoiseSchedule& schedule,
                          const ProblemSpec& spec, bool want_grad)
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const std::size_t L = params.num_layers();
    check_duals(duals, L);
    check_family(ck, spec);

    const std::size_t n = batch.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<SampleOutcome> outcomes(n);
    std::vector<ParamGrads> partial(want_grad ? chunks : 0);

    parallel_for(chunks, [&](std::size_t c) {
        if (want_grad) partial[c] = params.zeros_like();
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            const BatchSample& s = batch[i];
            Rng rng(s.noise_seed);
            const Trajectory traj = forward(s.x, s.y0, params, schedule, spec, rng);
            outcomes[i].loss = (traj.y[L] - s.y_star).squaredNorm();
            outcomes[i].slacks = constraint_slacks(traj, s.x, s.y_star, spec, ck);
            if (want_grad) backward(s, traj, params, duals, ck, spec, partial[c]);
        }
    });

    LagrangianResult out;
    auto& v = out.value;
    v.mean_slacks = Vector::Zero(Index(L));
    for (const auto& o : outcomes) {
        v.mse += o.loss;
        v.mean_slacks += o.slacks;
    }
    const double inv = 1.0 / double(n);
    v.mse *= inv;
    v.mean_slacks *= inv;
    v.value = v.mse;
    for (Index l = 0; l < Index(L); ++l)
        if (duals(l) != 0.0) v.value += duals(l) * v.mean_slacks(l);

    if (want_grad) {
        out.grads = std::move(partial[0]);
        for (std::size_t c = 1; c < chunks; ++c) accumulate(out.grads, partial[c]);
        for_each_block(out.grads, [inv](std::size_t, const char*, std::span<double> a) {
            for (double& x : a) x *= inv;
        });
        check_finite_grads(out.grads);
    }
    return out;
}

/// Soft-threshold activation pattern over the whole batch (noise-free).
std::vector<bool> activation_pattern(const ModelParams& params, const Batch& batch)
{
    std::vector<bool> pattern;
    if (params.arch != Arch::Lista) return pattern;
    for (const auto& s : batch) {
        const Trajectory traj = forward(s.x, s.y0, params);
        for (std::size_t l = 0; l < params.lista.size(); ++l) {
            const auto& w = params.lista[l];
            const Vector pre = w.d_u * s.x + w.d_e * traj.y[l];
            for (Index i = 0; i < pre.size(); ++i) pattern.push_back(std::abs(pre(i)) > w.beta(i));
        }
    }
    return pattern;
}

} // namespace

const char* to_string(ConstraintFamily family)
{
    return family == ConstraintFamily::GradNorm ? "grad" : "dist";
}

ConstraintKind make_constraint(ConstraintFamily family, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    return {family, epsilon};
}

Vector constraint_slacks(const Trajectory& traj, const Vector& x, const Vector& y_star,
                         const ProblemSpec& spec, const ConstraintKind& ck)
{
    check_family(ck, spec);
    if (traj.y.size() < 2) throw std::invalid_argument("trajectory needs at least one layer");
    const std::size_t L = traj.y.size() - 1;
    Vector slacks(static_cast<Index>(L));
    double prev = constraint_measure(traj.y[0], x, y_star, spec, ck.family);
    for (std::size_t l = 1; l <= L; ++l) {
        const double cur = constraint_measure(traj.y[l], x, y_star, spec, ck.family);
        slacks(Index(l - 1)) = cur - (1.0 - ck.epsilon) * prev;
        prev = cur;
    }
    return slacks;
}

LagrangianValue empirical_lagrangian(const Batch& batch, const ModelParams& params,
                                     const Vector& duals, const ConstraintKind& ck,
                                     const NoiseSchedule& schedule, const ProblemSpec& spec)
{
    return evaluate(batch, params, duals, ck, schedule, spec, false).value;
}

ParamGrads lagrangian_grad(const Batch& batch, const ModelParams& params, const Vector& duals,
                           const ConstraintKind& ck, const NoiseSchedule& schedule,
                           const ProblemSpec& spec)
{
    return evaluate(batch, params, duals, ck, schedule, spec, true).grads;
}

LagrangianResult lagrangian_value_and_grad(const Batch& batch, const ModelParams& params,
                                           const Vector& duals, const ConstraintKind& ck,
                                           const NoiseSchedule& schedule, const ProblemSpec& spec)
{
    return evaluate(batch, params, duals, ck, schedule, spec, true);
}

double& param_at(ModelParams& params, std::size_t flat_index)
{
    double* hit = nullptr;
    std::size_t offset = 0;
    for_each_block(params, [&](std::size_t, const char*, std::span<double> a) {
        if (!hit && flat_index < offset + a.size()) hit = &a[flat_index - offset];
        offset += a.size();
    });
    if (!hit) throw std::out_of_range("parameter index out of range");
    return *hit;
}

double param_at(const ModelParams& params, std::size_t flat_index)
{
    return param_at(const_cast<ModelParams&>(params), flat_index);
}

GradCheckResult finite_diff_check(const ModelParams& params, const Batch& batch,
                                  const Vector& duals, const ConstraintKind& ck,
                                  const ProblemSpec& spec, const ParamGrads& analytic,
                                  const std::vector<std::size_t>& coords,
                                  const GradCheckOptions& options)
{
    const NoiseSchedule off = NoiseSchedule::off();
    const double h = options.step;
    ModelParams probe = params;
    auto value_at = [&](std::size_t idx, double delta) {
        double& w = param_at(probe, idx);
        const double saved = w;
        w = saved + delta;
        const double v = empirical_lagrangian(batch, probe, duals, ck, off, spec).value;
        w = saved;
        return v;
    };
    auto pattern_at = [&](std::size_t idx, double delta) {
        double& w = param_at(probe, idx);
        const double saved = w;
        w = saved + delta;
        auto pat = activation_pattern(probe, batch);
        w = saved;
        return pat;
    };

    GradCheckResult result;
    for (std::size_t idx : coords) {
        if (params.arch == Arch::Lista && pattern_at(idx, 10 * h) != pattern_at(idx, -10 * h)) {
            ++result.skipped_near_kink;
            continue;
        }
        const double fd = (value_at(idx, h) - value_at(idx, -h)) / (2 * h);
        const double an = param_at(analytic, idx);
        const double denom = std::max({std::abs(fd), std::abs(an), options.abs_floor});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(fd - an) / denom);
        ++result.checked;
    }
    return result;
}

GradCheckResult finite_diff_check(const ModelParams& params, const Batch& batch,
                                  const Vector& duals, const ConstraintKind& ck,
                                  const ProblemSpec& spec, const GradCheckOptions& options)
{
    const ParamGrads analytic = lagrangian_grad(batch, params, duals, ck, NoiseSchedule::off(), spec);
    const std::size_t total = params.size();
    Rng rng = make_rng(options.seed, {stream::kGradCheck});
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<std::size_t> coords(std::min(options.samples, total));
    for (auto& c : coords) c = pick(rng);
    return finite_diff_check(params, batch, duals, ck, spec, analytic, coords, options);
}

} // namespace unroll
