#include "unroll/training.hpp"

#include "unroll/errors.hpp"
#include "unroll/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace unroll {

AdamState make_adam_state(const ModelParams& params)
{
    return {params.zeros_like(), params.zeros_like(), 0};
}

void primal_step(ModelParams& params, const ParamGrads& grads, AdamState& state, double mu_w,
                 const AdamConfig& adam)
{
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("primal_step: shape mismatch");
    ++state.step;
    const double t = double(state.step);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);

    std::vector<std::span<const double>> g;
    std::vector<std::span<double>> m, v;
    for_each_block(grads, [&](std::size_t, const char*, std::span<const double> a) { g.push_back(a); });
    for_each_block(state.m, [&](std::size_t, const char*, std::span<double> a) { m.push_back(a); });
    for_each_block(state.v, [&](std::size_t, const char*, std::span<double> a) { v.push_back(a); });

    std::size_t k = 0;
    for_each_block(params, [&](std::size_t layer, const char* name, std::span<double> w) {
        auto gk = g[k];
        auto mk = m[k];
        auto vk = v[k];
        ++k;
        for (std::size_t i = 0; i < w.size(); ++i) {
            mk[i] = adam.beta1 * mk[i] + (1.0 - adam.beta1) * gk[i];
            vk[i] = adam.beta2 * vk[i] + (1.0 - adam.beta2) * gk[i] * gk[i];
            const double update = mu_w * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + adam.eps);
            if (!std::isfinite(update))
                throw NumericalError("non-finite update in layer " + std::to_string(layer + 1)
                                     + " parameter " + name);
            w[i] -= update;
        }
    });

    if (params.arch == Arch::Lista)
        for (auto& layer : params.lista) layer.beta = layer.beta.cwiseMax(0.0);
}

DualState dual_step(const DualState& duals, const Vector& slacks, double mu_lambda)
{
    if (duals.lambda.size() != slacks.size()) throw std::invalid_argument("dual_step: size mismatch");
    return {(duals.lambda + mu_lambda * slacks).cwiseMax(0.0)};
}

void validate(const TrainConfig& c)
{
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.layers < 1) throw ConfigError("layers must be >= 1");
    if (!(c.mu_w > 0) || !(c.mu_lambda > 0)) throw ConfigError("step sizes must be positive");
    if (!(c.constraint.epsilon > 0 && c.constraint.epsilon < 1)) throw ConfigError("epsilon must lie in (0, 1)");
    if (!(c.noise.sigma_hat >= 0)) throw ConfigError("sigma_hat must be nonnegative");
    if (!(c.divergence_factor > 1)) throw ConfigError("divergence_factor must exceed 1");
    if (!(c.y0_std >= 0)) throw ConfigError("y0_std must be nonnegative");
}

ModelParams initial_params(const TrainConfig& config, const ProblemSpec& spec)
{
    if (config.arch == Arch::Lista) return init_lista(spec, config.layers);
    return init_resgd({spec.signal_dim(), spec.code_dim(), config.hidden}, config.layers, config.seed);
}

std::vector<std::vector<std::uint32_t>> epoch_batches(const Dataset& data, const TrainConfig& config,
                                                      std::size_t epoch)
{
    std::vector<std::uint32_t> order = data.split(Split::Train);
    Rng rng = make_rng(config.seed, {stream::kShuffle, epoch});
    for (std::size_t i = order.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    std::vector<std::vector<std::uint32_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        batches.emplace_back(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
    }
    return batches;
}

Batch make_train_batch(const Dataset& data, std::span<const std::uint32_t> indices,
                       const TrainConfig& config, std::size_t epoch)
{
    const Index d = data.spec.code_dim();
    Batch batch;
    batch.reserve(indices.size());
    for (auto i : indices) {
        const auto& s = data.samples[i];
        Rng rng = make_rng(config.seed, {stream::kTrainSample, epoch, i});
        BatchSample b;
        b.x = s.x;
        b.y_star = s.y_star;
        b.y0 = gaussian_vector(rng, d, config.y0_std);
        b.noise_seed = stream_seed(config.seed, {stream::kLayerNoise, epoch, i});
        batch.push_back(std::move(b));
    }
    return batch;
}

Vector eval_initial_estimate(std::uint64_t seed, std::uint64_t index, Index d, double stddev)
{
    Rng rng = make_rng(seed, {stream::kEvalInit, index});
    return gaussian_vector(rng, d, stddev);
}

double split_mse(const ModelParams& params, const Dataset& data, Split split, std::uint64_t y0_seed,
                 double y0_std)
{
    const auto& idx = data.split(split);
    if (idx.empty()) return 0.0;
    std::vector<double> err(idx.size());
    parallel_for(idx.size(), [&](std::size_t k) {
        const auto& s = data.samples[idx[k]];
        const Vector y0 = eval_initial_estimate(y0_seed, idx[k], data.spec.code_dim(), y0_std);
        err[k] = (forward(s.x, y0, params).y.back() - s.y_star).squaredNorm();
    });
    return std::accumulate(err.begin(), err.end(), 0.0) / double(err.size());
}

TrainResult train(const TrainConfig& config, const Dataset& data)
{
    return train(config, data, initial_params(config, data.spec));
}

TrainResult train(const TrainConfig& config, const Dataset& data, ModelParams init)
{
    validate(config);
    validate(init);
    if (init.dims.signal != data.spec.signal_dim() || init.dims.code != data.spec.code_dim())
        throw std::invalid_argument("model dims do not match the dataset");
    if (data.split(Split::Train).empty()) throw std::invalid_argument("empty training split");
    if (config.constraints_enabled && config.constraint.family == ConstraintFamily::GradNorm
        && data.spec.kind != ProblemKind::Quadratic)
        throw ConfigError("gradient-norm constraints need a quadratic dataset");

    const std::size_t L = init.num_layers();
    TrainResult out;
    out.params = std::move(init);
    out.duals.lambda = Vector::Zero(Index(L));
    AdamState adam = make_adam_state(out.params);
    const NoiseSchedule schedule = config.noise_enabled ? config.noise : NoiseSchedule::off();

    // Divergence reference: the first batch's MSE, floored at its label energy
    // (the MSE of predicting zero) so an exact initial fit does not trip it.
    double initial_mse = -1.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches = epoch_batches(data, config, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_slacks = Vector::Zero(Index(L));
        Vector last_slacks;
        for (const auto& idx : batches) {
            const Batch batch = make_train_batch(data, idx, config, epoch);
            auto res = lagrangian_value_and_grad(batch, out.params, out.duals.lambda, config.constraint,
                                                 schedule, data.spec);
            if (initial_mse < 0) {
                double energy = 0.0;
                for (const auto& b : batch) energy += b.y_star.squaredNorm();
                initial_mse = std::max(res.value.mse, energy / double(batch.size()));
            }
            if (!std::isfinite(res.value.mse) || res.value.mse > config.divergence_factor * initial_mse)
                throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1)
                                     + ": batch MSE " + std::to_string(res.value.mse) + " vs reference "
                                     + std::to_string(initial_mse));
            primal_step(out.params, res.grads, adam, config.mu_w, config.adam);
            rec.train_loss += res.value.value;
            rec.train_mse += res.value.mse;
            rec.mean_slacks += res.value.mean_slacks;
            last_slacks = res.value.mean_slacks;
        }
        const double nb = double(batches.size());
        rec.train_loss /= nb;
        rec.train_mse /= nb;
        rec.mean_slacks /= nb;

        if (config.constraints_enabled) {
            const Vector& slack = config.dual_slack == DualSlackEstimate::EpochMean ? rec.mean_slacks : last_slacks;
            out.duals = dual_step(out.duals, slack, config.mu_lambda);
            if (config.skip_first_layer_constraint) out.duals.lambda(0) = 0.0;
        }
        rec.lambda = out.duals.lambda;
        rec.val_mse = split_mse(out.params, data, Split::Validation, data.gen.seed, config.y0_std);
        out.history.epochs.push_back(std::move(rec));
    }
    return out;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const Index L = history.epochs.empty() ? 0 : history.epochs.front().lambda.size();
    os << "epoch,train_loss,train_mse,val_mse";
    for (Index l = 1; l <= L; ++l) os << ",slack_" << l;
    for (Index l = 1; l <= L; ++l) os << ",lambda_" << l;
    os << '\n';
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const auto& r : history.epochs) {
        os << r.epoch + 1 << ',' << num(r.train_loss) << ',' << num(r.train_mse) << ',' << num(r.val_mse);
        for (Index l = 0; l < L; ++l) os << ',' << num(r.mean_slacks(l));
        for (Index l = 0; l < L; ++l) os << ',' << num(r.lambda(l));
        os << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace unroll
