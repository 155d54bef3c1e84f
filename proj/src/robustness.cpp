#include "unroll/robustness.hpp"

#include "unroll/errors.hpp"
#include "unroll/parallel.hpp"
#include "unroll/training.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace unroll {

namespace {

std::string fmt17(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_models(const std::vector<LabeledModel>& models, const Dataset& data)
{
    if (models.empty()) throw std::invalid_argument("no models given");
    for (const auto& m : models) {
        validate(m.params);
        if (m.params.dims.signal != models.front().params.dims.signal
            || m.params.dims.code != models.front().params.dims.code
            || m.params.num_layers() != models.front().params.num_layers())
            throw std::invalid_argument("models must share architecture dims");
        if (m.params.dims.signal != data.spec.signal_dim() || m.params.dims.code != data.spec.code_dim())
            throw std::invalid_argument("model '" + m.label + "' does not match the dataset dims");
    }
}

} // namespace

double signal_std(const Dataset& data)
{
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : data.samples) {
        sum += s.x.sum();
        sq += s.x.squaredNorm();
        n += static_cast<std::size_t>(s.x.size());
    }
    if (n == 0) return 0.0;
    const double mean = sum / double(n);
    return std::sqrt(std::max(0.0, sq / double(n) - mean * mean));
}

Dataset make_ood_dataset(const Dataset& data, double p, std::uint64_t seed, Split split)
{
    if (!(p >= 0)) throw std::invalid_argument("perturbation size must be nonnegative");
    Dataset out = data;
    const auto& ids = data.split(split);
    const Index dim = data.spec.signal_dim();
    parallel_for(ids.size(), [&](std::size_t k) {
        const auto i = ids[k];
        Rng rng = make_rng(seed, {stream::kOodShift, i});
        Vector x = data.samples[i].x + gaussian_vector(rng, dim, p);
        out.samples[i] = label_signal(data.spec, std::move(x), int(data.gen.oracle_iters), data.gen.oracle_tol);
    });
    return out;
}

OodReport ood_sweep(const std::vector<LabeledModel>& models, const Dataset& data,
                    const std::vector<double>& p_list, const ConstraintKind& ck,
                    const EvalOptions& options, std::uint64_t seed)
{
    check_models(models, data);
    OodReport report;
    report.x_std = signal_std(data);
    for (std::size_t pi = 0; pi < p_list.size(); ++pi) {
        const double p = p_list[pi];
        // Keyed by the value of p, so a shift is reproduced whatever list it appears in.
        const Dataset shifted = make_ood_dataset(data, p * report.x_std, stream_seed(seed, {std::bit_cast<std::uint64_t>(p)}));
        for (const auto& m : models) {
            OodRow row;
            row.p = p;
            row.model = m.label;
            row.metrics = layer_metrics(m.params, shifted, Split::Test, ck, options);
            row.slack_mean = row.metrics.slacks.rowwise().mean();
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void export_ood(const OodReport& report, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "p,model,layer,dist_mean,obj_mean,slack_mean\n";
    for (const auto& row : report.rows) {
        const auto& m = row.metrics;
        for (Index l = 0; l < m.dist_mean.size(); ++l) {
            os << fmt17(row.p) << ',' << row.model << ',' << l << ',' << fmt17(m.dist_mean(l)) << ','
               << fmt17(m.obj_mean(l)) << ',' << (l == 0 ? std::string("nan") : fmt17(row.slack_mean(l - 1)))
               << '\n';
        }
    }
    if (!os) throw IoError("write failed: " + path.string());
}

NoiseSweepReport layer_noise_sweep(const std::vector<LabeledModel>& models, const Dataset& data,
                                   const std::vector<double>& sigma_list, const ConstraintKind& ck,
                                   const EvalOptions& options, std::uint64_t seed)
{
    check_models(models, data);
    const auto& ids = data.split(Split::Test);
    if (ids.empty()) throw std::invalid_argument("test split is empty");
    NoiseSweepReport report;
    for (std::size_t si = 0; si < sigma_list.size(); ++si) {
        if (!(sigma_list[si] >= 0)) throw std::invalid_argument("sigma_hat must be nonnegative");
        const NoiseSchedule schedule{NoiseMode::GradProportional, sigma_list[si]};
        for (const auto& m : models) {
            std::vector<Trajectory> trajs(ids.size());
            parallel_for(ids.size(), [&](std::size_t k) {
                const auto& s = data.samples[ids[k]];
                const Vector y0 = eval_initial_estimate(options.y0_seed, ids[k], data.spec.code_dim(), options.y0_std);
                // Same standard-normal draws at every sigma_hat and for every model.
                Rng rng = make_rng(seed, {stream::kLayerNoise, ids[k]});
                trajs[k] = forward(s.x, y0, m.params, schedule, data.spec, rng);
            });
            NoiseSweepRow row;
            row.sigma_hat = sigma_list[si];
            row.model = m.label;
            row.metrics = summarize_trajectories(trajs, data.samples, ids, data.spec, ck);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void export_noise_sweep(const NoiseSweepReport& report, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "sigma_hat,model,layer,dist_mean,l1_mean,satisfaction\n";
    for (const auto& row : report.rows) {
        const auto& m = row.metrics;
        for (Index l = 0; l < m.dist_mean.size(); ++l)
            os << fmt17(row.sigma_hat) << ',' << row.model << ',' << l << ',' << fmt17(m.dist_mean(l)) << ','
               << fmt17(m.l1_mean(l)) << ',' << fmt17(m.satisfaction(l)) << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace unroll
