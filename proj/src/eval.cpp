#include "unroll/eval.hpp"

#include "unroll/errors.hpp"
#include "unroll/parallel.hpp"
#include "unroll/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace unroll {

namespace {

std::string fmt17(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

MetricsReport summarize_trajectories(const std::vector<Trajectory>& trajectories,
                                     const std::vector<LabeledSample>& samples,
                                     const std::vector<std::uint32_t>& ids, const ProblemSpec& spec,
                                     const ConstraintKind& ck)
{
    if (trajectories.empty()) throw std::invalid_argument("cannot evaluate an empty split");
    if (trajectories.size() != ids.size()) throw std::invalid_argument("trajectory/sample count mismatch");
    const std::size_t n = trajectories.size();
    const Index rows = Index(trajectories.front().y.size());
    const Index L = rows - 1;

    // Per-sample statistics are computed independently, then reduced in order.
    Matrix dist(rows, Index(n)), obj(rows, Index(n)), gnorm(rows, Index(n)), l1(rows, Index(n));
    Matrix slacks(L, Index(n));
    parallel_for(n, [&](std::size_t k) {
        const auto& traj = trajectories[k];
        const auto& s = samples[ids[k]];
        for (Index l = 0; l < rows; ++l) {
            const Vector& y = traj.y[std::size_t(l)];
            dist(l, Index(k)) = (y - s.y_star).norm();
            obj(l, Index(k)) = objective(y, s.x, spec);
            gnorm(l, Index(k)) = objective_gradient(y, s.x, spec).norm();
            l1(l, Index(k)) = y.lpNorm<1>();
        }
        slacks.col(Index(k)) = constraint_slacks(traj, s.x, s.y_star, spec, ck);
    });

    MetricsReport r;
    r.sample_count = n;
    r.sample_ids = ids;
    auto row_mean = [n](const Matrix& m) {
        Vector out = Vector::Zero(m.rows());
        for (Index k = 0; k < Index(n); ++k) out += m.col(k);
        return Vector(out / double(n));
    };
    r.dist_mean = row_mean(dist);
    r.obj_mean = row_mean(obj);
    r.gradnorm_mean = row_mean(gnorm);
    r.l1_mean = row_mean(l1);
    r.satisfaction = Vector::Ones(rows);
    for (Index l = 1; l < rows; ++l) {
        std::size_t ok = 0;
        for (Index k = 0; k < Index(n); ++k) ok += slacks(l - 1, k) <= 0.0 ? 1 : 0;
        r.satisfaction(l) = double(ok) / double(n);
    }
    r.zbest = r.gradnorm_mean;
    for (Index l = 1; l < rows; ++l) r.zbest(l) = std::min(r.zbest(l - 1), r.gradnorm_mean(l));
    r.slacks = std::move(slacks);
    r.l1_samples = std::move(l1);
    return r;
}

MetricsReport layer_metrics(const ModelParams& params, const Dataset& data, Split split,
                            const ConstraintKind& ck, const EvalOptions& options)
{
    const auto& ids = data.split(split);
    if (ids.empty()) throw std::invalid_argument(std::string("split '") + to_string(split) + "' is empty");
    std::vector<Trajectory> trajs(ids.size());
    parallel_for(ids.size(), [&](std::size_t k) {
        const auto& s = data.samples[ids[k]];
        const Vector y0 = eval_initial_estimate(options.y0_seed, ids[k], data.spec.code_dim(), options.y0_std);
        trajs[k] = forward(s.x, y0, params);
    });
    return summarize_trajectories(trajs, data.samples, ids, data.spec, ck);
}

EnvelopeReport rate_envelope_check(const MetricsReport& report, double epsilon, bool offset_fit, double tau)
{
    const Index rows = report.gradnorm_mean.size();
    EnvelopeReport out;
    out.tau = tau;
    double min_sat = 1.0;
    for (Index l = 1; l < rows; ++l) min_sat = std::min(min_sat, report.satisfaction(l));
    out.delta_hat = 1.0 - min_sat;
    const double rate = (1.0 - out.delta_hat) * (1.0 - epsilon);
    const double z0 = report.gradnorm_mean(0);

    Vector geometric(rows);
    for (Index l = 0; l < rows; ++l) geometric(l) = std::pow(rate, double(l)) * z0;
    if (offset_fit && rows > 1) {
        double c = report.gradnorm_mean(1) - geometric(1);
        for (Index l = 2; l < rows; ++l) c = std::min(c, report.gradnorm_mean(l) - geometric(l));
        out.offset = std::max(0.0, c);
    }
    out.envelope = geometric.array() + out.offset * (1.0 + tau);
    const double slack = 1e-12 * std::max(1.0, z0);
    for (Index l = 0; l < rows; ++l)
        if (report.gradnorm_mean(l) > out.envelope(l) + slack) out.violations.push_back(std::size_t(l));
    out.pass = out.violations.empty();
    return out;
}

void export_metrics(const MetricsReport& r, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "layer,dist_mean,obj_mean,gradnorm_mean,l1_mean,satisfaction,zbest\n";
    for (Index l = 0; l < r.dist_mean.size(); ++l) {
        os << l << ',' << fmt17(r.dist_mean(l)) << ',' << fmt17(r.obj_mean(l)) << ','
           << fmt17(r.gradnorm_mean(l)) << ',' << fmt17(r.l1_mean(l)) << ','
           << fmt17(r.satisfaction(l)) << ',' << fmt17(r.zbest(l)) << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

MetricsReport parse_metrics(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "layer,dist_mean,obj_mean,gradnorm_mean,l1_mean,satisfaction,zbest")
        throw IoError(path.string() + ": unexpected metrics header");
    std::vector<std::array<double, 6>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        if (std::stoul(cell) != rows.size()) throw IoError(path.string() + ": layers out of order");
        std::array<double, 6> vals{};
        for (double& v : vals) {
            if (!std::getline(ss, cell, ',')) throw IoError(path.string() + ": short row");
            v = std::strtod(cell.c_str(), nullptr);
        }
        rows.push_back(vals);
    }
    if (rows.empty()) throw IoError(path.string() + ": no data rows");
    MetricsReport r;
    const Index n = Index(rows.size());
    Vector* cols[] = {&r.dist_mean, &r.obj_mean, &r.gradnorm_mean, &r.l1_mean, &r.satisfaction, &r.zbest};
    for (int c = 0; c < 6; ++c) {
        cols[c]->resize(n);
        for (Index l = 0; l < n; ++l) (*cols[c])(l) = rows[std::size_t(l)][std::size_t(c)];
    }
    return r;
}

void export_slacks(const MetricsReport& r, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "layer,sample,slack\n";
    for (Index l = 0; l < r.slacks.rows(); ++l)
        for (Index k = 0; k < r.slacks.cols(); ++k)
            os << l + 1 << ',' << r.sample_ids[std::size_t(k)] << ',' << fmt17(r.slacks(l, k)) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

void export_l1_samples(const MetricsReport& r, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "layer,sample,l1\n";
    for (Index l = 0; l < r.l1_samples.rows(); ++l)
        for (Index k = 0; k < r.l1_samples.cols(); ++k)
            os << l << ',' << r.sample_ids[std::size_t(k)] << ',' << fmt17(r.l1_samples(l, k)) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace unroll
