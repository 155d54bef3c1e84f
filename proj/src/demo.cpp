#include "unroll/demo.hpp"

#include "unroll/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace unroll {

namespace {

DemoTrajectory make_trajectory(std::string name, std::vector<Vector> ys, const Vector& x,
                               const Vector& y_star, const ProblemSpec& spec)
{
    DemoTrajectory t;
    t.name = std::move(name);
    t.dist.resize(Index(ys.size()));
    t.obj.resize(Index(ys.size()));
    for (std::size_t l = 0; l < ys.size(); ++l) {
        t.dist(Index(l)) = (ys[l] - y_star).norm();
        t.obj(Index(l)) = objective(ys[l], x, spec);
    }
    t.y = std::move(ys);
    return t;
}

} // namespace

ProblemSpec demo_quad_problem()
{
    const double c = std::cos(0.5), s = std::sin(0.5);
    Matrix rot(2, 2);
    rot << c, -s, s, c;
    Matrix mat = Eigen::Vector2d(1.0, 1.0 / 3.0).asDiagonal() * rot.transpose();
    return make_problem(ProblemKind::Quadratic, std::move(mat), 0.0);
}

std::vector<Vector> gradient_descent(const Vector& x, const Vector& y0, const ProblemSpec& spec,
                                     std::size_t steps, const std::vector<Vector>& perturbations)
{
    if (!perturbations.empty() && perturbations.size() != steps)
        throw std::invalid_argument("gradient_descent: need one perturbation entry per step");
    std::vector<Vector> ys{y0};
    for (std::size_t l = 1; l <= steps; ++l) {
        Vector u = ys.back();
        if (!perturbations.empty() && perturbations[l - 1].size() != 0) u += perturbations[l - 1];
        ys.push_back(u - objective_gradient(u, x, spec) / spec.nu);
    }
    return ys;
}

const DemoTrajectory& DemoQuadResult::find(const std::string& name) const
{
    for (const auto& t : trajectories)
        if (t.name == name) return t;
    throw std::out_of_range("no trajectory named " + name);
}

DemoQuadResult run_demo_quad(const DemoQuadConfig& config)
{
    if (config.perturb_layer < 1 || config.perturb_layer >= config.layers)
        throw ConfigError("perturb_layer must lie in [1, layers)");

    DemoQuadResult r;
    r.spec = demo_quad_problem();
    GenMetadata meta;
    meta.seed = config.seed;
    meta.sparsity = 2;
    meta.noise_std = 0.0;
    auto signals = gen_signals(r.spec, config.samples, 2, 0.0, config.seed);
    const Dataset data = build_dataset(r.spec, std::move(signals), meta, SplitFractions{});

    TrainConfig tc;
    tc.arch = Arch::ResGd;
    tc.layers = config.layers;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.mu_w = config.mu_w;
    tc.mu_lambda = config.mu_lambda;
    tc.constraint = make_constraint(ConstraintFamily::DistToOpt, config.epsilon);
    tc.seed = config.seed;
    tc.constraints_enabled = false;
    r.unconstrained = train(tc, data).params;
    tc.constraints_enabled = true;
    r.constrained = train(tc, data).params;

    const auto id = data.split(Split::Test).front();
    const auto& sample = data.samples[id];
    r.x = sample.x;
    r.y_star = sample.y_star;
    r.y0 = eval_initial_estimate(config.seed, id, 2);

    // One random direction, oriented away from y* and scaled to a fraction of
    // the initial distance.
    Rng rng = make_rng(config.seed, {stream::kLayerNoise, id});
    Vector dir = gaussian_vector(rng, 2, 1.0);
    if (dir.dot(r.y0 - r.y_star) < 0) dir = -dir;
    r.perturbation = dir.normalized() * (config.perturb_scale * (r.y0 - r.y_star).norm());
    std::vector<Vector> noise(config.layers, Vector());
    noise[config.perturb_layer] = r.perturbation;

    const std::size_t L = config.layers;
    auto add = [&](std::string name, std::vector<Vector> ys) {
        r.trajectories.push_back(make_trajectory(std::move(name), std::move(ys), r.x, r.y_star, r.spec));
    };
    add("gd", gradient_descent(r.x, r.y0, r.spec, L));
    add("unconstrained", forward(r.x, r.y0, r.unconstrained).y);
    add("constrained", forward(r.x, r.y0, r.constrained).y);
    add("gd_perturbed", gradient_descent(r.x, r.y0, r.spec, L, noise));
    add("unconstrained_perturbed", forward_with_noise(r.x, r.y0, r.unconstrained, noise).y);
    add("constrained_perturbed", forward_with_noise(r.x, r.y0, r.constrained, noise).y);
    return r;
}

void export_trajectory(const DemoTrajectory& t, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const Index d = t.y.empty() ? 0 : t.y.front().size();
    os << "layer";
    for (Index i = 1; i <= d; ++i) os << ",y_" << i;
    os << ",dist,obj\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (std::size_t l = 0; l < t.y.size(); ++l) {
        os << l;
        for (Index i = 0; i < d; ++i) os << ',' << num(t.y[l](i));
        os << ',' << num(t.dist(Index(l))) << ',' << num(t.obj(Index(l))) << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace unroll
