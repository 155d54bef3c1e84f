#include "unroll/gradcheck.hpp"

#include <algorithm>

namespace unroll {

GradCheckProblem make_gradcheck_problem(const ExperimentConfig& config, Arch arch, std::size_t index)
{
    const std::uint64_t seed = stream_seed(config.seed, {stream::kGradCheck, index, std::uint64_t(arch)});
    GenConfig gen = config.gen;
    gen.kind = arch == Arch::Lista ? ProblemKind::Lasso : ProblemKind::Quadratic;

    GradCheckProblem g;
    g.spec = make_generation_spec(gen, seed);
    const Index p = g.spec.signal_dim(), d = g.spec.code_dim();
    const auto sparsity = std::min<std::size_t>(gen.sparsity, std::size_t(d));
    auto signals = gen_signals(g.spec, config.gradcheck.batch, sparsity, gen.noise_std, seed);

    Rng rng = make_rng(seed, {stream::kInitWeights});
    for (auto& x : signals) {
        const LabeledSample s = label_signal(g.spec, std::move(x), int(gen.oracle_iters), gen.oracle_tol);
        BatchSample b;
        b.x = s.x;
        b.y_star = s.y_star;
        b.y0 = gaussian_vector(rng, d, config.train.y0_std);
        b.noise_seed = rng();
        g.batch.push_back(std::move(b));
    }

    if (arch == Arch::Lista) {
        // Move away from the ISTA point so layers differ.
        g.params = init_lista(g.spec, config.train.layers);
        std::normal_distribution<double> jitter(0.0, 0.1);
        for_each_block(g.params, [&](std::size_t, const char*, std::span<double> a) {
            for (double& v : a) v *= 1.0 + jitter(rng);
        });
        for (auto& layer : g.params.lista) layer.beta = layer.beta.cwiseAbs();
        g.ck = make_constraint(ConstraintFamily::DistToOpt, config.train.constraint.epsilon);
    } else {
        g.params = init_resgd({p, d, config.train.hidden}, config.train.layers, seed);
        g.ck = make_constraint(ConstraintFamily::GradNorm, config.train.constraint.epsilon);
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    g.duals.resize(Index(config.train.layers));
    for (Index l = 0; l < g.duals.size(); ++l) g.duals(l) = unit(rng);
    return g;
}

GradCheckReport run_gradcheck(const ExperimentConfig& config)
{
    GradCheckReport report;
    report.threshold = config.gradcheck.threshold;
    for (std::size_t i = 0; i < config.gradcheck.instances; ++i) {
        for (Arch arch : {Arch::Lista, Arch::ResGd}) {
            const GradCheckProblem g = make_gradcheck_problem(config, arch, i);
            GradCheckOptions options;
            options.step = config.gradcheck.step;
            options.samples = config.gradcheck.coords;
            options.seed = stream_seed(config.seed, {stream::kGradCheck, i, std::uint64_t(arch), 1});
            GradCheckInstance inst;
            inst.index = i;
            inst.arch = arch;
            inst.result = finite_diff_check(g.params, g.batch, g.duals, g.ck, g.spec, options);
            report.max_rel_error = std::max(report.max_rel_error, inst.result.max_rel_error);
            report.instances.push_back(inst);
        }
    }
    return report;
}

} // namespace unroll
