// unroll: dataset generation, primal-dual training, evaluation and
// robustness sweeps for unrolled optimizers.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical
// failure (divergence, gradient check), 3 I/O error.

#include "unroll/config.hpp"
#include "unroll/demo.hpp"
#include "unroll/errors.hpp"
#include "unroll/eval.hpp"
#include "unroll/gradcheck.hpp"
#include "unroll/parallel.hpp"
#include "unroll/robustness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace unroll;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out;
    std::string data;
    std::vector<std::string> ckpts;
    std::string constraints;
    std::string p_list = "0,0.05,0.1,0.2,0.4";
    std::string sigma_list = "0,0.5,1,2";
};

/// Config file, then --set overrides, then --seed; UNROLL_SEED only fills in
/// a seed nobody set explicitly.
ExperimentConfig resolve_config(const Options& o)
{
    KeyValues kv;
    if (!o.config.empty()) {
        std::ifstream is(o.config);
        if (!is) throw IoError("cannot read config file " + o.config);
        std::stringstream ss;
        ss << is.rdbuf();
        kv = parse_key_values(ss.str());
    }
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    ExperimentConfig cfg;
    apply_settings(cfg, kv);
    const bool seed_in_config = std::any_of(kv.begin(), kv.end(), [](const auto& e) { return e.first == "seed"; });
    if (o.seed) {
        cfg.seed = *o.seed;
    } else if (!seed_in_config) {
        if (const char* env = std::getenv("UNROLL_SEED"); env && *env) {
            try {
                apply_settings(cfg, {{"seed", env}});
            } catch (const ConfigError&) {
                throw ConfigError(std::string("UNROLL_SEED is not an unsigned integer: ") + env);
            }
        }
    }
    if (!o.constraints.empty()) apply_settings(cfg, {{"constraints", o.constraints}});
    cfg.train.seed = cfg.seed;
    validate(cfg.train);
    return cfg;
}

std::vector<double> parse_list(const std::string& text, const char* what)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad value '") + item + "' in " + what);
        }
        if (!(out.back() >= 0)) throw ConfigError(std::string(what) + " entries must be nonnegative");
    }
    if (out.empty()) throw ConfigError(std::string(what) + " is empty");
    return out;
}

std::vector<LabeledModel> load_models(const std::vector<std::string>& specs)
{
    std::vector<LabeledModel> models;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        LabeledModel m;
        const std::string path = eq == std::string::npos ? s : s.substr(eq + 1);
        m.label = eq == std::string::npos ? fs::path(path).stem().string() : s.substr(0, eq);
        if (m.label.empty() || m.label.find(',') != std::string::npos)
            throw ConfigError("checkpoint label must be non-empty and comma-free: '" + s + "'");
        m.params = load_checkpoint(path).first;
        models.push_back(std::move(m));
    }
    return models;
}

fs::path prepare_out(const std::string& out)
{
    if (out.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

ConstraintKind eval_constraint(const ExperimentConfig& cfg, const Dataset& data)
{
    ConstraintKind ck = cfg.train.constraint;
    if (ck.family == ConstraintFamily::GradNorm && data.spec.kind != ProblemKind::Quadratic)
        throw ConfigError("constraint=grad needs a quadratic dataset");
    return ck;
}

class Run {
public:
    Run(std::string command, const Options& o, ExperimentConfig cfg)
        : command_(std::move(command)), options_(o), cfg_(std::move(cfg)),
          start_(std::chrono::steady_clock::now())
    {
    }

    void input(const std::string& name, const std::string& path) { inputs_.emplace_back(name, path); }
    void output(const fs::path& path) { outputs_.push_back(path.string()); }

    /// Writes manifest.txt through a temporary file and a rename.
    void finish(const fs::path& dir) const
    {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const fs::path tmp = dir / "manifest.txt.tmp";
        {
            std::ofstream os(tmp, std::ios::trunc);
            if (!os) throw IoError("cannot write " + tmp.string());
            os << "command = " << command_ << "\n";
            os << "tool_version = " << kToolVersion << "\n";
            os << "seed = " << cfg_.seed << "\n";
            os << "threads = " << num_threads() << "\n";
            for (const auto& [name, path] : inputs_) os << "input." << name << " = " << path << "\n";
            for (const auto& path : outputs_) os << "output = " << path << "\n";
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3f", secs);
            os << "wall_clock_seconds = " << buf << "\n";
            os << "\n[config]\n" << to_text(cfg_);
            if (!os) throw IoError("write failed: " + tmp.string());
        }
        std::error_code ec;
        fs::rename(tmp, dir / "manifest.txt", ec);
        if (ec) throw IoError("cannot finalize manifest: " + ec.message());
    }

    const ExperimentConfig& config() const { return cfg_; }

private:
    std::string command_;
    const Options& options_;
    ExperimentConfig cfg_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::string> outputs_;
};

int cmd_gen(const Options& o)
{
    Run run("gen", o, resolve_config(o));
    const auto& cfg = run.config();
    const fs::path dir = prepare_out(o.out);
    const ProblemSpec spec = make_generation_spec(cfg.gen, cfg.seed);
    GenMetadata meta;
    meta.seed = cfg.seed;
    meta.sparsity = static_cast<std::uint32_t>(cfg.gen.sparsity);
    meta.noise_std = cfg.gen.noise_std;
    meta.oracle_iters = cfg.gen.oracle_iters;
    meta.oracle_tol = cfg.gen.oracle_tol;
    auto signals = gen_signals(spec, cfg.gen.n, cfg.gen.sparsity, cfg.gen.noise_std, cfg.seed);
    const Dataset data = build_dataset(spec, std::move(signals), meta, cfg.gen.fractions);
    save_dataset(data, dir / "dataset.bin");
    run.output(dir / "dataset.bin");
    std::cout << "samples " << data.samples.size() << " (train " << data.split(Split::Train).size()
              << ", validation " << data.split(Split::Validation).size() << ", test "
              << data.split(Split::Test).size() << "), nu " << spec.nu << "\n";
    if (const auto bad = data.unconverged_count())
        std::cerr << "warning: " << bad << " labels did not reach tol " << cfg.gen.oracle_tol << " within "
                  << cfg.gen.oracle_iters << " iterations (residuals recorded)\n";
    run.finish(dir);
    return 0;
}

int cmd_train(const Options& o)
{
    Run run("train", o, resolve_config(o));
    const auto& cfg = run.config();
    if (o.data.empty()) throw ConfigError("--data is required");
    const Dataset data = load_dataset(o.data);
    run.input("data", o.data);
    const fs::path dir = prepare_out(o.out);
    const TrainResult res = train(cfg.train, data);
    save_checkpoint(res.params, res.duals, dir / "model.ckpt");
    write_history_csv(res.history, dir / "history.csv");
    run.output(dir / "model.ckpt");
    run.output(dir / "history.csv");
    const auto& last = res.history.epochs.back();
    std::cout << "epochs " << res.history.epochs.size() << ", final train mse " << last.train_mse
              << ", validation mse " << last.val_mse << "\n";
    run.finish(dir);
    return 0;
}

int cmd_eval(const Options& o)
{
    Run run("eval", o, resolve_config(o));
    const auto& cfg = run.config();
    if (o.data.empty()) throw ConfigError("--data is required");
    if (o.ckpts.size() != 1) throw ConfigError("eval takes exactly one --ckpt");
    const Dataset data = load_dataset(o.data);
    const ModelParams params = load_models(o.ckpts).front().params;
    run.input("data", o.data);
    run.input("ckpt", o.ckpts.front());
    const fs::path dir = prepare_out(o.out);
    const ConstraintKind ck = eval_constraint(cfg, data);
    const MetricsReport r = layer_metrics(params, data, Split::Test, ck, {data.gen.seed, cfg.train.y0_std});
    export_metrics(r, dir / "metrics.csv");
    export_slacks(r, dir / "slacks.csv");
    export_l1_samples(r, dir / "l1.csv");
    run.output(dir / "metrics.csv");
    run.output(dir / "slacks.csv");
    run.output(dir / "l1.csv");
    const Index L = r.dist_mean.size() - 1;
    std::cout << "test samples " << r.sample_count << ", final distance " << r.dist_mean(L)
              << ", min satisfaction " << r.satisfaction.minCoeff() << "\n";
    if (data.spec.kind == ProblemKind::Quadratic) {
        const EnvelopeReport env = rate_envelope_check(r, ck.epsilon);
        std::cout << "rate envelope " << (env.pass ? "pass" : "fail") << ", delta_hat " << env.delta_hat
                  << ", offset " << env.offset << ", min Z / Z0 " << r.gradnorm_mean.minCoeff() / r.gradnorm_mean(0)
                  << "\n";
    }
    run.finish(dir);
    return 0;
}

int cmd_ood(const Options& o)
{
    Run run("ood", o, resolve_config(o));
    const auto& cfg = run.config();
    if (o.data.empty()) throw ConfigError("--data is required");
    if (o.ckpts.empty()) throw ConfigError("at least one --ckpt is required");
    const auto p_list = parse_list(o.p_list, "--p-list");
    const Dataset data = load_dataset(o.data);
    const auto models = load_models(o.ckpts);
    run.input("data", o.data);
    for (const auto& c : o.ckpts) run.input("ckpt", c);
    const fs::path dir = prepare_out(o.out);
    const OodReport rep = ood_sweep(models, data, p_list, eval_constraint(cfg, data),
                                    {data.gen.seed, cfg.train.y0_std}, cfg.seed);
    export_ood(rep, dir / "ood.csv");
    run.output(dir / "ood.csv");
    std::cout << "signal std " << rep.x_std << "\n";
    for (const auto& row : rep.rows)
        std::cout << "p " << row.p << " " << row.model << " final distance "
                  << row.metrics.dist_mean(row.metrics.dist_mean.size() - 1) << "\n";
    run.finish(dir);
    return 0;
}

int cmd_noise_sweep(const Options& o)
{
    Run run("noise-sweep", o, resolve_config(o));
    const auto& cfg = run.config();
    if (o.data.empty()) throw ConfigError("--data is required");
    if (o.ckpts.empty()) throw ConfigError("at least one --ckpt is required");
    const auto sigmas = parse_list(o.sigma_list, "--sigma-list");
    const Dataset data = load_dataset(o.data);
    const auto models = load_models(o.ckpts);
    run.input("data", o.data);
    for (const auto& c : o.ckpts) run.input("ckpt", c);
    const fs::path dir = prepare_out(o.out);
    const NoiseSweepReport rep = layer_noise_sweep(models, data, sigmas, eval_constraint(cfg, data),
                                                   {data.gen.seed, cfg.train.y0_std}, cfg.seed);
    export_noise_sweep(rep, dir / "noise.csv");
    run.output(dir / "noise.csv");
    for (const auto& row : rep.rows)
        std::cout << "sigma_hat " << row.sigma_hat << " " << row.model << " final distance "
                  << row.metrics.dist_mean(row.metrics.dist_mean.size() - 1) << "\n";
    run.finish(dir);
    return 0;
}

int cmd_gradcheck(const Options& o)
{
    Run run("gradcheck", o, resolve_config(o));
    const GradCheckReport rep = run_gradcheck(run.config());
    for (const auto& inst : rep.instances)
        std::cout << "instance " << inst.index << " " << to_string(inst.arch) << " max_rel_error "
                  << inst.result.max_rel_error << " checked " << inst.result.checked << " skipped_near_kink "
                  << inst.result.skipped_near_kink << "\n";
    std::cout << "max_rel_error " << rep.max_rel_error << " threshold " << rep.threshold << " "
              << (rep.pass() ? "PASS" : "FAIL") << "\n";
    if (!o.out.empty()) run.finish(prepare_out(o.out));
    return rep.pass() ? 0 : 2;
}

int cmd_demo_quad(const Options& o)
{
    Run run("demo-quad", o, resolve_config(o));
    const fs::path dir = prepare_out(o.out);
    DemoQuadConfig dc;
    dc.seed = run.config().seed;
    const DemoQuadResult r = run_demo_quad(dc);
    for (const auto& t : r.trajectories) {
        const fs::path path = dir / ("trajectory_" + t.name + ".csv");
        export_trajectory(t, path);
        run.output(path);
    }
    for (const auto& t : r.trajectories)
        std::cout << t.name << " final distance " << t.dist(t.dist.size() - 1) << "\n";
    run.finish(dir);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Unrolled optimizers with descending constraints"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", o.config, "Key-value configuration file");
        sub->add_option("--set", o.sets, "Override a configuration key (key=value)");
        sub->add_option("--seed", o.seed, "Master seed (falls back to UNROLL_SEED)");
        sub->add_option("--threads", o.threads, "Worker threads (results do not depend on it)");
        auto* out = sub->add_option("--out", o.out, "Output directory");
        if (needs_out) out->required();
    };
    auto* gen = app.add_subcommand("gen", "Generate a labelled dataset");
    common(gen, true);
    auto* tr = app.add_subcommand("train", "Train an unrolled optimizer");
    common(tr, true);
    tr->add_option("--data", o.data, "Dataset file")->required();
    tr->add_option("--constraints", o.constraints, "on|off, overrides the config")
        ->check(CLI::IsMember({"on", "off"}));
    auto* ev = app.add_subcommand("eval", "Per-layer metrics on the test split");
    common(ev, true);
    ev->add_option("--data", o.data, "Dataset file")->required();
    ev->add_option("--ckpt", o.ckpts, "Checkpoint file")->required();
    auto* ood = app.add_subcommand("ood", "Out-of-distribution sweep");
    common(ood, true);
    ood->add_option("--data", o.data, "Dataset file")->required();
    ood->add_option("--ckpt", o.ckpts, "Checkpoint as label=path (repeatable)")->required();
    ood->add_option("--p-list", o.p_list, "Comma-separated shifts relative to std(x)");
    auto* ns = app.add_subcommand("noise-sweep", "Inference-time layer noise sweep");
    common(ns, true);
    ns->add_option("--data", o.data, "Dataset file")->required();
    ns->add_option("--ckpt", o.ckpts, "Checkpoint as label=path (repeatable)")->required();
    ns->add_option("--sigma-list", o.sigma_list, "Comma-separated noise factors");
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the Lagrangian gradient");
    common(gc, false);
    auto* demo = app.add_subcommand("demo-quad", "Two-dimensional least-squares trajectories");
    common(demo, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        set_num_threads(o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency()));
        if (*gen) return cmd_gen(o);
        if (*tr) return cmd_train(o);
        if (*ev) return cmd_eval(o);
        if (*ood) return cmd_ood(o);
        if (*ns) return cmd_noise_sweep(o);
        if (*gc) return cmd_gradcheck(o);
        if (*demo) return cmd_demo_quad(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
