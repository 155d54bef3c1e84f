// Acceptance run: one PASS/FAIL line per criterion. Datasets and models are
// produced through the command-line tool; analysis uses the library.

#include "unroll/demo.hpp"
#include "unroll/eval.hpp"
#include "unroll/gradcheck.hpp"
#include "unroll/robustness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace unroll;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string join(const Vector& v, const char* f = "%.4g")
{
    std::string out;
    for (Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(f, v(i));
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Cli {
public:
    explicit Cli(fs::path log) : log_(std::move(log)) {}

    /// Runs the tool; stdout goes to `stdout_file` when given, else to the log.
    int run(const std::string& args, const std::string& stdout_file = "")
    {
        const std::string out = stdout_file.empty() ? ">> " + log_.string() : "> " + stdout_file;
        const std::string cmd = std::string(UNROLL_CLI_PATH) + " " + args + " " + out + " 2>> " + log_.string();
        {
            std::ofstream(log_, std::ios::app) << "$ unroll " << args << "\n";
        }
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    void must(const std::string& args)
    {
        if (const int code = run(args); code != 0)
            throw std::runtime_error("command failed with exit " + std::to_string(code) + ": unroll " + args);
    }

private:
    fs::path log_;
};

std::string read_file(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Files of `a` and `b` (manifest excluded) that are missing or differ.
std::vector<std::string> directory_diff(const fs::path& a, const fs::path& b)
{
    std::set<std::string> names;
    for (const auto& dir : {a, b})
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().filename() != "manifest.txt") names.insert(e.path().filename().string());
    std::vector<std::string> diff;
    for (const auto& n : names)
        if (!fs::exists(a / n) || !fs::exists(b / n) || read_file(a / n) != read_file(b / n)) diff.push_back(n);
    return diff;
}

// ---------------------------------------------------------------------------

Verdict oracle_agreement()
{
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const Index d = 4 + Index(k % 5);
        Rng rng = make_rng(2024, {k});
        Matrix mat(4, d);
        for (Index i = 0; i < mat.size(); ++i) mat.data()[i] = gaussian_vector(rng, 1)(0);
        const auto spec = make_problem(ProblemKind::Lasso, std::move(mat), 0.5);
        const Vector x = gaussian_vector(rng, 4, 2.0);
        const auto sol = ista_solve(x, spec, 500000, 1e-13);
        worst = std::max(worst, (sol.y - lasso_oracle_small(x, spec)).norm());
    }
    const double secs = seconds_since(t0);
    return {1, "oracle correctness", worst <= 1e-5 && secs < 60.0,
            "max |ista - enumeration| = " + fmt("%.3g", worst) + " over 100 instances in " + fmt("%.2f", secs) + " s"};
}

Verdict ista_equivalence()
{
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        GenConfig gen;
        const ProblemSpec spec = make_generation_spec(gen, 500 + k);
        const auto xs = gen_signals(spec, 1, gen.sparsity, gen.noise_std, 500 + k);
        Rng rng = make_rng(k, {stream::kEvalInit});
        const Vector y0 = gaussian_vector(rng, spec.code_dim());
        for (std::size_t L = 1; L <= 10; ++L) {
            const auto traj = forward(xs[0], y0, init_lista(spec, L));
            Vector y = y0;
            for (std::size_t l = 1; l <= L; ++l) {
                y = ista_step(y, xs[0], spec);
                worst = std::max(worst, (traj.y[l] - y).norm());
            }
        }
    }
    return {2, "ISTA equivalence", worst <= 1e-12,
            "max |LISTA(init) - ISTA| = " + fmt("%.3g", worst) + " over 20 instances, L = 1..10"};
}

Verdict gradient_correctness()
{
    ExperimentConfig cfg;
    const GradCheckReport rep = run_gradcheck(cfg);
    double lista = 0.0, resgd = 0.0;
    for (const auto& i : rep.instances)
        (i.arch == Arch::Lista ? lista : resgd) = std::max(i.arch == Arch::Lista ? lista : resgd, i.result.max_rel_error);

    // Mutation: doubling the largest gradient entry must be caught.
    double mutated = 1.0;
    for (Arch arch : {Arch::Lista, Arch::ResGd}) {
        const auto g = make_gradcheck_problem(cfg, arch, 0);
        ParamGrads grads = lagrangian_grad(g.batch, g.params, g.duals, g.ck, NoiseSchedule::off(), g.spec);
        std::size_t big = 0;
        for (std::size_t i = 0; i < grads.size(); ++i)
            if (std::abs(param_at(grads, i)) > std::abs(param_at(grads, big))) big = i;
        param_at(grads, big) *= 2.0;
        mutated = std::min(mutated, finite_diff_check(g.params, g.batch, g.duals, g.ck, g.spec, grads, {big}).max_rel_error);
    }
    return {3, "gradient correctness", rep.max_rel_error <= 1e-4 && mutated > 0.3,
            "max rel err LISTA+CII " + fmt("%.3g", lista) + ", ResGd+CI " + fmt("%.3g", resgd)
                + " (20 instances each); mutated entry rel err " + fmt("%.3g", mutated)};
}

// ---------------------------------------------------------------------------

struct DeskSeed {
    std::uint64_t seed = 0;
    Dataset data;
    ModelParams constrained, unconstrained, unconstrained_clean; // baseline with and without training noise
    double train_seconds_constrained = 0.0, train_seconds_unconstrained = 0.0;
};

DeskSeed desk_run(Cli& cli, const fs::path& work, std::uint64_t seed)
{
    DeskSeed r;
    r.seed = seed;
    const fs::path dir = work / ("desk_seed" + std::to_string(seed));
    const std::string s = " --seed " + std::to_string(seed);
    const std::string data = " --data " + (dir / "gen/dataset.bin").string();
    cli.must("gen" + s + " --out " + (dir / "gen").string());
    auto t0 = std::chrono::steady_clock::now();
    cli.must("train" + s + data + " --out " + (dir / "constrained").string());
    r.train_seconds_constrained = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    cli.must("train" + s + data + " --constraints off --out " + (dir / "unconstrained").string());
    r.train_seconds_unconstrained = seconds_since(t0);
    cli.must("train" + s + data + " --constraints off --set noise_enabled=off --out "
             + (dir / "unconstrained_clean").string());
    r.data = load_dataset(dir / "gen/dataset.bin");
    r.constrained = load_checkpoint(dir / "constrained/model.ckpt").first;
    r.unconstrained = load_checkpoint(dir / "unconstrained/model.ckpt").first;
    r.unconstrained_clean = load_checkpoint(dir / "unconstrained_clean/model.ckpt").first;
    return r;
}

const ConstraintKind kDesk = make_constraint(ConstraintFamily::DistToOpt, 0.05);

MetricsReport test_metrics(const ModelParams& p, const Dataset& d)
{
    return layer_metrics(p, d, Split::Test, kDesk, {d.gen.seed, 1.0});
}

/// Layers l ≥ 1 where dist_l > (1 − ε + 0.05)·dist_{l−1}.
std::vector<int> rate_violations(const MetricsReport& m)
{
    std::vector<int> v;
    for (Index l = 1; l < m.dist_mean.size(); ++l)
        if (m.dist_mean(l) > (1.0 - 0.05 + 0.05) * m.dist_mean(l - 1)) v.push_back(int(l));
    return v;
}

std::string list(const std::vector<int>& v)
{
    std::string out = "{";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out + "}";
}

Verdict descent(const DeskSeed& s)
{
    const auto c = rate_violations(test_metrics(s.constrained, s.data));
    const auto u = rate_violations(test_metrics(s.unconstrained, s.data));
    const bool timing = s.train_seconds_constrained <= 900 && s.train_seconds_unconstrained <= 900;
    const bool pass = c.size() <= 1 && u.size() >= 3 && timing;
    return {4, "descent reproduction", pass,
            "constrained violates " + std::to_string(c.size()) + "/10 layers " + list(c) + " (need <= 1), baseline violates "
                + std::to_string(u.size()) + "/10 " + list(u) + " (need >= 3); train time "
                + fmt("%.1f", s.train_seconds_constrained) + " s / " + fmt("%.1f", s.train_seconds_unconstrained) + " s"};
}

Verdict matched_performance(const DeskSeed& s)
{
    const double c = split_mse(s.constrained, s.data, Split::Test, s.data.gen.seed);
    const double u = split_mse(s.unconstrained, s.data, Split::Test, s.data.gen.seed);
    return {5, "matched final performance", c <= 1.3 * u,
            "final test MSE constrained " + fmt("%.4g", c) + " vs baseline " + fmt("%.4g", u) + " (ratio "
                + fmt("%.3f", c / u) + ", need <= 1.3)"};
}

Verdict l1_trend(const DeskSeed& s)
{
    const Vector c = test_metrics(s.constrained, s.data).l1_mean;
    const Vector u = test_metrics(s.unconstrained, s.data).l1_mean;
    auto monotone = [](const Vector& v) {
        for (Index l = 2; l < v.size(); ++l)
            if (v(l) > 1.05 * v(l - 1)) return false;
        return true;
    };
    const double change = std::abs(u(9) - u(1)) / u(1);
    return {6, "l1 monotonic trend", monotone(c),
            "constrained mean |y_l|_1 (l=1..10) " + join(c.tail(c.size() - 1)) + (monotone(c) ? " non-increasing" : " NOT non-increasing")
                + " within 5%; baseline " + join(u.tail(u.size() - 1)) + ", change 1->9 " + fmt("%.1f%%", 100 * change)
                + (monotone(u) ? ", monotone" : ", not monotone")};
}

Verdict rate_envelope(Cli& cli, const fs::path& work)
{
    const fs::path dir = work / "quadratic";
    const std::string gen = " --seed 1 --set kind=quadratic --set p=4 --set d=16 --set sparsity=4";
    const std::string train = " --set arch=resgd --set constraint=grad --set hidden=32 --set mu_w=1e-4"
                              " --set mu_lambda=1e-2 --set epochs=300";
    cli.must("gen" + gen + " --out " + (dir / "gen").string());
    cli.must("train" + gen + train + " --data " + (dir / "gen/dataset.bin").string() + " --out " + (dir / "model").string());
    const Dataset data = load_dataset(dir / "gen/dataset.bin");
    const ModelParams params = load_checkpoint(dir / "model/model.ckpt").first;
    const auto ck = make_constraint(ConstraintFamily::GradNorm, 0.05);
    const MetricsReport m = layer_metrics(params, data, Split::Test, ck, {data.gen.seed, 1.0});
    const EnvelopeReport env = rate_envelope_check(m, ck.epsilon);
    const double ratio = m.gradnorm_mean.minCoeff() / m.gradnorm_mean(0);
    std::vector<int> viol(env.violations.begin(), env.violations.end());
    return {7, "rate envelope", env.pass && ratio <= 0.2,
            "Z_l " + join(m.gradnorm_mean) + "; satisfaction " + join(m.satisfaction.tail(m.satisfaction.size() - 1), "%.2f")
                + "; delta_hat " + fmt("%.3f", env.delta_hat) + ", c " + fmt("%.4g", env.offset) + ", envelope "
                + (env.pass ? "holds" : "violated at " + list(viol)) + "; min Z / Z_0 = " + fmt("%.3f", ratio)
                + " (need <= 0.2)"};
}

Verdict ood_ordering(const std::vector<DeskSeed>& seeds)
{
    const std::vector<double> ps{0.05, 0.1, 0.2, 0.4};
    Matrix dist = Matrix::Zero(3, Index(ps.size())); // constrained, baseline, baseline without noise
    for (const auto& s : seeds) {
        const auto rep = ood_sweep({{"c", s.constrained}, {"u", s.unconstrained}, {"u0", s.unconstrained_clean}},
                                   s.data, ps, kDesk, {s.data.gen.seed, 1.0}, s.seed);
        for (std::size_t k = 0; k < rep.rows.size(); ++k) {
            const auto& m = rep.rows[k].metrics;
            dist(Index(k % 3), Index(k / 3)) += m.dist_mean(m.dist_mean.size() - 1) / double(seeds.size());
        }
    }
    int wins = 0;
    for (Index j = 0; j < dist.cols(); ++j)
        if (dist(0, j) <= dist(1, j) && dist(0, j) <= dist(2, j)) ++wins;
    return {8, "OOD ordering", wins >= 3,
            "mean final distance over 3 seeds at p = 0.05,0.1,0.2,0.4: constrained " + join(dist.row(0).transpose())
                + ", baseline " + join(dist.row(1).transpose()) + ", baseline without noise " + join(dist.row(2).transpose())
                + "; constrained best at " + std::to_string(wins) + "/4 (need >= 3)"};
}

Verdict noise_resilience(const std::vector<DeskSeed>& seeds)
{
    Vector c = Vector::Zero(10), u = Vector::Zero(10), u0 = Vector::Zero(10);
    for (const auto& s : seeds) {
        const auto rep = layer_noise_sweep({{"c", s.constrained}, {"u", s.unconstrained}, {"u0", s.unconstrained_clean}},
                                           s.data, {1.0}, kDesk, {s.data.gen.seed, 1.0}, s.seed);
        const double w = 1.0 / double(seeds.size());
        c += w * rep.rows[0].metrics.satisfaction.tail(10);
        u += w * rep.rows[1].metrics.satisfaction.tail(10);
        u0 += w * rep.rows[2].metrics.satisfaction.tail(10);
    }
    int wins = 0, wins0 = 0;
    for (Index l = 0; l < 10; ++l) {
        wins += c(l) > u(l);
        wins0 += c(l) > u0(l);
    }
    return {9, "layer-noise resilience", wins >= 7,
            "satisfaction at sigma_hat = 1 (3-seed mean), constrained " + join(c, "%.3f") + ", baseline " + join(u, "%.3f")
                + "; constrained higher on " + std::to_string(wins) + "/10 layers (need >= 7); vs baseline without noise "
                + join(u0, "%.3f") + ": " + std::to_string(wins0) + "/10"};
}

Verdict determinism(Cli& cli, const fs::path& work)
{
    const fs::path dir = work / "determinism";
    const std::string cfg = " --seed 7 --set n=300 --set epochs=3";
    const std::string data = " --data " + (dir / "gen_a/dataset.bin").string();
    const std::string ckpt = " --ckpt " + (dir / "train_a/model.ckpt").string();
    const std::map<std::string, std::string> commands = {
        {"gen", "gen" + cfg},
        {"train", "train" + cfg + data},
        {"eval", "eval" + cfg + data + ckpt},
        {"ood", "ood" + cfg + data + ckpt},
        {"noise-sweep", "noise-sweep" + cfg + data + ckpt},
        {"demo-quad", "demo-quad --seed 7"},
    };
    std::vector<std::string> problems;
    // Order matters: later commands read gen_a and train_a.
    for (const std::string name : {"gen", "train", "eval", "ood", "noise-sweep", "demo-quad"}) {
        const std::string stem = name == "noise-sweep" ? "noise" : name == "demo-quad" ? "demo" : name;
        const fs::path a = dir / (stem + "_a"), b = dir / (stem + "_b"), c = dir / (stem + "_t8");
        cli.must(commands.at(name) + " --threads 1 --out " + a.string());
        cli.must(commands.at(name) + " --threads 1 --out " + b.string());
        cli.must(commands.at(name) + " --threads 8 --out " + c.string());
        for (const auto& f : directory_diff(a, b)) problems.push_back(name + ":" + f + " (repeat)");
        for (const auto& f : directory_diff(a, c)) problems.push_back(name + ":" + f + " (threads)");
    }
    const std::string gc = "gradcheck --seed 7 --set gradcheck_instances=3";
    cli.run(gc + " --threads 1", (dir / "gradcheck_a.txt").string());
    cli.run(gc + " --threads 1", (dir / "gradcheck_b.txt").string());
    cli.run(gc + " --threads 8", (dir / "gradcheck_t8.txt").string());
    const std::string g = read_file(dir / "gradcheck_a.txt");
    if (g.empty() || g != read_file(dir / "gradcheck_b.txt") || g != read_file(dir / "gradcheck_t8.txt"))
        problems.push_back("gradcheck:stdout");
    std::string detail = "gen, train, eval, ood, noise-sweep, demo-quad, gradcheck repeated and at --threads 8: ";
    if (problems.empty()) return {10, "determinism", true, detail + "all outputs byte-identical (manifests excluded)"};
    for (const auto& p : problems) detail += p + " ";
    return {10, "determinism", false, detail + "differ"};
}

Verdict toy_demo()
{
    const DemoQuadResult r = run_demo_quad(DemoQuadConfig{});
    const auto& clean = r.find("constrained");
    const auto& pert = r.find("constrained_perturbed");
    std::vector<int> rises;
    for (Index l = 1; l < clean.dist.size(); ++l)
        if (clean.dist(l) > clean.dist(l - 1)) rises.push_back(int(l));
    const Index L = pert.dist.size() - 1;
    const bool recovered = pert.dist(L) <= pert.dist(3);
    const auto& un = r.find("unconstrained");
    const auto& unp = r.find("unconstrained_perturbed");
    return {11, "toy demo", rises.empty() && recovered,
            "constrained clean distance " + join(clean.dist) + (rises.empty() ? " non-increasing" : " rises at " + list(rises))
                + "; perturbed final " + fmt("%.4g", pert.dist(L)) + " vs layer-3 " + fmt("%.4g", pert.dist(3))
                + "; unconstrained clean final " + fmt("%.4g", un.dist(L)) + ", perturbed final " + fmt("%.4g", unp.dist(L))};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory (recreated)");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);

    const fs::path dir = fs::absolute(work);
    fs::remove_all(dir);
    fs::create_directories(dir);
    Cli cli(dir / "commands.log");
    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

    std::vector<Verdict> verdicts;
    auto record = [&](int id, const std::string& name, auto&& fn) {
        if (!wanted(id)) return;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {id, name, false, std::string("error: ") + e.what()};
        }
        std::cout << "  [" << id << " finished in " << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
        verdicts.push_back(v);
    };

    record(1, "oracle correctness", oracle_agreement);
    record(2, "ISTA equivalence", ista_equivalence);
    record(3, "gradient correctness", gradient_correctness);

    std::vector<DeskSeed> seeds;
    if (wanted(4) || wanted(5) || wanted(6) || wanted(8) || wanted(9)) {
        try {
            for (std::uint64_t s : {1, 2, 3}) seeds.push_back(desk_run(cli, dir, s));
        } catch (const std::exception& e) {
            std::cout << "  desk runs failed: " << e.what() << std::endl;
        }
    }
    auto need_seeds = [&]() -> const std::vector<DeskSeed>& {
        if (seeds.size() != 3) throw std::runtime_error("desk runs unavailable");
        return seeds;
    };
    record(4, "descent reproduction", [&] { return descent(need_seeds()[0]); });
    record(5, "matched final performance", [&] { return matched_performance(need_seeds()[0]); });
    record(6, "l1 monotonic trend", [&] { return l1_trend(need_seeds()[0]); });
    record(7, "rate envelope", [&] { return rate_envelope(cli, dir); });
    record(8, "OOD ordering", [&] { return ood_ordering(need_seeds()); });
    record(9, "layer-noise resilience", [&] { return noise_resilience(need_seeds()); });
    record(10, "determinism", [&] { return determinism(cli, dir); });
    record(11, "toy demo", toy_demo);

    std::cout << "\n";
    int failed = 0;
    for (const auto& v : verdicts) {
        std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << v.id << " (" << v.name << "): " << v.detail << "\n";
        failed += !v.pass;
    }
    std::cout << "\n" << verdicts.size() - std::size_t(failed) << "/" << verdicts.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
