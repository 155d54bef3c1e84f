#include "support.hpp"

#include "unroll/demo.hpp"
#include "unroll/errors.hpp"
#include "unroll/eval.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace unroll;
namespace fs = std::filesystem;

namespace {

/// Runs the CLI with output discarded; returns its exit status.
int run_cli(const std::string& args, const std::string& env = "")
{
    const std::string cmd = env + " " + UNROLL_CLI_PATH + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmall = "--set n=200 --set p=6 --set d=10 --set sparsity=3 --set layers=4 --set epochs=2 --set batch_size=16";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("key-value parsing")
{
    const auto kv = parse_key_values("# comment\n\n alpha = 0.25 \nepochs=7\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"alpha", "0.25"});
    ExperimentConfig c;
    apply_settings(c, kv);
    CHECK(c.gen.alpha == 0.25);
    CHECK(c.train.epochs == 7);
    CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ConfigError);
}

TEST_CASE("unknown and malformed keys are reported together")
{
    ExperimentConfig c;
    try {
        apply_settings(c, {{"alpha_", "1"}, {"epochs", "seven"}, {"betaa", "2"}});
        FAIL("accepted bad keys");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("alpha_") != std::string::npos);
        CHECK(msg.find("betaa") != std::string::npos);
        CHECK(msg.find("epochs") != std::string::npos);
    }
}

TEST_CASE("effective configuration round-trips through text")
{
    ExperimentConfig c;
    apply_settings(c, {{"kind", "quadratic"}, {"mu_w", "3.5e-4"}, {"noise", "inverse"}, {"constraint", "grad"},
                       {"noise_scale", "raw"}, {"seed", "42"}});
    ExperimentConfig back;
    apply_settings(back, parse_key_values(to_text(c)));
    CHECK(to_text(back) == to_text(c));
    CHECK(back.gen.kind == ProblemKind::Quadratic);
    CHECK(back.train.mu_w == 3.5e-4);
    CHECK(back.train.noise.mode == NoiseMode::InverseLayer);
    CHECK(back.train.noise.grad_scale == GradNoiseScale::Raw);
    CHECK(back.train.constraint.family == ConstraintFamily::GradNorm);
    CHECK(back.seed == 42);
    const auto keys = config_keys();
    for (const auto& [k, v] : parse_key_values(to_text(c))) CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}

TEST_CASE("demo gradient descent strictly decreases the objective")
{
    const auto spec = demo_quad_problem();
    const Vector x = Eigen::Vector2d(1.0, -0.5);
    const auto ys = gradient_descent(x, Eigen::Vector2d(3.0, 2.0), spec, 10);
    REQUIRE(ys.size() == 11);
    for (std::size_t l = 1; l < ys.size(); ++l) CHECK(quad_objective(ys[l], x, spec) < quad_objective(ys[l - 1], x, spec));
    Eigen::SelfAdjointEigenSolver<Matrix> es(spec.mat.transpose() * spec.mat);
    CHECK(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff() == doctest::Approx(9.0));
}

TEST_CASE("demo trajectories and export")
{
    DemoQuadConfig dc;
    dc.samples = 200;
    dc.epochs = 20;
    const auto r = run_demo_quad(dc);
    CHECK(r.trajectories.size() == 6);
    const auto& gd = r.find("gd");
    for (Index l = 1; l < gd.obj.size(); ++l) CHECK(gd.obj(l) < gd.obj(l - 1));
    const auto& p = r.find("gd_perturbed");
    CHECK(p.y[3] == gd.y[3]);
    CHECK(p.y[4] != gd.y[4]);
    CHECK(r.perturbation.dot(r.y0 - r.y_star) > 0.0);
    CHECK(r.perturbation.norm() == doctest::Approx(0.5 * (r.y0 - r.y_star).norm()));
    CHECK_THROWS_AS(r.find("nope"), std::out_of_range);

    const auto path = test::scratch_dir("demo") / "t.csv";
    export_trajectory(gd, path);
    const auto text = test::read_file(path);
    CHECK(text.rfind("layer,y_1,y_2,dist,obj\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 12);

    dc.perturb_layer = 10;
    CHECK_THROWS_AS(run_demo_quad(dc), ConfigError);
}

TEST_CASE("command exit codes")
{
    const auto dir = test::scratch_dir("cli_codes");
    const std::string d = dir.string();
    CHECK(run_cli("") == 1);
    CHECK(run_cli("gen --set alpha_=1 --out " + d + "/bad") == 1);
    CHECK(run_cli("gen --config " + d + "/missing.cfg --out " + d + "/x") == 3);
    CHECK(run_cli("eval --data " + d + "/missing.bin --ckpt " + d + "/missing.ckpt --out " + d + "/y") == 3);
    CHECK(run_cli("gradcheck --set gradcheck_instances=1 --set gradcheck_threshold=1e-30") == 2);
    CHECK(run_cli("gradcheck --set gradcheck_instances=1") == 0);
    CHECK(run_cli("gen --seed notanumber --out " + d + "/z") == 1);
    CHECK(run_cli("gen --out " + d + "/e", "UNROLL_SEED=abc") == 1);
}

TEST_CASE("pipeline determinism, thread independence and zero-shift identity")
{
    const auto dir = test::scratch_dir("cli_pipeline");
    const std::string d = dir.string();
    REQUIRE(run_cli("gen " + kSmall + " --seed 3 --out " + d + "/g1") == 0);
    REQUIRE(run_cli("gen " + kSmall + " --out " + d + "/g2", "UNROLL_SEED=3") == 0);
    REQUIRE(run_cli("gen " + kSmall + " --seed 4 --out " + d + "/g3") == 0);
    const auto ds = test::read_file(dir / "g1/dataset.bin");
    CHECK(ds == test::read_file(dir / "g2/dataset.bin"));
    CHECK(ds != test::read_file(dir / "g3/dataset.bin"));
    CHECK(load_dataset(dir / "g1/dataset.bin").samples.size() == 200);
    CHECK(fs::exists(dir / "g1/manifest.txt"));

    const std::string data = " --data " + d + "/g1/dataset.bin";
    REQUIRE(run_cli("train " + kSmall + " --seed 3 --threads 1" + data + " --out " + d + "/t1") == 0);
    REQUIRE(run_cli("train " + kSmall + " --seed 3 --threads 8" + data + " --out " + d + "/t8") == 0);
    REQUIRE(run_cli("train " + kSmall + " --seed 3 --constraints off" + data + " --out " + d + "/base") == 0);
    CHECK(test::read_file(dir / "t1/model.ckpt") == test::read_file(dir / "t8/model.ckpt"));
    CHECK(test::read_file(dir / "t1/history.csv") == test::read_file(dir / "t8/history.csv"));
    const auto [base, duals] = load_checkpoint(dir / "base/model.ckpt");
    CHECK(duals.lambda.norm() == 0.0);
    CHECK(load_checkpoint(dir / "t1/model.ckpt").second.lambda.norm() > 0.0);

    const std::string ck = " --ckpt " + d + "/t1/model.ckpt";
    REQUIRE(run_cli("eval " + kSmall + " --seed 3" + data + ck + " --out " + d + "/e") == 0);
    REQUIRE(run_cli("ood " + kSmall + " --seed 3 --p-list 0" + data + " --ckpt c=" + d + "/t1/model.ckpt --out " + d + "/o") == 0);
    REQUIRE(run_cli("noise-sweep " + kSmall + " --seed 3 --sigma-list 0,1" + data + ck + " --out " + d + "/n1 --threads 1") == 0);
    REQUIRE(run_cli("noise-sweep " + kSmall + " --seed 3 --sigma-list 0,1" + data + ck + " --out " + d + "/n8 --threads 8") == 0);
    CHECK(test::read_file(dir / "n1/noise.csv") == test::read_file(dir / "n8/noise.csv"));

    const auto m = parse_metrics(dir / "e/metrics.csv");
    std::ifstream ood(dir / "o/ood.csv");
    std::string line;
    std::getline(ood, line);
    Index l = 0;
    while (std::getline(ood, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() == 6);
        CHECK(std::stod(cells[3]) == doctest::Approx(m.dist_mean(l)).epsilon(1e-6));
        CHECK(std::stod(cells[4]) == doctest::Approx(m.obj_mean(l)).epsilon(1e-6));
        ++l;
    }
    CHECK(l == 5);
}

} // TEST_SUITE
