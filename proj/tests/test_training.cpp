#include "support.hpp"

#include "unroll/errors.hpp"
#include "unroll/parallel.hpp"
#include "unroll/training.hpp"

#include <doctest.h>

using namespace unroll;

namespace {

std::vector<double> flatten(const ModelParams& p)
{
    std::vector<double> out;
    for_each_block(p, [&](std::size_t, const char*, std::span<const double> a) { out.insert(out.end(), a.begin(), a.end()); });
    return out;
}

void patch(const std::filesystem::path& path, std::size_t offset, const std::string& bytes)
{
    std::string s = test::read_file(path);
    s.replace(offset, bytes.size(), bytes);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << s;
}

const Dataset& lasso_data()
{
    static const Dataset data = test::small_dataset(ProblemKind::Lasso, 6, 10, 120, 3);
    return data;
}

TrainConfig small_config()
{
    TrainConfig c;
    c.layers = 4;
    c.epochs = 3;
    c.batch_size = 16;
    c.mu_w = 1e-3;
    c.mu_lambda = 0.5;
    c.seed = 11;
    return c;
}

bool same_history(const TrainHistory& a, const TrainHistory& b)
{
    if (a.epochs.size() != b.epochs.size()) return false;
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
        const auto& x = a.epochs[e];
        const auto& y = b.epochs[e];
        if (x.train_loss != y.train_loss || x.train_mse != y.train_mse || x.val_mse != y.val_mse
            || x.mean_slacks != y.mean_slacks || x.lambda != y.lambda)
            return false;
    }
    return true;
}

} // namespace

TEST_SUITE("training") {

TEST_CASE("ADAM with zero gradient keeps parameters and decays moments")
{
    auto params = init_resgd({2, 3, 4}, 1, 0);
    const auto before = params;
    AdamState st = make_adam_state(params);
    param_at(st.m, 0) = 0.5;
    param_at(st.v, 0) = 0.25;
    primal_step(params, params.zeros_like(), st, 1e-2);
    CHECK(param_at(st.m, 0) == doctest::Approx(0.45));
    CHECK(param_at(st.v, 0) == doctest::Approx(0.24975));
    for (std::size_t i = 1; i < params.size(); ++i) CHECK(param_at(params, i) == param_at(before, i));
}

TEST_CASE("ADAM step tends to mu_w times the gradient sign")
{
    const auto spec = make_problem(ProblemKind::Lasso, Matrix::Constant(1, 1, 1.0), 0.1);
    for (double g : {3.0, -0.02}) {
        auto params = init_lista(spec, 1);
        AdamState st = make_adam_state(params);
        ParamGrads grads = params.zeros_like();
        grads.lista[0].d_u(0, 0) = g;
        double step = 0.0;
        for (int k = 0; k < 1000; ++k) {
            const double before = params.lista[0].d_u(0, 0);
            primal_step(params, grads, st, 1e-3);
            step = params.lista[0].d_u(0, 0) - before;
        }
        CHECK(step == doctest::Approx(-1e-3 * (g > 0 ? 1 : -1)).epsilon(1e-4));
    }
}

TEST_CASE("ADAM projects LISTA thresholds onto nonnegative values")
{
    const auto spec = make_problem(ProblemKind::Lasso, Matrix::Identity(2, 2), 1e-4, 1.0);
    auto params = init_lista(spec, 1);
    AdamState st = make_adam_state(params);
    ParamGrads grads = params.zeros_like();
    grads.lista[0].beta.setConstant(1.0);
    primal_step(params, grads, st, 1e-2);
    CHECK(params.lista[0].beta == Vector::Zero(2));
}

TEST_CASE("dual_step examples")
{
    auto one = [](double v) { return Vector::Constant(1, v); };
    CHECK(dual_step({one(0.1)}, one(-0.2), 1.0).lambda(0) == 0.0);
    CHECK(dual_step({one(0.1)}, one(0.3), 0.1).lambda(0) == doctest::Approx(0.13));
    CHECK(dual_step({one(0.1)}, one(0.0), 0.7).lambda(0) == 0.1);
}

TEST_CASE("training is deterministic and independent of the thread count")
{
    const auto c = small_config();
    set_num_threads(1);
    const auto a = train(c, lasso_data());
    const auto b = train(c, lasso_data());
    set_num_threads(3);
    const auto t = train(c, lasso_data());
    set_num_threads(1);
    CHECK(same_history(a.history, b.history));
    CHECK(same_history(a.history, t.history));
    CHECK(flatten(a.params) == flatten(t.params));
    CHECK(a.duals.lambda == t.duals.lambda);
}

TEST_CASE("duals stay nonnegative after every epoch")
{
    auto c = small_config();
    c.epochs = 5;
    c.mu_lambda = 5.0;
    const auto r = train(c, lasso_data());
    bool any_positive = false;
    for (const auto& e : r.history.epochs) {
        CHECK(e.lambda.minCoeff() >= 0.0);
        any_positive = any_positive || e.lambda.maxCoeff() > 0.0;
    }
    CHECK(any_positive);
}

TEST_CASE("first-layer constraint can be dropped")
{
    auto c = small_config();
    c.mu_lambda = 5.0;
    c.skip_first_layer_constraint = true;
    for (const auto& e : train(c, lasso_data()).history.epochs) CHECK(e.lambda(0) == 0.0);
}

TEST_CASE("constraints off matches a direct MSE loop bit for bit")
{
    auto c = small_config();
    c.constraints_enabled = false;
    const Dataset& data = lasso_data();
    const auto r = train(c, data);

    ModelParams params = initial_params(c, data.spec);
    AdamState st = make_adam_state(params);
    const Vector zero = Vector::Zero(Index(c.layers));
    for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
        for (const auto& idx : epoch_batches(data, c, epoch)) {
            const Batch batch = make_train_batch(data, idx, c, epoch);
            const auto res = lagrangian_value_and_grad(batch, params, zero, c.constraint, c.noise, data.spec);
            REQUIRE(res.value.value == res.value.mse);
            primal_step(params, res.grads, st, c.mu_w, c.adam);
        }
        CHECK(r.history.epochs[epoch].lambda == zero);
    }
    CHECK(flatten(params) == flatten(r.params));
}

TEST_CASE("LISTA at the ISTA point fits labels made of L ISTA iterates")
{
    Dataset data = lasso_data();
    auto c = small_config();
    c.constraints_enabled = false;
    c.noise_enabled = false;
    c.y0_std = 0.0;
    c.mu_w = 1e-6;
    for (auto& s : data.samples) {
        Vector y = Vector::Zero(data.spec.code_dim());
        for (std::size_t l = 0; l < c.layers; ++l) y = ista_step(y, s.x, data.spec);
        s.y_star = y;
    }
    const auto r = train(c, data);
    // ADAM turns round-off gradients into full-size steps, so "zero" means
    // zero relative to the label energy.
    double energy = 0.0;
    for (const auto& s : data.samples) energy += s.y_star.squaredNorm();
    energy /= double(data.samples.size());
    CHECK(split_mse(initial_params(c, data.spec), data, Split::Train, 0, 0.0) <= 1e-24 * energy);
    for (const auto& e : r.history.epochs) CHECK(e.train_mse <= 1e-8 * energy);
    CHECK(r.history.epochs.back().val_mse <= 1e-8 * energy);
}

TEST_CASE("GradNorm constraints are rejected on lasso data")
{
    auto c = small_config();
    c.constraint = make_constraint(ConstraintFamily::GradNorm, 0.05);
    CHECK_THROWS_AS(train(c, lasso_data()), ConfigError);
}

TEST_CASE("invalid training settings are rejected")
{
    auto c = small_config();
    c.epochs = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = small_config();
    c.mu_w = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("checkpoint round trip and corruption")
{
    const auto dir = test::scratch_dir("ckpt");
    for (Arch arch : {Arch::Lista, Arch::ResGd}) {
        auto c = small_config();
        c.arch = arch;
        c.hidden = 7;
        c.epochs = 1;
        const auto r = train(c, lasso_data());
        const auto path = dir / "model.ckpt";
        save_checkpoint(r.params, r.duals, path);
        const auto [params, duals] = load_checkpoint(path);
        CHECK(params.arch == arch);
        CHECK(flatten(params) == flatten(r.params));
        CHECK(duals.lambda == r.duals.lambda);

        const std::string bytes = test::read_file(path);
        CHECK(bytes.substr(0, 4) == "UDCK");

        patch(path, 0, "XDCK");
        CHECK_THROWS_AS(load_checkpoint(path), IoError);

        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
        patch(path, 4, std::string("\x02\0\0\0", 4));
        try {
            load_checkpoint(path);
            FAIL("version bump accepted");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("version 2") != std::string::npos);
        }

        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("history CSV layout")
{
    auto c = small_config();
    c.epochs = 2;
    const auto r = train(c, lasso_data());
    const auto path = test::scratch_dir("history") / "history.csv";
    write_history_csv(r.history, path);
    const std::string s = test::read_file(path);
    CHECK(s.rfind("epoch,train_loss,train_mse,val_mse,slack_1,slack_2,slack_3,slack_4,lambda_1,", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

} // TEST_SUITE
