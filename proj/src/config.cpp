#include "unroll/config.hpp"

#include "unroll/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace unroll {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt17(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& s)
{
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

template <class T>
T to_unsigned(const std::string& s)
{
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("not an unsigned integer");
    return v;
}

bool to_flag(const std::string& s)
{
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw std::invalid_argument("expected on/off");
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Pick>
Field unsigned_field(Pick pick)
{
    return {[pick](ExperimentConfig& c, const std::string& v) { pick(c) = to_unsigned<T>(v); },
            [pick](const ExperimentConfig& c) { return std::to_string(pick(const_cast<ExperimentConfig&>(c))); }};
}

template <class Pick>
Field index_field(Pick pick)
{
    return {[pick](ExperimentConfig& c, const std::string& v) { pick(c) = Index(to_unsigned<std::uint64_t>(v)); },
            [pick](const ExperimentConfig& c) { return std::to_string(pick(const_cast<ExperimentConfig&>(c))); }};
}

template <class Pick>
Field real_field(Pick pick)
{
    return {[pick](ExperimentConfig& c, const std::string& v) { pick(c) = to_double(v); },
            [pick](const ExperimentConfig& c) { return fmt17(pick(const_cast<ExperimentConfig&>(c))); }};
}

template <class Pick>
Field flag_field(Pick pick)
{
    return {[pick](ExperimentConfig& c, const std::string& v) { pick(c) = to_flag(v); },
            [pick](const ExperimentConfig& c) { return std::string(pick(const_cast<ExperimentConfig&>(c)) ? "on" : "off"); }};
}

const std::map<std::string, Field>& fields()
{
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["seed"] = unsigned_field<std::uint64_t>([](ExperimentConfig& c) -> std::uint64_t& { return c.seed; });

        t["kind"] = {[](ExperimentConfig& c, const std::string& v) {
                         if (v == "lasso") c.gen.kind = ProblemKind::Lasso;
                         else if (v == "quadratic") c.gen.kind = ProblemKind::Quadratic;
                         else throw std::invalid_argument("expected lasso or quadratic");
                     },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.gen.kind)); }};
        t["p"] = index_field([](ExperimentConfig& c) -> Index& { return c.gen.p; });
        t["d"] = index_field([](ExperimentConfig& c) -> Index& { return c.gen.d; });
        t["n"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.gen.n; });
        t["sparsity"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.gen.sparsity; });
        t["noise_std"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.noise_std; });
        t["alpha"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.alpha; });
        t["oracle_iters"] = unsigned_field<std::uint32_t>([](ExperimentConfig& c) -> std::uint32_t& { return c.gen.oracle_iters; });
        t["oracle_tol"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.oracle_tol; });
        t["train_frac"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.fractions.train; });
        t["val_frac"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.fractions.validation; });
        t["test_frac"] = real_field([](ExperimentConfig& c) -> double& { return c.gen.fractions.test; });

        t["arch"] = {[](ExperimentConfig& c, const std::string& v) {
                         if (v == "lista") c.train.arch = Arch::Lista;
                         else if (v == "resgd") c.train.arch = Arch::ResGd;
                         else throw std::invalid_argument("expected lista or resgd");
                     },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.train.arch)); }};
        t["layers"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.train.layers; });
        t["hidden"] = index_field([](ExperimentConfig& c) -> Index& { return c.train.hidden; });
        t["epochs"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.train.epochs; });
        t["batch_size"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.train.batch_size; });
        t["mu_w"] = real_field([](ExperimentConfig& c) -> double& { return c.train.mu_w; });
        t["mu_lambda"] = real_field([](ExperimentConfig& c) -> double& { return c.train.mu_lambda; });
        t["epsilon"] = real_field([](ExperimentConfig& c) -> double& { return c.train.constraint.epsilon; });
        t["constraint"] = {[](ExperimentConfig& c, const std::string& v) {
                               if (v == "dist") c.train.constraint.family = ConstraintFamily::DistToOpt;
                               else if (v == "grad") c.train.constraint.family = ConstraintFamily::GradNorm;
                               else throw std::invalid_argument("expected dist or grad");
                           },
                           [](const ExperimentConfig& c) { return std::string(to_string(c.train.constraint.family)); }};
        t["noise"] = {[](ExperimentConfig& c, const std::string& v) {
                          if (v == "off") c.train.noise.mode = NoiseMode::Off;
                          else if (v == "grad") c.train.noise.mode = NoiseMode::GradProportional;
                          else if (v == "inverse") c.train.noise.mode = NoiseMode::InverseLayer;
                          else throw std::invalid_argument("expected off, grad or inverse");
                      },
                      [](const ExperimentConfig& c) { return std::string(to_string(c.train.noise.mode)); }};
        t["noise_scale"] = {[](ExperimentConfig& c, const std::string& v) {
                                if (v == "step") c.train.noise.grad_scale = GradNoiseScale::Step;
                                else if (v == "raw") c.train.noise.grad_scale = GradNoiseScale::Raw;
                                else throw std::invalid_argument("expected step or raw");
                            },
                            [](const ExperimentConfig& c) { return std::string(to_string(c.train.noise.grad_scale)); }};
        t["sigma_hat"] = real_field([](ExperimentConfig& c) -> double& { return c.train.noise.sigma_hat; });
        t["constraints"] = flag_field([](ExperimentConfig& c) -> bool& { return c.train.constraints_enabled; });
        t["noise_enabled"] = flag_field([](ExperimentConfig& c) -> bool& { return c.train.noise_enabled; });
        t["skip_first_layer"] = flag_field([](ExperimentConfig& c) -> bool& { return c.train.skip_first_layer_constraint; });
        t["adam_beta1"] = real_field([](ExperimentConfig& c) -> double& { return c.train.adam.beta1; });
        t["adam_beta2"] = real_field([](ExperimentConfig& c) -> double& { return c.train.adam.beta2; });
        t["adam_eps"] = real_field([](ExperimentConfig& c) -> double& { return c.train.adam.eps; });
        t["dual_slack"] = {[](ExperimentConfig& c, const std::string& v) {
                               if (v == "epoch_mean") c.train.dual_slack = DualSlackEstimate::EpochMean;
                               else if (v == "last_batch") c.train.dual_slack = DualSlackEstimate::LastBatch;
                               else throw std::invalid_argument("expected epoch_mean or last_batch");
                           },
                           [](const ExperimentConfig& c) {
                               return std::string(c.train.dual_slack == DualSlackEstimate::EpochMean ? "epoch_mean" : "last_batch");
                           }};
        t["divergence_factor"] = real_field([](ExperimentConfig& c) -> double& { return c.train.divergence_factor; });
        t["y0_std"] = real_field([](ExperimentConfig& c) -> double& { return c.train.y0_std; });

        t["gradcheck_instances"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.gradcheck.instances; });
        t["gradcheck_coords"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.gradcheck.coords; });
        t["gradcheck_batch"] = unsigned_field<std::size_t>([](ExperimentConfig& c) -> std::size_t& { return c.gradcheck.batch; });
        t["gradcheck_step"] = real_field([](ExperimentConfig& c) -> double& { return c.gradcheck.step; });
        t["gradcheck_threshold"] = real_field([](ExperimentConfig& c) -> double& { return c.gradcheck.threshold; });
        return t;
    }();
    return table;
}

} // namespace

KeyValues parse_key_values(std::string_view text)
{
    KeyValues out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

void apply_settings(ExperimentConfig& config, const KeyValues& values)
{
    const auto& table = fields();
    std::vector<std::string> unknown, invalid;
    for (const auto& [key, value] : values) {
        const auto it = table.find(key);
        if (it == table.end()) {
            unknown.push_back(key);
            continue;
        }
        try {
            it->second.set(config, value);
        } catch (const std::exception& e) {
            invalid.push_back(key + "=" + value + " (" + e.what() + ")");
        }
    }
    if (unknown.empty() && invalid.empty()) return;
    std::string msg = "invalid configuration";
    if (!unknown.empty()) {
        msg += "; unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
    }
    if (!invalid.empty()) {
        msg += "; bad values:";
        for (const auto& k : invalid) msg += " " + k;
    }
    throw ConfigError(msg);
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    ExperimentConfig config;
    apply_settings(config, parse_key_values(ss.str()));
    return config;
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& [k, _] : fields()) keys.push_back(k);
    return keys;
}

std::string to_text(const ExperimentConfig& config)
{
    std::string out;
    for (const auto& [k, f] : fields()) out += k + " = " + f.get(config) + "\n";
    return out;
}

ProblemSpec make_generation_spec(const GenConfig& gen, std::uint64_t seed)
{
    Dictionary dict = gen_dictionary(gen.p, gen.d, seed);
    ProblemSpec spec;
    spec.kind = gen.kind;
    spec.mat = std::move(dict.mat);
    spec.alpha = gen.kind == ProblemKind::Lasso ? gen.alpha : 0.0;
    spec.nu = dict.nu;
    return spec;
}

} // namespace unroll
