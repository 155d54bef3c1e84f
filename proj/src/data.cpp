#include "unroll/data.hpp"

#include "unroll/binio.hpp"
#include "unroll/parallel.hpp"
#include "unroll/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace unroll {

const char* to_string(Split split)
{
    switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    }
    return "?";
}

std::size_t Dataset::unconverged_count() const
{
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [this](const auto& s) {
        return spec.kind == ProblemKind::Lasso && s.oracle_residual > gen.oracle_tol;
    }));
}

Dictionary gen_dictionary(Index p, Index d, std::uint64_t seed)
{
    if (!(p >= 1 && d > p)) throw std::invalid_argument("gen_dictionary requires d > p >= 1");
    Rng rng = make_rng(seed, {stream::kDictionary});
    std::normal_distribution<double> normal(0.0, 1.0);
    Dictionary out;
    out.mat.resize(p, d);
    for (Index r = 0; r < p; ++r)
        for (Index c = 0; c < d; ++c) out.mat(r, c) = normal(rng);
    out.nu = 1.01 * largest_gram_eigenvalue(out.mat);
    return out;
}

std::vector<Vector> gen_signals(const ProblemSpec& spec, std::size_t n, std::size_t sparsity,
                                double noise_std, std::uint64_t seed)
{
    const Index d = spec.code_dim();
    if (sparsity > static_cast<std::size_t>(d)) throw std::invalid_argument("sparsity exceeds code dimension");
    if (noise_std < 0) throw std::invalid_argument("noise_std must be nonnegative");
    std::vector<Vector> out(n);
    parallel_for(n, [&](std::size_t i) {
        Rng rng = make_rng(seed, {stream::kSignals, i});
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Index> order(static_cast<std::size_t>(d));
        std::iota(order.begin(), order.end(), Index(0));
        Vector code = Vector::Zero(d);
        // Partial Fisher-Yates: the first `sparsity` slots form the support.
        for (std::size_t k = 0; k < sparsity; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
            std::swap(order[k], order[pick(rng)]);
            code(order[k]) = normal(rng);
        }
        Vector x = spec.mat * code;
        for (Index r = 0; r < x.size(); ++r) x(r) += noise_std * normal(rng);
        out[i] = std::move(x);
    });
    return out;
}

LabeledSample label_signal(const ProblemSpec& spec, Vector x, int budget, double tol)
{
    LabeledSample s;
    if (spec.kind == ProblemKind::Lasso) {
        auto res = ista_solve(x, spec, budget, tol);
        s.y_star = std::move(res.y);
        s.oracle_residual = res.residual;
        s.oracle_iters = static_cast<std::uint32_t>(res.iters);
    } else {
        s.y_star = quad_solve(x, spec);
        s.oracle_residual = quad_gradient(s.y_star, x, spec).norm();
        s.oracle_iters = 0;
    }
    s.x = std::move(x);
    return s;
}

Dataset build_dataset(const ProblemSpec& spec, std::vector<Vector> signals, const GenMetadata& meta,
                      const SplitFractions& fractions)
{
    const double sum = fractions.train + fractions.validation + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 || fractions.test < 0)
        throw std::invalid_argument("split fractions must be nonnegative and sum to 1");

    Dataset data;
    data.spec = spec;
    data.gen = meta;
    const std::size_t n = signals.size();
    data.samples.resize(n);
    parallel_for(n, [&](std::size_t i) {
        data.samples[i] = label_signal(spec, std::move(signals[i]), int(meta.oracle_iters), meta.oracle_tol);
    });

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng = make_rng(meta.seed, {stream::kSplits});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * double(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions.validation * double(n))));
    auto take = [&](std::size_t from, std::size_t to) {
        std::vector<std::uint32_t> idx(order.begin() + std::ptrdiff_t(from), order.begin() + std::ptrdiff_t(to));
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    data.splits[0] = take(0, n_train);
    data.splits[1] = take(n_train, n_train + n_val);
    data.splits[2] = take(n_train + n_val, n);
    return data;
}

void validate_splits(const Dataset& data)
{
    std::vector<int> seen(data.samples.size(), 0);
    for (const auto& split : data.splits)
        for (auto i : split) {
            if (i >= seen.size()) throw std::invalid_argument("split index out of range");
            ++seen[i];
        }
    for (int c : seen)
        if (c != 1) throw std::invalid_argument("splits are not a disjoint cover of the samples");
}

void save_dataset(const Dataset& data, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const auto& spec = data.spec;
    binio::put_magic(os, "UDSC");
    binio::put<std::uint32_t>(os, kDatasetVersion);
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(spec.kind));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.signal_dim()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.code_dim()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(data.samples.size()));
    binio::put<double>(os, spec.alpha);
    binio::put<double>(os, spec.nu);
    binio::put_matrix(os, spec.mat);
    for (const auto& s : data.samples) {
        binio::put_vector(os, s.x);
        binio::put_vector(os, s.y_star);
        binio::put<double>(os, s.oracle_residual);
        binio::put<std::uint32_t>(os, s.oracle_iters);
    }
    for (const auto& split : data.splits) {
        binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(split.size()));
        for (auto i : split) binio::put<std::uint32_t>(os, i);
    }
    binio::put<std::uint64_t>(os, data.gen.seed);
    binio::put<std::uint32_t>(os, data.gen.sparsity);
    binio::put<double>(os, data.gen.noise_std);
    binio::put<std::uint32_t>(os, data.gen.oracle_iters);
    binio::put<double>(os, data.gen.oracle_tol);
    if (!os) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binio::Reader in(is, "dataset " + path.string());
    in.expect_magic("UDSC");
    in.expect_version(kDatasetVersion);

    Dataset data;
    const auto kind = in.get<std::uint8_t>();
    if (kind > 1) throw IoError("dataset: unknown problem kind " + std::to_string(kind));
    const auto p = in.get<std::uint32_t>();
    const auto d = in.get<std::uint32_t>();
    const auto n = in.get<std::uint32_t>();
    data.spec.kind = static_cast<ProblemKind>(kind);
    data.spec.alpha = in.get<double>();
    data.spec.nu = in.get<double>();
    data.spec.mat = in.get_matrix(p, d);
    data.samples.resize(n);
    for (auto& s : data.samples) {
        s.x = in.get_vector(p);
        s.y_star = in.get_vector(d);
        s.oracle_residual = in.get<double>();
        s.oracle_iters = in.get<std::uint32_t>();
    }
    for (auto& split : data.splits) {
        split.resize(in.get<std::uint32_t>());
        for (auto& i : split) i = in.get<std::uint32_t>();
    }
    data.gen.seed = in.get<std::uint64_t>();
    data.gen.sparsity = in.get<std::uint32_t>();
    data.gen.noise_std = in.get<double>();
    data.gen.oracle_iters = in.get<std::uint32_t>();
    data.gen.oracle_tol = in.get<double>();
    in.expect_end();
    try {
        validate_splits(data);
    } catch (const std::invalid_argument& e) {
        throw IoError("dataset " + path.string() + ": " + e.what());
    }
    return data;
}

} // namespace unroll
