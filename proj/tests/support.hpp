#pragma once

#include "unroll/config.hpp"
#include "unroll/data.hpp"
#include "unroll/rng.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace unroll::test {

/// Random p×d lasso instance with N(0,1) dictionary entries.
inline ProblemSpec random_lasso(Index p, Index d, double alpha, std::uint64_t seed)
{
    Rng rng = make_rng(seed, {99});
    Matrix mat(p, d);
    for (Index i = 0; i < mat.size(); ++i) mat.data()[i] = gaussian_vector(rng, 1)(0);
    return make_problem(ProblemKind::Lasso, std::move(mat), alpha);
}

inline ProblemSpec random_quadratic(Index p, Index d, std::uint64_t seed)
{
    ProblemSpec s = random_lasso(p, d, 0.0, seed);
    s.kind = ProblemKind::Quadratic;
    return s;
}

/// Small generated dataset through the same path the CLI uses.
inline Dataset small_dataset(ProblemKind kind, Index p, Index d, std::size_t n, std::uint64_t seed,
                             std::size_t sparsity = 3)
{
    GenConfig gen;
    gen.kind = kind;
    gen.p = p;
    gen.d = d;
    gen.n = n;
    gen.sparsity = sparsity;
    ProblemSpec spec = make_generation_spec(gen, seed);
    auto signals = gen_signals(spec, n, sparsity, gen.noise_std, seed);
    GenMetadata meta;
    meta.seed = seed;
    meta.sparsity = std::uint32_t(sparsity);
    meta.noise_std = gen.noise_std;
    meta.oracle_iters = gen.oracle_iters;
    meta.oracle_tol = gen.oracle_tol;
    return build_dataset(spec, std::move(signals), meta, gen.fractions);
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("unroll_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace unroll::test
