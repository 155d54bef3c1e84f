// Checkpoint layout (little-endian):
//   "UDCK" | version u32 | arch u8 | p, d, h, L u32
//   per layer, row-major f64 in declaration order:
//     LISTA: d_u, d_e, beta      ResGd: w1, b1, w2, b2
//   dual count u32 | lambda f64 × count

#include "unroll/binio.hpp"
#include "unroll/training.hpp"

#include <fstream>

namespace unroll {

void save_checkpoint(const ModelParams& params, const DualState& duals,
                     const std::filesystem::path& path)
{
    validate(params);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::put_magic(os, "UDCK");
    binio::put<std::uint32_t>(os, kCheckpointVersion);
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(params.arch));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.dims.signal));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.dims.code));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.dims.hidden));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.num_layers()));
    if (params.arch == Arch::Lista) {
        for (const auto& w : params.lista) {
            binio::put_matrix(os, w.d_u);
            binio::put_matrix(os, w.d_e);
            binio::put_vector(os, w.beta);
        }
    } else {
        for (const auto& w : params.resgd) {
            binio::put_matrix(os, w.w1);
            binio::put_vector(os, w.b1);
            binio::put_matrix(os, w.w2);
            binio::put_vector(os, w.b2);
        }
    }
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(duals.lambda.size()));
    binio::put_vector(os, duals.lambda);
    if (!os) throw IoError("write failed: " + path.string());
}

std::pair<ModelParams, DualState> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binio::Reader in(is, "checkpoint " + path.string());
    in.expect_magic("UDCK");
    in.expect_version(kCheckpointVersion);

    ModelParams params;
    const auto arch = in.get<std::uint8_t>();
    if (arch > 1) throw IoError("checkpoint: unknown architecture tag " + std::to_string(arch));
    params.arch = static_cast<Arch>(arch);
    const Index p = in.get<std::uint32_t>();
    const Index d = in.get<std::uint32_t>();
    const Index h = in.get<std::uint32_t>();
    const auto L = in.get<std::uint32_t>();
    params.dims = {p, d, h};
    for (std::uint32_t l = 0; l < L; ++l) {
        if (params.arch == Arch::Lista) {
            ListaLayer w;
            w.d_u = in.get_matrix(d, p);
            w.d_e = in.get_matrix(d, d);
            w.beta = in.get_vector(d);
            params.lista.push_back(std::move(w));
        } else {
            ResGdLayer w;
            w.w1 = in.get_matrix(h, d + p);
            w.b1 = in.get_vector(h);
            w.w2 = in.get_matrix(d, h);
            w.b2 = in.get_vector(d);
            params.resgd.push_back(std::move(w));
        }
    }
    DualState duals;
    duals.lambda = in.get_vector(in.get<std::uint32_t>());
    in.expect_end();
    try {
        validate(params);
    } catch (const std::invalid_argument& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
    return {std::move(params), std::move(duals)};
}

} // namespace unroll
