#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "probsa/data/binary_io.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint layout (little-endian):
///   "PSAC", u32 version,
///   variant: u32 transform, u32 posterior, u32 x7 dims (P, D, D_f, layers, heads, qk, v),
///   u32 parameter count, then per parameter:
///   u32 name length, name bytes, u32 rank, u32 extents..., float64 payload.
inline void save_checkpoint(std::ostream& os, const MilModel& model) {
    const auto& v = model.variant();
    io::write_magic(os, "PSAC");
    io::write_u32(os, kCheckpointVersion);
    io::write_u32(os, v.transform == BagTransform::ABMIL ? 0 : 1);
    io::write_u32(os, v.posterior == Posterior::DiracDelta ? 0 : 1);
    for (auto d : {v.dims.input, v.dims.embed, v.dims.attention, v.dims.layers, v.dims.heads, v.dims.qk, v.dims.v}) {
        io::write_u32(os, static_cast<std::uint32_t>(d));
    }
    const auto& store = model.params();
    io::write_u32(os, static_cast<std::uint32_t>(store.size()));
    for (const auto& e : store.entries()) {
        io::write_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        io::write_u32(os, static_cast<std::uint32_t>(e.value.rank()));
        for (auto ext : e.value.shape()) io::write_u32(os, static_cast<std::uint32_t>(ext));
        for (double x : e.value.values()) io::write_f64(os, x);
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const MilModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    save_checkpoint(os, model);
    if (!os) throw DataError("write failed: " + path.string());
}

inline MilModel load_checkpoint(std::istream& is, const std::string& what = "checkpoint") {
    io::expect_magic(is, "PSAC", what);
    const auto version = io::read_u32(is, what);
    if (version != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    ModelVariant v;
    const auto t = io::read_u32(is, what);
    const auto p = io::read_u32(is, what);
    if (t > 1 || p > 1) throw DataError(what + ": bad variant descriptor");
    v.transform = t == 0 ? BagTransform::ABMIL : BagTransform::TABMIL;
    v.posterior = p == 0 ? Posterior::DiracDelta : Posterior::DiagGaussian;
    for (auto* d : {&v.dims.input, &v.dims.embed, &v.dims.attention, &v.dims.layers, &v.dims.heads, &v.dims.qk, &v.dims.v}) {
        *d = io::read_u32(is, what);
    }
    MilModel model(v, 0);
    auto& store = model.params();
    const auto count = io::read_u32(is, what);
    if (count != store.size()) throw DataError(what + ": parameter count does not match the variant");
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = io::read_u32(is, what);
        if (len > 4096) throw DataError(what + ": implausible parameter name length");
        std::string name(len, '\0');
        io::read_exact(is, name.data(), len, what);
        const auto rank = io::read_u32(is, what);
        ad::Shape shape(rank);
        for (auto& ext : shape) ext = io::read_u32(is, what);
        auto& target = store.at(store.index_of(name));
        if (target.shape() != shape) throw DataError(what + ": shape mismatch for parameter '" + name + "'");
        for (auto& x : target.values()) x = io::read_f64(is, what);
    }
    return model;
}

inline MilModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    return load_checkpoint(is, path.string());
}

}  // namespace probsa::model
