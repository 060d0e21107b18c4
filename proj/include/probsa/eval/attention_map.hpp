#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/model/mil_model.hpp"

namespace probsa::eval {

namespace fs = std::filesystem;

/// Per-instance attention moments of one bag, raw and min-max normalized.
struct AttentionMap {
    std::string bag_id;
    data::Coords coords;
    std::vector<double> mean_raw;
    std::vector<double> var_raw;
    std::vector<double> mean_norm;
    std::vector<double> var_norm;
};

/// Min-max normalization to [0, 1]; a constant input maps to all zeros.
inline std::vector<double> minmax_normalize(std::span<const double> v) {
    std::vector<double> out(v.size(), 0.0);
    if (v.empty()) return out;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    return out;
}

/// Analytic posterior moments: mean mu(X) and variance sigma2(X) (zero for the Dirac posterior).
inline AttentionMap attention_map(const model::MilModel& net, const data::Bag& bag) {
    const auto ev = net.evaluate(bag);
    AttentionMap m;
    m.bag_id = bag.id;
    m.coords = bag.coords;
    m.mean_raw = ev.posterior.mu;
    m.var_raw = ev.posterior.sigma2 ? *ev.posterior.sigma2 : std::vector<double>(m.mean_raw.size(), 0.0);
    m.mean_norm = minmax_normalize(m.mean_raw);
    m.var_norm = minmax_normalize(m.var_raw);
    return m;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV `instance_index,coord0[,coord1],att_mean_raw,att_var_raw,att_mean_norm,att_var_norm`.
inline void write_attention_csv(const fs::path& path, const AttentionMap& m) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "instance_index,coord0";
    if (m.coords.dims == 2) os << ",coord1";
    os << ",att_mean_raw,att_var_raw,att_mean_norm,att_var_norm\n";
    for (std::size_t i = 0; i < m.mean_raw.size(); ++i) {
        os << i;
        for (std::size_t d = 0; d < m.coords.dims; ++d) os << ',' << m.coords.at(i, d);
        os << ',' << format_double(m.mean_raw[i]) << ',' << format_double(m.var_raw[i]) << ','
           << format_double(m.mean_norm[i]) << ',' << format_double(m.var_norm[i]) << '\n';
    }
    if (!os) throw DataError("write failed: " + path.string());
}

inline AttentionMap read_attention_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    AttentionMap m;
    m.bag_id = path.stem().string();
    m.coords.dims = line.find("coord1") != std::string::npos ? 2 : 1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5 + m.coords.dims) throw DataError(path.string() + ": malformed row");
        for (std::size_t d = 0; d < m.coords.dims; ++d) m.coords.values.push_back(std::stoi(cells[1 + d]));
        const std::size_t o = 1 + m.coords.dims;
        m.mean_raw.push_back(std::strtod(cells[o].c_str(), nullptr));
        m.var_raw.push_back(std::strtod(cells[o + 1].c_str(), nullptr));
        m.mean_norm.push_back(std::strtod(cells[o + 2].c_str(), nullptr));
        m.var_norm.push_back(std::strtod(cells[o + 3].c_str(), nullptr));
        ++m.coords.count;
    }
    return m;
}

/// Binary PGM (P5), one pixel per chain position or grid cell; cells
/// without an instance stay black.
inline void write_heatmap_pgm(const fs::path& path, const data::Coords& coords, std::span<const double> norm) {
    if (coords.count == 0) throw DataError("heatmap: empty bag");
    std::int64_t r0 = std::numeric_limits<std::int64_t>::max(), r1 = std::numeric_limits<std::int64_t>::min();
    std::int64_t c0 = 0, c1 = 0;
    if (coords.dims == 2) {
        c0 = std::numeric_limits<std::int64_t>::max();
        c1 = std::numeric_limits<std::int64_t>::min();
    }
    for (std::size_t i = 0; i < coords.count; ++i) {
        r0 = std::min<std::int64_t>(r0, coords.at(i, 0));
        r1 = std::max<std::int64_t>(r1, coords.at(i, 0));
        if (coords.dims == 2) {
            c0 = std::min<std::int64_t>(c0, coords.at(i, 1));
            c1 = std::max<std::int64_t>(c1, coords.at(i, 1));
        }
    }
    // Chains are laid out as a single row.
    std::size_t width, height;
    if (coords.dims == 1) {
        width = static_cast<std::size_t>(r1 - r0 + 1);
        height = 1;
    } else {
        height = static_cast<std::size_t>(r1 - r0 + 1);
        width = static_cast<std::size_t>(c1 - c0 + 1);
    }
    std::vector<unsigned char> pix(width * height, 0);
    for (std::size_t i = 0; i < coords.count; ++i) {
        const auto v = static_cast<unsigned char>(std::lround(std::clamp(norm[i], 0.0, 1.0) * 255.0));
        const std::size_t idx = coords.dims == 1
                                    ? static_cast<std::size_t>(coords.at(i, 0) - r0)
                                    : static_cast<std::size_t>(coords.at(i, 0) - r0) * width + static_cast<std::size_t>(coords.at(i, 1) - c0);
        pix[idx] = v;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "P5\n" << width << ' ' << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (!os) throw DataError("write failed: " + path.string());
}

/// Writes `<id>.csv`, `<id>_mean.pgm` and `<id>_var.pgm` for each bag into `dir`.
inline std::vector<AttentionMap> export_attention_maps(const model::MilModel& net, const std::vector<data::Bag>& bags,
                                                       const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<AttentionMap> maps;
    maps.reserve(bags.size());
    for (const auto& bag : bags) {
        auto m = attention_map(net, bag);
        write_attention_csv(dir / (bag.id + ".csv"), m);
        write_heatmap_pgm(dir / (bag.id + "_mean.pgm"), m.coords, m.mean_norm);
        write_heatmap_pgm(dir / (bag.id + "_var.pgm"), m.coords, m.var_norm);
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace probsa::eval
