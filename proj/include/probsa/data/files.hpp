#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "probsa/data/bag.hpp"
#include "probsa/data/binary_io.hpp"
#include "probsa/data/synthetic.hpp"
#include "probsa/error.hpp"

namespace probsa::data {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::uint32_t kCoordsFormatVersion = 1;

/// Writes `features` as a MILF file: magic, version, N, P, then float32 row-major.
inline void write_features(const fs::path& path, const ad::Tensor& features) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    io::write_magic(os, "MILF");
    io::write_u32(os, kFeatureFormatVersion);
    io::write_u32(os, static_cast<std::uint32_t>(features.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(features.cols()));
    for (double v : features.values()) io::write_f32(os, static_cast<float>(v));
    if (!os) throw DataError("write failed: " + path.string());
}

inline ad::Tensor read_features(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open feature file " + path.string());
    const auto what = path.string();
    io::expect_magic(is, "MILF", what);
    const auto version = io::read_u32(is, what);
    if (version != kFeatureFormatVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    const auto n = io::read_u32(is, what);
    const auto p = io::read_u32(is, what);
    if (n == 0 || p == 0) throw DataError(what + ": empty feature matrix");
    std::vector<double> x(static_cast<std::size_t>(n) * p);
    for (auto& v : x) v = static_cast<double>(io::read_f32(is, what));
    return ad::Tensor::matrix(n, p, std::move(x));
}

/// Writes coordinates as a MILC file: magic, version, N, c, then int32 row-major.
inline void write_coords(const fs::path& path, const Coords& coords) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    io::write_magic(os, "MILC");
    io::write_u32(os, kCoordsFormatVersion);
    io::write_u32(os, static_cast<std::uint32_t>(coords.count));
    io::write_u32(os, static_cast<std::uint32_t>(coords.dims));
    for (auto v : coords.values) io::write_i32(os, v);
    if (!os) throw DataError("write failed: " + path.string());
}

inline Coords read_coords(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open coords file " + path.string());
    const auto what = path.string();
    io::expect_magic(is, "MILC", what);
    const auto version = io::read_u32(is, what);
    if (version != kCoordsFormatVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    Coords c;
    c.count = io::read_u32(is, what);
    c.dims = io::read_u32(is, what);
    if (c.dims != 1 && c.dims != 2) throw DataError(what + ": coordinate dimensionality must be 1 or 2");
    c.values.resize(c.count * c.dims);
    for (auto& v : c.values) v = io::read_i32(is, what);
    return c;
}

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split tag '" + s + "'");
}

struct ManifestEntry {
    std::string bag_id;
    Split split = Split::Train;
    int label = 0;
    fs::path features;
    fs::path coords;
};

struct DatasetManifest {
    fs::path root;  // directory that relative file paths resolve against
    std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestHeader = "bag_id,split,label,features,coords";

/// Parses a manifest CSV. Relative file paths resolve against the manifest's directory.
inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    if (!std::getline(is, line)) throw DataError(path.string() + ": empty manifest");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) throw DataError(path.string() + ": header must be '" + std::string(kManifestHeader) + "'");
    std::set<std::string> ids;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        ManifestEntry e;
        e.bag_id = cells[0];
        e.split = parse_split(cells[1]);
        if (cells[2] != "0" && cells[2] != "1") throw DataError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
        e.label = cells[2] == "1" ? 1 : 0;
        e.features = cells[3];
        e.coords = cells[4];
        if (!ids.insert(e.bag_id).second) throw DataError(path.string() + ": duplicate bag id '" + e.bag_id + "'");
        m.entries.push_back(std::move(e));
    }
    for (const auto& e : m.entries) {
        for (const auto& f : {e.features, e.coords}) {
            const auto full = f.is_absolute() ? f : m.root / f;
            if (!fs::exists(full)) throw DataError("bag '" + e.bag_id + "': missing file " + full.string());
        }
    }
    return m;
}

inline Bag load_bag(const DatasetManifest& manifest, const ManifestEntry& entry) {
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : manifest.root / p; };
    Bag bag;
    bag.id = entry.bag_id;
    bag.label = entry.label;
    bag.features = read_features(resolve(entry.features));
    bag.coords = read_coords(resolve(entry.coords));
    if (bag.coords.count != bag.features.rows()) {
        throw DataError("bag '" + entry.bag_id + "': feature file has N=" + std::to_string(bag.features.rows()) +
                        " but coords file has N=" + std::to_string(bag.coords.count));
    }
    validate(bag);
    return bag;
}

inline constexpr const char* kInstanceLabelsFile = "instance_labels.csv";

/// Loads every bag of a manifest. Instance labels are attached when an
/// `instance_labels.csv` sidecar (`bag_id,labels` with labels as a 0/1 string)
/// sits next to the manifest.
inline Dataset load_dataset(const fs::path& manifest_path) {
    const auto manifest = load_manifest(manifest_path);
    std::map<std::string, std::vector<int>> inst;
    const auto sidecar = manifest.root / kInstanceLabelsFile;
    if (fs::exists(sidecar)) {
        std::ifstream is(sidecar);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            std::vector<int> y;
            for (char ch : line.substr(comma + 1)) {
                if (ch == '0' || ch == '1') y.push_back(ch - '0');
            }
            inst[line.substr(0, comma)] = std::move(y);
        }
    }
    Dataset ds;
    for (const auto& e : manifest.entries) {
        Bag bag = load_bag(manifest, e);
        if (auto it = inst.find(bag.id); it != inst.end()) {
            bag.instance_labels = it->second;
            validate(bag);
        }
        switch (e.split) {
            case Split::Train: ds.train.push_back(std::move(bag)); break;
            case Split::Val: ds.val.push_back(std::move(bag)); break;
            case Split::Test: ds.test.push_back(std::move(bag)); break;
        }
    }
    return ds;
}

/// Writes a dataset as manifest.csv plus one MILF/MILC pair per bag under `dir/bags`.
inline fs::path write_dataset(const fs::path& dir, const Dataset& ds) {
    std::error_code ec;
    fs::create_directories(dir / "bags", ec);
    if (ec) throw DataError("cannot create " + (dir / "bags").string() + ": " + ec.message());
    const auto manifest_path = dir / "manifest.csv";
    std::ofstream man(manifest_path);
    std::ofstream lab(dir / kInstanceLabelsFile);
    if (!man || !lab) throw DataError("cannot write into " + dir.string());
    man << kManifestHeader << '\n';
    lab << "bag_id,labels\n";
    auto emit = [&](const std::vector<Bag>& bags, Split split) {
        for (const auto& b : bags) {
            const auto feat = fs::path("bags") / (b.id + ".milf");
            const auto crd = fs::path("bags") / (b.id + ".milc");
            write_features(dir / feat, b.features);
            write_coords(dir / crd, b.coords);
            man << b.id << ',' << split_name(split) << ',' << b.label << ',' << feat.generic_string() << ','
                << crd.generic_string() << '\n';
            if (b.instance_labels) {
                lab << b.id << ',';
                for (int v : *b.instance_labels) lab << v;
                lab << '\n';
            }
        }
    };
    emit(ds.train, Split::Train);
    emit(ds.val, Split::Val);
    emit(ds.test, Split::Test);
    if (!man || !lab) throw DataError("write failed under " + dir.string());
    return manifest_path;
}

}  // namespace probsa::data
