#pragma once

// JSON run configuration: parsing with unknown-key rejection, defaults, and
// the fully resolved echo written to run.json.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "probsa/data/synthetic.hpp"
#include "probsa/error.hpp"
#include "probsa/model/variant.hpp"
#include "probsa/objective/lambda_policy.hpp"
#include "probsa/train/trainer.hpp"

namespace probsa::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// lambda as configured: a constant in [0, 1] or the cyclical schedule.
struct LambdaSpec {
    bool cyclical = true;
    double value = 0.0;

    std::string label() const { return cyclical ? "cyclical" : objective::LambdaPolicy::constant(value).describe(); }
    bool operator==(const LambdaSpec& o) const { return cyclical == o.cyclical && (cyclical || value == o.value); }
};

struct DataConfig {
    std::optional<std::string> manifest;
    std::optional<data::SynthSpec> synthetic;
    std::uint64_t synthetic_seed = 0;
    data::NeighborPolicy neighbors;
};

struct ObjectiveConfig {
    LambdaSpec lambda;
    std::size_t cycles = 5;
    double ramp_fraction = 0.8;

    objective::LambdaPolicy policy(const LambdaSpec& l) const {
        return l.cyclical ? objective::LambdaPolicy::cyclical(1, cycles, ramp_fraction) : objective::LambdaPolicy::constant(l.value);
    }
};

struct EvalConfig {
    std::size_t samples = 16;
    double threshold = 0.5;
    std::uint64_t seed = 12345;
};

struct AblationConfig {
    std::vector<model::ModelVariant> variants;  // transform and posterior; dims come from `model`
    std::vector<LambdaSpec> lambdas;
};

struct RunConfig {
    DataConfig data;
    model::ModelVariant model;
    bool input_dim_set = false;  // otherwise taken from the data
    ObjectiveConfig objective;
    train::TrainConfig train;
    EvalConfig eval;
    std::string out_dir = "out";
    std::vector<std::uint64_t> seeds{0};
    AblationConfig ablation;
};

namespace detail {

/// Reads keys of one JSON object and rejects any it was not asked about.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!has(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(where(key) + ": wrong type");
        }
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(where(key) + ": expected a non-negative integer");
        return v.get<std::size_t>();
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        return v.get<double>();
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string geometry_name(data::Geometry g) { return g == data::Geometry::Chain ? "chain" : "grid"; }

inline data::Geometry parse_geometry(const std::string& s, const std::string& where) {
    if (s == "chain") return data::Geometry::Chain;
    if (s == "grid") return data::Geometry::Grid;
    throw ConfigError(where + ": geometry must be 'chain' or 'grid'");
}

inline LambdaSpec parse_lambda(const Json& v, const std::string& where) {
    if (v.is_string()) {
        if (v.get<std::string>() == "cyclical") return {true, 0.0};
        throw ConfigError(where + ": expected a number in [0, 1] or \"cyclical\"");
    }
    if (!v.is_number()) throw ConfigError(where + ": expected a number in [0, 1] or \"cyclical\"");
    const double x = v.get<double>();
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(where + ": lambda must lie in [0, 1]");
    return {false, x};
}

inline Json lambda_json(const LambdaSpec& l) { return l.cyclical ? Json("cyclical") : Json(l.value); }

inline model::ModelVariant parse_variant_name(const std::string& s, const std::string& where) {
    const auto plus = s.find('+');
    if (plus == std::string::npos) throw ConfigError(where + ": variant must look like 'ABMIL+diag'");
    model::ModelVariant v;
    try {
        v.transform = model::parse_transform(s.substr(0, plus));
        v.posterior = model::parse_posterior(s.substr(plus + 1));
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return v;
}

inline data::SynthSpec parse_synth(Section& s, data::Geometry geometry) {
    data::SynthSpec d;
    d.geometry = geometry;
    d.n_train = s.count("n_train", d.n_train);
    d.n_val = s.count("n_val", d.n_val);
    d.n_test = s.count("n_test", d.n_test);
    d.min_instances = s.count("min_instances", d.min_instances);
    d.max_instances = s.count("max_instances", d.max_instances);
    d.feature_dim = s.count("feature_dim", d.feature_dim);
    d.informative_dims = s.count("informative_dims", d.feature_dim < d.informative_dims ? d.feature_dim : d.informative_dims);
    d.positive_fraction = s.number("positive_fraction", d.positive_fraction);
    d.region_min = s.count("region_min", d.region_min);
    d.region_max = s.count("region_max", d.region_max);
    d.negative_mean = s.number("negative_mean", d.negative_mean);
    d.positive_mean = s.number("positive_mean", d.positive_mean);
    d.stddev = s.number("stddev", d.stddev);
    return d;
}

}  // namespace detail

/// Parses and validates a run configuration. Every section is optional;
/// absent values take their defaults.
inline RunConfig parse_config(const Json& root) {
    using detail::Section;
    RunConfig c;
    Section top(root, "config");

    if (top.has("data")) {
        Section s(top.raw("data"), "data");
        c.data.neighbors.geometry = detail::parse_geometry(s.get<std::string>("geometry", "chain"), s.where("geometry"));
        c.data.neighbors.eight_connected = s.get<bool>("eight_connected", true);
        if (s.has("manifest")) c.data.manifest = s.get<std::string>("manifest", "");
        if (s.has("synthetic")) {
            Section syn(s.raw("synthetic"), "data.synthetic");
            c.data.synthetic_seed = syn.get<std::uint64_t>("seed", 0);
            c.data.synthetic = detail::parse_synth(syn, c.data.neighbors.geometry);
            syn.finish();
        }
        s.finish();
    }
    if (c.data.manifest && c.data.synthetic) throw ConfigError("data: give either 'manifest' or 'synthetic', not both");
    if (!c.data.manifest && !c.data.synthetic) c.data.synthetic = data::SynthSpec{};
    if (c.data.synthetic) {
        c.data.synthetic->geometry = c.data.neighbors.geometry;
        try {
            data::validate(*c.data.synthetic);
        } catch (const DataError& e) {
            throw ConfigError(std::string("data.synthetic: ") + e.what());
        }
    }

    if (top.has("model")) {
        Section s(top.raw("model"), "model");
        c.model.transform = model::parse_transform(s.get<std::string>("transform", "ABMIL"));
        c.model.posterior = model::parse_posterior(s.get<std::string>("posterior", "diag"));
        if (s.has("dims")) {
            Section d(s.raw("dims"), "model.dims");
            auto& m = c.model.dims;
            if (d.has("input")) {
                m.input = d.count("input", m.input);
                c.input_dim_set = true;
            }
            m.embed = d.count("embed", m.embed);
            m.attention = d.count("attention", m.attention);
            m.layers = d.count("layers", m.layers);
            m.heads = d.count("heads", m.heads);
            m.qk = d.count("qk", m.qk);
            m.v = d.count("v", m.v);
            d.finish();
        }
        s.finish();
    } else {
        c.model.posterior = model::Posterior::DiagGaussian;
    }
    if (!c.input_dim_set && c.data.synthetic) c.model.dims.input = c.data.synthetic->feature_dim;
    model::validate(c.model);

    if (top.has("objective")) {
        Section s(top.raw("objective"), "objective");
        if (s.has("lambda")) c.objective.lambda = detail::parse_lambda(s.raw("lambda"), "objective.lambda");
        c.objective.cycles = s.count("cycles", c.objective.cycles);
        c.objective.ramp_fraction = s.number("ramp_fraction", c.objective.ramp_fraction);
        s.finish();
    }
    {
        auto p = objective::LambdaPolicy::cyclical(std::max<std::size_t>(c.objective.cycles, 1), c.objective.cycles,
                                                   c.objective.ramp_fraction);
        objective::validate(p);
    }

    if (top.has("train")) {
        Section s(top.raw("train"), "train");
        auto& t = c.train;
        t.epochs = s.count("epochs", t.epochs);
        t.base_lr = s.number("base_lr", t.base_lr);
        t.batch_size = s.count("batch_size", t.batch_size);
        t.samples_train = s.count("samples", t.samples_train);
        if (s.has("warmup")) {
            Section w(s.raw("warmup"), "train.warmup");
            t.warmup.start_factor = w.number("start_factor", t.warmup.start_factor);
            t.warmup.total_iters = w.count("total_iters", t.warmup.total_iters);
            w.finish();
        }
        if (s.has("positive_weight")) {
            const auto& v = s.raw("positive_weight");
            if (v.is_string() && v.get<std::string>() == "auto") {
                t.positive_weight = {train::PositiveWeight::Mode::Auto, 1.0};
            } else if (v.is_string() && v.get<std::string>() == "none") {
                t.positive_weight = {train::PositiveWeight::Mode::None, 1.0};
            } else if (v.is_number() && v.get<double>() > 0.0) {
                t.positive_weight = {train::PositiveWeight::Mode::Fixed, v.get<double>()};
            } else {
                throw ConfigError("train.positive_weight: expected \"auto\", \"none\" or a positive number");
            }
        }
        s.finish();
    }

    if (top.has("eval")) {
        Section s(top.raw("eval"), "eval");
        c.eval.samples = s.count("samples", c.eval.samples);
        c.eval.threshold = s.number("threshold", c.eval.threshold);
        c.eval.seed = s.get<std::uint64_t>("seed", c.eval.seed);
        s.finish();
    }
    if (c.eval.samples < 1) throw ConfigError("eval.samples must be >= 1");
    if (!(c.eval.threshold > 0.0 && c.eval.threshold < 1.0)) throw ConfigError("eval.threshold must lie in (0, 1)");
    c.train.samples_predict = c.eval.samples;
    c.train.threshold = c.eval.threshold;
    c.train.eval_seed = c.eval.seed;
    train::validate(c.train);

    c.out_dir = top.get<std::string>("out_dir", c.out_dir);
    if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");

    if (top.has("seeds")) {
        const auto& v = top.raw("seeds");
        if (!v.is_array() || v.empty()) throw ConfigError("seeds: expected a non-empty list of integers");
        c.seeds.clear();
        std::set<std::uint64_t> seen;
        for (const auto& s : v) {
            if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
                throw ConfigError("seeds: expected non-negative integers");
            }
            const auto x = s.get<std::uint64_t>();
            if (!seen.insert(x).second) throw ConfigError("seeds: duplicate seed " + std::to_string(x));
            c.seeds.push_back(x);
        }
    }

    c.ablation.variants = {c.model};
    c.ablation.lambdas = {{false, 0.0}, {false, 0.1}, {false, 0.5}, {false, 1.0}, {true, 0.0}};
    if (top.has("ablation")) {
        Section s(top.raw("ablation"), "ablation");
        if (s.has("variants")) {
            const auto& v = s.raw("variants");
            if (!v.is_array() || v.empty()) throw ConfigError("ablation.variants: expected a non-empty list");
            c.ablation.variants.clear();
            for (const auto& name : v) {
                if (!name.is_string()) throw ConfigError("ablation.variants: expected strings like 'ABMIL+diag'");
                auto mv = detail::parse_variant_name(name.get<std::string>(), "ablation.variants");
                mv.dims = c.model.dims;
                for (const auto& prev : c.ablation.variants) {
                    if (model::variant_name(prev) == model::variant_name(mv)) throw ConfigError("ablation.variants: duplicate " + name.get<std::string>());
                }
                model::validate(mv);
                c.ablation.variants.push_back(mv);
            }
        }
        if (s.has("lambda")) {
            const auto& v = s.raw("lambda");
            if (!v.is_array() || v.empty()) throw ConfigError("ablation.lambda: expected a non-empty list");
            c.ablation.lambdas.clear();
            for (const auto& x : v) {
                const auto l = detail::parse_lambda(x, "ablation.lambda");
                for (const auto& prev : c.ablation.lambdas) {
                    if (prev == l) throw ConfigError("ablation.lambda: duplicate entry " + l.label());
                }
                c.ablation.lambdas.push_back(l);
            }
        }
        s.finish();
    }
    top.finish();
    return c;
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto c = parse_config(j);
    // Relative dataset paths are taken relative to the config file.
    if (c.data.manifest && fs::path(*c.data.manifest).is_relative()) {
        c.data.manifest = (path.parent_path() / *c.data.manifest).lexically_normal().string();
    }
    return c;
}

inline Json variant_json(const model::ModelVariant& v) {
    const auto& d = v.dims;
    return Json{{"transform", model::to_string(v.transform)},
                {"posterior", model::to_string(v.posterior)},
                {"dims",
                 {{"input", d.input},
                  {"embed", d.embed},
                  {"attention", d.attention},
                  {"layers", d.layers},
                  {"heads", d.heads},
                  {"qk", d.qk},
                  {"v", d.v}}}};
}

/// Resolved configuration with every default written out. parse_config of
/// the result reproduces the same run.
inline Json to_json(const RunConfig& c) {
    Json data{{"geometry", detail::geometry_name(c.data.neighbors.geometry)}, {"eight_connected", c.data.neighbors.eight_connected}};
    if (c.data.manifest) data["manifest"] = *c.data.manifest;
    if (c.data.synthetic) {
        const auto& s = *c.data.synthetic;
        data["synthetic"] = Json{{"seed", c.data.synthetic_seed},
                                 {"n_train", s.n_train},
                                 {"n_val", s.n_val},
                                 {"n_test", s.n_test},
                                 {"min_instances", s.min_instances},
                                 {"max_instances", s.max_instances},
                                 {"feature_dim", s.feature_dim},
                                 {"informative_dims", s.informative_dims},
                                 {"positive_fraction", s.positive_fraction},
                                 {"region_min", s.region_min},
                                 {"region_max", s.region_max},
                                 {"negative_mean", s.negative_mean},
                                 {"positive_mean", s.positive_mean},
                                 {"stddev", s.stddev}};
    }
    Json pw;
    switch (c.train.positive_weight.mode) {
        case train::PositiveWeight::Mode::Auto: pw = "auto"; break;
        case train::PositiveWeight::Mode::None: pw = "none"; break;
        case train::PositiveWeight::Mode::Fixed: pw = c.train.positive_weight.value; break;
    }
    Json variants = Json::array();
    for (const auto& v : c.ablation.variants) variants.push_back(model::variant_name(v));
    Json lambdas = Json::array();
    for (const auto& l : c.ablation.lambdas) lambdas.push_back(detail::lambda_json(l));
    return Json{{"data", data},
                {"model", variant_json(c.model)},
                {"objective",
                 {{"lambda", detail::lambda_json(c.objective.lambda)}, {"cycles", c.objective.cycles}, {"ramp_fraction", c.objective.ramp_fraction}}},
                {"train",
                 {{"epochs", c.train.epochs},
                  {"base_lr", c.train.base_lr},
                  {"batch_size", c.train.batch_size},
                  {"samples", c.train.samples_train},
                  {"warmup", {{"start_factor", c.train.warmup.start_factor}, {"total_iters", c.train.warmup.total_iters}}},
                  {"positive_weight", pw}}},
                {"eval", {{"samples", c.eval.samples}, {"threshold", c.eval.threshold}, {"seed", c.eval.seed}}},
                {"out_dir", c.out_dir},
                {"seeds", c.seeds},
                {"ablation", {{"variants", variants}, {"lambda", lambdas}}}};
}

}  // namespace probsa::cli
