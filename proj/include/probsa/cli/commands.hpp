#pragma once

// Implementation of the probsa subcommands. Each command takes a resolved
// RunConfig, writes into out_dir and leaves a run.json behind.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "probsa/cli/config.hpp"
#include "probsa/data/files.hpp"
#include "probsa/data/synthetic.hpp"
#include "probsa/eval/attention_map.hpp"
#include "probsa/eval/diagnostics.hpp"
#include "probsa/eval/metrics.hpp"
#include "probsa/eval/report.hpp"
#include "probsa/graph/prior.hpp"
#include "probsa/model/checkpoint.hpp"
#include "probsa/train/trainer.hpp"

namespace probsa::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

inline int exit_code_for(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const ConfigError&) {
        return kConfig;
    } catch (const DataError&) {
        return kData;
    } catch (const NumericError&) {
        return kNumeric;
    } catch (...) {
        return kFailure;
    }
}

inline std::string what_of(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const std::exception& e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

struct Options {
    std::optional<std::uint64_t> seed;  // replaces `seeds` (and the synthetic seed for gen-synth)
    std::size_t jobs = 1;
    bool dry_run = false;
    fs::path checkpoint;  // eval and export-maps
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw DataError("write failed: " + path.string());
}

inline void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

inline void write_run_json(const fs::path& dir, const RunConfig& c) { write_text(dir / "run.json", to_json(c).dump(2) + "\n"); }

inline std::string num(double v) { return eval::format_double(v); }

/// Runs fn(i) for i in [0, n) on up to `jobs` threads and returns each task's exception, if any.
template <class Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        worker();
        return errors;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return errors;
}

inline std::string csv_safe(std::string s) {
    for (auto& ch : s) {
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    }
    return s;
}

}  // namespace detail

/// Dataset with graphs attached, shared read-only by every run.
struct LoadedData {
    data::Dataset raw;
    std::vector<train::GraphBag> train, val, test;
};

/// Loads or generates the configured data and fills in the model input dim.
inline LoadedData load_data(RunConfig& c) {
    LoadedData d;
    d.raw = c.data.manifest ? data::load_dataset(*c.data.manifest) : data::generate_synthetic(*c.data.synthetic, c.data.synthetic_seed);
    std::optional<std::size_t> p;
    for (const auto* split : {&d.raw.train, &d.raw.val, &d.raw.test}) {
        for (const auto& b : *split) {
            if (p && *p != b.features.cols()) throw DataError("bag '" + b.id + "' has a different feature dimension");
            p = b.features.cols();
        }
    }
    if (p) {
        if (!c.input_dim_set) {
            c.model.dims.input = *p;
            for (auto& v : c.ablation.variants) v.dims.input = *p;
        } else if (*p != c.model.dims.input) {
            throw DataError("data feature dimension " + std::to_string(*p) + " does not match model.dims.input " +
                            std::to_string(c.model.dims.input));
        }
    }
    d.train = train::prepare(d.raw.train, c.data.neighbors);
    d.val = train::prepare(d.raw.val, c.data.neighbors);
    d.test = train::prepare(d.raw.test, c.data.neighbors);
    return d;
}

struct SeedResult {
    std::uint64_t seed = 0;
    double val_auroc = 0.0;
    double test_auroc = 0.0;
    double test_f1 = 0.0;
    double test_energy = 0.0;  // mean Dirichlet energy of mu over test bags
    eval::VarianceDiagnostic diagnostic;
};

/// Mean Dirichlet energy of the attention mean mu(X) over bags.
inline double mean_attention_energy(const model::MilModel& net, const std::vector<train::GraphBag>& bags) {
    if (bags.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& gb : bags) acc += graph::dirichlet_energy(net.evaluate(gb.bag).posterior.mu, gb.graph);
    return acc / static_cast<double>(bags.size());
}

/// Scores a split; a split the metrics cannot score is a data problem.
inline eval::EvalReport score_split(const model::MilModel& net, const std::vector<data::Bag>& bags, const RunConfig& c,
                                     const std::string& name) {
    try {
        return eval::evaluate_bags(net, bags, c.eval.samples, c.eval.seed, c.eval.threshold);
    } catch (const DomainError& e) {
        throw DataError(name + " split: " + e.what());
    }
}

inline train::TrainConfig train_config_for(const RunConfig& c, const LambdaSpec& lambda, std::uint64_t seed) {
    auto t = c.train;
    t.lambda = c.objective.policy(lambda);
    t.seed = model::mix_seed(seed, 2);
    return t;
}

/// One training run; writes checkpoint.psac, history.csv, steps.csv and diagnostic.json into `dir`.
inline SeedResult run_seed(const RunConfig& c, const model::ModelVariant& variant, const LambdaSpec& lambda, const LoadedData& d,
                           std::uint64_t seed, const fs::path& dir) {
    detail::make_dirs(dir);
    model::MilModel net(variant, model::mix_seed(seed, 1));
    const auto fitted = train::fit(d.train, d.val, net, train_config_for(c, lambda, seed));

    std::ostringstream hist;
    hist << "epoch,lr,train_loss,val_auroc,val_f1,selected\n";
    for (const auto& h : fitted.history) {
        hist << h.epoch << ',' << detail::num(h.lr) << ',' << detail::num(h.train_loss) << ',' << detail::num(h.val_auroc) << ','
             << detail::num(h.val_f1) << ',' << (h.selected ? 1 : 0) << '\n';
    }
    detail::write_text(dir / "history.csv", hist.str());
    std::ostringstream steps;
    steps << "step,lambda,ll,kl,total\n";
    for (const auto& s : fitted.steps) {
        steps << s.step << ',' << detail::num(s.loss.lambda) << ',' << detail::num(s.loss.ll) << ',' << detail::num(s.loss.kl) << ','
              << detail::num(s.loss.total) << '\n';
    }
    detail::write_text(dir / "steps.csv", steps.str());
    model::save_checkpoint(dir / "checkpoint.psac", net);

    const auto rep = score_split(net, d.raw.test, c, "test");
    SeedResult r{seed, fitted.best_val_auroc, rep.auroc, rep.f1, mean_attention_energy(net, d.test),
                 eval::variance_diagnostic(net, d.raw.test, c.eval.samples, c.eval.seed, c.eval.threshold)};
    Json diag{{"seed", seed},
              {"best_epoch", fitted.best_epoch},
              {"test_mu_dirichlet_energy", r.test_energy},
              {"instances_wrong", r.diagnostic.wrong},
              {"instances_right", r.diagnostic.right},
              {"mean_norm_var_wrong", r.diagnostic.mean_var_wrong},
              {"mean_norm_var_right", r.diagnostic.mean_var_right},
              {"bags_without_instance_labels", r.diagnostic.bags_skipped}};
    detail::write_text(dir / "diagnostic.json", diag.dump(2) + "\n");
    return r;
}

/// report.csv (one test row per seed plus the mean row) and summary.json for a set of seed runs.
inline void write_seed_summary(const fs::path& dir, const std::vector<SeedResult>& runs) {
    std::vector<double> au, f1, en, vw, vr;
    std::ostringstream rep;
    rep << "run_seed,split,auroc,f1\n";
    for (const auto& r : runs) {
        rep << r.seed << ",test," << detail::num(r.test_auroc) << ',' << detail::num(r.test_f1) << '\n';
        au.push_back(r.test_auroc);
        f1.push_back(r.test_f1);
        en.push_back(r.test_energy);
        vw.push_back(r.diagnostic.mean_var_wrong);
        vr.push_back(r.diagnostic.mean_var_right);
    }
    const auto a = eval::mean_std(au), f = eval::mean_std(f1);
    rep << "mean,test," << detail::num(a.mean) << ',' << detail::num(f.mean) << '\n';
    detail::write_text(dir / "report.csv", rep.str());
    Json seeds = Json::array();
    for (const auto& r : runs) seeds.push_back(r.seed);
    auto ms = [](const eval::MeanStd& m) { return Json{{"mean", m.mean}, {"std", m.std}}; };
    Json summary{{"seeds", seeds},
                 {"test_auroc", ms(a)},
                 {"test_f1", ms(f)},
                 {"test_mu_dirichlet_energy", ms(eval::mean_std(en))},
                 {"mean_norm_var_wrong", ms(eval::mean_std(vw))},
                 {"mean_norm_var_right", ms(eval::mean_std(vr))}};
    detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
}

inline std::string seed_dir(std::uint64_t s) { return "seed_" + std::to_string(s); }

// ---------------------------------------------------------------------------

inline Json dataset_card(const data::Dataset& ds, std::uint64_t seed) {
    auto split = [](const std::vector<data::Bag>& bags) {
        std::size_t pos = 0, inst = 0;
        for (const auto& b : bags) {
            pos += static_cast<std::size_t>(b.label);
            inst += b.size();
        }
        return Json{{"bags", bags.size()},
                    {"positive_bags", pos},
                    {"positive_fraction", bags.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(bags.size())},
                    {"instances", inst}};
    };
    return Json{{"seed", seed}, {"train", split(ds.train)}, {"val", split(ds.val)}, {"test", split(ds.test)}};
}

inline int cmd_gen_synth(RunConfig c, const Options& o) {
    if (!c.data.synthetic) throw ConfigError("gen-synth needs a data.synthetic section");
    if (o.seed) c.data.synthetic_seed = *o.seed;
    const fs::path dir = c.out_dir;
    if (o.dry_run) {
        *o.out << "plan: gen-synth seed " << c.data.synthetic_seed << " -> " << dir.string() << " (" << c.data.synthetic->n_train << '/'
               << c.data.synthetic->n_val << '/' << c.data.synthetic->n_test << " bags)\n"
               << to_json(c).dump(2) << '\n';
        return kOk;
    }
    const auto ds = data::generate_synthetic(*c.data.synthetic, c.data.synthetic_seed);
    data::write_dataset(dir, ds);
    detail::write_text(dir / "dataset_card.json", dataset_card(ds, c.data.synthetic_seed).dump(2) + "\n");
    detail::write_run_json(dir, c);
    *o.out << "wrote " << (ds.train.size() + ds.val.size() + ds.test.size()) << " bags to " << dir.string() << '\n';
    return kOk;
}

inline void print_plan(const RunConfig& c, const std::string& what, const Options& o) {
    *o.out << "plan: " << what << "\n" << to_json(c).dump(2) << '\n';
}

inline void check_data_reachable(const RunConfig& c) {
    if (c.data.manifest) data::load_manifest(*c.data.manifest);
}

inline int cmd_train(RunConfig c, const Options& o) {
    if (o.seed) c.seeds = {*o.seed};
    const fs::path dir = c.out_dir;
    if (o.dry_run) {
        check_data_reachable(c);
        std::string plan = "train " + model::variant_name(c.model) + " lambda " + c.objective.lambda.label() + " seeds";
        for (auto s : c.seeds) plan += " " + std::to_string(s);
        print_plan(c, plan + " -> " + dir.string(), o);
        return kOk;
    }
    auto d = load_data(c);
    detail::make_dirs(dir);
    detail::write_run_json(dir, c);
    std::vector<SeedResult> results(c.seeds.size());
    std::mutex io;
    const auto errors = detail::parallel_for(c.seeds.size(), o.jobs, [&](std::size_t i) {
        results[i] = run_seed(c, c.model, c.objective.lambda, d, c.seeds[i], dir / seed_dir(c.seeds[i]));
        std::lock_guard lock(io);
        *o.out << "seed " << c.seeds[i] << ": test auroc " << results[i].test_auroc << " f1 " << results[i].test_f1 << '\n';
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
    write_seed_summary(dir, results);
    return kOk;
}

inline std::string cell_dir(const model::ModelVariant& v, const LambdaSpec& l) {
    return model::variant_name(v) + "/lambda_" + l.label();
}

inline int cmd_ablate(RunConfig c, const Options& o) {
    if (o.seed) c.seeds = {*o.seed};
    const fs::path dir = c.out_dir;
    struct Cell {
        model::ModelVariant variant;
        LambdaSpec lambda;
    };
    std::vector<Cell> cells;
    for (const auto& v : c.ablation.variants) {
        for (const auto& l : c.ablation.lambdas) cells.push_back({v, l});
    }
    if (o.dry_run) {
        check_data_reachable(c);
        std::string plan = "ablate " + std::to_string(cells.size()) + " cells x " + std::to_string(c.seeds.size()) + " seeds:";
        for (const auto& cell : cells) plan += "\n  " + cell_dir(cell.variant, cell.lambda);
        print_plan(c, plan, o);
        return kOk;
    }
    auto d = load_data(c);
    for (auto& cell : cells) cell.variant.dims.input = c.model.dims.input;
    detail::make_dirs(dir);
    detail::write_run_json(dir, c);

    const std::size_t ns = c.seeds.size();
    std::vector<SeedResult> results(cells.size() * ns);
    std::mutex io;
    const auto errors = detail::parallel_for(results.size(), o.jobs, [&](std::size_t k) {
        const auto& cell = cells[k / ns];
        const auto s = c.seeds[k % ns];
        results[k] = run_seed(c, cell.variant, cell.lambda, d, s, dir / cell_dir(cell.variant, cell.lambda) / seed_dir(s));
        std::lock_guard lock(io);
        *o.out << cell_dir(cell.variant, cell.lambda) << " seed " << s << ": test auroc " << results[k].test_auroc << '\n';
    });

    struct Row {
        eval::MeanStd auroc, f1;
        std::string status = "ok";
        int code = kOk;
    };
    std::vector<Row> rows(cells.size());
    std::vector<std::vector<double>> table;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        std::vector<SeedResult> cell_runs;
        for (std::size_t si = 0; si < ns; ++si) {
            const auto& e = errors[ci * ns + si];
            if (e && rows[ci].code == kOk) {
                rows[ci].code = exit_code_for(e);
                rows[ci].status = "error: seed " + std::to_string(c.seeds[si]) + ": " + detail::csv_safe(what_of(e));
            }
            cell_runs.push_back(results[ci * ns + si]);
        }
        if (rows[ci].code != kOk) {
            std::lock_guard lock(io);
            *o.err << cell_dir(cells[ci].variant, cells[ci].lambda) << ": " << rows[ci].status << '\n';
            continue;
        }
        write_seed_summary(dir / cell_dir(cells[ci].variant, cells[ci].lambda), cell_runs);
        std::vector<double> au, f1;
        for (const auto& r : cell_runs) {
            au.push_back(r.test_auroc);
            f1.push_back(r.test_f1);
        }
        rows[ci].auroc = eval::mean_std(au);
        rows[ci].f1 = eval::mean_std(f1);
        table.push_back({rows[ci].auroc.mean, rows[ci].f1.mean});
    }
    const auto ranks = eval::rank_methods(table);

    std::ostringstream csv;
    csv << "variant,lambda,auroc_mean,auroc_std,f1_mean,f1_std,rank,status\n";
    std::size_t ok = 0;
    int first_error = kOk;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto& r = rows[ci];
        csv << model::variant_name(cells[ci].variant) << ',' << cells[ci].lambda.label() << ',';
        if (r.code == kOk) {
            csv << detail::num(r.auroc.mean) << ',' << detail::num(r.auroc.std) << ',' << detail::num(r.f1.mean) << ','
                << detail::num(r.f1.std) << ',' << detail::num(ranks[ok++]) << ",ok\n";
        } else {
            csv << ",,,,," << r.status << '\n';
            if (first_error == kOk) first_error = r.code;
        }
    }
    detail::write_text(dir / "ablation.csv", csv.str());
    return first_error;
}

/// Loads a checkpoint and requires it to match the configured model.
inline model::MilModel load_matching_checkpoint(const RunConfig& c, const fs::path& path) {
    if (path.empty()) throw ConfigError("--checkpoint is required");
    auto net = model::load_checkpoint(path);
    const auto& a = net.variant();
    const auto& b = c.model;
    const auto& x = a.dims;
    const auto& y = b.dims;
    const bool dims_match = x.input == y.input && x.embed == y.embed && x.attention == y.attention &&
                            (a.transform == model::BagTransform::ABMIL ||
                             (x.layers == y.layers && x.heads == y.heads && x.qk == y.qk && x.v == y.v));
    if (a.transform != b.transform || a.posterior != b.posterior || !dims_match) {
        throw ConfigError("checkpoint " + path.string() + " holds " + model::variant_name(a) + " with different settings than the configured " +
                          model::variant_name(b));
    }
    return net;
}

inline int cmd_eval(RunConfig c, const Options& o) {
    if (o.seed) c.seeds = {*o.seed};
    const fs::path dir = fs::path(c.out_dir) / "eval";
    if (o.dry_run) {
        check_data_reachable(c);
        if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        print_plan(c, "eval " + o.checkpoint.string() + " -> " + dir.string(), o);
        return kOk;
    }
    auto d = load_data(c);
    const auto net = load_matching_checkpoint(c, o.checkpoint);
    detail::make_dirs(dir);
    detail::write_run_json(dir, c);
    std::ostringstream rep;
    rep << "run_seed,split,auroc,f1\n";
    for (const auto& [name, bags] : {std::pair{"val", &d.raw.val}, std::pair{"test", &d.raw.test}}) {
        if (bags->empty()) continue;
        const auto r = score_split(net, *bags, c, name);
        rep << c.seeds.front() << ',' << name << ',' << detail::num(r.auroc) << ',' << detail::num(r.f1) << '\n';
        *o.out << name << ": auroc " << r.auroc << " f1 " << r.f1 << '\n';
    }
    detail::write_text(dir / "report.csv", rep.str());
    const auto diag = eval::variance_diagnostic(net, d.raw.test, c.eval.samples, c.eval.seed, c.eval.threshold);
    *o.out << "normalized attention variance: wrong " << diag.mean_var_wrong << " (" << diag.wrong << " instances), right "
           << diag.mean_var_right << " (" << diag.right << ")\n";
    return kOk;
}

inline int cmd_export_maps(RunConfig c, const Options& o) {
    const fs::path dir = fs::path(c.out_dir) / "export";
    if (o.dry_run) {
        check_data_reachable(c);
        if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        print_plan(c, "export-maps " + o.checkpoint.string() + " -> " + dir.string(), o);
        return kOk;
    }
    auto d = load_data(c);
    const auto net = load_matching_checkpoint(c, o.checkpoint);
    const auto maps = eval::export_attention_maps(net, d.raw.test, dir / "maps");
    detail::write_run_json(dir, c);
    if (maps.empty()) {
        *o.err << "warning: test split is empty, no maps written\n";
    } else {
        *o.out << "wrote " << maps.size() << " attention maps to " << (dir / "maps").string() << '\n';
    }
    return kOk;
}

/// Runs a command and maps library errors onto exit codes.
template <class Cmd>
int guarded(Cmd&& cmd, std::ostream& err) {
    try {
        return cmd();
    } catch (...) {
        const auto ep = std::current_exception();
        err << "error: " << what_of(ep) << '\n';
        return exit_code_for(ep);
    }
}

}  // namespace probsa::cli
