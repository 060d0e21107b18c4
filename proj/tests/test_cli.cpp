#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "probsa/cli/commands.hpp"

using namespace probsa;
using cli::Json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("probsa_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// relative path -> contents for every regular file below `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return out;
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(PROBSA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

/// A quick configuration: tiny synthetic chain data and a small ABMIL.
Json small_config(const fs::path& out) {
    return Json{{"data",
                 {{"synthetic",
                   {{"seed", 3},
                    {"n_train", 16},
                    {"n_val", 8},
                    {"n_test", 8},
                    {"min_instances", 6},
                    {"max_instances", 9},
                    {"feature_dim", 4},
                    {"region_min", 2},
                    {"region_max", 3},
                    {"positive_mean", 1.5}}}}},
                {"model", {{"transform", "ABMIL"}, {"posterior", "diag"}, {"dims", {{"embed", 8}, {"attention", 4}}}}},
                {"train", {{"epochs", 2}, {"base_lr", 1e-3}, {"batch_size", 4}}},
                {"eval", {{"samples", 4}}},
                {"out_dir", out.string()},
                {"seeds", {1}}};
}

fs::path write_config(const fs::path& dir, const Json& j, const std::string& name = "config.json") {
    const auto p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

}  // namespace

TEST(Config, DefaultsAndInputInference) {
    const auto c = cli::parse_config(Json::object());
    EXPECT_TRUE(c.data.synthetic.has_value());
    EXPECT_EQ(c.model.dims.input, c.data.synthetic->feature_dim);
    EXPECT_TRUE(c.objective.lambda.cyclical);
    EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{0});
    EXPECT_EQ(c.ablation.lambdas.size(), 5u);
    EXPECT_EQ(c.ablation.variants.size(), 1u);
}

TEST(Config, ResolvedEchoReparsesToItself) {
    Json j = small_config("x");
    j["ablation"] = {{"variants", {"ABMIL+dirac", "T-ABMIL+diag"}}, {"lambda", {0.5, "cyclical"}}};
    const auto echo = cli::to_json(cli::parse_config(j));
    EXPECT_EQ(cli::to_json(cli::parse_config(echo)), echo);
    EXPECT_EQ(echo["model"]["dims"]["input"], 4);
}

TEST(Config, RejectsSchemaViolations) {
    auto bad = [](Json j) { EXPECT_THROW(cli::parse_config(j), ConfigError) << j.dump(); };
    Json j = small_config("x");
    j["extra"] = 1;
    bad(j);
    j = small_config("x");
    j["train"]["epochz"] = 3;
    bad(j);
    j = small_config("x");
    j["train"]["epochs"] = "ten";
    bad(j);
    j = small_config("x");
    j["objective"] = {{"lambda", 1.5}};
    bad(j);
    j = small_config("x");
    j["objective"] = {{"lambda", "annealed"}};
    bad(j);
    j = small_config("x");
    j["ablation"] = {{"lambda", {0.1, 0.1}}};
    bad(j);
    j = small_config("x");
    j["ablation"] = {{"lambda", {"cyclical", "cyclical"}}};
    bad(j);
    j = small_config("x");
    j["ablation"] = {{"variants", {"ABMIL+gauss"}}};
    bad(j);
    j = small_config("x");
    j["seeds"] = {1, 1};
    bad(j);
    j = small_config("x");
    j["data"]["manifest"] = "m.csv";
    bad(j);
    j = small_config("x");
    j["data"]["synthetic"]["region_max"] = 20;
    bad(j);
    j = small_config("x");
    j["model"]["dims"]["attention"] = 64;
    bad(j);
}

TEST(CliGenSynth, SameSeedGivesIdenticalTrees) {
    TempDir dir("gen_same");
    auto j = small_config(dir.path / "a");
    j["data"]["synthetic"]["seed"] = 7;
    const auto cfg = write_config(dir.path, j);
    ASSERT_EQ(run_cli("gen-synth --config " + cfg.string(), dir.path / "log"), 0);
    j["out_dir"] = (dir.path / "b").string();
    const auto cfg_b = write_config(dir.path, j, "b.json");
    ASSERT_EQ(run_cli("gen-synth --config " + cfg_b.string(), dir.path / "log"), 0);
    auto a = tree(dir.path / "a");
    auto b = tree(dir.path / "b");
    // run.json echoes the differing out_dir; everything else must match.
    a.erase("run.json");
    b.erase("run.json");
    EXPECT_GT(a.size(), 3u);
    EXPECT_EQ(a, b);
}

TEST(CliGenSynth, SplitCountsAndCard) {
    TempDir dir("gen_counts");
    auto j = small_config(dir.path / "ds");
    j["data"]["synthetic"]["n_train"] = 50;
    j["data"]["synthetic"]["n_val"] = 10;
    j["data"]["synthetic"]["n_test"] = 20;
    j["data"]["synthetic"]["positive_fraction"] = 0.0;
    ASSERT_EQ(run_cli("gen-synth --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    EXPECT_EQ(lines(dir.path / "ds" / "manifest.csv").size(), 81u);
    const auto card = Json::parse(slurp(dir.path / "ds" / "dataset_card.json"));
    for (const char* s : {"train", "val", "test"}) {
        EXPECT_EQ(card[s]["positive_bags"], 0);
        EXPECT_EQ(card[s]["positive_fraction"], 0.0);
    }
    EXPECT_EQ(card["train"]["bags"], 50);
    EXPECT_TRUE(fs::exists(dir.path / "ds" / "run.json"));
}

TEST(CliGenSynth, ErrorsMapToExitCodes) {
    TempDir dir("gen_err");
    auto j = small_config("/proc/probsa_cannot_write_here");
    EXPECT_EQ(run_cli("gen-synth --config " + write_config(dir.path, j).string(), dir.path / "log"), 3);
    EXPECT_EQ(run_cli("gen-synth --config " + (dir.path / "missing.json").string(), dir.path / "log"), 2);
    EXPECT_EQ(run_cli("frobnicate", dir.path / "log"), 2);
}

TEST(CliTrain, OneSeedOneCheckpoint) {
    TempDir dir("train_one");
    const auto cfg = write_config(dir.path, small_config(dir.path / "out"));
    ASSERT_EQ(run_cli("train --config " + cfg.string(), dir.path / "log"), 0) << slurp(dir.path / "log");
    std::size_t ckpts = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir.path / "out")) ckpts += e.path().extension() == ".psac";
    EXPECT_EQ(ckpts, 1u);
    EXPECT_EQ(lines(dir.path / "out" / "seed_1" / "history.csv").front(), "epoch,lr,train_loss,val_auroc,val_f1,selected");
    EXPECT_EQ(lines(dir.path / "out" / "seed_1" / "steps.csv").front(), "step,lambda,ll,kl,total");
    // run.json alone reproduces the run configuration.
    const auto echo = Json::parse(slurp(dir.path / "out" / "run.json"));
    EXPECT_EQ(cli::to_json(cli::parse_config(echo)), echo);
}

TEST(CliTrain, FiveSeedsGiveFiveRowsPlusAggregate) {
    TempDir dir("train_five");
    auto j = small_config(dir.path / "out");
    j["seeds"] = {1, 2, 3, 4, 5};
    ASSERT_EQ(run_cli("train --jobs 3 --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    const auto rows = lines(dir.path / "out" / "report.csv");
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows.front(), "run_seed,split,auroc,f1");
    EXPECT_EQ(rows.back().rfind("mean,test,", 0), 0u);
    const auto summary = Json::parse(slurp(dir.path / "out" / "summary.json"));
    EXPECT_EQ(summary["seeds"].size(), 5u);
    EXPECT_TRUE(summary["test_auroc"].contains("std"));
}

TEST(CliTrain, SeedFlagOverridesConfig) {
    TempDir dir("train_seed");
    auto j = small_config(dir.path / "out");
    j["seeds"] = {1, 2};
    ASSERT_EQ(run_cli("train --seed 9 --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    EXPECT_TRUE(fs::exists(dir.path / "out" / "seed_9" / "checkpoint.psac"));
    EXPECT_FALSE(fs::exists(dir.path / "out" / "seed_1"));
    EXPECT_EQ(Json::parse(slurp(dir.path / "out" / "run.json"))["seeds"], Json({9}));
}

TEST(CliTrain, ZeroLambdaDiracLogsButIgnoresKl) {
    TempDir dir("train_zero");
    auto j = small_config(dir.path / "out");
    j["model"]["posterior"] = "dirac";
    j["objective"] = {{"lambda", 0}};
    ASSERT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    const auto rows = lines(dir.path / "out" / "seed_1" / "steps.csv");
    ASSERT_GT(rows.size(), 1u);
    bool some_kl = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string step, lambda, ll, kl, total;
        std::getline(ss, step, ',');
        std::getline(ss, lambda, ',');
        std::getline(ss, ll, ',');
        std::getline(ss, kl, ',');
        std::getline(ss, total, ',');
        EXPECT_EQ(std::stod(lambda), 0.0);
        EXPECT_EQ(ll, total);
        some_kl = some_kl || std::stod(kl) > 0.0;
    }
    EXPECT_TRUE(some_kl);
}

TEST(CliTrain, RepeatedRunsAndJobCountsAreBitIdentical) {
    TempDir dir("train_repro");
    auto j = small_config(dir.path / "a");
    j["seeds"] = {4, 5};
    ASSERT_EQ(run_cli("train --config " + write_config(dir.path, j, "a.json").string(), dir.path / "log"), 0);
    j["out_dir"] = (dir.path / "b").string();
    ASSERT_EQ(run_cli("train --jobs 2 --config " + write_config(dir.path, j, "b.json").string(), dir.path / "log"), 0);
    auto a = tree(dir.path / "a");
    auto b = tree(dir.path / "b");
    a.erase("run.json");
    b.erase("run.json");
    EXPECT_EQ(a, b);
}

TEST(CliTrain, ConfigAndDataErrors) {
    TempDir dir("train_err");
    auto j = small_config(dir.path / "out");
    j["unknown"] = true;
    EXPECT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 2);
    j = small_config(dir.path / "out");
    j["ablation"] = {{"lambda", {0, 0.5, 0}}};
    EXPECT_EQ(run_cli("ablate --config " + write_config(dir.path, j).string(), dir.path / "log"), 2);

    // A manifest naming a file that does not exist is a data error.
    std::ofstream(dir.path / "manifest.csv") << "bag_id,split,label,features,coords\nb0,train,1,nope.milf,nope.milc\n";
    j = small_config(dir.path / "out");
    j["data"] = {{"manifest", "manifest.csv"}};
    EXPECT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 3);

    // Manifest data whose feature width disagrees with the configured input.
    auto g = small_config(dir.path / "ds");
    ASSERT_EQ(run_cli("gen-synth --config " + write_config(dir.path, g, "g.json").string(), dir.path / "log"), 0);
    j = small_config(dir.path / "out");
    j["data"] = {{"manifest", (dir.path / "ds" / "manifest.csv").string()}};
    j["model"]["dims"]["input"] = 5;
    EXPECT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 3);
}

TEST(CliTrain, DivergenceExitsWithNumericCode) {
    TempDir dir("train_nan");
    auto j = small_config(dir.path / "out");
    j["train"]["base_lr"] = 1e300;
    j["train"]["warmup"] = {{"start_factor", 1.0}, {"total_iters", 0}};
    j["train"]["epochs"] = 4;
    EXPECT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 4) << slurp(dir.path / "log");
}

TEST(CliTrain, DryRunWritesNothing) {
    TempDir dir("train_dry");
    const auto cfg = write_config(dir.path, small_config(dir.path / "out"));
    ASSERT_EQ(run_cli("train --dry-run --config " + cfg.string(), dir.path / "log"), 0);
    EXPECT_FALSE(fs::exists(dir.path / "out"));
    EXPECT_NE(slurp(dir.path / "log").find("plan: train ABMIL+diag"), std::string::npos);
}

TEST(CliAblate, SingleCellEqualsTrain) {
    TempDir dir("ablate_one");
    auto j = small_config(dir.path / "train");
    j["objective"] = {{"lambda", 0.5}};
    ASSERT_EQ(run_cli("train --config " + write_config(dir.path, j, "t.json").string(), dir.path / "log"), 0);
    j["out_dir"] = (dir.path / "grid").string();
    j["ablation"] = {{"lambda", {0.5}}};
    ASSERT_EQ(run_cli("ablate --config " + write_config(dir.path, j, "a.json").string(), dir.path / "log"), 0);
    const auto cell = dir.path / "grid" / "ABMIL+diag" / "lambda_0.5";
    for (const char* f : {"report.csv", "summary.json", "seed_1/history.csv", "seed_1/steps.csv", "seed_1/checkpoint.psac"}) {
        EXPECT_EQ(slurp(cell / f), slurp(dir.path / "train" / f)) << f;
    }
    const auto rows = lines(dir.path / "grid" / "ablation.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "variant,lambda,auroc_mean,auroc_std,f1_mean,f1_std,rank,status");
    EXPECT_NE(rows[1].find(",1,ok"), std::string::npos) << rows[1];
}

TEST(CliAblate, RankColumnComesFromRankMethods) {
    TempDir dir("ablate_rank");
    auto j = small_config(dir.path / "grid");
    j["ablation"] = {{"variants", {"ABMIL+diag", "ABMIL+dirac"}}, {"lambda", {0, "cyclical"}}};
    ASSERT_EQ(run_cli("ablate --jobs 4 --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    const auto rows = lines(dir.path / "grid" / "ablation.csv");
    ASSERT_EQ(rows.size(), 5u);
    std::vector<std::vector<double>> table;
    std::vector<double> ranks;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::vector<std::string> cells;
        std::stringstream ss(rows[i]);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        ASSERT_EQ(cells.size(), 8u);
        EXPECT_EQ(cells[7], "ok");
        table.push_back({std::stod(cells[2]), std::stod(cells[4])});
        ranks.push_back(std::stod(cells[6]));
    }
    EXPECT_EQ(eval::rank_methods(table), ranks);
    EXPECT_EQ(rows[2].substr(0, 19), "ABMIL+diag,cyclical");
}

TEST(CliAblate, FailedCellIsAnnotatedAndGridContinues) {
    TempDir dir("ablate_fail");
    auto j = small_config(dir.path / "grid");
    // Two optimizer steps over five cycles leaves no whole cycle, so only the cyclical cell fails.
    j["train"]["epochs"] = 1;
    j["train"]["batch_size"] = 8;
    j["ablation"] = {{"lambda", {0.1, "cyclical"}}};
    EXPECT_EQ(run_cli("ablate --config " + write_config(dir.path, j).string(), dir.path / "log"), 2);
    const auto rows = lines(dir.path / "grid" / "ablation.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_NE(rows[1].find(",ok"), std::string::npos);
    EXPECT_NE(rows[2].find(",,,,,error:"), std::string::npos) << rows[2];
}

TEST(CliMaps, DiracVarianceIsBlackAndExportIsReproducible) {
    TempDir dir("maps_dirac");
    auto j = small_config(dir.path / "out");
    j["model"]["posterior"] = "dirac";
    const auto cfg = write_config(dir.path, j);
    ASSERT_EQ(run_cli("train --config " + cfg.string(), dir.path / "log"), 0);
    const auto ckpt = (dir.path / "out" / "seed_1" / "checkpoint.psac").string();
    ASSERT_EQ(run_cli("export-maps --config " + cfg.string() + " --checkpoint " + ckpt, dir.path / "log"), 0);
    const auto maps = dir.path / "out" / "export" / "maps";
    const auto first = tree(maps);
    std::size_t var_maps = 0;
    for (const auto& [name, bytes] : first) {
        if (name.find("_var.pgm") == std::string::npos) continue;
        ++var_maps;
        // Header "P5\n<w> <h>\n255\n" then pixels.
        std::size_t pos = 0;
        for (int nl = 0; nl < 3; ++nl) pos = bytes.find('\n', pos) + 1;
        for (std::size_t i = pos; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], '\0') << name;
    }
    EXPECT_EQ(var_maps, 8u);
    ASSERT_EQ(run_cli("export-maps --config " + cfg.string() + " --checkpoint " + ckpt, dir.path / "log"), 0);
    EXPECT_EQ(tree(maps), first);
}

TEST(CliMaps, VariantMismatchIsAConfigError) {
    TempDir dir("maps_mismatch");
    auto j = small_config(dir.path / "out");
    ASSERT_EQ(run_cli("train --config " + write_config(dir.path, j).string(), dir.path / "log"), 0);
    j["model"]["transform"] = "T-ABMIL";
    j["model"]["dims"]["qk"] = 8;
    j["model"]["dims"]["v"] = 8;
    const auto cfg = write_config(dir.path, j, "other.json");
    const auto ckpt = (dir.path / "out" / "seed_1" / "checkpoint.psac").string();
    EXPECT_EQ(run_cli("export-maps --config " + cfg.string() + " --checkpoint " + ckpt, dir.path / "log"), 2);
    EXPECT_EQ(run_cli("export-maps --config " + cfg.string(), dir.path / "log"), 2);
}

TEST(CliMaps, EmptyTestSplitWarnsAndSucceeds) {
    TempDir dir("maps_empty");
    auto j = small_config(dir.path / "out");
    const auto cfg = write_config(dir.path, j);
    ASSERT_EQ(run_cli("train --config " + cfg.string(), dir.path / "log"), 0);
    j["data"]["synthetic"]["n_test"] = 0;
    const auto cfg_empty = write_config(dir.path, j, "empty.json");
    const auto ckpt = (dir.path / "out" / "seed_1" / "checkpoint.psac").string();
    ASSERT_EQ(run_cli("export-maps --config " + cfg_empty.string() + " --checkpoint " + ckpt, dir.path / "log"), 0);
    const auto maps = dir.path / "out" / "export" / "maps";
    ASSERT_TRUE(fs::is_directory(maps));
    EXPECT_TRUE(fs::is_empty(maps));
    EXPECT_NE(slurp(dir.path / "log").find("warning"), std::string::npos);
}

TEST(CliEval, ReportsValidationAndTestRows) {
    TempDir dir("eval");
    const auto cfg = write_config(dir.path, small_config(dir.path / "out"));
    ASSERT_EQ(run_cli("train --config " + cfg.string(), dir.path / "log"), 0);
    const auto ckpt = (dir.path / "out" / "seed_1" / "checkpoint.psac").string();
    ASSERT_EQ(run_cli("eval --config " + cfg.string() + " --checkpoint " + ckpt, dir.path / "log"), 0);
    const auto rows = lines(dir.path / "out" / "eval" / "report.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1].rfind("1,val,", 0), 0u);
    // The test row matches the one written at the end of training.
    EXPECT_EQ(rows[2], lines(dir.path / "out" / "report.csv")[1]);
    EXPECT_TRUE(fs::exists(dir.path / "out" / "eval" / "run.json"));
}
