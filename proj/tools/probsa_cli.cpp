#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "probsa/cli/commands.hpp"

using namespace probsa::cli;

int main(int argc, char** argv) {
    CLI::App app{"Attention-based MIL with a graph smoothness prior on the attention logits"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    Options opts;

    using Command = std::function<int(RunConfig, const Options&)>;
    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"gen-synth", {"generate a synthetic dataset", cmd_gen_synth}},
        {"train", {"train one run per seed", cmd_train}},
        {"ablate", {"train every variant x lambda cell of the ablation grid", cmd_ablate}},
        {"eval", {"score a checkpoint on the validation and test splits", cmd_eval}},
        {"export-maps", {"write attention mean/variance maps for the test split", cmd_export_maps}},
    };
    std::map<std::string, CLI::Option*> seed_opts;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        seed_opts[name] = sub->add_option("--seed", seed, "override the configured seeds with this one");
        sub->add_option("--jobs", opts.jobs, "parallel runs")->check(CLI::PositiveNumber);
        sub->add_flag("--dry-run", opts.dry_run, "validate the config and print the plan without writing anything");
        if (name == "eval" || name == "export-maps") {
            sub->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }

    for (const auto& [name, entry] : commands) {
        if (!app.got_subcommand(name)) continue;
        if (seed_opts[name]->count()) opts.seed = seed;
        const auto& cmd = entry.second;
        return guarded([&] { return cmd(load_config(config_path), opts); }, std::cerr);
    }
    return kFailure;
}
