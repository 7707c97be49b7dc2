// Command-line front end: generate | train | score | eval, each driven by a
// JSON config file with optional dotted --set overrides. Exit codes: 0
// success, 2 usage, 3 data error, 4 numerical failure.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "post/commands.hpp"
#include "post/matrix.hpp"

namespace {

using post::UsageError;
using json = nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed) {
    cmd->add_option("-c,--config", args.config_path, "JSON config file");
    cmd->add_option("-o,--output", args.output_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--set", args.overrides,
                    "Override a config value as key.path=value (repeatable)");
    if (with_seed)
        cmd->add_option("--seed", args.seed, "Random seed (overrides the config)")
            ->check(CLI::NonNegativeNumber);
}

json resolve_config(const CommonArgs& args, CLI::App* cmd, bool with_seed) {
    json cfg = json::object();
    if (!args.config_path.empty()) {
        std::ifstream f(args.config_path);
        if (!f) throw post::DataError("cannot open config file " + args.config_path);
        try {
            cfg = json::parse(f);
        } catch (const json::exception& e) {
            throw post::DataError("invalid json in " + args.config_path + ": " + e.what());
        }
        if (!cfg.is_object()) throw post::DataError(args.config_path + ": config must be a json object");
    }
    for (const std::string& ov : args.overrides) post::merge_config(cfg, post::parse_override(ov));
    if (!args.output_dir.empty()) cfg["output_dir"] = args.output_dir;
    if (with_seed && cmd->count("--seed")) cfg["seed"] = args.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial spatio-temporal association anomaly detection pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "post 1.0.0");

    CommonArgs gen_args, train_args, score_args, eval_args;
    CLI::App* gen = app.add_subcommand("generate", "Build a synthetic annotated benchmark");
    add_common(gen, gen_args, true);
    CLI::App* train = app.add_subcommand("train", "Train a model on a dataset manifest");
    add_common(train, train_args, true);
    CLI::App* score = app.add_subcommand("score", "Export anomaly scores for the test split");
    add_common(score, score_args, false);
    CLI::App* eval = app.add_subcommand("eval", "Point-adjusted metrics and PR curves");
    add_common(eval, eval_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) post::run_generate(resolve_config(gen_args, gen, true), std::cout);
        if (train->parsed()) post::run_train(resolve_config(train_args, train, true), std::cout);
        if (score->parsed()) post::run_score(resolve_config(score_args, score, false), std::cout);
        if (eval->parsed()) post::run_eval(resolve_config(eval_args, eval, false), std::cout);
    } catch (const post::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const post::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const post::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
