// Command-line entry point: dataset generation, training, sampling,
// evaluation and the ER baseline, wired for reproducible runs.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <gran/commands.hpp>
#include <gran/config.hpp>

namespace {

struct CommonArgs {
    std::string config_file;
    std::string profile;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "flat key-value config file");
    cmd->add_option("--profile", args.profile, "preset: paper-grid or desk");
    cmd->add_option("--out", args.out, "output directory")->required();
}

// profile first, then the config file, then explicit flags
gran::RunConfig resolve(const CommonArgs& args, const std::vector<std::pair<std::string, std::string>>& overrides) {
    gran::RunConfig cfg;
    if (!args.profile.empty()) cfg.apply_profile(args.profile);
    if (!args.config_file.empty()) cfg.load_file(args.config_file);
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block-autoregressive graph generation toolkit"};
    app.require_subcommand(1);

    // every flag funnels into config-key overrides so "flags win" is uniform
    std::vector<std::pair<std::string, std::string>> overrides;
    auto opt = [&overrides](CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
               flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help)
            ->expected(1);
    };

    CommonArgs gen_args, train_args, sample_args, eval_args, er_args;
    std::string data_dir, resume_path, checkpoint_path, generated_dir, reference_dir, er_train_dir;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, gen_args);
    opt(gen, "--kind", "dataset.kind", "grid, lobster or er");
    opt(gen, "--count", "dataset.count", "number of graphs");
    opt(gen, "--min-nodes", "dataset.min_nodes", "smallest allowed graph");
    opt(gen, "--max-nodes", "dataset.max_nodes", "largest allowed graph");
    opt(gen, "--grid-rows", "dataset.grid_rows", "pin exact grid rows");
    opt(gen, "--grid-cols", "dataset.grid_cols", "pin exact grid cols");
    opt(gen, "--er-p", "dataset.er_p", "edge probability for kind er");
    opt(gen, "--seed", "dataset.seed", "generation seed");

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    add_common(train, train_args);
    train->add_option("--data", data_dir, "dataset directory or manifest")->required();
    train->add_option("--resume", resume_path, "checkpoint with optimizer state to continue from");
    opt(train, "--steps", "train.steps", "optimizer steps (wins over epochs)");
    opt(train, "--epochs", "train.epochs", "epochs over the training split");
    opt(train, "--batch-size", "train.batch_size", "graphs per optimizer step");
    opt(train, "--lr", "train.lr", "Adam learning rate");
    opt(train, "--val-interval", "train.val_interval", "steps between validation passes");
    opt(train, "--seed", "train.seed", "training seed");
    opt(train, "--split-seed", "train.split_seed", "dataset split seed");
    opt(train, "--orderings", "orderings", "comma list: default,deg,bfs,dfs,kcore");
    opt(train, "--block-size", "model.block_size", "rows per generation step");
    opt(train, "--hidden-dim", "model.hidden_dim", "hidden width");
    opt(train, "--rounds", "model.rounds", "message-passing rounds");
    opt(train, "--mixtures", "model.mixtures", "Bernoulli mixture components");
    opt(train, "--n-max", "model.n_max", "maximum representable graph size (0 = from data)");
    opt(train, "--tie-rounds", "model.tie_rounds", "share parameters across rounds (0/1)");
    opt(train, "--count-all-rows", "model.count_all_rows", "score every block row during training (0/1)");

    auto* sample = app.add_subcommand("sample", "sample graphs from a checkpoint");
    add_common(sample, sample_args);
    sample->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    opt(sample, "--stride", "sample.stride", "rows kept per step (1..block size)");
    opt(sample, "--count", "sample.count", "graphs to sample");
    opt(sample, "--mode", "sample.mode", "stochastic or threshold");
    opt(sample, "--fixed-size", "sample.fixed_size", "generate exactly this many nodes (0 = training sizes)");
    opt(sample, "--largest-cc", "sample.largest_cc", "keep only the largest component (0/1)");
    opt(sample, "--seed", "sample.seed", "sampling seed");

    auto* eval = app.add_subcommand("evaluate", "compare generated graphs against a reference set");
    add_common(eval, eval_args);
    eval->add_option("--generated", generated_dir, "generated dataset directory or manifest")->required();
    eval->add_option("--reference", reference_dir, "reference dataset directory or manifest")->required();
    opt(eval, "--sigma", "eval.sigma", "kernel bandwidth");
    opt(eval, "--lobster", "eval.lobster", "also report lobster accuracy (0/1)");

    auto* er = app.add_subcommand("baseline-er", "maximum-likelihood Erdos-Renyi baseline");
    add_common(er, er_args);
    er->add_option("--train", er_train_dir, "training dataset directory or manifest")->required();
    opt(er, "--count", "sample.count", "graphs to sample");
    opt(er, "--seed", "sample.seed", "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            gran::cmd_gen_data(resolve(gen_args, overrides), gen_args.out);
        } else if (train->parsed()) {
            gran::cmd_train(resolve(train_args, overrides), data_dir, train_args.out, resume_path);
        } else if (sample->parsed()) {
            gran::cmd_sample(resolve(sample_args, overrides), checkpoint_path, sample_args.out);
        } else if (eval->parsed()) {
            gran::cmd_evaluate(resolve(eval_args, overrides), generated_dir, reference_dir, eval_args.out);
        } else if (er->parsed()) {
            gran::cmd_baseline_er(resolve(er_args, overrides), er_train_dir, er_args.out);
        }
    } catch (const gran::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
