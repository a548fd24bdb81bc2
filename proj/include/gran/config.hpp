#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gran/model.hpp>
#include <gran/orderings.hpp>
#include <gran/trainer.hpp>

namespace gran {

// Invalid configuration (usage error, exit code 1); distinct from runtime
// failures (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One flat key-value config fully determines a run. Files hold "key value"
// lines ('#' starts a comment); command-line flags override file values.
struct RunConfig {
    // dataset generation
    std::string dataset_kind = "grid";  // grid | lobster | er
    int dataset_count = 100;
    int dataset_min_nodes = 100;
    int dataset_max_nodes = 400;
    int grid_rows = 0;  // nonzero pins exact grid dimensions
    int grid_cols = 0;
    double er_p = 0.1;
    int lobster_backbone = 80;
    double lobster_p1 = 0.7;
    double lobster_p2 = 0.7;
    std::uint64_t dataset_seed = 0;

    // model
    int block_size = 1;
    int hidden_dim = 128;
    int rounds = 7;
    int mixtures = 20;
    int n_max = 0;  // 0: use the dataset's bound
    bool tie_rounds = false;
    bool count_all_rows = false;

    std::vector<OrderingKind> orderings = {OrderingKind::dfs};

    // training
    long train_steps = 0;  // nonzero wins over epochs
    int train_epochs = 100;
    int batch_size = 10;
    double lr = 1e-4;
    int val_interval = 50;
    std::uint64_t train_seed = 0;
    std::uint64_t split_seed = 0;

    // sampling
    int sample_stride = 1;
    int sample_count = 20;
    std::string sample_mode = "stochastic";  // stochastic | threshold
    int sample_fixed_size = 0;               // 0: draw sizes from the training multiset
    bool sample_largest_cc = false;
    std::uint64_t sample_seed = 0;

    // evaluation
    double eval_sigma = 1.0;
    bool eval_lobster = false;
    int clustering_bins = 100;
    int spectral_bins = 200;

    void apply_profile(const std::string& name) {
        if (name == "paper-grid") {
            *this = RunConfig{};  // the defaults encode this profile
        } else if (name == "desk") {
            *this = RunConfig{};
            dataset_min_nodes = 9;
            dataset_max_nodes = 64;
            hidden_dim = 32;
            rounds = 3;
            lr = 1e-3;
            train_steps = 1200;
            batch_size = 8;
            val_interval = 100;
        } else {
            throw ConfigError("unknown profile \"" + name + "\" (expected paper-grid or desk)");
        }
    }

    void set(const std::string& key, const std::string& value) {
        const auto as_int = [&](long lo, long hi) {
            long v;
            std::istringstream ss(value);
            if (!(ss >> v) || !ss.eof() || v < lo || v > hi)
                throw ConfigError("bad value \"" + value + "\" for " + key);
            return v;
        };
        const auto as_double = [&]() {
            double v;
            std::istringstream ss(value);
            if (!(ss >> v) || !ss.eof()) throw ConfigError("bad value \"" + value + "\" for " + key);
            return v;
        };
        const auto as_bool = [&]() {
            if (value == "0" || value == "false") return false;
            if (value == "1" || value == "true") return true;
            throw ConfigError("bad value \"" + value + "\" for " + key + " (expected 0 or 1)");
        };
        const auto as_seed = [&]() {
            std::uint64_t v;
            std::istringstream ss(value);
            if (!(ss >> v) || !ss.eof()) throw ConfigError("bad value \"" + value + "\" for " + key);
            return v;
        };

        if (key == "profile") apply_profile(value);
        else if (key == "dataset.kind") dataset_kind = value;
        else if (key == "dataset.count") dataset_count = static_cast<int>(as_int(1, 1000000));
        else if (key == "dataset.min_nodes") dataset_min_nodes = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "dataset.max_nodes") dataset_max_nodes = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "dataset.grid_rows") grid_rows = static_cast<int>(as_int(0, 1 << 20));
        else if (key == "dataset.grid_cols") grid_cols = static_cast<int>(as_int(0, 1 << 20));
        else if (key == "dataset.er_p") er_p = as_double();
        else if (key == "dataset.lobster_backbone") lobster_backbone = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "dataset.lobster_p1") lobster_p1 = as_double();
        else if (key == "dataset.lobster_p2") lobster_p2 = as_double();
        else if (key == "dataset.seed") dataset_seed = as_seed();
        else if (key == "model.block_size") block_size = static_cast<int>(as_int(-(1 << 20), 1 << 20));
        else if (key == "model.hidden_dim") hidden_dim = static_cast<int>(as_int(-(1 << 20), 1 << 20));
        else if (key == "model.rounds") rounds = static_cast<int>(as_int(-(1 << 20), 1 << 20));
        else if (key == "model.mixtures") mixtures = static_cast<int>(as_int(-(1 << 20), 1 << 20));
        else if (key == "model.n_max") n_max = static_cast<int>(as_int(0, 1 << 20));
        else if (key == "model.tie_rounds") tie_rounds = as_bool();
        else if (key == "model.count_all_rows") count_all_rows = as_bool();
        else if (key == "orderings") orderings = parse_orderings(value);
        else if (key == "train.steps") train_steps = as_int(0, 1L << 40);
        else if (key == "train.epochs") train_epochs = static_cast<int>(as_int(0, 1 << 30));
        else if (key == "train.batch_size") batch_size = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "train.lr") lr = as_double();
        else if (key == "train.val_interval") val_interval = static_cast<int>(as_int(0, 1 << 30));
        else if (key == "train.seed") train_seed = as_seed();
        else if (key == "train.split_seed") split_seed = as_seed();
        else if (key == "sample.stride") sample_stride = static_cast<int>(as_int(-(1 << 20), 1 << 20));
        else if (key == "sample.count") sample_count = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "sample.mode") sample_mode = value;
        else if (key == "sample.fixed_size") sample_fixed_size = static_cast<int>(as_int(0, 1 << 20));
        else if (key == "sample.largest_cc") sample_largest_cc = as_bool();
        else if (key == "sample.seed") sample_seed = as_seed();
        else if (key == "eval.sigma") eval_sigma = as_double();
        else if (key == "eval.lobster") eval_lobster = as_bool();
        else if (key == "eval.clustering_bins") clustering_bins = static_cast<int>(as_int(1, 1 << 20));
        else if (key == "eval.spectral_bins") spectral_bins = static_cast<int>(as_int(1, 1 << 20));
        else throw ConfigError("unknown config key \"" + key + "\"");
    }

    static std::vector<OrderingKind> parse_orderings(const std::string& csv) {
        std::vector<OrderingKind> out;
        std::istringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            auto kind = ordering_kind_from_string(item);
            if (!kind) throw ConfigError("unknown ordering \"" + item + "\"");
            out.push_back(*kind);
        }
        if (out.empty()) throw ConfigError("orderings must name at least one ordering");
        return out;
    }

    std::string orderings_string() const {
        std::string out;
        for (std::size_t i = 0; i < orderings.size(); ++i) {
            if (i) out += ",";
            out += to_string(orderings[i]);
        }
        return out;
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path.string());
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ss(line);
            std::string key, value;
            if (!(ss >> key)) continue;  // blank
            if (!(ss >> value)) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": missing value for " + key);
            std::string extra;
            if (ss >> extra) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": trailing junk after " + key);
            set(key, value);
        }
    }

    std::string serialize() const {
        std::ostringstream out;
        out.precision(17);
        out << "dataset.kind " << dataset_kind << '\n'
            << "dataset.count " << dataset_count << '\n'
            << "dataset.min_nodes " << dataset_min_nodes << '\n'
            << "dataset.max_nodes " << dataset_max_nodes << '\n'
            << "dataset.grid_rows " << grid_rows << '\n'
            << "dataset.grid_cols " << grid_cols << '\n'
            << "dataset.er_p " << er_p << '\n'
            << "dataset.lobster_backbone " << lobster_backbone << '\n'
            << "dataset.lobster_p1 " << lobster_p1 << '\n'
            << "dataset.lobster_p2 " << lobster_p2 << '\n'
            << "dataset.seed " << dataset_seed << '\n'
            << "model.block_size " << block_size << '\n'
            << "model.hidden_dim " << hidden_dim << '\n'
            << "model.rounds " << rounds << '\n'
            << "model.mixtures " << mixtures << '\n'
            << "model.n_max " << n_max << '\n'
            << "model.tie_rounds " << (tie_rounds ? 1 : 0) << '\n'
            << "model.count_all_rows " << (count_all_rows ? 1 : 0) << '\n'
            << "orderings " << orderings_string() << '\n'
            << "train.steps " << train_steps << '\n'
            << "train.epochs " << train_epochs << '\n'
            << "train.batch_size " << batch_size << '\n'
            << "train.lr " << lr << '\n'
            << "train.val_interval " << val_interval << '\n'
            << "train.seed " << train_seed << '\n'
            << "train.split_seed " << split_seed << '\n'
            << "sample.stride " << sample_stride << '\n'
            << "sample.count " << sample_count << '\n'
            << "sample.mode " << sample_mode << '\n'
            << "sample.fixed_size " << sample_fixed_size << '\n'
            << "sample.largest_cc " << (sample_largest_cc ? 1 : 0) << '\n'
            << "sample.seed " << sample_seed << '\n'
            << "eval.sigma " << eval_sigma << '\n'
            << "eval.lobster " << (eval_lobster ? 1 : 0) << '\n'
            << "eval.clustering_bins " << clustering_bins << '\n'
            << "eval.spectral_bins " << spectral_bins << '\n';
        return out.str();
    }

    // Full validation before any filesystem work.
    void validate() const {
        if (dataset_kind != "grid" && dataset_kind != "lobster" && dataset_kind != "er")
            throw ConfigError("dataset.kind must be grid, lobster or er");
        if (dataset_min_nodes > dataset_max_nodes) throw ConfigError("dataset.min_nodes exceeds dataset.max_nodes");
        if (er_p < 0 || er_p > 1) throw ConfigError("dataset.er_p must be in [0, 1]");
        if (lobster_p1 < 0 || lobster_p1 > 1 || lobster_p2 < 0 || lobster_p2 > 1)
            throw ConfigError("lobster probabilities must be in [0, 1]");
        if ((grid_rows == 0) != (grid_cols == 0)) throw ConfigError("grid_rows and grid_cols must be set together");
        if (block_size < 1) throw ConfigError("model.block_size must be >= 1");
        if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
        if (rounds < 1) throw ConfigError("model.rounds must be >= 1");
        if (mixtures < 1) throw ConfigError("model.mixtures must be >= 1");
        if (n_max != 0 && n_max < block_size) throw ConfigError("model.n_max must be 0 or >= model.block_size");
        if (orderings.empty()) throw ConfigError("orderings must name at least one ordering");
        if (lr < 0) throw ConfigError("train.lr must be nonnegative");
        if (train_steps == 0 && train_epochs == 0) throw ConfigError("one of train.steps or train.epochs must be positive");
        if (sample_stride < 1 || sample_stride > block_size)
            throw ConfigError("sample.stride must be in [1, model.block_size]");
        if (sample_mode != "stochastic" && sample_mode != "threshold")
            throw ConfigError("sample.mode must be stochastic or threshold");
        if (eval_sigma <= 0) throw ConfigError("eval.sigma must be positive");
    }

    GranConfig model_config(int data_n_max) const {
        GranConfig cfg;
        cfg.block_size = block_size;
        cfg.hidden_dim = hidden_dim;
        cfg.rounds = rounds;
        cfg.num_mixtures = mixtures;
        cfg.n_max = n_max > 0 ? n_max : std::max(data_n_max, block_size);
        cfg.tie_rounds = tie_rounds;
        cfg.count_all_rows = count_all_rows;
        cfg.validate();
        return cfg;
    }

    TrainOptions train_options(int train_split_size) const {
        TrainOptions opt;
        opt.steps = train_steps;
        if (opt.steps == 0) {
            const long batches = (train_split_size + batch_size - 1) / batch_size;
            opt.steps = static_cast<long>(train_epochs) * std::max(1L, batches);
        }
        opt.batch_size = batch_size;
        opt.lr = lr;
        opt.val_interval = val_interval;
        opt.seed = train_seed;
        opt.orderings = orderings;
        return opt;
    }
};

}  // namespace gran
