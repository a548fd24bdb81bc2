#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include <gran/checkpoint.hpp>
#include <gran/config.hpp>
#include <gran/dataset.hpp>
#include <gran/generators.hpp>
#include <gran/metrics.hpp>
#include <gran/model.hpp>
#include <gran/sampler.hpp>
#include <gran/trainer.hpp>

namespace gran {

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::filesystem::path prepare_out_dir(const RunConfig& cfg, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    write_text(out / "config.txt", cfg.serialize());
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline Graph generate_one(const RunConfig& cfg, Rng& rng) {
    if (cfg.dataset_kind == "grid") {
        if (cfg.grid_rows > 0) return grid_graph(cfg.grid_rows, cfg.grid_cols);
        const int lo = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(cfg.dataset_min_nodes)))));
        const int hi = std::max(lo, static_cast<int>(std::floor(std::sqrt(static_cast<double>(cfg.dataset_max_nodes)))));
        for (int attempt = 0; attempt < 100000; ++attempt) {
            const int r = static_cast<int>(rng.uniform_int(lo, hi));
            const int c = static_cast<int>(rng.uniform_int(lo, hi));
            if (r * c >= cfg.dataset_min_nodes && r * c <= cfg.dataset_max_nodes) return grid_graph(r, c);
        }
        throw std::runtime_error("gen-data: no grid dimensions fit the node band");
    }
    if (cfg.dataset_kind == "lobster") {
        for (int attempt = 0; attempt < 100000; ++attempt) {
            Graph g = random_lobster(cfg.lobster_backbone, cfg.lobster_p1, cfg.lobster_p2, rng);
            if (g.num_nodes() >= cfg.dataset_min_nodes && g.num_nodes() <= cfg.dataset_max_nodes) return g;
        }
        throw std::runtime_error("gen-data: lobster sampler failed to hit the node band");
    }
    // er
    const int n = static_cast<int>(rng.uniform_int(cfg.dataset_min_nodes, cfg.dataset_max_nodes));
    return erdos_renyi(n, cfg.er_p, rng);
}

}  // namespace detail

// Writes `count` generated graphs plus a manifest into --out.
inline void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out) {
    detail::prepare_out_dir(cfg, out);
    Rng rng(cfg.dataset_seed);
    GraphDataset ds;
    ds.name = cfg.dataset_kind;
    for (int i = 0; i < cfg.dataset_count; ++i) ds.add(detail::generate_one(cfg, rng));
    write_dataset(ds, out);

    int n_min = ds.graphs.front().num_nodes();
    long m_min = ds.graphs.front().num_edges(), m_max = m_min, m_total = 0;
    for (const auto& g : ds.graphs) {
        n_min = std::min(n_min, g.num_nodes());
        m_min = std::min<long>(m_min, g.num_edges());
        m_max = std::max<long>(m_max, g.num_edges());
        m_total += g.num_edges();
    }
    std::cout << "wrote " << ds.size() << " " << cfg.dataset_kind << " graphs to " << out.string() << "\n"
              << "nodes: min " << n_min << " max " << ds.n_max << "\n"
              << "edges: min " << m_min << " mean " << (m_total / static_cast<double>(ds.size())) << " max " << m_max
              << "\n";
}

// Splits the dataset, trains with the ordering family, writes the best and
// final checkpoints, the training log, and the split as three sub-datasets.
inline void cmd_train(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out,
                      const std::filesystem::path& resume = {}) {
    detail::prepare_out_dir(cfg, out);
    GraphDataset ds = read_dataset(data);
    if (ds.graphs.empty()) throw std::runtime_error("train: dataset at " + data.string() + " is empty");

    DatasetSplit split;
    if (ds.size() >= 5) {
        split = split_dataset(ds, cfg.split_seed);
    } else {
        // too small for the 80/20 protocol: train on everything
        split.train.resize(ds.size());
        std::iota(split.train.begin(), split.train.end(), 0);
    }
    write_dataset(subset(ds, split.train, ds.name + "-train"), out / "train");
    write_dataset(subset(ds, split.validation, ds.name + "-val"), out / "val");
    write_dataset(subset(ds, split.test, ds.name + "-test"), out / "test");

    const GranConfig model_cfg = cfg.model_config(ds.n_max);
    Trainer trainer(ds, split, model_cfg, cfg.train_options(static_cast<int>(split.train.size())));

    long start_step = 0;
    if (!resume.empty()) {
        auto loaded = load_model_checkpoint(resume);
        if (!loaded.has_adam) throw std::runtime_error("train: checkpoint " + resume.string() + " has no optimizer state to resume from");
        trainer.resume(loaded.params, loaded.adam, loaded.step);
        start_step = loaded.step;
        std::cout << "resumed from " << resume.string() << " at step " << start_step << "\n";
    }

    std::ofstream log(out / "train_log.txt", std::ios::binary);
    if (!log) throw std::runtime_error("train: cannot open training log for writing");
    auto result = trainer.run([&](const TrainLogEntry& e) {
        log << "step " << e.step << " train_loss " << detail::format_double(e.train_loss) << " val_loss "
            << (e.has_val ? detail::format_double(e.val_loss) : "-") << "\n";
        if (e.has_val)
            std::cout << "step " << e.step << " train " << e.train_loss << " val " << e.val_loss << "\n";
    });

    std::vector<int> train_sizes;
    for (int idx : split.train) train_sizes.push_back(ds.graphs[static_cast<std::size_t>(idx)].num_nodes());
    nlohmann::json extra;
    extra["train_sizes"] = train_sizes;
    extra["orderings"] = cfg.orderings_string();
    extra["dataset"] = ds.name;

    save_model_checkpoint(out / "checkpoint.bin", result.best, nullptr, result.final_step, extra);
    save_model_checkpoint(out / "last.bin", result.last, &result.adam, result.final_step, extra);

    std::cout << "trained " << (result.final_step - start_step) << " steps; final train loss "
              << result.log.back().train_loss;
    if (std::isfinite(result.best_val_loss)) std::cout << "; best val loss " << result.best_val_loss;
    std::cout << "\nbest checkpoint: " << (out / "checkpoint.bin").string() << "\n";
}

// Samples graphs from a checkpoint; writes them as a dataset plus an
// invocation-count report.
inline void cmd_sample(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& out) {
    auto loaded = load_model_checkpoint(checkpoint);
    const int B = loaded.params.cfg.block_size;
    if (cfg.sample_stride < 1 || cfg.sample_stride > B)
        throw ConfigError("sample.stride " + std::to_string(cfg.sample_stride) + " not in [1, " + std::to_string(B) +
                          "] for this checkpoint");
    if (cfg.sample_fixed_size > loaded.params.cfg.n_max)
        throw ConfigError("sample.fixed_size exceeds the checkpoint's n_max");

    std::vector<int> sizes;
    if (loaded.extra.contains("train_sizes")) sizes = loaded.extra["train_sizes"].get<std::vector<int>>();
    if (cfg.sample_fixed_size == 0 && sizes.empty())
        throw std::runtime_error("sample: checkpoint has no training sizes; use sample.fixed_size");

    detail::prepare_out_dir(cfg, out);
    const SampleMode mode = cfg.sample_mode == "threshold" ? SampleMode::threshold : SampleMode::stochastic;
    Rng rng(cfg.sample_seed);

    GraphDataset samples;
    samples.name = "samples";
    std::vector<long> invocations;
    long total = 0;
    for (int i = 0; i < cfg.sample_count; ++i) {
        const int n_target = cfg.sample_fixed_size > 0 ? cfg.sample_fixed_size : sample_size(sizes, rng);
        auto res = sample_graph(loaded.params, cfg.sample_stride, n_target, rng, mode, cfg.sample_largest_cc);
        invocations.push_back(res.invocations);
        total += res.invocations;
        samples.add(std::move(res.graph));
    }
    write_dataset(samples, out);

    std::ostringstream report;
    report << "count " << cfg.sample_count << '\n'
           << "stride " << cfg.sample_stride << '\n'
           << "block_size " << B << '\n'
           << "total_invocations " << total << '\n'
           << "mean_invocations_per_graph " << detail::format_double(total / static_cast<double>(cfg.sample_count))
           << '\n';
    for (int i = 0; i < cfg.sample_count; ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "graph_%04d", i);
        report << buf << " nodes " << samples.graphs[static_cast<std::size_t>(i)].num_nodes() << " invocations "
               << invocations[static_cast<std::size_t>(i)] << '\n';
    }
    detail::write_text(out / "sample_report.txt", report.str());
    std::cout << "sampled " << cfg.sample_count << " graphs with stride " << cfg.sample_stride << " ("
              << total << " model invocations, " << total / static_cast<double>(cfg.sample_count)
              << " per graph)\n";
}

// Compares two datasets and writes the metric report.
inline void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& generated,
                         const std::filesystem::path& reference, const std::filesystem::path& out) {
    detail::prepare_out_dir(cfg, out);
    GraphDataset gen = read_dataset(generated);
    GraphDataset ref = read_dataset(reference);

    EvalConfig ecfg;
    ecfg.sigma = cfg.eval_sigma;
    ecfg.lobster = cfg.eval_lobster;
    ecfg.clustering_bins = cfg.clustering_bins;
    ecfg.spectral_bins = cfg.spectral_bins;
    const MetricReport report = evaluate(gen, ref, ecfg);
    detail::write_text(out / "metrics.txt", report.to_text());
    std::cout << report.to_text();
}

// Maximum-likelihood Erdos-Renyi baseline: fit the edge density on the given
// dataset, then sample graphs with sizes drawn from its size multiset.
inline void cmd_baseline_er(const RunConfig& cfg, const std::filesystem::path& train_data,
                            const std::filesystem::path& out) {
    GraphDataset train = read_dataset(train_data);
    const double p = er_mle_fit(train);

    detail::prepare_out_dir(cfg, out);
    Rng rng(cfg.sample_seed);
    const auto sizes = train.sizes();
    GraphDataset samples;
    samples.name = "er-baseline";
    for (int i = 0; i < cfg.sample_count; ++i) samples.add(erdos_renyi(sample_size(sizes, rng), p, rng));
    write_dataset(samples, out);

    std::ostringstream report;
    report << "p " << detail::format_double(p) << '\n' << "count " << cfg.sample_count << '\n';
    detail::write_text(out / "er_report.txt", report.str());
    std::cout << "er baseline: p = " << p << ", wrote " << cfg.sample_count << " samples\n";
}

}  // namespace gran
