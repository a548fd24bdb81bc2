#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gran/graph.hpp>
#include <gran/random.hpp>

namespace gran {

struct GraphDataset {
    std::string name;
    int n_max = 0;  // >= num_nodes of every member
    std::vector<Graph> graphs;

    int size() const { return static_cast<int>(graphs.size()); }

    void add(Graph g) {
        n_max = std::max(n_max, g.num_nodes());
        graphs.push_back(std::move(g));
    }

    std::vector<int> sizes() const {
        std::vector<int> out;
        out.reserve(graphs.size());
        for (const auto& g : graphs) out.push_back(g.num_nodes());
        return out;
    }
};

struct DatasetSplit {
    std::vector<int> train, validation, test;
};

// 80/20 train/test split, then 20% of the provisional train set becomes
// validation. Sizes use floor; remainders stay in train.
inline DatasetSplit split_dataset(const GraphDataset& ds, std::uint64_t seed) {
    const int n = ds.size();
    if (n < 5) throw std::invalid_argument("split_dataset: need at least 5 graphs, got " + std::to_string(n));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);

    const int n_test = n / 5;
    const int n_prov = n - n_test;
    const int n_val = n_prov / 5;
    const int n_train = n_prov - n_val;

    DatasetSplit split;
    split.train.assign(idx.begin(), idx.begin() + n_train);
    split.validation.assign(idx.begin() + n_train, idx.begin() + n_prov);
    split.test.assign(idx.begin() + n_prov, idx.end());
    return split;
}

// --- edge-list files -------------------------------------------------------
//
// First line "N M" (node count, edge count), then M lines "u v" with
// 0 <= u < v < N, whitespace-separated, LF-terminated.

namespace detail {
[[noreturn]] inline void parse_error(const std::filesystem::path& path, int line, const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}
}  // namespace detail

inline Graph read_edge_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_edge_list: cannot open " + path.string());
    std::string line;
    int lineno = 0;

    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            return true;
        }
        return false;
    };

    if (!next_line()) detail::parse_error(path, 1, "missing header line");
    std::istringstream header(line);
    long long n = -1, m = -1;
    std::string junk;
    if (!(header >> n >> m) || (header >> junk) || n < 0 || m < 0)
        detail::parse_error(path, lineno, "malformed header, expected \"N M\"");

    Graph g(static_cast<int>(n));
    for (long long e = 0; e < m; ++e) {
        if (!next_line()) detail::parse_error(path, lineno + 1, "unexpected end of file, expected edge line");
        std::istringstream ls(line);
        long long u = -1, v = -1;
        if (!(ls >> u >> v) || (ls >> junk)) detail::parse_error(path, lineno, "malformed edge line, expected \"u v\"");
        if (u == v) detail::parse_error(path, lineno, "self-loop at node " + std::to_string(u));
        if (u < 0 || v < 0 || u >= n || v >= n)
            detail::parse_error(path, lineno, "endpoint out of range: " + std::to_string(u) + " " + std::to_string(v));
        if (u > v) detail::parse_error(path, lineno, "edge endpoints must satisfy u < v");
        g.add_edge(static_cast<int>(u), static_cast<int>(v));
    }
    if (g.num_edges() != m) detail::parse_error(path, lineno, "duplicate edges in file");
    return g;
}

inline void write_edge_list(const Graph& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_edge_list: cannot open " + path.string() + " for writing");
    out << g.num_nodes() << ' ' << g.num_edges() << '\n';
    for (const auto& [u, v] : g.edges()) out << u << ' ' << v << '\n';
    if (!out) throw std::runtime_error("write_edge_list: failed writing " + path.string());
}

// --- dataset directories ---------------------------------------------------
//
// A dataset is a directory holding one edge-list file per graph plus a
// manifest ("manifest.txt" by default) of the form
//
//   name  <identifier>
//   n_max <int>
//   graph <filename>     (one line per graph, paths relative to the manifest)

inline void write_manifest(const GraphDataset& ds, const std::vector<std::string>& files,
                           const std::filesystem::path& manifest_path) {
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + manifest_path.string());
    out << "name " << (ds.name.empty() ? "dataset" : ds.name) << '\n';
    out << "n_max " << ds.n_max << '\n';
    for (const auto& f : files) out << "graph " << f << '\n';
}

inline void write_dataset(const GraphDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    files.reserve(ds.graphs.size());
    for (int i = 0; i < ds.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "graph_%04d.txt", i);
        files.emplace_back(buf);
        write_edge_list(ds.graphs[i], dir / buf);
    }
    write_manifest(ds, files, dir / "manifest.txt");
}

// Accepts either a dataset directory (containing manifest.txt) or a path to
// a manifest file directly.
inline GraphDataset read_dataset(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    fs::path manifest = path;
    if (fs::is_directory(path)) manifest = path / "manifest.txt";
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("read_dataset: cannot open manifest " + manifest.string());

    GraphDataset ds;
    const fs::path base = manifest.parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "name") {
            ls >> ds.name;
        } else if (key == "n_max") {
            if (!(ls >> ds.n_max)) detail::parse_error(manifest, lineno, "malformed n_max");
        } else if (key == "graph") {
            std::string file;
            if (!(ls >> file)) detail::parse_error(manifest, lineno, "missing filename");
            ds.graphs.push_back(read_edge_list(base / file));
        } else {
            detail::parse_error(manifest, lineno, "unknown manifest key \"" + key + "\"");
        }
    }
    for (const auto& g : ds.graphs)
        if (g.num_nodes() > ds.n_max)
            throw std::runtime_error("read_dataset: manifest n_max " + std::to_string(ds.n_max) +
                                     " smaller than a member graph (" + std::to_string(g.num_nodes()) + " nodes)");
    return ds;
}

inline GraphDataset subset(const GraphDataset& ds, const std::vector<int>& indices, const std::string& name) {
    GraphDataset out;
    out.name = name;
    out.n_max = ds.n_max;  // keep the dataset-level bound so models stay compatible
    for (int i : indices) out.graphs.push_back(ds.graphs.at(i));
    return out;
}

}  // namespace gran
