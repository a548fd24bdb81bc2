#pragma once

#include <stdexcept>
#include <vector>

#include <gran/dataset.hpp>
#include <gran/graph.hpp>
#include <gran/random.hpp>

namespace gran {

// rows x cols lattice; nodes at (r, c) are numbered row-major.
inline Graph grid_graph(int rows, int cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("grid_graph: rows and cols must be positive");
    Graph g(rows * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int id = r * cols + c;
            if (c + 1 < cols) g.add_edge(id, id + 1);
            if (r + 1 < rows) g.add_edge(id, id + cols);
        }
    }
    return g;
}

// Random lobster: a backbone path with geometric length around
// expected_backbone, then repeated-Bernoulli leaf attachment — each backbone
// node gains another first-level leaf while a p1 draw succeeds, and each
// first-level leaf gains second-level leaves the same way with p2.
inline Graph random_lobster(int expected_backbone, double p1, double p2, Rng& rng) {
    if (expected_backbone < 1) throw std::invalid_argument("random_lobster: expected_backbone must be positive");
    if (p1 < 0 || p1 > 1 || p2 < 0 || p2 > 1) throw std::invalid_argument("random_lobster: probabilities must be in [0, 1]");

    const double extend = 1.0 - 1.0 / static_cast<double>(expected_backbone);
    int backbone = 1;
    while (rng.uniform01() < extend) ++backbone;

    std::vector<Edge> edges;
    int next = backbone;
    for (int i = 0; i + 1 < backbone; ++i) edges.emplace_back(i, i + 1);

    std::vector<int> first_level;
    for (int i = 0; i < backbone; ++i) {
        while (p1 > 0 && rng.uniform01() < p1) {
            edges.emplace_back(i, next);
            first_level.push_back(next);
            ++next;
        }
    }
    for (int leaf : first_level) {
        while (p2 > 0 && rng.uniform01() < p2) {
            edges.emplace_back(leaf, next);
            ++next;
        }
    }

    Graph g(next);
    for (const auto& [u, v] : edges) g.add_edge(u, v);
    return g;
}

inline Graph erdos_renyi(int n, double p, Rng& rng) {
    if (n < 1) throw std::invalid_argument("erdos_renyi: n must be positive");
    if (p < 0 || p > 1) throw std::invalid_argument("erdos_renyi: p must be in [0, 1]");
    Graph g(n);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (rng.bernoulli(p)) g.add_edge(u, v);
    return g;
}

// Maximum-likelihood edge density over a dataset:
// sum of edge counts / sum of possible edge counts.
inline double er_mle_fit(const GraphDataset& ds) {
    if (ds.graphs.empty()) throw std::invalid_argument("er_mle_fit: empty dataset");
    double edges = 0, possible = 0;
    for (const auto& g : ds.graphs) {
        const double n = g.num_nodes();
        edges += g.num_edges();
        possible += n * (n - 1) / 2.0;
    }
    if (possible == 0) throw std::invalid_argument("er_mle_fit: no graph has two or more nodes");
    return edges / possible;
}

}  // namespace gran
