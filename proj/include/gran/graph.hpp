#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gran {

using Edge = std::pair<int, int>;

// Simple undirected graph: 0-based node indices, no self-loops, no parallel
// edges. Edges are kept normalized (u < v), sorted and unique, so two graphs
// with the same edge set compare equal and iteration order never depends on
// insertion order.
class Graph {
public:
    Graph() = default;
    explicit Graph(int num_nodes) : num_nodes_(num_nodes) {
        if (num_nodes < 0) throw std::invalid_argument("Graph: negative node count");
    }

    int num_nodes() const { return num_nodes_; }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }

    void add_edge(int u, int v) {
        if (u == v) throw std::invalid_argument("Graph::add_edge: self-loop at node " + std::to_string(u));
        if (u < 0 || v < 0 || u >= num_nodes_ || v >= num_nodes_)
            throw std::invalid_argument("Graph::add_edge: endpoint out of range: (" + std::to_string(u) +
                                        ", " + std::to_string(v) + ") with " + std::to_string(num_nodes_) +
                                        " nodes");
        const Edge e{std::min(u, v), std::max(u, v)};
        const auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
        if (it == edges_.end() || *it != e) edges_.insert(it, e);
    }

    bool has_edge(int u, int v) const {
        if (u == v) return false;
        const Edge e{std::min(u, v), std::max(u, v)};
        return std::binary_search(edges_.begin(), edges_.end(), e);
    }

    std::vector<int> degrees() const {
        std::vector<int> deg(num_nodes_, 0);
        for (const auto& [u, v] : edges_) {
            ++deg[u];
            ++deg[v];
        }
        return deg;
    }

    // Sorted neighbor lists.
    std::vector<std::vector<int>> adjacency() const {
        std::vector<std::vector<int>> adj(num_nodes_);
        for (const auto& [u, v] : edges_) {
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
        return adj;
    }

    bool operator==(const Graph&) const = default;

private:
    int num_nodes_ = 0;
    std::vector<Edge> edges_;
};

// A node ordering: perm[rank] = original node index.
struct Ordering {
    std::vector<int> perm;

    bool valid_for(int num_nodes) const {
        if (static_cast<int>(perm.size()) != num_nodes) return false;
        std::vector<char> seen(num_nodes, 0);
        for (int p : perm) {
            if (p < 0 || p >= num_nodes || seen[p]) return false;
            seen[p] = 1;
        }
        return true;
    }

    bool operator==(const Ordering&) const = default;
};

inline Ordering identity_ordering(int num_nodes) {
    Ordering ord;
    ord.perm.resize(num_nodes);
    std::iota(ord.perm.begin(), ord.perm.end(), 0);
    return ord;
}

// The lower-triangular rows of the adjacency matrix under an ordering,
// padded to n_max columns. rows[i][j] = 1 iff the edge (perm[i], perm[j])
// exists and j < i; everything on or above the diagonal is zero.
struct OrderedRows {
    Ordering ordering;
    int n_max = 0;
    std::vector<std::vector<std::uint8_t>> rows;

    int num_rows() const { return static_cast<int>(rows.size()); }
};

inline OrderedRows to_ordered_rows(const Graph& g, const Ordering& ordering, int n_max) {
    const int n = g.num_nodes();
    if (n_max < n)
        throw std::invalid_argument("to_ordered_rows: n_max " + std::to_string(n_max) +
                                    " smaller than graph size " + std::to_string(n));
    if (!ordering.valid_for(n)) throw std::invalid_argument("to_ordered_rows: ordering is not a permutation of the graph's nodes");

    OrderedRows out;
    out.ordering = ordering;
    out.n_max = n_max;
    out.rows.assign(n, std::vector<std::uint8_t>(n_max, 0));
    // rank of each original node
    std::vector<int> rank(n);
    for (int r = 0; r < n; ++r) rank[ordering.perm[r]] = r;
    for (const auto& [u, v] : g.edges()) {
        const int a = std::max(rank[u], rank[v]);
        const int b = std::min(rank[u], rank[v]);
        out.rows[a][b] = 1;
    }
    return out;
}

inline Graph from_ordered_rows(const OrderedRows& rows) {
    const int n = rows.num_rows();
    Graph g(n);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows.rows[i].size()) != rows.n_max)
            throw std::invalid_argument("from_ordered_rows: row " + std::to_string(i) + " has wrong length");
        for (int j = 0; j < rows.n_max; ++j) {
            if (rows.rows[i][j] == 0) continue;
            if (j >= i)
                throw std::invalid_argument("from_ordered_rows: nonzero entry on or above the diagonal at (" +
                                            std::to_string(i) + ", " + std::to_string(j) + ")");
            g.add_edge(i, j);
        }
    }
    return g;
}

// Relabel so that new node r = old node perm[r].
inline Graph relabel(const Graph& g, const Ordering& ordering) {
    const int n = g.num_nodes();
    if (!ordering.valid_for(n)) throw std::invalid_argument("relabel: invalid ordering");
    std::vector<int> rank(n);
    for (int r = 0; r < n; ++r) rank[ordering.perm[r]] = r;
    Graph out(n);
    for (const auto& [u, v] : g.edges()) out.add_edge(rank[u], rank[v]);
    return out;
}

}  // namespace gran
