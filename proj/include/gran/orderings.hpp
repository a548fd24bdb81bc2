#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <gran/graph.hpp>

namespace gran {

// The family of canonical node orderings used for training. Tie-breaking is
// (degree descending, then index ascending) everywhere.
enum class OrderingKind { default_order, degree_descent, bfs, dfs, kcore };

inline const char* to_string(OrderingKind k) {
    switch (k) {
        case OrderingKind::default_order: return "default";
        case OrderingKind::degree_descent: return "deg";
        case OrderingKind::bfs: return "bfs";
        case OrderingKind::dfs: return "dfs";
        case OrderingKind::kcore: return "kcore";
    }
    return "?";
}

inline std::optional<OrderingKind> ordering_kind_from_string(std::string_view s) {
    if (s == "default") return OrderingKind::default_order;
    if (s == "deg") return OrderingKind::degree_descent;
    if (s == "bfs") return OrderingKind::bfs;
    if (s == "dfs") return OrderingKind::dfs;
    if (s == "kcore") return OrderingKind::kcore;
    return std::nullopt;
}

inline Ordering default_order(const Graph& g) { return identity_ordering(g.num_nodes()); }

namespace detail {
// Stable rank by (degree descending, index ascending).
inline std::vector<int> nodes_by_degree(const std::vector<int>& deg) {
    std::vector<int> order(deg.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (deg[a] != deg[b]) return deg[a] > deg[b];
        return a < b;
    });
    return order;
}
}  // namespace detail

inline Ordering degree_descent_order(const Graph& g) {
    Ordering ord;
    ord.perm = detail::nodes_by_degree(g.degrees());
    return ord;
}

namespace detail {

// Shared driver for BFS/DFS orderings: roots and neighbor visits both use
// (degree descending, index ascending); components are entered through their
// best-ranked unvisited node.
inline Ordering traversal_order(const Graph& g, bool breadth_first) {
    const int n = g.num_nodes();
    const auto deg = g.degrees();
    auto adj = g.adjacency();
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end(), [&](int a, int b) {
            if (deg[a] != deg[b]) return deg[a] > deg[b];
            return a < b;
        });
    }
    const auto roots = nodes_by_degree(deg);

    Ordering ord;
    ord.perm.reserve(n);
    std::vector<char> visited(n, 0);
    for (int root : roots) {
        if (visited[root]) continue;
        if (breadth_first) {
            std::deque<int> queue{root};
            visited[root] = 1;
            while (!queue.empty()) {
                const int u = queue.front();
                queue.pop_front();
                ord.perm.push_back(u);
                for (int v : adj[u]) {
                    if (!visited[v]) {
                        visited[v] = 1;
                        queue.push_back(v);
                    }
                }
            }
        } else {
            // preorder DFS; neighbors pushed in reverse priority so the
            // highest-priority one is expanded first
            std::vector<int> stack{root};
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                if (visited[u]) continue;
                visited[u] = 1;
                ord.perm.push_back(u);
                for (auto it = adj[u].rbegin(); it != adj[u].rend(); ++it)
                    if (!visited[*it]) stack.push_back(*it);
            }
        }
    }
    return ord;
}

}  // namespace detail

inline Ordering bfs_order(const Graph& g) { return detail::traversal_order(g, true); }
inline Ordering dfs_order(const Graph& g) { return detail::traversal_order(g, false); }

// Largest core number per node via bucket-based minimum-degree peeling
// (Batagelj–Zaversnik), O(|E|).
inline std::vector<int> core_numbers(const Graph& g) {
    const int n = g.num_nodes();
    std::vector<int> deg = g.degrees();
    if (n == 0) return {};
    const int max_deg = *std::max_element(deg.begin(), deg.end());

    // bin sort nodes by degree
    std::vector<int> bin(max_deg + 2, 0);
    for (int d : deg) ++bin[d];
    int start = 0;
    for (int d = 0; d <= max_deg; ++d) {
        const int count = bin[d];
        bin[d] = start;
        start += count;
    }
    std::vector<int> vert(n), pos(n);
    for (int v = 0; v < n; ++v) {
        pos[v] = bin[deg[v]]++;
        vert[pos[v]] = v;
    }
    for (int d = max_deg; d >= 1; --d) bin[d] = bin[d - 1];
    bin[0] = 0;

    const auto adj = g.adjacency();
    std::vector<int> core(n);
    for (int i = 0; i < n; ++i) {
        const int v = vert[i];
        core[v] = deg[v];
        for (int u : adj[v]) {
            if (deg[u] > deg[v]) {
                // swap u to the front of its degree bucket, then demote it
                const int du = deg[u], pu = pos[u];
                const int pw = bin[du], w = vert[pw];
                if (u != w) {
                    std::swap(vert[pu], vert[pw]);
                    pos[u] = pw;
                    pos[w] = pu;
                }
                ++bin[du];
                --deg[u];
            }
        }
    }
    return core;
}

// Core-descending ordering: partition nodes by core number, walk partitions
// from the largest core down, ranking nodes inside each partition by degree
// descending (ties by index).
inline Ordering kcore_order(const Graph& g) {
    const auto core = core_numbers(g);
    const auto deg = g.degrees();
    Ordering ord;
    ord.perm.resize(g.num_nodes());
    std::iota(ord.perm.begin(), ord.perm.end(), 0);
    std::sort(ord.perm.begin(), ord.perm.end(), [&](int a, int b) {
        if (core[a] != core[b]) return core[a] > core[b];
        if (deg[a] != deg[b]) return deg[a] > deg[b];
        return a < b;
    });
    return ord;
}

inline Ordering make_ordering(const Graph& g, OrderingKind kind) {
    switch (kind) {
        case OrderingKind::default_order: return default_order(g);
        case OrderingKind::degree_descent: return degree_descent_order(g);
        case OrderingKind::bfs: return bfs_order(g);
        case OrderingKind::dfs: return dfs_order(g);
        case OrderingKind::kcore: return kcore_order(g);
    }
    throw std::logic_error("make_ordering: unknown kind");
}

struct OrderingFamily {
    std::vector<std::pair<OrderingKind, Ordering>> members;

    int size() const { return static_cast<int>(members.size()); }
};

// Computes each requested ordering and drops later members that induce the
// same adjacency matrix as an earlier one (first occurrence wins), so no two
// family members describe the same matrix.
inline OrderingFamily build_family(const Graph& g, const std::vector<OrderingKind>& kinds) {
    if (kinds.empty()) throw std::invalid_argument("build_family: no ordering kinds given");
    OrderingFamily family;
    std::vector<std::vector<std::vector<std::uint8_t>>> seen;
    for (OrderingKind kind : kinds) {
        Ordering ord = make_ordering(g, kind);
        auto rows = to_ordered_rows(g, ord, g.num_nodes()).rows;
        if (std::find(seen.begin(), seen.end(), rows) != seen.end()) continue;
        seen.push_back(std::move(rows));
        family.members.emplace_back(kind, std::move(ord));
    }
    return family;
}

}  // namespace gran
