#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include <gran/graph.hpp>
#include <gran/model.hpp>
#include <gran/random.hpp>

namespace gran {

enum class SampleMode {
    stochastic,  // k ~ Categorical(alpha), edges ~ Bernoulli(theta_k)
    threshold,   // edge kept iff the mixture-averaged probability exceeds 1/2
};

// Sequential generation steps needed for an n-node graph with block size B
// and stride S. Matches ceil(n / B) when S == B.
inline long sample_step_count(long n, long B, long S) {
    if (n <= B) return 1;
    return (n - B + S - 1) / S + 1;
}

struct SampleResult {
    Graph graph;
    long invocations = 0;
};

namespace detail {

inline int sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        acc += probs[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
}

inline Graph largest_component(const Graph& g) {
    const int n = g.num_nodes();
    if (n == 0) return g;
    const auto adj = g.adjacency();
    std::vector<int> comp(n, -1);
    int best_root = 0, best_size = 0, ncomp = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] != -1) continue;
        std::vector<int> stack{s};
        comp[s] = ncomp;
        int size = 0;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            ++size;
            for (int v : adj[u])
                if (comp[v] == -1) {
                    comp[v] = ncomp;
                    stack.push_back(v);
                }
        }
        if (size > best_size) {
            best_size = size;
            best_root = ncomp;
        }
        ++ncomp;
    }
    std::vector<int> remap(n, -1);
    int next = 0;
    for (int v = 0; v < n; ++v)
        if (comp[v] == best_root) remap[v] = next++;
    Graph out(next);
    for (const auto& [u, v] : g.edges())
        if (remap[u] != -1 && remap[v] != -1) out.add_edge(remap[u], remap[v]);
    return out;
}

}  // namespace detail

// Strided autoregressive sampling. Each step generates a block of B rows
// and keeps the first `stride` of them; the final step keeps exactly the
// rows needed to reach n_target. Returns the generated graph and the number
// of sequential model invocations.
inline SampleResult sample_graph(GranParams& params, int stride, int n_target, Rng& rng,
                                 SampleMode mode = SampleMode::stochastic, bool keep_largest_component = false) {
    const int B = params.cfg.block_size;
    if (stride < 1 || stride > B) throw std::invalid_argument("sample_graph: stride must be in [1, block_size]");
    if (n_target < 1) throw std::invalid_argument("sample_graph: n_target must be >= 1");
    if (n_target > params.cfg.n_max)
        throw std::invalid_argument("sample_graph: n_target " + std::to_string(n_target) +
                                    " exceeds the model's n_max " + std::to_string(params.cfg.n_max));

    std::vector<double> rows_flat;  // kept rows, padded to n_max
    std::vector<Edge> edges;        // edges among kept rows
    long invocations = 0;
    int generated = 0;

    while (generated < n_target) {
        const int block_rows = std::min(B, n_target - generated);
        const bool final_step = generated + block_rows >= n_target;
        const int keep = final_step ? block_rows : stride;

        Tape tape(false);
        BlockContext ctx;
        BlockDistribution dist = detail::block_step_forward(tape, params, rows_flat, edges, generated, block_rows, &ctx);
        ++invocations;

        // decide the sampled bits for every candidate pair, in pair order
        const auto& theta = dist.theta.value();
        const auto& alpha = dist.alpha.value();
        const int K = params.cfg.num_mixtures;
        std::vector<std::uint8_t> bits(ctx.pairs.size(), 0);
        if (!ctx.pairs.empty()) {
            if (mode == SampleMode::stochastic) {
                const int k = detail::sample_categorical(alpha, rng);
                for (std::size_t p = 0; p < ctx.pairs.size(); ++p)
                    bits[p] = rng.bernoulli(theta[p * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)]) ? 1 : 0;
            } else {
                for (std::size_t p = 0; p < ctx.pairs.size(); ++p) {
                    double prob = 0;
                    for (int k = 0; k < K; ++k)
                        prob += alpha[static_cast<std::size_t>(k)] * theta[p * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)];
                    bits[p] = prob > 0.5 ? 1 : 0;
                }
            }
        }

        // keep the first `keep` rows of the block and their edges
        for (int k = 0; k < keep; ++k) {
            const int row = generated + k;
            std::vector<double> padded(static_cast<std::size_t>(params.cfg.n_max), 0.0);
            for (std::size_t p = 0; p < ctx.pairs.size(); ++p) {
                const auto& [i, j] = ctx.pairs[p];
                if (i == row && bits[p]) {
                    padded[static_cast<std::size_t>(j)] = 1.0;
                    edges.emplace_back(i, j);
                }
            }
            rows_flat.insert(rows_flat.end(), padded.begin(), padded.end());
        }
        generated += keep;
    }

    Graph g(n_target);
    for (const auto& [u, v] : edges) g.add_edge(u, v);
    if (keep_largest_component) g = detail::largest_component(g);
    return SampleResult{std::move(g), invocations};
}

// Generated graph size: drawn uniformly from the empirical multiset of
// training-graph sizes.
inline int sample_size(const std::vector<int>& train_sizes, Rng& rng) {
    if (train_sizes.empty()) throw std::invalid_argument("sample_size: empty size multiset");
    return train_sizes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(train_sizes.size()) - 1))];
}

}  // namespace gran
