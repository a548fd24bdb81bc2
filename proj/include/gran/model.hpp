#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gran/graph.hpp>
#include <gran/nn.hpp>
#include <gran/orderings.hpp>
#include <gran/random.hpp>
#include <gran/tensor.hpp>

namespace gran {

struct GranConfig {
    int block_size = 1;     // rows generated per step
    int hidden_dim = 128;   // node embedding width
    int rounds = 7;         // message-passing rounds
    int num_mixtures = 20;  // Bernoulli mixture components
    int n_max = 1;          // maximum graph size the model can represent
    bool tie_rounds = false;
    // Alternative training credit: count every block row's pairs at every
    // step instead of only the first row's (unnormalized objective).
    bool count_all_rows = false;

    void validate() const {
        if (block_size < 1) throw std::invalid_argument("GranConfig: block_size must be >= 1");
        if (hidden_dim < 1) throw std::invalid_argument("GranConfig: hidden_dim must be >= 1");
        if (rounds < 1) throw std::invalid_argument("GranConfig: rounds must be >= 1");
        if (num_mixtures < 1) throw std::invalid_argument("GranConfig: num_mixtures must be >= 1");
        if (n_max < block_size) throw std::invalid_argument("GranConfig: n_max must be >= block_size");
    }
};

// theta is clamped into [kThetaEps, 1 - kThetaEps] before any log.
inline constexpr double kThetaEps = 1e-7;

struct RoundParams {
    MlpParams message;    // f: H -> H
    MlpParams attention;  // g: H + B -> 1
    GruParams state;      // GRU over H with message input H

    RoundParams() = default;
    RoundParams(const std::string& prefix, const GranConfig& cfg)
        : message(prefix + ".msg", cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim),
          attention(prefix + ".att", cfg.hidden_dim + cfg.block_size, cfg.hidden_dim, 1),
          state(prefix + ".gru", cfg.hidden_dim, cfg.hidden_dim) {}

    template <class F>
    void visit(F&& f) {
        message.visit(f);
        attention.visit(f);
        state.visit(f);
    }
};

struct GranParams {
    GranConfig cfg;
    Param embed_w;  // (n_max, H): each padded row maps to H via row * W + b
    Param embed_b;  // (H,)
    std::vector<RoundParams> rounds;      // one entry when tie_rounds, else cfg.rounds
    MlpParams alpha_head;                 // H -> K
    MlpParams theta_head;                 // H -> K

    GranParams() = default;
    explicit GranParams(const GranConfig& config)
        : cfg(config),
          embed_w("embed.w", {config.n_max, config.hidden_dim}),
          embed_b("embed.b", {config.hidden_dim}),
          alpha_head("alpha", config.hidden_dim, config.hidden_dim, config.num_mixtures),
          theta_head("theta", config.hidden_dim, config.hidden_dim, config.num_mixtures) {
        cfg.validate();
        const int round_sets = cfg.tie_rounds ? 1 : cfg.rounds;
        for (int r = 0; r < round_sets; ++r)
            rounds.emplace_back(cfg.tie_rounds ? std::string("round") : "round" + std::to_string(r), cfg);
    }

    RoundParams& round(int r) { return rounds[cfg.tie_rounds ? 0 : static_cast<std::size_t>(r)]; }

    void init(Rng& rng) {
        init_uniform(embed_w, cfg.n_max, rng);
        init_uniform(embed_b, cfg.n_max, rng);
        for (auto& rp : rounds) {
            rp.message.init(rng);
            rp.attention.init(rng);
            rp.state.init(rng);
        }
        alpha_head.init(rng);
        theta_head.init(rng);
    }

    std::vector<Param*> parameters() {
        std::vector<Param*> out{&embed_w, &embed_b};
        for (auto& rp : rounds) rp.visit([&](Param& p) { out.push_back(&p); });
        alpha_head.visit([&](Param& p) { out.push_back(&p); });
        theta_head.visit([&](Param& p) { out.push_back(&p); });
        return out;
    }

    long num_values() {
        long total = 0;
        for (const Param* p : parameters()) total += p->size();
        return total;
    }
};

// One generation step: `block_rows` new rows appended after `existing` rows.
// Candidate pairs (i, j) cover every edge slot the block can decide: i a
// block row, j < i. The mask is the one-of-B position encoding (zero for
// existing nodes), flattened row-major over (existing + block_rows, B).
struct BlockContext {
    int existing = 0;
    int block_rows = 0;
    int mask_width = 0;
    std::vector<Edge> pairs;   // ordered: i ascending, then j ascending
    std::vector<double> mask;  // (existing + block_rows) x mask_width

    int num_nodes() const { return existing + block_rows; }
};

inline BlockContext make_block_context(int existing, int block_rows, int mask_width) {
    if (existing < 0 || block_rows < 1 || mask_width < block_rows)
        throw std::invalid_argument("make_block_context: invalid step geometry");
    BlockContext ctx;
    ctx.existing = existing;
    ctx.block_rows = block_rows;
    ctx.mask_width = mask_width;
    for (int k = 0; k < block_rows; ++k) {
        const int i = existing + k;
        for (int j = 0; j < i; ++j) ctx.pairs.emplace_back(i, j);
    }
    ctx.mask.assign(static_cast<std::size_t>(existing + block_rows) * mask_width, 0.0);
    for (int k = 0; k < block_rows; ++k)
        ctx.mask[static_cast<std::size_t>(existing + k) * mask_width + k] = 1.0;
    return ctx;
}

// Union of the real edges among the existing nodes and the augmented edges:
// all pairs inside the block plus all block-to-existing pairs.
struct AugmentedGraph {
    int num_nodes = 0;
    std::vector<Edge> edges;
};

inline AugmentedGraph build_augmented_graph(const std::vector<Edge>& existing_edges, int existing, int block_rows) {
    if (block_rows < 1) throw std::invalid_argument("build_augmented_graph: block must have at least one row");
    AugmentedGraph g;
    g.num_nodes = existing + block_rows;
    g.edges = existing_edges;
    for (int k = 0; k < block_rows; ++k) {
        const int b = existing + k;
        for (int j = 0; j < b; ++j) g.edges.emplace_back(b, j);
    }
    return g;
}

// Initial node states: existing rows are embedded with the linear map, the
// new block starts at zero.
inline Tensor init_node_embeddings(Tape& tape, GranParams& params, const std::vector<double>& rows_flat,
                                   int existing, int block_rows) {
    const int H = params.cfg.hidden_dim;
    if (static_cast<int>(rows_flat.size()) != existing * params.cfg.n_max)
        throw std::invalid_argument("init_node_embeddings: row data does not match existing * n_max");
    Tensor block = tape.zeros({block_rows, H});
    if (existing == 0) return block;
    Tensor rows = tape.constant({existing, params.cfg.n_max}, rows_flat);
    Tensor embedded = add(matmul(rows, tape.leaf(params.embed_w)), tape.leaf(params.embed_b));
    return concat_rows(embedded, block);
}

// One round of attentive message passing over the augmented graph:
//   m_ij = f(h_i - h_j),  a_ij = sigmoid(g([h_i, x_i] - [h_j, x_j])),
//   h_i' = GRU(h_i, sum_{j in N(i)} a_ij m_ij)
// with messages flowing in both directions over every undirected edge.
inline Tensor message_passing_round(Tape& tape, const Tensor& h, const AugmentedGraph& g,
                                    const Tensor& mask, RoundParams& rp) {
    const int n = g.num_nodes;
    const int H = h.shape().at(1);
    if (h.shape().at(0) != n) shape_error("message_passing_round", h.shape(), {n, H});

    if (g.edges.empty()) return gru_cell(tape, rp.state, h, tape.zeros({n, H}));

    std::vector<int> recv, send;
    recv.reserve(g.edges.size() * 2);
    send.reserve(g.edges.size() * 2);
    for (const auto& [u, v] : g.edges) {
        recv.push_back(u);
        send.push_back(v);
        recv.push_back(v);
        send.push_back(u);
    }

    Tensor diff = sub(gather_rows(h, recv), gather_rows(h, send));
    Tensor msg = mlp_forward(tape, rp.message, diff);

    Tensor hx = concat_cols(h, mask);
    Tensor att_in = sub(gather_rows(hx, recv), gather_rows(hx, send));
    Tensor att = sigmoid(mlp_forward(tape, rp.attention, att_in));

    Tensor agg = segment_sum(mul(msg, att), recv, n);
    return gru_cell(tape, rp.state, h, agg);
}

// Mixture-of-Bernoulli block output. alpha pools MLP_alpha over every
// candidate pair; theta holds one edge probability per pair and component.
struct BlockDistribution {
    Tensor alpha;      // (K,)
    Tensor log_alpha;  // (K,)
    Tensor theta;      // (P, K), entries in (0, 1); P == pairs.size()
    std::vector<Edge> pairs;

    int num_pairs() const { return static_cast<int>(pairs.size()); }
};

inline BlockDistribution output_distribution(Tape& tape, const Tensor& h_final, const BlockContext& ctx,
                                             GranParams& params) {
    const int K = params.cfg.num_mixtures;
    BlockDistribution dist;
    dist.pairs = ctx.pairs;
    if (ctx.pairs.empty()) {
        dist.alpha = tape.constant({K}, std::vector<double>(static_cast<std::size_t>(K), 1.0 / K));
        dist.log_alpha = tape.constant({K}, std::vector<double>(static_cast<std::size_t>(K), -std::log(static_cast<double>(K))));
        dist.theta = tape.zeros({0, K});
        return dist;
    }
    std::vector<int> pi, pj;
    pi.reserve(ctx.pairs.size());
    pj.reserve(ctx.pairs.size());
    for (const auto& [i, j] : ctx.pairs) {
        pi.push_back(i);
        pj.push_back(j);
    }
    Tensor diff = sub(gather_rows(h_final, pi), gather_rows(h_final, pj));
    dist.theta = clamp(sigmoid(mlp_forward(tape, params.theta_head, diff)), kThetaEps, 1.0 - kThetaEps);
    Tensor logits = sum_over_rows(mlp_forward(tape, params.alpha_head, diff));
    dist.alpha = softmax(logits);
    dist.log_alpha = sub(logits, logsumexp(logits));
    return dist;
}

// Same mixture restricted to a subset of the candidate pairs (alpha is kept;
// only the per-pair Bernoullis named by `keep` remain).
inline BlockDistribution restrict_to_pairs(const BlockDistribution& dist, const std::vector<int>& keep) {
    BlockDistribution out;
    out.alpha = dist.alpha;
    out.log_alpha = dist.log_alpha;
    out.theta = gather_rows(dist.theta, keep);
    out.pairs.reserve(keep.size());
    for (int k : keep) out.pairs.push_back(dist.pairs.at(static_cast<std::size_t>(k)));
    return out;
}

// log p(observed) = logsumexp_k [ log alpha_k + sum_pairs log Bern(y | theta_k) ]
inline Tensor block_log_prob(Tape& tape, const BlockDistribution& dist, const std::vector<std::uint8_t>& observed) {
    const int P = dist.num_pairs();
    if (static_cast<int>(observed.size()) != P)
        throw std::invalid_argument("block_log_prob: observed length " + std::to_string(observed.size()) +
                                    " does not match " + std::to_string(P) + " candidate pairs");
    if (P == 0) return tape.scalar_constant(0.0);

    std::vector<double> y(static_cast<std::size_t>(P));
    std::vector<double> not_y(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
        y[static_cast<std::size_t>(p)] = observed[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
        not_y[static_cast<std::size_t>(p)] = 1.0 - y[static_cast<std::size_t>(p)];
    }
    Tensor ycol = tape.constant({P, 1}, y);
    Tensor ncol = tape.constant({P, 1}, not_y);
    Tensor one_minus_theta = add(scale(dist.theta, -1.0), tape.scalar_constant(1.0));
    Tensor ll = add(mul(log(dist.theta), ycol), mul(log(one_minus_theta), ncol));  // (P, K)
    Tensor per_component = sum_over_rows(ll);                                      // (K,)
    return logsumexp(add(dist.log_alpha, per_component));
}

namespace detail {

// Shared per-step forward pass: embeddings, augmented graph, R rounds,
// output distribution. `rows_flat` holds the `existing` already-known rows
// padded to n_max; `prefix_edges` are the real edges among them.
inline BlockDistribution block_step_forward(Tape& tape, GranParams& params, const std::vector<double>& rows_flat,
                                            const std::vector<Edge>& prefix_edges, int existing, int block_rows,
                                            BlockContext* ctx_out = nullptr) {
    BlockContext ctx = make_block_context(existing, block_rows, params.cfg.block_size);
    AugmentedGraph aug = build_augmented_graph(prefix_edges, existing, block_rows);
    Tensor h = init_node_embeddings(tape, params, rows_flat, existing, block_rows);
    Tensor mask = tape.constant({ctx.num_nodes(), ctx.mask_width}, ctx.mask);
    for (int r = 0; r < params.cfg.rounds; ++r) h = message_passing_round(tape, h, aug, mask, params.round(r));
    BlockDistribution dist = output_distribution(tape, h, ctx, params);
    if (ctx_out) *ctx_out = std::move(ctx);
    return dist;
}

}  // namespace detail

// Per-step reference evaluation of the teacher-forced log-probability:
// composes the block-step operations exactly as generation would see them,
// one tape sub-graph per row position. Kept as the slow reference that the
// batched implementation below must agree with.
inline Tensor graph_log_prob_stepwise(Tape& tape, const OrderedRows& rows, GranParams& params) {
    const int N = rows.num_rows();
    const int B = params.cfg.block_size;
    if (rows.n_max != params.cfg.n_max)
        throw std::invalid_argument("graph_log_prob: rows padded to " + std::to_string(rows.n_max) +
                                    " but model expects n_max " + std::to_string(params.cfg.n_max));

    Tensor total = tape.scalar_constant(0.0);
    std::vector<double> rows_flat;
    rows_flat.reserve(static_cast<std::size_t>(N) * params.cfg.n_max);
    std::vector<Edge> prefix_edges;

    for (int t = 0; t < N; ++t) {
        const int block_rows = std::min(B, N - t);

        // scored pairs: (t, j) for j < t, or every block pair when counting all rows
        const bool any_scored = params.cfg.count_all_rows ? (t > 0 || block_rows > 1) : (t > 0);
        if (any_scored) {
            BlockContext ctx;
            BlockDistribution dist = detail::block_step_forward(tape, params, rows_flat, prefix_edges, t, block_rows, &ctx);
            std::vector<int> keep;
            if (params.cfg.count_all_rows) {
                keep.resize(ctx.pairs.size());
                std::iota(keep.begin(), keep.end(), 0);
            } else {
                // pairs are ordered with row t's (t, 0..t-1) first
                keep.resize(static_cast<std::size_t>(t));
                std::iota(keep.begin(), keep.end(), 0);
            }
            BlockDistribution scored = restrict_to_pairs(dist, keep);
            std::vector<std::uint8_t> observed;
            observed.reserve(scored.pairs.size());
            for (const auto& [i, j] : scored.pairs) observed.push_back(rows.rows[i][j]);
            total = add(total, block_log_prob(tape, scored, observed));
        }

        // reveal row t to later steps
        const auto& row = rows.rows[static_cast<std::size_t>(t)];
        rows_flat.insert(rows_flat.end(), row.begin(), row.end());
        for (int j = 0; j < t; ++j)
            if (row[static_cast<std::size_t>(j)]) prefix_edges.emplace_back(t, j);
    }
    return total;
}

// Teacher-forced log-probability of the rows under stride-1 training: one
// conditional per row position t, the model seeing the next min(B, N - t)
// rows as its block. Unless count_all_rows is set, only the first block
// row's pairs are scored, so each edge slot is counted exactly once and the
// result is a true log-probability of the graph under this ordering.
//
// All steps are independent given the ground-truth prefix, so they are
// evaluated in one pass over the disjoint union of the per-step augmented
// graphs; this computes the same values as graph_log_prob_stepwise with far
// fewer, larger tensor operations.
inline Tensor graph_log_prob(Tape& tape, const OrderedRows& rows, GranParams& params) {
    const int N = rows.num_rows();
    const int B = params.cfg.block_size;
    const int H = params.cfg.hidden_dim;
    if (rows.n_max != params.cfg.n_max)
        throw std::invalid_argument("graph_log_prob: rows padded to " + std::to_string(rows.n_max) +
                                    " but model expects n_max " + std::to_string(params.cfg.n_max));

    // assemble the union of all scored steps
    int total_nodes = 0;
    int num_steps = 0;
    std::vector<int> source_row;  // union node -> generated row, or N for the zero block state
    std::vector<double> mask_flat;
    std::vector<Edge> union_edges;
    std::vector<int> alpha_i, alpha_j, alpha_seg;
    std::vector<int> scored_i, scored_j, scored_seg;
    std::vector<std::uint8_t> observed;
    std::vector<Edge> prefix_edges;

    for (int t = 0; t < N; ++t) {
        const int block_rows = std::min(B, N - t);
        const bool any_scored = params.cfg.count_all_rows ? (t > 0 || block_rows > 1) : (t > 0);
        if (any_scored) {
            const int off = total_nodes;
            const int sid = num_steps++;
            for (int r = 0; r < t; ++r) source_row.push_back(r);
            for (int k = 0; k < block_rows; ++k) source_row.push_back(N);
            for (int r = 0; r < t + block_rows; ++r) {
                for (int b = 0; b < B; ++b)
                    mask_flat.push_back(r >= t && r - t == b ? 1.0 : 0.0);
            }
            for (const auto& [u, v] : prefix_edges) union_edges.emplace_back(off + u, off + v);
            for (int k = 0; k < block_rows; ++k) {
                const int i = t + k;
                for (int j = 0; j < i; ++j) {
                    union_edges.emplace_back(off + i, off + j);  // augmented
                    alpha_i.push_back(off + i);
                    alpha_j.push_back(off + j);
                    alpha_seg.push_back(sid);
                    if (params.cfg.count_all_rows || i == t) {
                        scored_i.push_back(off + i);
                        scored_j.push_back(off + j);
                        scored_seg.push_back(sid);
                        observed.push_back(rows.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
                    }
                }
            }
            total_nodes += t + block_rows;
        }
        const auto& row = rows.rows[static_cast<std::size_t>(t)];
        for (int j = 0; j < t; ++j)
            if (row[static_cast<std::size_t>(j)]) prefix_edges.emplace_back(t, j);
    }
    if (num_steps == 0) return tape.scalar_constant(0.0);

    // embed every generated row once; union states gather from the embedded
    // rows, with an extra zero row standing in for the fresh block nodes
    std::vector<double> rows_flat;
    rows_flat.reserve(static_cast<std::size_t>(N) * params.cfg.n_max);
    for (const auto& row : rows.rows) rows_flat.insert(rows_flat.end(), row.begin(), row.end());
    Tensor embedded = add(matmul(tape.constant({N, params.cfg.n_max}, std::move(rows_flat)), tape.leaf(params.embed_w)),
                          tape.leaf(params.embed_b));
    Tensor h = gather_rows(concat_rows(embedded, tape.zeros({1, H})), source_row);

    Tensor mask = tape.constant({total_nodes, B}, std::move(mask_flat));
    AugmentedGraph union_graph{total_nodes, std::move(union_edges)};
    for (int r = 0; r < params.cfg.rounds; ++r) h = message_passing_round(tape, h, union_graph, mask, params.round(r));

    // mixture weights: pool the alpha head over each step's candidate pairs
    Tensor hd_alpha = sub(gather_rows(h, alpha_i), gather_rows(h, alpha_j));
    Tensor alpha_logits = segment_sum(mlp_forward(tape, params.alpha_head, hd_alpha), alpha_seg, num_steps);
    Tensor log_alpha = sub(alpha_logits, logsumexp_rows(alpha_logits));  // (T, K)

    // per-pair Bernoullis for the scored pairs only
    const bool same_pairs = scored_i == alpha_i && scored_j == alpha_j;
    Tensor hd_scored = same_pairs ? hd_alpha : sub(gather_rows(h, scored_i), gather_rows(h, scored_j));
    Tensor theta = clamp(sigmoid(mlp_forward(tape, params.theta_head, hd_scored)), kThetaEps, 1.0 - kThetaEps);

    const int Ps = static_cast<int>(scored_i.size());
    std::vector<double> y(static_cast<std::size_t>(Ps)), not_y(static_cast<std::size_t>(Ps));
    for (int p = 0; p < Ps; ++p) {
        y[static_cast<std::size_t>(p)] = observed[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
        not_y[static_cast<std::size_t>(p)] = 1.0 - y[static_cast<std::size_t>(p)];
    }
    Tensor one_minus_theta = add(scale(theta, -1.0), tape.scalar_constant(1.0));
    Tensor ll = add(mul(log(theta), tape.constant({Ps, 1}, std::move(y))),
                    mul(log(one_minus_theta), tape.constant({Ps, 1}, std::move(not_y))));
    Tensor bern = segment_sum(ll, scored_seg, num_steps);  // (T, K)

    return sum_all(logsumexp_rows(add(log_alpha, bern)));
}

// -log sum_pi exp(log p(G, pi)) over the ordering family (Eq. of the
// ordering-family lower bound, negated for minimization).
inline Tensor family_loss(Tape& tape, const std::vector<OrderedRows>& members, GranParams& params) {
    if (members.empty()) throw std::invalid_argument("family_loss: empty ordering family");
    std::vector<Tensor> logps;
    logps.reserve(members.size());
    for (const auto& rows : members) logps.push_back(graph_log_prob(tape, rows, params));
    if (logps.size() == 1) return scale(logps[0], -1.0);
    return scale(logsumexp(stack_scalars(logps)), -1.0);
}

inline std::vector<OrderedRows> family_rows(const Graph& g, const OrderingFamily& family, int n_max) {
    std::vector<OrderedRows> members;
    members.reserve(family.members.size());
    for (const auto& [kind, ord] : family.members) members.push_back(to_ordered_rows(g, ord, n_max));
    return members;
}

inline Tensor family_loss(Tape& tape, const Graph& g, const OrderingFamily& family, GranParams& params) {
    return family_loss(tape, family_rows(g, family, params.cfg.n_max), params);
}

// Optimal variational posterior over the family: softmax of the per-ordering
// log-joints.
inline std::vector<double> posterior_over_orderings(const Graph& g, const OrderingFamily& family, GranParams& params) {
    if (family.members.empty()) throw std::invalid_argument("posterior_over_orderings: empty family");
    Tape tape(false);
    std::vector<double> logp;
    for (const auto& rows : family_rows(g, family, params.cfg.n_max))
        logp.push_back(graph_log_prob(tape, rows, params).scalar());
    const double mx = *std::max_element(logp.begin(), logp.end());
    double total = 0;
    for (double v : logp) total += std::exp(v - mx);
    std::vector<double> post;
    post.reserve(logp.size());
    for (double v : logp) post.push_back(std::exp(v - mx) / total);
    return post;
}

}  // namespace gran
