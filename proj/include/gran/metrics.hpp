#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <gran/dataset.hpp>
#include <gran/graph.hpp>

namespace gran {

struct Histogram {
    std::vector<double> bin_edges;  // monotone, size = bins + 1
    std::vector<double> mass;       // one entry per bin, sums to 1 for nonempty sources

    int bins() const { return static_cast<int>(mass.size()); }
};

// Values are clamped into [lo, hi]; the top edge is inclusive.
inline Histogram make_histogram(const std::vector<double>& values, double lo, double hi, int bins) {
    if (bins < 1 || !(hi > lo)) throw std::invalid_argument("make_histogram: bad binning");
    Histogram h;
    h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.bin_edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    h.mass.assign(static_cast<std::size_t>(bins), 0.0);
    if (values.empty()) return h;
    const double w = 1.0 / static_cast<double>(values.size());
    for (double v : values) {
        int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
        b = std::clamp(b, 0, bins - 1);
        h.mass[static_cast<std::size_t>(b)] += w;
    }
    return h;
}

// Integer bins [0, max_degree_bins); degrees past the top land in the last bin.
inline Histogram degree_histogram(const Graph& g, int max_degree_bins) {
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(g.num_nodes()));
    for (int d : g.degrees()) vals.push_back(static_cast<double>(d));
    return make_histogram(vals, 0.0, static_cast<double>(max_degree_bins), max_degree_bins);
}

// Local clustering coefficient per node: 2 * (triangles at the node) /
// (deg * (deg - 1)); zero for degree < 2.
inline std::vector<double> clustering_coefficients(const Graph& g) {
    const auto adj = g.adjacency();
    std::vector<double> out(static_cast<std::size_t>(g.num_nodes()), 0.0);
    for (int v = 0; v < g.num_nodes(); ++v) {
        const auto& nbrs = adj[static_cast<std::size_t>(v)];
        const int d = static_cast<int>(nbrs.size());
        if (d < 2) continue;
        int links = 0;
        for (std::size_t a = 0; a < nbrs.size(); ++a)
            for (std::size_t b = a + 1; b < nbrs.size(); ++b)
                if (g.has_edge(nbrs[a], nbrs[b])) ++links;
        out[static_cast<std::size_t>(v)] = 2.0 * links / (static_cast<double>(d) * (d - 1));
    }
    return out;
}

inline Histogram clustering_histogram(const Graph& g, int bins) {
    return make_histogram(clustering_coefficients(g), 0.0, 1.0, bins);
}

// --- 4-node graphlet orbits --------------------------------------------------
//
// Orbits 4..14 of the six connected 4-node graphlets, in the standard
// numbering: path ends 4 / path interior 5, star leaf 6 / star center 7,
// cycle 8, tailed-triangle tail 9 / triangle rim 10 / attachment 11,
// diamond rim 12 / diamond hub 13, clique 14. Index i of the result vector
// is orbit 4 + i.

inline constexpr int kNumOrbits4 = 11;

// Brute force over all 4-subsets; classification by edge count plus the
// within-subset degree sequence. O(n^4), fine at this scale.
inline std::vector<std::array<long, kNumOrbits4>> orbit_counts_4(const Graph& g) {
    const int n = g.num_nodes();
    std::vector<std::array<long, kNumOrbits4>> counts(static_cast<std::size_t>(n));
    for (auto& c : counts) c.fill(0);

    // adjacency matrix for O(1) edge tests
    std::vector<char> adj(static_cast<std::size_t>(n) * n, 0);
    for (const auto& [u, v] : g.edges()) {
        adj[static_cast<std::size_t>(u) * n + v] = 1;
        adj[static_cast<std::size_t>(v) * n + u] = 1;
    }
    std::array<int, 4> q{};
    for (q[0] = 0; q[0] < n; ++q[0])
        for (q[1] = q[0] + 1; q[1] < n; ++q[1])
            for (q[2] = q[1] + 1; q[2] < n; ++q[2])
                for (q[3] = q[2] + 1; q[3] < n; ++q[3]) {
                    std::array<int, 4> deg{};
                    int edges = 0;
                    for (int a = 0; a < 4; ++a)
                        for (int b = a + 1; b < 4; ++b)
                            if (adj[static_cast<std::size_t>(q[a]) * n + q[b]]) {
                                ++deg[a];
                                ++deg[b];
                                ++edges;
                            }
                    if (edges < 3) continue;  // disconnected
                    int iso = 0, max_deg = 0;
                    for (int d : deg) {
                        if (d == 0) ++iso;
                        max_deg = std::max(max_deg, d);
                    }
                    if (iso > 0) continue;  // triangle + isolated node
                    // classify and assign per-node orbits by within-subset degree
                    for (int a = 0; a < 4; ++a) {
                        int orbit = -1;
                        switch (edges) {
                            case 3:
                                if (max_deg == 3) orbit = deg[a] == 3 ? 7 : 6;  // star
                                else orbit = deg[a] == 1 ? 4 : 5;               // path
                                break;
                            case 4:
                                if (max_deg == 3) orbit = deg[a] == 1 ? 9 : (deg[a] == 2 ? 10 : 11);  // tailed triangle
                                else orbit = 8;                                                        // cycle
                                break;
                            case 5:
                                orbit = deg[a] == 2 ? 12 : 13;  // diamond
                                break;
                            case 6:
                                orbit = 14;  // clique
                                break;
                        }
                        ++counts[static_cast<std::size_t>(q[a])][orbit - 4];
                    }
                }
    return counts;
}

// Mean orbit-count vector over nodes — the per-graph feature the orbit MMD
// compares.
inline std::vector<double> mean_orbit_vector(const Graph& g) {
    const auto counts = orbit_counts_4(g);
    std::vector<double> mean(kNumOrbits4, 0.0);
    if (counts.empty()) return mean;
    for (const auto& row : counts)
        for (int k = 0; k < kNumOrbits4; ++k) mean[static_cast<std::size_t>(k)] += static_cast<double>(row[static_cast<std::size_t>(k)]);
    for (auto& v : mean) v /= static_cast<double>(counts.size());
    return mean;
}

// --- normalized Laplacian spectrum -------------------------------------------

// Eigenvalues of D^{-1/2} (D - A) D^{-1/2}; isolated nodes produce zero rows
// (hence eigenvalue 0). Always within [0, 2] up to roundoff.
inline std::vector<double> laplacian_eigenvalues(const Graph& g) {
    const int n = g.num_nodes();
    if (n < 1) throw std::invalid_argument("laplacian_eigenvalues: empty graph");
    const auto deg = g.degrees();
    std::vector<double> dinv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        dinv[static_cast<std::size_t>(i)] = deg[static_cast<std::size_t>(i)] > 0 ? 1.0 / std::sqrt(static_cast<double>(deg[static_cast<std::size_t>(i)])) : 0.0;

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        if (deg[static_cast<std::size_t>(i)] > 0) L(i, i) = 1.0;
    for (const auto& [u, v] : g.edges()) {
        const double w = -dinv[static_cast<std::size_t>(u)] * dinv[static_cast<std::size_t>(v)];
        L(u, v) = w;
        L(v, u) = w;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("laplacian_eigenvalues: eigensolver failed on a graph with " +
                                 std::to_string(n) + " nodes");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];
    std::sort(out.begin(), out.end());
    return out;
}

inline Histogram laplacian_spectrum_histogram(const Graph& g, int bins) {
    return make_histogram(laplacian_eigenvalues(g), 0.0, 2.0, bins);
}

// --- distances and MMD --------------------------------------------------------

inline double tv_distance(const Histogram& p, const Histogram& q) {
    if (p.bin_edges != q.bin_edges)
        throw std::invalid_argument("tv_distance: histograms use different binnings");
    double total = 0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) total += std::abs(p.mass[i] - q.mass[i]);
    return 0.5 * total;
}

namespace detail {

template <class T, class Kernel>
double squared_mmd(const std::vector<T>& a, const std::vector<T>& b, Kernel&& k) {
    if (a.empty() || b.empty()) throw std::invalid_argument("mmd: empty sample set");
    double aa = 0, bb = 0, ab = 0;
    for (const auto& x : a)
        for (const auto& y : a) aa += k(x, y);
    for (const auto& x : b)
        for (const auto& y : b) bb += k(x, y);
    for (const auto& x : a)
        for (const auto& y : b) ab += k(x, y);
    double mmd = aa / (static_cast<double>(a.size()) * a.size()) + bb / (static_cast<double>(b.size()) * b.size()) -
                 2.0 * ab / (static_cast<double>(a.size()) * b.size());
    if (mmd < 0 && mmd > -1e-12) mmd = 0;  // roundoff
    return mmd;
}

}  // namespace detail

// Squared MMD with kernel exp(-tv(p, q)^2 / (2 sigma^2)).
inline double mmd_tv(const std::vector<Histogram>& a, const std::vector<Histogram>& b, double sigma) {
    return detail::squared_mmd(a, b, [sigma](const Histogram& p, const Histogram& q) {
        const double d = tv_distance(p, q);
        return std::exp(-d * d / (2.0 * sigma * sigma));
    });
}

// Squared MMD with a Gaussian kernel on Euclidean distance between vectors.
inline double mmd_rbf_vectors(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                              double sigma) {
    auto kernel = [sigma](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() != y.size()) throw std::invalid_argument("mmd_rbf_vectors: dimension mismatch");
        double d2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        return std::exp(-d2 / (2.0 * sigma * sigma));
    };
    return detail::squared_mmd(a, b, kernel);
}

// --- lobster test --------------------------------------------------------------

// A lobster is a tree where removing all leaves twice leaves a simple path
// (or nothing).
inline bool is_lobster(const Graph& g) {
    const int n = g.num_nodes();
    if (n == 0) return false;
    if (g.num_edges() != n - 1) return false;

    // connectivity
    const auto adj = g.adjacency();
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 0;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        ++visited;
        for (int v : adj[static_cast<std::size_t>(u)])
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                stack.push_back(v);
            }
    }
    if (visited != n) return false;

    // peel all leaves twice, then demand max degree <= 2 (a path or empty)
    std::vector<int> deg = g.degrees();
    std::vector<char> alive(static_cast<std::size_t>(n), 1);
    for (int round = 0; round < 2; ++round) {
        std::vector<int> drop;
        for (int v = 0; v < n; ++v)
            if (alive[static_cast<std::size_t>(v)] && deg[static_cast<std::size_t>(v)] <= 1) drop.push_back(v);
        for (int v : drop) {
            alive[static_cast<std::size_t>(v)] = 0;
            for (int u : adj[static_cast<std::size_t>(v)])
                if (alive[static_cast<std::size_t>(u)]) --deg[static_cast<std::size_t>(u)];
        }
    }
    for (int v = 0; v < n; ++v)
        if (alive[static_cast<std::size_t>(v)] && deg[static_cast<std::size_t>(v)] > 2) return false;
    return true;
}

// --- evaluation report ----------------------------------------------------------

struct EvalConfig {
    double sigma = 1.0;
    bool lobster = false;
    int clustering_bins = 100;
    int spectral_bins = 200;
};

struct MetricReport {
    double degree_mmd = 0;
    double clustering_mmd = 0;
    double orbit_mmd = 0;
    double spectral_mmd = 0;
    std::optional<double> lobster_accuracy;

    std::string to_text() const {
        char buf[512];
        std::string out;
        std::snprintf(buf, sizeof(buf), "degree_mmd %.12g\n", degree_mmd);
        out += buf;
        std::snprintf(buf, sizeof(buf), "clustering_mmd %.12g\n", clustering_mmd);
        out += buf;
        std::snprintf(buf, sizeof(buf), "orbit_mmd %.12g\n", orbit_mmd);
        out += buf;
        std::snprintf(buf, sizeof(buf), "spectral_mmd %.12g\n", spectral_mmd);
        out += buf;
        if (lobster_accuracy) {
            std::snprintf(buf, sizeof(buf), "lobster_accuracy %.12g\n", *lobster_accuracy);
            out += buf;
        }
        return out;
    }

    static MetricReport from_text(const std::string& text) {
        MetricReport report;
        std::istringstream in(text);
        std::string key;
        double value;
        while (in >> key >> value) {
            if (key == "degree_mmd") report.degree_mmd = value;
            else if (key == "clustering_mmd") report.clustering_mmd = value;
            else if (key == "orbit_mmd") report.orbit_mmd = value;
            else if (key == "spectral_mmd") report.spectral_mmd = value;
            else if (key == "lobster_accuracy") report.lobster_accuracy = value;
            else throw std::runtime_error("MetricReport: unknown key \"" + key + "\"");
        }
        return report;
    }
};

// Degree, clustering and spectral MMDs use the TV kernel; the orbit MMD uses
// the Gaussian kernel on mean orbit-count vectors. Degree histograms share
// one integer range covering both sets.
inline MetricReport evaluate(const GraphDataset& generated, const GraphDataset& reference, const EvalConfig& cfg) {
    if (generated.graphs.empty() || reference.graphs.empty())
        throw std::invalid_argument("evaluate: both datasets must be nonempty");

    int max_degree = 0;
    for (const auto& g : generated.graphs)
        for (int d : g.degrees()) max_degree = std::max(max_degree, d);
    for (const auto& g : reference.graphs)
        for (int d : g.degrees()) max_degree = std::max(max_degree, d);
    const int degree_bins = max_degree + 1;

    auto histograms = [&](const GraphDataset& ds, auto&& fn) {
        std::vector<Histogram> out;
        out.reserve(ds.graphs.size());
        for (const auto& g : ds.graphs) out.push_back(fn(g));
        return out;
    };

    MetricReport report;
    report.degree_mmd = mmd_tv(histograms(generated, [&](const Graph& g) { return degree_histogram(g, degree_bins); }),
                               histograms(reference, [&](const Graph& g) { return degree_histogram(g, degree_bins); }),
                               cfg.sigma);
    report.clustering_mmd =
        mmd_tv(histograms(generated, [&](const Graph& g) { return clustering_histogram(g, cfg.clustering_bins); }),
               histograms(reference, [&](const Graph& g) { return clustering_histogram(g, cfg.clustering_bins); }),
               cfg.sigma);
    report.spectral_mmd =
        mmd_tv(histograms(generated, [&](const Graph& g) { return laplacian_spectrum_histogram(g, cfg.spectral_bins); }),
               histograms(reference, [&](const Graph& g) { return laplacian_spectrum_histogram(g, cfg.spectral_bins); }),
               cfg.sigma);

    std::vector<std::vector<double>> gen_orbits, ref_orbits;
    for (const auto& g : generated.graphs) gen_orbits.push_back(mean_orbit_vector(g));
    for (const auto& g : reference.graphs) ref_orbits.push_back(mean_orbit_vector(g));
    report.orbit_mmd = mmd_rbf_vectors(gen_orbits, ref_orbits, cfg.sigma);

    if (cfg.lobster) {
        int pass = 0;
        for (const auto& g : generated.graphs)
            if (is_lobster(g)) ++pass;
        report.lobster_accuracy = static_cast<double>(pass) / static_cast<double>(generated.graphs.size());
    }
    return report;
}

}  // namespace gran
