#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <gran/generators.hpp>
#include <gran/model.hpp>
#include <gran/nn.hpp>
#include <gran/orderings.hpp>
#include <gran/random.hpp>

using namespace gran;

namespace {

GranConfig small_config(int H = 4, int B = 1, int K = 1, int R = 1, int n_max = 8) {
    GranConfig cfg;
    cfg.hidden_dim = H;
    cfg.block_size = B;
    cfg.num_mixtures = K;
    cfg.rounds = R;
    cfg.n_max = n_max;
    return cfg;
}

Graph two_path() {
    Graph g(2);
    g.add_edge(0, 1);
    return g;
}

const std::vector<OrderingKind> kAllKinds = {OrderingKind::default_order, OrderingKind::degree_descent,
                                             OrderingKind::bfs, OrderingKind::dfs, OrderingKind::kcore};

}  // namespace

TEST_CASE("config validation") {
    CHECK_THROWS_AS(small_config(0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(small_config(4, 0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(small_config(4, 1, 0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(small_config(4, 1, 1, 0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(small_config(4, 3, 1, 1, 2).validate(), std::invalid_argument);  // n_max < B
    CHECK_NOTHROW(small_config().validate());
    // the params constructor validates too
    CHECK_THROWS_AS(GranParams(small_config(0)), std::invalid_argument);
}

TEST_CASE("tied rounds share one parameter set") {
    auto cfg = small_config(4, 1, 1, 3);
    cfg.tie_rounds = true;
    GranParams tied(cfg);
    CHECK(tied.rounds.size() == 1);
    CHECK(&tied.round(0) == &tied.round(2));

    cfg.tie_rounds = false;
    GranParams untied(cfg);
    CHECK(untied.rounds.size() == 3);
    CHECK(&untied.round(0) != &untied.round(2));
}

TEST_CASE("init_node_embeddings") {
    auto cfg = small_config(4, 2, 1, 1, 6);
    GranParams params(cfg);
    Tape tape;

    SECTION("zero parameters embed everything to zero") {
        std::vector<double> rows(2 * 6, 1.0);
        auto h = init_node_embeddings(tape, params, rows, 2, 2);
        CHECK(h.shape() == Shape{4, 4});
        CHECK(h.value() == std::vector<double>(16, 0.0));
    }
    SECTION("block rows are exactly zero for any parameters") {
        Rng rng(2);
        params.init(rng);
        std::vector<double> rows(3 * 6);
        for (auto& v : rows) v = rng.uniform01() < 0.5 ? 1.0 : 0.0;
        auto h = init_node_embeddings(tape, params, rows, 3, 2);
        CHECK(h.shape() == Shape{5, 4});
        for (int i = 3; i < 5; ++i)
            for (int j = 0; j < 4; ++j) CHECK(h.value()[static_cast<std::size_t>(i * 4 + j)] == 0.0);
        // existing rows generally are not zero
        double mag = 0;
        for (int i = 0; i < 12; ++i) mag += std::abs(h.value()[static_cast<std::size_t>(i)]);
        CHECK(mag > 0);
    }
    SECTION("row data must match existing * n_max") {
        std::vector<double> rows(5, 0.0);
        CHECK_THROWS_AS(init_node_embeddings(tape, params, rows, 2, 1), std::invalid_argument);
    }
}

TEST_CASE("build_augmented_graph counts and keeps real edges") {
    auto empty_start = build_augmented_graph({}, 0, 2);
    CHECK(empty_start.num_nodes == 2);
    CHECK(empty_start.edges.size() == 1);

    std::vector<Edge> real = {{0, 1}, {1, 2}};
    auto aug = build_augmented_graph(real, 3, 2);
    CHECK(aug.num_nodes == 5);
    CHECK(aug.edges.size() == real.size() + 7);  // 2*3 block-existing + 1 within block
    CHECK(aug.edges[0] == Edge{0, 1});
    CHECK(aug.edges[1] == Edge{1, 2});
}

TEST_CASE("block context pairs and mask") {
    auto ctx = make_block_context(2, 2, 3);
    CHECK(ctx.pairs == std::vector<Edge>{{2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}});
    // existing nodes carry a zero mask, block nodes a one-of-B position code
    CHECK(ctx.mask == std::vector<double>{0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0});
}

TEST_CASE("message passing with zero message function reduces to GRU(h, 0)") {
    auto cfg = small_config(3, 1, 1, 1, 6);
    GranParams params(cfg);
    Rng rng(5);
    params.round(0).attention.init(rng);
    params.round(0).state.init(rng);
    // message MLP stays zero

    Tape tape;
    std::vector<double> hv(4 * 3);
    for (auto& v : hv) v = rng.uniform(-1, 1);
    auto h = tape.constant({4, 3}, hv);
    auto mask = tape.zeros({4, 1});
    AugmentedGraph aug{4, {{0, 1}, {1, 2}, {2, 3}}};

    auto out = message_passing_round(tape, h, aug, mask, params.round(0));
    auto expected = gru_cell(tape, params.round(0).state, h, tape.zeros({4, 3}));
    for (std::size_t i = 0; i < out.value().size(); ++i)
        CHECK(out.value()[i] == Catch::Approx(expected.value()[i]).margin(1e-12));
}

TEST_CASE("zero attention parameters gate every message by one half") {
    // H = 1 scalar trace: f = 0 except output bias 1 so m_ij = 1; g = 0 so
    // a_ij = 1/2; GRU rigged so h' = (1 - z) tanh(agg) with z ~ 0.
    auto cfg = small_config(1, 1, 1, 1, 6);
    GranParams params(cfg);
    params.round(0).message.b3.value = {1.0};
    params.round(0).state.bz.value = {-40.0};  // z ~ 0
    params.round(0).state.wh.value = {1.0};

    Tape tape;
    auto h = tape.zeros({3, 1});
    auto mask = tape.zeros({3, 1});
    AugmentedGraph aug{3, {{0, 1}, {1, 2}}};  // degrees 1, 2, 1

    auto out = message_passing_round(tape, h, aug, mask, params.round(0));
    CHECK(out.value()[0] == Catch::Approx(std::tanh(0.5 * 1)).epsilon(1e-9));
    CHECK(out.value()[1] == Catch::Approx(std::tanh(0.5 * 2)).epsilon(1e-9));
    CHECK(out.value()[2] == Catch::Approx(std::tanh(0.5 * 1)).epsilon(1e-9));
}

TEST_CASE("message passing is permutation equivariant") {
    Rng rng(11);
    auto cfg = small_config(5, 2, 1, 1, 12);
    GranParams params(cfg);
    params.init(rng);

    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(0, 8));
        auto g = erdos_renyi(n, 0.5, rng);
        std::vector<double> hv(static_cast<std::size_t>(n) * 5);
        for (auto& v : hv) v = rng.uniform(-1, 1);
        std::vector<double> maskv(static_cast<std::size_t>(n) * 2);
        for (auto& v : maskv) v = rng.uniform01() < 0.3 ? 1.0 : 0.0;

        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);  // perm[i] = new label of node i

        std::vector<double> hv2(hv.size()), maskv2(maskv.size());
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 5; ++j) hv2[static_cast<std::size_t>(perm[i] * 5 + j)] = hv[static_cast<std::size_t>(i * 5 + j)];
            for (int j = 0; j < 2; ++j) maskv2[static_cast<std::size_t>(perm[i] * 2 + j)] = maskv[static_cast<std::size_t>(i * 2 + j)];
        }
        AugmentedGraph aug{n, g.edges()};
        AugmentedGraph aug2{n, {}};
        for (const auto& [u, v] : g.edges()) aug2.edges.emplace_back(perm[u], perm[v]);

        Tape tape;
        auto out = message_passing_round(tape, tape.constant({n, 5}, hv), aug, tape.constant({n, 2}, maskv),
                                         params.round(0));
        auto out2 = message_passing_round(tape, tape.constant({n, 5}, hv2), aug2, tape.constant({n, 2}, maskv2),
                                          params.round(0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 5; ++j) {
                const double a = out.value()[static_cast<std::size_t>(i * 5 + j)];
                const double b = out2.value()[static_cast<std::size_t>(perm[i] * 5 + j)];
                CHECK(a == Catch::Approx(b).margin(1e-9));
            }
    }
}

TEST_CASE("output_distribution trivial cases") {
    SECTION("K = 1 forces alpha = [1]") {
        auto cfg = small_config(3, 1, 1, 1);
        GranParams params(cfg);
        Rng rng(3);
        params.init(rng);
        Tape tape;
        auto ctx = make_block_context(2, 1, 1);
        auto h = tape.constant({3, 3}, std::vector<double>(9, 0.25));
        auto dist = output_distribution(tape, h, ctx, params);
        CHECK(dist.alpha.value() == std::vector<double>{1.0});
        CHECK(dist.log_alpha.value()[0] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("zero alpha head gives the uniform mixture") {
        auto cfg = small_config(3, 1, 4, 1);
        GranParams params(cfg);
        Rng rng(3);
        params.theta_head.init(rng);
        Tape tape;
        auto ctx = make_block_context(2, 1, 1);
        auto h = tape.constant({3, 3}, std::vector<double>(9, 0.25));
        auto dist = output_distribution(tape, h, ctx, params);
        for (double a : dist.alpha.value()) CHECK(a == Catch::Approx(0.25));
    }
    SECTION("zero theta head gives all edge probabilities one half") {
        auto cfg = small_config(3, 1, 2, 1);
        GranParams params(cfg);
        Rng rng(3);
        params.alpha_head.init(rng);
        Tape tape;
        auto ctx = make_block_context(3, 1, 1);
        auto h = tape.constant({4, 3}, std::vector<double>(12, -0.5));
        auto dist = output_distribution(tape, h, ctx, params);
        for (double t : dist.theta.value()) CHECK(t == 0.5);
    }
    SECTION("empty candidate set: uniform alpha, empty theta") {
        auto cfg = small_config(3, 1, 4, 1);
        GranParams params(cfg);
        Tape tape;
        auto ctx = make_block_context(0, 1, 1);
        CHECK(ctx.pairs.empty());
        auto dist = output_distribution(tape, tape.zeros({1, 3}), ctx, params);
        CHECK(dist.alpha.value() == std::vector<double>(4, 0.25));
        CHECK(dist.num_pairs() == 0);
        CHECK(block_log_prob(tape, dist, {}).scalar() == 0.0);
    }
}

TEST_CASE("block_log_prob arithmetic") {
    Tape tape;

    SECTION("K = 1, theta one half, c pairs") {
        for (int c = 1; c <= 5; ++c) {
            BlockDistribution dist;
            dist.alpha = tape.constant({1}, {1.0});
            dist.log_alpha = tape.constant({1}, {0.0});
            dist.theta = tape.constant({c, 1}, std::vector<double>(static_cast<std::size_t>(c), 0.5));
            for (int p = 0; p < c; ++p) dist.pairs.emplace_back(p + 1, 0);
            std::vector<std::uint8_t> obs(static_cast<std::size_t>(c), 1);
            CHECK(block_log_prob(tape, dist, obs).scalar() == Catch::Approx(c * std::log(0.5)));
        }
    }
    SECTION("two identical components collapse to K = 1") {
        BlockDistribution dist;
        dist.alpha = tape.constant({2}, {0.3, 0.7});
        dist.log_alpha = tape.constant({2}, {std::log(0.3), std::log(0.7)});
        dist.theta = tape.constant({2, 2}, {0.2, 0.2, 0.9, 0.9});
        dist.pairs = {{1, 0}, {2, 0}};
        const double two = block_log_prob(tape, dist, {1, 0}).scalar();
        const double one = std::log(0.2) + std::log(0.1);
        CHECK(two == Catch::Approx(one).epsilon(1e-12));
    }
    SECTION("hand mixture: alpha (.5, .5), theta (.2, .8), observed 1") {
        BlockDistribution dist;
        dist.alpha = tape.constant({2}, {0.5, 0.5});
        dist.log_alpha = tape.constant({2}, {std::log(0.5), std::log(0.5)});
        dist.theta = tape.constant({1, 2}, {0.2, 0.8});
        dist.pairs = {{1, 0}};
        CHECK(block_log_prob(tape, dist, {1}).scalar() == Catch::Approx(std::log(0.5)));
    }
    SECTION("observed length must match") {
        BlockDistribution dist;
        dist.alpha = tape.constant({1}, {1.0});
        dist.log_alpha = tape.constant({1}, {0.0});
        dist.theta = tape.constant({2, 1}, {0.5, 0.5});
        dist.pairs = {{1, 0}, {2, 1}};
        CHECK_THROWS_AS(block_log_prob(tape, dist, {1}), std::invalid_argument);
    }
}

TEST_CASE("block distributions are normalized: brute-force enumeration") {
    Rng rng(19);
    for (int trial = 0; trial < 8; ++trial) {
        const int K = 1 + static_cast<int>(rng.uniform_int(0, 3));
        const int B = 1 + static_cast<int>(rng.uniform_int(0, 1));
        auto cfg = small_config(4, B, K, 1, 12);
        GranParams params(cfg);
        params.init(rng);

        const int existing = 2 + static_cast<int>(rng.uniform_int(0, 2));
        auto ctx = make_block_context(existing, B, B);
        const int P = static_cast<int>(ctx.pairs.size());
        if (P > 10) continue;

        Tape tape(false);
        std::vector<double> hv(static_cast<std::size_t>(ctx.num_nodes() * 4));
        for (auto& v : hv) v = rng.uniform(-1, 1);
        auto dist = output_distribution(tape, tape.constant({ctx.num_nodes(), 4}, hv), ctx, params);

        double total = 0;
        for (int bits = 0; bits < (1 << P); ++bits) {
            std::vector<std::uint8_t> obs(static_cast<std::size_t>(P));
            for (int p = 0; p < P; ++p) obs[static_cast<std::size_t>(p)] = (bits >> p) & 1;
            total += std::exp(block_log_prob(tape, dist, obs).scalar());
        }
        CHECK(std::abs(total - 1.0) < 1e-8);
    }
}

TEST_CASE("graph_log_prob base cases") {
    SECTION("single node graph scores zero") {
        auto cfg = small_config();
        GranParams params(cfg);
        Rng rng(1);
        params.init(rng);
        Tape tape;
        auto rows = to_ordered_rows(Graph(1), identity_ordering(1), cfg.n_max);
        CHECK(graph_log_prob(tape, rows, params).scalar() == 0.0);
    }
    SECTION("two nodes, one edge, zero parameters: log one half") {
        auto cfg = small_config(4, 1, 1, 1);
        GranParams params(cfg);  // all-zero parameters leave theta at 1/2
        Tape tape;
        auto rows = to_ordered_rows(two_path(), identity_ordering(2), cfg.n_max);
        CHECK(graph_log_prob(tape, rows, params).scalar() == Catch::Approx(std::log(0.5)));
    }
    SECTION("zero-parameter score is -C(n,2) log 2, decreasing with size") {
        auto cfg = small_config(4, 1, 2, 1, 10);
        GranParams params(cfg);
        double prev = 1.0;
        for (int n = 1; n <= 6; ++n) {
            Tape tape;
            Rng rng(static_cast<std::uint64_t>(n));
            auto g = erdos_renyi(n, 0.5, rng);
            auto rows = to_ordered_rows(g, identity_ordering(n), cfg.n_max);
            const double lp = graph_log_prob(tape, rows, params).scalar();
            CHECK(lp == Catch::Approx(-(n * (n - 1) / 2) * std::log(2.0)).margin(1e-9));
            CHECK(lp <= 0.0);
            CHECK(lp <= prev);
            prev = lp;
        }
    }
}

TEST_CASE("batched log-probability agrees with the stepwise reference") {
    Rng rng(59);
    for (int trial = 0; trial < 12; ++trial) {
        GranConfig cfg;
        cfg.hidden_dim = 4;
        cfg.block_size = 1 + static_cast<int>(rng.uniform_int(0, 2));
        cfg.num_mixtures = 1 + static_cast<int>(rng.uniform_int(0, 2));
        cfg.rounds = 1 + static_cast<int>(rng.uniform_int(0, 1));
        cfg.n_max = 10;
        cfg.count_all_rows = rng.bernoulli(0.3);
        GranParams params(cfg);
        params.init(rng);

        const int n = 1 + static_cast<int>(rng.uniform_int(0, 8));
        auto g = erdos_renyi(n, 0.5, rng);
        auto rows = to_ordered_rows(g, identity_ordering(n), cfg.n_max);

        Tape tape(false);
        const double fast = graph_log_prob(tape, rows, params).scalar();
        const double slow = graph_log_prob_stepwise(tape, rows, params).scalar();
        INFO("trial " << trial << " n=" << n << " B=" << cfg.block_size);
        CHECK(fast == Catch::Approx(slow).margin(1e-9));
    }
}

TEST_CASE("family loss definitions and the ordering-family bound") {
    Rng rng(29);
    auto cfg = small_config(4, 2, 2, 2, 10);
    GranParams params(cfg);
    params.init(rng);

    for (int trial = 0; trial < 10; ++trial) {
        Graph g;
        OrderingFamily family;
        do {
            g = erdos_renyi(4 + static_cast<int>(rng.uniform_int(0, 4)), 0.45, rng);
            family = build_family(g, kAllKinds);
        } while (family.size() < 2);

        auto members = family_rows(g, family, cfg.n_max);

        Tape tape;
        std::vector<double> logps;
        for (const auto& rows : members) logps.push_back(graph_log_prob(tape, rows, params).scalar());
        const double loss = family_loss(tape, members, params).scalar();

        // -log sum exp of the member log-probabilities
        double sum = 0;
        for (double lp : logps) sum += std::exp(lp);
        CHECK(loss == Catch::Approx(-std::log(sum)).epsilon(1e-10));

        // tighter than any single-ordering bound, exactly
        const double min_single = -*std::max_element(logps.begin(), logps.end());
        CHECK(loss <= min_single);

        // exp(-loss) >= exp(l_pi) for every member
        for (double lp : logps) CHECK(std::exp(-loss) >= std::exp(lp));

        // posterior: softmax of log-joints, sums to one, ELBO identity
        auto post = posterior_over_orderings(g, family, params);
        REQUIRE(post.size() == logps.size());
        double total = 0, elbo = 0;
        for (std::size_t i = 0; i < post.size(); ++i) {
            total += post[i];
            elbo += post[i] * logps[i];
            if (post[i] > 0) elbo -= post[i] * std::log(post[i]);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
        CHECK(std::abs(elbo - (-loss)) < 1e-9);
    }

    SECTION("singleton family") {
        Graph g = two_path();
        auto family = build_family(g, {OrderingKind::dfs});
        auto members = family_rows(g, family, cfg.n_max);
        Tape tape;
        const double lp = graph_log_prob(tape, members[0], params).scalar();
        CHECK(family_loss(tape, members, params).scalar() == Catch::Approx(-lp));
        CHECK(posterior_over_orderings(g, family, params) == std::vector<double>{1.0});
    }
    SECTION("empty family throws") {
        Tape tape;
        CHECK_THROWS_AS(family_loss(tape, std::vector<OrderedRows>{}, params), std::invalid_argument);
    }
}

TEST_CASE("family_loss gradients match finite differences (spot check)") {
    Rng rng(41);
    auto cfg = small_config(3, 2, 2, 2, 6);
    GranParams params(cfg);

    Graph g;
    OrderingFamily family;
    do {
        g = erdos_renyi(5, 0.5, rng);
        family = build_family(g, kAllKinds);
    } while (family.size() < 2);
    auto members = family_rows(g, family, cfg.n_max);

    double kink = 0;
    do {
        params.init(rng);
        Tape probe(false);
        family_loss(probe, members, params);
        kink = probe.relu_kink_distance();
    } while (kink < 1e-4);

    auto plist = params.parameters();
    for (Param* p : plist) p->zero_grad();
    {
        Tape tape;
        auto loss = family_loss(tape, members, params);
        tape.backward(loss);
        tape.apply_leaf_grads();
    }

    for (Param* p : plist) {
        auto fd = finite_diff_grad(
            [&](const std::vector<double>& vals) {
                auto saved = p->value;
                p->value = vals;
                Tape tape(false);
                const double out = family_loss(tape, members, params).scalar();
                p->value = saved;
                return out;
            },
            p->value, 1e-6);
        for (std::size_t j = 0; j < fd.size(); ++j) {
            INFO(p->name << "[" << j << "]");
            CHECK(std::abs(p->grad[j] - fd[j]) <= 1e-4 * std::max({1.0, std::abs(p->grad[j]), std::abs(fd[j])}));
        }
    }
}
