#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include <gran/checkpoint.hpp>
#include <gran/generators.hpp>
#include <gran/model.hpp>
#include <gran/sampler.hpp>
#include <gran/trainer.hpp>

using namespace gran;

namespace {

GranConfig tiny_config(int B, int n_max, int H = 4, int K = 2, int R = 1) {
    GranConfig cfg;
    cfg.block_size = B;
    cfg.n_max = n_max;
    cfg.hidden_dim = H;
    cfg.num_mixtures = K;
    cfg.rounds = R;
    return cfg;
}

}  // namespace

TEST_CASE("sample_step_count closed form") {
    CHECK(sample_step_count(3, 1, 1) == 3);
    CHECK(sample_step_count(10, 4, 2) == 4);
    CHECK(sample_step_count(64, 16, 1) == 49);
    CHECK(sample_step_count(64, 16, 16) == 4);
    CHECK(sample_step_count(5, 16, 4) == 1);
}

TEST_CASE("sampler invocation count equals the closed form on random triples") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 19));
        const int B = 1 + static_cast<int>(rng.uniform_int(0, std::min(n, 6) - 1));
        const int S = 1 + static_cast<int>(rng.uniform_int(0, B - 1));
        auto cfg = tiny_config(B, 24, 3, 1);
        GranParams params(cfg);
        Rng init_rng(trial);
        params.init(init_rng);
        Rng sample_rng(trial + 1000);
        auto result = sample_graph(params, S, n, sample_rng);
        INFO("n=" << n << " B=" << B << " S=" << S);
        CHECK(result.invocations == sample_step_count(n, B, S));
        CHECK(result.graph.num_nodes() == n);
    }
}

TEST_CASE("sampler rejects bad strides and sizes") {
    auto cfg = tiny_config(2, 8);
    GranParams params(cfg);
    Rng rng(1);
    CHECK_THROWS_AS(sample_graph(params, 3, 5, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_graph(params, 0, 5, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_graph(params, 1, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_graph(params, 1, 9, rng), std::invalid_argument);  // beyond n_max
}

TEST_CASE("theta pinned at one emits the complete graph") {
    auto cfg = tiny_config(2, 8, 4, 3);
    GranParams params(cfg);
    // huge output bias drives every component's edge probability to ~1
    for (auto& v : params.theta_head.b3.value) v = 50.0;
    Rng rng(3);
    auto res = sample_graph(params, 2, 6, rng, SampleMode::threshold);
    CHECK(res.graph.num_edges() == 15);
    Rng rng2(4);
    auto res2 = sample_graph(params, 1, 5, rng2, SampleMode::stochastic);
    CHECK(res2.graph.num_edges() == 10);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
    auto cfg = tiny_config(2, 12, 4, 2, 2);
    GranParams params(cfg);
    Rng init(9);
    params.init(init);
    Rng a(123), b(123);
    auto ra = sample_graph(params, 1, 10, a);
    auto rb = sample_graph(params, 1, 10, b);
    CHECK(ra.graph == rb.graph);
    CHECK(ra.invocations == rb.invocations);
}

TEST_CASE("sample_size draws from the empirical size multiset") {
    Rng rng(5);
    CHECK(sample_size({9}, rng) == 9);
    for (int i = 0; i < 10; ++i) CHECK(sample_size({9}, rng) == 9);

    std::vector<int> sizes{4, 4, 8};
    int fours = 0;
    const int draws = 30000;
    for (int i = 0; i < draws; ++i)
        if (sample_size(sizes, rng) == 4) ++fours;
    CHECK(std::abs(fours / static_cast<double>(draws) - 2.0 / 3.0) < 0.02);

    Rng r1(7), r2(7);
    for (int i = 0; i < 20; ++i) CHECK(sample_size(sizes, r1) == sample_size(sizes, r2));
    CHECK_THROWS_AS(sample_size({}, rng), std::invalid_argument);
}

TEST_CASE("largest component post-processing") {
    auto cfg = tiny_config(1, 8, 3, 1);
    GranParams params(cfg);
    // zero parameters: every edge appears with probability 1/2; just check
    // the flag yields a connected graph
    Rng rng(17);
    auto res = sample_graph(params, 1, 8, rng, SampleMode::stochastic, true);
    const auto adj = res.graph.adjacency();
    std::vector<char> seen(res.graph.num_nodes(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 0;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        ++count;
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
    }
    CHECK(count == res.graph.num_nodes());
}

TEST_CASE("trainer: zero learning rate leaves parameters unchanged") {
    GraphDataset ds;
    ds.add(grid_graph(3, 3));
    DatasetSplit split;
    split.train = {0};

    auto cfg = tiny_config(1, 9, 4, 2);
    TrainOptions opt;
    opt.steps = 5;
    opt.lr = 0.0;
    opt.seed = 3;
    Trainer trainer(ds, split, cfg, opt);
    const auto before = trainer.params().embed_w.value;
    auto result = trainer.run();
    CHECK(result.last.embed_w.value == before);
    CHECK(result.final_step == 5);
    CHECK(result.log.size() == 5);
}

TEST_CASE("trainer is deterministic: same seed, same log") {
    GraphDataset ds;
    ds.add(grid_graph(2, 3));
    ds.add(grid_graph(3, 2));
    ds.add(grid_graph(2, 2));
    DatasetSplit split;
    split.train = {0, 1};
    split.validation = {2};

    auto cfg = tiny_config(1, 6, 4, 2);
    TrainOptions opt;
    opt.steps = 8;
    opt.lr = 1e-3;
    opt.seed = 11;
    opt.val_interval = 4;
    opt.batch_size = 2;

    Trainer a(ds, split, cfg, opt), b(ds, split, cfg, opt);
    auto ra = a.run(), rb = b.run();
    REQUIRE(ra.log.size() == rb.log.size());
    for (std::size_t i = 0; i < ra.log.size(); ++i) {
        CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
        CHECK(ra.log[i].has_val == rb.log[i].has_val);
        CHECK(ra.log[i].val_loss == rb.log[i].val_loss);
    }
    CHECK(ra.last.embed_w.value == rb.last.embed_w.value);
}

TEST_CASE("200 steps on a single 3x3 grid at least halve the loss") {
    GraphDataset ds;
    ds.add(grid_graph(3, 3));
    DatasetSplit split;
    split.train = {0};

    GranConfig cfg;
    cfg.block_size = 1;
    cfg.hidden_dim = 16;
    cfg.rounds = 2;
    cfg.num_mixtures = 4;
    cfg.n_max = 9;

    TrainOptions opt;
    opt.steps = 200;
    opt.lr = 1e-3;
    opt.seed = 1;
    opt.batch_size = 1;
    Trainer trainer(ds, split, cfg, opt);
    auto result = trainer.run();
    const double initial = result.log.front().train_loss;
    const double final_loss = result.log.back().train_loss;
    CHECK(final_loss < 0.5 * initial);
}

TEST_CASE("non-finite parameters abort training with the step in the message") {
    GraphDataset ds;
    ds.add(grid_graph(2, 2));
    DatasetSplit split;
    split.train = {0};
    auto cfg = tiny_config(1, 4, 3, 1);
    TrainOptions opt;
    opt.steps = 3;
    opt.seed = 2;
    Trainer trainer(ds, split, cfg, opt);
    // poison a parameter downstream of every rectifier so the loss goes NaN
    trainer.params().theta_head.b3.value[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH(trainer.run(), Catch::Matchers::ContainsSubstring("step 1"));
}

TEST_CASE("checkpoint roundtrip with optimizer state") {
    auto dir = std::filesystem::temp_directory_path() / "gran_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.bin";

    auto cfg = tiny_config(2, 10, 5, 3, 2);
    GranParams params(cfg);
    Rng rng(13);
    params.init(rng);
    AdamState adam(AdamConfig{2e-3}, params.parameters());
    for (Param* p : params.parameters()) {
        for (auto& g : p->grad) g = rng.uniform(-1, 1);
    }
    adam.step(params.parameters());

    nlohmann::json extra;
    extra["train_sizes"] = std::vector<int>{4, 7, 9};
    save_model_checkpoint(path, params, &adam, 17, extra);

    auto loaded = load_model_checkpoint(path);
    CHECK(loaded.step == 17);
    CHECK(loaded.has_adam);
    CHECK(loaded.adam.step_count() == 1);
    CHECK(loaded.adam.config().lr == 2e-3);
    CHECK(loaded.params.cfg.hidden_dim == 5);
    CHECK(loaded.params.cfg.block_size == 2);
    CHECK(loaded.extra.at("train_sizes").get<std::vector<int>>() == std::vector<int>{4, 7, 9});

    auto orig = params.parameters();
    auto back = loaded.params.parameters();
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i]->name == back[i]->name);
        CHECK(orig[i]->value == back[i]->value);
    }
    CHECK(adam.first_moments() == loaded.adam.first_moments());
    CHECK(adam.second_moments() == loaded.adam.second_moments());

    // resumed sampling matches the original parameters
    Rng s1(5), s2(5);
    auto g1 = sample_graph(params, 1, 8, s1);
    auto g2 = sample_graph(loaded.params, 1, 8, s2);
    CHECK(g1.graph == g2.graph);

    std::ofstream(dir / "junk.bin") << "not a checkpoint\n";
    CHECK_THROWS_WITH(load_model_checkpoint(dir / "junk.bin"), Catch::Matchers::ContainsSubstring("not a checkpoint"));
}
