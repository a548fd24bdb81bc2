#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <gran/nn.hpp>
#include <gran/random.hpp>
#include <gran/tensor.hpp>

using namespace gran;

namespace {

std::vector<Param*> collect(MlpParams& p) {
    std::vector<Param*> out;
    p.visit([&](Param& q) { out.push_back(&q); });
    return out;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("mlp_forward zero parameters give zero output") {
    MlpParams p("mlp", 3, 4, 2);
    Tape tape;
    auto x = tape.constant({2, 3}, {0.5, -1.0, 2.0, 1.0, 1.0, 1.0});
    auto y = mlp_forward(tape, p, x);
    CHECK(y.shape() == Shape{2, 2});
    CHECK(y.value() == std::vector<double>(4, 0.0));
}

TEST_CASE("mlp_forward zero weights with output bias is constant") {
    MlpParams p("mlp", 3, 4, 2);
    p.b3.value = {1.5, -2.5};
    Tape tape;
    auto x = tape.constant({3, 3}, std::vector<double>(9, 0.7));
    auto y = mlp_forward(tape, p, x);
    for (int i = 0; i < 3; ++i) {
        CHECK(y.value()[static_cast<std::size_t>(2 * i)] == 1.5);
        CHECK(y.value()[static_cast<std::size_t>(2 * i + 1)] == -2.5);
    }
}

TEST_CASE("mlp_forward shape contract and mismatch error") {
    Rng rng(1);
    MlpParams p("mlp", 5, 7, 3);
    p.init(rng);
    Tape tape;
    auto y = mlp_forward(tape, p, tape.zeros({6, 5}));
    CHECK(y.shape() == Shape{6, 3});
    CHECK_THROWS_AS(mlp_forward(tape, p, tape.zeros({6, 4})), std::invalid_argument);
}

TEST_CASE("gru_cell zero parameters halve the state") {
    GruParams p("gru", 3, 3);
    Tape tape;
    auto h = tape.constant({2, 3}, {1.0, -2.0, 0.5, 4.0, 0.0, -1.0});
    auto m = tape.zeros({2, 3});
    auto out = gru_cell(tape, p, h, m);
    for (std::size_t i = 0; i < 6; ++i) CHECK(out.value()[i] == Catch::Approx(0.5 * h.value()[i]));

    auto zero = gru_cell(tape, p, tape.zeros({2, 3}), tape.zeros({2, 3}));
    CHECK(zero.value() == std::vector<double>(6, 0.0));
}

TEST_CASE("gru_cell matches a scalar hand computation") {
    // H = 1: every weight is a scalar, so the update can be traced by hand
    GruParams p("gru", 1, 1);
    p.wz.value = {0.3};
    p.uz.value = {-0.2};
    p.bz.value = {0.1};
    p.wr.value = {-0.5};
    p.ur.value = {0.4};
    p.br.value = {-0.3};
    p.wh.value = {0.8};
    p.uh.value = {0.6};
    p.bh.value = {0.05};
    const double hv = 0.7, mv = -1.2;

    const double z = sigmoid_ref(mv * 0.3 + hv * -0.2 + 0.1);
    const double r = sigmoid_ref(mv * -0.5 + hv * 0.4 - 0.3);
    const double c = std::tanh(mv * 0.8 + r * hv * 0.6 + 0.05);
    const double expected = z * hv + (1.0 - z) * c;

    Tape tape;
    auto out = gru_cell(tape, p, tape.constant({1, 1}, {hv}), tape.constant({1, 1}, {mv}));
    CHECK(out.value()[0] == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam with zero gradients is a fixed point") {
    MlpParams p("mlp", 2, 3, 1);
    Rng rng(4);
    p.init(rng);
    auto params = collect(p);
    const auto before = p.w1.value;
    AdamState adam(AdamConfig{}, params);
    for (auto* q : params) q->zero_grad();
    for (int i = 0; i < 5; ++i) adam.step(params);
    CHECK(p.w1.value == before);
    CHECK(adam.step_count() == 5);
}

TEST_CASE("adam first step moves by about lr for any nonzero gradient") {
    Param p("p", {3});
    p.value = {1.0, -2.0, 0.5};
    p.grad = {10.0, -0.3, 1e-3};
    std::vector<Param*> params{&p};
    AdamConfig cfg;
    cfg.lr = 1e-2;
    AdamState adam(cfg, params);
    const auto before = p.value;
    adam.step(params);
    for (int i = 0; i < 3; ++i) {
        const double move = p.value[static_cast<std::size_t>(i)] - before[static_cast<std::size_t>(i)];
        // bias-corrected first step: -lr * g / (|g| + eps')
        CHECK(std::abs(move) == Catch::Approx(cfg.lr).epsilon(1e-3));
        CHECK(std::signbit(move) == !std::signbit(p.grad[static_cast<std::size_t>(i)]));
    }
}

TEST_CASE("adam two steps with constant gradient match a scalar trace") {
    Param p("p", {});
    p.value = {1.0};
    p.grad = {0.4};
    std::vector<Param*> params{&p};
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState adam(cfg, params);

    // hand-rolled scalar adam
    double x = 1.0, m = 0.0, v = 0.0;
    const double g = 0.4;
    for (int t = 1; t <= 2; ++t) {
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double mhat = m / (1 - std::pow(cfg.beta1, t));
        const double vhat = v / (1 - std::pow(cfg.beta2, t));
        x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }

    adam.step(params);
    adam.step(params);
    CHECK(p.value[0] == Catch::Approx(x).epsilon(1e-14));
}

TEST_CASE("finite_diff_grad basics") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    auto g = finite_diff_grad(square, {1.0}, 1e-5);
    CHECK(std::abs(g[0] - 2.0) < 1e-8);

    auto constant = [](const std::vector<double>&) { return 3.0; };
    auto gc = finite_diff_grad(constant, {0.3, -0.7}, 1e-5);
    CHECK(gc == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(finite_diff_grad(square, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("mlp and gru gradients match finite differences") {
    Rng rng(77);
    MlpParams mlp("mlp", 2, 3, 2);
    mlp.init(rng);
    GruParams gru("gru", 2, 2);
    gru.init(rng);
    Param x("x", {3, 2});
    for (auto& v : x.value) v = rng.uniform(-1.0, 1.0);

    std::vector<Param*> all{&x};
    mlp.visit([&](Param& p) { all.push_back(&p); });
    gru.visit([&](Param& p) { all.push_back(&p); });

    auto forward = [&](bool with_grad) {
        Tape tape(with_grad);
        auto xt = tape.leaf(x);
        auto h = mlp_forward(tape, mlp, xt);
        auto out = gru_cell(tape, gru, h, xt);
        auto loss = sum_all(sigmoid(out));
        if (with_grad) {
            tape.backward(loss);
            tape.apply_leaf_grads();
        }
        return std::pair(loss.scalar(), tape.relu_kink_distance());
    };

    for (auto* p : all) p->zero_grad();
    const auto [loss0, kink] = forward(true);
    REQUIRE(kink > 1e-4);  // seed chosen away from relu kinks
    CHECK(std::isfinite(loss0));

    for (auto* p : all) {
        auto fd = finite_diff_grad(
            [&](const std::vector<double>& vals) {
                auto saved = p->value;
                p->value = vals;
                const double out = forward(false).first;
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
