#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <gran/random.hpp>
#include <gran/tensor.hpp>

namespace gran {

// uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
inline void init_uniform(Param& p, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : p.value) v = rng.uniform(-bound, bound);
}

// Two hidden layers with rectifier activations, linear output layer.
struct MlpParams {
    Param w1, b1, w2, b2, w3, b3;
    int in_dim = 0, hidden_dim = 0, out_dim = 0;

    MlpParams() = default;
    MlpParams(const std::string& prefix, int in, int hidden, int out)
        : w1(prefix + ".w1", {in, hidden}), b1(prefix + ".b1", {hidden}),
          w2(prefix + ".w2", {hidden, hidden}), b2(prefix + ".b2", {hidden}),
          w3(prefix + ".w3", {hidden, out}), b3(prefix + ".b3", {out}),
          in_dim(in), hidden_dim(hidden), out_dim(out) {}

    void init(Rng& rng) {
        init_uniform(w1, in_dim, rng);
        init_uniform(b1, in_dim, rng);
        init_uniform(w2, hidden_dim, rng);
        init_uniform(b2, hidden_dim, rng);
        init_uniform(w3, hidden_dim, rng);
        init_uniform(b3, hidden_dim, rng);
    }

    template <class F>
    void visit(F&& f) {
        f(w1); f(b1); f(w2); f(b2); f(w3); f(b3);
    }
};

inline Tensor mlp_forward(Tape& tape, MlpParams& p, const Tensor& x) {
    auto h1 = relu(add(matmul(x, tape.leaf(p.w1)), tape.leaf(p.b1)));
    auto h2 = relu(add(matmul(h1, tape.leaf(p.w2)), tape.leaf(p.b2)));
    return add(matmul(h2, tape.leaf(p.w3)), tape.leaf(p.b3));
}

// Gated recurrent unit acting on batches of rows:
//   z = sigmoid(m Wz + h Uz + bz)
//   r = sigmoid(m Wr + h Ur + br)
//   c = tanh(m Wh + (r*h) Uh + bh)
//   h' = z*h + (1-z)*c
struct GruParams {
    Param wz, uz, bz, wr, ur, br, wh, uh, bh;
    int input_dim = 0, hidden_dim = 0;

    GruParams() = default;
    GruParams(const std::string& prefix, int input, int hidden)
        : wz(prefix + ".wz", {input, hidden}), uz(prefix + ".uz", {hidden, hidden}), bz(prefix + ".bz", {hidden}),
          wr(prefix + ".wr", {input, hidden}), ur(prefix + ".ur", {hidden, hidden}), br(prefix + ".br", {hidden}),
          wh(prefix + ".wh", {input, hidden}), uh(prefix + ".uh", {hidden, hidden}), bh(prefix + ".bh", {hidden}),
          input_dim(input), hidden_dim(hidden) {}

    void init(Rng& rng) {
        init_uniform(wz, input_dim, rng);
        init_uniform(uz, hidden_dim, rng);
        init_uniform(bz, hidden_dim, rng);
        init_uniform(wr, input_dim, rng);
        init_uniform(ur, hidden_dim, rng);
        init_uniform(br, hidden_dim, rng);
        init_uniform(wh, input_dim, rng);
        init_uniform(uh, hidden_dim, rng);
        init_uniform(bh, hidden_dim, rng);
    }

    template <class F>
    void visit(F&& f) {
        f(wz); f(uz); f(bz); f(wr); f(ur); f(br); f(wh); f(uh); f(bh);
    }
};

inline Tensor gru_cell(Tape& tape, GruParams& p, const Tensor& h, const Tensor& m) {
    auto z = sigmoid(add(add(matmul(m, tape.leaf(p.wz)), matmul(h, tape.leaf(p.uz))), tape.leaf(p.bz)));
    auto r = sigmoid(add(add(matmul(m, tape.leaf(p.wr)), matmul(h, tape.leaf(p.ur))), tape.leaf(p.br)));
    auto c = tanh(add(add(matmul(m, tape.leaf(p.wh)), matmul(mul(r, h), tape.leaf(p.uh))), tape.leaf(p.bh)));
    auto one_minus_z = add(scale(z, -1.0), tape.scalar_constant(1.0));
    return add(mul(z, h), mul(one_minus_z, c));
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are kept parallel to the
// parameter list handed to the constructor; the same list (same order) must
// be passed to every step.
class AdamState {
public:
    AdamState() = default;
    AdamState(AdamConfig cfg, const std::vector<Param*>& params) : cfg_(cfg) {
        for (const Param* p : params) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }

    void step(const std::vector<Param*>& params) {
        if (params.size() != m_.size()) throw std::invalid_argument("AdamState::step: parameter list size changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param& p = *params[i];
            if (p.value.size() != m_[i].size()) throw std::invalid_argument("AdamState::step: shape mismatch for " + p.name);
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    // serialization access
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    void set_step_count(long t) { t_ = t; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Central differences per coordinate: (f(x + eps e_i) - f(x - eps e_i)) / 2eps.
// Test oracle; deliberately independent of the tape machinery.
inline std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& fn,
                                            std::vector<double> x, double eps) {
    if (eps <= 0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + eps;
        const double fp = fn(x);
        x[i] = x0 - eps;
        const double fm = fn(x);
        x[i] = x0;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace gran
