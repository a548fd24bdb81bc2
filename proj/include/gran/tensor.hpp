#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gran {

using Shape = std::vector<int>;

inline int numel(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// A persistent learnable array. Values survive across tapes; gradients are
// accumulated into `grad` by Tape::apply_leaf_grads after a backward pass.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    Param(std::string name_, Shape shape_)
        : name(std::move(name_)), shape(std::move(shape_)),
          value(static_cast<std::size_t>(numel(shape)), 0.0),
          grad(static_cast<std::size_t>(numel(shape)), 0.0) {}

    int size() const { return numel(shape); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

namespace detail {

// C (n x m) += A (n x k) * B (k x m)
inline void gemm_acc_nn(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* Ai = A + static_cast<std::size_t>(i) * k;
        double* Ci = C + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double a = Ai[p];
            const double* Bp = B + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) Ci[j] += a * Bp[j];
        }
    }
}

// C (n x p) += A (n x q) * B^T, with B stored as (p x q)
inline void gemm_acc_nt(const double* A, const double* B, double* C, int n, int q, int p) {
    for (int i = 0; i < n; ++i) {
        const double* Ai = A + static_cast<std::size_t>(i) * q;
        double* Ci = C + static_cast<std::size_t>(i) * p;
        for (int j = 0; j < p; ++j) {
            const double* Bj = B + static_cast<std::size_t>(j) * q;
            double acc = 0;
            for (int t = 0; t < q; ++t) acc += Ai[t] * Bj[t];
            Ci[j] += acc;
        }
    }
}

// C (k x m) += A^T * B, with A stored as (n x k), B as (n x m)
inline void gemm_acc_tn(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* Ai = A + static_cast<std::size_t>(i) * k;
        const double* Bi = B + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double a = Ai[p];
            double* Cp = C + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) Cp[j] += a * Bi[j];
        }
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

class Tape;

// Lightweight handle to a node on a tape.
class Tensor {
public:
    Tensor() = default;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    bool requires_grad() const;

    double scalar() const {
        const auto& v = value();
        if (v.size() != 1) throw std::invalid_argument("Tensor::scalar: tensor has " + std::to_string(v.size()) + " elements");
        return v[0];
    }

    int rows() const { return shape().empty() ? 1 : shape()[0]; }
    int cols() const { return shape().size() < 2 ? 1 : shape()[1]; }
    bool defined() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, int idx) : tape_(tape), idx_(idx) {}
    Tape* tape_ = nullptr;
    int idx_ = -1;
};

// Records every operation in execution order (which is a topological order
// of the data-flow graph); backward replays that list once in reverse.
// One backward pass per tape.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }

    // Smallest |x| ever fed to relu on this tape; lets gradient-check tests
    // resample inputs that sit on the kink.
    double relu_kink_distance() const { return relu_kink_distance_; }

    Tensor constant(Shape shape, std::vector<double> data) {
        if (static_cast<int>(data.size()) != numel(shape))
            throw std::invalid_argument("Tape::constant: data size does not match shape " + shape_str(shape));
        return make_node(std::move(shape), std::move(data), false);
    }

    Tensor scalar_constant(double v) { return make_node({}, {v}, false); }

    Tensor zeros(Shape shape) {
        const int n = numel(shape);
        return make_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), false);
    }

    // Bind a parameter to the tape. Repeated calls for the same parameter
    // return the same node, so its gradient accumulates in one buffer.
    Tensor leaf(Param& p) {
        if (auto it = leaf_cache_.find(&p); it != leaf_cache_.end()) return Tensor(this, it->second);
        Tensor t = make_node(p.shape, p.value, grad_enabled_);
        node(t).param = &p;
        leaf_cache_.emplace(&p, t.idx_);
        leaves_.push_back(t.idx_);
        return t;
    }

    void backward(const Tensor& loss) {
        check_mine("backward", loss);
        if (numel(node(loss).shape) != 1) throw std::invalid_argument("Tape::backward: loss must be a scalar");
        if (!grad_enabled_) throw std::logic_error("Tape::backward: tape was created with gradients disabled");
        if (backward_done_) throw std::logic_error("Tape::backward: backward already ran on this tape");
        backward_done_ = true;
        Node& ln = node(loss);
        if (!ln.requires_grad) return;  // loss does not depend on any parameter
        ln.grad[0] = 1.0;
        for (int i = loss.idx_; i >= 0; --i)
            if (nodes_[i]->backward) nodes_[i]->backward();
    }

    // Param.grad += gradient of each bound leaf.
    void apply_leaf_grads() {
        for (int idx : leaves_) {
            Node& n = *nodes_[idx];
            if (!n.requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
        }
    }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // allocated only when requires_grad
        bool requires_grad = false;
        Param* param = nullptr;
        std::function<void()> backward;
    };

    std::vector<std::unique_ptr<Node>> nodes_;
    std::unordered_map<const Param*, int> leaf_cache_;
    std::vector<int> leaves_;
    bool grad_enabled_;
    bool backward_done_ = false;
    double relu_kink_distance_ = std::numeric_limits<double>::infinity();

    Node& node(const Tensor& t) { return *nodes_[t.idx_]; }
    const Node& node(const Tensor& t) const { return *nodes_[t.idx_]; }

    Tensor make_node(Shape shape, std::vector<double> value, bool requires_grad) {
        auto n = std::make_unique<Node>();
        n->shape = std::move(shape);
        n->value = std::move(value);
        n->requires_grad = requires_grad && grad_enabled_;
        if (n->requires_grad) n->grad.assign(n->value.size(), 0.0);
        nodes_.push_back(std::move(n));
        return Tensor(this, static_cast<int>(nodes_.size()) - 1);
    }

    void check_mine(const char* op, const Tensor& t) const {
        if (t.tape_ != this) throw std::logic_error(std::string(op) + ": tensor belongs to a different tape");
    }

    static Tape* tape_of(const char* op, const Tensor& a) {
        if (!a.tape_) throw std::logic_error(std::string(op) + ": tensor is not bound to a tape");
        return a.tape_;
    }

    friend class Tensor;

    // elementwise binary ops with the restricted broadcasts the model needs:
    // same shape, scalar b, row-vector b over a matrix, column b over a matrix
    enum class Bcast { same, scalar, row, col };

    static Bcast bcast_kind(const char* op, const Shape& a, const Shape& b) {
        if (a == b) return Bcast::same;
        if (numel(b) == 1 && b.size() <= 1) return Bcast::scalar;
        if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Bcast::row;
        if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) return Bcast::col;
        shape_error(op, a, b);
    }

    template <class Fwd>
    Tensor binary_op(const char* op, const Tensor& ta, const Tensor& tb, Fwd fwd,
                     // adjoint factors: d out / d a and d out / d b as +-1 (add/sub) or value-dependent (mul)
                     bool is_mul, double sign_b) {
        check_mine(op, ta);
        check_mine(op, tb);
        Node& na = node(ta);
        Node& nb = node(tb);
        const Bcast k = bcast_kind(op, na.shape, nb.shape);
        const int n = na.shape.empty() ? 1 : na.shape[0];
        const int m = na.shape.size() < 2 ? (na.shape.empty() ? 1 : numel(na.shape) / n) : na.shape[1];

        std::vector<double> out(na.value.size());
        const auto bval = [&](int i, int j) -> double {
            switch (k) {
                case Bcast::same: return nb.value[static_cast<std::size_t>(i) * m + j];
                case Bcast::scalar: return nb.value[0];
                case Bcast::row: return nb.value[j];
                case Bcast::col: return nb.value[i];
            }
            return 0;
        };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const std::size_t off = static_cast<std::size_t>(i) * m + j;
                out[off] = fwd(na.value[off], bval(i, j));
            }

        Tensor tout = make_node(na.shape, std::move(out), na.requires_grad || nb.requires_grad);
        Node& no = node(tout);
        if (no.requires_grad) {
            Node* pa = &na;
            Node* pb = &nb;
            Node* po = &no;
            no.backward = [pa, pb, po, k, n, m, is_mul, sign_b]() {
                const auto bval = [&](int i, int j) -> double {
                    switch (k) {
                        case Bcast::same: return pb->value[static_cast<std::size_t>(i) * m + j];
                        case Bcast::scalar: return pb->value[0];
                        case Bcast::row: return pb->value[j];
                        case Bcast::col: return pb->value[i];
                    }
                    return 0;
                };
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) {
                        const std::size_t off = static_cast<std::size_t>(i) * m + j;
                        const double g = po->grad[off];
                        if (pa->requires_grad) pa->grad[off] += is_mul ? g * bval(i, j) : g;
                        if (pb->requires_grad) {
                            const double gb = is_mul ? g * pa->value[off] : g * sign_b;
                            switch (k) {
                                case Bcast::same: pb->grad[off] += gb; break;
                                case Bcast::scalar: pb->grad[0] += gb; break;
                                case Bcast::row: pb->grad[j] += gb; break;
                                case Bcast::col: pb->grad[i] += gb; break;
                            }
                        }
                    }
            };
        }
        return tout;
    }

    template <class Fwd, class Dfn>
    Tensor unary_op(const char* op, const Tensor& ta, Fwd fwd, Dfn dval) {
        check_mine(op, ta);
        Node& na = node(ta);
        std::vector<double> out(na.value.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(na.value[i]);
        Tensor tout = make_node(na.shape, std::move(out), na.requires_grad);
        Node& no = node(tout);
        if (no.requires_grad) {
            Node* pa = &na;
            Node* po = &no;
            no.backward = [pa, po, dval]() {
                for (std::size_t i = 0; i < po->grad.size(); ++i)
                    pa->grad[i] += po->grad[i] * dval(pa->value[i], po->value[i]);
            };
        }
        return tout;
    }

public:
    friend Tensor matmul(const Tensor& a, const Tensor& b);
    friend Tensor add(const Tensor& a, const Tensor& b);
    friend Tensor sub(const Tensor& a, const Tensor& b);
    friend Tensor mul(const Tensor& a, const Tensor& b);
    friend Tensor scale(const Tensor& a, double c);
    friend Tensor relu(const Tensor& a);
    friend Tensor sigmoid(const Tensor& a);
    friend Tensor tanh(const Tensor& a);
    friend Tensor log(const Tensor& a);
    friend Tensor exp(const Tensor& a);
    friend Tensor clamp(const Tensor& a, double lo, double hi);
    friend Tensor softmax(const Tensor& a);
    friend Tensor sum_all(const Tensor& a);
    friend Tensor sum_over_rows(const Tensor& a);
    friend Tensor logsumexp(const Tensor& a);
    friend Tensor logsumexp_rows(const Tensor& a);
    friend Tensor concat_cols(const Tensor& a, const Tensor& b);
    friend Tensor concat_rows(const Tensor& a, const Tensor& b);
    friend Tensor gather_rows(const Tensor& a, std::vector<int> idx);
    friend Tensor segment_sum(const Tensor& a, std::vector<int> idx, int num_segments);
    friend Tensor stack_scalars(const std::vector<Tensor>& xs);
};

inline const Shape& Tensor::shape() const { return tape_->node(*this).shape; }
inline const std::vector<double>& Tensor::value() const { return tape_->node(*this).value; }
inline const std::vector<double>& Tensor::grad() const { return tape_->node(*this).grad; }
inline bool Tensor::requires_grad() const { return tape_->node(*this).requires_grad; }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape* tape = Tape::tape_of("matmul", a);
    tape->check_mine("matmul", b);
    auto& na = tape->node(a);
    auto& nb = tape->node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        shape_error("matmul", na.shape, nb.shape);
    const int n = na.shape[0], k = na.shape[1], m = nb.shape[1];
    std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
    detail::gemm_acc_nn(na.value.data(), nb.value.data(), out.data(), n, k, m);
    Tensor tout = tape->make_node({n, m}, std::move(out), na.requires_grad || nb.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* pb = &nb;
        auto* po = &no;
        no.backward = [pa, pb, po, n, k, m]() {
            if (pa->requires_grad) detail::gemm_acc_nt(po->grad.data(), pb->value.data(), pa->grad.data(), n, m, k);
            if (pb->requires_grad) detail::gemm_acc_tn(pa->value.data(), po->grad.data(), pb->grad.data(), n, k, m);
        };
    }
    return tout;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return Tape::tape_of("add", a)->binary_op("add", a, b, [](double x, double y) { return x + y; }, false, 1.0);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return Tape::tape_of("sub", a)->binary_op("sub", a, b, [](double x, double y) { return x - y; }, false, -1.0);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return Tape::tape_of("mul", a)->binary_op("mul", a, b, [](double x, double y) { return x * y; }, true, 1.0);
}

inline Tensor scale(const Tensor& a, double c) {
    return Tape::tape_of("scale", a)->unary_op("scale", a,
        [c](double x) { return c * x; },
        [c](double, double) { return c; });
}

inline Tensor relu(const Tensor& a) {
    Tape* tape = Tape::tape_of("relu", a);
    for (double x : tape->node(a).value)
        tape->relu_kink_distance_ = std::min(tape->relu_kink_distance_, std::abs(x));
    // subgradient at 0 is 0
    return tape->unary_op("relu", a,
        [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
    return Tape::tape_of("sigmoid", a)->unary_op("sigmoid", a,
        [](double x) { return detail::stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return Tape::tape_of("tanh", a)->unary_op("tanh", a,
        [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor log(const Tensor& a) {
    Tape* tape = Tape::tape_of("log", a);
    for (double x : tape->node(a).value)
        if (x <= 0) throw std::domain_error("log: non-positive input " + std::to_string(x));
    return tape->unary_op("log", a,
        [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

inline Tensor exp(const Tensor& a) {
    return Tape::tape_of("exp", a)->unary_op("exp", a,
        [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

// Gradient passes through inside [lo, hi] and is zero where the value was cut.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    return Tape::tape_of("clamp", a)->unary_op("clamp", a,
        [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// softmax over the last axis (vector, or each row of a matrix)
inline Tensor softmax(const Tensor& a) {
    Tape* tape = Tape::tape_of("softmax", a);
    auto& na = tape->node(a);
    if (na.shape.empty() || na.shape.size() > 2) shape_error("softmax", na.shape, {});
    const int rows = na.shape.size() == 2 ? na.shape[0] : 1;
    const int m = na.shape.back();
    std::vector<double> out(na.value.size());
    for (int i = 0; i < rows; ++i) {
        const double* x = na.value.data() + static_cast<std::size_t>(i) * m;
        double* y = out.data() + static_cast<std::size_t>(i) * m;
        double mx = x[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, x[j]);
        double total = 0;
        for (int j = 0; j < m; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (int j = 0; j < m; ++j) y[j] /= total;
    }
    Tensor tout = tape->make_node(na.shape, std::move(out), na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        no.backward = [pa, po, rows, m]() {
            for (int i = 0; i < rows; ++i) {
                const double* s = po->value.data() + static_cast<std::size_t>(i) * m;
                const double* g = po->grad.data() + static_cast<std::size_t>(i) * m;
                double dot = 0;
                for (int j = 0; j < m; ++j) dot += s[j] * g[j];
                double* ga = pa->grad.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) ga[j] += s[j] * (g[j] - dot);
            }
        };
    }
    return tout;
}

inline Tensor sum_all(const Tensor& a) {
    Tape* tape = Tape::tape_of("sum_all", a);
    auto& na = tape->node(a);
    double total = 0;
    for (double x : na.value) total += x;
    Tensor tout = tape->make_node({}, {total}, na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        no.backward = [pa, po]() {
            const double g = po->grad[0];
            for (auto& v : pa->grad) v += g;
        };
    }
    return tout;
}

// (n, m) -> (m,): sums the rows together
inline Tensor sum_over_rows(const Tensor& a) {
    Tape* tape = Tape::tape_of("sum_over_rows", a);
    auto& na = tape->node(a);
    if (na.shape.size() != 2) shape_error("sum_over_rows", na.shape, {});
    const int n = na.shape[0], m = na.shape[1];
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out[j] += na.value[static_cast<std::size_t>(i) * m + j];
    Tensor tout = tape->make_node({m}, std::move(out), na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        no.backward = [pa, po, n, m]() {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) pa->grad[static_cast<std::size_t>(i) * m + j] += po->grad[j];
        };
    }
    return tout;
}

// overflow-safe per-row log-sum-exp: (n, m) -> (n, 1)
inline Tensor logsumexp_rows(const Tensor& a) {
    Tape* tape = Tape::tape_of("logsumexp_rows", a);
    auto& na = tape->node(a);
    if (na.shape.size() != 2 || na.shape[1] < 1) shape_error("logsumexp_rows", na.shape, {});
    const int n = na.shape[0], m = na.shape[1];
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* x = na.value.data() + static_cast<std::size_t>(i) * m;
        double mx = x[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, x[j]);
        double total = 0;
        for (int j = 0; j < m; ++j) total += std::exp(x[j] - mx);
        out[static_cast<std::size_t>(i)] = mx + std::log(total);
    }
    Tensor tout = tape->make_node({n, 1}, std::move(out), na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        no.backward = [pa, po, n, m]() {
            for (int i = 0; i < n; ++i) {
                const double g = po->grad[static_cast<std::size_t>(i)];
                const double lse = po->value[static_cast<std::size_t>(i)];
                const double* x = pa->value.data() + static_cast<std::size_t>(i) * m;
                double* ga = pa->grad.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) ga[j] += g * std::exp(x[j] - lse);
            }
        };
    }
    return tout;
}

// overflow-safe log(sum(exp(v))) of a vector, as a scalar
inline Tensor logsumexp(const Tensor& a) {
    Tape* tape = Tape::tape_of("logsumexp", a);
    auto& na = tape->node(a);
    if (na.shape.size() != 1 || na.shape[0] < 1) shape_error("logsumexp", na.shape, {});
    double mx = na.value[0];
    for (double x : na.value) mx = std::max(mx, x);
    double total = 0;
    for (double x : na.value) total += std::exp(x - mx);
    const double lse = mx + std::log(total);
    Tensor tout = tape->make_node({}, {lse}, na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        no.backward = [pa, po]() {
            const double g = po->grad[0];
            const double lse = po->value[0];
            for (std::size_t i = 0; i < pa->grad.size(); ++i)
                pa->grad[i] += g * std::exp(pa->value[i] - lse);
        };
    }
    return tout;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    Tape* tape = Tape::tape_of("concat_cols", a);
    tape->check_mine("concat_cols", b);
    auto& na = tape->node(a);
    auto& nb = tape->node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[0] != nb.shape[0])
        shape_error("concat_cols", na.shape, nb.shape);
    const int n = na.shape[0], p = na.shape[1], q = nb.shape[1];
    std::vector<double> out(static_cast<std::size_t>(n) * (p + q));
    for (int i = 0; i < n; ++i) {
        std::copy_n(na.value.data() + static_cast<std::size_t>(i) * p, p, out.data() + static_cast<std::size_t>(i) * (p + q));
        std::copy_n(nb.value.data() + static_cast<std::size_t>(i) * q, q, out.data() + static_cast<std::size_t>(i) * (p + q) + p);
    }
    Tensor tout = tape->make_node({n, p + q}, std::move(out), na.requires_grad || nb.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* pb = &nb;
        auto* po = &no;
        no.backward = [pa, pb, po, n, p, q]() {
            for (int i = 0; i < n; ++i) {
                const double* g = po->grad.data() + static_cast<std::size_t>(i) * (p + q);
                if (pa->requires_grad)
                    for (int j = 0; j < p; ++j) pa->grad[static_cast<std::size_t>(i) * p + j] += g[j];
                if (pb->requires_grad)
                    for (int j = 0; j < q; ++j) pb->grad[static_cast<std::size_t>(i) * q + j] += g[p + j];
            }
        };
    }
    return tout;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    Tape* tape = Tape::tape_of("concat_rows", a);
    tape->check_mine("concat_rows", b);
    auto& na = tape->node(a);
    auto& nb = tape->node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
        shape_error("concat_rows", na.shape, nb.shape);
    const int n = na.shape[0], p = nb.shape[0], m = na.shape[1];
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n + p) * m);
    out.insert(out.end(), na.value.begin(), na.value.end());
    out.insert(out.end(), nb.value.begin(), nb.value.end());
    Tensor tout = tape->make_node({n + p, m}, std::move(out), na.requires_grad || nb.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* pb = &nb;
        auto* po = &no;
        no.backward = [pa, pb, po]() {
            const std::size_t na_size = pa->value.size();
            if (pa->requires_grad)
                for (std::size_t i = 0; i < na_size; ++i) pa->grad[i] += po->grad[i];
            if (pb->requires_grad)
                for (std::size_t i = 0; i < pb->value.size(); ++i) pb->grad[i] += po->grad[na_size + i];
        };
    }
    return tout;
}

inline Tensor gather_rows(const Tensor& a, std::vector<int> idx) {
    Tape* tape = Tape::tape_of("gather_rows", a);
    auto& na = tape->node(a);
    if (na.shape.size() != 2) shape_error("gather_rows", na.shape, {});
    const int n = na.shape[0], m = na.shape[1];
    for (int i : idx)
        if (i < 0 || i >= n) throw std::invalid_argument("gather_rows: index " + std::to_string(i) + " out of range for " + std::to_string(n) + " rows");
    const int p = static_cast<int>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(p) * m);
    for (int i = 0; i < p; ++i)
        std::copy_n(na.value.data() + static_cast<std::size_t>(idx[i]) * m, m, out.data() + static_cast<std::size_t>(i) * m);
    Tensor tout = tape->make_node({p, m}, std::move(out), na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        auto ix = std::make_shared<std::vector<int>>(std::move(idx));
        no.backward = [pa, po, ix, m]() {
            for (std::size_t i = 0; i < ix->size(); ++i) {
                const double* g = po->grad.data() + i * m;
                double* ga = pa->grad.data() + static_cast<std::size_t>((*ix)[i]) * m;
                for (int j = 0; j < m; ++j) ga[j] += g[j];
            }
        };
    }
    return tout;
}

// out[idx[k], :] += a[k, :]  (scatter-add by row index)
inline Tensor segment_sum(const Tensor& a, std::vector<int> idx, int num_segments) {
    Tape* tape = Tape::tape_of("segment_sum", a);
    auto& na = tape->node(a);
    if (na.shape.size() != 2 || static_cast<int>(idx.size()) != na.shape[0]) shape_error("segment_sum", na.shape, {static_cast<int>(idx.size())});
    const int m = na.shape[1];
    for (int i : idx)
        if (i < 0 || i >= num_segments) throw std::invalid_argument("segment_sum: segment index " + std::to_string(i) + " out of range");
    std::vector<double> out(static_cast<std::size_t>(num_segments) * m, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double* src = na.value.data() + k * m;
        double* dst = out.data() + static_cast<std::size_t>(idx[k]) * m;
        for (int j = 0; j < m; ++j) dst[j] += src[j];
    }
    Tensor tout = tape->make_node({num_segments, m}, std::move(out), na.requires_grad);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* pa = &na;
        auto* po = &no;
        auto ix = std::make_shared<std::vector<int>>(std::move(idx));
        no.backward = [pa, po, ix, m]() {
            for (std::size_t k = 0; k < ix->size(); ++k) {
                const double* g = po->grad.data() + static_cast<std::size_t>((*ix)[k]) * m;
                double* ga = pa->grad.data() + k * m;
                for (int j = 0; j < m; ++j) ga[j] += g[j];
            }
        };
    }
    return tout;
}

inline Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::invalid_argument("stack_scalars: empty input");
    Tape* tape = Tape::tape_of("stack_scalars", xs[0]);
    std::vector<double> out;
    bool req = false;
    std::vector<Tape::Node*> parts;
    for (const auto& t : xs) {
        tape->check_mine("stack_scalars", t);
        auto& n = tape->node(t);
        if (numel(n.shape) != 1) throw std::invalid_argument("stack_scalars: element is not a scalar");
        out.push_back(n.value[0]);
        req = req || n.requires_grad;
        parts.push_back(&n);
    }
    Tensor tout = tape->make_node({static_cast<int>(xs.size())}, std::move(out), req);
    auto& no = tape->node(tout);
    if (no.requires_grad) {
        auto* po = &no;
        no.backward = [parts, po]() {
            for (std::size_t i = 0; i < parts.size(); ++i)
                if (parts[i]->requires_grad) parts[i]->grad[0] += po->grad[i];
        };
    }
    return tout;
}

}  // namespace gran
