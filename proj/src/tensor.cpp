#include "edgeprune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace edgeprune {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

void throw_shape_error(const std::string& op, const std::vector<Shape>& shapes,
                       const std::string& detail) {
    std::ostringstream os;
    os << op << ": shape mismatch";
    for (size_t i = 0; i < shapes.size(); ++i) os << (i ? " x " : " ") << shape_str(shapes[i]);
    if (!detail.empty()) os << " (" << detail << ")";
    throw ShapeError(os.str());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorData>();
    n->value.assign(shape_numel(shape), 0.0f);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
        throw_shape_error("from", {shape}, "value count " + std::to_string(values.size()));
    auto n = std::make_shared<TensorData>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

void Tensor::ensure_grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0f);
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) throw_shape_error("item", {shape()}, "expected scalar");
    return node_->value[0];
}

float Tensor::at(const std::vector<int>& idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw_shape_error("at", {s});
    int64_t off = 0;
    for (size_t i = 0; i < idx.size(); ++i) off = off * s[i] + idx[i];
    return node_->value[off];
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = prev_; }

void Tape::record(const char* name, const Tensor& out, std::function<void()> backward) {
    ops_.push_back(Op{name, out.node(), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw_shape_error("backward", {loss.shape()}, "loss must be scalar");
    // Intermediate (op-output) grads are per-sweep scratch; only leaves
    // accumulate across repeated calls.
    for (Op& op : ops_) std::fill(op.out->grad.begin(), op.out->grad.end(), 0.0f);
    if (loss.node()->grad.empty()) loss.node()->grad.assign(1, 0.0f);
    loss.node()->grad[0] += 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        if (!it->out->grad.empty()) it->backward();
    }
    ++backward_calls_;
}

namespace {

inline bool recording(std::initializer_list<const Tensor*> ins) {
    if (!g_active_tape) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

inline void accum(const std::shared_ptr<TensorData>& node, int64_t i, float g) {
    node->grad[i] += g;
}

inline void ensure(const std::shared_ptr<TensorData>& node) {
    if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0f);
}

// Broadcast classification for elementwise binary ops.
enum class Bcast { Same, Scalar, Suffix };

Bcast classify_bcast(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return Bcast::Same;
    if (shape_numel(b) == 1) return Bcast::Scalar;
    if (b.size() < a.size() &&
        std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size())))
        return Bcast::Suffix;
    throw_shape_error(op, {a, b});
}

template <class Fwd, class BwdA, class BwdB>
Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a,
                          BwdB bwd_b) {
    Bcast bc = classify_bcast(name, a.shape(), b.shape());
    const int64_t n = a.numel();
    const int64_t bn = b.numel();
    bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    if (bc == Bcast::Same) {
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    } else if (bc == Bcast::Scalar) {
        const float s = pb[0];
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], s);
    } else {
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i % bn]);
    }
    if (rec) {
        auto an = a.node(), bnode = b.node(), on = out.node();
        bool ga = a.requires_grad(), gb = b.requires_grad();
        g_active_tape->record(name, out, [an, bnode, on, bc, n, bn, ga, gb, bwd_a, bwd_b]() {
            const float* g = on->grad.data();
            if (ga) {
                ensure(an);
                for (int64_t i = 0; i < n; ++i) {
                    int64_t j = (bc == Bcast::Same) ? i : (bc == Bcast::Scalar ? 0 : i % bn);
                    an->grad[i] += bwd_a(g[i], an->value[i], bnode->value[j]);
                }
            }
            if (gb) {
                ensure(bnode);
                for (int64_t i = 0; i < n; ++i) {
                    int64_t j = (bc == Bcast::Same) ? i : (bc == Bcast::Scalar ? 0 : i % bn);
                    bnode->grad[j] += bwd_b(g[i], an->value[i], bnode->value[j]);
                }
            }
        });
    }
    return out;
}

template <class Fwd, class Bwd>
Tensor elementwise_unary(const char* name, const Tensor& a, Fwd fwd, Bwd bwd) {
    bool rec = recording({&a});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const int64_t n = a.numel();
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record(name, out, [an, on, n, bwd]() {
            ensure(an);
            const float* g = on->grad.data();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += bwd(g[i], an->value[i], on->value[i]);
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "add", a, b, [](float x, float y) { return x + y; },
        [](float g, float, float) { return g; }, [](float g, float, float) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "sub", a, b, [](float x, float y) { return x - y; },
        [](float g, float, float) { return g; }, [](float g, float, float) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "mul", a, b, [](float x, float y) { return x * y; },
        [](float g, float, float y) { return g * y; },
        [](float g, float x, float) { return g * x; });
}

Tensor add_scalar(const Tensor& a, float c) {
    return elementwise_unary(
        "add_scalar", a, [c](float x) { return x + c; },
        [](float g, float, float) { return g; });
}

Tensor scale(const Tensor& a, float c) {
    return elementwise_unary(
        "scale", a, [c](float x) { return x * c; },
        [c](float g, float, float) { return g * c; });
}

// ---------------------------------------------------------------------------
// matmul

namespace {

struct MatmulDims {
    int64_t lead;  // batch count of a
    int m, k;
    int n;
    bool b_batched;
};

MatmulDims matmul_dims(const char* op, const Shape& a, const Shape& b, bool b_transposed) {
    if (a.size() < 2 || b.size() < 2) throw_shape_error(op, {a, b});
    MatmulDims d;
    d.m = a[a.size() - 2];
    d.k = a[a.size() - 1];
    int bk = b_transposed ? b[b.size() - 1] : b[b.size() - 2];
    d.n = b_transposed ? b[b.size() - 2] : b[b.size() - 1];
    if (bk != d.k) throw_shape_error(op, {a, b});
    d.lead = 1;
    for (size_t i = 0; i + 2 < a.size(); ++i) d.lead *= a[i];
    d.b_batched = b.size() > 2;
    if (d.b_batched) {
        if (b.size() != a.size()) throw_shape_error(op, {a, b});
        for (size_t i = 0; i + 2 < b.size(); ++i)
            if (b[i] != a[i]) throw_shape_error(op, {a, b});
    }
    return d;
}

inline void gemm_acc(const float* A, const float* B, float* C, int m, int k, int n, bool ta,
                     bool tb) {
    // C(m,n) += op(A) * op(B); row-major, small sizes.
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const float av = ta ? A[p * m + i] : A[i * k + p];
            if (av == 0.0f) continue;
            const float* brow = tb ? nullptr : B + p * n;
            if (!tb) {
                float* crow = C + i * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                float* crow = C + i * n;
                for (int j = 0; j < n; ++j) crow[j] += av * B[j * k + p];
            }
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    MatmulDims d = matmul_dims("matmul", a.shape(), b.shape(), false);
    Shape os(a.shape().begin(), a.shape().end() - 1);
    os.push_back(d.n);
    bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(os, rec);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const int64_t a_block = int64_t(d.m) * d.k, b_block = int64_t(d.k) * d.n,
                  o_block = int64_t(d.m) * d.n;
    for (int64_t l = 0; l < d.lead; ++l)
        gemm_acc(pa + l * a_block, pb + (d.b_batched ? l * b_block : 0), po + l * o_block, d.m,
                 d.k, d.n, false, false);
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        bool ga = a.requires_grad(), gb = b.requires_grad();
        g_active_tape->record("matmul", out, [an, bn, on, d, a_block, b_block, o_block, ga, gb]() {
            const float* g = on->grad.data();
            if (ga) {
                ensure(an);
                // dA = dC * B^T
                for (int64_t l = 0; l < d.lead; ++l) {
                    const float* G = g + l * o_block;
                    const float* B = bn->value.data() + (d.b_batched ? l * b_block : 0);
                    float* dA = an->grad.data() + l * a_block;
                    for (int i = 0; i < d.m; ++i)
                        for (int p = 0; p < d.k; ++p) {
                            float acc = 0.0f;
                            for (int j = 0; j < d.n; ++j) acc += G[i * d.n + j] * B[p * d.n + j];
                            dA[i * d.k + p] += acc;
                        }
                }
            }
            if (gb) {
                ensure(bn);
                // dB = A^T * dC (accumulated over lead when B unbatched)
                for (int64_t l = 0; l < d.lead; ++l) {
                    const float* G = g + l * o_block;
                    const float* A = an->value.data() + l * a_block;
                    float* dB = bn->grad.data() + (d.b_batched ? l * b_block : 0);
                    gemm_acc(A, G, dB, d.k, d.m, d.n, true, false);
                }
            }
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    MatmulDims d = matmul_dims("matmul_nt", a.shape(), b.shape(), true);
    Shape os(a.shape().begin(), a.shape().end() - 1);
    os.push_back(d.n);
    bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(os, rec);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const int64_t a_block = int64_t(d.m) * d.k, b_block = int64_t(d.n) * d.k,
                  o_block = int64_t(d.m) * d.n;
    for (int64_t l = 0; l < d.lead; ++l)
        gemm_acc(pa + l * a_block, pb + (d.b_batched ? l * b_block : 0), po + l * o_block, d.m,
                 d.k, d.n, false, true);
    if (rec) {
        auto an = a.node(), bn = b.node(), on = out.node();
        bool ga = a.requires_grad(), gb = b.requires_grad();
        g_active_tape->record(
            "matmul_nt", out, [an, bn, on, d, a_block, b_block, o_block, ga, gb]() {
                const float* g = on->grad.data();
                for (int64_t l = 0; l < d.lead; ++l) {
                    const float* G = g + l * o_block;
                    const float* A = an->value.data() + l * a_block;
                    const float* B = bn->value.data() + (d.b_batched ? l * b_block : 0);
                    if (ga) {
                        ensure(an);
                        float* dA = an->grad.data() + l * a_block;
                        // dA = dC * B
                        gemm_acc(G, B, dA, d.m, d.n, d.k, false, false);
                    }
                    if (gb) {
                        ensure(bn);
                        float* dB = bn->grad.data() + (d.b_batched ? l * b_block : 0);
                        // dB = dC^T * A
                        gemm_acc(G, A, dB, d.n, d.m, d.k, true, false);
                    }
                }
            });
    }
    return out;
}

// ---------------------------------------------------------------------------
// concat / slice

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape os = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(os.size()))
        throw_shape_error("concat", {os}, "bad axis " + std::to_string(axis));
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != static_cast<int>(os.size())) throw_shape_error("concat", {os, p.shape()});
        for (int i = 0; i < p.ndim(); ++i)
            if (i != axis && p.shape()[i] != os[i]) throw_shape_error("concat", {os, p.shape()});
        total += p.shape()[axis];
    }
    os[axis] = total;
    bool rec = false;
    if (g_active_tape)
        for (const Tensor& p : parts)
            if (p.requires_grad()) rec = true;
    Tensor out = Tensor::zeros(os, rec);

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= os[i];
    for (size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];
    float* po = out.data();
    int64_t off_axis = 0;
    for (const Tensor& p : parts) {
        const int64_t pa = p.shape()[axis];
        const float* pp = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + (o * total + off_axis) * inner, pp + o * pa * inner,
                        sizeof(float) * pa * inner);
        off_axis += pa;
    }
    if (rec) {
        std::vector<std::shared_ptr<TensorData>> nodes;
        std::vector<int> sizes;
        std::vector<bool> need;
        for (const Tensor& p : parts) {
            nodes.push_back(p.node());
            sizes.push_back(p.shape()[axis]);
            need.push_back(p.requires_grad());
        }
        auto on = out.node();
        g_active_tape->record("concat", out, [nodes, sizes, need, on, outer, inner, total]() {
            const float* g = on->grad.data();
            int64_t off = 0;
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                const int64_t pa = sizes[pi];
                if (need[pi]) {
                    ensure(nodes[pi]);
                    float* dp = nodes[pi]->grad.data();
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t i = 0; i < pa * inner; ++i)
                            dp[o * pa * inner + i] += g[(o * total + off) * inner + i];
                }
                off += pa;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= a.ndim() || start < 0 || len < 0 || start + len > s[axis])
        throw_shape_error("slice", {s},
                          "axis " + std::to_string(axis) + " [" + std::to_string(start) + "," +
                              std::to_string(start + len) + ")");
    Shape os = s;
    os[axis] = len;
    bool rec = recording({&a});
    Tensor out = Tensor::zeros(os, rec);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const int64_t sa = s[axis];
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(po + o * len * inner, pa + (o * sa + start) * inner,
                    sizeof(float) * len * inner);
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record("slice", out, [an, on, outer, inner, sa, start, len]() {
            ensure(an);
            const float* g = on->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < len * inner; ++i)
                    an->grad[(o * sa + start) * inner + i] += g[o * len * inner + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm

Tensor softmax_last(const Tensor& a) {
    const int n = a.shape().back();
    const int64_t rows = a.numel() / n;
    bool rec = recording({&a});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = pa + r * n;
        float* y = po + r * n;
        float mx = x[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
        float sum = 0.0f;
        for (int i = 0; i < n; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        const float inv = 1.0f / sum;
        for (int i = 0; i < n; ++i) y[i] *= inv;
    }
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record("softmax", out, [an, on, rows, n]() {
            ensure(an);
            const float* g = on->grad.data();
            const float* y = on->value.data();
            for (int64_t r = 0; r < rows; ++r) {
                float dot = 0.0f;
                for (int i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
                for (int i = 0; i < n; ++i)
                    an->grad[r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
            }
        });
    }
    return out;
}

Tensor log_softmax_last(const Tensor& a) {
    const int n = a.shape().back();
    const int64_t rows = a.numel() / n;
    bool rec = recording({&a});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = pa + r * n;
        float* y = po + r * n;
        float mx = x[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
        float sum = 0.0f;
        for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
        const float lse = mx + std::log(sum);
        for (int i = 0; i < n; ++i) y[i] = x[i] - lse;
    }
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record("log_softmax", out, [an, on, rows, n]() {
            ensure(an);
            const float* g = on->grad.data();
            const float* y = on->value.data();
            for (int64_t r = 0; r < rows; ++r) {
                float gsum = 0.0f;
                for (int i = 0; i < n; ++i) gsum += g[r * n + i];
                for (int i = 0; i < n; ++i)
                    an->grad[r * n + i] += g[r * n + i] - std::exp(y[r * n + i]) * gsum;
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const int n = x.shape().back();
    if (gamma.ndim() != 1 || gamma.dim(0) != n || beta.ndim() != 1 || beta.dim(0) != n)
        throw_shape_error("layer_norm", {x.shape(), gamma.shape(), beta.shape()});
    const int64_t rows = x.numel() / n;
    bool rec = recording({&x, &gamma, &beta});
    Tensor out = Tensor::zeros(x.shape(), rec);
    // xhat saved for backward
    std::shared_ptr<std::vector<float>> xhat;
    std::shared_ptr<std::vector<float>> inv_std;
    if (rec) {
        xhat = std::make_shared<std::vector<float>>(x.numel());
        inv_std = std::make_shared<std::vector<float>>(rows);
    }
    const float* px = x.data();
    const float* pg = gamma.data();
    const float* pb = beta.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = px + r * n;
        float mean = 0.0f;
        for (int i = 0; i < n; ++i) mean += xr[i];
        mean /= n;
        float var = 0.0f;
        for (int i = 0; i < n; ++i) {
            float d = xr[i] - mean;
            var += d * d;
        }
        var /= n;
        const float istd = 1.0f / std::sqrt(var + eps);
        for (int i = 0; i < n; ++i) {
            const float xh = (xr[i] - mean) * istd;
            if (rec) (*xhat)[r * n + i] = xh;
            po[r * n + i] = xh * pg[i] + pb[i];
        }
        if (rec) (*inv_std)[r] = istd;
    }
    if (rec) {
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        bool gx = x.requires_grad(), gg = gamma.requires_grad(), gb = beta.requires_grad();
        g_active_tape->record("layer_norm", out, [xn, gn, bn, on, xhat, inv_std, rows, n, gx, gg,
                                                  gb]() {
            const float* g = on->grad.data();
            const float* xh = xhat->data();
            for (int64_t r = 0; r < rows; ++r) {
                if (gg) {
                    ensure(gn);
                    for (int i = 0; i < n; ++i) gn->grad[i] += g[r * n + i] * xh[r * n + i];
                }
                if (gb) {
                    ensure(bn);
                    for (int i = 0; i < n; ++i) bn->grad[i] += g[r * n + i];
                }
                if (gx) {
                    ensure(xn);
                    float m1 = 0.0f, m2 = 0.0f;
                    for (int i = 0; i < n; ++i) {
                        const float gg_i = g[r * n + i] * gn->value[i];
                        m1 += gg_i;
                        m2 += gg_i * xh[r * n + i];
                    }
                    m1 /= n;
                    m2 /= n;
                    const float istd = (*inv_std)[r];
                    for (int i = 0; i < n; ++i) {
                        const float gg_i = g[r * n + i] * gn->value[i];
                        xn->grad[r * n + i] += istd * (gg_i - m1 - xh[r * n + i] * m2);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities

namespace {
constexpr float kInvSqrt2 = 0.70710678118654752440f;
constexpr float kInvSqrt2Pi = 0.39894228040143267794f;
}  // namespace

Tensor gelu(const Tensor& a) {
    return elementwise_unary(
        "gelu", a,
        [](float x) { return 0.5f * x * (1.0f + std::erf(x * kInvSqrt2)); },
        [](float g, float x, float) {
            const float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
            const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
            return g * (cdf + x * pdf);
        });
}

Tensor sigmoid(const Tensor& a) {
    return elementwise_unary(
        "sigmoid", a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
        [](float g, float, float y) { return g * y * (1.0f - y); });
}

Tensor log(const Tensor& a) {
    return elementwise_unary(
        "log", a, [](float x) { return std::log(x); },
        [](float g, float x, float) { return g / x; });
}

Tensor exp(const Tensor& a) {
    return elementwise_unary(
        "exp", a, [](float x) { return std::exp(x); },
        [](float g, float, float y) { return g * y; });
}

Tensor clamp01(const Tensor& a) {
    return elementwise_unary(
        "clamp01", a, [](float x) { return std::min(1.0f, std::max(0.0f, x)); },
        [](float g, float, float y) { return (y > 0.0f && y < 1.0f) ? g : 0.0f; });
}

// ---------------------------------------------------------------------------
// gather / embedding

Tensor index_select(const Tensor& weight, const std::vector<int32_t>& ids) {
    const Shape& ws = weight.shape();
    if (ws.empty()) throw_shape_error("index_select", {ws});
    int64_t row = weight.numel() / ws[0];
    for (int32_t id : ids)
        if (id < 0 || id >= ws[0])
            throw ShapeError("index_select: id " + std::to_string(id) + " out of range [0," +
                             std::to_string(ws[0]) + ")");
    Shape os = ws;
    os[0] = static_cast<int>(ids.size());
    bool rec = recording({&weight});
    Tensor out = Tensor::zeros(os, rec);
    const float* pw = weight.data();
    float* po = out.data();
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(po + i * row, pw + ids[i] * row, sizeof(float) * row);
    if (rec) {
        auto wn = weight.node(), on = out.node();
        auto idc = std::make_shared<std::vector<int32_t>>(ids);
        g_active_tape->record("index_select", out, [wn, on, idc, row]() {
            ensure(wn);
            const float* g = on->grad.data();
            for (size_t i = 0; i < idc->size(); ++i)
                for (int64_t j = 0; j < row; ++j) wn->grad[(*idc)[i] * row + j] += g[i * row + j];
        });
    }
    return out;
}

Tensor embedding(const Tensor& weight, const std::vector<int32_t>& ids, int batch, int seq) {
    if (weight.ndim() != 2) throw_shape_error("embedding", {weight.shape()});
    if (static_cast<int64_t>(ids.size()) != int64_t(batch) * seq)
        throw_shape_error("embedding", {weight.shape()},
                          "ids " + std::to_string(ids.size()) + " != B*S");
    Tensor flat = index_select(weight, ids);
    flat.node()->shape = Shape{batch, seq, weight.dim(1)};
    return flat;
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& a) {
    bool rec = recording({&a});
    Tensor out = Tensor::zeros({1}, rec);
    const float* pa = a.data();
    float acc = 0.0f;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    out.data()[0] = acc;
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record("sum_all", out, [an, on, n]() {
            ensure(an);
            const float g = on->grad[0];
            for (int64_t i = 0; i < n; ++i) an->grad[i] += g;
        });
    }
    return out;
}

Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0f / static_cast<float>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
    if (a.ndim() < 1) throw_shape_error("sum_last", {a.shape()});
    const int n = a.shape().back();
    const int64_t rows = a.numel() / n;
    Shape os(a.shape().begin(), a.shape().end() - 1);
    if (os.empty()) os = {1};
    bool rec = recording({&a});
    Tensor out = Tensor::zeros(os, rec);
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        float acc = 0.0f;
        for (int i = 0; i < n; ++i) acc += pa[r * n + i];
        po[r] = acc;
    }
    if (rec) {
        auto an = a.node(), on = out.node();
        g_active_tape->record("sum_last", out, [an, on, rows, n]() {
            ensure(an);
            const float* g = on->grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < n; ++i) an->grad[r * n + i] += g[r];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// weighted_mix

Tensor weighted_mix(const std::vector<GateRef>& gates, const std::vector<Tensor>& clean,
                    const std::vector<Tensor>& corrupted) {
    if (gates.size() != clean.size() || (!corrupted.empty() && corrupted.size() != gates.size()))
        throw ShapeError("weighted_mix: inconsistent argument counts");
    if (gates.empty()) throw ShapeError("weighted_mix: no inputs");
    const Shape& s = clean[0].shape();
    const int64_t n = clean[0].numel();
    bool rec = false;
    if (g_active_tape) {
        for (const Tensor& t : clean)
            if (t.requires_grad()) rec = true;
        for (const GateRef& gr : gates)
            if (gr.vec && gr.vec->requires_grad()) rec = true;
    }
    for (size_t i = 0; i < clean.size(); ++i) {
        if (clean[i].shape() != s) throw_shape_error("weighted_mix", {s, clean[i].shape()});
        if (!corrupted.empty() && corrupted[i].defined() && corrupted[i].shape() != s)
            throw_shape_error("weighted_mix", {s, corrupted[i].shape()});
    }
    Tensor out = Tensor::zeros(s, rec);
    float* po = out.data();
    for (size_t i = 0; i < gates.size(); ++i) {
        const float z = gates[i].get();
        const float* pc = clean[i].data();
        const bool has_corr = !corrupted.empty() && corrupted[i].defined();
        if (z == 1.0f) {
            for (int64_t j = 0; j < n; ++j) po[j] += pc[j];
        } else if (z == 0.0f) {
            if (has_corr) {
                const float* py = corrupted[i].data();
                for (int64_t j = 0; j < n; ++j) po[j] += py[j];
            }
        } else if (has_corr) {
            const float* py = corrupted[i].data();
            const float w = 1.0f - z;
            for (int64_t j = 0; j < n; ++j) po[j] += z * pc[j] + w * py[j];
        } else {
            for (int64_t j = 0; j < n; ++j) po[j] += z * pc[j];
        }
    }
    if (rec) {
        struct Saved {
            std::shared_ptr<TensorData> gate_vec;  // null => constant
            int gate_index;
            float gate_const;
            std::shared_ptr<TensorData> clean;
            std::shared_ptr<TensorData> corrupted;  // null in zero-ablation
            bool clean_grad;
            bool gate_grad;
        };
        auto saved = std::make_shared<std::vector<Saved>>();
        saved->reserve(gates.size());
        for (size_t i = 0; i < gates.size(); ++i) {
            Saved sv;
            sv.gate_vec = gates[i].vec ? gates[i].vec->node() : nullptr;
            sv.gate_index = gates[i].index;
            sv.gate_const = gates[i].value;
            sv.clean = clean[i].node();
            sv.corrupted =
                (!corrupted.empty() && corrupted[i].defined()) ? corrupted[i].node() : nullptr;
            sv.clean_grad = clean[i].requires_grad();
            sv.gate_grad = gates[i].vec && gates[i].vec->requires_grad();
            saved->push_back(std::move(sv));
        }
        auto on = out.node();
        g_active_tape->record("weighted_mix", out, [saved, on, n]() {
            const float* g = on->grad.data();
            for (const auto& sv : *saved) {
                const float z = sv.gate_vec ? sv.gate_vec->value[sv.gate_index] : sv.gate_const;
                if (sv.clean_grad) {
                    ensure(sv.clean);
                    float* dc = sv.clean->grad.data();
                    if (z != 0.0f)
                        for (int64_t j = 0; j < n; ++j) dc[j] += z * g[j];
                }
                if (sv.gate_grad) {
                    ensure(sv.gate_vec);
                    // d out / d z = clean - corrupted (or clean under zero ablation)
                    float acc = 0.0f;
                    const float* pc = sv.clean->value.data();
                    if (sv.corrupted) {
                        const float* py = sv.corrupted->value.data();
                        for (int64_t j = 0; j < n; ++j) acc += g[j] * (pc[j] - py[j]);
                    } else {
                        for (int64_t j = 0; j < n; ++j) acc += g[j] * pc[j];
                    }
                    sv.gate_vec->grad[sv.gate_index] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Tensor> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].numel(), 0.0f);
        v_[i].assign(params_[i].numel(), 0.0f);
    }
}

void Adam::step(float lr_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    const float alpha = lr_ * lr_scale;
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad())
            throw ShapeError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        const float* g = p.grad();
        float* w = p.data();
        const int64_t n = p.numel();
        for (int64_t j = 0; j < n; ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0f - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0f - beta2_) * g[j] * g[j];
            const float mhat = static_cast<float>(m_[i][j] / bc1);
            const float vhat = static_cast<float>(v_[i][j] / bc2);
            w[j] -= alpha * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace edgeprune
