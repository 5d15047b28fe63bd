#pragma once

// Dense f32 tensors with reverse-mode autodiff on a per-run tape.
// Shapes are row-major; broadcasting is limited to scalars and
// trailing-suffix shapes (explicit reshape otherwise).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgeprune {

using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] void throw_shape_error(const std::string& op, const std::vector<Shape>& shapes,
                                    const std::string& detail = "");

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until touched by backward
    bool requires_grad = false;
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const { return node_->shape[axis]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    float* data() { return node_->value.data(); }
    const float* data() const { return node_->value.data(); }
    std::vector<float>& values() { return node_->value; }
    const std::vector<float>& values() const { return node_->value; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    float* grad() { return node_->grad.data(); }
    const float* grad() const { return node_->grad.data(); }
    std::vector<float>& grad_values() { return node_->grad; }
    void ensure_grad();   // allocate + zero if absent
    void zero_grad();     // zero if allocated

    float item() const;   // scalar tensors only
    float at(const std::vector<int>& idx) const;

    const std::shared_ptr<TensorData>& node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<TensorData> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorData> node_;
};

// ---------------------------------------------------------------------------
// Tape

class Tape {
  public:
    struct Op {
        const char* name;
        std::shared_ptr<TensorData> out;
        std::function<void()> backward;
    };

    void record(const char* name, const Tensor& out, std::function<void()> backward);

    // Reverse sweep from a scalar loss. Ops whose output never received a
    // gradient are skipped; repeated calls accumulate into existing grads.
    void backward(const Tensor& loss);

    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }
    int64_t backward_calls() const { return backward_calls_; }

  private:
    std::vector<Op> ops_;
    int64_t backward_calls_ = 0;
};

Tape* active_tape();

// Installs a tape as the active one for the current thread.
class TapeScope {
  public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

class NoGradScope {
  public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

  private:
    Tape* prev_;
};

// ---------------------------------------------------------------------------
// Primitive ops. All validate shapes and throw ShapeError on mismatch.

// Elementwise; rhs may be a scalar or a trailing-suffix broadcast of lhs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, float c);
Tensor scale(const Tensor& a, float c);

// (..., m, k) x (k, n), or (..., m, k) x (..., k, n) with equal leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// a (..., m, k) x b (..., n, k)^T -> (..., m, n); b may also be 2-D (n, k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);

Tensor softmax_last(const Tensor& a);
Tensor log_softmax_last(const Tensor& a);

// Normalizes the last axis; gamma/beta are 1-D of that size.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

Tensor gelu(const Tensor& a);     // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

// min(1, max(0, x)); gradient passes only where the output is strictly
// inside (0, 1) so saturated gates stop receiving updates.
Tensor clamp01(const Tensor& a);

// Row gather along axis 0: weight (V, ...) + ids -> (|ids|, ...).
Tensor index_select(const Tensor& weight, const std::vector<int32_t>& ids);
// Token embedding: weight (V, d) + ids (B*S) -> (B, S, d).
Tensor embedding(const Tensor& weight, const std::vector<int32_t>& ids, int batch, int seq);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_last(const Tensor& a);  // (..., n) -> (...)

// One summand of a reader aggregation: either a constant gate value or an
// element of a gate vector living on the tape.
struct GateRef {
    const Tensor* vec = nullptr;  // nullptr => constant gate
    int index = 0;
    float value = 1.0f;           // used when vec == nullptr

    float get() const { return vec ? vec->data()[index] : value; }
    static GateRef constant(float v) { return GateRef{nullptr, 0, v}; }
    static GateRef element(const Tensor& t, int i) { return GateRef{&t, i, 0.0f}; }
};

// out = sum_i [ z_i * clean_i + (1 - z_i) * corrupted_i ], accumulated in
// argument order. corrupted entries may be undefined (zero ablation). Exact
// at the endpoints: z == 1 adds only clean_i, z == 0 adds only corrupted_i.
Tensor weighted_mix(const std::vector<GateRef>& gates, const std::vector<Tensor>& clean,
                    const std::vector<Tensor>& corrupted);

// ---------------------------------------------------------------------------
// Adam

// Optimizer defaults used throughout.
inline constexpr float kAdamBeta1 = 0.9f;
inline constexpr float kAdamBeta2 = 0.999f;
inline constexpr float kAdamEps = 1e-8f;

class Adam {
  public:
    Adam(std::vector<Tensor> params, float lr, float beta1 = kAdamBeta1,
         float beta2 = kAdamBeta2, float eps = kAdamEps);

    // Applies one update from the accumulated grads; missing grad -> error.
    // lr_scale multiplies the base learning rate (warmup schedules).
    void step(float lr_scale = 1.0f);
    void zero_grad();

    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }
    int64_t t() const { return t_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    float lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace edgeprune
