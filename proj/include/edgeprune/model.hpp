#pragma once

// Decoder-only transformer with two forward passes over the same weights:
// the usual residual-stream recurrence, and a disentangled pass in which each
// reader aggregates a gate-weighted interpolation of clean and corrupted
// writer activations. Weights are plain tensors; freezing/training is a
// matter of requires_grad flags.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/tensor.hpp"

namespace edgeprune {

enum class AblationMode : uint8_t { Interchange, Zero };

struct AttentionHeadParams {
    Tensor wq, bq;  // (d_model, d_head), (d_head)
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo;      // (d_head, d_model); output projection carries no bias
};

struct LayerParams {
    Tensor ln1_g, ln1_b;  // shared by this layer's q/k/v readers
    Tensor ln2_g, ln2_b;  // mlp reader
    std::vector<AttentionHeadParams> heads;
    Tensor w1, b1;  // (d_model, d_mlp), (d_mlp)
    Tensor w2, b2;  // (d_mlp, d_model), (d_model)
};

struct ModelParams {
    Tensor wte;  // (vocab, d_model)
    Tensor wpe;  // (max_seq, d_model); folded into the embed writer
    std::vector<LayerParams> layers;
    Tensor lnf_g, lnf_b;  // logits reader
    Tensor wu;            // (d_model, vocab)
};

struct Batch {
    std::vector<int32_t> tokens;  // B*S row-major
    int batch = 0;
    int seq = 0;
    // valid lengths per example; empty means all positions valid
    std::vector<int> lengths;

    int64_t size() const { return static_cast<int64_t>(batch) * seq; }
};

struct ActivationCache {
    // one (B, S, d_model) tensor per writer, by writer index
    std::vector<Tensor> writer_acts;
};

// Gate source for a disentangled forward: exactly one of gate_tensor
// (an (E,)-shaped tensor of effective per-edge gates, tape-recorded) or
// const_gates (plain floats; 0/1 entries take exact fast paths).
struct GateSpec {
    const Tensor* gate_tensor = nullptr;
    const std::vector<float>* const_gates = nullptr;
    AblationMode mode = AblationMode::Interchange;
};

// Records which edges actually contributed a clean / corrupted term.
struct ForwardTrace {
    std::vector<uint8_t> clean_used;      // per edge
    std::vector<uint8_t> corrupted_used;  // per edge
};

struct ForwardResult {
    Tensor logits;               // (B, S, vocab)
    ActivationCache cache;       // clean-side writer activations
    std::vector<Tensor> reader_inputs;  // post-aggregation, pre-layernorm, by reader index
};

struct ForwardCounters {
    int64_t nograd_examples = 0;
    int64_t grad_examples = 0;
};

class DisentangledTransformer {
  public:
    explicit DisentangledTransformer(const ModelConfig& cfg);

    static DisentangledTransformer random_init(const ModelConfig& cfg, uint64_t seed,
                                               float weight_std = 0.02f);

    const ModelConfig& config() const { return cfg_; }
    const ComputationalGraph& graph() const { return graph_; }
    ModelParams& params() { return p_; }
    const ModelParams& params() const { return p_; }

    std::vector<Tensor> parameter_list() const;
    void set_requires_grad(bool rg);
    // canonical name -> tensor, stable order (checkpoint layout)
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    std::string config_hash() const;

    ForwardResult forward_standard(const Batch& batch) const;

    // corrupted may be null in zero-ablation mode.
    ForwardResult forward_disentangled(const Batch& batch, const ActivationCache* corrupted,
                                       const GateSpec& gates, ForwardTrace* trace = nullptr) const;

    // Binary masks from a circuit; corrupted cache computed internally for
    // interchange mode. Throws on circuit/model mismatch.
    ForwardResult circuit_forward(const Batch& clean, const Batch& corrupted,
                                  const Circuit& circuit,
                                  AblationMode mode = AblationMode::Interchange,
                                  ForwardTrace* trace = nullptr) const;

    const ForwardCounters& counters() const { return counters_; }
    void reset_counters() const { counters_ = ForwardCounters{}; }

  private:
    ForwardResult forward_impl(const Batch& batch, const ActivationCache* corrupted,
                               const GateSpec* gates, ForwardTrace* trace) const;

    ModelConfig cfg_;
    ComputationalGraph graph_;
    ModelParams p_;
    mutable ForwardCounters counters_;
};

// Checkpoint container: JSON with config + named flat weight arrays.
void save_model(const DisentangledTransformer& model, const std::string& path);
DisentangledTransformer load_model(const std::string& path);

}  // namespace edgeprune
