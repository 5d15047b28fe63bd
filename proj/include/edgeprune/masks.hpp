#pragma once

// Hard-concrete stochastic gates over edges and nodes: stretched sigmoid of
// logistic noise, clamped to [0,1], plus the threshold discretization that
// turns trained gates into a binary circuit.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/tensor.hpp"

namespace edgeprune {

struct HardConcreteConfig {
    float temp_inv = 2.0f / 3.0f;  // 1/beta
    float stretch_lo = -0.1f;      // l
    float stretch_hi = 1.1f;       // r
    float noise_eps = 1e-6f;       // u ~ Uniform(eps, 1-eps)

    void validate() const;
};

// z = clamp01(sigmoid(temp_inv * log(u/(1-u)) + log_alpha) * (r-l) + l)
float sample_gate(float log_alpha, float u, const HardConcreteConfig& hc = {});
// Noise-free gate (u = 0.5): z = clamp01(sigmoid(log_alpha) * (r-l) + l)
float deterministic_gate(float log_alpha, const HardConcreteConfig& hc = {});
// Product composition with the source node's gate.
float effective_edge_mask(float z_edge, float z_src_node);

// Tape-recorded gate vectors for training; `noise_u` holds one u per gate.
Tensor sample_gates(const Tensor& log_alpha, const std::vector<float>& noise_u,
                    const HardConcreteConfig& hc = {});
Tensor deterministic_gates(const Tensor& log_alpha, const HardConcreteConfig& hc = {});

struct MaskParams {
    Tensor edge_log_alpha;  // (E,)
    Tensor node_log_alpha;  // (W,)
};

// log-alpha at which the deterministic gate equals `init_gate` (default: the
// full model, gate ~ 1).
float log_alpha_for_gate(float gate, const HardConcreteConfig& hc = {});
MaskParams init_mask_params(const ComputationalGraph& g, float init_gate = 0.999f,
                            const HardConcreteConfig& hc = {});

struct DiscretizeOptions {
    std::optional<float> threshold_override;  // keep gates >= threshold directly
    std::optional<float> density_override;    // requested edge density instead of pooled mean
    bool pool_nodes = true;                   // pool node gates into the target (edges-only mode off)
};

struct DiscretizeInfo {
    float target_density = 0.0f;
    float threshold = 0.0f;
    int kept_edges = 0;
    int kept_nodes = 0;
};

// Kept flags for one gate multiset at a target density: binary-searches a
// threshold tau in (0, 1]; when no pure threshold lands within 1/n of the
// target, the tied boundary group is split in index order (earlier kept
// first). Returns kept flags and the threshold.
std::pair<std::vector<uint8_t>, float> threshold_partition(const std::vector<float>& gates,
                                                           float target_density);

// Deterministic gates -> binary circuit. The mean of all gate values (edges
// and nodes pooled) sets the target density and one threshold is searched
// over the pooled multiset; a density override instead targets the edge
// family directly, and a threshold override applies a fixed cut.
Circuit discretize(const MaskParams& params, const ComputationalGraph& g,
                   const std::string& model_hash, const HardConcreteConfig& hc = {},
                   const DiscretizeOptions& opts = {}, DiscretizeInfo* info = nullptr);

}  // namespace edgeprune
