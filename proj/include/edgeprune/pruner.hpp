#pragma once

// Edge Pruning: gradient descent on hard-concrete edge/node gates against a
// KL-to-full-model objective, with a warmup-scheduled Lagrangian sparsity
// constraint whose multipliers are updated by gradient ascent. The model
// weights stay frozen throughout.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgeprune/masks.hpp"
#include "edgeprune/model.hpp"
#include "edgeprune/tasks.hpp"

namespace edgeprune {

enum class KlPositions : uint8_t { All, Answer };

struct PruneConfig {
    int steps = 3000;
    int batch_size = 32;
    float lr_log_alpha = 0.8f;
    float lr_lambda = 0.8f;
    float t_edge = 0.95f;          // may exceed 1
    float t_node = 0.0f;
    int sparsity_warmup_steps = 2500;
    int lr_warmup_steps = 0;
    bool use_node_lagrangian = false;
    bool use_lambda1 = true;       // tracr presets fix lambda_1 at 0
    int checkpoint_every = 64;
    uint64_t seed = 0;
    AblationMode ablation = AblationMode::Interchange;
    KlPositions kl_positions = KlPositions::All;
    bool sparsity_from_sampled = true;  // current-step sampled gates vs deterministic gates
    float mask_init_gate = 0.999f;      // training starts at the full model
    std::string out_dir;                // empty: no checkpoints/logs written
    bool verbose = false;
    HardConcreteConfig hard_concrete;
};

// Named presets with the published hyperparameters.
PruneConfig preset_gpt2();
PruneConfig preset_ioi_t1();
PruneConfig preset_tracr_xproportion();
PruneConfig preset_tracr_reverse();
PruneConfig preset_toy();
std::optional<PruneConfig> preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

struct LagrangianState {
    float lambda1_edge = 0.0f;
    float lambda2_edge = 0.0f;
    float lambda1_node = 0.0f;
    float lambda2_node = 0.0f;
};

struct PruneStepRecord {
    int step = 0;
    float kl = 0.0f;
    float edge_sparsity = 0.0f;
    float node_sparsity = 0.0f;
    float target_edge = 0.0f;
    float target_node = 0.0f;
    LagrangianState lambdas;
};

struct PruneLog {
    std::vector<PruneStepRecord> records;
    std::string to_csv() const;
};

struct PruneResult {
    MaskParams masks;
    Circuit circuit;
    PruneLog log;
    DiscretizeInfo discretize_info;
    LagrangianState lambdas;
    std::string final_checkpoint;  // path, when out_dir was set
};

// s = 1 - mean(z); throws on an empty gate set.
float sparsity_from_gates(const std::vector<float>& gates);
float lagrangian_penalty(float s, float t, float lambda1, float lambda2);
// Linear warmup from 0 to t_final over warmup_steps.
float target_schedule(int step, int warmup_steps, float t_final);

// Divergence (non-finite loss) aborts with a reference to the last good
// checkpoint.
struct PruneDiverged : std::runtime_error {
    std::string last_checkpoint;
    int step;
    PruneDiverged(const std::string& msg, std::string ckpt, int s)
        : std::runtime_error(msg), last_checkpoint(std::move(ckpt)), step(s) {}
};

PruneResult prune(const DisentangledTransformer& model, const std::vector<ExamplePair>& dataset,
                  const PruneConfig& cfg);

void save_prune_checkpoint(const MaskParams& masks, const LagrangianState& lam,
                           const PruneConfig& cfg, int step, const std::string& path);
MaskParams load_prune_checkpoint(const ComputationalGraph& g, const std::string& path,
                                 LagrangianState* lam = nullptr, int* step = nullptr);

}  // namespace edgeprune
