#pragma once

// Baseline circuit-discovery methods: ACDC greedy edge ablation and EAP
// gradient-attribution scoring.

#include <cstdint>
#include <string>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/model.hpp"
#include "edgeprune/tasks.hpp"

namespace edgeprune {

struct AcdcOptions {
    AblationMode ablation = AblationMode::Interchange;
    int batch_size = 32;
    bool verbose = false;
};

// Greedy reverse-topological sweep: an edge is removed when ablating it
// increases the dataset-mean answer-position KL against the full model by
// less than tau; the baseline KL is recomputed after every accepted removal.
Circuit acdc(const DisentangledTransformer& model, const std::vector<ExamplePair>& dataset,
             float tau, const AcdcOptions& opts = {});

struct EdgeScoreTable {
    std::vector<float> score;         // mean over examples of |per-example sum|
    std::vector<float> signed_score;  // mean over examples of dL/dz_e
};

enum class EapMetric : uint8_t {
    // Gradients of KL(full-model(x) || run) taken on the corrupted run; the
    // KL gradient vanishes identically at the clean point, so the estimate
    // is anchored where patching an edge clean has first-order effect.
    KlCorruptedRun,
    // Task logit difference, gradients on the clean run.
    LogitDiffClean,
};

struct EapOptions {
    EapMetric metric = EapMetric::KlCorruptedRun;
    AblationMode ablation = AblationMode::Interchange;
};

struct EapInstrumentation {
    int64_t nograd_forward_examples = 0;
    int64_t grad_forward_examples = 0;
    int64_t backward_examples = 0;
};

// One gradient forward+backward per example; dL/dz_e falls out of the gate
// tensor's gradient at the all-ones point of the interpolated forward.
EdgeScoreTable eap_scores(const DisentangledTransformer& model,
                          const std::vector<ExamplePair>& dataset, const EapOptions& opts = {},
                          EapInstrumentation* instr = nullptr);

// k highest-scoring edges, ties broken by canonical edge order.
Circuit eap_top_k(const EdgeScoreTable& scores, const ComputationalGraph& g, int k,
                  const std::string& model_hash);

std::string scores_to_csv(const EdgeScoreTable& scores, const ComputationalGraph& g);

}  // namespace edgeprune
