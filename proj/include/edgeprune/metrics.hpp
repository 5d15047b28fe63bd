#pragma once

// Faithfulness and performance metrics: KL divergence, logit difference,
// greater-than probability differences, Kendall's tau, exact match and
// accuracy, plus per-edge ablation faithfulness.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/model.hpp"
#include "edgeprune/tasks.hpp"

namespace edgeprune {

// KL cap used when the circuit assigns zero mass where the model does not.
inline constexpr double kKlCapSentinel = 1e9;

// Sum p log(p/q) with f64 accumulation, 0 log 0 = 0. Sets *capped when q is
// zero somewhere p is positive and returns the cap sentinel.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     bool* capped = nullptr);

// Softmax in f64 from a row of f32 logits.
std::vector<double> softmax_f64(const float* logits, int n);

// log P(answer) - log P(misleading) at one position (= logit difference).
float logit_diff(const float* logits, int n, int answer_id, int misleading_id);

// Probabilities renormalized over the 100 two-digit tokens.
// prob_diff_gt:  P(yy+1..99) - P(00..yy-1)
// prob_diff_10:  P(yy+1..yy+10) - P(yy-10..yy-1), ranges clipped to [0,99]
float prob_diff_gt(const float* logits, int n, const std::vector<int32_t>& two_digit_ids, int yy);
float prob_diff_10(const float* logits, int n, const std::vector<int32_t>& two_digit_ids, int yy);

// Tau-b between the rankings induced by two score vectors (tie-aware).
double kendall_tau(const std::vector<float>& a, const std::vector<float>& b);

float exact_match(const std::vector<int32_t>& predictions, const std::vector<int32_t>& references);
float accuracy(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
    double kl = 0.0;
    float exact_match = 0.0f;
    float accuracy = 0.0f;
    float logit_diff = 0.0f;
    float prob_diff = 0.0f;
    float prob_diff_10 = 0.0f;
    double kendall_tau = 0.0;
    float sparsity = 0.0f;
    int n_examples = 0;
    bool kl_capped = false;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EvalOptions {
    AblationMode ablation = AblationMode::Interchange;
    int batch_size = 32;
};

// Answer-position metrics of a circuit against the full model.
EvalReport evaluate_circuit(const DisentangledTransformer& model, const Circuit& circuit,
                            const std::vector<ExamplePair>& examples, TaskKind task,
                            const Vocab& vocab, const EvalOptions& opts = {});

struct EdgeFaithfulnessRecord {
    int edge_index = -1;
    double m_e = 0.0;  // KL(M || M \ {e})
    double c_e = 0.0;  // KL(M || C \ {e})
};

// Interchange-ablates one probe edge at a time from the full model and from
// the circuit, measuring answer-position KL against the intact model.
std::vector<EdgeFaithfulnessRecord> edge_faithfulness(const DisentangledTransformer& model,
                                                      const Circuit& circuit,
                                                      const std::vector<ExamplePair>& examples,
                                                      const std::vector<int>& probe_edges,
                                                      const EvalOptions& opts = {});

}  // namespace edgeprune
