#pragma once

// Hand-weighted transformers implementing two known programs, with their
// canonical circuits, for exact-recovery experiments under zero ablation.
//
// xproportion: 2-layer causal model over {BOS, a, b, x}; position i holds the
// fraction of x's among positions 1..i in a designated readout column.
//
// reverse: 3-layer bidirectional model over {BOS, s0, s1, s2}; position i
// yields the token at position n-i (BOS maps to BOS), i.e. the reversed list.

#include <cstdint>
#include <string>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/model.hpp"
#include "edgeprune/tasks.hpp"

namespace edgeprune {

struct CompiledModel {
    DisentangledTransformer model;
    Circuit ground_truth;
    AblationMode ablation = AblationMode::Zero;
    // xproportion: fraction at position i = logits[i][0] / numeric_scale
    float numeric_scale = 1.0f;

    explicit CompiledModel(const ModelConfig& cfg) : model(cfg) {}
};

// Token ids shared by both fixtures: BOS = 0, symbols start at 1.
inline constexpr int32_t kZooBos = 0;

CompiledModel build_xproportion();
CompiledModel build_reverse();

// Reference behaviors (the oracles the fixtures are validated against).
// tokens include the leading BOS.
std::vector<float> xproportion_expected(const std::vector<int32_t>& tokens);
std::vector<int32_t> reverse_expected(const std::vector<int32_t>& tokens);

// Decoded model outputs.
std::vector<float> xproportion_decode(const CompiledModel& cm, const Tensor& logits, int example);
std::vector<int32_t> argmax_decode(const Tensor& logits, int example);

// The exhaustive list of sequences BOS + (1..max_len symbols) over an
// alphabet of n_symbols.
std::vector<std::vector<int32_t>> all_zoo_sequences(int n_symbols, int max_len);

// Fixed-length example pairs for pruning a compiled model under zero
// ablation (the corrupted side is unused; one length keeps batches uniform,
// which the bidirectional fixture requires).
std::vector<ExamplePair> zoo_prune_examples(int n_symbols, int seq_len, int count, uint64_t seed);

}  // namespace edgeprune
