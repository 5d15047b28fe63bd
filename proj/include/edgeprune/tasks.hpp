#pragma once

// Template-based clean/corrupted example generation with a word-level
// tokenizer, plus toy-model training so there is a competent model to prune.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "edgeprune/graph.hpp"
#include "edgeprune/model.hpp"

namespace edgeprune {

enum class TaskKind : uint8_t { Ioi, GreaterThan, GenderedPronoun, Other };

std::string task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

struct Vocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int32_t> index;
    int32_t pad_id = 0;
    int32_t bos_id = 1;

    int32_t add(const std::string& tok);
    int32_t id(const std::string& tok) const;            // throws on unknown token
    std::optional<int32_t> find(const std::string& tok) const;
    int32_t size() const { return static_cast<int32_t>(tokens.size()); }

    std::vector<int32_t> tokenize(const std::string& text) const;  // whitespace words
    std::string detokenize(const std::vector<int32_t>& ids) const;
};

struct ExamplePair {
    std::vector<int32_t> clean_tokens;
    std::vector<int32_t> corrupted_tokens;  // same length as clean
    int32_t answer_id = -1;
    std::optional<int32_t> misleading_id;
    int answer_position = 0;  // position whose next-token prediction is scored
    int template_id = 0;
    std::optional<int> gt_yy;  // greater-than: the start-year suffix of the clean example
    std::string clean_text;
    std::string corrupted_text;
};

struct Dataset {
    TaskKind task = TaskKind::Other;
    Vocab vocab;
    std::vector<ExamplePair> train, val, test;
    // greater-than: vocab ids of "00".."99" in numeric order
    std::vector<int32_t> two_digit_ids;
};

// Paper preset sizes.
struct SplitSizes {
    int train = 0;
    int val = 0;
    int test = 0;
};
inline constexpr SplitSizes kIoiSplitPreset{200, 200, 100};
inline constexpr SplitSizes kGreaterThanSplitPreset{150, 150, 500};
inline constexpr SplitSizes kGenderedPronounSplitPreset{150, 150, 100};
inline constexpr int kGreaterThanTemplates = 5;

// Clean example from (template, A, B); corruption swaps the name slots with
// another example's names. Throws if the name pool has fewer than 3 names or
// the requested sizes exceed the disjoint template x name-pair space.
Dataset gen_ioi(const SplitSizes& sizes, int n_templates, int name_pool, uint64_t seed);

// "The <noun> lasted from the year <cc> <yy> to the year <cc>" -> two-digit
// continuation; yy in [02, 98] so both answer ranges are non-empty.
Dataset gen_greater_than(const SplitSizes& sizes, uint64_t seed);

Dataset gen_gendered_pronoun(const SplitSizes& sizes, uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

struct ToyTrainConfig {
    ModelConfig model;
    int max_steps = 5000;
    int batch_size = 32;
    float lr = 3e-3f;
    float accuracy_bar = 0.95f;
    int eval_every = 100;
    uint64_t seed = 0;
    bool verbose = false;
};

struct ToyTrainFailure : std::runtime_error {
    float best_accuracy;
    ToyTrainFailure(const std::string& msg, float acc)
        : std::runtime_error(msg), best_accuracy(acc) {}
};

// Cross-entropy at the answer position until validation accuracy reaches the
// bar (restricted-range argmax for greater-than); throws ToyTrainFailure with
// the best accuracy if the budget runs out.
DisentangledTransformer train_toy_lm(const Dataset& ds, const ToyTrainConfig& cfg);

// Validation accuracy of a trained model on a split.
float toy_accuracy(const DisentangledTransformer& model, const Dataset& ds,
                   const std::vector<ExamplePair>& split, int batch_size = 64);

// Batching helpers shared by the pruner/baselines/metrics.
Batch make_batch(const std::vector<ExamplePair>& examples, const std::vector<int>& idx,
                 int32_t pad_id, bool corrupted);

}  // namespace edgeprune
