#pragma once

// Computational-graph data model: writers (embed, head outputs, MLP outputs),
// readers (per-head Q/K/V inputs, MLP inputs, logits) and the edges between
// them, in a fixed canonical order.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace edgeprune {

struct ModelConfig {
    int n_layers = 1;
    int n_heads = 1;
    int d_model = 8;
    int d_head = 8;
    int d_mlp = 16;
    int vocab_size = 8;
    int max_seq = 16;
    bool pre_layernorm = true;   // layer norm applied at each reader, after aggregation
    bool use_layernorm = true;   // compiled fixtures run without any layer norm
    bool causal = true;          // compiled `reverse` needs bidirectional attention

    void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

enum class WriterKind : uint8_t { Embed, HeadOut, MlpOut };
enum class ReaderKind : uint8_t { HeadQ, HeadK, HeadV, MlpIn, Logits };

struct WriterId {
    WriterKind kind = WriterKind::Embed;
    int layer = 0;
    int head = 0;
};

struct ReaderId {
    ReaderKind kind = ReaderKind::Logits;
    int layer = 0;
    int head = 0;
};

bool operator==(const WriterId& a, const WriterId& b);
bool operator==(const ReaderId& a, const ReaderId& b);

struct Edge {
    WriterId src;
    ReaderId dst;
};

int n_writers(const ModelConfig& cfg);
int n_readers(const ModelConfig& cfg);

// Topological index of a writer: embed < layer-0 heads < layer-0 mlp < ...
int writer_index(const ModelConfig& cfg, const WriterId& w);
WriterId writer_from_index(const ModelConfig& cfg, int idx);

// Reader order per layer: (q,k,v) per head, then mlp-in; logits last.
int reader_index(const ModelConfig& cfg, const ReaderId& r);
ReaderId reader_from_index(const ModelConfig& cfg, int idx);

// Number of writers topologically before a reader (all of them feed it).
int writers_before(const ModelConfig& cfg, const ReaderId& r);

std::string writer_name(const WriterId& w);
std::string reader_name(const ReaderId& r);
std::optional<WriterId> writer_from_name(const std::string& name);
std::optional<ReaderId> reader_from_name(const std::string& name);

// Every (writer, reader) pair with the writer topologically earlier, readers
// in canonical order, writers in canonical order within each reader.
std::vector<Edge> enumerate_edges(const ModelConfig& cfg);

struct ComputationalGraph {
    ModelConfig cfg;
    std::vector<Edge> edges;
    std::vector<int> edge_src;          // writer index per edge
    std::vector<int> edge_dst;          // reader index per edge
    std::vector<int> reader_edge_begin; // edges of reader r: [begin[r], begin[r+1])
    int writers = 0;
    int readers = 0;

    int n_edges() const { return static_cast<int>(edges.size()); }
    int edge_index(int writer_idx, int reader_idx) const;  // -1 if absent
};

ComputationalGraph make_graph(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Circuits

struct Circuit {
    std::vector<uint8_t> kept_edges;  // by canonical edge index
    std::vector<uint8_t> kept_nodes;  // by writer index
    std::string model_hash;

    int n_kept_edges() const;
    int n_kept_nodes() const;
    float sparsity() const;  // 1 - kept/total edges
    // An edge contributes only if kept and its source node is kept.
    bool edge_active(const ComputationalGraph& g, int edge_idx) const;
    std::vector<int> active_edge_indices(const ComputationalGraph& g) const;
};

Circuit full_circuit(const ComputationalGraph& g, const std::string& model_hash);
Circuit empty_circuit(const ComputationalGraph& g, const std::string& model_hash);
// Circuit from explicit edge indices; kept_nodes = sources of kept edges.
Circuit circuit_from_edges(const ComputationalGraph& g, const std::vector<int>& edge_indices,
                           const std::string& model_hash);

struct IntersectionResult {
    Circuit circuit;
    float overlap_ratio = 0.0f;  // |a ∩ b| / min(|a|, |b|)
    float chance_factor = 0.0f;  // |a ∩ b| / (|a||b| / |E|)
};

// Requires matching model identity; throws std::runtime_error otherwise.
IntersectionResult circuit_intersection(const ComputationalGraph& g, const Circuit& a,
                                        const Circuit& b);

}  // namespace edgeprune
