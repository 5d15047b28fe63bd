#include "edgeprune/graph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace edgeprune {

void ModelConfig::validate() const {
    if (n_layers < 1) throw std::runtime_error("ModelConfig: n_layers must be >= 1");
    if (n_heads < 1) throw std::runtime_error("ModelConfig: n_heads must be >= 1");
    if (d_head * n_heads != d_model)
        throw std::runtime_error("ModelConfig: d_head * n_heads must equal d_model");
    if (vocab_size < 1 || max_seq < 1 || d_mlp < 1)
        throw std::runtime_error("ModelConfig: sizes must be positive");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.n_layers == b.n_layers && a.n_heads == b.n_heads && a.d_model == b.d_model &&
           a.d_head == b.d_head && a.d_mlp == b.d_mlp && a.vocab_size == b.vocab_size &&
           a.max_seq == b.max_seq && a.pre_layernorm == b.pre_layernorm &&
           a.use_layernorm == b.use_layernorm && a.causal == b.causal;
}

bool operator==(const WriterId& a, const WriterId& b) {
    return a.kind == b.kind && a.layer == b.layer && a.head == b.head;
}

bool operator==(const ReaderId& a, const ReaderId& b) {
    return a.kind == b.kind && a.layer == b.layer && a.head == b.head;
}

int n_writers(const ModelConfig& cfg) { return 1 + cfg.n_layers * (cfg.n_heads + 1); }

int n_readers(const ModelConfig& cfg) { return cfg.n_layers * (3 * cfg.n_heads + 1) + 1; }

int writer_index(const ModelConfig& cfg, const WriterId& w) {
    switch (w.kind) {
        case WriterKind::Embed:
            return 0;
        case WriterKind::HeadOut:
            return 1 + w.layer * (cfg.n_heads + 1) + w.head;
        case WriterKind::MlpOut:
            return 1 + w.layer * (cfg.n_heads + 1) + cfg.n_heads;
    }
    return -1;
}

WriterId writer_from_index(const ModelConfig& cfg, int idx) {
    if (idx == 0) return {WriterKind::Embed, 0, 0};
    const int per = cfg.n_heads + 1;
    const int layer = (idx - 1) / per;
    const int slot = (idx - 1) % per;
    if (slot < cfg.n_heads) return {WriterKind::HeadOut, layer, slot};
    return {WriterKind::MlpOut, layer, 0};
}

int reader_index(const ModelConfig& cfg, const ReaderId& r) {
    const int per = 3 * cfg.n_heads + 1;
    switch (r.kind) {
        case ReaderKind::HeadQ:
            return r.layer * per + r.head * 3 + 0;
        case ReaderKind::HeadK:
            return r.layer * per + r.head * 3 + 1;
        case ReaderKind::HeadV:
            return r.layer * per + r.head * 3 + 2;
        case ReaderKind::MlpIn:
            return r.layer * per + 3 * cfg.n_heads;
        case ReaderKind::Logits:
            return cfg.n_layers * per;
    }
    return -1;
}

ReaderId reader_from_index(const ModelConfig& cfg, int idx) {
    const int per = 3 * cfg.n_heads + 1;
    if (idx == cfg.n_layers * per) return {ReaderKind::Logits, 0, 0};
    const int layer = idx / per;
    const int slot = idx % per;
    if (slot == 3 * cfg.n_heads) return {ReaderKind::MlpIn, layer, 0};
    const int head = slot / 3;
    switch (slot % 3) {
        case 0:
            return {ReaderKind::HeadQ, layer, head};
        case 1:
            return {ReaderKind::HeadK, layer, head};
        default:
            return {ReaderKind::HeadV, layer, head};
    }
}

int writers_before(const ModelConfig& cfg, const ReaderId& r) {
    switch (r.kind) {
        case ReaderKind::HeadQ:
        case ReaderKind::HeadK:
        case ReaderKind::HeadV:
            return 1 + r.layer * (cfg.n_heads + 1);
        case ReaderKind::MlpIn:
            return 1 + r.layer * (cfg.n_heads + 1) + cfg.n_heads;
        case ReaderKind::Logits:
            return n_writers(cfg);
    }
    return 0;
}

std::string writer_name(const WriterId& w) {
    std::ostringstream os;
    switch (w.kind) {
        case WriterKind::Embed:
            os << "embed";
            break;
        case WriterKind::HeadOut:
            os << "a" << w.layer << ".h" << w.head;
            break;
        case WriterKind::MlpOut:
            os << "m" << w.layer;
            break;
    }
    return os.str();
}

std::string reader_name(const ReaderId& r) {
    std::ostringstream os;
    switch (r.kind) {
        case ReaderKind::HeadQ:
            os << "a" << r.layer << ".h" << r.head << ".q";
            break;
        case ReaderKind::HeadK:
            os << "a" << r.layer << ".h" << r.head << ".k";
            break;
        case ReaderKind::HeadV:
            os << "a" << r.layer << ".h" << r.head << ".v";
            break;
        case ReaderKind::MlpIn:
            os << "m" << r.layer;
            break;
        case ReaderKind::Logits:
            os << "logits";
            break;
    }
    return os.str();
}

std::optional<WriterId> writer_from_name(const std::string& name) {
    if (name == "embed") return WriterId{WriterKind::Embed, 0, 0};
    if (name.size() >= 2 && name[0] == 'm') {
        try {
            return WriterId{WriterKind::MlpOut, std::stoi(name.substr(1)), 0};
        } catch (...) {
            return std::nullopt;
        }
    }
    if (name.size() >= 4 && name[0] == 'a') {
        auto dot = name.find(".h");
        if (dot == std::string::npos) return std::nullopt;
        try {
            int layer = std::stoi(name.substr(1, dot - 1));
            int head = std::stoi(name.substr(dot + 2));
            return WriterId{WriterKind::HeadOut, layer, head};
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<ReaderId> reader_from_name(const std::string& name) {
    if (name == "logits") return ReaderId{ReaderKind::Logits, 0, 0};
    if (!name.empty() && name[0] == 'm') {
        try {
            return ReaderId{ReaderKind::MlpIn, std::stoi(name.substr(1)), 0};
        } catch (...) {
            return std::nullopt;
        }
    }
    if (!name.empty() && name[0] == 'a') {
        auto dot = name.find(".h");
        auto slot = name.rfind('.');
        if (dot == std::string::npos || slot == dot) return std::nullopt;
        try {
            int layer = std::stoi(name.substr(1, dot - 1));
            int head = std::stoi(name.substr(dot + 2, slot - dot - 2));
            char c = name.back();
            ReaderKind k = c == 'q'   ? ReaderKind::HeadQ
                           : c == 'k' ? ReaderKind::HeadK
                           : c == 'v' ? ReaderKind::HeadV
                                      : ReaderKind::Logits;
            if (k == ReaderKind::Logits) return std::nullopt;
            return ReaderId{k, layer, head};
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::vector<Edge> enumerate_edges(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<Edge> edges;
    const int nr = n_readers(cfg);
    for (int ri = 0; ri < nr; ++ri) {
        const ReaderId r = reader_from_index(cfg, ri);
        const int nw = writers_before(cfg, r);
        for (int wi = 0; wi < nw; ++wi) edges.push_back({writer_from_index(cfg, wi), r});
    }
    return edges;
}

ComputationalGraph make_graph(const ModelConfig& cfg) {
    ComputationalGraph g;
    g.cfg = cfg;
    g.edges = enumerate_edges(cfg);
    g.writers = n_writers(cfg);
    g.readers = n_readers(cfg);
    g.edge_src.reserve(g.edges.size());
    g.edge_dst.reserve(g.edges.size());
    g.reader_edge_begin.assign(g.readers + 1, 0);
    for (const Edge& e : g.edges) {
        g.edge_src.push_back(writer_index(cfg, e.src));
        g.edge_dst.push_back(reader_index(cfg, e.dst));
    }
    for (int ri = 0, ei = 0; ri <= g.readers; ++ri) {
        while (ei < static_cast<int>(g.edges.size()) && g.edge_dst[ei] < ri) ++ei;
        g.reader_edge_begin[ri] = ei;
    }
    return g;
}

int ComputationalGraph::edge_index(int writer_idx, int reader_idx) const {
    const int b = reader_edge_begin[reader_idx];
    const int e = reader_edge_begin[reader_idx + 1];
    if (writer_idx < 0 || writer_idx >= e - b) return -1;
    // within a reader, edges are ordered by writer index starting at 0
    return b + writer_idx;
}

// ---------------------------------------------------------------------------

int Circuit::n_kept_edges() const {
    return static_cast<int>(std::count(kept_edges.begin(), kept_edges.end(), uint8_t{1}));
}

int Circuit::n_kept_nodes() const {
    return static_cast<int>(std::count(kept_nodes.begin(), kept_nodes.end(), uint8_t{1}));
}

float Circuit::sparsity() const {
    if (kept_edges.empty()) return 0.0f;
    return 1.0f - static_cast<float>(n_kept_edges()) / static_cast<float>(kept_edges.size());
}

bool Circuit::edge_active(const ComputationalGraph& g, int edge_idx) const {
    return kept_edges[edge_idx] && kept_nodes[g.edge_src[edge_idx]];
}

std::vector<int> Circuit::active_edge_indices(const ComputationalGraph& g) const {
    std::vector<int> out;
    for (int i = 0; i < g.n_edges(); ++i)
        if (edge_active(g, i)) out.push_back(i);
    return out;
}

Circuit full_circuit(const ComputationalGraph& g, const std::string& model_hash) {
    Circuit c;
    c.kept_edges.assign(g.n_edges(), 1);
    c.kept_nodes.assign(g.writers, 1);
    c.model_hash = model_hash;
    return c;
}

Circuit empty_circuit(const ComputationalGraph& g, const std::string& model_hash) {
    Circuit c;
    c.kept_edges.assign(g.n_edges(), 0);
    c.kept_nodes.assign(g.writers, 0);
    c.model_hash = model_hash;
    return c;
}

Circuit circuit_from_edges(const ComputationalGraph& g, const std::vector<int>& edge_indices,
                           const std::string& model_hash) {
    Circuit c = empty_circuit(g, model_hash);
    for (int ei : edge_indices) {
        c.kept_edges[ei] = 1;
        c.kept_nodes[g.edge_src[ei]] = 1;
    }
    return c;
}

IntersectionResult circuit_intersection(const ComputationalGraph& g, const Circuit& a,
                                        const Circuit& b) {
    if (a.model_hash != b.model_hash)
        throw std::runtime_error("circuit_intersection: circuits refer to different models (" +
                                 a.model_hash + " vs " + b.model_hash + ")");
    if (a.kept_edges.size() != b.kept_edges.size() ||
        static_cast<int>(a.kept_edges.size()) != g.n_edges())
        throw std::runtime_error("circuit_intersection: edge-count mismatch with graph");
    IntersectionResult res;
    res.circuit = empty_circuit(g, a.model_hash);
    int inter = 0;
    for (int i = 0; i < g.n_edges(); ++i) {
        if (a.kept_edges[i] && b.kept_edges[i]) {
            res.circuit.kept_edges[i] = 1;
            ++inter;
        }
    }
    for (size_t w = 0; w < res.circuit.kept_nodes.size(); ++w)
        res.circuit.kept_nodes[w] = a.kept_nodes[w] && b.kept_nodes[w];
    const int na = a.n_kept_edges(), nb = b.n_kept_edges();
    const int mn = std::min(na, nb);
    res.overlap_ratio = mn > 0 ? static_cast<float>(inter) / static_cast<float>(mn) : 0.0f;
    const double expected =
        static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(g.n_edges());
    res.chance_factor = expected > 0.0 ? static_cast<float>(inter / expected) : 0.0f;
    return res;
}

}  // namespace edgeprune
