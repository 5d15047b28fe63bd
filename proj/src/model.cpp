#include "edgeprune/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edgeprune/io.hpp"

namespace edgeprune {

using nlohmann::json;

DisentangledTransformer::DisentangledTransformer(const ModelConfig& cfg)
    : cfg_(cfg), graph_(make_graph(cfg)) {
    cfg_.validate();
    const int d = cfg.d_model, dh = cfg.d_head, m = cfg.d_mlp;
    p_.wte = Tensor::zeros({cfg.vocab_size, d});
    p_.wpe = Tensor::zeros({cfg.max_seq, d});
    p_.layers.resize(cfg.n_layers);
    for (LayerParams& lp : p_.layers) {
        lp.ln1_g = Tensor::full({d}, 1.0f);
        lp.ln1_b = Tensor::zeros({d});
        lp.ln2_g = Tensor::full({d}, 1.0f);
        lp.ln2_b = Tensor::zeros({d});
        lp.heads.resize(cfg.n_heads);
        for (AttentionHeadParams& hp : lp.heads) {
            hp.wq = Tensor::zeros({d, dh});
            hp.bq = Tensor::zeros({dh});
            hp.wk = Tensor::zeros({d, dh});
            hp.bk = Tensor::zeros({dh});
            hp.wv = Tensor::zeros({d, dh});
            hp.bv = Tensor::zeros({dh});
            hp.wo = Tensor::zeros({dh, d});
        }
        lp.w1 = Tensor::zeros({d, m});
        lp.b1 = Tensor::zeros({m});
        lp.w2 = Tensor::zeros({m, d});
        lp.b2 = Tensor::zeros({d});
    }
    p_.lnf_g = Tensor::full({d}, 1.0f);
    p_.lnf_b = Tensor::zeros({d});
    p_.wu = Tensor::zeros({d, cfg.vocab_size});
}

DisentangledTransformer DisentangledTransformer::random_init(const ModelConfig& cfg, uint64_t seed,
                                                             float weight_std) {
    DisentangledTransformer model(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, weight_std);
    auto fill = [&](Tensor& t) {
        for (float& v : t.values()) v = dist(rng);
    };
    fill(model.p_.wte);
    fill(model.p_.wpe);
    for (LayerParams& lp : model.p_.layers) {
        for (AttentionHeadParams& hp : lp.heads) {
            fill(hp.wq);
            fill(hp.wk);
            fill(hp.wv);
            fill(hp.wo);
        }
        fill(lp.w1);
        fill(lp.w2);
    }
    fill(model.p_.wu);
    return model;
}

std::vector<std::pair<std::string, Tensor>> DisentangledTransformer::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("wte", p_.wte);
    out.emplace_back("wpe", p_.wpe);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const LayerParams& lp = p_.layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        out.emplace_back(pre + "ln1_g", lp.ln1_g);
        out.emplace_back(pre + "ln1_b", lp.ln1_b);
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const AttentionHeadParams& hp = lp.heads[h];
            const std::string hp_pre = pre + "h" + std::to_string(h) + ".";
            out.emplace_back(hp_pre + "wq", hp.wq);
            out.emplace_back(hp_pre + "bq", hp.bq);
            out.emplace_back(hp_pre + "wk", hp.wk);
            out.emplace_back(hp_pre + "bk", hp.bk);
            out.emplace_back(hp_pre + "wv", hp.wv);
            out.emplace_back(hp_pre + "bv", hp.bv);
            out.emplace_back(hp_pre + "wo", hp.wo);
        }
        out.emplace_back(pre + "ln2_g", lp.ln2_g);
        out.emplace_back(pre + "ln2_b", lp.ln2_b);
        out.emplace_back(pre + "w1", lp.w1);
        out.emplace_back(pre + "b1", lp.b1);
        out.emplace_back(pre + "w2", lp.w2);
        out.emplace_back(pre + "b2", lp.b2);
    }
    out.emplace_back("lnf_g", p_.lnf_g);
    out.emplace_back("lnf_b", p_.lnf_b);
    out.emplace_back("wu", p_.wu);
    return out;
}

std::vector<Tensor> DisentangledTransformer::parameter_list() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

void DisentangledTransformer::set_requires_grad(bool rg) {
    for (auto& [name, t] : named_parameters()) const_cast<Tensor&>(t).set_requires_grad(rg);
}

std::string DisentangledTransformer::config_hash() const {
    std::ostringstream os;
    os << cfg_.n_layers << "|" << cfg_.n_heads << "|" << cfg_.d_model << "|" << cfg_.d_head << "|"
       << cfg_.d_mlp << "|" << cfg_.vocab_size << "|" << cfg_.max_seq << "|" << cfg_.pre_layernorm
       << "|" << cfg_.use_layernorm << "|" << cfg_.causal;
    return hex64(fnv64(os.str()));
}

namespace {

void validate_batch(const ModelConfig& cfg, const Batch& batch) {
    if (batch.batch <= 0 || batch.seq <= 0)
        throw std::runtime_error("forward: empty batch");
    if (batch.seq > cfg.max_seq)
        throw std::runtime_error("forward: sequence length " + std::to_string(batch.seq) +
                                 " exceeds max_seq " + std::to_string(cfg.max_seq));
    if (static_cast<int64_t>(batch.tokens.size()) != batch.size())
        throw std::runtime_error("forward: token buffer size does not match batch dims");
    for (int32_t t : batch.tokens)
        if (t < 0 || t >= cfg.vocab_size)
            throw std::runtime_error("forward: token id " + std::to_string(t) +
                                     " out of vocabulary range [0," +
                                     std::to_string(cfg.vocab_size) + ")");
}

Tensor causal_mask(int seq) {
    Tensor m = Tensor::zeros({seq, seq});
    float* pm = m.data();
    for (int i = 0; i < seq; ++i)
        for (int j = i + 1; j < seq; ++j) pm[i * seq + j] = -1e9f;
    return m;
}

}  // namespace

ForwardResult DisentangledTransformer::forward_impl(const Batch& batch,
                                                    const ActivationCache* corrupted,
                                                    const GateSpec* gates,
                                                    ForwardTrace* trace) const {
    validate_batch(cfg_, batch);
    const int B = batch.batch, S = batch.seq;
    const int d = cfg_.d_model, dh = cfg_.d_head;
    const bool disentangled = gates != nullptr;
    if (disentangled) {
        const bool interchange = gates->mode == AblationMode::Interchange;
        if (interchange && corrupted == nullptr)
            throw std::runtime_error("forward_disentangled: interchange mode needs a corrupted cache");
        if (corrupted != nullptr) {
            if (static_cast<int>(corrupted->writer_acts.size()) != graph_.writers)
                throw std::runtime_error("forward_disentangled: corrupted cache has " +
                                         std::to_string(corrupted->writer_acts.size()) +
                                         " writers, model has " + std::to_string(graph_.writers));
            const Shape want{B, S, d};
            for (const Tensor& t : corrupted->writer_acts)
                if (t.shape() != want)
                    throw_shape_error("forward_disentangled", {t.shape(), want},
                                      "corrupted cache entry");
        }
        if (gates->gate_tensor != nullptr) {
            if (gates->gate_tensor->numel() != graph_.n_edges())
                throw std::runtime_error("forward_disentangled: gate tensor has " +
                                         std::to_string(gates->gate_tensor->numel()) +
                                         " entries, graph has " +
                                         std::to_string(graph_.n_edges()) + " edges");
        } else if (gates->const_gates != nullptr) {
            if (static_cast<int>(gates->const_gates->size()) != graph_.n_edges())
                throw std::runtime_error("forward_disentangled: gate vector size mismatch");
        } else {
            throw std::runtime_error("forward_disentangled: no gates provided");
        }
    }
    if (trace) {
        trace->clean_used.assign(graph_.n_edges(), 0);
        trace->corrupted_used.assign(graph_.n_edges(), 0);
    }
    if (active_tape())
        counters_.grad_examples += B;
    else
        counters_.nograd_examples += B;

    ForwardResult res;
    res.cache.writer_acts.resize(graph_.writers);
    res.reader_inputs.resize(graph_.readers);

    // Embed writer: token + position embeddings.
    Tensor tok = embedding(p_.wte, batch.tokens, B, S);
    Tensor pos = slice(p_.wpe, 0, 0, S);
    Tensor emb = add(tok, pos);
    res.cache.writer_acts[0] = emb;

    // Running residual for the standard pass (bit-exact same add order as the
    // per-reader sums of the disentangled pass).
    Tensor resid = emb;

    auto reader_input = [&](const ReaderId& rid) -> Tensor {
        if (!disentangled) return resid;
        const int ri = reader_index(cfg_, rid);
        const int b = graph_.reader_edge_begin[ri];
        const int e = graph_.reader_edge_begin[ri + 1];
        std::vector<GateRef> grefs;
        std::vector<Tensor> clean, corr;
        grefs.reserve(e - b);
        clean.reserve(e - b);
        const bool interchange = gates->mode == AblationMode::Interchange;
        for (int ei = b; ei < e; ++ei) {
            GateRef gr = gates->gate_tensor
                             ? GateRef::element(*gates->gate_tensor, ei)
                             : GateRef::constant((*gates->const_gates)[ei]);
            grefs.push_back(gr);
            clean.push_back(res.cache.writer_acts[graph_.edge_src[ei]]);
            if (interchange) corr.push_back(corrupted->writer_acts[graph_.edge_src[ei]]);
            if (trace) {
                const float z = gr.get();
                if (z != 0.0f) trace->clean_used[ei] = 1;
                if (interchange && z != 1.0f) trace->corrupted_used[ei] = 1;
            }
        }
        return weighted_mix(grefs, clean, corr);
    };

    Tensor mask;
    if (cfg_.causal) mask = causal_mask(S);
    const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh));

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const LayerParams& lp = p_.layers[l];
        std::vector<Tensor> head_outs(cfg_.n_heads);
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const AttentionHeadParams& hp = lp.heads[h];
            Tensor xq = reader_input({ReaderKind::HeadQ, l, h});
            Tensor xk = reader_input({ReaderKind::HeadK, l, h});
            Tensor xv = reader_input({ReaderKind::HeadV, l, h});
            res.reader_inputs[reader_index(cfg_, {ReaderKind::HeadQ, l, h})] = xq;
            res.reader_inputs[reader_index(cfg_, {ReaderKind::HeadK, l, h})] = xk;
            res.reader_inputs[reader_index(cfg_, {ReaderKind::HeadV, l, h})] = xv;
            if (cfg_.use_layernorm) {
                xq = layer_norm(xq, lp.ln1_g, lp.ln1_b);
                xk = layer_norm(xk, lp.ln1_g, lp.ln1_b);
                xv = layer_norm(xv, lp.ln1_g, lp.ln1_b);
            }
            Tensor q = add(matmul(xq, hp.wq), hp.bq);
            Tensor k = add(matmul(xk, hp.wk), hp.bk);
            Tensor v = add(matmul(xv, hp.wv), hp.bv);
            Tensor scores = scale(matmul_nt(q, k), att_scale);
            if (cfg_.causal) scores = add(scores, mask);
            Tensor probs = softmax_last(scores);
            Tensor att = matmul(probs, v);
            head_outs[h] = matmul(att, hp.wo);
            res.cache.writer_acts[writer_index(cfg_, {WriterKind::HeadOut, l, h})] = head_outs[h];
        }
        if (!disentangled)
            for (int h = 0; h < cfg_.n_heads; ++h) resid = add(resid, head_outs[h]);

        Tensor xm = reader_input({ReaderKind::MlpIn, l, 0});
        res.reader_inputs[reader_index(cfg_, {ReaderKind::MlpIn, l, 0})] = xm;
        Tensor am = cfg_.use_layernorm ? layer_norm(xm, lp.ln2_g, lp.ln2_b) : xm;
        Tensor hidden = gelu(add(matmul(am, lp.w1), lp.b1));
        Tensor mlp_out = add(matmul(hidden, lp.w2), lp.b2);
        res.cache.writer_acts[writer_index(cfg_, {WriterKind::MlpOut, l, 0})] = mlp_out;
        if (!disentangled) resid = add(resid, mlp_out);
    }

    Tensor xl = reader_input({ReaderKind::Logits, 0, 0});
    res.reader_inputs[reader_index(cfg_, {ReaderKind::Logits, 0, 0})] = xl;
    Tensor al = cfg_.use_layernorm ? layer_norm(xl, p_.lnf_g, p_.lnf_b) : xl;
    res.logits = matmul(al, p_.wu);
    return res;
}

ForwardResult DisentangledTransformer::forward_standard(const Batch& batch) const {
    return forward_impl(batch, nullptr, nullptr, nullptr);
}

ForwardResult DisentangledTransformer::forward_disentangled(const Batch& batch,
                                                            const ActivationCache* corrupted,
                                                            const GateSpec& gates,
                                                            ForwardTrace* trace) const {
    return forward_impl(batch, corrupted, &gates, trace);
}

ForwardResult DisentangledTransformer::circuit_forward(const Batch& clean, const Batch& corrupted,
                                                       const Circuit& circuit, AblationMode mode,
                                                       ForwardTrace* trace) const {
    if (static_cast<int>(circuit.kept_edges.size()) != graph_.n_edges() ||
        static_cast<int>(circuit.kept_nodes.size()) != graph_.writers)
        throw std::runtime_error("circuit_forward: circuit size does not match model graph");
    if (!circuit.model_hash.empty() && circuit.model_hash != config_hash())
        throw std::runtime_error("circuit_forward: circuit was built for model " +
                                 circuit.model_hash + ", this model is " + config_hash());
    std::vector<float> gate_values(graph_.n_edges());
    for (int i = 0; i < graph_.n_edges(); ++i)
        gate_values[i] = circuit.edge_active(graph_, i) ? 1.0f : 0.0f;

    GateSpec spec;
    spec.const_gates = &gate_values;
    spec.mode = mode;
    if (mode == AblationMode::Interchange) {
        NoGradScope ng;
        ActivationCache cache = forward_standard(corrupted).cache;
        return forward_impl(clean, &cache, &spec, trace);
    }
    return forward_impl(clean, nullptr, &spec, trace);
}

// ---------------------------------------------------------------------------
// Checkpoint IO

void save_model(const DisentangledTransformer& model, const std::string& path) {
    const ModelConfig& c = model.config();
    json j;
    j["format_version"] = 1;
    j["model_config"] = {{"n_layers", c.n_layers},   {"n_heads", c.n_heads},
                         {"d_model", c.d_model},     {"d_head", c.d_head},
                         {"d_mlp", c.d_mlp},         {"vocab_size", c.vocab_size},
                         {"max_seq", c.max_seq},     {"pre_layernorm", c.pre_layernorm},
                         {"use_layernorm", c.use_layernorm}, {"causal", c.causal}};
    json params = json::object();
    for (const auto& [name, t] : model.named_parameters()) {
        params[name] = {{"shape", t.shape()}, {"data", t.values()}};
    }
    j["params"] = std::move(params);
    write_text_file(path, j.dump());
}

DisentangledTransformer load_model(const std::string& path) {
    json j = json::parse(read_text_file(path));
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
        throw std::runtime_error("load_model: unsupported checkpoint format in " + path);
    const json& jc = j.at("model_config");
    ModelConfig c;
    c.n_layers = jc.at("n_layers").get<int>();
    c.n_heads = jc.at("n_heads").get<int>();
    c.d_model = jc.at("d_model").get<int>();
    c.d_head = jc.at("d_head").get<int>();
    c.d_mlp = jc.at("d_mlp").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.max_seq = jc.at("max_seq").get<int>();
    c.pre_layernorm = jc.at("pre_layernorm").get<bool>();
    c.use_layernorm = jc.at("use_layernorm").get<bool>();
    c.causal = jc.at("causal").get<bool>();
    DisentangledTransformer model(c);
    const json& params = j.at("params");
    for (auto& [name, t] : model.named_parameters()) {
        if (!params.contains(name))
            throw std::runtime_error("load_model: missing parameter " + name);
        const json& p = params.at(name);
        Shape shape = p.at("shape").get<Shape>();
        if (shape != t.shape())
            throw std::runtime_error("load_model: shape mismatch for " + name);
        std::vector<float> data = p.at("data").get<std::vector<float>>();
        if (data.size() != t.values().size())
            throw std::runtime_error("load_model: size mismatch for " + name);
        const_cast<Tensor&>(t).values() = std::move(data);
    }
    return model;
}

}  // namespace edgeprune
