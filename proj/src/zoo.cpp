#include "edgeprune/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace edgeprune {

namespace {

// xproportion feature layout (d_model = 5):
//   [0..3] token one-hot (0 = BOS, 3 = 'x'), [4] fraction readout
constexpr int kXpTok = 0;
constexpr int kXpOut = 4;
constexpr int kXpD = 5;
constexpr float kXpKeyGain = 30.0f;   // BOS score ~ -30: excluded from the average
constexpr float kXpReadout = 5.0f;    // logits column 0 = readout * fraction

// reverse feature layout (d_model = 27, max_seq = 6):
//   [0..3]   token one-hot (0 = BOS)
//   [4..9]   position one-hot
//   [10]     c = 1/n (uniform attention over all positions, value = is_bos)
//   [11..16] nu: one-hot of the sequence length n in 1..6
//   [17..22] q: one-hot of the target position n-i in 0..5
//   [23..26] retrieved token one-hot
constexpr int kRvTok = 0;
constexpr int kRvPos = 4;
constexpr int kRvC = 10;
constexpr int kRvNu = 11;
constexpr int kRvQ = 17;
constexpr int kRvOut = 23;
constexpr int kRvD = 27;
constexpr int kRvMaxSeq = 6;
constexpr float kRvRamp = 1e4f;      // GELU(kRvRamp * x) / kRvRamp ~ relu(x)
constexpr float kRvAnd = 30.0f;      // AND-unit margin
constexpr float kRvMatch = 16.0f;    // index-match attention score
constexpr float kRvBosMatch = 32.0f; // BOS-query attention score
constexpr float kRvReadout = 10.0f;

void set(Tensor& t, int row, int col, float v) {
    t.data()[static_cast<size_t>(row) * t.shape().back() + col] = v;
}

}  // namespace

CompiledModel build_xproportion() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 1;
    cfg.d_model = kXpD;
    cfg.d_head = kXpD;
    cfg.d_mlp = 4;
    cfg.vocab_size = 4;
    cfg.max_seq = 10;
    cfg.use_layernorm = false;
    cfg.causal = true;

    CompiledModel cm(cfg);
    ModelParams& p = cm.model.params();
    for (int t = 0; t < 4; ++t) set(p.wte, t, kXpTok + t, 1.0f);
    // wpe stays zero: the averaging head needs no positional wiring

    AttentionHeadParams& head = p.layers[0].heads[0];
    const float rdh = std::sqrt(static_cast<float>(cfg.d_head));
    // constant query from the bias; keys knock BOS out of the average
    head.bq.data()[0] = rdh;
    set(head.wk, kXpTok + 0, 0, -kXpKeyGain);
    // value carries is-x; the head writes the running fraction
    set(head.wv, kXpTok + 3, 0, 1.0f);
    set(head.wo, 0, kXpOut, 1.0f);

    set(p.wu, kXpOut, 0, kXpReadout);

    cm.numeric_scale = kXpReadout;
    const ComputationalGraph& g = cm.model.graph();
    auto edge = [&](WriterId w, ReaderId r) {
        const int ei = g.edge_index(writer_index(cfg, w), reader_index(cfg, r));
        if (ei < 0) throw std::runtime_error("build_xproportion: bad ground-truth edge");
        return ei;
    };
    cm.ground_truth = circuit_from_edges(
        g,
        {
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadK, 0, 0}),
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadV, 0, 0}),
            edge({WriterKind::HeadOut, 0, 0}, {ReaderKind::Logits, 0, 0}),
        },
        cm.model.config_hash());
    return cm;
}

CompiledModel build_reverse() {
    ModelConfig cfg;
    cfg.n_layers = 3;
    cfg.n_heads = 1;
    cfg.d_model = kRvD;
    cfg.d_head = kRvD;
    cfg.d_mlp = 48;
    cfg.vocab_size = 4;
    cfg.max_seq = kRvMaxSeq;
    cfg.use_layernorm = false;
    cfg.causal = false;

    CompiledModel cm(cfg);
    ModelParams& p = cm.model.params();
    for (int t = 0; t < 4; ++t) set(p.wte, t, kRvTok + t, 1.0f);
    for (int i = 0; i < kRvMaxSeq; ++i) set(p.wpe, i, kRvPos + i, 1.0f);

    // Layer 0 head: zero queries/keys -> uniform bidirectional attention;
    // averaging is-bos over all n positions writes c = 1/n everywhere.
    {
        AttentionHeadParams& head = p.layers[0].heads[0];
        set(head.wv, kRvTok + 0, 0, 1.0f);
        set(head.wo, 0, kRvC, 1.0f);
    }

    // Layer 0 MLP: piecewise-linear hats over the grid c = 1/n recover a
    // one-hot of n. Three saturated-GELU ramps per hat are exact at the grid.
    {
        LayerParams& lp = p.layers[0];
        int unit = 0;
        for (int n = 1; n <= kRvMaxSeq; ++n) {
            const float b = 1.0f / n;
            const float below = n < kRvMaxSeq ? 1.0f / (n + 1) : b - (1.0f / (n - 1) - b);
            const float above = n > 1 ? 1.0f / (n - 1) : 1.0f + (1.0f - 0.5f);
            const float a = 0.5f * (below + b);
            const float d = 0.5f * (b + above);
            const float rise = 1.0f / (b - a);
            const float fall = 1.0f / (d - b);
            const float theta[3] = {a, b, d};
            const float coef[3] = {rise, -(rise + fall), fall};
            for (int r = 0; r < 3; ++r) {
                set(lp.w1, kRvC, unit, kRvRamp);
                lp.b1.data()[unit] = -kRvRamp * theta[r];
                set(lp.w2, unit, kRvNu + (n - 1), coef[r] / kRvRamp);
                ++unit;
            }
        }
    }

    // Layer 1 MLP: AND units u(i, n) = gelu(M*(pos_i + nu_n) - 1.5M) light up
    // the target-position one-hot q at m = n - i.
    {
        LayerParams& lp = p.layers[1];
        int unit = 0;
        for (int i = 0; i < kRvMaxSeq; ++i) {
            for (int n = 1; n <= kRvMaxSeq; ++n) {
                const int m = n - i;
                if (m < 1 || m >= kRvMaxSeq) continue;
                set(lp.w1, kRvPos + i, unit, kRvAnd);
                set(lp.w1, kRvNu + (n - 1), unit, kRvAnd);
                lp.b1.data()[unit] = -1.5f * kRvAnd;
                set(lp.w2, unit, kRvQ + m, 1.0f / (0.5f * kRvAnd));
                ++unit;
            }
        }
        if (unit > cfg.d_mlp) throw std::runtime_error("build_reverse: d_mlp too small");
    }

    // Layer 2 head: queries carry the target one-hot (plus a BOS anchor);
    // keys carry position one-hots, so attention retrieves the token at n-i.
    {
        AttentionHeadParams& head = p.layers[2].heads[0];
        const float rdh = std::sqrt(static_cast<float>(cfg.d_head));
        for (int m = 0; m < kRvMaxSeq; ++m) {
            set(head.wq, kRvQ + m, m, kRvMatch * rdh);
            set(head.wk, kRvPos + m, m, 1.0f);
        }
        set(head.wq, kRvTok + 0, kRvMaxSeq, kRvBosMatch * rdh);
        set(head.wk, kRvTok + 0, kRvMaxSeq, 1.0f);
        for (int t = 0; t < 4; ++t) {
            set(head.wv, kRvTok + t, kRvMaxSeq + 1 + t, 1.0f);
            set(head.wo, kRvMaxSeq + 1 + t, kRvOut + t, 1.0f);
        }
    }

    for (int t = 0; t < 4; ++t) set(p.wu, kRvOut + t, t, kRvReadout);

    const ComputationalGraph& g = cm.model.graph();
    auto edge = [&](WriterId w, ReaderId r) {
        const int ei = g.edge_index(writer_index(cfg, w), reader_index(cfg, r));
        if (ei < 0) throw std::runtime_error("build_reverse: bad ground-truth edge");
        return ei;
    };
    cm.ground_truth = circuit_from_edges(
        g,
        {
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadV, 0, 0}),
            edge({WriterKind::HeadOut, 0, 0}, {ReaderKind::MlpIn, 0, 0}),
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::MlpIn, 1, 0}),
            edge({WriterKind::MlpOut, 0, 0}, {ReaderKind::MlpIn, 1, 0}),
            edge({WriterKind::MlpOut, 1, 0}, {ReaderKind::HeadQ, 2, 0}),
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadQ, 2, 0}),
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadK, 2, 0}),
            edge({WriterKind::Embed, 0, 0}, {ReaderKind::HeadV, 2, 0}),
            edge({WriterKind::HeadOut, 2, 0}, {ReaderKind::Logits, 0, 0}),
        },
        cm.model.config_hash());
    return cm;
}

std::vector<float> xproportion_expected(const std::vector<int32_t>& tokens) {
    std::vector<float> out(tokens.size(), 0.0f);
    int count = 0;
    for (size_t i = 1; i < tokens.size(); ++i) {
        if (tokens[i] == 3) ++count;
        out[i] = static_cast<float>(count) / static_cast<float>(i);
    }
    return out;
}

std::vector<int32_t> reverse_expected(const std::vector<int32_t>& tokens) {
    const int n = static_cast<int>(tokens.size());
    std::vector<int32_t> out(n, kZooBos);
    for (int i = 1; i < n; ++i) out[i] = tokens[n - i];
    return out;
}

std::vector<float> xproportion_decode(const CompiledModel& cm, const Tensor& logits,
                                      int example) {
    const Shape& s = logits.shape();
    const int S = s[1], V = s[2];
    std::vector<float> out(S);
    const float* pl = logits.data() + static_cast<size_t>(example) * S * V;
    for (int i = 0; i < S; ++i) out[i] = pl[static_cast<size_t>(i) * V] / cm.numeric_scale;
    return out;
}

std::vector<int32_t> argmax_decode(const Tensor& logits, int example) {
    const Shape& s = logits.shape();
    const int S = s[1], V = s[2];
    std::vector<int32_t> out(S);
    const float* pl = logits.data() + static_cast<size_t>(example) * S * V;
    for (int i = 0; i < S; ++i) {
        const float* row = pl + static_cast<size_t>(i) * V;
        out[i] = static_cast<int32_t>(std::max_element(row, row + V) - row);
    }
    return out;
}

std::vector<std::vector<int32_t>> all_zoo_sequences(int n_symbols, int max_len) {
    std::vector<std::vector<int32_t>> out;
    for (int len = 1; len <= max_len; ++len) {
        int64_t total = 1;
        for (int i = 0; i < len; ++i) total *= n_symbols;
        for (int64_t code = 0; code < total; ++code) {
            std::vector<int32_t> seq{kZooBos};
            int64_t c = code;
            for (int i = 0; i < len; ++i) {
                seq.push_back(1 + static_cast<int32_t>(c % n_symbols));
                c /= n_symbols;
            }
            out.push_back(std::move(seq));
        }
    }
    return out;
}

std::vector<ExamplePair> zoo_prune_examples(int n_symbols, int seq_len, int count,
                                            uint64_t seed) {
    if (seq_len < 2) throw std::runtime_error("zoo_prune_examples: need BOS plus symbols");
    std::mt19937_64 rng(seed);
    std::vector<ExamplePair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        ExamplePair ex;
        ex.clean_tokens.push_back(kZooBos);
        for (int j = 1; j < seq_len; ++j)
            ex.clean_tokens.push_back(1 + static_cast<int32_t>(rng() % n_symbols));
        ex.corrupted_tokens = ex.clean_tokens;  // unused under zero ablation
        ex.answer_id = ex.clean_tokens.back();
        ex.answer_position = seq_len - 1;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace edgeprune
