#include <doctest.h>

#include <cmath>
#include <random>

#include "edgeprune/baselines.hpp"
#include "edgeprune/metrics.hpp"
#include "test_util.hpp"

using namespace edgeprune;

namespace {

std::vector<ExamplePair> random_pairs(int n, int len, int vocab, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ExamplePair> out;
    for (int i = 0; i < n; ++i) {
        ExamplePair ex;
        for (int t = 0; t < len; ++t) {
            ex.clean_tokens.push_back(static_cast<int32_t>(rng() % vocab));
            ex.corrupted_tokens.push_back(static_cast<int32_t>(rng() % vocab));
        }
        ex.answer_position = len - 1;
        ex.answer_id = 0;
        ex.misleading_id = 1;
        out.push_back(ex);
    }
    return out;
}

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 8;
    c.d_head = 8;
    c.d_mlp = 16;
    c.vocab_size = 9;
    c.max_seq = 6;
    return c;
}

// Dataset-mean answer-position KL(full || circuit), the metric ACDC greedily
// thresholds.
double circuit_kl(const DisentangledTransformer& model, const std::vector<ExamplePair>& data,
                  const Circuit& c) {
    EvalReport rep = evaluate_circuit(model, c, data, TaskKind::Other, Vocab{});
    return rep.kl;
}

// Independent re-execution of the greedy definition, evaluating candidate
// removals through evaluate_circuit instead of the production eval path.
std::vector<uint8_t> acdc_oracle(const DisentangledTransformer& model,
                                 const std::vector<ExamplePair>& data, float tau) {
    const ComputationalGraph& g = model.graph();
    std::vector<uint8_t> kept(g.n_edges(), 1);
    auto as_circuit = [&](const std::vector<uint8_t>& flags) {
        std::vector<int> idx;
        for (int i = 0; i < g.n_edges(); ++i)
            if (flags[i]) idx.push_back(i);
        Circuit c = circuit_from_edges(g, idx, model.config_hash());
        // greedy search has no node masks: sources of kept edges stay active
        return c;
    };
    double baseline = circuit_kl(model, data, as_circuit(kept));
    for (int ri = g.readers - 1; ri >= 0; --ri) {
        for (int ei = g.reader_edge_begin[ri]; ei < g.reader_edge_begin[ri + 1]; ++ei) {
            std::vector<uint8_t> cand = kept;
            cand[ei] = 0;
            const double kl = circuit_kl(model, data, as_circuit(cand));
            if (kl - baseline < tau) {
                kept = cand;
                baseline = kl;
            }
        }
    }
    return kept;
}

}  // namespace

TEST_CASE("acdc endpoints") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 3, 0.4f);
    std::vector<ExamplePair> data = random_pairs(12, 5, 9, 4);

    SUBCASE("huge threshold removes everything") {
        Circuit c = acdc(model, data, 1e9f);
        CHECK(c.n_kept_edges() == 0);
    }

    SUBCASE("zero threshold keeps every edge with a strictly positive effect") {
        // random dense model: every ablation hurts, so nothing falls below 0
        Circuit c = acdc(model, data, 0.0f);
        // sanity: some edges may be exactly neutral in f64; all others stay
        CHECK(c.n_kept_edges() >= model.graph().n_edges() - 2);
    }

    SUBCASE("empty dataset and negative threshold are rejected") {
        CHECK_THROWS(acdc(model, {}, 0.1f));
        CHECK_THROWS(acdc(model, data, -1.0f));
    }
}

TEST_CASE("acdc matches the step-by-step greedy oracle on an 8-edge model") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 21, 0.4f);
    REQUIRE(model.graph().n_edges() == 8);
    std::vector<ExamplePair> data = random_pairs(10, 5, 9, 22);
    for (float tau : {1e-4f, 1e-3f, 1e-2f, 1e-1f}) {
        Circuit got = acdc(model, data, tau);
        std::vector<uint8_t> want = acdc_oracle(model, data, tau);
        INFO("tau ", tau);
        CHECK(got.kept_edges == want);
    }
}

TEST_CASE("acdc is deterministic for a fixed dataset order") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 31, 0.4f);
    std::vector<ExamplePair> data = random_pairs(10, 5, 9, 32);
    Circuit a = acdc(model, data, 5e-3f);
    Circuit b = acdc(model, data, 5e-3f);
    CHECK(a.kept_edges == b.kept_edges);
}

TEST_CASE("eap scores vanish when corrupted equals clean") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 41, 0.4f);
    std::vector<ExamplePair> data = random_pairs(6, 5, 9, 42);
    for (ExamplePair& ex : data) ex.corrupted_tokens = ex.clean_tokens;
    EdgeScoreTable t = eap_scores(model, data);
    for (float s : t.score) CHECK(std::abs(s) < 1e-6f);
}

TEST_CASE("eap equals exact patching on a linear model") {
    // a model that is linear in every reader input: no layer norm, constant
    // (zero-score) attention pattern, silenced MLP
    ModelConfig c = tiny_cfg();
    c.use_layernorm = false;
    DisentangledTransformer model = DisentangledTransformer::random_init(c, 51, 0.4f);
    auto& lp = model.params().layers[0];
    for (float& v : lp.heads[0].wq.values()) v = 0.0f;
    for (float& v : lp.heads[0].bq.values()) v = 0.0f;
    for (float& v : lp.heads[0].wk.values()) v = 0.0f;
    for (float& v : lp.heads[0].bk.values()) v = 0.0f;
    for (float& v : lp.w1.values()) v = 0.0f;
    for (float& v : lp.b1.values()) v = 0.0f;

    std::vector<ExamplePair> data = random_pairs(8, 5, 9, 52);
    EapOptions opts;
    opts.metric = EapMetric::LogitDiffClean;
    EdgeScoreTable table = eap_scores(model, data, opts);

    const ComputationalGraph& g = model.graph();
    // exact patching effect of removing edge e alone, averaged over examples
    auto exact_effect = [&](int e) {
        double total = 0.0;
        for (const ExamplePair& ex : data) {
            Batch clean{ex.clean_tokens, 1, 5, {5}};
            Batch corr{ex.corrupted_tokens, 1, 5, {5}};
            Circuit cut = full_circuit(g, model.config_hash());
            cut.kept_edges[e] = 0;
            ForwardResult base = model.forward_standard(clean);
            ForwardResult patched = model.circuit_forward(clean, corr, cut);
            const int V = c.vocab_size;
            const float* pb = base.logits.data() + ex.answer_position * V;
            const float* pp = patched.logits.data() + ex.answer_position * V;
            const double lb = pb[ex.answer_id] - pb[*ex.misleading_id];
            const double lp_ = pp[ex.answer_id] - pp[*ex.misleading_id];
            total += lp_ - lb;
        }
        return total / data.size();
    };
    for (int e = 0; e < g.n_edges(); ++e) {
        // removing e moves z_e from 1 to 0: delta L = -dL/dz_e exactly on a
        // linear model
        const double expect = -table.signed_score[e];
        const double got = exact_effect(e);
        INFO("edge ", e, " first-order ", expect, " exact ", got);
        CHECK(std::abs(got - expect) < 1e-5);
    }
}

TEST_CASE("eap first-order error scales quadratically in the perturbation") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 61, 0.4f);
    std::vector<ExamplePair> data = random_pairs(1, 5, 9, 62);
    EapOptions opts;
    opts.metric = EapMetric::LogitDiffClean;
    EdgeScoreTable table = eap_scores(model, data, opts);

    const ExamplePair& ex = data[0];
    Batch clean{ex.clean_tokens, 1, 5, {5}};
    Batch corr{ex.corrupted_tokens, 1, 5, {5}};
    NoGradScope ng;
    ActivationCache cache = model.forward_standard(corr).cache;
    const int V = model.config().vocab_size;
    auto loss_at = [&](const std::vector<float>& gates) {
        GateSpec spec;
        spec.const_gates = &gates;
        ForwardResult res = model.forward_disentangled(clean, &cache, spec);
        const float* row = res.logits.data() + ex.answer_position * V;
        return static_cast<double>(row[ex.answer_id]) - row[*ex.misleading_id];
    };
    const ComputationalGraph& g = model.graph();
    std::vector<float> ones(g.n_edges(), 1.0f);
    const double base = loss_at(ones);
    // median error ratio across edges should sit near (1e-3/1e-4)^2 / 10 = 10...
    // i.e. err(delta)/delta^2 roughly constant: check err ratio ~ 100 within 3x
    std::vector<double> ratios;
    for (int e = 0; e < g.n_edges(); ++e) {
        auto err_at = [&](double delta) {
            std::vector<float> gates = ones;
            gates[e] = static_cast<float>(1.0 - delta);
            const double moved = loss_at(gates);
            const double first_order = -delta * table.signed_score[e];
            return std::abs(moved - base - first_order);
        };
        const double big = err_at(1e-2);
        const double small = err_at(1e-3);
        if (small < 1e-9) continue;  // flat direction: nothing to measure
        ratios.push_back(big / small);
    }
    REQUIRE(!ratios.empty());
    std::sort(ratios.begin(), ratios.end());
    const double median = ratios[ratios.size() / 2];
    INFO("median error ratio ", median);
    CHECK(median > 100.0 / 3.0);
    CHECK(median < 100.0 * 3.0);
}

TEST_CASE("eap runs one gradient forward and one backward per example") {
    DisentangledTransformer model = DisentangledTransformer::random_init(tiny_cfg(), 71, 0.4f);
    std::vector<ExamplePair> data = random_pairs(9, 5, 9, 72);
    model.reset_counters();
    EapInstrumentation instr;
    eap_scores(model, data, {}, &instr);
    CHECK(instr.nograd_forward_examples == 9);
    CHECK(instr.grad_forward_examples == 9);
    CHECK(instr.backward_examples == 9);
    CHECK(model.counters().grad_examples == 9);
    CHECK(model.counters().nograd_examples == 9);
}

TEST_CASE("top-k selection") {
    ModelConfig c = tiny_cfg();
    ComputationalGraph g = make_graph(c);
    EdgeScoreTable t;
    t.score = {3, 1, 2, 0, 0, 0, 0, 0};
    t.signed_score = t.score;

    Circuit none = eap_top_k(t, g, 0, "m");
    CHECK(none.n_kept_edges() == 0);
    Circuit all = eap_top_k(t, g, g.n_edges(), "m");
    CHECK(all.n_kept_edges() == g.n_edges());
    Circuit two = eap_top_k(t, g, 2, "m");
    CHECK(two.kept_edges[0]);
    CHECK(two.kept_edges[2]);
    CHECK(two.n_kept_edges() == 2);
    // ties broken by canonical order
    Circuit four = eap_top_k(t, g, 4, "m");
    CHECK(four.kept_edges[3]);
    CHECK_FALSE(four.kept_edges[4]);
    CHECK_THROWS(eap_top_k(t, g, 100, "m"));

    const std::string csv = scores_to_csv(t, g);
    CHECK(csv.find("embed,a0.h0.q,3") != std::string::npos);
}
