#include <doctest.h>

#include <cmath>
#include <random>

#include "edgeprune/metrics.hpp"
#include "edgeprune/tasks.hpp"
#include "edgeprune/zoo.hpp"

using namespace edgeprune;

namespace {

// O(n^2) pair-counting tau-b oracle.
double tau_oracle(const std::vector<float>& a, const std::vector<float>& b) {
    const int n = static_cast<int>(a.size());
    int64_t concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const float da = a[i] - a[j];
            const float db = b[i] - b[j];
            if (da == 0.0f && db == 0.0f) continue;
            if (da == 0.0f) {
                ++ties_a;
            } else if (db == 0.0f) {
                ++ties_b;
            } else if ((da > 0) == (db > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    const int64_t n0 = static_cast<int64_t>(n) * (n - 1) / 2;
    // pairs tied in both rankings count toward neither margin
    const int64_t joint = n0 - concordant - discordant - ties_a - ties_b;
    const double d1 = std::sqrt(static_cast<double>(n0 - (ties_a + joint)));
    const double d2 = std::sqrt(static_cast<double>(n0 - (ties_b + joint)));
    return (d1 * d2) > 0 ? (concordant - discordant) / (d1 * d2) : 0.0;
}

}  // namespace

TEST_CASE("kl divergence identities") {
    std::vector<double> p{0.2, 0.3, 0.5};
    CHECK(kl_divergence(p, p) == 0.0);

    std::vector<double> point{1.0, 0.0};
    std::vector<double> fair{0.5, 0.5};
    CHECK(kl_divergence(point, fair) == doctest::Approx(std::log(2.0)));

    // 0 log 0 = 0: q may vanish where p does
    std::vector<double> q{0.7, 0.0, 0.3};
    std::vector<double> pz{0.6, 0.0, 0.4};
    CHECK(std::isfinite(kl_divergence(pz, q)));

    bool capped = false;
    CHECK(kl_divergence(fair, point, &capped) == kKlCapSentinel);
    CHECK(capped);

    CHECK_THROWS(kl_divergence(p, fair));

    // the coin-flip reference for two-name tasks: KL(fair || point-ish)
    CHECK(std::log(2.0) == doctest::Approx(0.6931).epsilon(1e-3));
}

TEST_CASE("kl nonnegativity on random distributions") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(8), q(8);
        double sp = 0, sq = 0;
        for (int i = 0; i < 8; ++i) {
            p[i] = u(rng);
            q[i] = u(rng);
            sp += p[i];
            sq += q[i];
        }
        for (int i = 0; i < 8; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        CHECK(kl_divergence(p, q) >= 0.0);
    }
}

TEST_CASE("logit difference") {
    std::vector<float> uniform(6, 1.3f);
    CHECK(logit_diff(uniform.data(), 6, 2, 4) == 0.0f);

    // P = 0.9 vs 0.1 -> log 9
    std::vector<float> two{std::log(0.9f), std::log(0.1f)};
    CHECK(logit_diff(two.data(), 2, 0, 1) == doctest::Approx(std::log(9.0f)));
    CHECK(logit_diff(two.data(), 2, 1, 0) == doctest::Approx(-std::log(9.0f)));
    CHECK_THROWS(logit_diff(two.data(), 2, 0, 5));
}

TEST_CASE("greater-than probability differences") {
    std::vector<int32_t> two_digit(100);
    for (int i = 0; i < 100; ++i) two_digit[i] = i;

    SUBCASE("all mass on 99 at yy=50") {
        std::vector<float> logits(100, 0.0f);
        logits[99] = 50.0f;
        CHECK(prob_diff_gt(logits.data(), 100, two_digit, 50) == doctest::Approx(1.0f));
        // 99 is outside both ten-token windows
        CHECK(prob_diff_10(logits.data(), 100, two_digit, 50) ==
              doctest::Approx(0.0f).epsilon(1e-6));
    }

    SUBCASE("uniform distribution at yy=50") {
        std::vector<float> logits(100, 0.0f);
        CHECK(prob_diff_gt(logits.data(), 100, two_digit, 50) == doctest::Approx(-0.01f));
        CHECK(prob_diff_10(logits.data(), 100, two_digit, 50) == doctest::Approx(0.0f));
    }

    SUBCASE("clipped windows near the boundary") {
        std::vector<float> logits(100, 0.0f);
        logits[99] = 3.0f;
        // yy = 95: upper window clips to 96..99
        const float pd10 = prob_diff_10(logits.data(), 100, two_digit, 95);
        CHECK(pd10 > 0.0f);
        const float pd_low = prob_diff_10(logits.data(), 100, two_digit, 5);
        CHECK(std::isfinite(pd_low));
    }

    SUBCASE("restricted distribution sums to one") {
        std::mt19937_64 rng(3);
        std::vector<float> logits(140);
        std::normal_distribution<float> d(0.0f, 2.0f);
        for (float& v : logits) v = d(rng);
        std::vector<int32_t> ids(100);
        for (int i = 0; i < 100; ++i) ids[i] = i + 20;
        const float hi = prob_diff_gt(logits.data(), 140, ids, 2);
        const float lo = -prob_diff_gt(logits.data(), 140, ids, 97);
        // P(03..99) + P(00..01) ~ 1 and P(98..99) + P(00..96) ~ 1
        CHECK(hi <= 1.0f);
        CHECK(lo >= -1.0f);
    }
}

TEST_CASE("kendall tau") {
    std::vector<float> asc{1, 2, 3, 4, 5};
    std::vector<float> desc{5, 4, 3, 2, 1};
    CHECK(kendall_tau(asc, asc) == doctest::Approx(1.0));
    CHECK(kendall_tau(asc, desc) == doctest::Approx(-1.0));

    SUBCASE("matches the pair-counting oracle on random data with ties") {
        std::mt19937_64 rng(17);
        for (int t = 0; t < 100; ++t) {
            const int n = 3 + static_cast<int>(rng() % 40);
            std::vector<float> a(n), b(n);
            for (int i = 0; i < n; ++i) {
                a[i] = static_cast<float>(rng() % 7);  // many ties
                b[i] = static_cast<float>(rng() % 7);
            }
            CHECK(kendall_tau(a, b) == doctest::Approx(tau_oracle(a, b)).epsilon(1e-9));
        }
    }
}

TEST_CASE("exact match and accuracy") {
    std::vector<int32_t> a{1, 2, 3, 4};
    std::vector<int32_t> b{1, 2, 3, 4};
    std::vector<int32_t> c{5, 6, 7, 8};
    CHECK(exact_match(a, b) == 1.0f);
    CHECK(exact_match(a, c) == 0.0f);
    CHECK_THROWS(exact_match(a, std::vector<int32_t>{1}));

    // EM and accuracy can differ: the circuit copies a wrong model
    std::vector<int32_t> model_pred{9, 9};
    std::vector<int32_t> circuit_pred{9, 9};
    std::vector<int32_t> gold{1, 9};
    CHECK(exact_match(circuit_pred, model_pred) == 1.0f);
    CHECK(accuracy(circuit_pred, gold) == 0.5f);
}

TEST_CASE("spearman") {
    std::vector<double> a{1, 2, 3, 4, 5};
    std::vector<double> b{2, 4, 6, 8, 10};
    std::vector<double> r{10, 8, 6, 4, 2};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, r) == doctest::Approx(-1.0));
}

TEST_CASE("evaluate_circuit on the full graph is a fixed point") {
    Dataset ds = gen_ioi({24, 12, 12}, 2, 8, 99);
    ToyTrainConfig tc;
    tc.model.n_layers = 1;
    tc.model.n_heads = 2;
    tc.model.d_model = 16;
    tc.model.d_head = 8;
    tc.model.d_mlp = 32;
    tc.max_steps = 30;  // no need for a competent model here
    tc.accuracy_bar = -1.0f;
    tc.eval_every = 30;
    tc.seed = 4;
    DisentangledTransformer model = train_toy_lm(ds, tc);
    Circuit full = full_circuit(model.graph(), model.config_hash());
    EvalReport rep = evaluate_circuit(model, full, ds.val, ds.task, ds.vocab);
    CHECK(rep.exact_match == 1.0f);
    CHECK(rep.kl < 1e-6);
    CHECK(rep.sparsity == 0.0f);
    CHECK(rep.n_examples == 12);
}

TEST_CASE("edge faithfulness definitions") {
    // zero-weight attention head: ablating its edges cannot move the model
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 8;
    c.d_head = 8;
    c.d_mlp = 16;
    c.vocab_size = 9;
    c.max_seq = 8;
    DisentangledTransformer model = DisentangledTransformer::random_init(c, 12, 0.3f);
    // silence the head: its output projection is zero
    for (float& v : model.params().layers[0].heads[0].wo.values()) v = 0.0f;

    std::vector<ExamplePair> examples;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 6; ++i) {
        ExamplePair ex;
        for (int t = 0; t < 5; ++t) {
            ex.clean_tokens.push_back(static_cast<int32_t>(rng() % c.vocab_size));
            ex.corrupted_tokens.push_back(static_cast<int32_t>(rng() % c.vocab_size));
        }
        ex.answer_position = 4;
        ex.answer_id = 1;
        examples.push_back(ex);
    }

    const ComputationalGraph& g = model.graph();
    Circuit full = full_circuit(g, model.config_hash());
    const int dead_edge = g.edge_index(writer_index(c, {WriterKind::HeadOut, 0, 0}),
                                       reader_index(c, {ReaderKind::Logits, 0, 0}));
    const int live_edge = g.edge_index(writer_index(c, {WriterKind::Embed, 0, 0}),
                                       reader_index(c, {ReaderKind::Logits, 0, 0}));
    auto recs = edge_faithfulness(model, full, examples, {dead_edge, live_edge});
    CHECK(recs[0].m_e == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(recs[1].m_e > 1e-4);
    // on the full graph, c_e and m_e coincide by definition
    for (const auto& r : recs) CHECK(r.c_e == doctest::Approx(r.m_e));

    // probing an edge outside the circuit is rejected
    Circuit tiny = circuit_from_edges(g, {live_edge}, model.config_hash());
    CHECK_THROWS(edge_faithfulness(model, tiny, examples, {dead_edge}));
}
