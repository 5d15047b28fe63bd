#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "edgeprune/metrics.hpp"
#include "edgeprune/pruner.hpp"
#include "edgeprune/zoo.hpp"
#include "test_util.hpp"

using namespace edgeprune;

namespace {

// L=1,H=1 model whose logits depend only on the embedding: the attention
// head and MLP write nothing, so exactly one edge (embed->logits) carries
// the signal.
DisentangledTransformer signal_edge_model(uint64_t seed) {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 8;
    c.d_head = 8;
    c.d_mlp = 16;
    c.vocab_size = 9;
    c.max_seq = 6;
    DisentangledTransformer model = DisentangledTransformer::random_init(c, seed, 0.4f);
    for (float& v : model.params().layers[0].heads[0].wo.values()) v = 0.0f;
    for (float& v : model.params().layers[0].w2.values()) v = 0.0f;
    for (float& v : model.params().layers[0].b2.values()) v = 0.0f;
    return model;
}

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
        out.push_back(ex);
    }
    return out;
}

}  // namespace

TEST_CASE("sparsity of gate values") {
    CHECK(sparsity_from_gates({1, 1, 1}) == 0.0f);
    CHECK(sparsity_from_gates({0, 0}) == 1.0f);
    CHECK(sparsity_from_gates({1, 0, 0.5f, 0.5f}) == doctest::Approx(0.5f));
    CHECK_THROWS(sparsity_from_gates({}));
}

TEST_CASE("lagrangian penalty") {
    CHECK(lagrangian_penalty(0.7f, 0.7f, 3.0f, 5.0f) == 0.0f);
    CHECK(lagrangian_penalty(0.0f, 0.5f, 0.0f, 1.0f) == doctest::Approx(0.25f));
    // d(penalty)/d(lambda1) = t - s: positive while below target
    CHECK(lagrangian_penalty(0.2f, 0.5f, 1.0f, 0.0f) > 0.0f);
}

TEST_CASE("target schedule is a linear warmup") {
    CHECK(target_schedule(0, 100, 0.9f) == 0.0f);
    CHECK(target_schedule(100, 100, 0.9f) == doctest::Approx(0.9f));
    CHECK(target_schedule(50, 100, 0.9f) == doctest::Approx(0.45f));
    CHECK(target_schedule(500, 100, 0.9f) == doctest::Approx(0.9f));
    CHECK(target_schedule(7, 0, 1.1f) == doctest::Approx(1.1f));
}

TEST_CASE("presets carry the published hyperparameters") {
    PruneConfig gpt2 = preset_gpt2();
    CHECK(gpt2.steps == 3000);
    CHECK(gpt2.sparsity_warmup_steps == 2500);
    CHECK(gpt2.batch_size == 32);
    CHECK(gpt2.lr_log_alpha == 0.8f);
    CHECK(gpt2.lr_lambda == 0.8f);

    PruneConfig t1 = preset_ioi_t1();
    CHECK(t1.lr_log_alpha == 1.0f);
    CHECK(t1.lr_lambda == 1.0f);

    PruneConfig xp = preset_tracr_xproportion();
    CHECK(xp.steps == 720);
    CHECK(xp.batch_size == 16);
    CHECK(xp.sparsity_warmup_steps == 640);
    CHECK(xp.lr_warmup_steps == 96);
    CHECK(xp.t_edge == 0.92f);
    CHECK(xp.t_node == 0.4f);
    CHECK(xp.lr_lambda == doctest::Approx(1e-4f));
    CHECK_FALSE(xp.use_lambda1);
    CHECK(xp.ablation == AblationMode::Zero);

    PruneConfig rv = preset_tracr_reverse();
    CHECK(rv.steps == 6000);
    CHECK(rv.sparsity_warmup_steps == 5900);
    CHECK(rv.lr_warmup_steps == 1500);
    CHECK(rv.lr_log_alpha == doctest::Approx(0.03f));
    CHECK(rv.lr_lambda == doctest::Approx(1e-3f));
    CHECK(rv.t_edge == doctest::Approx(1.02f));
    CHECK(rv.t_node == doctest::Approx(0.1f));
    CHECK_FALSE(rv.use_lambda1);

    CHECK(preset_by_name("nope") == std::nullopt);
    CHECK(preset_names().size() == 5);
}

TEST_CASE("zero target keeps the full graph at near-zero kl") {
    DisentangledTransformer model = signal_edge_model(41);
    std::vector<ExamplePair> data = random_pairs(24, 5, 9, 5);
    PruneConfig cfg;
    cfg.steps = 60;
    cfg.batch_size = 8;
    cfg.lr_log_alpha = 0.3f;
    cfg.lr_lambda = 0.3f;
    cfg.t_edge = 0.0f;
    cfg.sparsity_warmup_steps = 0;
    cfg.seed = 1;
    PruneResult res = prune(model, data, cfg);
    CHECK(res.circuit.n_kept_edges() == model.graph().n_edges());
    CHECK(res.log.records.back().kl < 1e-3f);
    for (const PruneStepRecord& r : res.log.records) CHECK(r.kl >= 0.0f);
}

TEST_CASE("model weights are bit-identical before and after pruning") {
    DisentangledTransformer model = signal_edge_model(42);
    std::vector<std::vector<float>> before;
    for (auto& [name, t] : model.named_parameters()) before.push_back(t.values());
    std::vector<ExamplePair> data = random_pairs(16, 5, 9, 6);
    PruneConfig cfg;
    cfg.steps = 40;
    cfg.batch_size = 8;
    cfg.t_edge = 0.5f;
    cfg.sparsity_warmup_steps = 20;
    cfg.seed = 2;
    prune(model, data, cfg);
    size_t i = 0;
    for (auto& [name, t] : model.named_parameters()) CHECK(t.values() == before[i++]);
}

TEST_CASE("the signal-carrying edge survives pruning") {
    DisentangledTransformer model = signal_edge_model(43);
    const ComputationalGraph& g = model.graph();
    std::vector<ExamplePair> data = random_pairs(32, 5, 9, 7);

    // brute-force oracle: of all single-edge circuits, the one keeping
    // embed->logits is the closest to the full model
    const int signal_edge = g.edge_index(
        writer_index(g.cfg, {WriterKind::Embed, 0, 0}),
        reader_index(g.cfg, {ReaderKind::Logits, 0, 0}));
    double best_kl = 1e30;
    int best_edge = -1;
    for (int e = 0; e < g.n_edges(); ++e) {
        Circuit c = circuit_from_edges(g, {e}, model.config_hash());
        EvalReport rep = evaluate_circuit(model, c, data, TaskKind::Other, Vocab{});
        if (rep.kl < best_kl) {
            best_kl = rep.kl;
            best_edge = e;
        }
    }
    REQUIRE(best_edge == signal_edge);

    // gentle multiplier schedule: on an 8-edge graph an aggressive lambda
    // rate can bury the KL signal before the gates sort themselves
    PruneConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 16;
    cfg.lr_log_alpha = 0.3f;
    cfg.lr_lambda = 0.02f;
    cfg.t_edge = 0.9f;
    cfg.use_lambda1 = false;
    cfg.sparsity_warmup_steps = 200;
    cfg.lr_warmup_steps = 30;
    cfg.seed = 3;
    PruneResult res = prune(model, data, cfg);
    CHECK(res.circuit.edge_active(g, signal_edge));
    // the trained gate ranks the signal edge first
    const float* la = res.masks.edge_log_alpha.data();
    int argmax = 0;
    for (int e = 1; e < g.n_edges(); ++e)
        if (la[e] > la[argmax]) argmax = e;
    CHECK(argmax == signal_edge);
}

TEST_CASE("lambda ascent raises lambda1 while under target") {
    DisentangledTransformer model = signal_edge_model(44);
    std::vector<ExamplePair> data = random_pairs(16, 5, 9, 8);
    PruneConfig cfg;
    cfg.steps = 50;
    cfg.batch_size = 8;
    cfg.lr_log_alpha = 0.0f;  // hold the gates: s stays near 0 < t
    cfg.lr_lambda = 0.2f;
    cfg.t_edge = 0.8f;
    cfg.sparsity_warmup_steps = 1;
    cfg.seed = 4;
    PruneResult res = prune(model, data, cfg);
    float prev = -1e9f;
    for (size_t i = 1; i < res.log.records.size(); ++i) {
        CHECK(res.log.records[i].lambdas.lambda1_edge >= prev);
        prev = res.log.records[i].lambdas.lambda1_edge;
    }
    CHECK(res.lambdas.lambda1_edge > 0.0f);

    SUBCASE("with zero lambda lr and lambda = 0 sparsity stays near zero") {
        PruneConfig pure = cfg;
        pure.lr_lambda = 0.0f;
        pure.lr_log_alpha = 0.3f;
        pure.seed = 5;
        PruneResult r2 = prune(model, data, pure);
        CHECK(r2.log.records.back().lambdas.lambda1_edge == 0.0f);
        CHECK(r2.log.records.back().lambdas.lambda2_edge == 0.0f);
        CHECK(r2.log.records.back().edge_sparsity < 0.2f);
    }
}

TEST_CASE("same seed reproduces the run log exactly") {
    DisentangledTransformer model = signal_edge_model(45);
    std::vector<ExamplePair> data = random_pairs(20, 5, 9, 9);
    PruneConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 8;
    cfg.t_edge = 0.7f;
    cfg.sparsity_warmup_steps = 20;
    cfg.seed = 77;
    PruneResult a = prune(model, data, cfg);
    PruneResult b = prune(model, data, cfg);
    REQUIRE(a.log.records.size() == b.log.records.size());
    for (size_t i = 0; i < a.log.records.size(); ++i) {
        CHECK(a.log.records[i].kl == b.log.records[i].kl);
        CHECK(a.log.records[i].edge_sparsity == b.log.records[i].edge_sparsity);
        CHECK(a.log.records[i].lambdas.lambda2_edge == b.log.records[i].lambdas.lambda2_edge);
    }
    CHECK(a.circuit.kept_edges == b.circuit.kept_edges);
    CHECK(a.log.to_csv() == b.log.to_csv());
}

TEST_CASE("checkpoints and logs are written and loadable") {
    DisentangledTransformer model = signal_edge_model(46);
    std::vector<ExamplePair> data = random_pairs(12, 5, 9, 10);
    PruneConfig cfg;
    cfg.steps = 20;
    cfg.batch_size = 6;
    cfg.t_edge = 0.5f;
    cfg.sparsity_warmup_steps = 10;
    cfg.checkpoint_every = 10;
    cfg.seed = 11;
    cfg.out_dir = eptest::scratch_dir("prune") + "/run";
    PruneResult res = prune(model, data, cfg);
    CHECK(std::filesystem::exists(cfg.out_dir + "/checkpoint-10.json"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/checkpoint-final.json"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/prune_log.csv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/circuit.json"));
    CHECK(res.final_checkpoint == cfg.out_dir + "/checkpoint-final.json");

    LagrangianState lam;
    int step = 0;
    MaskParams mp = load_prune_checkpoint(model.graph(), res.final_checkpoint, &lam, &step);
    CHECK(step == 20);
    CHECK(mp.edge_log_alpha.values() == res.masks.edge_log_alpha.values());
    CHECK(lam.lambda2_edge == res.lambdas.lambda2_edge);

    // the log carries one record per step with the scheduled target
    REQUIRE(static_cast<int>(res.log.records.size()) == cfg.steps);
    CHECK(res.log.records[0].target_edge == doctest::Approx(cfg.t_edge / 10.0f));
    CHECK(res.log.records.back().target_edge == doctest::Approx(cfg.t_edge));
}

TEST_CASE("empty dataset is rejected") {
    DisentangledTransformer model = signal_edge_model(47);
    CHECK_THROWS(prune(model, {}, PruneConfig{}));
}
