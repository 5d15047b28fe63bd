#include "edgeprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "edgeprune/io.hpp"

namespace edgeprune {

using nlohmann::json;

PruneConfig preset_gpt2() {
    PruneConfig c;
    c.steps = 3000;
    c.batch_size = 32;
    c.lr_log_alpha = 0.8f;
    c.lr_lambda = 0.8f;
    c.sparsity_warmup_steps = 2500;
    c.t_edge = 1.0f;
    c.t_node = 0.72f;
    c.use_node_lagrangian = true;
    c.checkpoint_every = 64;
    return c;
}

PruneConfig preset_ioi_t1() {
    PruneConfig c = preset_gpt2();
    c.lr_log_alpha = 1.0f;
    c.lr_lambda = 1.0f;
    return c;
}

PruneConfig preset_tracr_xproportion() {
    PruneConfig c;
    c.steps = 720;
    c.batch_size = 16;
    c.sparsity_warmup_steps = 640;
    c.lr_warmup_steps = 96;
    c.lr_log_alpha = 1.0f;
    c.lr_lambda = 1e-4f;
    c.t_edge = 0.92f;
    c.t_node = 0.4f;
    c.use_node_lagrangian = true;
    c.use_lambda1 = false;
    c.ablation = AblationMode::Zero;
    c.kl_positions = KlPositions::All;
    c.checkpoint_every = 128;
    return c;
}

PruneConfig preset_tracr_reverse() {
    PruneConfig c;
    c.steps = 6000;
    c.batch_size = 16;
    c.sparsity_warmup_steps = 5900;
    c.lr_warmup_steps = 1500;
    c.lr_log_alpha = 0.03f;
    c.lr_lambda = 1e-3f;
    c.t_edge = 1.02f;
    c.t_node = 0.1f;
    c.use_node_lagrangian = true;
    c.use_lambda1 = false;
    c.ablation = AblationMode::Zero;
    c.kl_positions = KlPositions::All;
    c.checkpoint_every = 500;
    return c;
}

PruneConfig preset_toy() {
    PruneConfig c;
    c.steps = 600;
    c.batch_size = 32;
    c.lr_log_alpha = 0.4f;
    c.lr_lambda = 0.05f;
    c.sparsity_warmup_steps = 450;
    c.lr_warmup_steps = 40;
    c.t_edge = 0.95f;
    c.t_node = 0.0f;
    c.use_node_lagrangian = false;
    c.use_lambda1 = false;
    c.kl_positions = KlPositions::Answer;
    c.checkpoint_every = 100;
    return c;
}

std::optional<PruneConfig> preset_by_name(const std::string& name) {
    if (name == "gpt2") return preset_gpt2();
    if (name == "ioi-t1") return preset_ioi_t1();
    if (name == "tracr-xproportion") return preset_tracr_xproportion();
    if (name == "tracr-reverse") return preset_tracr_reverse();
    if (name == "toy") return preset_toy();
    return std::nullopt;
}

std::vector<std::string> preset_names() {
    return {"gpt2", "ioi-t1", "tracr-xproportion", "tracr-reverse", "toy"};
}

float sparsity_from_gates(const std::vector<float>& gates) {
    if (gates.empty()) throw std::runtime_error("sparsity_from_gates: empty gate set");
    double mean = std::accumulate(gates.begin(), gates.end(), 0.0) / gates.size();
    return 1.0f - static_cast<float>(mean);
}

float lagrangian_penalty(float s, float t, float lambda1, float lambda2) {
    const float d = t - s;
    return lambda1 * d + lambda2 * d * d;
}

float target_schedule(int step, int warmup_steps, float t_final) {
    if (warmup_steps <= 0) return t_final;
    const float frac = std::min(1.0f, static_cast<float>(step) / warmup_steps);
    return t_final * frac;
}

std::string PruneLog::to_csv() const {
    std::ostringstream os;
    os << "step,kl_loss,edge_sparsity,node_sparsity,target_edge,target_node,"
          "lambda1_edge,lambda2_edge,lambda1_node,lambda2_node\n";
    for (const PruneStepRecord& r : records) {
        os << r.step << "," << r.kl << "," << r.edge_sparsity << "," << r.node_sparsity << ","
           << r.target_edge << "," << r.target_node << "," << r.lambdas.lambda1_edge << ","
           << r.lambdas.lambda2_edge << "," << r.lambdas.lambda1_node << ","
           << r.lambdas.lambda2_node << "\n";
    }
    return os.str();
}

void save_prune_checkpoint(const MaskParams& masks, const LagrangianState& lam,
                           const PruneConfig& cfg, int step, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["step"] = step;
    j["config"] = {{"steps", cfg.steps},
                   {"batch_size", cfg.batch_size},
                   {"lr_log_alpha", cfg.lr_log_alpha},
                   {"lr_lambda", cfg.lr_lambda},
                   {"t_edge", cfg.t_edge},
                   {"t_node", cfg.t_node},
                   {"sparsity_warmup_steps", cfg.sparsity_warmup_steps},
                   {"lr_warmup_steps", cfg.lr_warmup_steps},
                   {"use_node_lagrangian", cfg.use_node_lagrangian},
                   {"use_lambda1", cfg.use_lambda1},
                   {"seed", cfg.seed},
                   {"ablation", cfg.ablation == AblationMode::Zero ? "zero" : "interchange"}};
    j["lambdas"] = {{"lambda1_edge", lam.lambda1_edge},
                    {"lambda2_edge", lam.lambda2_edge},
                    {"lambda1_node", lam.lambda1_node},
                    {"lambda2_node", lam.lambda2_node}};
    j["edge_log_alpha"] = masks.edge_log_alpha.values();
    j["node_log_alpha"] = masks.node_log_alpha.values();
    write_text_file(path, j.dump());
}

MaskParams load_prune_checkpoint(const ComputationalGraph& g, const std::string& path,
                                 LagrangianState* lam, int* step) {
    json j = json::parse(read_text_file(path));
    MaskParams mp;
    auto edges = j.at("edge_log_alpha").get<std::vector<float>>();
    auto nodes = j.at("node_log_alpha").get<std::vector<float>>();
    if (static_cast<int>(edges.size()) != g.n_edges() ||
        static_cast<int>(nodes.size()) != g.writers)
        throw std::runtime_error("load_prune_checkpoint: mask sizes do not match graph");
    mp.edge_log_alpha = Tensor::from({g.n_edges()}, std::move(edges), true);
    mp.node_log_alpha = Tensor::from({g.writers}, std::move(nodes), true);
    if (lam) {
        const json& l = j.at("lambdas");
        lam->lambda1_edge = l.at("lambda1_edge").get<float>();
        lam->lambda2_edge = l.at("lambda2_edge").get<float>();
        lam->lambda1_node = l.at("lambda1_node").get<float>();
        lam->lambda2_node = l.at("lambda2_node").get<float>();
    }
    if (step) *step = j.at("step").get<int>();
    return mp;
}

namespace {

// Adam state for one scalar, used for the Lagrangian multipliers.
struct AdamScalar {
    float m = 0.0f, v = 0.0f;
    int64_t t = 0;

    // Ascent: moves x along +grad.
    void ascend(float& x, float grad, float lr) {
        ++t;
        m = kAdamBeta1 * m + (1.0f - kAdamBeta1) * grad;
        v = kAdamBeta2 * v + (1.0f - kAdamBeta2) * grad * grad;
        const float mhat = m / (1.0f - std::pow(kAdamBeta1, static_cast<float>(t)));
        const float vhat = v / (1.0f - std::pow(kAdamBeta2, static_cast<float>(t)));
        x += lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
};

// Per-example constants computed once before training.
struct ExampleContext {
    std::vector<std::vector<float>> writer_acts;  // per writer, (S_i * d)
    std::vector<float> p_full;                    // (S_i * V)
    std::vector<float> log_p_full;                // (S_i * V)
    int len = 0;
};

}  // namespace

PruneResult prune(const DisentangledTransformer& model, const std::vector<ExamplePair>& dataset,
                  const PruneConfig& cfg) {
    if (dataset.empty()) throw std::runtime_error("prune: empty dataset");
    cfg.hard_concrete.validate();
    const ComputationalGraph& g = model.graph();
    const ModelConfig& mc = model.config();
    const int E = g.n_edges();
    const int W = g.writers;
    const int V = mc.vocab_size;
    const int d = mc.d_model;
    const bool interchange = cfg.ablation == AblationMode::Interchange;

    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    // Frozen model: corrupted activations and full-model reference
    // distributions are fixed, so compute them once per example.
    std::vector<ExampleContext> ctx(dataset.size());
    {
        NoGradScope ng;
        for (size_t i = 0; i < dataset.size(); ++i) {
            const ExamplePair& ex = dataset[i];
            ctx[i].len = static_cast<int>(ex.clean_tokens.size());
            Batch clean{ex.clean_tokens, 1, ctx[i].len, {ctx[i].len}};
            ForwardResult full = model.forward_standard(clean);
            const float* pl = full.logits.data();
            ctx[i].p_full.resize(static_cast<size_t>(ctx[i].len) * V);
            ctx[i].log_p_full.resize(static_cast<size_t>(ctx[i].len) * V);
            for (int s = 0; s < ctx[i].len; ++s) {
                const float* row = pl + static_cast<size_t>(s) * V;
                float mx = row[0];
                for (int v = 1; v < V; ++v) mx = std::max(mx, row[v]);
                float sum = 0.0f;
                for (int v = 0; v < V; ++v) sum += std::exp(row[v] - mx);
                const float lse = mx + std::log(sum);
                for (int v = 0; v < V; ++v) {
                    const float lp = row[v] - lse;
                    ctx[i].log_p_full[static_cast<size_t>(s) * V + v] = lp;
                    ctx[i].p_full[static_cast<size_t>(s) * V + v] = std::exp(lp);
                }
            }
            if (interchange) {
                Batch corr{ex.corrupted_tokens, 1, ctx[i].len, {ctx[i].len}};
                ForwardResult cf = model.forward_standard(corr);
                ctx[i].writer_acts.resize(W);
                for (int w = 0; w < W; ++w) ctx[i].writer_acts[w] = cf.cache.writer_acts[w].values();
            }
        }
    }

    MaskParams masks = init_mask_params(g, cfg.mask_init_gate, cfg.hard_concrete);
    Adam opt({masks.edge_log_alpha, masks.node_log_alpha}, cfg.lr_log_alpha);
    LagrangianState lam;
    AdamScalar lam_opt[4];

    std::vector<int32_t> edge_src32(g.edge_src.begin(), g.edge_src.end());

    std::mt19937_64 rng_data(cfg.seed ^ 0xd1b54a32d192ed03ull);
    std::mt19937_64 rng_noise(cfg.seed ^ 0x94d049bb133111ebull);
    std::uniform_real_distribution<float> unif(cfg.hard_concrete.noise_eps,
                                               1.0f - cfg.hard_concrete.noise_eps);

    std::vector<int> perm(dataset.size());
    std::iota(perm.begin(), perm.end(), 0);
    size_t cursor = perm.size();

    PruneResult result;
    std::string last_checkpoint;

    auto write_checkpoint = [&](int step, const std::string& name) {
        if (cfg.out_dir.empty()) return std::string();
        const std::string path = cfg.out_dir + "/" + name;
        save_prune_checkpoint(masks, lam, cfg, step, path);
        return path;
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        // batch without replacement, reshuffled per epoch
        std::vector<int> idx;
        const int bsz = std::min<int>(cfg.batch_size, static_cast<int>(dataset.size()));
        for (int i = 0; i < bsz; ++i) {
            if (cursor == perm.size()) {
                std::shuffle(perm.begin(), perm.end(), rng_data);
                cursor = 0;
            }
            idx.push_back(perm[cursor++]);
        }
        const int B = bsz;
        int S = 0;
        for (int i : idx) S = std::max(S, ctx[i].len);

        Batch batch = make_batch(dataset, idx, /*pad_id=*/0, false);

        // batch-assembled constants
        ActivationCache corr_cache;
        if (interchange) {
            corr_cache.writer_acts.resize(W);
            for (int w = 0; w < W; ++w) {
                Tensor t = Tensor::zeros({B, S, d});
                float* pt = t.data();
                for (int r = 0; r < B; ++r) {
                    const auto& src = ctx[idx[r]].writer_acts[w];
                    std::copy(src.begin(), src.end(), pt + static_cast<size_t>(r) * S * d);
                }
                corr_cache.writer_acts[w] = t;
            }
        }
        Tensor p_full = Tensor::zeros({B, S, V});
        Tensor logp_full = Tensor::zeros({B, S, V});
        Tensor pos_mask = Tensor::zeros({B, S});
        float mask_total = 0.0f;
        {
            float* pp = p_full.data();
            float* pl = logp_full.data();
            float* pm = pos_mask.data();
            for (int r = 0; r < B; ++r) {
                const ExampleContext& c = ctx[idx[r]];
                std::copy(c.p_full.begin(), c.p_full.end(), pp + static_cast<size_t>(r) * S * V);
                std::copy(c.log_p_full.begin(), c.log_p_full.end(),
                          pl + static_cast<size_t>(r) * S * V);
                if (cfg.kl_positions == KlPositions::All) {
                    for (int s = 0; s < c.len; ++s) {
                        pm[r * S + s] = 1.0f;
                        mask_total += 1.0f;
                    }
                } else {
                    pm[r * S + dataset[idx[r]].answer_position] = 1.0f;
                    mask_total += 1.0f;
                }
            }
        }

        // one noise draw per mask per step, shared across the batch
        std::vector<float> u_edge(E), u_node(W);
        for (int i = 0; i < E; ++i) u_edge[i] = unif(rng_noise);
        for (int w = 0; w < W; ++w) u_node[w] = unif(rng_noise);

        Tape tape;
        TapeScope scope(tape);
        Tensor z_edge = sample_gates(masks.edge_log_alpha, u_edge, cfg.hard_concrete);
        Tensor z_node = sample_gates(masks.node_log_alpha, u_node, cfg.hard_concrete);
        Tensor z_eff = mul(z_edge, index_select(z_node, edge_src32));

        GateSpec gates;
        gates.gate_tensor = &z_eff;
        gates.mode = cfg.ablation;
        ForwardResult res =
            model.forward_disentangled(batch, interchange ? &corr_cache : nullptr, gates);

        Tensor log_q = log_softmax_last(res.logits);
        Tensor kl_elem = mul(p_full, sub(logp_full, log_q));
        Tensor kl_pos = sum_last(kl_elem);
        Tensor kl_loss = scale(sum_all(mul(kl_pos, pos_mask)), 1.0f / mask_total);

        Tensor s_edge_t = cfg.sparsity_from_sampled
                              ? add_scalar(scale(mean_all(z_edge), -1.0f), 1.0f)
                              : add_scalar(
                                    scale(mean_all(deterministic_gates(masks.edge_log_alpha,
                                                                       cfg.hard_concrete)),
                                          -1.0f),
                                    1.0f);
        const float t_edge_now = target_schedule(step, cfg.sparsity_warmup_steps, cfg.t_edge);
        Tensor diff_e = add_scalar(scale(s_edge_t, -1.0f), t_edge_now);
        Tensor pen_e = add(scale(diff_e, cfg.use_lambda1 ? lam.lambda1_edge : 0.0f),
                           scale(mul(diff_e, diff_e), lam.lambda2_edge));
        Tensor loss = add(kl_loss, pen_e);

        float t_node_now = 0.0f;
        Tensor s_node_t;
        if (cfg.use_node_lagrangian) {
            s_node_t = cfg.sparsity_from_sampled
                           ? add_scalar(scale(mean_all(z_node), -1.0f), 1.0f)
                           : add_scalar(
                                 scale(mean_all(deterministic_gates(masks.node_log_alpha,
                                                                    cfg.hard_concrete)),
                                       -1.0f),
                                 1.0f);
            t_node_now = target_schedule(step, cfg.sparsity_warmup_steps, cfg.t_node);
            Tensor diff_n = add_scalar(scale(s_node_t, -1.0f), t_node_now);
            Tensor pen_n = add(scale(diff_n, cfg.use_lambda1 ? lam.lambda1_node : 0.0f),
                               scale(mul(diff_n, diff_n), lam.lambda2_node));
            loss = add(loss, pen_n);
        }

        const float kl_value = kl_loss.item();
        const float s_edge_value = s_edge_t.item();
        const float s_node_value = cfg.use_node_lagrangian
                                       ? s_node_t.item()
                                       : sparsity_from_gates(z_node.values());

        if (!std::isfinite(loss.item()) || !std::isfinite(kl_value))
            throw PruneDiverged("prune: loss diverged at step " + std::to_string(step),
                                last_checkpoint, step);

        opt.zero_grad();
        tape.backward(loss);
        const float lr_scale =
            cfg.lr_warmup_steps > 0
                ? std::min(1.0f, static_cast<float>(step) / cfg.lr_warmup_steps)
                : 1.0f;
        opt.step(lr_scale);

        // gradient ascent on the multipliers keeps the constraint tight
        const float lam_lr = cfg.lr_lambda * lr_scale;
        const float de = t_edge_now - s_edge_value;
        if (cfg.use_lambda1) lam_opt[0].ascend(lam.lambda1_edge, de, lam_lr);
        lam_opt[1].ascend(lam.lambda2_edge, de * de, lam_lr);
        if (cfg.use_node_lagrangian) {
            const float dn = t_node_now - s_node_value;
            if (cfg.use_lambda1) lam_opt[2].ascend(lam.lambda1_node, dn, lam_lr);
            lam_opt[3].ascend(lam.lambda2_node, dn * dn, lam_lr);
        }

        PruneStepRecord rec;
        rec.step = step;
        rec.kl = kl_value;
        rec.edge_sparsity = s_edge_value;
        rec.node_sparsity = s_node_value;
        rec.target_edge = t_edge_now;
        rec.target_node = t_node_now;
        rec.lambdas = lam;
        result.log.records.push_back(rec);

        if (cfg.verbose && (step % 50 == 0 || step == 1))
            std::fprintf(stderr,
                         "[prune] step %d kl %.5f s_edge %.3f (t %.3f) s_node %.3f l2 %.3f\n",
                         step, kl_value, s_edge_value, t_edge_now, s_node_value,
                         lam.lambda2_edge);

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            last_checkpoint = write_checkpoint(step, "checkpoint-" + std::to_string(step) + ".json");
    }

    // results always come from the final checkpoint
    result.final_checkpoint = write_checkpoint(cfg.steps, "checkpoint-final.json");
    result.lambdas = lam;
    result.circuit = discretize(masks, g, model.config_hash(), cfg.hard_concrete, {},
                                &result.discretize_info);
    result.masks = std::move(masks);
    if (!cfg.out_dir.empty()) {
        write_text_file(cfg.out_dir + "/prune_log.csv", result.log.to_csv());
        save_circuit(result.circuit, g, cfg.out_dir + "/circuit.json");
    }
    return result;
}

}  // namespace edgeprune
