#include "edgeprune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "edgeprune/metrics.hpp"

namespace edgeprune {

namespace {

// One evaluation batch with everything fixed except the gates.
struct PreparedBatch {
    Batch clean;
    ActivationCache corrupted;  // empty in zero mode
    std::vector<std::vector<double>> p_full;  // per example, answer-position distribution
    std::vector<int> answer_positions;
};

std::vector<PreparedBatch> prepare_batches(const DisentangledTransformer& model,
                                           const std::vector<ExamplePair>& dataset,
                                           AblationMode mode, int batch_size) {
    NoGradScope ng;
    const int V = model.config().vocab_size;
    std::vector<PreparedBatch> out;
    std::vector<int> idx;
    for (size_t start = 0; start < dataset.size(); start += batch_size) {
        idx.clear();
        for (size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i)
            idx.push_back(static_cast<int>(i));
        PreparedBatch pb;
        pb.clean = make_batch(dataset, idx, 0, false);
        ForwardResult full = model.forward_standard(pb.clean);
        const float* pl = full.logits.data();
        for (size_t r = 0; r < idx.size(); ++r) {
            const int pos = dataset[idx[r]].answer_position;
            pb.answer_positions.push_back(pos);
            pb.p_full.push_back(softmax_f64(pl + (r * pb.clean.seq + pos) * V, V));
        }
        if (mode == AblationMode::Interchange) {
            Batch corr = make_batch(dataset, idx, 0, true);
            pb.corrupted = model.forward_standard(corr).cache;
        }
        out.push_back(std::move(pb));
    }
    return out;
}

// Dataset-mean answer-position KL(full || gated model).
double mean_kl(const DisentangledTransformer& model, const std::vector<PreparedBatch>& batches,
               const std::vector<float>& gates, AblationMode mode) {
    NoGradScope ng;
    const int V = model.config().vocab_size;
    GateSpec spec;
    spec.const_gates = &gates;
    spec.mode = mode;
    double kl_sum = 0.0;
    int64_t n = 0;
    for (const PreparedBatch& pb : batches) {
        ForwardResult res = model.forward_disentangled(
            pb.clean, mode == AblationMode::Interchange ? &pb.corrupted : nullptr, spec);
        const float* pl = res.logits.data();
        for (size_t r = 0; r < pb.answer_positions.size(); ++r) {
            std::vector<double> q =
                softmax_f64(pl + (r * pb.clean.seq + pb.answer_positions[r]) * V, V);
            kl_sum += kl_divergence(pb.p_full[r], q);
            ++n;
        }
    }
    return kl_sum / static_cast<double>(n);
}

}  // namespace

Circuit acdc(const DisentangledTransformer& model, const std::vector<ExamplePair>& dataset,
             float tau, const AcdcOptions& opts) {
    if (dataset.empty()) throw std::runtime_error("acdc: empty dataset");
    if (tau < 0.0f) throw std::runtime_error("acdc: threshold must be nonnegative");
    const ComputationalGraph& g = model.graph();
    std::vector<PreparedBatch> batches =
        prepare_batches(model, dataset, opts.ablation, opts.batch_size);

    std::vector<float> gates(g.n_edges(), 1.0f);
    double baseline = mean_kl(model, batches, gates, opts.ablation);

    for (int ri = g.readers - 1; ri >= 0; --ri) {
        for (int ei = g.reader_edge_begin[ri]; ei < g.reader_edge_begin[ri + 1]; ++ei) {
            if (gates[ei] == 0.0f) continue;
            gates[ei] = 0.0f;
            const double cand = mean_kl(model, batches, gates, opts.ablation);
            const double delta = cand - baseline;
            if (delta < tau) {
                baseline = cand;  // removal accepted; greedy baseline moves
            } else {
                gates[ei] = 1.0f;
            }
            if (opts.verbose)
                std::fprintf(stderr, "[acdc] edge %d (%s -> %s) dKL %.6f %s\n", ei,
                             writer_name(g.edges[ei].src).c_str(),
                             reader_name(g.edges[ei].dst).c_str(), delta,
                             gates[ei] == 0.0f ? "removed" : "kept");
        }
    }

    std::vector<int> kept;
    for (int i = 0; i < g.n_edges(); ++i)
        if (gates[i] == 1.0f) kept.push_back(i);
    return circuit_from_edges(g, kept, model.config_hash());
}

EdgeScoreTable eap_scores(const DisentangledTransformer& model,
                          const std::vector<ExamplePair>& dataset, const EapOptions& opts,
                          EapInstrumentation* instr) {
    const ComputationalGraph& g = model.graph();
    const int E = g.n_edges();
    const int V = model.config().vocab_size;
    EdgeScoreTable table;
    table.score.assign(E, 0.0f);
    table.signed_score.assign(E, 0.0f);
    if (dataset.empty()) return table;
    const bool interchange = opts.ablation == AblationMode::Interchange;

    for (const ExamplePair& ex : dataset) {
        const int S = static_cast<int>(ex.clean_tokens.size());
        Batch clean{ex.clean_tokens, 1, S, {S}};
        Batch corrupted{ex.corrupted_tokens, 1, S, {S}};

        // reference pass: clean activations and the full-model distribution
        std::vector<double> p_full;
        ActivationCache clean_cache;
        {
            NoGradScope ng;
            ForwardResult full = model.forward_standard(clean);
            clean_cache = full.cache;
            p_full = softmax_f64(full.logits.data() +
                                     static_cast<size_t>(ex.answer_position) * V,
                                 V);
            if (instr) instr->nograd_forward_examples += 1;
        }

        ActivationCache corrupted_cache;
        const Batch* run_tokens = nullptr;
        const ActivationCache* patch_cache = nullptr;
        if (opts.metric == EapMetric::KlCorruptedRun) {
            // gradient run on the corrupted input; patching restores clean
            run_tokens = &corrupted;
            patch_cache = interchange ? &clean_cache : nullptr;
        } else {
            // gradient run on the clean input; patching inserts corrupted
            if (interchange) {
                NoGradScope ng;
                corrupted_cache = model.forward_standard(corrupted).cache;
                patch_cache = &corrupted_cache;
            }
            run_tokens = &clean;
        }

        Tape tape;
        TapeScope scope(tape);
        Tensor ones = Tensor::full({E}, 1.0f, /*requires_grad=*/true);
        GateSpec gates;
        gates.gate_tensor = &ones;
        gates.mode = interchange && patch_cache ? AblationMode::Interchange : AblationMode::Zero;
        ForwardResult res = model.forward_disentangled(*run_tokens, patch_cache, gates);
        if (instr) instr->grad_forward_examples += 1;

        Tensor loss;
        if (opts.metric == EapMetric::KlCorruptedRun) {
            Tensor logq = log_softmax_last(res.logits);
            Tensor sel = Tensor::zeros({1, S, V});
            float* ps = sel.data();
            const size_t base = static_cast<size_t>(ex.answer_position) * V;
            for (int v = 0; v < V; ++v) ps[base + v] = -static_cast<float>(p_full[v]);
            // sum p log p is constant; the variable part is -sum p log q
            loss = sum_all(mul(logq, sel));
        } else {
            if (!ex.misleading_id)
                throw std::runtime_error(
                    "eap_scores: logit-diff metric needs a misleading token id");
            Tensor sel = Tensor::zeros({1, S, V});
            float* ps = sel.data();
            const size_t base = static_cast<size_t>(ex.answer_position) * V;
            ps[base + ex.answer_id] = 1.0f;
            ps[base + *ex.misleading_id] = -1.0f;
            loss = sum_all(mul(res.logits, sel));
        }
        tape.backward(loss);
        if (instr) instr->backward_examples += 1;

        const float* gz = ones.grad();
        for (int e = 0; e < E; ++e) {
            table.signed_score[e] += gz[e];
            table.score[e] += std::abs(gz[e]);
        }
    }

    const float inv_n = 1.0f / static_cast<float>(dataset.size());
    for (int e = 0; e < E; ++e) {
        table.signed_score[e] *= inv_n;
        table.score[e] *= inv_n;
    }
    return table;
}

Circuit eap_top_k(const EdgeScoreTable& scores, const ComputationalGraph& g, int k,
                  const std::string& model_hash) {
    const int E = g.n_edges();
    if (static_cast<int>(scores.score.size()) != E)
        throw std::runtime_error("eap_top_k: score table does not match graph");
    if (k < 0 || k > E)
        throw std::runtime_error("eap_top_k: k out of range [0, |E|]");
    std::vector<int> order(E);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.score[a] != scores.score[b]) return scores.score[a] > scores.score[b];
        return a < b;
    });
    std::vector<int> kept(order.begin(), order.begin() + k);
    return circuit_from_edges(g, kept, model_hash);
}

std::string scores_to_csv(const EdgeScoreTable& scores, const ComputationalGraph& g) {
    std::ostringstream os;
    os << "edge_index,src,dst,score,signed_score\n";
    for (int i = 0; i < g.n_edges(); ++i)
        os << i << "," << writer_name(g.edges[i].src) << "," << reader_name(g.edges[i].dst) << ","
           << scores.score[i] << "," << scores.signed_score[i] << "\n";
    return os.str();
}

}  // namespace edgeprune
