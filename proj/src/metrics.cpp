#include "edgeprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace edgeprune {

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q, bool* capped) {
    if (p.size() != q.size())
        throw std::runtime_error("kl_divergence: support sizes differ");
    if (capped) *capped = false;
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;  // 0 log 0 = 0
        if (q[i] <= 0.0) {
            if (capped) *capped = true;
            return kKlCapSentinel;
        }
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

std::vector<double> softmax_f64(const float* logits, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
    std::vector<double> out(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

float logit_diff(const float* logits, int n, int answer_id, int misleading_id) {
    if (answer_id < 0 || answer_id >= n || misleading_id < 0 || misleading_id >= n)
        throw std::runtime_error("logit_diff: token id out of range");
    // log-softmax normalizers cancel
    return logits[answer_id] - logits[misleading_id];
}

namespace {

std::vector<double> restricted_probs(const float* logits, int n,
                                     const std::vector<int32_t>& ids) {
    std::vector<float> sub(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n)
            throw std::runtime_error("restricted_probs: id out of range");
        sub[i] = logits[ids[i]];
    }
    return softmax_f64(sub.data(), static_cast<int>(sub.size()));
}

}  // namespace

float prob_diff_gt(const float* logits, int n, const std::vector<int32_t>& two_digit_ids, int yy) {
    if (two_digit_ids.size() != 100)
        throw std::runtime_error("prob_diff_gt: need the 100 two-digit token ids");
    std::vector<double> p = restricted_probs(logits, n, two_digit_ids);
    double above = 0.0, below = 0.0;
    for (int v = yy + 1; v <= 99; ++v) above += p[v];
    for (int v = 0; v <= yy - 1; ++v) below += p[v];
    return static_cast<float>(above - below);
}

float prob_diff_10(const float* logits, int n, const std::vector<int32_t>& two_digit_ids, int yy) {
    if (two_digit_ids.size() != 100)
        throw std::runtime_error("prob_diff_10: need the 100 two-digit token ids");
    std::vector<double> p = restricted_probs(logits, n, two_digit_ids);
    double above = 0.0, below = 0.0;
    for (int v = yy + 1; v <= std::min(yy + 10, 99); ++v) above += p[v];
    for (int v = std::max(yy - 10, 0); v <= yy - 1; ++v) below += p[v];
    return static_cast<float>(above - below);
}

namespace {

// Strict inversions in y via merge sort.
int64_t count_inversions(std::vector<float>& y) {
    const size_t n = y.size();
    std::vector<float> tmp(n);
    int64_t inv = 0;
    for (size_t width = 1; width < n; width *= 2) {
        for (size_t lo = 0; lo + width < n; lo += 2 * width) {
            const size_t mid = lo + width;
            const size_t hi = std::min(lo + 2 * width, n);
            size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (y[j] < y[i]) {
                    inv += static_cast<int64_t>(mid - i);
                    tmp[k++] = y[j++];
                } else {
                    tmp[k++] = y[i++];
                }
            }
            while (i < mid) tmp[k++] = y[i++];
            while (j < hi) tmp[k++] = y[j++];
            std::copy(tmp.begin() + lo, tmp.begin() + hi, y.begin() + lo);
        }
    }
    return inv;
}

}  // namespace

double kendall_tau(const std::vector<float>& a, const std::vector<float>& b) {
    const size_t n = a.size();
    if (b.size() != n) throw std::runtime_error("kendall_tau: length mismatch");
    if (n < 2) return 0.0;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (a[i] != a[j]) return a[i] < a[j];
        return b[i] < b[j];
    });
    const int64_t n0 = static_cast<int64_t>(n) * (n - 1) / 2;
    int64_t n1 = 0, n3 = 0;
    {
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j < n && a[order[j]] == a[order[i]]) ++j;
            const int64_t t = j - i;
            n1 += t * (t - 1) / 2;
            size_t k = i;
            while (k < j) {
                size_t l = k;
                while (l < j && b[order[l]] == b[order[k]]) ++l;
                const int64_t u = l - k;
                n3 += u * (u - 1) / 2;
                k = l;
            }
            i = j;
        }
    }
    int64_t n2 = 0;
    {
        std::vector<float> bs(b);
        std::sort(bs.begin(), bs.end());
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j < n && bs[j] == bs[i]) ++j;
            const int64_t t = j - i;
            n2 += t * (t - 1) / 2;
            i = j;
        }
    }
    std::vector<float> y(n);
    for (size_t i = 0; i < n; ++i) y[i] = b[order[i]];
    const int64_t swaps = count_inversions(y);
    const double num = static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps);
    const double den = std::sqrt(static_cast<double>(n0 - n1)) *
                       std::sqrt(static_cast<double>(n0 - n2));
    return den > 0.0 ? num / den : 0.0;
}

float exact_match(const std::vector<int32_t>& predictions,
                  const std::vector<int32_t>& references) {
    if (predictions.size() != references.size())
        throw std::runtime_error("exact_match: length mismatch");
    if (predictions.empty()) throw std::runtime_error("exact_match: empty input");
    int hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == references[i]) ++hits;
    return static_cast<float>(hits) / static_cast<float>(predictions.size());
}

float accuracy(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold) {
    return exact_match(predictions, gold);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && v[order[j]] == v[order[i]]) ++j;
        const double avg = 0.5 * (i + j - 1) + 1.0;
        for (size_t k = i; k < j; ++k) r[order[k]] = avg;
        i = j;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::runtime_error("spearman: need two equal-length vectors");
    std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    const double den = std::sqrt(va) * std::sqrt(vb);
    return den > 0.0 ? cov / den : 0.0;
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os << "{\"kl\":" << kl << ",\"exact_match\":" << exact_match
       << ",\"accuracy\":" << accuracy << ",\"logit_diff\":" << logit_diff
       << ",\"prob_diff\":" << prob_diff << ",\"prob_diff_10\":" << prob_diff_10
       << ",\"kendall_tau\":" << kendall_tau << ",\"sparsity\":" << sparsity
       << ",\"n_examples\":" << n_examples << ",\"kl_capped\":" << (kl_capped ? "true" : "false")
       << "}";
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "kl,exact_match,accuracy,logit_diff,prob_diff,prob_diff_10,kendall_tau,sparsity,"
          "n_examples\n";
    os << kl << "," << exact_match << "," << accuracy << "," << logit_diff << "," << prob_diff
       << "," << prob_diff_10 << "," << kendall_tau << "," << sparsity << "," << n_examples
       << "\n";
    return os.str();
}

namespace {

// Per-example answer-position logits rows; circuit == nullptr means the full
// model on the clean input.
std::vector<std::vector<float>> answer_logits(const DisentangledTransformer& model,
                                              const Circuit* circuit,
                                              const std::vector<ExamplePair>& examples,
                                              AblationMode mode, int batch_size) {
    NoGradScope ng;
    const int32_t pad = 0;
    std::vector<std::vector<float>> rows(examples.size());
    std::vector<int> idx;
    for (size_t start = 0; start < examples.size(); start += batch_size) {
        idx.clear();
        for (size_t i = start; i < std::min(examples.size(), start + batch_size); ++i)
            idx.push_back(static_cast<int>(i));
        Batch clean = make_batch(examples, idx, pad, false);
        ForwardResult res;
        if (circuit) {
            Batch corrupted = make_batch(examples, idx, pad, true);
            res = model.circuit_forward(clean, corrupted, *circuit, mode);
        } else {
            res = model.forward_standard(clean);
        }
        const int S = clean.seq;
        const int V = model.config().vocab_size;
        const float* pl = res.logits.data();
        for (size_t bi = 0; bi < idx.size(); ++bi) {
            const int pos = examples[idx[bi]].answer_position;
            rows[idx[bi]].assign(pl + (bi * S + pos) * V, pl + (bi * S + pos + 1) * V);
        }
    }
    return rows;
}

}  // namespace

EvalReport evaluate_circuit(const DisentangledTransformer& model, const Circuit& circuit,
                            const std::vector<ExamplePair>& examples, TaskKind task,
                            const Vocab& vocab, const EvalOptions& opts) {
    if (examples.empty()) throw std::runtime_error("evaluate_circuit: empty dataset");
    const int V = model.config().vocab_size;
    std::vector<std::vector<float>> full = answer_logits(model, nullptr, examples,
                                                         opts.ablation, opts.batch_size);
    std::vector<std::vector<float>> circ = answer_logits(model, &circuit, examples,
                                                         opts.ablation, opts.batch_size);

    std::vector<int32_t> two_digit;
    if (task == TaskKind::GreaterThan) {
        two_digit.reserve(100);
        char buf[3];
        for (int v = 0; v < 100; ++v) {
            std::snprintf(buf, sizeof(buf), "%02d", v);
            two_digit.push_back(vocab.id(buf));
        }
    }

    EvalReport rep;
    rep.n_examples = static_cast<int>(examples.size());
    rep.sparsity = circuit.sparsity();
    double kl_sum = 0.0, tau_sum = 0.0;
    double ld_sum = 0.0, pd_sum = 0.0, pd10_sum = 0.0;
    std::vector<int32_t> model_pred, circ_pred, gold;
    std::vector<int32_t> circ_correct, gold_correct;

    auto argmax_restricted = [&](const std::vector<float>& row) {
        int best = two_digit[0];
        for (int32_t id : two_digit)
            if (row[id] > row[best]) best = id;
        return best;
    };
    auto argmax_full = [&](const std::vector<float>& row) {
        return static_cast<int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    };

    for (size_t i = 0; i < examples.size(); ++i) {
        const ExamplePair& ex = examples[i];
        if (task == TaskKind::GreaterThan) {
            std::vector<double> p = restricted_probs(full[i].data(), V, two_digit);
            std::vector<double> q = restricted_probs(circ[i].data(), V, two_digit);
            bool capped = false;
            kl_sum += kl_divergence(p, q, &capped);
            rep.kl_capped |= capped;
            std::vector<float> fsub(100), csub(100);
            for (int v = 0; v < 100; ++v) {
                fsub[v] = full[i][two_digit[v]];
                csub[v] = circ[i][two_digit[v]];
            }
            tau_sum += kendall_tau(fsub, csub);
            const int yy = ex.gt_yy.value();
            pd_sum += prob_diff_gt(circ[i].data(), V, two_digit, yy);
            pd10_sum += prob_diff_10(circ[i].data(), V, two_digit, yy);
            model_pred.push_back(argmax_restricted(full[i]));
            circ_pred.push_back(argmax_restricted(circ[i]));
            // accuracy: restricted argmax falls in the correct range
            const int32_t pred = circ_pred.back();
            int pred_val = -1;
            for (int v = 0; v < 100; ++v)
                if (two_digit[v] == pred) pred_val = v;
            circ_correct.push_back(pred_val > yy ? 1 : 0);
            gold_correct.push_back(1);
        } else {
            std::vector<double> p = softmax_f64(full[i].data(), V);
            std::vector<double> q = softmax_f64(circ[i].data(), V);
            bool capped = false;
            kl_sum += kl_divergence(p, q, &capped);
            rep.kl_capped |= capped;
            if (ex.misleading_id)
                ld_sum += logit_diff(circ[i].data(), V, ex.answer_id, *ex.misleading_id);
            model_pred.push_back(argmax_full(full[i]));
            circ_pred.push_back(argmax_full(circ[i]));
            gold.push_back(ex.answer_id);
        }
    }

    const double n = static_cast<double>(examples.size());
    rep.kl = kl_sum / n;
    rep.exact_match = exact_match(circ_pred, model_pred);
    if (task == TaskKind::GreaterThan) {
        rep.accuracy = accuracy(circ_correct, gold_correct);
        rep.kendall_tau = tau_sum / n;
        rep.prob_diff = static_cast<float>(pd_sum / n);
        rep.prob_diff_10 = static_cast<float>(pd10_sum / n);
    } else {
        rep.accuracy = accuracy(circ_pred, gold);
        rep.logit_diff = static_cast<float>(ld_sum / n);
    }
    return rep;
}

std::vector<EdgeFaithfulnessRecord> edge_faithfulness(const DisentangledTransformer& model,
                                                      const Circuit& circuit,
                                                      const std::vector<ExamplePair>& examples,
                                                      const std::vector<int>& probe_edges,
                                                      const EvalOptions& opts) {
    const ComputationalGraph& g = model.graph();
    for (int e : probe_edges)
        if (e < 0 || e >= g.n_edges() || !circuit.edge_active(g, e))
            throw std::runtime_error("edge_faithfulness: probe edge " + std::to_string(e) +
                                     " is not an active circuit edge");
    const int V = model.config().vocab_size;
    std::vector<std::vector<float>> full = answer_logits(model, nullptr, examples,
                                                         opts.ablation, opts.batch_size);
    std::vector<std::vector<double>> p_full(examples.size());
    for (size_t i = 0; i < examples.size(); ++i) p_full[i] = softmax_f64(full[i].data(), V);

    Circuit full_c = full_circuit(g, circuit.model_hash);
    auto mean_kl_vs_full = [&](const Circuit& c) {
        std::vector<std::vector<float>> rows =
            answer_logits(model, &c, examples, opts.ablation, opts.batch_size);
        double kl_sum = 0.0;
        for (size_t i = 0; i < examples.size(); ++i) {
            std::vector<double> q = softmax_f64(rows[i].data(), V);
            kl_sum += kl_divergence(p_full[i], q);
        }
        return kl_sum / static_cast<double>(examples.size());
    };

    std::vector<EdgeFaithfulnessRecord> out;
    out.reserve(probe_edges.size());
    for (int e : probe_edges) {
        EdgeFaithfulnessRecord rec;
        rec.edge_index = e;
        Circuit model_minus = full_c;
        model_minus.kept_edges[e] = 0;
        rec.m_e = mean_kl_vs_full(model_minus);
        Circuit circ_minus = circuit;
        circ_minus.kept_edges[e] = 0;
        rec.c_e = mean_kl_vs_full(circ_minus);
        out.push_back(rec);
    }
    return out;
}

}  // namespace edgeprune
