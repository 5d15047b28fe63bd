#include "edgeprune/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace edgeprune {

void HardConcreteConfig::validate() const {
    if (!(stretch_lo < 0.0f && 0.0f < 1.0f && 1.0f < stretch_hi))
        throw std::runtime_error("HardConcreteConfig: need l < 0 < 1 < r");
    if (!(noise_eps > 0.0f && noise_eps < 0.5f))
        throw std::runtime_error("HardConcreteConfig: need 0 < eps < 0.5");
}

float sample_gate(float log_alpha, float u, const HardConcreteConfig& hc) {
    const float logit_u = std::log(u / (1.0f - u));
    const float s = 1.0f / (1.0f + std::exp(-(hc.temp_inv * logit_u + log_alpha)));
    const float stretched = s * (hc.stretch_hi - hc.stretch_lo) + hc.stretch_lo;
    return std::min(1.0f, std::max(0.0f, stretched));
}

float deterministic_gate(float log_alpha, const HardConcreteConfig& hc) {
    const float s = 1.0f / (1.0f + std::exp(-log_alpha));
    const float stretched = s * (hc.stretch_hi - hc.stretch_lo) + hc.stretch_lo;
    return std::min(1.0f, std::max(0.0f, stretched));
}

float effective_edge_mask(float z_edge, float z_src_node) { return z_edge * z_src_node; }

Tensor sample_gates(const Tensor& log_alpha, const std::vector<float>& noise_u,
                    const HardConcreteConfig& hc) {
    if (static_cast<int64_t>(noise_u.size()) != log_alpha.numel())
        throw_shape_error("sample_gates", {log_alpha.shape()},
                          "noise count " + std::to_string(noise_u.size()));
    std::vector<float> shifted(noise_u.size());
    for (size_t i = 0; i < noise_u.size(); ++i) {
        const float u = noise_u[i];
        shifted[i] = hc.temp_inv * std::log(u / (1.0f - u));
    }
    Tensor noise = Tensor::from(log_alpha.shape(), std::move(shifted));
    Tensor s = sigmoid(add(log_alpha, noise));
    Tensor stretched = add_scalar(scale(s, hc.stretch_hi - hc.stretch_lo), hc.stretch_lo);
    return clamp01(stretched);
}

Tensor deterministic_gates(const Tensor& log_alpha, const HardConcreteConfig& hc) {
    Tensor s = sigmoid(log_alpha);
    Tensor stretched = add_scalar(scale(s, hc.stretch_hi - hc.stretch_lo), hc.stretch_lo);
    return clamp01(stretched);
}

float log_alpha_for_gate(float gate, const HardConcreteConfig& hc) {
    const float s = (gate - hc.stretch_lo) / (hc.stretch_hi - hc.stretch_lo);
    if (s <= 0.0f || s >= 1.0f)
        throw std::runtime_error("log_alpha_for_gate: gate outside the open stretch interval");
    return std::log(s / (1.0f - s));
}

MaskParams init_mask_params(const ComputationalGraph& g, float init_gate,
                            const HardConcreteConfig& hc) {
    const float la = log_alpha_for_gate(init_gate, hc);
    MaskParams mp;
    mp.edge_log_alpha = Tensor::full({g.n_edges()}, la, true);
    mp.node_log_alpha = Tensor::full({g.writers}, la, true);
    return mp;
}

std::pair<std::vector<uint8_t>, float> threshold_partition(const std::vector<float>& gates,
                                                           float target_density) {
    const int n = static_cast<int>(gates.size());
    std::vector<uint8_t> kept(n, 0);
    if (n == 0) return {kept, 1.0f};

    auto count_ge = [&](float tau) {
        int c = 0;
        for (float v : gates)
            if (v >= tau) ++c;
        return c;
    };

    const double target_count = static_cast<double>(target_density) * n;
    // count_ge is nonincreasing in tau over (0, 1]; narrow onto the step
    // nearest the target count.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (count_ge(static_cast<float>(mid)) > target_count)
            lo = mid;
        else
            hi = mid;
    }
    // Candidate thresholds on either side of the converged step, plus the
    // empty cut above the range. tau stays strictly positive so fully closed
    // gates (exactly 0) are never kept.
    const float tau_lo = std::max(static_cast<float>(lo), std::nextafter(0.0f, 1.0f));
    const float tau_hi = std::max(static_cast<float>(hi), std::nextafter(0.0f, 1.0f));
    const float tau_above = std::nextafter(1.0f, 2.0f);
    float tau = tau_hi;
    int c = count_ge(tau_hi);
    for (auto [cand_tau, cand_c] : {std::pair<float, int>{tau_lo, count_ge(tau_lo)},
                                    std::pair<float, int>{tau_above, count_ge(tau_above)}}) {
        if (std::abs(cand_c - target_count) < std::abs(c - target_count)) {
            tau = cand_tau;
            c = cand_c;
        }
    }

    if (std::abs(c - target_count) > 1.0 + 1e-9) {
        // No pure threshold lands within 1/n of the target: split the
        // boundary tie group, earlier indices kept first.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (gates[a] != gates[b]) return gates[a] > gates[b];
            return a < b;
        });
        const long k = std::min<long>(std::max<long>(std::lround(target_count), 0), n);
        for (long i = 0; i < k; ++i) kept[order[i]] = 1;
        const float boundary = k > 0 ? gates[order[k - 1]] : std::nextafter(1.0f, 2.0f);
        return {kept, boundary};
    }
    for (int i = 0; i < n; ++i) kept[i] = gates[i] >= tau ? 1 : 0;
    return {kept, tau};
}

Circuit discretize(const MaskParams& params, const ComputationalGraph& g,
                   const std::string& model_hash, const HardConcreteConfig& hc,
                   const DiscretizeOptions& opts, DiscretizeInfo* info) {
    const int ne = g.n_edges();
    const int nw = g.writers;
    if (params.edge_log_alpha.numel() != ne || params.node_log_alpha.numel() != nw)
        throw std::runtime_error("discretize: mask params do not match graph");

    std::vector<float> edge_gates(ne), node_gates(nw);
    for (int i = 0; i < ne; ++i)
        edge_gates[i] = deterministic_gate(params.edge_log_alpha.data()[i], hc);
    for (int w = 0; w < nw; ++w)
        node_gates[w] = deterministic_gate(params.node_log_alpha.data()[w], hc);

    Circuit c;
    c.model_hash = model_hash;
    float target = 0.0f;
    float tau = 0.0f;

    if (opts.threshold_override) {
        tau = *opts.threshold_override;
        target = tau;
        c.kept_edges.assign(ne, 0);
        c.kept_nodes.assign(nw, 0);
        for (int i = 0; i < ne; ++i) c.kept_edges[i] = edge_gates[i] >= tau ? 1 : 0;
        for (int w = 0; w < nw; ++w) c.kept_nodes[w] = node_gates[w] >= tau ? 1 : 0;
    } else if (opts.density_override) {
        // Requested density applies to the edge family; nodes follow the
        // same threshold.
        target = *opts.density_override;
        auto [kept_e, tau_e] = threshold_partition(edge_gates, target);
        c.kept_edges = std::move(kept_e);
        tau = tau_e;
        c.kept_nodes.assign(nw, 0);
        for (int w = 0; w < nw; ++w) c.kept_nodes[w] = node_gates[w] >= tau ? 1 : 0;
    } else {
        // Pooled target: one threshold over edge and node gates together.
        std::vector<float> pooled = edge_gates;
        if (opts.pool_nodes) pooled.insert(pooled.end(), node_gates.begin(), node_gates.end());
        double sum = std::accumulate(pooled.begin(), pooled.end(), 0.0);
        target = pooled.empty() ? 0.0f : static_cast<float>(sum / pooled.size());
        auto [kept, tau_p] = threshold_partition(pooled, target);
        tau = tau_p;
        c.kept_edges.assign(kept.begin(), kept.begin() + ne);
        if (opts.pool_nodes) {
            c.kept_nodes.assign(kept.begin() + ne, kept.end());
        } else {
            c.kept_nodes.assign(nw, 0);
            for (int w = 0; w < nw; ++w) c.kept_nodes[w] = node_gates[w] >= tau ? 1 : 0;
        }
    }

    if (info) {
        info->target_density = target;
        info->threshold = tau;
        info->kept_edges = c.n_kept_edges();
        info->kept_nodes = c.n_kept_nodes();
    }
    return c;
}

}  // namespace edgeprune
