#pragma once

// Heterogeneous triplet ranking objective over relaxed codes:
//   J = mean(J_er) + lambda1 * mean(J_e) + lambda2 * mean(J_r)
// with each per-triplet term max(0, alpha + |bu - bv|^2 - |bu - bw|^2).

#include <spdhash/errors.hpp>
#include <spdhash/hashnet.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spdhash {

enum class TripletTerm : std::uint8_t {
    inter,            ///< er: anchor in one modality, positive and negative in the other
    intra_euclidean,  ///< e: three images
    intra_riemannian, ///< r: three videos
};

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    TripletTerm term = TripletTerm::inter;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletSets {
    std::vector<Triplet> inter;
    std::vector<Triplet> intra_euclidean;
    std::vector<Triplet> intra_riemannian;
};

struct ObjectiveConfig {
    double alpha = 2.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigError("objective: alpha must be positive");
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
            throw ConfigError("objective: lambda weights must be non-negative");
    }
};

namespace detail {

inline void require_same_length(const RelaxedCode& a, const RelaxedCode& b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": code lengths " + std::to_string(a.size()) +
                             " and " + std::to_string(b.size()) + " differ");
    }
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

} // namespace detail

inline double triplet_loss(const RelaxedCode& bu, const RelaxedCode& bv, const RelaxedCode& bw,
                           double alpha) {
    detail::require_same_length(bu, bv, "triplet_loss");
    detail::require_same_length(bu, bw, "triplet_loss");
    const double v = alpha + detail::squared_distance(bu.values, bv.values) -
                     detail::squared_distance(bu.values, bw.values);
    return v > 0.0 ? v : 0.0;
}

struct TripletGrads {
    std::vector<double> anchor;
    std::vector<double> positive;
    std::vector<double> negative;
};

/// Active triplets get (2(bw - bv), 2(bv - bu), 2(bu - bw)); inactive ones, including
/// the hinge point itself, get zeros.
inline TripletGrads triplet_grads(const RelaxedCode& bu, const RelaxedCode& bv,
                                  const RelaxedCode& bw, double alpha) {
    const std::size_t k = bu.size();
    TripletGrads g{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
                   std::vector<double>(k, 0.0)};
    if (triplet_loss(bu, bv, bw, alpha) <= 0.0) return g;
    for (std::size_t i = 0; i < k; ++i) {
        g.anchor[i] = 2.0 * (bw.values[i] - bv.values[i]);
        g.positive[i] = 2.0 * (bv.values[i] - bu.values[i]);
        g.negative[i] = 2.0 * (bu.values[i] - bw.values[i]);
    }
    return g;
}

/// Exhaustive in-batch enumeration, ordered by anchor, then positive, then negative index.
///
/// Inter-space triplets cover both (image, video, video) and (video, image, image).
inline TripletSets mine_triplets(std::span<const std::uint32_t> labels,
                                 std::span<const Modality> modalities) {
    if (labels.size() != modalities.size()) {
        throw DimensionError("mine_triplets: " + std::to_string(labels.size()) + " labels but " +
                             std::to_string(modalities.size()) + " modalities");
    }
    TripletSets sets;
    const std::size_t n = labels.size();
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            if (v == u || labels[v] != labels[u]) continue;
            const bool same_form = modalities[v] == modalities[u];
            for (std::size_t w = 0; w < n; ++w) {
                if (labels[w] == labels[u] || modalities[w] != modalities[v]) continue;
                if (!same_form) {
                    sets.inter.push_back({u, v, w, TripletTerm::inter});
                } else if (modalities[u] == Modality::image) {
                    sets.intra_euclidean.push_back({u, v, w, TripletTerm::intra_euclidean});
                } else {
                    sets.intra_riemannian.push_back({u, v, w, TripletTerm::intra_riemannian});
                }
            }
        }
    }
    return sets;
}

struct TermStats {
    std::size_t count = 0;
    std::size_t active = 0;
    double mean_loss = 0.0;  // 0 when count == 0

    double active_fraction() const {
        return count == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(count);
    }
};

struct ObjectiveResult {
    double value = 0.0;
    TermStats inter;
    TermStats intra_euclidean;
    TermStats intra_riemannian;
    std::vector<std::vector<double>> code_grads;  // one K-vector per sample
};

/// Evaluates the weighted objective and accumulates dJ/db into per-sample slots in
/// triplet enumeration order. Empty terms contribute 0.
inline ObjectiveResult batch_objective(std::span<const RelaxedCode> codes,
                                       std::span<const std::uint32_t> labels,
                                       std::span<const Modality> modalities,
                                       const ObjectiveConfig& cfg) {
    cfg.validate();
    if (codes.size() != labels.size()) {
        throw DimensionError("batch_objective: " + std::to_string(codes.size()) + " codes but " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t k = codes.empty() ? 0 : codes.front().size();
    for (const RelaxedCode& c : codes) {
        if (c.size() != k) throw DimensionError("batch_objective: codes have different lengths");
    }
    const TripletSets sets = mine_triplets(labels, modalities);

    ObjectiveResult out;
    out.code_grads.assign(codes.size(), std::vector<double>(k, 0.0));

    auto run_term = [&](const std::vector<Triplet>& triplets, double weight, TermStats& stats) {
        stats.count = triplets.size();
        if (triplets.empty()) return;
        const double scale = weight / static_cast<double>(triplets.size());
        double total = 0.0;
        for (const Triplet& t : triplets) {
            const RelaxedCode& bu = codes[t.anchor];
            const RelaxedCode& bv = codes[t.positive];
            const RelaxedCode& bw = codes[t.negative];
            const double loss = triplet_loss(bu, bv, bw, cfg.alpha);
            total += loss;
            if (loss <= 0.0) continue;
            ++stats.active;
            if (scale == 0.0) continue;
            auto& gu = out.code_grads[t.anchor];
            auto& gv = out.code_grads[t.positive];
            auto& gw = out.code_grads[t.negative];
            for (std::size_t i = 0; i < k; ++i) {
                gu[i] += scale * 2.0 * (bw.values[i] - bv.values[i]);
                gv[i] += scale * 2.0 * (bv.values[i] - bu.values[i]);
                gw[i] += scale * 2.0 * (bu.values[i] - bw.values[i]);
            }
        }
        stats.mean_loss = total / static_cast<double>(triplets.size());
        out.value += weight * stats.mean_loss;
    };
    run_term(sets.inter, 1.0, out.inter);
    run_term(sets.intra_euclidean, cfg.lambda1, out.intra_euclidean);
    run_term(sets.intra_riemannian, cfg.lambda2, out.intra_riemannian);
    return out;
}

} // namespace spdhash
