#pragma once

// Exhaustive Hamming-distance retrieval with full-ranking mAP and micro-averaged
// precision/recall over distance thresholds.

#include <spdhash/errors.hpp>
#include <spdhash/hashnet.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace spdhash {

inline std::size_t hamming(const BinaryCode& a, const BinaryCode& b) {
    if (a.size() != b.size()) {
        throw DimensionError("hamming: code lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    }
    std::size_t d = 0;
    const auto wa = a.words();
    const auto wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
    return d;
}

struct RankedItem {
    std::uint64_t id = 0;
    std::uint32_t label = 0;
    std::size_t distance = 0;

    friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

/// Non-decreasing distance; equal distances ordered by ascending id.
using RankedResult = std::vector<RankedItem>;

class RetrievalIndex {
public:
    RetrievalIndex(std::vector<BinaryCode> codes, std::vector<std::uint32_t> labels,
                   std::vector<std::uint64_t> ids, Modality modality)
        : codes_(std::move(codes)), labels_(std::move(labels)), ids_(std::move(ids)), modality_(modality) {
        if (codes_.size() != labels_.size() || codes_.size() != ids_.size()) {
            throw DimensionError("RetrievalIndex: codes, labels and ids differ in length");
        }
        if (!codes_.empty()) {
            bits_ = codes_.front().size();
            for (const BinaryCode& c : codes_)
                if (c.size() != bits_) throw DimensionError("RetrievalIndex: codes differ in length");
        }
    }

    /// Ids default to insertion positions.
    static RetrievalIndex with_sequential_ids(std::vector<BinaryCode> codes,
                                              std::vector<std::uint32_t> labels, Modality modality) {
        std::vector<std::uint64_t> ids = sequential_ids(labels.size());
        return RetrievalIndex(std::move(codes), std::move(labels), std::move(ids), modality);
    }

    std::size_t size() const noexcept { return codes_.size(); }
    std::size_t code_bits() const noexcept { return bits_; }
    Modality modality() const noexcept { return modality_; }
    std::span<const BinaryCode> codes() const noexcept { return codes_; }
    std::span<const std::uint32_t> labels() const noexcept { return labels_; }
    std::span<const std::uint64_t> ids() const noexcept { return ids_; }

    std::size_t count_label(std::uint32_t label) const {
        return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
    }

    RankedResult query(const BinaryCode& q) const {
        if (!codes_.empty() && q.size() != bits_) {
            throw DimensionError("query: code length " + std::to_string(q.size()) +
                                 " != index code length " + std::to_string(bits_));
        }
        RankedResult out(codes_.size());
        for (std::size_t i = 0; i < codes_.size(); ++i) out[i] = {ids_[i], labels_[i], hamming(q, codes_[i])};
        std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
            return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
        });
        return out;
    }

private:
    static std::vector<std::uint64_t> sequential_ids(std::size_t n) {
        std::vector<std::uint64_t> ids(n);
        for (std::size_t i = 0; i < n; ++i) ids[i] = i;
        return ids;
    }

    std::vector<BinaryCode> codes_;
    std::vector<std::uint32_t> labels_;
    std::vector<std::uint64_t> ids_;
    Modality modality_;
    std::size_t bits_ = 0;
};

/// AP over the full ranking: mean of precision@k at the ranks of relevant items.
inline double average_precision(std::span<const std::uint32_t> ranked_labels, std::uint32_t query_label) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < ranked_labels.size(); ++k) {
        if (ranked_labels[k] != query_label) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    if (hits == 0) {
        throw DomainError("average_precision: no relevant item for label " + std::to_string(query_label));
    }
    return sum / static_cast<double>(hits);
}

inline double average_precision(const RankedResult& ranked, std::uint32_t query_label) {
    std::vector<std::uint32_t> labels(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) labels[i] = ranked[i].label;
    return average_precision(labels, query_label);
}

struct QuerySet {
    std::vector<BinaryCode> codes;
    std::vector<std::uint32_t> labels;
    std::vector<std::uint64_t> ids;

    std::size_t size() const noexcept { return codes.size(); }
};

namespace detail {

inline void require_queries(const QuerySet& q) {
    if (q.codes.size() != q.labels.size() || (!q.ids.empty() && q.ids.size() != q.codes.size())) {
        throw DimensionError("queries: codes, labels and ids differ in length");
    }
}

} // namespace detail

/// Per-query average precision, in query order.
inline std::vector<double> query_average_precisions(const QuerySet& queries, const RetrievalIndex& index) {
    detail::require_queries(queries);
    std::vector<double> aps(queries.size());
    for (std::size_t n = 0; n < queries.size(); ++n)
        aps[n] = average_precision(index.query(queries.codes[n]), queries.labels[n]);
    return aps;
}

inline double mean_ap(const QuerySet& queries, const RetrievalIndex& index) {
    const std::vector<double> aps = query_average_precisions(queries, index);
    if (aps.empty()) throw DomainError("mean_ap: no queries");
    double s = 0.0;
    for (double a : aps) s += a;
    return s / static_cast<double>(aps.size());
}

struct PrPoint {
    std::size_t threshold = 0;
    double recall = 0.0;
    double precision = 0.0;  // 0 when nothing is retrieved at this threshold
};

/// Micro-averaged precision/recall of "retrieve everything within distance t", t = 0..K.
inline std::vector<PrPoint> pr_curve(const QuerySet& queries, const RetrievalIndex& index) {
    detail::require_queries(queries);
    const std::size_t k = index.code_bits();
    std::vector<std::uint64_t> relevant_at(k + 1, 0);
    std::vector<std::uint64_t> retrieved_at(k + 1, 0);
    std::uint64_t relevant_total = 0;
    for (std::size_t n = 0; n < queries.size(); ++n) {
        const std::uint32_t label = queries.labels[n];
        const std::size_t rel = index.count_label(label);
        if (rel == 0) {
            throw DomainError("pr_curve: no relevant item for label " + std::to_string(label));
        }
        relevant_total += rel;
        for (std::size_t i = 0; i < index.size(); ++i) {
            const std::size_t dist = hamming(queries.codes[n], index.codes()[i]);
            ++retrieved_at[dist];
            if (index.labels()[i] == label) ++relevant_at[dist];
        }
    }
    std::vector<PrPoint> curve;
    std::uint64_t tp = 0;
    std::uint64_t retrieved = 0;
    for (std::size_t t = 0; t <= k; ++t) {
        tp += relevant_at[t];
        retrieved += retrieved_at[t];
        PrPoint p{t, relevant_total == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(relevant_total),
                  retrieved == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(retrieved)};
        curve.push_back(p);
    }
    return curve;
}

inline void write_ap_csv(std::ostream& out, const QuerySet& queries, std::span<const double> aps) {
    out << "query_id,label,ap\n" << std::setprecision(12);
    for (std::size_t n = 0; n < aps.size(); ++n) {
        const std::uint64_t id = queries.ids.empty() ? n : queries.ids[n];
        out << id << ',' << queries.labels[n] << ',' << aps[n] << '\n';
    }
}

inline void write_pr_csv(std::ostream& out, std::span<const PrPoint> curve) {
    out << "threshold,recall,precision\n" << std::setprecision(12);
    for (const PrPoint& p : curve) out << p.threshold << ',' << p.recall << ',' << p.precision << '\n';
}

} // namespace spdhash
