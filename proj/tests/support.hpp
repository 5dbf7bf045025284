#pragma once

// Seeded inputs and independent reference computations shared by the unit and
// acceptance tests. Nothing here calls the library's numerical kernels.

#include <spdhash/hashnet.hpp>
#include <spdhash/linalg.hpp>
#include <spdhash/objective.hpp>
#include <spdhash/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace spdhash::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = normal(rng);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double s = 0.0L;
            for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
            c(i, j) = static_cast<double>(s);
        }
    return c;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double max_entry_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

/// Modified Gram-Schmidt on the columns of a seeded Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    Matrix q = random_matrix(n, n, seed);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < j; ++p) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += q(i, p) * q(i, j);
            for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
    }
    return q;
}

/// R diag(values) R^T.
inline Matrix conjugate_diag(const Matrix& r, std::span<const double> values) {
    Matrix rd = r;
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t j = 0; j < r.cols(); ++j) rd(i, j) *= values[j];
    return naive_matmul(rd, naive_transpose(r));
}

inline double reference_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double squared_dist(const RelaxedCode& a, const RelaxedCode& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    return s;
}

/// Every parameter of a model as one mutable list, in checkpoint order.
inline std::vector<double*> parameter_pointers(Model& m) {
    std::vector<double*> out;
    auto add = [&out](std::span<double> s) {
        for (double& v : s) out.push_back(&v);
    };
    add(m.enc_w.data());
    add(m.enc_b);
    add(m.img_w.data());
    add(m.img_b);
    add(m.vid_w.data());
    add(m.vid_b);
    return out;
}

inline std::vector<double> flatten(const ModelGrads& g) {
    std::vector<double> out;
    auto add = [&out](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); };
    add(g.enc_w.data());
    add(g.enc_b);
    add(g.img_w.data());
    add(g.img_b);
    add(g.vid_w.data());
    add(g.vid_b);
    return out;
}

/// Tiny two-class batch: per class two 3-frame videos and two images, d0 = 6.
inline Batch toy_batch(std::uint64_t seed, std::size_t frames = 3, std::size_t d0 = 6) {
    Batch b;
    std::uint64_t s = seed * 1000;
    for (std::uint32_t label = 0; label < 2; ++label) {
        for (int v = 0; v < 2; ++v) {
            b.modalities.push_back(Modality::video);
            b.labels.push_back(label);
            b.inputs.push_back(random_matrix(frames, d0, ++s));
        }
        for (int i = 0; i < 2; ++i) {
            b.modalities.push_back(Modality::image);
            b.labels.push_back(label);
            b.inputs.push_back(random_matrix(1, d0, ++s));
        }
    }
    return b;
}

/// Objective of a batch computed from forward passes only.
inline double forward_objective(const Model& model, const Batch& batch, const ObjectiveConfig& cfg) {
    std::vector<RelaxedCode> codes;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        codes.push_back(batch.modalities[n] == Modality::image ? forward_image(batch.inputs[n].row(0), model)
                                                               : forward_video(batch.inputs[n], model).code);
    }
    return batch_objective(codes, batch.labels, batch.modalities, cfg).value;
}

struct ParamCheck {
    double max_rel_err = 0.0;
    std::size_t worst = 0;
    std::size_t count = 0;
};

/// Central differences of the full objective against evaluate_batch for every parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline ParamCheck whole_model_check(const Model& model, const Batch& batch, const ObjectiveConfig& cfg,
                                    double step = 1e-6, double floor = 1e-6) {
    const BatchEvaluation eval = evaluate_batch(model, batch, cfg, SpectrumPolicy::error, 1);
    const std::vector<double> analytic = flatten(eval.grads);
    Model probe = model;
    std::vector<double*> params = parameter_pointers(probe);
    ParamCheck out;
    out.count = params.size();
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double orig = *params[p];
        *params[p] = orig + step;
        const double plus = forward_objective(probe, batch, cfg);
        *params[p] = orig - step;
        const double minus = forward_objective(probe, batch, cfg);
        *params[p] = orig;
        const double numeric = (plus - minus) / (2.0 * step);
        const double rel = std::abs(analytic[p] - numeric) /
                           std::max({std::abs(analytic[p]), std::abs(numeric), floor});
        if (rel > out.max_rel_err) {
            out.max_rel_err = rel;
            out.worst = p;
        }
    }
    return out;
}

/// Textbook AP from a full brute-force ranking (stable sort on distance, then id).
inline double brute_force_ap(const std::vector<std::vector<std::uint8_t>>& db_bits,
                             const std::vector<std::uint32_t>& db_labels,
                             const std::vector<std::uint8_t>& q_bits, std::uint32_t q_label) {
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (distance, index)
    for (std::size_t i = 0; i < db_bits.size(); ++i) {
        std::size_t d = 0;
        for (std::size_t k = 0; k < q_bits.size(); ++k) d += db_bits[i][k] != q_bits[k];
        order.emplace_back(d, i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double hits = 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (db_labels[order[r].second] != q_label) continue;
        hits += 1.0;
        sum += hits / static_cast<double>(r + 1);
    }
    return sum / hits;
}

} // namespace spdhash::testing
