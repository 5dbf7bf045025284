#pragma once

// Covariance pooling with log-Euclidean mapping, Y = V log(S^T S + eps I) V^T for
// D = U S V^T, and its structured backward pass through the SVD.

#include <spdhash/errors.hpp>
#include <spdhash/linalg.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace spdhash {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kSpectrumGap = 1e-6;
inline constexpr double kSigmaFloor = 1e-6;

/// What pool_backward does when the singular spectrum is degenerate.
enum class SpectrumPolicy : std::uint8_t {
    error,  ///< throw DegenerateSpectrumError
    clamp,  ///< substitute sign-preserving +-kSpectrumGap denominators and floor sigma
};

struct PoolCache {
    Matrix features;   // D, m x d
    SvdFactors factors;
    double epsilon = kDefaultEpsilon;
    Matrix pooled;     // Y, d x d symmetric

    std::size_t frames() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }

    /// log(sigma_i^2 + eps) for i < m, log(eps) for the trailing d - m entries.
    std::vector<double> log_spectrum() const {
        std::vector<double> out(dim(), std::log(epsilon));
        for (std::size_t i = 0; i < factors.s.size(); ++i)
            out[i] = std::log(factors.s[i] * factors.s[i] + epsilon);
        return out;
    }
};

inline PoolCache pool_forward(const Matrix& features, double epsilon = kDefaultEpsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw DomainError("pool_forward: epsilon must be positive, got " + std::to_string(epsilon));
    }
    if (features.rows() == 0 || features.cols() == 0) {
        throw DimensionError("pool_forward: empty feature matrix");
    }
    if (features.rows() > features.cols()) {
        throw DimensionError("pool_forward: frame count " + std::to_string(features.rows()) +
                             " exceeds feature dimension " + std::to_string(features.cols()));
    }
    PoolCache cache{features, svd(features), epsilon, {}};
    const std::vector<double> logs = cache.log_spectrum();
    const Matrix& v = cache.factors.v;
    Matrix scaled = v;
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) scaled(i, j) *= logs[j];
    cache.pooled = sym(matmul_nt(scaled, v));
    return cache;
}

/// Checks the non-degeneracy conditions the backward pass relies on.
/// Returns an empty string when the spectrum is fine, else a description.
inline std::string spectrum_defect(const std::vector<double>& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] < kSigmaFloor) {
            return "singular value " + std::to_string(i) + " = " + std::to_string(s[i]) +
                   " is below the floor";
        }
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            if (std::abs(s[i] * s[i] - s[j] * s[j]) < kSpectrumGap) {
                return "singular values " + std::to_string(i) + " and " + std::to_string(j) +
                       " are repeated (gap below threshold)";
            }
        }
    }
    return {};
}

/// dJ/dD given dJ/dY.
///
/// With Ssym = sym(dY), L = diag(log spectrum) and V = (V1 | V2), V1 the first m columns:
///   dJ/dSigma = 2 Sigma (Sigma^T Sigma + eps I)^-1 V^T Ssym V
///   dJ/dV     = 2 Ssym V L                       = (G1 | G2)
///   Q         = Sigma_m^-1 G1^T - Sigma_m^-1 V1^T G2 V2^T
///   P_ij      = 1 / (sigma_j^2 - sigma_i^2), P_ii = 0
///   dJ/dD     = U Q + U (dJ/dSigma - Q V)_diag V^T + 2 U (P o (-Q V Sigma^T))_sym Sigma V^T
inline Matrix pool_backward(const PoolCache& cache, const Matrix& d_pooled,
                            SpectrumPolicy policy = SpectrumPolicy::error) {
    const std::size_t m = cache.frames();
    const std::size_t d = cache.dim();
    if (d_pooled.rows() != d || d_pooled.cols() != d) {
        throw DimensionError("pool_backward: upstream gradient is " + d_pooled.shape_string() +
                             ", expected " + std::to_string(d) + "x" + std::to_string(d));
    }
    if (!all_finite(d_pooled.data())) {
        throw NumericalError("pool_backward: upstream gradient dJ/dY is not finite");
    }
    const Matrix& u = cache.factors.u;
    const Matrix& v = cache.factors.v;
    std::vector<double> sigma = cache.factors.s;

    if (const std::string defect = spectrum_defect(sigma); !defect.empty()) {
        if (policy == SpectrumPolicy::error) {
            throw DegenerateSpectrumError("pool_backward: " + defect);
        }
        for (double& s : sigma) s = std::max(s, kSigmaFloor);
    }

    const Matrix s_sym = sym(d_pooled);
    const std::vector<double> logs = cache.log_spectrum();
    const Matrix sv = matmul(s_sym, v);  // Ssym V

    // dJ/dSigma only enters through its diagonal.
    std::vector<double> d_sigma(m);
    for (std::size_t i = 0; i < m; ++i) {
        double k_ii = 0.0;
        for (std::size_t r = 0; r < d; ++r) k_ii += v(r, i) * sv(r, i);
        const double s = cache.factors.s[i];
        d_sigma[i] = 2.0 * s / (s * s + cache.epsilon) * k_ii;
    }

    // G = dJ/dV = 2 Ssym V L, split as (G1 | G2).
    Matrix g1(d, m);
    Matrix g2(d, d - m);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t j = 0; j < m; ++j) g1(r, j) = 2.0 * sv(r, j) * logs[j];
        for (std::size_t j = m; j < d; ++j) g2(r, j - m) = 2.0 * sv(r, j) * logs[j];
    }
    Matrix v1(d, m);
    Matrix v2(d, d - m);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t j = 0; j < m; ++j) v1(r, j) = v(r, j);
        for (std::size_t j = m; j < d; ++j) v2(r, j - m) = v(r, j);
    }

    // Q = Sigma_m^-1 (G1^T - V1^T G2 V2^T), m x d.
    Matrix q = g1.transposed();
    if (d > m) {
        q -= matmul_nt(matmul(v1.transposed(), g2), v2);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double inv = 1.0 / sigma[i];
        for (double& x : q.row(i)) x *= inv;
    }

    const Matrix qv = matmul(q, v);  // m x d

    // P o (-Q V Sigma^T), then symmetrised.
    Matrix p_term(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            double denom = sigma[j] * sigma[j] - sigma[i] * sigma[i];
            if (std::abs(denom) < kSpectrumGap) {
                // Only reachable under the clamp policy; keep P antisymmetric.
                denom = (i < j) ? -kSpectrumGap : kSpectrumGap;
            }
            p_term(i, j) = -qv(i, j) * cache.factors.s[j] / denom;
        }
    }
    const Matrix p_sym = sym(p_term);

    // inner = Q + (dJ/dSigma - QV)_diag V^T + 2 (P o ..)_sym Sigma_m V1^T, all m x d.
    Matrix coeff(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        coeff(i, i) += d_sigma[i] - qv(i, i);
        for (std::size_t j = 0; j < m; ++j) coeff(i, j) += 2.0 * p_sym(i, j) * cache.factors.s[j];
    }
    Matrix inner = matmul_nt(coeff, v1);
    inner += q;
    Matrix grad = matmul(u, inner);
    if (!all_finite(grad.data())) {
        throw NumericalError("pool_backward: dJ/dD is not finite");
    }
    return grad;
}

enum class ProbeLoss : std::uint8_t {
    sum_of_squares,  ///< J = sum_ij Y_ij^2
    random_linear,   ///< J = sum_ij R_ij Y_ij with a seeded R
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t row = 0;
    std::size_t col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares pool_backward against central differences of probe_loss(pool_forward(D)).
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckReport grad_check(const Matrix& features, double epsilon, ProbeLoss probe,
                                  std::uint64_t seed = 0, double step = 1e-5) {
    const std::size_t d = features.cols();
    Matrix weights(d, d);
    if (probe == ProbeLoss::random_linear) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (double& w : weights.data()) w = dist(rng);
    }
    auto loss = [&](const Matrix& y) {
        double j = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            j += probe == ProbeLoss::sum_of_squares ? y.data()[k] * y.data()[k]
                                                    : weights.data()[k] * y.data()[k];
        }
        return j;
    };

    const PoolCache cache = pool_forward(features, epsilon);
    const Matrix upstream = probe == ProbeLoss::sum_of_squares ? 2.0 * cache.pooled : weights;
    const Matrix analytic = pool_backward(cache, upstream, SpectrumPolicy::error);

    GradCheckReport report;
    Matrix probe_point = features;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double orig = probe_point(i, j);
            probe_point(i, j) = orig + step;
            const double plus = loss(pool_forward(probe_point, epsilon).pooled);
            probe_point(i, j) = orig - step;
            const double minus = loss(pool_forward(probe_point, epsilon).pooled);
            probe_point(i, j) = orig;
            const double numeric = (plus - minus) / (2.0 * step);
            const double a = analytic(i, j);
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel >= report.max_rel_err) {
                report = {rel, i, j, a, numeric};
            }
        }
    }
    return report;
}

} // namespace spdhash
