#pragma once

// Dense row-major kernels: matrix container, products, full SVD (one-sided
// Jacobi) and a symmetric eigen solver used as an independent log/exp oracle.

#include <spdhash/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spdhash {

inline bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (!std::isfinite(fill)) {
            throw DomainError("Matrix: fill value is not finite");
        }
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
        }
        if (!all_finite(data_)) {
            throw DomainError("Matrix: non-finite entry");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> diag) {
        Matrix m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& other) {
        require_same_shape(other, "operator+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
        return *this;
    }

    Matrix& operator-=(const Matrix& other) {
        require_same_shape(other, "operator-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
        return *this;
    }

    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    void require_same_shape(const Matrix& other, const char* what) const {
        if (rows_ != other.rows_ || cols_ != other.cols_) {
            throw DimensionError(std::string(what) + ": shape mismatch " + shape_string() +
                                 " vs " + other.shape_string());
        }
    }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_string() + " times " + b.shape_string());
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

/// a * b^T without materialising the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: " + a.shape_string() + " times transpose of " +
                             b.shape_string());
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto br = b.row(j);
            c(i, j) = std::inner_product(ar.begin(), ar.end(), br.begin(), 0.0);
        }
    }
    return c;
}

inline std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError("matvec: " + a.shape_string() + " times vector of length " +
                             std::to_string(x.size()));
    }
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
    }
    return y;
}

/// a^T x
inline std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError("matvec_t: transpose of " + a.shape_string() +
                             " times vector of length " + std::to_string(x.size()));
    }
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
    }
    return y;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

/// (A + A^T) / 2
inline Matrix sym(const Matrix& a) {
    if (!a.is_square()) {
        throw DimensionError("sym: matrix is not square (" + a.shape_string() + ")");
    }
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        s(i, i) = a(i, i);
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "hadamard");
    Matrix c(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) c.data()[k] = a.data()[k] * b.data()[k];
    return c;
}

struct SvdFactors {
    Matrix u;                // m x m
    std::vector<double> s;   // min(m, d), non-increasing
    Matrix v;                // d x d

    /// U * Sigma * V^T with Sigma the m x d matrix carrying s on its diagonal.
    Matrix reconstruct() const {
        Matrix us(u.rows(), v.rows());
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = 0; j < s.size(); ++j) us(i, j) = u(i, j) * s[j];
        return matmul_nt(us, v);
    }
};

namespace detail {

inline constexpr int kMaxJacobiSweeps = 80;

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline void rotate_rows(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
    auto rp = m.row(p);
    auto rq = m.row(q);
    for (std::size_t k = 0; k < rp.size(); ++k) {
        const double a = rp[k];
        const double b = rq[k];
        rp[k] = c * a - s * b;
        rq[k] = s * a + c * b;
    }
}

// Orthogonalises the rows of `w` with plane rotations, mirroring each rotation
// onto `r`. Leaves w_final = r_final * w_initial with mutually orthogonal rows.
inline void hestenes_jacobi(Matrix& w, Matrix& r) {
    const double tol = 1e-15 * static_cast<double>(std::max<std::size_t>(w.cols(), 1));
    const std::size_t k = w.rows();
    for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < k; ++p) {
            for (std::size_t q = p + 1; q < k; ++q) {
                const double alpha = dot(w.row(p), w.row(p));
                const double beta = dot(w.row(q), w.row(q));
                const double gamma = dot(w.row(p), w.row(q));
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                rotate_rows(w, p, q, c, s);
                rotate_rows(r, p, q, c, s);
                rotated = true;
            }
        }
        if (!rotated) return;
    }
    throw ConvergenceError("svd: one-sided Jacobi did not converge within " +
                           std::to_string(kMaxJacobiSweeps) + " sweeps");
}

// Fills the rows of `basis` flagged in `missing` with unit vectors orthogonal to
// every other row. Each new row is the largest column of the current complement
// projector I - sum b b^T, re-orthogonalised once against the accepted rows.
inline void complete_orthonormal_rows(Matrix& basis, const std::vector<bool>& missing) {
    const std::size_t n = basis.cols();
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < basis.rows(); ++i)
        if (!missing[i]) known.push_back(i);
    if (known.size() == basis.rows()) return;

    // Symmetric, so rows double as columns.
    Matrix proj = Matrix::identity(n);
    auto remove = [&](std::span<const double> b) {
        for (std::size_t i = 0; i < n; ++i) {
            auto pr = proj.row(i);
            const double bi = b[i];
            for (std::size_t j = 0; j < n; ++j) pr[j] -= bi * b[j];
        }
    };
    for (std::size_t kidx : known) remove(basis.row(kidx));

    std::vector<double> cand(n);
    for (std::size_t slot = 0; slot < basis.rows(); ++slot) {
        if (!missing[slot]) continue;
        std::size_t best = 0;
        double best_norm = -1.0;
        for (std::size_t e = 0; e < n; ++e) {
            const double nrm = dot(proj.row(e), proj.row(e));
            if (nrm > best_norm * (1.0 + 1e-12)) {
                best_norm = nrm;
                best = e;
            }
        }
        std::copy(proj.row(best).begin(), proj.row(best).end(), cand.begin());
        for (std::size_t kidx : known) {
            auto b = basis.row(kidx);
            const double p = dot(b, cand);
            for (std::size_t t = 0; t < n; ++t) cand[t] -= p * b[t];
        }
        const double nrm = std::sqrt(dot(cand, cand));
        auto out = basis.row(slot);
        for (std::size_t t = 0; t < n; ++t) out[t] = cand[t] / nrm;
        remove(out);
        known.push_back(slot);
    }
}

inline void apply_sign_convention(std::span<double> vec, std::span<double> partner) {
    for (double x : vec) {
        if (std::abs(x) > 1e-12) {
            if (x < 0.0) {
                for (double& y : vec) y = -y;
                for (double& y : partner) y = -y;
            }
            return;
        }
    }
}

} // namespace detail

/// Full SVD A = U * Sigma * V^T, with U m x m and V d x d.
///
/// Sign convention: the first non-negligible entry of each of the leading
/// min(m, d) columns of U is positive, the matching V column flips with it.
/// Columns spanning null spaces are completed deterministically.
inline SvdFactors svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw DimensionError("svd: empty matrix");
    }
    if (!all_finite(a.data())) {
        throw DomainError("svd: non-finite input");
    }
    const std::size_t m = a.rows();
    const std::size_t d = a.cols();
    const bool wide = m <= d;
    const std::size_t k = wide ? m : d;

    // Rows of w are the vectors to orthogonalise: rows of A when wide, columns otherwise.
    Matrix w = wide ? a : a.transposed();
    Matrix r = Matrix::identity(k);
    detail::hestenes_jacobi(w, r);

    std::vector<double> norms(k);
    for (std::size_t j = 0; j < k; ++j) norms[j] = std::sqrt(detail::dot(w.row(j), w.row(j)));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    const std::size_t n_long = w.cols();  // length of the orthogonalised vectors (max(m, d))
    const double cutoff = norms[order[0]] * 1e-13;

    // small_rows: rows = columns of the k x k factor; long_rows: columns of the other factor.
    Matrix small_rows(k, k);
    Matrix long_rows(n_long, n_long);
    std::vector<bool> missing(n_long, true);
    SvdFactors out;
    out.s.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t src = order[j];
        out.s[j] = norms[src];
        std::copy(r.row(src).begin(), r.row(src).end(), small_rows.row(j).begin());
        if (norms[src] > cutoff && norms[src] > 0.0) {
            auto dst = long_rows.row(j);
            auto wr = w.row(src);
            for (std::size_t t = 0; t < n_long; ++t) dst[t] = wr[t] / norms[src];
            missing[j] = false;
        }
    }
    detail::complete_orthonormal_rows(long_rows, missing);

    // Rows of u_t / v_t are the columns of U / V.
    Matrix& u_t = wide ? small_rows : long_rows;
    Matrix& v_t = wide ? long_rows : small_rows;
    for (std::size_t j = 0; j < k; ++j) detail::apply_sign_convention(u_t.row(j), v_t.row(j));
    for (std::size_t j = k; j < u_t.rows(); ++j) detail::apply_sign_convention(u_t.row(j), {});
    for (std::size_t j = k; j < v_t.rows(); ++j) detail::apply_sign_convention(v_t.row(j), {});

    out.u = u_t.transposed();
    out.v = v_t.transposed();
    return out;
}

struct SymmetricEigen {
    std::vector<double> values;  // ascending
    Matrix vectors;              // columns are eigenvectors
};

inline bool is_symmetric(const Matrix& a, double tol) {
    if (!a.is_square()) return false;
    const double scale = std::max(1.0, max_abs(a));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) return false;
    return true;
}

/// Cyclic two-sided Jacobi eigen solver for symmetric matrices.
inline SymmetricEigen symmetric_eigen(const Matrix& s) {
    if (!s.is_square() || s.rows() == 0) {
        throw DimensionError("symmetric_eigen: expected a non-empty square matrix, got " +
                             s.shape_string());
    }
    const std::size_t n = s.rows();
    Matrix a = sym(s);
    Matrix v = Matrix::identity(n);
    bool converged = false;
    for (int sweep = 0; sweep < detail::kMaxJacobiSweeps && !converged; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += a(i, i) * a(i, i);
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        total += 2.0 * off;
        if (off <= 1e-30 * total || off == 0.0) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        throw ConvergenceError("symmetric_eigen: Jacobi did not converge");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

namespace detail {

template <class F>
Matrix spectral_map(const SymmetricEigen& eig, F&& f) {
    const std::size_t n = eig.values.size();
    Matrix scaled = eig.vectors;
    for (std::size_t j = 0; j < n; ++j) {
        const double fj = f(eig.values[j]);
        for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= fj;
    }
    return sym(matmul_nt(scaled, eig.vectors));
}

} // namespace detail

/// Matrix logarithm of an SPD matrix through its eigendecomposition.
inline Matrix spd_log_oracle(const Matrix& s) {
    if (!s.is_square()) {
        throw DimensionError("spd_log_oracle: matrix is not square (" + s.shape_string() + ")");
    }
    if (!is_symmetric(s, 1e-10)) {
        throw NonSpdError("spd_log_oracle: matrix is not symmetric");
    }
    const SymmetricEigen eig = symmetric_eigen(s);
    for (double lambda : eig.values) {
        if (!(lambda > 0.0)) {
            throw NonSpdError("spd_log_oracle: eigenvalue " + std::to_string(lambda) +
                              " is not positive");
        }
    }
    return detail::spectral_map(eig, [](double x) { return std::log(x); });
}

/// Matrix exponential of a symmetric matrix through its eigendecomposition.
inline Matrix sym_exp_oracle(const Matrix& x) {
    if (!is_symmetric(x, 1e-10)) {
        throw DomainError("sym_exp_oracle: matrix is not symmetric");
    }
    return detail::spectral_map(symmetric_eigen(x), [](double v) { return std::exp(v); });
}

} // namespace spdhash
