#include "support.hpp"

#include <spdhash/covpool.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace spdhash;
using namespace spdhash::testing;

namespace {

Matrix oracle_pool(const Matrix& d, double eps) {
    Matrix c = naive_matmul(naive_transpose(d), d);
    for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += eps;
    return spd_log_oracle(sym(c));
}

// Central differences of loss(pool_forward(D).Y), written out independently of grad_check.
Matrix numeric_gradient(const Matrix& d, double eps, const std::function<double(const Matrix&)>& loss,
                        double h = 1e-5) {
    Matrix g(d.rows(), d.cols());
    Matrix x = d;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) {
            const double orig = x(i, j);
            x(i, j) = orig + h;
            const double plus = loss(pool_forward(x, eps).pooled);
            x(i, j) = orig - h;
            const double minus = loss(pool_forward(x, eps).pooled);
            x(i, j) = orig;
            g(i, j) = (plus - minus) / (2.0 * h);
        }
    return g;
}

double linear_probe(const Matrix& r, const Matrix& y) {
    double j = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) j += r.data()[k] * y.data()[k];
    return j;
}

double max_rel(const Matrix& a, const Matrix& n) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double x = a.data()[k];
        const double y = n.data()[k];
        m = std::max(m, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-8}));
    }
    return m;
}

} // namespace

TEST(PoolForward, ZeroInput) {
    const PoolCache c = pool_forward(Matrix(2, 3), 0.01);
    EXPECT_LT(max_entry_diff(c.pooled, std::log(0.01) * Matrix::identity(3)), 1e-12);
    EXPECT_NEAR(c.pooled(0, 0), -4.6051702, 1e-7);
}

TEST(PoolForward, OrthonormalRows) {
    const PoolCache c = pool_forward(Matrix::identity(2), 1.0);
    EXPECT_LT(max_entry_diff(c.pooled, std::log(2.0) * Matrix::identity(2)), 1e-12);
    EXPECT_NEAR(c.pooled(1, 1), 0.6931472, 1e-7);
}

TEST(PoolForward, MatchesEigenOracle) {
    const Matrix d = random_matrix(3, 5, 1);
    EXPECT_LT(max_entry_diff(pool_forward(d, 1e-3).pooled, oracle_pool(d, 1e-3)), 1e-8);
}

TEST(PoolForward, MatchesEigenOracleAcrossShapes) {
    std::uint64_t seed = 100;
    for (auto [m, d] : std::vector<std::pair<std::size_t, std::size_t>>{
             {1, 4}, {3, 5}, {4, 6}, {8, 8}, {5, 32}, {30, 32}}) {
        for (double eps : {1e-3, 1e-1, 1.0}) {
            const Matrix x = random_matrix(m, d, ++seed, 2.0);
            EXPECT_LT(max_entry_diff(pool_forward(x, eps).pooled, oracle_pool(x, eps)), 1e-8)
                << m << "x" << d << " eps " << eps;
        }
    }
}

TEST(PoolForward, ExactlySymmetric) {
    const PoolCache c = pool_forward(random_matrix(4, 9, 3), 1e-3);
    EXPECT_EQ(c.pooled, naive_transpose(c.pooled));
    EXPECT_EQ(sym(c.pooled), c.pooled);
}

TEST(PoolForward, TrailingSpectrumIsLogEpsilon) {
    const PoolCache c = pool_forward(random_matrix(1, 4, 8), 1e-3);
    const std::vector<double> ls = c.log_spectrum();
    ASSERT_EQ(ls.size(), 4U);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(ls[i], std::log(1e-3));
    EXPECT_NEAR(ls[0], std::log(c.factors.s[0] * c.factors.s[0] + 1e-3), 1e-15);
}

TEST(PoolForward, RejectsBadInput) {
    EXPECT_THROW(pool_forward(random_matrix(5, 3, 1), 1e-3), DimensionError);
    EXPECT_THROW(pool_forward(random_matrix(2, 3, 1), 0.0), DomainError);
    EXPECT_THROW(pool_forward(random_matrix(2, 3, 1), -1.0), DomainError);
    EXPECT_THROW(pool_forward(Matrix(0, 3), 1e-3), DimensionError);
}

TEST(PoolBackward, ZeroUpstreamGivesZero) {
    const PoolCache c = pool_forward(random_matrix(3, 5, 4), 1e-3);
    EXPECT_EQ(max_abs(pool_backward(c, Matrix(5, 5))), 0.0);
}

TEST(PoolBackward, SumOfSquaresMatchesIndependentDifferences) {
    for (auto [m, d, seed] : std::vector<std::tuple<std::size_t, std::size_t, std::uint64_t>>{
             {4, 6, 21}, {8, 8, 22}}) {
        const Matrix x = random_matrix(m, d, seed);
        const PoolCache c = pool_forward(x, 1e-3);
        const Matrix analytic = pool_backward(c, 2.0 * c.pooled);
        const Matrix numeric = numeric_gradient(x, 1e-3, [](const Matrix& y) { return linear_probe(y, y); });
        EXPECT_LT(max_rel(analytic, numeric), 1e-4) << m << "x" << d;
    }
}

TEST(PoolBackward, RandomLinearProbeMatchesIndependentDifferences) {
    for (auto [m, d, seed] : std::vector<std::tuple<std::size_t, std::size_t, std::uint64_t>>{
             {1, 4, 1}, {3, 5, 2}, {4, 6, 3}, {8, 8, 4}, {5, 32, 5}}) {
        const Matrix x = random_matrix(m, d, seed);
        const Matrix r = random_matrix(d, d, seed + 1000);
        const Matrix analytic = pool_backward(pool_forward(x, 1e-3), r);
        const Matrix numeric = numeric_gradient(x, 1e-3, [&r](const Matrix& y) { return linear_probe(r, y); });
        EXPECT_LT(max_rel(analytic, numeric), 1e-4) << m << "x" << d;
    }
}

TEST(GradCheck, SeededShapesPass) {
    std::uint64_t seed = 0;
    for (auto [m, d] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 4}, {3, 5}, {4, 6}, {8, 8}, {5, 32}}) {
        const Matrix x = random_matrix(m, d, ++seed);
        EXPECT_LT(grad_check(x, 1e-3, ProbeLoss::sum_of_squares).max_rel_err, 1e-4) << m << "x" << d;
        EXPECT_LT(grad_check(x, 1e-3, ProbeLoss::random_linear, 3).max_rel_err, 1e-4) << m << "x" << d;
    }
}

TEST(GradCheck, RepeatedSingularValuesSurfaceAnError) {
    EXPECT_THROW(grad_check(2.0 * Matrix::identity(2), 1e-3, ProbeLoss::sum_of_squares),
                 DegenerateSpectrumError);
}

TEST(PoolBackward, DegenerateSpectrumPolicy) {
    // Two equal singular values.
    Matrix equal(2, 4);
    equal(0, 0) = 1.5;
    equal(1, 1) = 1.5;
    // A vanishing singular value: two identical rows.
    Matrix deficient = random_matrix(3, 5, 6);
    for (std::size_t j = 0; j < 5; ++j) deficient(2, j) = deficient(0, j);

    for (const Matrix& x : {equal, deficient}) {
        const PoolCache c = pool_forward(x, 1e-3);
        EXPECT_TRUE(all_finite(c.pooled.data()));
        EXPECT_FALSE(spectrum_defect(c.factors.s).empty());
        const Matrix dy = random_matrix(x.cols(), x.cols(), 77);
        EXPECT_THROW(pool_backward(c, dy, SpectrumPolicy::error), DegenerateSpectrumError);
        const Matrix clamped = pool_backward(c, dy, SpectrumPolicy::clamp);
        EXPECT_TRUE(all_finite(clamped.data()));
    }
}

TEST(PoolBackward, ClampAgreesWithErrorPolicyWhenSpectrumIsHealthy) {
    const PoolCache c = pool_forward(random_matrix(3, 6, 12), 1e-3);
    const Matrix dy = random_matrix(6, 6, 13);
    EXPECT_EQ(pool_backward(c, dy, SpectrumPolicy::error), pool_backward(c, dy, SpectrumPolicy::clamp));
}

TEST(PoolBackward, LinearInUpstream) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const PoolCache c = pool_forward(random_matrix(4, 7, seed), 1e-3);
        const Matrix y1 = random_matrix(7, 7, seed + 10);
        const Matrix y2 = random_matrix(7, 7, seed + 20);
        const double a = 0.7;
        const double b = -1.3;
        const Matrix lhs = pool_backward(c, a * y1 + b * y2);
        const Matrix rhs = a * pool_backward(c, y1) + b * pool_backward(c, y2);
        EXPECT_LT(max_entry_diff(lhs, rhs), 1e-10 * std::max(1.0, max_abs(lhs)));
    }
}

TEST(PoolBackward, RejectsWrongUpstreamShape) {
    const PoolCache c = pool_forward(random_matrix(2, 4, 1), 1e-3);
    EXPECT_THROW(pool_backward(c, Matrix(3, 3)), DimensionError);
}

TEST(PoolForward, SpectrumInvariantUnderRightRotation) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Matrix x = random_matrix(3, 6, seed);
        const Matrix r = random_orthogonal(6, seed + 40);
        const SymmetricEigen e1 = symmetric_eigen(pool_forward(x, 1e-3).pooled);
        const SymmetricEigen e2 = symmetric_eigen(pool_forward(naive_matmul(x, r), 1e-3).pooled);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(e1.values[i], e2.values[i], 1e-8);
    }
}
