#include "support.hpp"

#include <spdhash/linalg.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace spdhash;
using namespace spdhash::testing;

namespace {

double orthogonality_defect(const Matrix& q) {
    const Matrix g = naive_matmul(q, naive_transpose(q));
    return max_entry_diff(g, Matrix::identity(q.rows()));
}

} // namespace

TEST(Svd, DiagonalMatrixIsItsOwnDecomposition) {
    const Matrix a(2, 2, std::vector<double>{3.0, 0.0, 0.0, 1.0});
    const SvdFactors f = svd(a);
    ASSERT_EQ(f.s.size(), 2U);
    EXPECT_NEAR(f.s[0], 3.0, 1e-14);
    EXPECT_NEAR(f.s[1], 1.0, 1e-14);
    EXPECT_LT(max_entry_diff(f.u, Matrix::identity(2)), 1e-14);
    EXPECT_LT(max_entry_diff(f.v, Matrix::identity(2)), 1e-14);
}

TEST(Svd, ZeroMatrix) {
    const SvdFactors f = svd(Matrix(2, 3));
    EXPECT_EQ(f.s, (std::vector<double>{0.0, 0.0}));
    EXPECT_LT(orthogonality_defect(f.u), 1e-10);
    EXPECT_LT(orthogonality_defect(f.v), 1e-10);
    EXPECT_EQ(max_abs(f.reconstruct()), 0.0);
}

TEST(Svd, SeededReconstructionAndOrthogonality) {
    const std::vector<std::pair<std::size_t, std::size_t>> shapes{
        {5, 8}, {1, 4}, {3, 5}, {8, 8}, {5, 32}, {15, 32}, {7, 3}, {30, 32}};
    std::uint64_t seed = 11;
    for (auto [m, d] : shapes) {
        const Matrix a = random_matrix(m, d, ++seed);
        const SvdFactors f = svd(a);
        ASSERT_EQ(f.u.rows(), m);
        ASSERT_EQ(f.v.rows(), d);
        ASSERT_EQ(f.s.size(), std::min(m, d));
        Matrix sigma(m, d);
        for (std::size_t i = 0; i < f.s.size(); ++i) sigma(i, i) = f.s[i];
        const Matrix rec = naive_matmul(naive_matmul(f.u, sigma), naive_transpose(f.v));
        double err = 0.0;
        double norm = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            err += std::pow(rec.data()[k] - a.data()[k], 2);
            norm += a.data()[k] * a.data()[k];
        }
        EXPECT_LT(std::sqrt(err / norm), 1e-9) << m << "x" << d;
        EXPECT_LT(orthogonality_defect(f.u), 1e-10) << m << "x" << d;
        EXPECT_LT(orthogonality_defect(f.v), 1e-10) << m << "x" << d;
        for (std::size_t i = 1; i < f.s.size(); ++i) EXPECT_LE(f.s[i], f.s[i - 1]);
        for (double s : f.s) EXPECT_GE(s, 0.0);
    }
}

TEST(Svd, SignConventionFirstNonzeroOfEachUColumnIsPositive) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const SvdFactors f = svd(random_matrix(4, 6, seed));
        for (std::size_t j = 0; j < f.u.cols(); ++j) {
            for (std::size_t i = 0; i < f.u.rows(); ++i) {
                if (std::abs(f.u(i, j)) > 1e-12) {
                    EXPECT_GT(f.u(i, j), 0.0);
                    break;
                }
            }
        }
    }
}

TEST(Svd, Deterministic) {
    const Matrix a = random_matrix(6, 9, 5);
    const SvdFactors f1 = svd(a);
    const SvdFactors f2 = svd(a);
    EXPECT_EQ(f1.u, f2.u);
    EXPECT_EQ(f1.v, f2.v);
    EXPECT_EQ(f1.s, f2.s);
}

TEST(Svd, RankDeficientInputStillOrthogonal) {
    Matrix a = random_matrix(4, 7, 3);
    for (std::size_t j = 0; j < a.cols(); ++j) a(3, j) = a(0, j) + a(1, j);
    const SvdFactors f = svd(a);
    EXPECT_NEAR(f.s[3], 0.0, 1e-12);
    EXPECT_LT(orthogonality_defect(f.u), 1e-10);
    EXPECT_LT(orthogonality_defect(f.v), 1e-10);
    EXPECT_LT(max_entry_diff(f.reconstruct(), a), 1e-12);
}

TEST(Svd, RejectsEmpty) { EXPECT_THROW(svd(Matrix(0, 3)), DimensionError); }

TEST(SpdLogOracle, IdentityMapsToZero) {
    EXPECT_LT(max_abs(spd_log_oracle(Matrix::identity(3))), 1e-15);
}

TEST(SpdLogOracle, DiagonalCase) {
    const double e = std::numbers::e;
    const Matrix s(2, 2, std::vector<double>{e, 0.0, 0.0, e * e});
    const Matrix expected(2, 2, std::vector<double>{1.0, 0.0, 0.0, 2.0});
    EXPECT_LT(max_entry_diff(spd_log_oracle(s), expected), 1e-14);
}

TEST(SpdLogOracle, KnownEigendecomposition) {
    const Matrix r = random_orthogonal(2, 42);
    const std::vector<double> lambda{2.0, 5.0};
    const std::vector<double> logs{std::log(2.0), std::log(5.0)};
    const Matrix got = spd_log_oracle(conjugate_diag(r, lambda));
    EXPECT_LT(max_entry_diff(got, conjugate_diag(r, logs)), 1e-10);
}

TEST(SpdLogOracle, RoundTripThroughExponential) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const std::size_t n = 2 + seed % 7;
        const Matrix r = random_orthogonal(n, seed);
        const std::vector<double> x_eig = random_vector(n, seed + 100, 2.0);
        std::vector<double> exp_eig(n);
        for (std::size_t i = 0; i < n; ++i) exp_eig[i] = std::exp(x_eig[i]);
        const Matrix x = conjugate_diag(r, x_eig);
        const Matrix s = conjugate_diag(r, exp_eig);
        EXPECT_LT(max_entry_diff(spd_log_oracle(s), x), 1e-8) << "n=" << n;
        EXPECT_LT(max_entry_diff(sym_exp_oracle(x), s), 1e-8 * std::max(1.0, max_abs(s))) << "n=" << n;
    }
}

TEST(SpdLogOracle, OutputIsSymmetric) {
    const Matrix d = random_matrix(3, 5, 9);
    Matrix s = naive_matmul(naive_transpose(d), d);
    for (std::size_t i = 0; i < 5; ++i) s(i, i) += 0.1;
    s = sym(s);
    const Matrix l = spd_log_oracle(s);
    EXPECT_EQ(l, naive_transpose(l));
}

TEST(SpdLogOracle, RejectsNonSpd) {
    EXPECT_THROW(spd_log_oracle(Matrix(2, 2, std::vector<double>{1.0, 0.0, 0.0, -1.0})), NonSpdError);
    EXPECT_THROW(spd_log_oracle(Matrix(2, 2)), NonSpdError);
    EXPECT_THROW(spd_log_oracle(Matrix(2, 2, std::vector<double>{2.0, 0.5, 0.0, 2.0})), NonSpdError);
    EXPECT_THROW(spd_log_oracle(Matrix(2, 3)), DimensionError);
}

TEST(SymmetricEigen, MatchesConstruction) {
    const Matrix r = random_orthogonal(5, 3);
    const std::vector<double> vals{-3.0, -1.0, 0.5, 2.0, 7.0};
    const SymmetricEigen e = symmetric_eigen(conjugate_diag(r, vals));
    for (std::size_t i = 0; i < vals.size(); ++i) EXPECT_NEAR(e.values[i], vals[i], 1e-12);
}

TEST(Sym, DirectFormula) {
    const Matrix a(2, 2, std::vector<double>{0.0, 2.0, 0.0, 0.0});
    EXPECT_EQ(sym(a), Matrix(2, 2, std::vector<double>({0.0, 1.0, 1.0, 0.0})));
}

TEST(Sym, SymmetricInputIsFixedPoint) {
    const Matrix a(3, 3, std::vector<double>{1, 2, 3, 2, 5, 6, 3, 6, 9});
    EXPECT_EQ(sym(a), a);
}

TEST(Sym, SeededOutputIsExactlySymmetricAndIdempotent) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Matrix s = sym(random_matrix(4, 4, seed));
        EXPECT_EQ(s, naive_transpose(s));
        EXPECT_EQ(sym(s), s);
    }
}

TEST(Sym, RejectsNonSquare) { EXPECT_THROW(sym(Matrix(2, 3)), DimensionError); }

TEST(Hadamard, WithIdentityKeepsDiagonal) {
    const Matrix a = random_matrix(4, 4, 7);
    const Matrix h = hadamard(a, Matrix::identity(4));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(h(i, j), i == j ? a(i, i) : 0.0);
}

TEST(Hadamard, WithZeroIsZero) {
    EXPECT_EQ(max_abs(hadamard(random_matrix(3, 5, 1), Matrix(3, 5))), 0.0);
}

TEST(Hadamard, CommutativeAndAssociative) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Matrix a = random_matrix(3, 5, seed);
        const Matrix b = random_matrix(3, 5, seed + 50);
        const Matrix c = random_matrix(3, 5, seed + 90);
        EXPECT_EQ(hadamard(a, b), hadamard(b, a));
        EXPECT_LT(max_entry_diff(hadamard(hadamard(a, b), c), hadamard(a, hadamard(b, c))), 1e-15);
    }
}

TEST(Hadamard, RejectsShapeMismatch) {
    EXPECT_THROW(hadamard(Matrix(2, 3), Matrix(3, 2)), DimensionError);
}

TEST(Matrix, ProductsAgreeWithNaiveReference) {
    const Matrix a = random_matrix(4, 6, 1);
    const Matrix b = random_matrix(6, 3, 2);
    const Matrix c = random_matrix(5, 6, 3);
    EXPECT_LT(max_entry_diff(matmul(a, b), naive_matmul(a, b)), 1e-13);
    EXPECT_LT(max_entry_diff(matmul_nt(a, c), naive_matmul(a, naive_transpose(c))), 1e-13);
    EXPECT_EQ(a.transposed(), naive_transpose(a));
    EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Matrix, RejectsNonFiniteAndBadShapes) {
    EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, std::nan("")}), DomainError);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), DimensionError);
    EXPECT_THROW(Matrix(2, 2, std::numeric_limits<double>::infinity()), DomainError);
}
