#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tcsi/tcsi.hpp"

using namespace tcsi;

namespace {

DenseTensor3 random_tensor(const Dims3& d, std::mt19937_64& rng) { return gaussian_tensor(d, rng); }

double rel_norm(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300}); }

double rel_norm(const DenseTensor3& a, const DenseTensor3& b) { return frob_norm(a - b) / std::max({frob_norm(a), frob_norm(b), 1e-300}); }

}  // namespace

TEST(Matricize, ZeroTensorGivesZeroMatrix) {
  const Matrix m = matricize(DenseTensor3({3, 4, 5}), 0);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m.cols(), 20);
  EXPECT_EQ(m.norm(), 0.0);
}

TEST(Matricize, HandEnumeratedModeOneFibers) {
  DenseTensor3 x({2, 2, 2});
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      for (Index k = 0; k < 2; ++k) x(i, j, k) = static_cast<double>(i + 2 * j + 4 * k);
  // Columns are the fibers (j,k) = (0,0), (1,0), (0,1), (1,1).
  Matrix expected(2, 4);
  expected << 0, 2, 4, 6, 1, 3, 5, 7;
  EXPECT_EQ(matricize(x, 0), expected);
}

TEST(Matricize, MatchesFiberEnumerationInEveryMode) {
  std::mt19937_64 rng(3);
  const DenseTensor3 x = random_tensor({3, 4, 5}, rng);
  for (int mode = 0; mode < 3; ++mode) EXPECT_EQ(matricize(x, mode), oracle::matricize(x, mode)) << "mode " << mode;
}

TEST(Matricize, RoundTripIsExact) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const DenseTensor3 x = random_tensor({2 + t % 3, 3, 1 + t % 4}, rng);
    for (int mode = 0; mode < 3; ++mode) EXPECT_EQ(dematricize(matricize(x, mode), mode, x.dims()), x);
  }
}

TEST(Dematricize, ZeroMatrixGivesZeroTensor) {
  EXPECT_EQ(dematricize(Matrix::Zero(4, 6), 2, {2, 3, 4}), DenseTensor3({2, 3, 4}));
}

TEST(Dematricize, ScalarTensor) {
  Matrix m(1, 1);
  m << 5.0;
  const DenseTensor3 x = dematricize(m, 0, {1, 1, 1});
  EXPECT_EQ(x(0, 0, 0), 5.0);
}

TEST(Dematricize, InvertsKnownTensor) {
  DenseTensor3 x({2, 3, 4});
  for (Index n = 0; n < x.size(); ++n) x.data()[static_cast<std::size_t>(n)] = static_cast<double>(n) - 7.5;
  for (int mode = 0; mode < 3; ++mode) EXPECT_EQ(dematricize(matricize(x, mode), mode, x.dims()), x);
}

TEST(Dematricize, RejectsWrongShape) {
  EXPECT_THROW(dematricize(Matrix::Zero(3, 5), 0, {2, 3, 4}), DimensionError);
}

TEST(ModeProduct, IdentityLeavesTensorUnchanged) {
  std::mt19937_64 rng(5);
  const DenseTensor3 x = random_tensor({3, 4, 2}, rng);
  for (int mode = 0; mode < 3; ++mode) EXPECT_LT(rel_norm(mode_product(x, Matrix::Identity(x.dim(mode), x.dim(mode)), mode), x), 1e-15);
}

TEST(ModeProduct, HandSummedOnesTensor) {
  const DenseTensor3 x({2, 2, 2}, 1.0);
  Matrix a(1, 2);
  a << 1, 1;
  const DenseTensor3 y = mode_product(x, a, 0);
  EXPECT_EQ(y.dims(), (Dims3{1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 2.0);
}

TEST(ModeProduct, UnfoldingIdentityOnRandomInstances) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const DenseTensor3 x = random_tensor({3, 4, 5}, rng);
    const int mode = t % 3;
    const Matrix a = gaussian_matrix(2 + t % 4, x.dim(mode), rng);
    const DenseTensor3 y = mode_product(x, a, mode);
    EXPECT_LT(rel_norm(matricize(y, mode), a * oracle::matricize(x, mode)), 1e-13);
    EXPECT_LT(rel_norm(y, oracle::mode_product(x, a, mode)), 1e-13);
  }
}

TEST(ModeProduct, SameModeComposesAndDistinctModesCommute) {
  std::mt19937_64 rng(7);
  const DenseTensor3 x = random_tensor({3, 4, 5}, rng);
  const Matrix a = gaussian_matrix(4, 4, rng), b = gaussian_matrix(3, 4, rng), c = gaussian_matrix(2, 5, rng);
  EXPECT_LT(rel_norm(mode_product(mode_product(x, a, 1), b, 1), mode_product(x, b * a, 1)), 1e-12);
  EXPECT_LT(rel_norm(mode_product(mode_product(x, a, 1), c, 2), mode_product(mode_product(x, c, 2), a, 1)), 1e-12);
}

TEST(ModeProduct, RejectsMismatchedMatrix) {
  EXPECT_THROW(mode_product(DenseTensor3({2, 3, 4}), Matrix::Zero(2, 2), 1), DimensionError);
}

TEST(TuckerToFull, IdentityFactorsReturnCore) {
  std::mt19937_64 rng(8);
  const DenseTensor3 g = random_tensor({2, 3, 4}, rng);
  EXPECT_LT(rel_norm(tucker_to_full(g, Matrix::Identity(2, 2), Matrix::Identity(3, 3), Matrix::Identity(4, 4)), g), 1e-15);
}

TEST(TuckerToFull, RankOneIsScaledOuterProduct) {
  std::mt19937_64 rng(9);
  const Matrix u1 = gaussian_matrix(3, 1, rng), u2 = gaussian_matrix(4, 1, rng), u3 = gaussian_matrix(2, 1, rng);
  const DenseTensor3 g({1, 1, 1}, 2.5);
  const DenseTensor3 x = tucker_to_full(g, u1, u2, u3);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j)
      for (Index k = 0; k < 2; ++k) EXPECT_NEAR(x(i, j, k), 2.5 * u1(i) * u2(j) * u3(k), 1e-14);
}

TEST(TuckerToFull, OrderIndependentAndMatchesEntrywiseSum) {
  std::mt19937_64 rng(10);
  const DenseTensor3 g = random_tensor({2, 3, 2}, rng);
  const std::array<Matrix, 3> u{gaussian_matrix(4, 2, rng), gaussian_matrix(5, 3, rng), gaussian_matrix(3, 2, rng)};
  const DenseTensor3 a = tucker_to_full(g, u);
  const DenseTensor3 b = mode_product(mode_product(mode_product(g, u[2], 2), u[0], 0), u[1], 1);
  EXPECT_LT(rel_norm(a, b), 1e-13);
  EXPECT_LT(rel_norm(a, oracle::tucker_full(g, u)), 1e-13);
}

TEST(Inner, ZeroAndPositivity) {
  std::mt19937_64 rng(11);
  const DenseTensor3 x = random_tensor({2, 3, 4}, rng);
  EXPECT_EQ(inner(x, DenseTensor3({2, 3, 4})), 0.0);
  EXPECT_GT(inner(x, x), 0.0);
  EXPECT_EQ(inner(DenseTensor3({2, 3, 4}), DenseTensor3({2, 3, 4})), 0.0);
}

TEST(Inner, OnesTensorCountsEntries) {
  const DenseTensor3 x({2, 2, 2}, 1.0);
  EXPECT_EQ(inner(x, x), 8.0);
  EXPECT_DOUBLE_EQ(frob_norm(x), std::sqrt(8.0));
}

TEST(Inner, BilinearSymmetricAndCauchySchwarz) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const DenseTensor3 x = random_tensor({3, 2, 4}, rng), y = random_tensor({3, 2, 4}, rng), z = random_tensor({3, 2, 4}, rng);
    EXPECT_NEAR(inner(x, y), inner(y, x), 1e-13);
    EXPECT_NEAR(inner(2.0 * x + z, y), 2.0 * inner(x, y) + inner(z, y), 1e-12);
    EXPECT_LE(std::abs(inner(x, y)), frob_norm(x) * frob_norm(y));
  }
}

TEST(Inner, RejectsMismatchedShapes) { EXPECT_THROW(inner(DenseTensor3({2, 2, 2}), DenseTensor3({2, 2, 3})), DimensionError); }

TEST(Uf, OrthonormalInputIsReturned) {
  std::mt19937_64 rng(13);
  const Matrix q = random_orthogonal(6, rng).leftCols(3);
  EXPECT_LT((uf(q) - q).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Uf, PaddedDiagonalGivesStandardBasis) {
  Matrix a = Matrix::Zero(4, 2);
  a(0, 0) = 2;
  a(1, 1) = 3;
  EXPECT_LT((uf(a) - Matrix::Identity(4, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Uf, OrthonormalAndEquivariant) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = gaussian_matrix(7, 3, rng);
    const Matrix o = random_orthogonal(3, rng);
    const Matrix q = uf(a);
    EXPECT_LT((q.transpose() * q - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((uf(a * o) - q * o).cwiseAbs().maxCoeff(), 1e-12);
    // span is preserved
    EXPECT_LT((a - q * (q.transpose() * a)).norm() / a.norm(), 1e-13);
  }
}

TEST(Uf, EquivarianceCounterexampleForTriangularInput) {
  Matrix a(2, 2);
  a << 1, 1, 0, 1;
  Matrix o(2, 2);
  o << 0, -1, 1, 0;
  EXPECT_LT((uf(a * o) - uf(a) * o).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Uf, RankDeficientInputThrows) {
  Matrix a = Matrix::Zero(4, 2);
  a(0, 0) = 1;
  a(1, 0) = 1;
  EXPECT_THROW(uf(a), RankDeficiencyError);
  EXPECT_THROW(uf(Matrix::Zero(2, 3)), DimensionError);
}

TEST(KronApply, IdentityFactors) {
  std::mt19937_64 rng(15);
  const Matrix m = gaussian_matrix(3, 6, rng);
  EXPECT_LT((kron_apply(m, Matrix::Identity(2, 2), Matrix::Identity(3, 3)) - m).norm(), 1e-15);
}

TEST(KronApply, MatchesExplicitKronecker) {
  std::mt19937_64 rng(16);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 5, 6, 7;
  const Matrix m = gaussian_matrix(3, 4, rng);
  EXPECT_LT(rel_norm(kron_apply(m, a, b), m * oracle::kron(a, b)), 1e-14);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = gaussian_matrix(4, 3, rng), y = gaussian_matrix(5, 2, rng), n = gaussian_matrix(3, 20, rng);
    EXPECT_LT(rel_norm(kron_apply(n, x, y), n * oracle::kron(x, y)), 1e-12);
  }
}

TEST(KronApply, ZeroMatrixGivesZero) {
  std::mt19937_64 rng(17);
  EXPECT_EQ(kron_apply(Matrix::Zero(2, 6), gaussian_matrix(2, 2, rng), gaussian_matrix(3, 2, rng)).norm(), 0.0);
}

TEST(MultiLinearRank, Validation) {
  EXPECT_NO_THROW((MultiLinearRank{{2, 3, 4}}.validate({2, 3, 4})));
  EXPECT_THROW((MultiLinearRank{{0, 1, 1}}.validate({2, 2, 2})), DimensionError);
  EXPECT_THROW((MultiLinearRank{{3, 1, 1}}.validate({2, 2, 2})), DimensionError);
}

TEST(DenseTensor3, RejectsBadShapes) {
  EXPECT_THROW(DenseTensor3({0, 2, 2}), DimensionError);
  EXPECT_THROW(DenseTensor3({2, 2, 2}, std::vector<double>(7)), DimensionError);
}
