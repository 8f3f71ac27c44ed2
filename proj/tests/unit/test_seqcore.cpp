#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "phaseseg/seqcore.hpp"

using namespace phaseseg;

namespace {

TemporalKernel<double> single_channel_kernel(std::initializer_list<double> taps) {
  auto k = TemporalKernel<double>::zeros(1, 1, static_cast<int>(taps.size()));
  int j = 0;
  for (double v : taps) k.at(0, 0, j++) = v;
  return k;
}

MatrixD column(std::initializer_list<double> v) {
  MatrixD m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(FeatureSequence, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(FeatureSequence<double>(MatrixD(0, 3)), ShapeError);
  MatrixD bad = MatrixD::Ones(2, 2);
  bad(1, 0) = std::nan("");
  EXPECT_THROW(FeatureSequence<double>{bad}, NumericError);
  EXPECT_NO_THROW(FeatureSequence<double>(MatrixD::Ones(1, 1)));
}

TEST(ProbSequence, ValidatesRows) {
  MatrixD p(2, 2);
  p << 0.5, 0.5, 0.2, 0.8;
  EXPECT_NO_THROW(ProbSequence<double>::from_probabilities(p));
  p(1, 1) = 0.9;
  EXPECT_THROW(ProbSequence<double>::from_probabilities(p), ValidationError);
  p << 1.2, -0.2, 0.5, 0.5;
  EXPECT_THROW(ProbSequence<double>::from_probabilities(p), ValidationError);
}

TEST(DilatedConv, IdentityKernelCopiesInput) {
  const MatrixD x = column({3, -1, 4, 1, 5});
  const auto out = dilated_conv1d<double>(x, single_channel_kernel({0, 1, 0}), VectorD::Zero(1), 1);
  EXPECT_EQ(out, x);
}

TEST(DilatedConv, HandConvolutionWithDilationTwo) {
  const MatrixD x = column({1, 2, 3, 4});
  const auto out = dilated_conv1d<double>(x, single_channel_kernel({1, 0, 0}), VectorD::Zero(1), 2);
  EXPECT_EQ(out, column({0, 0, 1, 2}));
}

TEST(DilatedConv, ZeroKernelGivesBias) {
  std::mt19937_64 rng(1);
  const MatrixD x = oracle::random_matrix(rng, 6, 3);
  VectorD b(2);
  b << 1.5, -2.0;
  const auto out = dilated_conv1d<double>(x, TemporalKernel<double>::zeros(2, 3, 3), b, 4);
  for (Eigen::Index t = 0; t < 6; ++t) {
    EXPECT_EQ(out(t, 0), 1.5);
    EXPECT_EQ(out(t, 1), -2.0);
  }
}

TEST(DilatedConv, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 16);
    const int cin = 1 + static_cast<int>(rng() % 8);
    const int cout = 1 + static_cast<int>(rng() % 8);
    const int k = (rng() % 2) ? 3 : 5;
    const int dilation = 1 + static_cast<int>(rng() % 8);
    const MatrixD x = oracle::random_matrix(rng, T, cin);
    auto kernel = TemporalKernel<double>::zeros(cout, cin, k);
    for (auto& tap : kernel.taps) tap = oracle::random_matrix(rng, cout, cin);
    const VectorD b = oracle::random_vector(rng, cout);
    const auto got = dilated_conv1d<double>(x, kernel, b, dilation);
    const auto want = oracle::dilated_conv(x, kernel.taps, b, dilation);
    ASSERT_EQ(got.rows(), T);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DilatedConv, IsLinearInInput) {
  std::mt19937_64 rng(3);
  const MatrixD x = oracle::random_matrix(rng, 12, 4);
  const MatrixD y = oracle::random_matrix(rng, 12, 4);
  auto kernel = TemporalKernel<double>::zeros(3, 4, 3);
  for (auto& tap : kernel.taps) tap = oracle::random_matrix(rng, 3, 4);
  const VectorD zero = VectorD::Zero(3);
  const double a = 1.7, c = -0.4;
  const MatrixD lhs = dilated_conv1d<double>(a * x + c * y, kernel, zero, 2);
  const MatrixD rhs = a * dilated_conv1d<double>(x, kernel, zero, 2) + c * dilated_conv1d<double>(y, kernel, zero, 2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DilatedConv, RejectsShapeMismatchAndBadArguments) {
  const MatrixD x = MatrixD::Ones(4, 2);
  EXPECT_THROW(dilated_conv1d<double>(x, TemporalKernel<double>::zeros(1, 3, 3), VectorD::Zero(1), 1),
               ShapeError);
  EXPECT_THROW(dilated_conv1d<double>(x, TemporalKernel<double>::zeros(1, 2, 3), VectorD::Zero(2), 1),
               ShapeError);
  EXPECT_ANY_THROW(dilated_conv1d<double>(x, TemporalKernel<double>::zeros(1, 2, 3), VectorD::Zero(1), 0));
  EXPECT_ANY_THROW(dilated_conv1d<double>(x, TemporalKernel<double>::zeros(1, 2, 2), VectorD::Zero(1), 1));
}

TEST(DilatedConv, IdentityKernelInputGradientIsUpstream) {
  std::mt19937_64 rng(4);
  const MatrixD x = oracle::random_matrix(rng, 7, 1);
  const MatrixD up = oracle::random_matrix(rng, 7, 1);
  const auto g = dilated_conv1d_backward<double>(x, single_channel_kernel({0, 1, 0}), 3, up);
  EXPECT_LT((g.input - up).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DilatedConv, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  const MatrixD x = oracle::random_matrix(rng, 5, 2);
  auto kernel = TemporalKernel<double>::zeros(3, 2, 3);
  for (auto& tap : kernel.taps) tap = oracle::random_matrix(rng, 3, 2);
  const auto g = dilated_conv1d_backward<double>(x, kernel, 1, MatrixD::Zero(5, 3));
  EXPECT_TRUE(g.input.isZero(0));
  EXPECT_TRUE(g.bias.isZero(0));
  for (const auto& tap : g.weights.taps) EXPECT_TRUE(tap.isZero(0));
}

TEST(Conv1x1, Examples) {
  EXPECT_EQ(conv1x1<double>(MatrixD::Identity(3, 3), MatrixD::Identity(3, 3), VectorD::Zero(3)),
            MatrixD::Identity(3, 3));

  MatrixD x(2, 2);
  x << 1, 2, -3, 5;
  MatrixD w(1, 2);
  w << 1, 1;
  const auto sum = conv1x1<double>(x, w, VectorD::Zero(1));
  EXPECT_EQ(sum(0, 0), 3);
  EXPECT_EQ(sum(1, 0), 2);

  MatrixD w2(2, 2);
  w2 << 2, 0, 0, 3;
  VectorD b(2);
  b << 1, 1;
  const auto out = conv1x1<double>(MatrixD::Ones(1, 2), w2, b);
  EXPECT_EQ(out(0, 0), 3);
  EXPECT_EQ(out(0, 1), 4);

  EXPECT_THROW(conv1x1<double>(MatrixD::Ones(1, 3), w2, b), ShapeError);
}

TEST(Conv1x1, SingleFrameWeightGradientIsOuterProduct) {
  std::mt19937_64 rng(6);
  const MatrixD x = oracle::random_matrix(rng, 1, 4);
  const MatrixD w = oracle::random_matrix(rng, 3, 4);
  const MatrixD up = oracle::random_matrix(rng, 1, 3);
  const auto g = conv1x1_backward(x, w, up);
  const MatrixD outer = up.transpose() * x;
  EXPECT_LT((g.weights - outer).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Relu, Examples) {
  MatrixD neg(2, 2);
  neg << -1, -2, -0.5, -3;
  EXPECT_TRUE(relu(neg).isZero(0));
  MatrixD pos(1, 3);
  pos << 0, 1, 2;
  EXPECT_EQ(relu(pos), pos);
  MatrixD mixed(1, 2);
  mixed << -1, 2;
  MatrixD want(1, 2);
  want << 0, 2;
  EXPECT_EQ(relu(mixed), want);
}

TEST(Softmax, Examples) {
  MatrixD z(2, 2);
  z << 0, 0, std::log(1.0), std::log(3.0);
  const auto p = softmax_rows(z);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
  EXPECT_NEAR(p(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(1, 1), 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(7);
  const MatrixD z = oracle::random_matrix(rng, 20, 6, 10.0);
  const auto p = softmax_rows(z);
  MatrixD shifted = z;
  for (Eigen::Index t = 0; t < z.rows(); ++t) shifted.row(t).array() += 100.0 * (t - 10);
  const auto q = softmax_rows(shifted);
  for (Eigen::Index t = 0; t < z.rows(); ++t) EXPECT_NEAR(p.data().row(t).sum(), 1.0, 1e-9);
  EXPECT_LT((p.data() - q.data()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.data() - oracle::softmax(z)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Softmax, RejectsNonFinite) {
  MatrixD z = MatrixD::Zero(2, 2);
  z(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax_rows(z), NumericError);
}

TEST(Primitives, PreserveSequenceLength) {
  std::mt19937_64 rng(8);
  for (int T : {1, 2, 5, 16}) {
    const MatrixD x = oracle::random_matrix(rng, T, 3);
    auto kernel = TemporalKernel<double>::zeros(2, 3, 3);
    EXPECT_EQ(dilated_conv1d<double>(x, kernel, VectorD::Zero(2), 64).rows(), T);
    EXPECT_EQ(conv1x1<double>(x, MatrixD::Ones(2, 3), VectorD::Zero(2)).rows(), T);
    EXPECT_EQ(relu(x).rows(), T);
    EXPECT_EQ(softmax_rows(x).frames(), T);
  }
}

TEST(Gradients, PrimitivesMatchFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    for (const auto& r : gradcheck::seqcore_checks(seed)) {
      EXPECT_LT(r.error, 1e-4) << r.name << " (seed " << seed << ")";
    }
  }
}
