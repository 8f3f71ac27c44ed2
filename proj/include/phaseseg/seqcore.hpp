#pragma once

// Dense sequence containers and the differentiable 1-D layer primitives
// (dilated convolution, 1x1 convolution, ReLU, row softmax) that the
// segmentation network is assembled from. Frames are rows, channels are
// columns. Every primitive keeps the frame count T unchanged.

#include <Eigen/Dense>

#include <vector>

#include "phaseseg/errors.hpp"

namespace phaseseg {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixD = Matrix<double>;
using VectorD = Vector<double>;
using MatrixF = Matrix<float>;
using VectorF = Vector<float>;

/// T x d per-frame embedding matrix. Construction rejects empty or
/// non-finite input.
template <typename Scalar>
class FeatureSequence {
 public:
  FeatureSequence() = default;
  explicit FeatureSequence(Matrix<Scalar> data);

  Eigen::Index frames() const { return data_.rows(); }
  Eigen::Index channels() const { return data_.cols(); }
  const Matrix<Scalar>& data() const { return data_; }

 private:
  Matrix<Scalar> data_;
};

/// T x C row-stochastic matrix of per-frame class probabilities.
template <typename Scalar>
class ProbSequence {
 public:
  ProbSequence() = default;

  /// Validates rows: entries in [0,1], each row summing to one.
  static ProbSequence from_probabilities(Matrix<Scalar> probs);

  Eigen::Index frames() const { return data_.rows(); }
  Eigen::Index classes() const { return data_.cols(); }
  const Matrix<Scalar>& data() const { return data_; }
  Scalar operator()(Eigen::Index t, Eigen::Index c) const { return data_(t, c); }

 private:
  template <typename S>
  friend ProbSequence<S> softmax_rows(const Matrix<S>& logits);
  explicit ProbSequence(Matrix<Scalar> probs) : data_(std::move(probs)) {}

  Matrix<Scalar> data_;
};

/// Temporal convolution kernel of shape Cout x Cin x k, stored tap-major:
/// taps[j] is the Cout x Cin matrix applied at offset (j - (k-1)/2) * dilation.
template <typename Scalar>
struct TemporalKernel {
  std::vector<Matrix<Scalar>> taps;

  static TemporalKernel zeros(Eigen::Index out_channels, Eigen::Index in_channels, int size);

  int size() const { return static_cast<int>(taps.size()); }
  Eigen::Index out_channels() const { return taps.empty() ? 0 : taps.front().rows(); }
  Eigen::Index in_channels() const { return taps.empty() ? 0 : taps.front().cols(); }
  Scalar& at(Eigen::Index co, Eigen::Index ci, int j) { return taps[j](co, ci); }
  Scalar at(Eigen::Index co, Eigen::Index ci, int j) const { return taps[j](co, ci); }
};

// Gradients of the parametrised primitives. Shapes mirror the forward operands.
template <typename Scalar>
struct ConvGrad {
  Matrix<Scalar> input;
  TemporalKernel<Scalar> weights;
  Vector<Scalar> bias;
};

template <typename Scalar>
struct AffineGrad {
  Matrix<Scalar> input;
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

/// Same-length dilated convolution with symmetric zero padding of
/// (k-1)/2 * dilation frames:
///   out[t, co] = bias[co] + sum_ci sum_j W[co, ci, j] * x[t + (j - (k-1)/2) * dilation, ci]
template <typename Scalar>
Matrix<Scalar> dilated_conv1d(const Matrix<Scalar>& input, const TemporalKernel<Scalar>& kernel,
                              const Vector<Scalar>& bias, int dilation);

/// Adds the bias-free convolution of `input` into `out` (T x Cout).
template <typename Scalar>
void accumulate_dilated_conv1d(Matrix<Scalar>& out, const Matrix<Scalar>& input,
                               const TemporalKernel<Scalar>& kernel, int dilation);

template <typename Scalar>
ConvGrad<Scalar> dilated_conv1d_backward(const Matrix<Scalar>& input,
                                         const TemporalKernel<Scalar>& kernel, int dilation,
                                         const Matrix<Scalar>& upstream);

/// Per-frame affine map out[t] = weights * input[t] + bias, weights Cout x Cin.
template <typename Scalar>
Matrix<Scalar> conv1x1(const Matrix<Scalar>& input, const Matrix<Scalar>& weights,
                       const Vector<Scalar>& bias);

template <typename Scalar>
AffineGrad<Scalar> conv1x1_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& weights,
                                    const Matrix<Scalar>& upstream);

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& input);

/// Gradient w.r.t. the ReLU input; `input` is the pre-activation.
template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& upstream);

/// Max-subtracted softmax over each row. Rejects non-finite logits.
template <typename Scalar>
ProbSequence<Scalar> softmax_rows(const Matrix<Scalar>& logits);

/// Vector-Jacobian product of the row softmax: returns dL/dlogits given
/// dL/dprobs.
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const ProbSequence<Scalar>& probs,
                                     const Matrix<Scalar>& upstream);

template <typename Scalar>
bool all_finite(const Matrix<Scalar>& m) {
  return m.allFinite();
}

}  // namespace phaseseg
