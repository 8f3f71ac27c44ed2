#include "phaseseg/seqcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace phaseseg {

namespace {

template <typename Scalar>
Scalar row_sum_tolerance() {
  return std::is_same_v<Scalar, float> ? Scalar(1e-5) : Scalar(1e-6);
}

std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void check_kernel(int size, int dilation) {
  if (size < 1 || size % 2 == 0) {
    throw ShapeError("kernel size must be odd, got " + std::to_string(size));
  }
  if (dilation < 1) {
    throw ShapeError("dilation must be >= 1, got " + std::to_string(dilation));
  }
}

// Frame range [lo, hi) of the output whose tap at `offset` lands inside the input.
struct TapRange {
  Eigen::Index lo;
  Eigen::Index hi;
};

TapRange tap_range(Eigen::Index frames, Eigen::Index offset) {
  const Eigen::Index lo = std::max<Eigen::Index>(0, -offset);
  const Eigen::Index hi = std::min<Eigen::Index>(frames, frames - offset);
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename Scalar>
FeatureSequence<Scalar>::FeatureSequence(Matrix<Scalar> data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw ShapeError("feature sequence must have T >= 1 and d >= 1, got " +
                     shape_str(data_.rows(), data_.cols()));
  }
  if (!data_.allFinite()) {
    throw NumericError("feature sequence contains non-finite values");
  }
}

template <typename Scalar>
ProbSequence<Scalar> ProbSequence<Scalar>::from_probabilities(Matrix<Scalar> probs) {
  if (probs.rows() < 1 || probs.cols() < 1) {
    throw ShapeError("probability sequence must be non-empty");
  }
  const Scalar tol = row_sum_tolerance<Scalar>();
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    const auto row = probs.row(t);
    if (!row.allFinite() || row.minCoeff() < Scalar(0) || row.maxCoeff() > Scalar(1)) {
      throw ValidationError("probability row " + std::to_string(t) + " has entries outside [0,1]");
    }
    if (std::abs(row.sum() - Scalar(1)) > tol) {
      throw ValidationError("probability row " + std::to_string(t) + " does not sum to 1");
    }
  }
  return ProbSequence(std::move(probs));
}

template <typename Scalar>
TemporalKernel<Scalar> TemporalKernel<Scalar>::zeros(Eigen::Index out_channels,
                                                     Eigen::Index in_channels, int size) {
  TemporalKernel k;
  k.taps.assign(size, Matrix<Scalar>::Zero(out_channels, in_channels));
  return k;
}

template <typename Scalar>
void accumulate_dilated_conv1d(Matrix<Scalar>& out, const Matrix<Scalar>& input,
                               const TemporalKernel<Scalar>& kernel, int dilation) {
  check_kernel(kernel.size(), dilation);
  if (input.cols() != kernel.in_channels()) {
    throw ShapeError("dilated_conv1d: input has " + std::to_string(input.cols()) +
                     " channels, kernel expects " + std::to_string(kernel.in_channels()));
  }
  if (out.rows() != input.rows() || out.cols() != kernel.out_channels()) {
    throw ShapeError("dilated_conv1d: output buffer is " + shape_str(out.rows(), out.cols()));
  }
  const Eigen::Index frames = input.rows();
  const int half = (kernel.size() - 1) / 2;
  for (int j = 0; j < kernel.size(); ++j) {
    const Eigen::Index offset = static_cast<Eigen::Index>(j - half) * dilation;
    const auto [lo, hi] = tap_range(frames, offset);
    if (hi <= lo) continue;
    out.middleRows(lo, hi - lo).noalias() +=
        input.middleRows(lo + offset, hi - lo) * kernel.taps[j].transpose();
  }
}

template <typename Scalar>
Matrix<Scalar> dilated_conv1d(const Matrix<Scalar>& input, const TemporalKernel<Scalar>& kernel,
                              const Vector<Scalar>& bias, int dilation) {
  if (bias.size() != kernel.out_channels()) {
    throw ShapeError("dilated_conv1d: bias length " + std::to_string(bias.size()) +
                     " != Cout " + std::to_string(kernel.out_channels()));
  }
  Matrix<Scalar> out = bias.transpose().replicate(input.rows(), 1);
  accumulate_dilated_conv1d(out, input, kernel, dilation);
  return out;
}

template <typename Scalar>
ConvGrad<Scalar> dilated_conv1d_backward(const Matrix<Scalar>& input,
                                         const TemporalKernel<Scalar>& kernel, int dilation,
                                         const Matrix<Scalar>& upstream) {
  check_kernel(kernel.size(), dilation);
  if (input.cols() != kernel.in_channels() || upstream.rows() != input.rows() ||
      upstream.cols() != kernel.out_channels()) {
    throw ShapeError("dilated_conv1d_backward: shape mismatch");
  }
  const Eigen::Index frames = input.rows();
  const int half = (kernel.size() - 1) / 2;
  ConvGrad<Scalar> g;
  g.input = Matrix<Scalar>::Zero(frames, input.cols());
  g.weights = TemporalKernel<Scalar>::zeros(kernel.out_channels(), kernel.in_channels(),
                                            kernel.size());
  g.bias = upstream.colwise().sum().transpose();
  for (int j = 0; j < kernel.size(); ++j) {
    const Eigen::Index offset = static_cast<Eigen::Index>(j - half) * dilation;
    const auto [lo, hi] = tap_range(frames, offset);
    if (hi <= lo) continue;
    const auto up = upstream.middleRows(lo, hi - lo);
    const auto in = input.middleRows(lo + offset, hi - lo);
    g.weights.taps[j].noalias() = up.transpose() * in;
    g.input.middleRows(lo + offset, hi - lo).noalias() += up * kernel.taps[j];
  }
  return g;
}

template <typename Scalar>
Matrix<Scalar> conv1x1(const Matrix<Scalar>& input, const Matrix<Scalar>& weights,
                       const Vector<Scalar>& bias) {
  if (input.cols() != weights.cols() || bias.size() != weights.rows()) {
    throw ShapeError("conv1x1: input " + shape_str(input.rows(), input.cols()) + ", weights " +
                     shape_str(weights.rows(), weights.cols()) + ", bias " +
                     std::to_string(bias.size()));
  }
  Matrix<Scalar> out = bias.transpose().replicate(input.rows(), 1);
  out.noalias() += input * weights.transpose();
  return out;
}

template <typename Scalar>
AffineGrad<Scalar> conv1x1_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& weights,
                                    const Matrix<Scalar>& upstream) {
  if (input.cols() != weights.cols() || upstream.cols() != weights.rows() ||
      upstream.rows() != input.rows()) {
    throw ShapeError("conv1x1_backward: shape mismatch");
  }
  AffineGrad<Scalar> g;
  g.input.noalias() = upstream * weights;
  g.weights.noalias() = upstream.transpose() * input;
  g.bias = upstream.colwise().sum().transpose();
  return g;
}

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& input) {
  return input.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& upstream) {
  if (input.rows() != upstream.rows() || input.cols() != upstream.cols()) {
    throw ShapeError("relu_backward: shape mismatch");
  }
  return (input.array() > Scalar(0)).select(upstream, Scalar(0));
}

template <typename Scalar>
ProbSequence<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  if (logits.rows() < 1 || logits.cols() < 1) {
    throw ShapeError("softmax_rows: empty logits");
  }
  if (!logits.allFinite()) {
    throw NumericError("softmax_rows: non-finite logits");
  }
  Matrix<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const Scalar m = logits.row(t).maxCoeff();
    p.row(t) = (logits.row(t).array() - m).exp();
    p.row(t) /= p.row(t).sum();
  }
  return ProbSequence<Scalar>(std::move(p));
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const ProbSequence<Scalar>& probs,
                                     const Matrix<Scalar>& upstream) {
  const auto& p = probs.data();
  if (p.rows() != upstream.rows() || p.cols() != upstream.cols()) {
    throw ShapeError("softmax_rows_backward: shape mismatch");
  }
  const Vector<Scalar> dot = (p.array() * upstream.array()).rowwise().sum();
  return (p.array() * (upstream.colwise() - dot).array()).matrix();
}

#define PHASESEG_INSTANTIATE(S)                                                                   \
  template class FeatureSequence<S>;                                                              \
  template class ProbSequence<S>;                                                                 \
  template struct TemporalKernel<S>;                                                              \
  template Matrix<S> dilated_conv1d(const Matrix<S>&, const TemporalKernel<S>&, const Vector<S>&, \
                                    int);                                                         \
  template void accumulate_dilated_conv1d(Matrix<S>&, const Matrix<S>&, const TemporalKernel<S>&, \
                                          int);                                                   \
  template ConvGrad<S> dilated_conv1d_backward(const Matrix<S>&, const TemporalKernel<S>&, int,   \
                                               const Matrix<S>&);                                 \
  template Matrix<S> conv1x1(const Matrix<S>&, const Matrix<S>&, const Vector<S>&);               \
  template AffineGrad<S> conv1x1_backward(const Matrix<S>&, const Matrix<S>&, const Matrix<S>&);  \
  template Matrix<S> relu(const Matrix<S>&);                                                      \
  template Matrix<S> relu_backward(const Matrix<S>&, const Matrix<S>&);                           \
  template ProbSequence<S> softmax_rows(const Matrix<S>&);                                        \
  template Matrix<S> softmax_rows_backward(const ProbSequence<S>&, const Matrix<S>&);

PHASESEG_INSTANTIATE(float)
PHASESEG_INSTANTIATE(double)

#undef PHASESEG_INSTANTIATE

}  // namespace phaseseg
