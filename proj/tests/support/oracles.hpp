#pragma once

// Direct, loop-level reference implementations used as test oracles. Nothing
// here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "phaseseg/seqcore.hpp"

namespace oracle {

using phaseseg::MatrixD;
using phaseseg::VectorD;

inline MatrixD random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                             double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline VectorD random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

/// ||a - n|| / (||a|| + ||n||); zero when both vanish.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline double relative_error(const MatrixD& a, const MatrixD& n) {
  return relative_error(std::span<const double>(a.data(), a.size()),
                        std::span<const double>(n.data(), n.size()));
}

/// Central differences of f over every entry of `values` (modified in place
/// and restored).
inline std::vector<double> numeric_gradient(std::span<double> values,
                                            const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline MatrixD numeric_gradient(MatrixD& x, const std::function<double()>& f, double h = 1e-5) {
  const auto g = numeric_gradient(std::span<double>(x.data(), x.size()), f, h);
  MatrixD out(x.rows(), x.cols());
  std::copy(g.begin(), g.end(), out.data());
  return out;
}

/// w[j](co, ci) convention: tap j sits at offset (j - (k-1)/2) * dilation.
inline MatrixD dilated_conv(const MatrixD& x, const std::vector<MatrixD>& w, const VectorD& b,
                            int dilation) {
  const auto T = x.rows();
  const auto cout = w.front().rows();
  const auto cin = w.front().cols();
  const int k = static_cast<int>(w.size());
  MatrixD out(T, cout);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index co = 0; co < cout; ++co) {
      double s = b[co];
      for (int j = 0; j < k; ++j) {
        const Eigen::Index src = t + (j - (k - 1) / 2) * dilation;
        if (src < 0 || src >= T) continue;
        for (Eigen::Index ci = 0; ci < cin; ++ci) s += w[j](co, ci) * x(src, ci);
      }
      out(t, co) = s;
    }
  }
  return out;
}

inline MatrixD softmax(const MatrixD& z) {
  MatrixD p(z.rows(), z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    double m = z(t, 0);
    for (Eigen::Index c = 1; c < z.cols(); ++c) m = std::max(m, z(t, c));
    double s = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) s += std::exp(z(t, c) - m);
    for (Eigen::Index c = 0; c < z.cols(); ++c) p(t, c) = std::exp(z(t, c) - m) / s;
  }
  return p;
}

inline double focal(const MatrixD& p, std::span<const int> y, double gamma,
                    const std::vector<double>& alpha) {
  double total = 0.0;
  int n = 0;
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    if (y[t] < 0) continue;
    const double py = std::max(p(t, y[t]), 1e-12);
    const double a = alpha.empty() ? 1.0 : alpha[y[t]];
    total += -a * std::pow(1.0 - py, gamma) * std::log(py);
    ++n;
  }
  return total / n;
}

inline double smoothing(const MatrixD& p) {
  double total = 0.0;
  for (Eigen::Index t = 1; t < p.rows(); ++t) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      total += std::abs(std::log(std::max(p(t, c), 1e-12)) -
                        std::log(std::max(p(t - 1, c), 1e-12)));
    }
  }
  return total / static_cast<double>(p.rows() * p.cols());
}

inline double ntxent(const MatrixD& z, std::span<const std::size_t> partner, double tau) {
  const auto n = z.rows();
  auto cosine = [&](Eigen::Index i, Eigen::Index j) {
    double dot = 0.0;
    double ni = 0.0;
    double nj = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      dot += z(i, k) * z(j, k);
      ni += z(i, k) * z(i, k);
      nj += z(j, k) * z(j, k);
    }
    return dot / std::sqrt(ni * nj);
  };
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double denom = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(cosine(i, k) / tau);
    }
    total += -std::log(std::exp(cosine(i, static_cast<Eigen::Index>(partner[i])) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

/// Per-class metrics recomputed from label pairs without a confusion matrix.
struct BruteMetrics {
  std::vector<double> precision, recall, f1;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0, accuracy = 0.0;
};

inline BruteMetrics brute_metrics(std::span<const int> gt, std::span<const int> pred, int classes) {
  BruteMetrics m;
  int counted = 0;
  int correct = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (gt[t] < 0) continue;
    ++counted;
    correct += gt[t] == pred[t];
  }
  m.accuracy = 100.0 * correct / counted;
  int in_macro = 0;
  for (int c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      if (gt[t] < 0) continue;
      if (gt[t] == c && pred[t] == c) ++tp;
      if (gt[t] != c && pred[t] == c) ++fp;
      if (gt[t] == c && pred[t] != c) ++fn;
    }
    const double p = tp + fp ? 100.0 * tp / (tp + fp) : 0.0;
    const double r = tp + fn ? 100.0 * tp / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    if (tp + fp + fn > 0) {
      m.macro_p += p;
      m.macro_r += r;
      m.macro_f1 += f;
      ++in_macro;
    }
  }
  m.macro_p /= in_macro;
  m.macro_r /= in_macro;
  m.macro_f1 /= in_macro;
  return m;
}

inline std::size_t runs(std::span<const int> x) {
  std::size_t n = x.empty() ? 0 : 1;
  for (std::size_t i = 1; i < x.size(); ++i) n += x[i] != x[i - 1];
  return n;
}

/// Random prediction stream biased toward a monotone walk with noise.
inline std::vector<int> noisy_stream(std::mt19937_64& rng, int classes, int length) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, classes - 1);
  std::vector<int> out;
  int phase = 0;
  for (int t = 0; t < length; ++t) {
    if (phase + 1 < classes && u(rng) < 3.0 / length * classes / 2.0) ++phase;
    out.push_back(u(rng) < 0.3 ? any(rng) : phase);
  }
  return out;
}

}  // namespace oracle
