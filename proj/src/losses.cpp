#include "phaseseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace phaseseg {

void FocalConfig::validate(Eigen::Index classes) const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("focal gamma must be finite and >= 0");
  }
  if (!alpha.empty()) {
    if (static_cast<Eigen::Index>(alpha.size()) != classes) {
      throw ShapeError("focal alpha has " + std::to_string(alpha.size()) + " entries for " +
                       std::to_string(classes) + " classes");
    }
    for (double a : alpha) {
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("focal alpha entries must lie in [0,1]");
    }
  }
}

std::vector<double> inverse_frequency_alpha(std::span<const std::vector<int>> label_sets,
                                            int classes) {
  std::vector<double> counts(classes, 0.0);
  for (const auto& labels : label_sets) {
    for (int y : labels) {
      if (y == kIgnoreLabel) continue;
      if (y < 0 || y >= classes) throw ValidationError("label out of range: " + std::to_string(y));
      counts[y] += 1.0;
    }
  }
  double min_count = std::numeric_limits<double>::infinity();
  for (double c : counts) {
    if (c > 0.0) min_count = std::min(min_count, c);
  }
  std::vector<double> alpha(classes, 1.0);
  for (int c = 0; c < classes; ++c) {
    if (counts[c] > 0.0) alpha[c] = min_count / counts[c];
  }
  return alpha;
}

ContrastiveConfig ContrastiveConfig::adjacent_pairs(std::size_t rows, double tau) {
  ContrastiveConfig cfg;
  cfg.tau = tau;
  cfg.partner.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) cfg.partner[i] = i ^ 1u;
  return cfg;
}

ContrastiveConfig ContrastiveConfig::split_halves(std::size_t rows, double tau) {
  ContrastiveConfig cfg;
  cfg.tau = tau;
  cfg.partner.resize(rows);
  const std::size_t n = rows / 2;
  for (std::size_t i = 0; i < rows; ++i) cfg.partner[i] = i < n ? i + n : i - n;
  return cfg;
}

void ContrastiveConfig::validate(std::size_t rows) const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("temperature must be > 0");
  if (rows < 2 || rows % 2 != 0) {
    throw ShapeError("contrastive batch needs 2N rows with N >= 1, got " + std::to_string(rows));
  }
  if (partner.size() != rows) throw ShapeError("pairing size does not match the batch");
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = partner[i];
    if (j >= rows || j == i || partner[j] != i) {
      throw ValidationError("pairing must be an involution without fixed points (index " +
                            std::to_string(i) + ")");
    }
  }
}

FocalConfig ObjectiveConfig::effective_focal() const {
  return loss == ClassificationLoss::kCrossEntropy ? FocalConfig::cross_entropy() : focal;
}

template <typename Scalar>
LossValue<Scalar> focal_loss(const ProbSequence<Scalar>& probs, std::span<const int> labels,
                             const FocalConfig& cfg) {
  const auto& p = probs.data();
  const Eigen::Index frames = p.rows();
  const Eigen::Index classes = p.cols();
  if (static_cast<Eigen::Index>(labels.size()) != frames) {
    throw ShapeError("focal_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(frames) + " frames");
  }
  cfg.validate(classes);

  std::size_t counted = 0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int y = labels[t];
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= classes) {
      throw ValidationError("focal_loss: label " + std::to_string(y) + " at frame " +
                            std::to_string(t) + " outside [0," + std::to_string(classes) + ")");
    }
    ++counted;
  }
  if (counted == 0) throw ValidationError("focal_loss: no counted frames");

  const double inv_n = 1.0 / static_cast<double>(counted);
  const double gamma = cfg.gamma;
  LossValue<Scalar> out;
  out.grad = Matrix<Scalar>::Zero(frames, classes);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int y = labels[t];
    if (y == kIgnoreLabel) continue;
    const double alpha = cfg.alpha.empty() ? 1.0 : cfg.alpha[y];
    const double py = static_cast<double>(p(t, y));
    const double log_p = std::log(std::max(py, kProbFloor));
    const double one_minus = std::max(0.0, 1.0 - py);
    const double modulator = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
    sum += -alpha * modulator * log_p;

    // dL/dz_c = alpha [ (1-p)^g - g p (1-p)^(g-1) log p ] (p_c - [c == y])
    double focus_term = 0.0;
    if (gamma != 0.0 && one_minus > 0.0) {
      focus_term = gamma * py * std::pow(one_minus, gamma - 1.0) * log_p;
    }
    const double scale = alpha * (modulator - focus_term) * inv_n;
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double indicator = c == y ? 1.0 : 0.0;
      out.grad(t, c) = static_cast<Scalar>(scale * (static_cast<double>(p(t, c)) - indicator));
    }
  }
  out.value = sum * inv_n;
  return out;
}

template <typename Scalar>
LossValue<Scalar> ntxent_loss(const Matrix<Scalar>& embeddings, const ContrastiveConfig& cfg) {
  const auto rows = static_cast<std::size_t>(embeddings.rows());
  cfg.validate(rows);
  const MatrixD z = embeddings.template cast<double>();
  const VectorD norms = z.rowwise().norm();
  for (std::size_t i = 0; i < rows; ++i) {
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw ValidationError("ntxent_loss: embedding " + std::to_string(i) +
                            " has zero or non-finite norm");
    }
  }
  const MatrixD u = norms.cwiseInverse().asDiagonal() * z;
  const MatrixD sim = (u * u.transpose()) / cfg.tau;

  const auto m = static_cast<Eigen::Index>(rows);
  const double inv_m = 1.0 / static_cast<double>(m);
  MatrixD g = MatrixD::Zero(m, m);  // dL/dsim
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != i) mx = std::max(mx, sim(i, k));
    }
    double denom = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != i) denom += std::exp(sim(i, k) - mx);
    }
    const auto j = static_cast<Eigen::Index>(cfg.partner[i]);
    sum += -(sim(i, j) - mx) + std::log(denom);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k == i) continue;
      g(i, k) = std::exp(sim(i, k) - mx) / denom * inv_m;
    }
    g(i, j) -= inv_m;
  }

  const MatrixD du = (g + g.transpose()) * u / cfg.tau;
  MatrixD dz(m, z.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double radial = du.row(i).dot(u.row(i));
    dz.row(i) = (du.row(i) - radial * u.row(i)) / norms[i];
  }
  LossValue<Scalar> out;
  out.value = sum * inv_m;
  out.grad = dz.cast<Scalar>();
  return out;
}

template <typename Scalar>
LossValue<Scalar> smoothing_loss(const ProbSequence<Scalar>& probs, const SmoothingConfig& cfg) {
  const auto& p = probs.data();
  const Eigen::Index frames = p.rows();
  const Eigen::Index classes = p.cols();
  LossValue<Scalar> out;
  out.grad = Matrix<Scalar>::Zero(frames, classes);
  if (frames < 2) return out;
  if (cfg.clamp && !(*cfg.clamp > 0.0)) throw ValidationError("smoothing clamp must be > 0");

  MatrixD log_p(frames, classes);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> live(frames, classes);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double v = static_cast<double>(p(t, c));
      live(t, c) = v >= kProbFloor;
      log_p(t, c) = std::log(std::max(v, kProbFloor));
    }
  }

  const double k = 1.0 / static_cast<double>(frames * classes);
  MatrixD g = MatrixD::Zero(frames, classes);  // dL/dlog p
  double sum = 0.0;
  for (Eigen::Index t = 1; t < frames; ++t) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double diff = log_p(t, c) - log_p(t - 1, c);
      const double mag = std::abs(diff);
      if (cfg.clamp && mag >= *cfg.clamp) {
        sum += *cfg.clamp;
        continue;
      }
      sum += mag;
      const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      g(t, c) += k * s;
      g(t - 1, c) -= k * s;
    }
  }
  out.value = sum * k;

  // d log p_tc / d z_tk = [c == k] - p_tk on unfloored entries.
  for (Eigen::Index t = 0; t < frames; ++t) {
    double masked = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!live(t, c)) g(t, c) = 0.0;
      masked += g(t, c);
    }
    for (Eigen::Index c = 0; c < classes; ++c) {
      out.grad(t, c) = static_cast<Scalar>(g(t, c) - static_cast<double>(p(t, c)) * masked);
    }
  }
  return out;
}

template <typename Scalar>
TotalLoss<Scalar> total_loss(std::span<const ProbSequence<Scalar>> stage_probs,
                             std::span<const int> labels, const ObjectiveConfig& cfg) {
  if (stage_probs.empty()) throw ShapeError("total_loss: no stages");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ValidationError("total_loss: lambda must be finite and >= 0");
  }
  const Eigen::Index frames = stage_probs.front().frames();
  const Eigen::Index classes = stage_probs.front().classes();
  for (std::size_t s = 1; s < stage_probs.size(); ++s) {
    if (stage_probs[s].frames() != frames || stage_probs[s].classes() != classes) {
      throw ShapeError("total_loss: stage " + std::to_string(s) + " shape differs from stage 0");
    }
  }
  const FocalConfig focal_cfg = cfg.effective_focal();
  TotalLoss<Scalar> out;
  for (const auto& probs : stage_probs) {
    auto focal = focal_loss(probs, labels, focal_cfg);
    auto smooth = smoothing_loss(probs, cfg.smoothing);
    out.breakdown.focal.push_back(focal.value);
    out.breakdown.smooth.push_back(smooth.value);
    out.breakdown.total += focal.value + cfg.lambda * smooth.value;
    if (cfg.lambda != 0.0) focal.grad += static_cast<Scalar>(cfg.lambda) * smooth.grad;
    out.logit_grads.push_back(std::move(focal.grad));
  }
  return out;
}

#define PHASESEG_INSTANTIATE(S)                                                                 \
  template LossValue<S> focal_loss(const ProbSequence<S>&, std::span<const int>,                \
                                   const FocalConfig&);                                         \
  template LossValue<S> ntxent_loss(const Matrix<S>&, const ContrastiveConfig&);                \
  template LossValue<S> smoothing_loss(const ProbSequence<S>&, const SmoothingConfig&);         \
  template TotalLoss<S> total_loss(std::span<const ProbSequence<S>>, std::span<const int>,      \
                                   const ObjectiveConfig&);

PHASESEG_INSTANTIATE(float)
PHASESEG_INSTANTIATE(double)

#undef PHASESEG_INSTANTIATE

}  // namespace phaseseg
