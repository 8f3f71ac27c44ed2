#include "phaseseg/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "phaseseg/parallel.hpp"

namespace phaseseg {

template <typename Scalar>
void adamw_step(std::span<const ParamBlock<Scalar>> params,
                std::span<const ParamBlock<const Scalar>> grads, AdamWState<Scalar>& state,
                double lr, double weight_decay, const AdamWHyper& hyper) {
  if (params.size() != grads.size()) {
    throw ShapeError("adamw_step: " + std::to_string(params.size()) + " parameter blocks but " +
                     std::to_string(grads.size()) + " gradient blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != grads[b].values.size()) {
      throw ShapeError("adamw_step: size mismatch in block " + params[b].name);
    }
    for (Scalar g : grads[b].values) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adamw_step: non-finite gradient in block " + params[b].name);
      }
    }
  }
  if (state.first_moment.size() != params.size()) {
    state.step = 0;
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.values.size(), Scalar(0));
      state.second_moment.emplace_back(p.values.size(), Scalar(0));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hyper.beta1, t);
  const double bias2 = 1.0 - std::pow(hyper.beta2, t);
  const double decay = 1.0 - lr * weight_decay;
  const auto b1 = static_cast<Scalar>(hyper.beta1);
  const auto b2 = static_cast<Scalar>(hyper.beta2);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    auto p = params[b].values;
    const auto g = grads[b].values;
    if (m.size() != p.size()) throw ShapeError("adamw_step: optimiser state shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / bias1;
      const double v_hat = static_cast<double>(v[i]) / bias2;
      const double updated =
          static_cast<double>(p[i]) * decay - lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
      p[i] = static_cast<Scalar>(updated);
    }
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0) return base_lr;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

std::vector<double> balanced_sequence_weights(std::span<const std::vector<int>> label_sets,
                                              int classes) {
  if (label_sets.empty()) throw ValidationError("balanced sampling: empty dataset");
  std::vector<double> counts(classes, 0.0);
  double total = 0.0;
  for (const auto& labels : label_sets) {
    for (int y : labels) {
      if (y == kIgnoreLabel) continue;
      if (y < 0 || y >= classes) throw ValidationError("label out of range: " + std::to_string(y));
      counts[y] += 1.0;
      total += 1.0;
    }
  }
  std::vector<double> weights;
  weights.reserve(label_sets.size());
  for (const auto& labels : label_sets) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y : labels) {
      if (y == kIgnoreLabel) continue;
      sum += total / counts[y];
      ++n;
    }
    weights.push_back(n == 0 ? 0.0 : sum / static_cast<double>(n));
  }
  double norm = 0.0;
  for (double w : weights) norm += w;
  if (!(norm > 0.0)) throw ValidationError("balanced sampling: no labelled frames");
  for (double& w : weights) w /= norm;
  return weights;
}

std::vector<std::size_t> sample_epoch(std::span<const std::vector<int>> label_sets, int classes,
                                      SamplingMode mode, std::uint64_t seed) {
  if (label_sets.empty()) throw ValidationError("sample_epoch: empty dataset");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(label_sets.size());
  if (mode == SamplingMode::kUniform) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }
  const auto weights = balanced_sequence_weights(label_sets, classes);
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  for (auto& idx : order) idx = dist(rng);
  return order;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be > 0");
  }
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (!(objective.lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("patience must be >= 1");
}

bool EarlyStopping::update(double value) {
  if (has_previous_ && value > previous_) {
    ++rises_;
  } else {
    rises_ = 0;
  }
  has_previous_ = true;
  previous_ = value;
  return rises_ >= patience_;
}

namespace {

// splitmix64 finaliser; decorrelates per-epoch sampling seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
void add_scaled(Model<Scalar>& acc, const Model<Scalar>& g, Scalar scale) {
  auto dst = parameter_blocks(acc);
  const auto src = parameter_blocks(g);
  for (std::size_t b = 0; b < dst.size(); ++b) {
    for (std::size_t i = 0; i < dst[b].values.size(); ++i) {
      dst[b].values[i] += scale * src[b].values[i];
    }
  }
}

template <typename Scalar>
std::size_t count_correct(const ProbSequence<Scalar>& probs, std::span<const int> labels,
                          std::size_t& counted) {
  std::size_t correct = 0;
  const auto& p = probs.data();
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    if (labels[t] == kIgnoreLabel) continue;
    Eigen::Index arg = 0;
    p.row(t).maxCoeff(&arg);
    ++counted;
    if (arg == labels[t]) ++correct;
  }
  return correct;
}

void accumulate_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
  if (acc.focal.empty()) {
    acc.focal.assign(b.focal.size(), 0.0);
    acc.smooth.assign(b.smooth.size(), 0.0);
  }
  for (std::size_t s = 0; s < b.focal.size(); ++s) {
    acc.focal[s] += b.focal[s];
    acc.smooth[s] += b.smooth[s];
  }
  acc.total += b.total;
}

void scale_breakdown(LossBreakdown& b, double k) {
  for (double& v : b.focal) v *= k;
  for (double& v : b.smooth) v *= k;
  b.total *= k;
}

}  // namespace

template <typename Scalar>
Evaluation<Scalar> evaluate(const Model<Scalar>& model,
                            std::span<const LabeledSequence<Scalar>> sequences,
                            const ObjectiveConfig& objective) {
  if (sequences.empty()) throw ValidationError("evaluate: empty sequence set");
  struct Slot {
    double loss = 0.0;
    std::size_t correct = 0;
    std::size_t counted = 0;
  };
  std::vector<Slot> slots(sequences.size());
  parallel_for(sequences.size(), [&](std::size_t i) {
    const auto& seq = sequences[i];
    const auto fwd = forward(model, seq.features, false);
    const auto tl = total_loss<Scalar>(fwd.probs, seq.labels, objective);
    slots[i].loss = tl.breakdown.total;
    slots[i].correct = count_correct(fwd.probs.back(), seq.labels, slots[i].counted);
  });
  Evaluation<Scalar> ev;
  std::size_t correct = 0;
  std::size_t counted = 0;
  for (const auto& s : slots) {
    ev.loss += s.loss;
    correct += s.correct;
    counted += s.counted;
  }
  ev.loss /= static_cast<double>(sequences.size());
  ev.accuracy = counted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(counted);
  return ev;
}

template <typename Scalar>
FitResult<Scalar> fit(Model<Scalar> model, std::span<const LabeledSequence<Scalar>> train,
                      std::span<const LabeledSequence<Scalar>> val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ValidationError("fit: empty training set");
  if (val.empty()) throw ValidationError("fit: empty validation set");
  const int classes = model.config.classes;

  std::vector<std::vector<int>> train_labels;
  train_labels.reserve(train.size());
  for (const auto& seq : train) train_labels.push_back(seq.labels);

  ObjectiveConfig objective = cfg.objective;
  if (cfg.alpha_mode == AlphaMode::kInverseFrequency) {
    objective.focal.alpha = inverse_frequency_alpha(train_labels, classes);
  }

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (train.size() + batch - 1) / batch;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch;

  FitResult<Scalar> result;
  auto& report = result.report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  result.best = model;
  EarlyStopping stopper(cfg.patience);
  std::uint64_t step = 0;
  const auto params = parameter_blocks(model);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    const auto order = sample_epoch(train_labels, classes, cfg.sampling, mix_seed(cfg.seed, epoch));
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(end - start));
        Model<Scalar> grad;
        for (std::size_t k = start; k < end; ++k) {
          const auto& seq = train[order[k]];
          const auto fwd = forward(model, seq.features, true);
          const auto tl = total_loss<Scalar>(fwd.probs, seq.labels, objective);
          if (!std::isfinite(tl.breakdown.total)) {
            throw NumericError("non-finite training loss on sequence " + seq.id);
          }
          accumulate_breakdown(record.train, tl.breakdown);
          auto g = backward<Scalar>(model, fwd, tl.logit_grads);
          if (end - start == 1) {
            grad = std::move(g);
          } else {
            if (grad.stages.empty()) grad = model.zeros_like();
            add_scaled(grad, g, scale);
          }
        }
        record.learning_rate = cosine_lr(step, total_steps, cfg.learning_rate);
        const auto gblocks = parameter_blocks(std::as_const(grad));
        adamw_step<Scalar>(params, gblocks, result.optimizer, record.learning_rate,
                           cfg.weight_decay);
        ++step;
      }
    } catch (const NumericError& e) {
      report.diverged = true;
      report.stop_epoch = epoch;
      report.message = e.what();
      break;
    }
    scale_breakdown(record.train, 1.0 / static_cast<double>(order.size()));

    Evaluation<Scalar> ev;
    try {
      ev = evaluate<Scalar>(model, val, objective);
    } catch (const NumericError&) {
      ev.loss = std::numeric_limits<double>::quiet_NaN();
    }
    record.val_loss = ev.loss;
    record.val_accuracy = ev.accuracy;
    report.epochs.push_back(record);
    report.stop_epoch = epoch;
    if (!std::isfinite(ev.loss)) {
      report.diverged = true;
      report.message = "non-finite validation loss at epoch " + std::to_string(epoch);
      break;
    }
    if (ev.loss < report.best_val_loss) {
      report.best_val_loss = ev.loss;
      report.best_epoch = epoch;
      result.best = model;
    }
    if (stopper.update(ev.loss)) {
      report.early_stopped = true;
      report.message = "validation loss rose for " + std::to_string(cfg.patience) +
                       " consecutive epochs";
      break;
    }
  }
  result.last = std::move(model);
  return result;
}

namespace {
constexpr std::array<char, 4> kAdamTag = {'A', 'D', 'A', 'M'};
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const Model<Scalar>& model,
                     const AdamWState<Scalar>& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_model(out, model);
  out.write(kAdamTag.data(), kAdamTag.size());
  detail::write_le<std::uint64_t>(out, state.step);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(state.first_moment.size()));
  for (std::size_t b = 0; b < state.first_moment.size(); ++b) {
    detail::write_le<std::uint64_t>(out, state.first_moment[b].size());
    for (Scalar v : state.first_moment[b]) detail::write_le<Scalar>(out, v);
    for (Scalar v : state.second_moment[b]) detail::write_le<Scalar>(out, v);
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Checkpoint<Scalar> ck;
  ck.model = read_model<Scalar>(in);
  std::array<char, 4> tag{};
  if (!in.read(tag.data(), tag.size()) || tag != kAdamTag) {
    throw FormatError("checkpoint lacks optimiser state");
  }
  ck.optimizer.step = detail::read_le<std::uint64_t>(in);
  const auto blocks = detail::read_le<std::uint32_t>(in);
  const auto expected = parameter_blocks(ck.model);
  if (blocks != 0 && blocks != expected.size()) {
    throw FormatError("checkpoint optimiser state has the wrong block count");
  }
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const auto n = detail::read_le<std::uint64_t>(in);
    if (n != expected[b].values.size()) throw FormatError("checkpoint block size mismatch");
    std::vector<Scalar> m(n);
    std::vector<Scalar> v(n);
    for (auto& x : m) x = detail::read_le<Scalar>(in);
    for (auto& x : v) x = detail::read_le<Scalar>(in);
    ck.optimizer.first_moment.push_back(std::move(m));
    ck.optimizer.second_moment.push_back(std::move(v));
  }
  return ck;
}

#define PHASESEG_INSTANTIATE(S)                                                                \
  template void adamw_step(std::span<const ParamBlock<S>>, std::span<const ParamBlock<const S>>, \
                           AdamWState<S>&, double, double, const AdamWHyper&);                \
  template Evaluation<S> evaluate(const Model<S>&, std::span<const LabeledSequence<S>>,        \
                                  const ObjectiveConfig&);                                     \
  template FitResult<S> fit(Model<S>, std::span<const LabeledSequence<S>>,                     \
                            std::span<const LabeledSequence<S>>, const TrainConfig&);          \
  template void save_checkpoint(const std::string&, const Model<S>&, const AdamWState<S>&);    \
  template Checkpoint<S> load_checkpoint<S>(const std::string&);

PHASESEG_INSTANTIATE(float)
PHASESEG_INSTANTIATE(double)

#undef PHASESEG_INSTANTIATE

}  // namespace phaseseg
