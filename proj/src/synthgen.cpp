#include "phaseseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace phaseseg {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SynthConfig four_phase(std::vector<PhaseDuration> durations) {
  SynthConfig cfg;
  cfg.durations = std::move(durations);
  cfg.center_scale.assign(cfg.durations.size(), 1.0);
  cfg.confusability.assign(cfg.durations.size(), std::vector<double>(cfg.durations.size(), 0.0));
  return cfg;
}

}  // namespace

void SynthConfig::validate() const {
  const auto c = durations.size();
  if (dim < 1) throw ValidationError("synthetic dim must be >= 1");
  if (c < 2) throw ValidationError("synthetic profile needs at least two phases");
  for (const auto& d : durations) {
    if (!(d.mean_frames > 0.0) || !(d.log_sigma >= 0.0)) {
      throw ValidationError("phase durations must be positive");
    }
  }
  if (center_scale.size() != c) throw ShapeError("center_scale needs one entry per phase");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
  if (confusability.size() != c) throw ShapeError("confusability must be C x C");
  for (std::size_t a = 0; a < c; ++a) {
    if (confusability[a].size() != c) throw ShapeError("confusability must be C x C");
    for (std::size_t b = 0; b < c; ++b) {
      const double k = confusability[a][b];
      if (!(k >= 0.0 && k < 1.0)) throw ValidationError("confusability entries must be in [0,1)");
      if (k != confusability[b][a]) throw ValidationError("confusability must be symmetric");
    }
  }
  if (!(label_noise_rate >= 0.0 && label_noise_rate < 1.0)) {
    throw ValidationError("label noise rate must be in [0,1)");
  }
  if (boundary_blur < 0) throw ValidationError("boundary blur must be >= 0");
  if (!(incomplete_rate >= 0.0 && incomplete_rate <= 1.0)) {
    throw ValidationError("incomplete rate must be in [0,1]");
  }
}

SynthConfig SynthConfig::default_profile() {
  SynthConfig cfg = four_phase({{16.0, 0.25}, {14.0, 0.25}, {32.0, 0.25}, {6.0, 0.25}});
  cfg.noise_sigma = 2.0;
  return cfg;
}

SynthConfig SynthConfig::imbalanced_profile() {
  SynthConfig cfg = four_phase({{16.0, 0.25}, {14.0, 0.25}, {50.0, 0.25}, {5.0, 0.25}});
  cfg.noise_sigma = 2.0;
  cfg.confusability[2][3] = cfg.confusability[3][2] = 0.8;
  return cfg;
}

SynthConfig SynthConfig::noisy_profile() {
  SynthConfig cfg = four_phase({{24.0, 0.25}, {20.0, 0.25}, {40.0, 0.25}, {12.0, 0.25}});
  cfg.noise_sigma = 4.0;
  cfg.label_noise_rate = 0.15;
  return cfg;
}

std::vector<VectorD> phase_centers(const SynthConfig& cfg) {
  cfg.validate();
  const int c = cfg.classes();
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xC3u));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorD> base(c, VectorD(cfg.dim));
  for (int p = 0; p < c; ++p) {
    for (int k = 0; k < cfg.dim; ++k) base[p][k] = normal(rng) * cfg.center_scale[p];
  }
  std::vector<VectorD> centers = base;
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      if (a != b) centers[a] += 0.5 * cfg.confusability[a][b] * (base[b] - base[a]);
    }
  }
  return centers;
}

namespace {

SyntheticSequence generate_one(const SynthConfig& cfg, const std::vector<VectorD>& centers,
                               std::uint64_t index) {
  std::mt19937_64 rng(mix_seed(cfg.seed, index + 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int c = cfg.classes();

  int first = 0;
  int last = c - 1;
  if (!cfg.include_all_phases) {
    if (unit(rng) < cfg.incomplete_rate) {
      first = std::uniform_int_distribution<int>(0, c - 1)(rng);
      last = std::uniform_int_distribution<int>(first, c - 1)(rng);
    }
  }

  std::vector<int> lengths;
  for (int p = first; p <= last; ++p) {
    const auto& d = cfg.durations[p];
    const double mu = std::log(d.mean_frames) - 0.5 * d.log_sigma * d.log_sigma;
    std::lognormal_distribution<double> dist(mu, d.log_sigma);
    lengths.push_back(std::max(1, static_cast<int>(std::lround(dist(rng)))));
  }

  SyntheticSequence seq;
  for (int p = first; p <= last; ++p) {
    seq.labels.insert(seq.labels.end(), lengths[p - first], p);
  }
  const auto frames = static_cast<Eigen::Index>(seq.labels.size());
  seq.features.resize(frames, cfg.dim);

  // Boundary frames: index of the first frame of each phase after the first.
  std::vector<Eigen::Index> starts;
  for (Eigen::Index t = 1; t < frames; ++t) {
    if (seq.labels[t] != seq.labels[t - 1]) starts.push_back(t);
  }

  for (Eigen::Index t = 0; t < frames; ++t) {
    const int p = seq.labels[t];
    VectorD mean = centers[p];
    if (cfg.boundary_blur > 0) {
      for (Eigen::Index s : starts) {
        // distance in frames from the boundary between s-1 and s
        const double dist = t < s ? static_cast<double>(s - t) - 0.5 : static_cast<double>(t - s) + 0.5;
        if (dist >= cfg.boundary_blur) continue;
        const int other = t < s ? seq.labels[s] : seq.labels[s - 1];
        const double w = 0.5 * (1.0 - dist / cfg.boundary_blur);
        mean = (1.0 - w) * mean + w * centers[other];
      }
    }
    if (cfg.label_noise_rate > 0.0 && unit(rng) < cfg.label_noise_rate) {
      int other = p;
      if (p == 0) {
        other = 1;
      } else if (p == c - 1) {
        other = c - 2;
      } else {
        other = unit(rng) < 0.5 ? p - 1 : p + 1;
      }
      mean = centers[other];
    }
    for (int k = 0; k < cfg.dim; ++k) {
      seq.features(t, k) = mean[k] + cfg.noise_sigma * noise(rng);
    }
  }
  return seq;
}

}  // namespace

std::vector<SyntheticSequence> generate(const SynthConfig& cfg, std::size_t n) {
  const auto centers = phase_centers(cfg);
  std::vector<SyntheticSequence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(cfg, centers, i));
  return out;
}

SyntheticSplits generate_splits(const SynthConfig& cfg, std::size_t train, std::size_t val,
                                std::size_t test) {
  auto all = generate(cfg, train + val + test);
  SyntheticSplits s;
  auto it = std::make_move_iterator(all.begin());
  s.train.assign(it, it + train);
  s.val.assign(it + train, it + train + val);
  s.test.assign(it + train + val, it + train + val + test);
  return s;
}

}  // namespace phaseseg
