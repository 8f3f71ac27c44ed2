#include "phaseseg/mstcn.hpp"

#include <cmath>
#include <random>
#include <string>

namespace phaseseg {

void StageConfig::validate() const {
  if (input_dim < 1) throw ValidationError("input_dim must be >= 1");
  if (channels < 1) throw ValidationError("channels must be >= 1");
  if (classes < 2) throw ValidationError("classes must be >= 2");
  if (stages < 1) throw ValidationError("stages must be >= 1");
  if (layers < 1 || refinement_layers < 1) throw ValidationError("layers must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ValidationError("kernel_size must be odd");
  if (layers > 30 || refinement_layers > 30) throw ValidationError("layers must be <= 30");
  if (fusion != Fusion::kSum && fusion != Fusion::kConcat) {
    throw ValidationError("unknown fusion mode");
  }
}

namespace {

template <typename Scalar>
Affine<Scalar> zero_affine(Eigen::Index out, Eigen::Index in) {
  return {Matrix<Scalar>::Zero(out, in), Vector<Scalar>::Zero(out)};
}

template <typename Scalar>
DilatedBranch<Scalar> zero_branch(Eigen::Index channels, int k, int dilation) {
  return {TemporalKernel<Scalar>::zeros(channels, channels, k), Vector<Scalar>::Zero(channels),
          dilation};
}

template <typename Scalar>
std::span<Scalar> span_of(Matrix<Scalar>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename Scalar>
std::span<Scalar> span_of(Vector<Scalar>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Walks every block in serialisation order. `fn(name, span, fan_in)` gets
// fan_in == 0 for biases.
template <typename ModelT, typename Fn>
void visit_blocks(ModelT& model, Fn&& fn) {
  const auto& cfg = model.config;
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    auto& stage = model.stages[s];
    const std::string prefix = "stage" + std::to_string(s);
    fn(prefix + ".input.weight", stage.input.weight, stage.input.weight.cols());
    fn(prefix + ".input.bias", stage.input.bias, 0);
    for (std::size_t l = 0; l < stage.layers.size(); ++l) {
      auto& layer = stage.layers[l];
      const std::string lp = prefix + ".layer" + std::to_string(l);
      for (auto* branch : {&layer.low, &layer.high}) {
        const std::string bp = lp + (branch == &layer.low ? ".low" : ".high");
        for (int j = 0; j < branch->kernel.size(); ++j) {
          fn(bp + ".tap" + std::to_string(j), branch->kernel.taps[j],
             branch->kernel.in_channels() * cfg.kernel_size);
        }
        fn(bp + ".bias", branch->bias, 0);
      }
      fn(lp + ".fuse.weight", layer.fuse.weight, layer.fuse.weight.cols());
      fn(lp + ".fuse.bias", layer.fuse.bias, 0);
    }
    fn(prefix + ".head.weight", stage.head.weight, stage.head.weight.cols());
    fn(prefix + ".head.bias", stage.head.bias, 0);
  }
}

}  // namespace

template <typename Scalar>
Model<Scalar> zero_model(const StageConfig& cfg) {
  cfg.validate();
  Model<Scalar> model;
  model.config = cfg;
  const Eigen::Index f = cfg.channels;
  const Eigen::Index fuse_in = cfg.fusion == Fusion::kConcat ? 2 * f : f;
  for (int s = 0; s < cfg.stages; ++s) {
    Stage<Scalar> stage;
    stage.input = zero_affine<Scalar>(f, s == 0 ? cfg.input_dim : cfg.classes);
    const int n_layers = cfg.layers_in_stage(s);
    for (int l = 0; l < n_layers; ++l) {
      DualDilatedLayer<Scalar> layer;
      layer.low = zero_branch<Scalar>(f, cfg.kernel_size, 1 << l);
      layer.high = zero_branch<Scalar>(f, cfg.kernel_size, 1 << (n_layers - 1 - l));
      layer.fuse = zero_affine<Scalar>(f, fuse_in);
      stage.layers.push_back(std::move(layer));
    }
    stage.head = zero_affine<Scalar>(cfg.classes, f);
    model.stages.push_back(std::move(stage));
  }
  return model;
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::zeros_like() const {
  return zero_model<Scalar>(config);
}

template <typename Scalar>
std::size_t Model<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : parameter_blocks(*this)) n += b.values.size();
  return n;
}

template <typename Scalar>
std::vector<ParamBlock<Scalar>> parameter_blocks(Model<Scalar>& model) {
  std::vector<ParamBlock<Scalar>> blocks;
  visit_blocks(model, [&](std::string name, auto& m, Eigen::Index) {
    blocks.push_back({std::move(name), span_of<Scalar>(m)});
  });
  return blocks;
}

template <typename Scalar>
std::vector<ParamBlock<const Scalar>> parameter_blocks(const Model<Scalar>& model) {
  auto blocks = parameter_blocks(const_cast<Model<Scalar>&>(model));
  std::vector<ParamBlock<const Scalar>> out;
  out.reserve(blocks.size());
  for (auto& b : blocks) out.push_back({std::move(b.name), b.values});
  return out;
}

template <typename To, typename From>
Model<To> model_cast(const Model<From>& model) {
  Model<To> out = zero_model<To>(model.config);
  auto src = parameter_blocks(model);
  auto dst = parameter_blocks(out);
  for (std::size_t b = 0; b < src.size(); ++b) {
    for (std::size_t i = 0; i < src[b].values.size(); ++i) {
      dst[b].values[i] = static_cast<To>(src[b].values[i]);
    }
  }
  return out;
}

template <typename Scalar>
Model<Scalar> init_model(const StageConfig& cfg, std::uint64_t seed) {
  Model<Scalar> model = zero_model<Scalar>(cfg);
  std::mt19937_64 rng(seed);
  visit_blocks(model, [&](const std::string&, auto& m, Eigen::Index fan_in) {
    if (fan_in == 0) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  });
  return model;
}

template <typename Scalar>
ForwardResult<Scalar> forward(const Model<Scalar>& model, const FeatureSequence<Scalar>& x,
                              bool keep_cache) {
  const auto& cfg = model.config;
  if (x.channels() != cfg.input_dim) {
    throw ShapeError("forward: features have " + std::to_string(x.channels()) +
                     " channels, model expects " + std::to_string(cfg.input_dim));
  }
  const Eigen::Index frames = x.frames();
  const Eigen::Index f = cfg.channels;
  ForwardResult<Scalar> result;
  const Matrix<Scalar>* stage_input = &x.data();
  for (const auto& stage : model.stages) {
    StageCache<Scalar> cache;
    if (keep_cache) cache.input = *stage_input;
    Matrix<Scalar> h = conv1x1(*stage_input, stage.input.weight, stage.input.bias);
    for (const auto& layer : stage.layers) {
      Matrix<Scalar> z;
      if (cfg.fusion == Fusion::kSum) {
        z = (layer.low.bias + layer.high.bias).transpose().replicate(frames, 1);
        accumulate_dilated_conv1d(z, h, layer.low.kernel, layer.low.dilation);
        accumulate_dilated_conv1d(z, h, layer.high.kernel, layer.high.dilation);
      } else {
        z.resize(frames, 2 * f);
        z.leftCols(f) = dilated_conv1d(h, layer.low.kernel, layer.low.bias, layer.low.dilation);
        z.rightCols(f) =
            dilated_conv1d(h, layer.high.kernel, layer.high.bias, layer.high.dilation);
      }
      Matrix<Scalar> a = relu(z);
      Matrix<Scalar> next = h + conv1x1(a, layer.fuse.weight, layer.fuse.bias);
      if (keep_cache) {
        cache.layers.push_back({std::move(h), std::move(z), std::move(a)});
      }
      h = std::move(next);
    }
    result.probs.push_back(softmax_rows(conv1x1(h, stage.head.weight, stage.head.bias)));
    if (keep_cache) {
      cache.hidden = std::move(h);
      result.caches.push_back(std::move(cache));
    }
    stage_input = &result.probs.back().data();
  }
  return result;
}

template <typename Scalar>
ProbSequence<Scalar> predict(const Model<Scalar>& model, const FeatureSequence<Scalar>& x) {
  auto result = forward(model, x, false);
  return std::move(result.probs.back());
}

template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const ForwardResult<Scalar>& fwd,
                       std::span<const Matrix<Scalar>> logit_grads) {
  const auto n_stages = model.stages.size();
  if (fwd.caches.size() != n_stages || fwd.probs.size() != n_stages) {
    throw ValidationError("backward: forward caches missing (run forward with keep_cache)");
  }
  if (logit_grads.size() != n_stages) {
    throw ShapeError("backward: expected " + std::to_string(n_stages) + " logit gradients, got " +
                     std::to_string(logit_grads.size()));
  }
  const Eigen::Index f = model.config.channels;
  Model<Scalar> grads = model.zeros_like();
  Matrix<Scalar> carry;  // dL/dP^(s) coming from stage s+1's input
  for (std::size_t s = n_stages; s-- > 0;) {
    const auto& stage = model.stages[s];
    const auto& cache = fwd.caches[s];
    auto& gstage = grads.stages[s];
    if (logit_grads[s].rows() != fwd.probs[s].frames() ||
        logit_grads[s].cols() != fwd.probs[s].classes()) {
      throw ShapeError("backward: logit gradient shape mismatch at stage " + std::to_string(s));
    }
    Matrix<Scalar> dlogits = logit_grads[s];
    if (carry.size() != 0) dlogits += softmax_rows_backward(fwd.probs[s], carry);

    auto head = conv1x1_backward(cache.hidden, stage.head.weight, dlogits);
    gstage.head.weight = std::move(head.weights);
    gstage.head.bias = std::move(head.bias);
    Matrix<Scalar> dh = std::move(head.input);

    for (std::size_t l = stage.layers.size(); l-- > 0;) {
      const auto& layer = stage.layers[l];
      const auto& lc = cache.layers[l];
      auto& gl = gstage.layers[l];
      auto fuse = conv1x1_backward(lc.activation, layer.fuse.weight, dh);
      gl.fuse.weight = std::move(fuse.weights);
      gl.fuse.bias = std::move(fuse.bias);
      const Matrix<Scalar> dz = relu_backward(lc.preact, fuse.input);
      ConvGrad<Scalar> low;
      ConvGrad<Scalar> high;
      if (model.config.fusion == Fusion::kSum) {
        low = dilated_conv1d_backward(lc.input, layer.low.kernel, layer.low.dilation, dz);
        high = dilated_conv1d_backward(lc.input, layer.high.kernel, layer.high.dilation, dz);
      } else {
        const Matrix<Scalar> dz_low = dz.leftCols(f);
        const Matrix<Scalar> dz_high = dz.rightCols(f);
        low = dilated_conv1d_backward(lc.input, layer.low.kernel, layer.low.dilation, dz_low);
        high = dilated_conv1d_backward(lc.input, layer.high.kernel, layer.high.dilation, dz_high);
      }
      dh += low.input + high.input;
      gl.low.kernel = std::move(low.weights);
      gl.low.bias = std::move(low.bias);
      gl.high.kernel = std::move(high.weights);
      gl.high.bias = std::move(high.bias);
    }

    auto in = conv1x1_backward(cache.input, stage.input.weight, dh);
    gstage.input.weight = std::move(in.weights);
    gstage.input.bias = std::move(in.bias);
    carry = std::move(in.input);
  }
  return grads;
}

#define PHASESEG_INSTANTIATE(S)                                                                 \
  template struct Model<S>;                                                                     \
  template std::vector<ParamBlock<S>> parameter_blocks(Model<S>&);                              \
  template std::vector<ParamBlock<const S>> parameter_blocks(const Model<S>&);                  \
  template Model<S> zero_model<S>(const StageConfig&);                                          \
  template Model<S> init_model<S>(const StageConfig&, std::uint64_t);                           \
  template ForwardResult<S> forward(const Model<S>&, const FeatureSequence<S>&, bool);          \
  template ProbSequence<S> predict(const Model<S>&, const FeatureSequence<S>&);                 \
  template Model<S> backward(const Model<S>&, const ForwardResult<S>&,                          \
                             std::span<const Matrix<S>>);

PHASESEG_INSTANTIATE(float)
PHASESEG_INSTANTIATE(double)

template Model<float> model_cast<float, double>(const Model<double>&);
template Model<double> model_cast<double, float>(const Model<float>&);
template Model<float> model_cast<float, float>(const Model<float>&);
template Model<double> model_cast<double, double>(const Model<double>&);

#undef PHASESEG_INSTANTIATE

}  // namespace phaseseg
