#pragma once

// Multi-stage temporal convolutional network built from dual-dilated
// residual layers. Stage 1 maps frame embeddings to phase probabilities;
// every later stage re-segments the previous stage's probabilities.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "phaseseg/seqcore.hpp"

namespace phaseseg {

/// How the two dilated branches of a layer are combined before the 1x1 fuse.
enum class Fusion : std::uint32_t {
  kSum = 0,     ///< W * ReLU(conv_low + conv_high) + b, fuse weights F x F
  kConcat = 1,  ///< W * ReLU([conv_low | conv_high]) + b, fuse weights F x 2F
};

struct StageConfig {
  int input_dim = 64;           ///< d
  int channels = 256;           ///< F
  int classes = 4;              ///< C
  int stages = 4;               ///< S
  int layers = 11;              ///< L of the prediction stage
  int refinement_layers = 10;   ///< L of each refinement stage
  int kernel_size = 3;
  Fusion fusion = Fusion::kSum;

  void validate() const;
  int layers_in_stage(int stage) const { return stage == 0 ? layers : refinement_layers; }
  bool operator==(const StageConfig&) const = default;
};

template <typename Scalar>
struct Affine {
  Matrix<Scalar> weight;  ///< Cout x Cin
  Vector<Scalar> bias;
};

template <typename Scalar>
struct DilatedBranch {
  TemporalKernel<Scalar> kernel;
  Vector<Scalar> bias;
  int dilation = 1;
};

/// H_l = H_{l-1} + W * ReLU(conv_low(H_{l-1}) + conv_high(H_{l-1})) + b with
/// low dilation 2^l and high dilation 2^(L-1-l).
template <typename Scalar>
struct DualDilatedLayer {
  DilatedBranch<Scalar> low;
  DilatedBranch<Scalar> high;
  Affine<Scalar> fuse;
};

template <typename Scalar>
struct Stage {
  Affine<Scalar> input;  ///< d -> F for stage 1, C -> F afterwards
  std::vector<DualDilatedLayer<Scalar>> layers;
  Affine<Scalar> head;  ///< F -> C
};

template <typename Scalar>
struct Model {
  StageConfig config;
  std::vector<Stage<Scalar>> stages;

  /// Same architecture with every parameter set to zero. Used as the
  /// gradient container for backward().
  Model zeros_like() const;
  std::size_t parameter_count() const;
};

/// Converts every parameter to another scalar type.
template <typename To, typename From>
Model<To> model_cast(const Model<From>& model);

/// Named view of one contiguous parameter block.
template <typename Scalar>
struct ParamBlock {
  std::string name;
  std::span<Scalar> values;
};

/// Every parameter block in serialisation order.
template <typename Scalar>
std::vector<ParamBlock<Scalar>> parameter_blocks(Model<Scalar>& model);
template <typename Scalar>
std::vector<ParamBlock<const Scalar>> parameter_blocks(const Model<Scalar>& model);

/// Zero-initialised model with the architecture described by `cfg`.
template <typename Scalar>
Model<Scalar> zero_model(const StageConfig& cfg);

/// Deterministic initialisation: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// drawn in serialisation order from a 64-bit Mersenne twister, biases zero.
template <typename Scalar>
Model<Scalar> init_model(const StageConfig& cfg, std::uint64_t seed);

template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> input;        ///< H_{l-1}
  Matrix<Scalar> preact;       ///< branch output before ReLU (T x F or T x 2F)
  Matrix<Scalar> activation;   ///< ReLU(preact)
};

template <typename Scalar>
struct StageCache {
  Matrix<Scalar> input;  ///< X for stage 1, P^(s-1) afterwards
  std::vector<LayerCache<Scalar>> layers;
  Matrix<Scalar> hidden;  ///< H^(s) fed to the head
};

template <typename Scalar>
struct ForwardResult {
  std::vector<ProbSequence<Scalar>> probs;  ///< one per stage
  std::vector<StageCache<Scalar>> caches;   ///< empty when caching was not requested
};

template <typename Scalar>
ForwardResult<Scalar> forward(const Model<Scalar>& model, const FeatureSequence<Scalar>& x,
                              bool keep_cache = true);

/// Probabilities of the final stage only, without caches.
template <typename Scalar>
ProbSequence<Scalar> predict(const Model<Scalar>& model, const FeatureSequence<Scalar>& x);

/// Parameter gradients given dL/dlogits for every stage. Gradients arriving
/// at a refinement stage's input are routed back through the previous
/// stage's softmax.
template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const ForwardResult<Scalar>& fwd,
                       std::span<const Matrix<Scalar>> logit_grads);

/// Model file: "MTPP", u32 version, u32 scalar width (4 or 8), StageConfig as
/// eight u32 fields, then every parameter block in serialisation order as
/// little-endian IEEE-754 values of the stated width.
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <typename Scalar>
void save_model(const Model<Scalar>& model, const std::string& path);
template <typename Scalar>
void write_model(std::ostream& out, const Model<Scalar>& model);

template <typename Scalar>
Model<Scalar> load_model(const std::string& path);
/// Reads one model record; the stream is left positioned after it.
template <typename Scalar>
Model<Scalar> read_model(std::istream& in);

/// Reads only the header of a model file.
struct ModelFileInfo {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  StageConfig config;
};
ModelFileInfo peek_model(const std::string& path);

}  // namespace phaseseg
