#include <array>
#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "phaseseg/mstcn.hpp"

namespace phaseseg {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'T', 'P', 'P'};

void write_header(std::ostream& out, std::uint32_t scalar_bytes, const StageConfig& cfg) {
  out.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint32_t>(out, kModelFormatVersion);
  detail::write_le<std::uint32_t>(out, scalar_bytes);
  for (int v : {cfg.input_dim, cfg.channels, cfg.classes, cfg.stages, cfg.layers,
                cfg.refinement_layers, cfg.kernel_size}) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.fusion));
}

ModelFileInfo read_header(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("not a model file (bad magic bytes)");
  }
  ModelFileInfo info;
  info.version = detail::read_le<std::uint32_t>(in);
  if (info.version != kModelFormatVersion) {
    throw VersionError("unsupported model format version " + std::to_string(info.version) +
                           " (expected " + std::to_string(kModelFormatVersion) + ")",
                       info.version);
  }
  info.scalar_bytes = detail::read_le<std::uint32_t>(in);
  if (info.scalar_bytes != 4 && info.scalar_bytes != 8) {
    throw FormatError("unsupported scalar width " + std::to_string(info.scalar_bytes));
  }
  auto& cfg = info.config;
  for (int* field : {&cfg.input_dim, &cfg.channels, &cfg.classes, &cfg.stages, &cfg.layers,
                     &cfg.refinement_layers, &cfg.kernel_size}) {
    const auto v = detail::read_le<std::uint32_t>(in);
    if (v > (1u << 24)) throw FormatError("implausible configuration field " + std::to_string(v));
    *field = static_cast<int>(v);
  }
  cfg.fusion = static_cast<Fusion>(detail::read_le<std::uint32_t>(in));
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("invalid configuration in model file: ") + e.what());
  }
  return info;
}

template <typename Stored, typename Scalar>
void read_params(std::istream& in, Model<Scalar>& model) {
  for (auto& block : parameter_blocks(model)) {
    for (auto& v : block.values) v = static_cast<Scalar>(detail::read_le<Stored>(in));
  }
}

}  // namespace

template <typename Scalar>
void write_model(std::ostream& out, const Model<Scalar>& model) {
  write_header(out, sizeof(Scalar), model.config);
  for (const auto& block : parameter_blocks(model)) {
    for (Scalar v : block.values) detail::write_le<Scalar>(out, v);
  }
}

template <typename Scalar>
void save_model(const Model<Scalar>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_model(out, model);
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

template <typename Scalar>
Model<Scalar> read_model(std::istream& in) {
  const ModelFileInfo info = read_header(in);
  Model<Scalar> model = zero_model<Scalar>(info.config);
  if (info.scalar_bytes == 4) {
    read_params<float>(in, model);
  } else {
    read_params<double>(in, model);
  }
  return model;
}

template <typename Scalar>
Model<Scalar> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_model<Scalar>(in);
}

ModelFileInfo peek_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_header(in);
}

template void write_model(std::ostream&, const Model<float>&);
template void write_model(std::ostream&, const Model<double>&);
template void save_model(const Model<float>&, const std::string&);
template void save_model(const Model<double>&, const std::string&);
template Model<float> read_model<float>(std::istream&);
template Model<double> read_model<double>(std::istream&);
template Model<float> load_model<float>(const std::string&);
template Model<double> load_model<double>(const std::string&);

}  // namespace phaseseg
