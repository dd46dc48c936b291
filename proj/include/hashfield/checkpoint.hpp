#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "hashfield/common.hpp"
#include "hashfield/field_grid.hpp"
#include "hashfield/mlp.hpp"
#include "hashfield/trainer.hpp"

namespace hashfield {

// Container layout (little-endian):
//   I3DG block:  "I3DG", u32 version, u32 levels, u32 T, u32 features, then levels*T*features f32
//   MLP0 block:  "MLP0", u32 version, u32 layer count, per layer: u32 rows, u32 cols,
//                rows*cols f32 weights (row-major), rows f32 biases
// A field checkpoint is the density I3DG block, the color I3DG block, then the MLP0 block.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 4);
}

inline void write_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  write_u32(os, v);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  char b[4];
  const auto at = static_cast<long long>(is.tellg());
  if (!is.read(b, 4)) throw LoadError(std::string("checkpoint truncated reading ") + what + " at offset " + std::to_string(at));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(b[i])} << (8 * i);
  return v;
}

inline float read_f32(std::istream& is, const char* what) {
  const std::uint32_t v = read_u32(is, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char b[4];
  const auto at = static_cast<long long>(is.tellg());
  if (!is.read(b, 4)) throw LoadError("checkpoint truncated at offset " + std::to_string(at));
  if (std::memcmp(b, magic, 4) != 0)
    throw LoadError(std::string("bad checkpoint magic at offset ") + std::to_string(at) + ", expected " + magic);
}

}  // namespace detail

template <typename Scalar>
void write_table(std::ostream& os, const EmbeddingTable<Scalar>& table) {
  const HashConfig& c = table.config();
  os.write("I3DG", 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, c.levels);
  detail::write_u32(os, c.table_size);
  detail::write_u32(os, c.features_per_entry);
  for (Scalar v : table.data()) detail::write_f32(os, static_cast<float>(v));
}

/// Reads one I3DG block. Geometry not stored in the header (resolution, growth, hash primes) comes from `shape`.
template <typename Scalar>
EmbeddingTable<Scalar> read_table(std::istream& is, HashConfig shape = {}) {
  detail::expect_magic(is, "I3DG");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion) throw LoadError("unsupported table checkpoint version " + std::to_string(version));
  shape.levels = detail::read_u32(is, "levels");
  shape.table_size = detail::read_u32(is, "table size");
  shape.features_per_entry = detail::read_u32(is, "features");
  try {
    shape.validate();
  } catch (const ContractError& e) {
    throw LoadError(std::string("invalid table header: ") + e.what());
  }
  EmbeddingTable<Scalar> table(shape);
  for (auto& v : table.data()) v = static_cast<Scalar>(detail::read_f32(is, "table payload"));
  return table;
}

template <typename Scalar>
void write_mlp(std::ostream& os, const Mlp<Scalar>& mlp) {
  os.write("MLP0", 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(mlp.layers().size()));
  for (const auto& l : mlp.layers()) {
    detail::write_u32(os, static_cast<std::uint32_t>(l.weight.rows()));
    detail::write_u32(os, static_cast<std::uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::write_f32(os, static_cast<float>(l.weight(r, c)));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::write_f32(os, static_cast<float>(l.bias(r)));
  }
}

template <typename Scalar>
Mlp<Scalar> read_mlp(std::istream& is) {
  detail::expect_magic(is, "MLP0");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion) throw LoadError("unsupported MLP checkpoint version " + std::to_string(version));
  const std::uint32_t count = detail::read_u32(is, "layer count");
  if (count < 1 || count > 64) throw LoadError("implausible MLP layer count " + std::to_string(count));

  std::vector<typename Mlp<Scalar>::Layer> layers(count);
  for (auto& l : layers) {
    const std::uint32_t rows = detail::read_u32(is, "layer rows");
    const std::uint32_t cols = detail::read_u32(is, "layer cols");
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) throw LoadError("implausible MLP layer shape");
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) l.weight(r, c) = static_cast<Scalar>(detail::read_f32(is, "weights"));
    for (std::uint32_t r = 0; r < rows; ++r) l.bias(r) = static_cast<Scalar>(detail::read_f32(is, "biases"));
  }
  MlpConfig cfg;
  cfg.hidden_layers = static_cast<int>(count) - 1;
  cfg.hidden_width = count > 1 ? static_cast<int>(layers.front().weight.rows()) : 64;
  cfg.embedding_dim = static_cast<int>(layers.front().weight.cols()) - kDirectionEncodingDim;
  if (cfg.embedding_dim < 0 || layers.back().weight.rows() != kMlpOutputs) throw LoadError("MLP checkpoint has wrong I/O shape");
  for (std::uint32_t i = 1; i < count; ++i)
    if (layers[i].weight.cols() != layers[i - 1].weight.rows()) throw LoadError("MLP checkpoint layers do not chain");
  Mlp<Scalar> mlp(cfg);
  mlp.mutable_layers() = std::move(layers);
  return mlp;
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const DecomposedField<Scalar>& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open checkpoint for writing: " + path.string());
  write_table(os, field.density);
  write_table(os, field.color);
  write_mlp(os, field.mlp);
  if (!os) throw LoadError("failed writing checkpoint: " + path.string());
}

template <typename Scalar>
DecomposedField<Scalar> load_checkpoint(const std::filesystem::path& path, const HashConfig& density_shape = {},
                                        const HashConfig& color_shape = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint: " + path.string());
  DecomposedField<Scalar> f;
  f.density = read_table<Scalar>(is, density_shape);
  f.color = read_table<Scalar>(is, color_shape);
  f.mlp = read_mlp<Scalar>(is);
  return f;
}

}  // namespace hashfield
