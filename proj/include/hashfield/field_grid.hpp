#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hashfield/access.hpp"
#include "hashfield/common.hpp"

namespace hashfield {

struct HashConfig {
  std::uint32_t table_size = 1u << 14;
  std::uint32_t features_per_entry = 2;
  std::uint32_t base_resolution = 16;
  std::uint32_t levels = 4;
  double growth_factor = 2.0;
  std::uint32_t pi1 = 1u;
  std::uint32_t pi2 = 2654435761u;
  std::uint32_t pi3 = 805459861u;

  void validate() const {
    require(table_size > 0 && std::has_single_bit(table_size), "HashConfig: table_size must be a power of two");
    require(features_per_entry >= 1, "HashConfig: features_per_entry must be positive");
    require(levels >= 1, "HashConfig: levels must be >= 1");
    require(base_resolution >= 2, "HashConfig: resolution must be >= 2");
    require(growth_factor >= 1.0, "HashConfig: growth_factor must be >= 1");
  }

  /// Vertices per axis at `level`.
  std::uint32_t resolution(std::uint32_t level) const {
    return static_cast<std::uint32_t>(std::floor(base_resolution * std::pow(growth_factor, level) + 1e-9));
  }

  std::size_t embedding_dim() const { return std::size_t{levels} * features_per_entry; }
  std::size_t entries() const { return std::size_t{levels} * table_size; }

  friend bool operator==(const HashConfig&, const HashConfig&) = default;
};

struct LatticeCoord {
  std::uint32_t x = 0, y = 0, z = 0;
};

/// (pi1*x ^ pi2*y ^ pi3*z) mod T, 32-bit wraparound products, T a power of two.
constexpr std::uint32_t hash_index(const LatticeCoord& c, const HashConfig& cfg) noexcept {
  const std::uint32_t h = (c.x * cfg.pi1) ^ (c.y * cfg.pi2) ^ (c.z * cfg.pi3);
  return h & (cfg.table_size - 1u);
}

/// Enclosing lattice cube of a query point at one level.
template <typename Scalar>
struct GridCube {
  std::array<LatticeCoord, 8> vertex_coords{};
  std::array<std::uint32_t, 8> vertex_addresses{};
  std::array<Scalar, 8> weights{};
};

namespace detail {
template <typename Scalar>
constexpr Scalar boundary_epsilon() {
  if constexpr (sizeof(Scalar) >= 8) {
    return Scalar(1e-9);
  } else {
    return Scalar(1e-6);
  }
}
}  // namespace detail

template <typename Scalar>
GridCube<Scalar> neighbor_cube(const Vec3<Scalar>& point, std::uint32_t level, const HashConfig& cfg) {
  for (int a = 0; a < 3; ++a) {
    if (!(point[a] >= Scalar(0) && point[a] <= Scalar(1))) {
      throw DomainError("neighbor_cube: point outside [0,1]^3");
    }
  }
  require(level < cfg.levels, "neighbor_cube: level out of range");

  const Scalar cells = static_cast<Scalar>(cfg.resolution(level) - 1);
  std::array<std::uint32_t, 3> base{};
  std::array<Scalar, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const Scalar p = std::min(point[a], Scalar(1) - detail::boundary_epsilon<Scalar>());
    const Scalar scaled = p * cells;
    const Scalar fl = std::floor(scaled);
    base[a] = static_cast<std::uint32_t>(fl);
    frac[a] = scaled - fl;
  }

  GridCube<Scalar> cube;
  for (std::uint32_t v = 0; v < 8; ++v) {
    const std::uint32_t bx = v & 1u, by = (v >> 1) & 1u, bz = (v >> 2) & 1u;
    const LatticeCoord c{base[0] + bx, base[1] + by, base[2] + bz};
    cube.vertex_coords[v] = c;
    cube.vertex_addresses[v] = hash_index(c, cfg);
    const Scalar wx = bx ? frac[0] : Scalar(1) - frac[0];
    const Scalar wy = by ? frac[1] : Scalar(1) - frac[1];
    const Scalar wz = bz ? frac[2] : Scalar(1) - frac[2];
    cube.weights[v] = wx * wy * wz;
  }
  return cube;
}

/// Per-level 1D hash tables of feature vectors.
template <typename Scalar>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(const HashConfig& cfg) : config_(cfg) {
    cfg.validate();
    data_.assign(cfg.entries() * cfg.features_per_entry, Scalar(0));
  }

  /// Uniform init in [-scale, scale] from a fixed seed.
  static EmbeddingTable random(const HashConfig& cfg, std::uint64_t seed, Scalar scale = Scalar(1e-4)) {
    EmbeddingTable t(cfg);
    std::mt19937_64 rng(seed);
    for (auto& v : t.data_) v = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * scale);
    return t;
  }

  const HashConfig& config() const { return config_; }

  std::span<Scalar> entry(std::uint32_t level, std::uint32_t address) {
    return {data_.data() + offset(level, address), config_.features_per_entry};
  }
  std::span<const Scalar> entry(std::uint32_t level, std::uint32_t address) const {
    return {data_.data() + offset(level, address), config_.features_per_entry};
  }

  std::span<Scalar> level_data(std::uint32_t level) {
    return {data_.data() + offset(level, 0), std::size_t{config_.table_size} * config_.features_per_entry};
  }
  std::span<const Scalar> level_data(std::uint32_t level) const {
    return {data_.data() + offset(level, 0), std::size_t{config_.table_size} * config_.features_per_entry};
  }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  std::size_t offset(std::uint32_t level, std::uint32_t address) const {
    return (std::size_t{level} * config_.table_size + address) * config_.features_per_entry;
  }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  HashConfig config_;
  std::vector<Scalar> data_;
};

namespace detail {
inline void emit_cube(const TraceTag* tag, Phase phase, AccessKind kind, std::uint32_t level,
                      const std::array<std::uint32_t, 8>& addresses) {
  if (tag == nullptr || tag->sink == nullptr) return;
  for (std::uint8_t v = 0; v < 8; ++v) {
    AccessRecord r;
    r.iteration = tag->iteration;
    r.phase = phase;
    r.branch = tag->branch;
    r.level = static_cast<std::uint8_t>(level);
    r.vertex = v;
    r.point_id = tag->point_id;
    r.address = addresses[v];
    r.kind = kind;
    tag->sink->record(r);
  }
}
}  // namespace detail

/// Writes the concatenated per-level interpolated embedding into `out` (size levels*features).
template <typename Scalar>
void interpolate_into(const Vec3<Scalar>& point, const EmbeddingTable<Scalar>& table, std::span<Scalar> out,
                      const TraceTag* tag = nullptr) {
  const HashConfig& cfg = table.config();
  const std::uint32_t F = cfg.features_per_entry;
  require(out.size() == cfg.embedding_dim(), "interpolate: output dimension mismatch");
  for (std::uint32_t l = 0; l < cfg.levels; ++l) {
    const GridCube<Scalar> cube = neighbor_cube(point, l, cfg);
    detail::emit_cube(tag, Phase::Forward, AccessKind::Read, l, cube.vertex_addresses);
    Scalar* dst = out.data() + std::size_t{l} * F;
    std::fill(dst, dst + F, Scalar(0));
    for (int v = 0; v < 8; ++v) {
      const auto e = table.entry(l, cube.vertex_addresses[v]);
      for (std::uint32_t f = 0; f < F; ++f) dst[f] += cube.weights[v] * e[f];
    }
  }
}

template <typename Scalar>
std::vector<Scalar> interpolate(const Vec3<Scalar>& point, const EmbeddingTable<Scalar>& table,
                                const TraceTag* tag = nullptr) {
  std::vector<Scalar> out(table.config().embedding_dim());
  interpolate_into(point, table, std::span<Scalar>(out), tag);
  return out;
}

template <typename Scalar>
struct GradContribution {
  std::uint32_t level = 0;
  std::uint32_t address = 0;
  std::vector<Scalar> gradient;
};

/// Calls `sink(level, address, weight, upstream_slice)` for every cube vertex of every level.
template <typename Scalar, typename Fn>
void for_each_backward_contribution(const Vec3<Scalar>& point, std::span<const Scalar> upstream_grad,
                                    const HashConfig& cfg, const TraceTag* tag, Fn&& fn) {
  require(upstream_grad.size() == cfg.embedding_dim(), "interpolate_backward: upstream gradient dimension mismatch");
  const std::uint32_t F = cfg.features_per_entry;
  for (std::uint32_t l = 0; l < cfg.levels; ++l) {
    const GridCube<Scalar> cube = neighbor_cube(point, l, cfg);
    detail::emit_cube(tag, Phase::Backward, AccessKind::Write, l, cube.vertex_addresses);
    const auto slice = upstream_grad.subspan(std::size_t{l} * F, F);
    for (int v = 0; v < 8; ++v) fn(l, cube.vertex_addresses[v], cube.weights[v], slice);
  }
}

template <typename Scalar>
std::vector<GradContribution<Scalar>> interpolate_backward(const Vec3<Scalar>& point,
                                                           std::span<const Scalar> upstream_grad,
                                                           const EmbeddingTable<Scalar>& table,
                                                           const TraceTag* tag = nullptr) {
  std::vector<GradContribution<Scalar>> out;
  out.reserve(std::size_t{8} * table.config().levels);
  for_each_backward_contribution(point, upstream_grad, table.config(), tag,
                                 [&](std::uint32_t l, std::uint32_t addr, Scalar w, std::span<const Scalar> g) {
                                   GradContribution<Scalar> c{l, addr, std::vector<Scalar>(g.size())};
                                   for (std::size_t f = 0; f < g.size(); ++f) c.gradient[f] = w * g[f];
                                   out.push_back(std::move(c));
                                 });
  return out;
}

/// Adds the backward contributions into a dense gradient buffer laid out like the table.
template <typename Scalar>
void interpolate_backward_accumulate(const Vec3<Scalar>& point, std::span<const Scalar> upstream_grad,
                                     const EmbeddingTable<Scalar>& table, std::span<Scalar> grad_buffer,
                                     const TraceTag* tag = nullptr) {
  require(grad_buffer.size() == table.data().size(), "interpolate_backward: gradient buffer size mismatch");
  for_each_backward_contribution(point, upstream_grad, table.config(), tag,
                                 [&](std::uint32_t l, std::uint32_t addr, Scalar w, std::span<const Scalar> g) {
                                   Scalar* dst = grad_buffer.data() + table.offset(l, addr);
                                   for (std::size_t f = 0; f < g.size(); ++f) dst[f] += w * g[f];
                                 });
}

}  // namespace hashfield
