#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "hashfield/common.hpp"
#include "hashfield/scene.hpp"

namespace hashfield {

struct Ray {
  Vec3<double> origin;
  Vec3<double> direction;  ///< unit length
  std::uint64_t pixel_id = 0;
  Vec3<double> ground_truth;

  Vec3<double> at(double t) const { return origin + direction * t; }
};

struct PixelSample {
  std::uint32_t view = 0;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  Vec3<double> color;
};

struct PixelBatch {
  std::vector<PixelSample> pixels;
  std::size_t size() const { return pixels.size(); }
};

enum class PixelSampling { WithReplacement, WithoutReplacement };

/// SplitMix64 finalizer; derives independent per-ray / per-iteration seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline PixelBatch sample_pixels(const std::vector<View>& views, std::size_t batch_size, std::uint64_t seed,
                                PixelSampling mode = PixelSampling::WithReplacement) {
  require(batch_size > 0, "sample_pixels: batch_size must be positive");
  require(!views.empty(), "sample_pixels: empty dataset");
  const std::size_t per_view = views.front().image.pixel_count();
  for (const auto& v : views) require(v.image.pixel_count() == per_view, "sample_pixels: views differ in size");
  const std::size_t total = per_view * views.size();
  require(total > 0, "sample_pixels: empty images");
  const std::uint32_t width = views.front().image.width;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(batch_size);
  if (mode == PixelSampling::WithReplacement) {
    for (std::size_t i = 0; i < batch_size; ++i) picks.push_back(uniform_index(rng, total));
  } else {
    require(batch_size <= total, "sample_pixels: batch larger than dataset without replacement");
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t j = i + uniform_index(rng, total - i);
      std::swap(idx[i], idx[j]);
      picks.push_back(idx[i]);
    }
  }

  PixelBatch batch;
  batch.pixels.reserve(batch_size);
  for (std::size_t flat : picks) {
    PixelSample p;
    p.view = static_cast<std::uint32_t>(flat / per_view);
    const std::size_t local = flat % per_view;
    p.x = static_cast<std::uint32_t>(local % width);
    p.y = static_cast<std::uint32_t>(local / width);
    p.color = vec_cast<double>(views[p.view].image.at(p.x, p.y));
    batch.pixels.push_back(p);
  }
  return batch;
}

/// Ray through the center of pixel (x, y).
inline Ray pixel_to_ray(std::uint32_t x, std::uint32_t y, const Intrinsics& K, const Pose& pose) {
  require(K.focal > 0.0, "pixel_to_ray: focal must be positive");
  require(std::abs(rotation_determinant(pose)) > 1e-9, "pixel_to_ray: singular pose matrix");
  const Vec3<double> cam{(x + 0.5 - K.cx) / K.focal, -(y + 0.5 - K.cy) / K.focal, -1.0};
  Vec3<double> world{};
  for (int r = 0; r < 3; ++r) world[r] = pose[r][0] * cam.x + pose[r][1] * cam.y + pose[r][2] * cam.z;
  Ray ray;
  ray.origin = {pose[0][3], pose[1][3], pose[2][3]};
  ray.direction = normalized(world);
  ray.pixel_id = std::uint64_t{y} * K.width + x;
  return ray;
}

inline Ray pixel_to_ray(const PixelSample& px, const Scene& scene) {
  Ray r = pixel_to_ray(px.x, px.y, scene.intrinsics, scene.train_views.at(px.view).pose);
  r.pixel_id += std::uint64_t{px.view} * scene.intrinsics.width * scene.intrinsics.height;
  r.ground_truth = px.color;
  return r;
}

/// Slab test; returns the entry/exit distances when the ray overlaps the box.
inline std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-12) {
      if (ray.origin[a] < box.min[a] || ray.origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - ray.origin[a]) / d;
    double tb = (box.max[a] - ray.origin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

/// Maps a world point inside `box` to [0,1]^3 (clamped against rounding).
inline Vec3<double> to_unit_cube(const Vec3<double>& p, const Aabb& box) {
  Vec3<double> u;
  for (int a = 0; a < 3; ++a) u[a] = std::clamp((p[a] - box.min[a]) / (box.max[a] - box.min[a]), 0.0, 1.0);
  return u;
}

/// N distances in [near, far): midpoints of equal sub-intervals, or one uniform draw per sub-interval.
template <typename Engine>
void sample_along_ray(double near, double far, std::size_t n, bool stratified, Engine& rng, std::span<double> out) {
  require(n >= 1, "sample_along_ray: need at least one sample");
  require(near < far, "sample_along_ray: near must be < far");
  require(out.size() == n, "sample_along_ray: output size mismatch");
  const double step = (far - near) / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = stratified ? uniform01(rng) : 0.5;
    out[k] = near + (static_cast<double>(k) + u) * step;
  }
}

inline std::vector<double> sample_along_ray(double near, double far, std::size_t n, std::uint64_t rng_seed,
                                            bool stratified) {
  std::vector<double> t(n);
  std::mt19937_64 rng(rng_seed);
  sample_along_ray(near, far, n, stratified, rng, std::span<double>(t));
  return t;
}

/// Per-sample quantities kept by composite() for the backward pass.
template <typename Scalar>
struct CompositeCache {
  std::vector<Scalar> t;
  std::vector<Scalar> sigma;
  std::vector<Scalar> delta;
  std::vector<Scalar> alpha;
  std::vector<Scalar> transmittance;  ///< N + 1 entries, T_1 = 1
  std::vector<Vec3<Scalar>> color;
  Vec3<Scalar> background{};
};

/// C = sum_k T_k (1 - exp(-sigma_k delta_k)) c_k + T_{N+1} * background, with T_k = exp(-sum_{j<k} sigma_j delta_j)
/// and delta_N = t_far - t_N.
template <typename Scalar>
Vec3<Scalar> composite(std::span<const Scalar> t, std::span<const Scalar> sigma, std::span<const Vec3<Scalar>> color,
                       Scalar t_far, const Vec3<Scalar>& background = {}, CompositeCache<Scalar>* cache = nullptr) {
  const std::size_t n = t.size();
  require(sigma.size() == n && color.size() == n, "composite: sample array length mismatch");
  if (n > 0) require(t_far >= t[n - 1], "composite: far bound precedes last sample");
  Vec3<Scalar> out{};
  Scalar trans = Scalar(1);
  if (cache != nullptr) {
    cache->t.assign(t.begin(), t.end());
    cache->sigma.assign(sigma.begin(), sigma.end());
    cache->color.assign(color.begin(), color.end());
    cache->delta.resize(n);
    cache->alpha.resize(n);
    cache->transmittance.resize(n + 1);
    cache->background = background;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (sigma[k] < Scalar(0)) throw ContractError("composite: negative density");
    if (k + 1 < n) require(t[k + 1] > t[k], "composite: sample distances must be strictly increasing");
    const Scalar delta = (k + 1 < n ? t[k + 1] : t_far) - t[k];
    const Scalar alpha = Scalar(1) - std::exp(-sigma[k] * delta);
    if (cache != nullptr) {
      cache->delta[k] = delta;
      cache->alpha[k] = alpha;
      cache->transmittance[k] = trans;
    }
    out += color[k] * (trans * alpha);
    trans *= Scalar(1) - alpha;
  }
  if (cache != nullptr) cache->transmittance[n] = trans;
  out += background * trans;
  return out;
}

template <typename Scalar>
struct CompositeGradients {
  std::vector<Scalar> d_sigma;
  std::vector<Vec3<Scalar>> d_color;
};

/// Analytic gradients of composite() given dL/dC.
template <typename Scalar>
void composite_backward(const CompositeCache<Scalar>& cache, std::span<const Scalar> sigma,
                        const Vec3<Scalar>& upstream, std::span<Scalar> d_sigma, std::span<Vec3<Scalar>> d_color) {
  const std::size_t n = cache.sigma.size();
  require(sigma.size() == n && cache.transmittance.size() == n + 1, "composite_backward: stale cache");
  for (std::size_t k = 0; k < n; ++k) require(sigma[k] == cache.sigma[k], "composite_backward: stale cache");
  require(d_sigma.size() == n && d_color.size() == n, "composite_backward: output size mismatch");

  // suffix = sum_{j>k} w_j (c_j . g) + T_{N+1} (bg . g)
  Scalar suffix = cache.transmittance[n] * dot(cache.background, upstream);
  for (std::size_t i = n; i-- > 0;) {
    const Scalar w = cache.transmittance[i] * cache.alpha[i];
    const Scalar cg = dot(cache.color[i], upstream);
    d_color[i] = upstream * w;
    d_sigma[i] = cache.delta[i] * (cache.transmittance[i + 1] * cg - suffix);
    suffix += w * cg;
  }
}

template <typename Scalar>
CompositeGradients<Scalar> composite_backward(const CompositeCache<Scalar>& cache, std::span<const Scalar> sigma,
                                              const Vec3<Scalar>& upstream) {
  CompositeGradients<Scalar> g;
  g.d_sigma.resize(sigma.size());
  g.d_color.resize(sigma.size());
  composite_backward(cache, sigma, upstream, std::span<Scalar>(g.d_sigma), std::span<Vec3<Scalar>>(g.d_color));
  return g;
}

/// sum_r ||pred_r - gt_r||^2
template <typename Scalar>
Scalar reconstruction_loss(std::span<const Vec3<Scalar>> predicted, std::span<const Vec3<Scalar>> ground_truth) {
  require(predicted.size() == ground_truth.size(), "reconstruction_loss: batch shape mismatch");
  Scalar loss = Scalar(0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const Vec3<Scalar> d = predicted[i] - ground_truth[i];
    loss += dot(d, d);
  }
  return loss;
}

}  // namespace hashfield
