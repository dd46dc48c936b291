#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hashfield/access.hpp"
#include "hashfield/common.hpp"
#include "hashfield/field_grid.hpp"
#include "hashfield/mlp.hpp"
#include "hashfield/renderer.hpp"
#include "hashfield/scene.hpp"

namespace hashfield {

/// Update frequency num/den in (0, 1].
struct Frequency {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  static Frequency parse(const std::string& text) {
    Frequency f;
    const auto slash = text.find('/');
    try {
      if (slash != std::string::npos) {
        f.num = static_cast<std::uint32_t>(std::stoul(text.substr(0, slash)));
        f.den = static_cast<std::uint32_t>(std::stoul(text.substr(slash + 1)));
      } else {
        // decimal: scale by 10^digits
        const auto dot = text.find('.');
        const std::size_t digits = dot == std::string::npos ? 0 : text.size() - dot - 1;
        require(digits <= 6, "frequency: too many decimal digits");
        std::string mantissa = text;
        if (dot != std::string::npos) mantissa.erase(dot, 1);
        f.num = static_cast<std::uint32_t>(std::stoul(mantissa));
        f.den = 1;
        for (std::size_t i = 0; i < digits; ++i) f.den *= 10;
      }
    } catch (const std::invalid_argument&) {
      throw ContractError("frequency: cannot parse '" + text + "'");
    } catch (const std::out_of_range&) {
      throw ContractError("frequency: cannot parse '" + text + "'");
    }
    f.validate();
    const std::uint32_t g = std::gcd(f.num, f.den);
    f.num /= g;
    f.den /= g;
    return f;
  }

  void validate() const { require(den > 0 && num > 0 && num <= den, "frequency must lie in (0, 1]"); }
  double value() const { return static_cast<double>(num) / den; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  friend bool operator==(const Frequency&, const Frequency&) = default;
  friend bool operator<(const Frequency& a, const Frequency& b) {
    return std::uint64_t{a.num} * b.den < std::uint64_t{b.num} * a.den;
  }
};

/// True when the branch back-propagates at `iteration`: one pass in every 1/(1-F) iterations is skipped,
/// spread evenly, so any window of den iterations fires exactly num times.
inline bool apply_schedule(std::uint64_t iteration, const Frequency& f) {
  f.validate();
  const std::uint64_t skip = f.den - f.num;
  return (iteration + 1) * skip / f.den == iteration * skip / f.den;
}

/// theta <- theta - lr * g over a dense span.
template <typename Scalar>
void sgd_update(std::span<Scalar> params, std::span<const Scalar> grads, Scalar learning_rate) {
  require(params.size() == grads.size(), "sgd_update: shape mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw DivergenceError("sgd_update: non-finite gradient at index " + std::to_string(i));
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

/// Applies a per-address gradient list to a table; repeated addresses accumulate additively.
template <typename Scalar>
void sgd_update(EmbeddingTable<Scalar>& table, std::span<const GradContribution<Scalar>> grads, Scalar learning_rate) {
  for (const auto& g : grads) {
    require(g.gradient.size() == table.config().features_per_entry, "sgd_update: feature width mismatch");
    for (Scalar v : g.gradient)
      if (!std::isfinite(v)) throw DivergenceError("sgd_update: non-finite gradient");
    auto e = table.entry(g.level, g.address);
    for (std::size_t f = 0; f < e.size(); ++f) e[f] -= learning_rate * g.gradient[f];
  }
}

/// Mean squared error over [0,1]-range images; +inf for identical images.
inline double psnr(const Image& predicted, const Image& reference) {
  require(predicted.width == reference.width && predicted.height == reference.height, "psnr: dimension mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < predicted.rgb.size(); ++i) {
    const double d = static_cast<double>(predicted.rgb[i]) - reference.rgb[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(se / static_cast<double>(predicted.rgb.size()));
}

inline double psnr_from_mse(double mse) {
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
}

struct TrainConfig {
  enum class Mode { Decomposed, Baseline };

  Mode mode = Mode::Decomposed;
  HashConfig density_table{.table_size = 1u << 14};
  HashConfig color_table{.table_size = 1u << 12};
  Frequency density_freq{1, 1};
  Frequency color_freq{1, 2};
  double learning_rate = 10.0;      ///< grid entries
  double mlp_learning_rate = 2e-3;
  std::uint32_t iterations = 500;
  std::uint32_t batch_size = 1024;
  std::uint32_t samples_per_ray = 32;
  bool stratified = true;
  int hidden_width = 64;
  int hidden_layers = 2;
  std::uint64_t seed = 1;
  std::uint32_t eval_every = 0;     ///< 0: evaluate only after the last iteration
  std::uint32_t trace_begin = 0;    ///< iterations [trace_begin, trace_end) are recorded to the sink
  std::uint32_t trace_end = std::numeric_limits<std::uint32_t>::max();
  bool allow_inverted = false;      ///< permit S_D < S_C or F_D < F_C

  /// Throws ContractError; inverted size/frequency ratios are rejected unless allow_inverted is set.
  void validate() const {
    density_table.validate();
    color_table.validate();
    density_freq.validate();
    color_freq.validate();
    require(iterations >= 1 && batch_size >= 1 && samples_per_ray >= 1, "train config: iterations, batch_size and "
                                                                       "samples_per_ray must be positive");
    require(learning_rate > 0.0 && mlp_learning_rate >= 0.0, "train config: learning rates must be positive");
    if (mode == Mode::Baseline) {
      require(density_table == color_table, "baseline mode requires equal density and color tables");
      return;
    }
    if (!allow_inverted) {
      require(density_table.table_size >= color_table.table_size,
              "density table must be at least as large as the color table (S_D >= S_C)");
      require(!(density_freq < color_freq),
              "density update frequency must be at least the color frequency (F_D >= F_C)");
    }
  }

  bool density_fires(std::uint64_t it) const { return mode == Mode::Baseline || apply_schedule(it, density_freq); }
  bool color_fires(std::uint64_t it) const { return mode == Mode::Baseline || apply_schedule(it, color_freq); }
};

struct TrainReport {
  std::vector<double> loss;                              ///< summed squared color error per iteration
  std::vector<std::pair<std::uint32_t, double>> train_psnr;
  std::vector<std::pair<std::uint32_t, double>> test_psnr;
  std::uint64_t density_updates = 0;
  std::uint64_t color_updates = 0;
  std::size_t density_entries = 0;
  std::size_t color_entries = 0;
  double wall_seconds = 0.0;

  double final_train_psnr() const { return train_psnr.empty() ? 0.0 : train_psnr.back().second; }

  /// iteration,loss,psnr with psnr empty on iterations without evaluation.
  void write_csv(std::ostream& out) const {
    out << "iteration,loss,psnr\n";
    std::size_t e = 0;
    for (std::size_t i = 0; i < loss.size(); ++i) {
      out << i << "," << format_double(loss[i]) << ",";
      while (e < train_psnr.size() && train_psnr[e].first < i) ++e;
      if (e < train_psnr.size() && train_psnr[e].first == i) out << format_double(train_psnr[e].second);
      out << "\n";
    }
  }

  void write_summary(std::ostream& out) const {
    out << "iterations: " << loss.size() << "\n";
    out << "final_loss: " << format_double(loss.empty() ? 0.0 : loss.back()) << "\n";
    out << "final_train_psnr_db: " << format_double(final_train_psnr()) << "\n";
    if (!test_psnr.empty()) out << "final_test_psnr_db: " << format_double(test_psnr.back().second) << "\n";
    out << "density_grid_updates: " << density_updates << "\n";
    out << "color_grid_updates: " << color_updates << "\n";
    out << "density_table_entries: " << density_entries << "\n";
    out << "color_table_entries: " << color_entries << "\n";
    out << "wall_seconds: " << std::fixed << std::setprecision(3) << wall_seconds << std::defaultfloat << "\n";
  }

  static std::string format_double(double v) {
    std::ostringstream s;
    s << std::setprecision(9) << v;
    return s.str();
  }
};

/// Color and density hash grids plus the shared feature MLP.
template <typename Scalar>
struct DecomposedField {
  EmbeddingTable<Scalar> density;
  EmbeddingTable<Scalar> color;
  Mlp<Scalar> mlp;

  DecomposedField() = default;
  DecomposedField(const HashConfig& density_cfg, const HashConfig& color_cfg, const MlpConfig& mlp_cfg,
                  std::uint64_t seed)
      : density(EmbeddingTable<Scalar>::random(density_cfg, mix_seed(seed, 11))),
        color(EmbeddingTable<Scalar>::random(color_cfg, mix_seed(seed, 12))),
        mlp(mlp_cfg) {}

  int embedding_dim() const {
    return static_cast<int>(density.config().embedding_dim() + color.config().embedding_dim());
  }
};

template <typename Scalar>
class Trainer {
 public:
  using Matrix = typename Mlp<Scalar>::Matrix;

  Trainer(const Scene& scene, const TrainConfig& config) : scene_(scene), config_(config) {
    config_.validate();
    require(!scene_.train_views.empty(), "train: scene has no training views");
    MlpConfig mc;
    mc.embedding_dim = static_cast<int>(config_.density_table.embedding_dim() + config_.color_table.embedding_dim());
    mc.hidden_width = config_.hidden_width;
    mc.hidden_layers = config_.hidden_layers;
    mc.seed = mix_seed(config_.seed, 13);
    field_ = DecomposedField<Scalar>(config_.density_table, config_.color_table, mc, config_.seed);
    density_grad_.assign(field_.density.data().size(), Scalar(0));
    color_grad_.assign(field_.color.data().size(), Scalar(0));
  }

  const DecomposedField<Scalar>& field() const { return field_; }
  DecomposedField<Scalar>& field() { return field_; }
  const TrainConfig& config() const { return config_; }

  /// One iteration of sampling, forward, compositing, loss and backward. Returns the batch loss.
  double step(std::uint32_t iteration, TraceSink* sink = nullptr) {
    const bool trace = sink != nullptr && iteration >= config_.trace_begin && iteration < config_.trace_end;
    TraceSink* active_sink = trace ? sink : nullptr;
    const PixelBatch batch = sample_pixels(scene_.train_views, config_.batch_size, mix_seed(config_.seed, iteration));
    std::vector<Ray> rays;
    rays.reserve(batch.size());
    for (const auto& px : batch.pixels) rays.push_back(pixel_to_ray(px, scene_));

    RayBundle bundle = march(rays, config_.stratified, mix_seed(config_.seed ^ 0xA5A5A5A5ull, iteration), iteration,
                             active_sink);

    // loss and dL/dC
    double loss = 0.0;
    std::vector<Vec3<Scalar>> upstream(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const Vec3<Scalar> diff = bundle.predicted[r] - vec_cast<Scalar>(rays[r].ground_truth);
      loss += static_cast<double>(dot(diff, diff));
      upstream[r] = diff * Scalar(2);
    }
    if (!std::isfinite(loss)) throw DivergenceError("training diverged: non-finite loss at iteration " +
                                                    std::to_string(iteration));

    const std::size_t N = config_.samples_per_ray;
    const auto S = static_cast<Eigen::Index>(bundle.active.size() * N);
    Matrix d_sigma = Matrix::Zero(1, S), d_color = Matrix::Zero(3, S);
    std::vector<Scalar> ds(N);
    std::vector<Vec3<Scalar>> dc(N);
    for (std::size_t a = 0; a < bundle.active.size(); ++a) {
      const std::size_t r = bundle.active[a];
      const auto base = static_cast<Eigen::Index>(a * N);
      composite_backward(bundle.caches[a], std::span<const Scalar>(bundle.caches[a].sigma), upstream[r],
                         std::span<Scalar>(ds), std::span<Vec3<Scalar>>(dc));
      for (std::size_t k = 0; k < N; ++k) {
        d_sigma(0, base + static_cast<Eigen::Index>(k)) = ds[k];
        for (int c = 0; c < 3; ++c) d_color(c, base + static_cast<Eigen::Index>(k)) = dc[k][c];
      }
    }

    const bool density_fires = config_.density_fires(iteration);
    const bool color_fires = config_.color_fires(iteration);

    if (S > 0) {
      auto grads = field_.mlp.backward_batch(bundle.mlp_cache, d_sigma, d_color);
      scatter_grid_gradients(bundle, grads.input, iteration, density_fires, color_fires, active_sink);
      if (config_.mlp_learning_rate > 0.0) {
        for (const auto& l : grads.layers)
          if (!l.weight.allFinite() || !l.bias.allFinite())
            throw DivergenceError("training diverged: non-finite MLP gradient at iteration " + std::to_string(iteration));
        field_.mlp.apply_gradients(grads, static_cast<Scalar>(config_.mlp_learning_rate));
      }
    }

    const auto lr = static_cast<Scalar>(config_.learning_rate);
    if (density_fires) {
      sgd_update(field_.density.data(), std::span<const Scalar>(density_grad_), lr);
      ++density_updates_;
    }
    if (color_fires) {
      sgd_update(field_.color.data(), std::span<const Scalar>(color_grad_), lr);
      ++color_updates_;
    }
    return loss;
  }

  /// Full-image render with midpoint sampling.
  Image render(const Pose& pose, std::size_t chunk = 4096) const {
    const auto& K = scene_.intrinsics;
    Image img(K.width, K.height);
    std::vector<Ray> rays;
    auto flush = [&]() {
      if (rays.empty()) return;
      const RayBundle b = march(rays, false, 0, 0, nullptr);
      for (std::size_t i = 0; i < rays.size(); ++i) {
        const auto id = rays[i].pixel_id;
        img.set(static_cast<std::uint32_t>(id % K.width), static_cast<std::uint32_t>(id / K.width),
                vec_cast<float>(b.predicted[i]));
      }
      rays.clear();
    };
    for (std::uint32_t y = 0; y < K.height; ++y) {
      for (std::uint32_t x = 0; x < K.width; ++x) {
        rays.push_back(pixel_to_ray(x, y, K, pose));
        if (rays.size() >= chunk) flush();
      }
    }
    flush();
    return img;
  }

  /// PSNR of the mean squared error pooled over all given views.
  double evaluate(const std::vector<View>& views) const {
    double se = 0.0;
    std::size_t n = 0;
    for (const auto& v : views) {
      const Image img = render(v.pose);
      for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const double d = static_cast<double>(img.rgb[i]) - v.image.rgb[i];
        se += d * d;
      }
      n += img.rgb.size();
    }
    return psnr_from_mse(n == 0 ? 0.0 : se / static_cast<double>(n));
  }

  TrainReport train(TraceSink* sink = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    report.density_entries = field_.density.config().entries();
    report.color_entries = field_.color.config().entries();
    for (std::uint32_t it = 0; it < config_.iterations; ++it) {
      report.loss.push_back(step(it, sink));
      const bool last = it + 1 == config_.iterations;
      if (last || (config_.eval_every > 0 && (it + 1) % config_.eval_every == 0)) {
        report.train_psnr.emplace_back(it, evaluate(scene_.train_views));
        if (!scene_.test_views.empty()) report.test_psnr.emplace_back(it, evaluate(scene_.test_views));
      }
    }
    report.density_updates = density_updates_;
    report.color_updates = color_updates_;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

  std::uint64_t density_updates() const { return density_updates_; }
  std::uint64_t color_updates() const { return color_updates_; }

 private:
  struct RayBundle {
    std::vector<std::size_t> active;               ///< batch indices of rays that hit the bounds
    std::vector<Vec3<Scalar>> points;              ///< unit-cube positions, active-ray major
    std::vector<CompositeCache<Scalar>> caches;    ///< per active ray
    typename Mlp<Scalar>::Cache mlp_cache;
    std::vector<Vec3<Scalar>> predicted;           ///< per batch ray
  };

  /// Samples, queries and composites a set of rays. Grid queries are issued in lockstep across the
  /// batch: sample step k of every active ray before step k + 1 of any ray.
  RayBundle march(const std::vector<Ray>& rays, bool stratified, std::uint64_t seed, std::uint32_t iteration,
                  TraceSink* sink) const {
    const std::size_t N = config_.samples_per_ray;
    RayBundle b;
    b.predicted.assign(rays.size(), vec_cast<Scalar>(scene_.background));
    std::vector<double> t_all;
    std::vector<double> far_all;
    std::vector<double> t(N);
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const auto hit = intersect_aabb(rays[r], scene_.bounds);
      if (!hit) continue;
      const double near = std::max(hit->first, scene_.near);
      const double far = std::min(hit->second, scene_.far);
      if (!(near < far)) continue;
      std::mt19937_64 rng(mix_seed(seed, r));
      sample_along_ray(near, far, N, stratified, rng, std::span<double>(t));
      b.active.push_back(r);
      t_all.insert(t_all.end(), t.begin(), t.end());
      far_all.push_back(far);
    }

    const std::size_t A = b.active.size();
    b.points.resize(A * N);
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t k = 0; k < N; ++k)
        b.points[a * N + k] = vec_cast<Scalar>(to_unit_cube(rays[b.active[a]].at(t_all[a * N + k]), scene_.bounds));

    const int color_dim = static_cast<int>(field_.color.config().embedding_dim());
    const int density_dim = static_cast<int>(field_.density.config().embedding_dim());
    const int emb_dim = color_dim + density_dim;
    Matrix input(field_.mlp.config().input_dim(), static_cast<Eigen::Index>(A * N));
    for (std::size_t k = 0; k < N; ++k) {
      for (std::size_t a = 0; a < A; ++a) {
        const std::size_t s = a * N + k;
        Scalar* col = input.data() + static_cast<std::size_t>(input.rows()) * s;
        const auto point_id = static_cast<std::uint32_t>(b.active[a] * N + k);
        TraceTag dtag{sink, iteration, Branch::Density, point_id};
        TraceTag ctag{sink, iteration, Branch::Color, point_id};
        interpolate_into(b.points[s], field_.density, std::span<Scalar>(col + color_dim, density_dim), &dtag);
        interpolate_into(b.points[s], field_.color, std::span<Scalar>(col, color_dim), &ctag);
        const auto enc = encode_direction(vec_cast<Scalar>(rays[b.active[a]].direction));
        std::copy(enc.begin(), enc.end(), col + emb_dim);
      }
    }

    b.mlp_cache = field_.mlp.forward_batch(input);
    b.caches.resize(A);
    std::vector<Scalar> ts(N), sig(N);
    std::vector<Vec3<Scalar>> col(N);
    const auto bg = vec_cast<Scalar>(scene_.background);
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t k = 0; k < N; ++k) {
        const auto s = static_cast<Eigen::Index>(a * N + k);
        ts[k] = static_cast<Scalar>(t_all[a * N + k]);
        sig[k] = b.mlp_cache.sigma(0, s);
        col[k] = {b.mlp_cache.color(0, s), b.mlp_cache.color(1, s), b.mlp_cache.color(2, s)};
      }
      b.predicted[b.active[a]] = composite<Scalar>(ts, sig, col, static_cast<Scalar>(far_all[a]), bg, &b.caches[a]);
    }
    return b;
  }

  /// Back-propagates embedding gradients into the dense per-table buffers, ray by ray, last sample first.
  void scatter_grid_gradients(const RayBundle& b, const Matrix& d_input, std::uint32_t iteration, bool density_fires,
                              bool color_fires, TraceSink* sink) {
    std::fill(density_grad_.begin(), density_grad_.end(), Scalar(0));
    std::fill(color_grad_.begin(), color_grad_.end(), Scalar(0));
    const std::size_t N = config_.samples_per_ray;
    const auto color_dim = field_.color.config().embedding_dim();
    const auto density_dim = field_.density.config().embedding_dim();
    for (std::size_t a = 0; a < b.active.size(); ++a) {
      for (std::size_t k = N; k-- > 0;) {
        const std::size_t s = a * N + k;
        const Scalar* col = d_input.data() + static_cast<std::size_t>(d_input.rows()) * s;
        const auto point_id = static_cast<std::uint32_t>(b.active[a] * N + k);
        if (density_fires) {
          TraceTag tag{sink, iteration, Branch::Density, point_id};
          interpolate_backward_accumulate(b.points[s], std::span<const Scalar>(col + color_dim, density_dim),
                                          field_.density, std::span<Scalar>(density_grad_), &tag);
        }
        if (color_fires) {
          TraceTag tag{sink, iteration, Branch::Color, point_id};
          interpolate_backward_accumulate(b.points[s], std::span<const Scalar>(col, color_dim), field_.color,
                                          std::span<Scalar>(color_grad_), &tag);
        }
      }
    }
  }

  const Scene& scene_;
  TrainConfig config_;
  DecomposedField<Scalar> field_;
  std::vector<Scalar> density_grad_;
  std::vector<Scalar> color_grad_;
  std::uint64_t density_updates_ = 0;
  std::uint64_t color_updates_ = 0;
};

/// Runs the full training loop.
template <typename Scalar = float>
TrainReport train(const Scene& scene, const TrainConfig& config, TraceSink* trace_sink = nullptr) {
  Trainer<Scalar> trainer(scene, config);
  return trainer.train(trace_sink);
}

}  // namespace hashfield
