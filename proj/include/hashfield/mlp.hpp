#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "hashfield/common.hpp"

namespace hashfield {

/// Sinusoidal direction encoding: d, then sin/cos(2^k * pi * d) for k < kDirectionFrequencies.
inline constexpr int kDirectionFrequencies = 4;
inline constexpr int kDirectionEncodingDim = 3 + 3 * 2 * kDirectionFrequencies;

template <typename Scalar>
std::array<Scalar, kDirectionEncodingDim> encode_direction(const Vec3<Scalar>& d) {
  std::array<Scalar, kDirectionEncodingDim> out{};
  out[0] = d.x;
  out[1] = d.y;
  out[2] = d.z;
  int i = 3;
  for (int k = 0; k < kDirectionFrequencies; ++k) {
    const Scalar freq = static_cast<Scalar>(std::numbers::pi * static_cast<double>(1 << k));
    for (int a = 0; a < 3; ++a) {
      out[i++] = std::sin(freq * d[a]);
      out[i++] = std::cos(freq * d[a]);
    }
  }
  return out;
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

struct MlpConfig {
  int embedding_dim = 16;  ///< color + density embedding width
  int hidden_width = 64;
  int hidden_layers = 2;   ///< three linear layers in total by default
  std::uint64_t seed = 7;

  int input_dim() const { return embedding_dim + kDirectionEncodingDim; }
};

/// Output row 0 is raw density, rows 1..3 raw color.
inline constexpr int kMlpOutputs = 4;

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };

  /// Activations kept by forward for backward.
  struct Cache {
    std::uint64_t version = 0;
    Matrix input;                      // in x B
    std::vector<Matrix> hidden_pre;    // per hidden layer
    std::vector<Matrix> hidden_post;   // ReLU outputs
    Matrix raw;                        // 4 x B
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sigma;
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> color;
  };

  struct Gradients {
    std::vector<Layer> layers;
    Matrix input;  // in x B
  };

  Mlp() = default;
  explicit Mlp(const MlpConfig& cfg) : config_(cfg) {
    require(cfg.embedding_dim >= 0 && cfg.hidden_width > 0 && cfg.hidden_layers >= 0, "MlpConfig: invalid shape");
    std::mt19937_64 rng(cfg.seed);
    int fan_in = cfg.input_dim();
    for (int i = 0; i <= cfg.hidden_layers; ++i) {
      const int fan_out = i == cfg.hidden_layers ? kMlpOutputs : cfg.hidden_width;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
      for (int c = 0; c < fan_in; ++c)
        for (int r = 0; r < fan_out; ++r) layer.weight(r, c) = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
      layers_.push_back(std::move(layer));
      fan_in = fan_out;
    }
  }

  const MlpConfig& config() const { return config_; }
  const std::vector<Layer>& layers() const { return layers_; }
  /// Mutable access invalidates outstanding caches.
  std::vector<Layer>& mutable_layers() {
    ++version_;
    return layers_;
  }
  std::uint64_t version() const { return version_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Batched forward; columns of `input` are samples laid out as [embedding, encoded direction].
  Cache forward_batch(const Matrix& input) const {
    require(input.rows() == config_.input_dim(), "mlp_forward: input dimension mismatch");
    require(input.allFinite(), "mlp_forward: non-finite input");
    Cache cache;
    cache.version = version_;
    cache.input = input;
    const Matrix* x = &cache.input;
    for (int i = 0; i < config_.hidden_layers; ++i) {
      const Layer& l = layers_[i];
      cache.hidden_pre.push_back((l.weight * *x).colwise() + l.bias);
      cache.hidden_post.push_back(cache.hidden_pre.back().cwiseMax(Scalar(0)));
      x = &cache.hidden_post.back();
    }
    const Layer& out = layers_.back();
    cache.raw = (out.weight * *x).colwise() + out.bias;
    const auto B = input.cols();
    cache.sigma.resize(1, B);
    cache.color.resize(3, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      cache.sigma(0, b) = softplus(cache.raw(0, b));
      for (int c = 0; c < 3; ++c) cache.color(c, b) = sigmoid(cache.raw(1 + c, b));
    }
    return cache;
  }

  /// Backward through a batch; `d_sigma` is 1 x B, `d_color` is 3 x B.
  Gradients backward_batch(const Cache& cache, const Matrix& d_sigma, const Matrix& d_color) const {
    require(cache.version == version_, "mlp_backward: stale forward cache");
    const auto B = cache.input.cols();
    require(d_sigma.rows() == 1 && d_sigma.cols() == B && d_color.rows() == 3 && d_color.cols() == B,
            "mlp_backward: upstream gradient shape mismatch");

    Matrix delta(kMlpOutputs, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      delta(0, b) = d_sigma(0, b) * sigmoid(cache.raw(0, b));  // softplus' = sigmoid
      for (int c = 0; c < 3; ++c) {
        const Scalar s = cache.color(c, b);
        delta(1 + c, b) = d_color(c, b) * s * (Scalar(1) - s);
      }
    }

    Gradients g;
    g.layers.resize(layers_.size());
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      const Matrix& x = i == 0 ? cache.input : cache.hidden_post[i - 1];
      g.layers[i].weight = delta * x.transpose();
      g.layers[i].bias = delta.rowwise().sum();
      Matrix dx = layers_[i].weight.transpose() * delta;
      if (i == 0) {
        g.input = std::move(dx);
      } else {
        delta = dx.cwiseProduct((cache.hidden_pre[i - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
      }
    }
    return g;
  }

  /// theta <- theta - lr * g
  void apply_gradients(const Gradients& g, Scalar learning_rate) {
    require(g.layers.size() == layers_.size(), "sgd_update: gradient layer count mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      require(g.layers[i].weight.allFinite() && g.layers[i].bias.allFinite(), "sgd_update: non-finite MLP gradient");
      layers_[i].weight -= learning_rate * g.layers[i].weight;
      layers_[i].bias -= learning_rate * g.layers[i].bias;
    }
    ++version_;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i)
      if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
    return true;
  }

 private:
  MlpConfig config_;
  std::vector<Layer> layers_;
  std::uint64_t version_ = 1;
};

template <typename Scalar>
struct MlpOutput {
  Scalar sigma{};
  Vec3<Scalar> color{};
  typename Mlp<Scalar>::Cache cache;
};

/// Single-sample forward. `direction` must be unit length within 1e-6.
template <typename Scalar>
MlpOutput<Scalar> mlp_forward(const Mlp<Scalar>& mlp, std::span<const Scalar> embedding, const Vec3<Scalar>& direction) {
  require(all_finite(direction), "mlp_forward: non-finite direction");
  require(std::abs(norm(direction) - Scalar(1)) <= Scalar(1e-6), "mlp_forward: direction not normalized");
  require(static_cast<int>(embedding.size()) == mlp.config().embedding_dim, "mlp_forward: embedding dimension mismatch");
  typename Mlp<Scalar>::Matrix x(mlp.config().input_dim(), 1);
  for (std::size_t i = 0; i < embedding.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = embedding[i];
  const auto enc = encode_direction(direction);
  for (int i = 0; i < kDirectionEncodingDim; ++i) x(mlp.config().embedding_dim + i, 0) = enc[i];
  MlpOutput<Scalar> out;
  out.cache = mlp.forward_batch(x);
  out.sigma = out.cache.sigma(0, 0);
  out.color = {out.cache.color(0, 0), out.cache.color(1, 0), out.cache.color(2, 0)};
  return out;
}

template <typename Scalar>
typename Mlp<Scalar>::Gradients mlp_backward(const Mlp<Scalar>& mlp, const typename Mlp<Scalar>::Cache& cache,
                                             Scalar d_sigma, const Vec3<Scalar>& d_color) {
  typename Mlp<Scalar>::Matrix ds(1, 1), dc(3, 1);
  ds(0, 0) = d_sigma;
  dc << d_color.x, d_color.y, d_color.z;
  return mlp.backward_batch(cache, ds, dc);
}

}  // namespace hashfield
