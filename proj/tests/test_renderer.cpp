#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>
#include <set>

#include "hashfield/renderer.hpp"
#include "support/oracles.hpp"

using namespace hashfield;
using hashfield::testing::relative_error;

namespace {

std::vector<View> flat_views(std::size_t n, std::uint32_t w, std::uint32_t h) {
  std::vector<View> views(n);
  for (std::size_t v = 0; v < n; ++v) {
    views[v].image = Image(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x)
        views[v].image.set(x, y, {static_cast<float>(v), static_cast<float>(x), static_cast<float>(y)});
  }
  return views;
}

}  // namespace

TEST(SamplePixels, SameSeedSameBatch) {
  const auto views = flat_views(3, 8, 8);
  const auto a = sample_pixels(views, 100, 42), b = sample_pixels(views, 100, 42);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.pixels[i].view, b.pixels[i].view);
    EXPECT_EQ(a.pixels[i].x, b.pixels[i].x);
    EXPECT_EQ(a.pixels[i].y, b.pixels[i].y);
  }
}

TEST(SamplePixels, ColorMatchesSource) {
  const auto views = flat_views(2, 5, 3);
  for (const auto& p : sample_pixels(views, 50, 1).pixels) {
    EXPECT_EQ(p.color.x, p.view);
    EXPECT_EQ(p.color.y, p.x);
    EXPECT_EQ(p.color.z, p.y);
  }
}

TEST(SamplePixels, WithoutReplacementCoversDataset) {
  const auto views = flat_views(2, 4, 4);
  const auto batch = sample_pixels(views, 32, 7, PixelSampling::WithoutReplacement);
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> seen;
  for (const auto& p : batch.pixels) seen.insert({p.view, p.x, p.y});
  EXPECT_EQ(seen.size(), 32u);
}

TEST(SamplePixels, ZeroBatchIsContractError) {
  EXPECT_THROW(sample_pixels(flat_views(1, 2, 2), 0, 1), ContractError);
}

TEST(SamplePixels, UniformOverPixelsChiSquare) {
  const auto views = flat_views(2, 4, 4);
  const std::size_t cells = 32, draws = 32000;
  std::vector<double> counts(cells, 0.0);
  for (const auto& p : sample_pixels(views, draws, 123).pixels) counts[p.view * 16 + p.y * 4 + p.x] += 1.0;
  const double expected = static_cast<double>(draws) / cells;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(cells - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 1e-3) << "chi2 = " << chi2;
}

TEST(PixelToRay, PrincipalPointLooksDownNegativeZ) {
  // odd size so the principal point is a pixel centre
  const Intrinsics K = Intrinsics::centered(63, 63, 50.0);
  const Ray r = pixel_to_ray(31, 31, K, identity_pose());
  EXPECT_NEAR(r.direction.x, 0.0, 1e-15);
  EXPECT_NEAR(r.direction.y, 0.0, 1e-15);
  EXPECT_NEAR(r.direction.z, -1.0, 1e-15);
}

TEST(PixelToRay, TranslationMovesOriginOnly) {
  const Intrinsics K = Intrinsics::centered(64, 64, 64.0);
  Pose p = identity_pose();
  p[0][3] = 1.5;
  p[1][3] = -2.0;
  p[2][3] = 0.25;
  const Ray a = pixel_to_ray(10, 20, K, identity_pose()), b = pixel_to_ray(10, 20, K, p);
  EXPECT_EQ(b.origin, (Vec3<double>{1.5, -2.0, 0.25}));
  EXPECT_NEAR(norm(a.direction - b.direction), 0.0, 1e-15);
}

TEST(PixelToRay, CornerPixelPinhole) {
  const Intrinsics K = Intrinsics::centered(64, 64, 64.0);
  const Ray r = pixel_to_ray(0, 0, K, identity_pose());
  // camera-space (-31.5/64, 31.5/64, -1) normalised
  const double u = 31.5 / 64.0, n = std::sqrt(2 * u * u + 1.0);
  EXPECT_NEAR(r.direction.x, -u / n, 1e-15);
  EXPECT_NEAR(r.direction.y, u / n, 1e-15);
  EXPECT_NEAR(r.direction.z, -1.0 / n, 1e-15);
}

TEST(PixelToRay, SingularPoseIsContractError) {
  Pose p = identity_pose();
  p[0][0] = 0.0;
  EXPECT_THROW(pixel_to_ray(0, 0, Intrinsics::centered(4, 4, 4.0), p), ContractError);
}

TEST(SampleAlongRay, MidpointsWhenDeterministic) {
  const auto t = sample_along_ray(0.0, 1.0, 2, 9, false);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t[0], 0.25);
  EXPECT_DOUBLE_EQ(t[1], 0.75);
}

TEST(SampleAlongRay, StratifiedStaysInBins) {
  const auto t = sample_along_ray(2.0, 6.0, 8, 4, true);
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_GE(t[k], 2.0 + 0.5 * k);
    EXPECT_LT(t[k], 2.0 + 0.5 * (k + 1));
  }
}

TEST(SampleAlongRay, StratifiedMeanIsCentre) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed)
    for (double t : sample_along_ray(1.0, 3.0, 4, seed, true)) {
      sum += t;
      ++n;
    }
  EXPECT_NEAR(sum / n, 2.0, 0.01 * 2.0);
}

TEST(SampleAlongRay, NearNotBelowFarIsContractError) {
  EXPECT_THROW(sample_along_ray(1.0, 1.0, 4, 0, false), ContractError);
}

TEST(Composite, ZeroDensityIsBlack) {
  const std::vector<double> t{0.1, 0.2, 0.3}, sigma{0, 0, 0};
  const std::vector<Vec3<double>> c{{1, 1, 1}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_EQ(composite<double>(t, sigma, c, 0.5), (Vec3<double>{0, 0, 0}));
}

TEST(Composite, OpaqueSingleSampleGivesItsColor) {
  const std::vector<double> t{0.0}, sigma{20.0};
  const std::vector<Vec3<double>> c{{0.2, 0.4, 0.6}};
  const auto out = composite<double>(t, sigma, c, 1.0);
  EXPECT_NEAR(out.x, 0.2, 1e-8);
  EXPECT_NEAR(out.y, 0.4, 1e-8);
  EXPECT_NEAR(out.z, 0.6, 1e-8);
}

TEST(Composite, TwoSamplesDirectEvaluation) {
  const std::vector<double> t{0.0, 0.5}, sigma{1.0, 2.0};
  const std::vector<Vec3<double>> c{{1, 0, 0}, {0, 1, 0}};
  const auto out = composite<double>(t, sigma, c, 1.0);
  const double w1 = 1.0 - std::exp(-0.5);
  const double w2 = std::exp(-0.5) * (1.0 - std::exp(-1.0));
  EXPECT_NEAR(out.x, w1, 1e-15);
  EXPECT_NEAR(out.y, w2, 1e-15);
  EXPECT_NEAR(out.z, 0.0, 1e-15);
}

TEST(Composite, BackgroundFillsRemainingTransmittance) {
  const std::vector<double> t{0.0}, sigma{1.0};
  const std::vector<Vec3<double>> c{{0, 0, 0}};
  const auto out = composite<double>(t, sigma, c, 1.0, Vec3<double>{1, 1, 1});
  EXPECT_NEAR(out.x, std::exp(-1.0), 1e-15);
}

TEST(Composite, NegativeDensityIsContractError) {
  const std::vector<double> t{0.0}, sigma{-1.0};
  const std::vector<Vec3<double>> c{{0, 0, 0}};
  EXPECT_THROW(composite<double>(t, sigma, c, 1.0), ContractError);
}

TEST(CompositeBackward, ZeroUpstreamGivesZero) {
  const std::vector<double> t{0.0, 0.3}, sigma{1.0, 2.0};
  const std::vector<Vec3<double>> c{{1, 0, 0}, {0, 1, 0}};
  CompositeCache<double> cache;
  composite<double>(t, sigma, c, 1.0, {}, &cache);
  const auto g = composite_backward(cache, std::span<const double>(sigma), Vec3<double>{});
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(g.d_sigma[k], 0.0);
    EXPECT_EQ(g.d_color[k], (Vec3<double>{}));
  }
}

TEST(CompositeBackward, StaleCacheIsContractError) {
  const std::vector<double> t{0.0, 0.3}, sigma{1.0, 2.0}, other{1.0, 2.5};
  const std::vector<Vec3<double>> c{{1, 0, 0}, {0, 1, 0}};
  CompositeCache<double> cache;
  composite<double>(t, sigma, c, 1.0, {}, &cache);
  EXPECT_THROW(composite_backward(cache, std::span<const double>(other), Vec3<double>{1, 1, 1}), ContractError);
}

TEST(CompositeBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    std::vector<double> t(n), sigma(n);
    std::vector<Vec3<double>> c(n);
    double acc = 0.2;
    for (std::size_t k = 0; k < n; ++k) {
      acc += 0.05 + 0.2 * uniform01(rng);
      t[k] = acc;
      sigma[k] = 4.0 * uniform01(rng);
      c[k] = {uniform01(rng), uniform01(rng), uniform01(rng)};
    }
    const double far = acc + 0.1;
    const Vec3<double> bg{uniform01(rng), uniform01(rng), uniform01(rng)};
    const Vec3<double> up{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
    auto loss = [&](const std::vector<double>& s, const std::vector<Vec3<double>>& col) {
      return dot(composite<double>(t, s, col, far, bg), up);
    };
    CompositeCache<double> cache;
    composite<double>(t, sigma, c, far, bg, &cache);
    const auto g = composite_backward(cache, std::span<const double>(sigma), up);
    for (std::size_t k = 0; k < n; ++k) {
      auto sp = sigma, sm = sigma;
      sp[k] += h;
      sm[k] = std::max(0.0, sm[k] - h);
      const double fd = (loss(sp, c) - loss(sm, c)) / (sp[k] - sm[k]);
      ASSERT_LT(relative_error(g.d_sigma[k], fd, 1e-6), 1e-4) << "trial " << trial << " k " << k;
      for (int a = 0; a < 3; ++a) {
        auto cp = c, cm = c;
        cp[k][a] += h;
        cm[k][a] -= h;
        const double fdc = (loss(sigma, cp) - loss(sigma, cm)) / (2 * h);
        ASSERT_LT(relative_error(g.d_color[k][a], fdc, 1e-6), 1e-4);
      }
    }
  }
}

TEST(ReconstructionLoss, Examples) {
  const std::vector<Vec3<double>> a{{1, 0, 0}}, b{{0, 0, 0}};
  EXPECT_DOUBLE_EQ(reconstruction_loss<double>(a, a), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss<double>(a, b), 1.0);
  const std::vector<Vec3<double>> two{{0, 0, 0}, {0, 0, 0}};
  EXPECT_THROW(reconstruction_loss<double>(a, two), ContractError);
}

TEST(ReconstructionLoss, MatchesElementwiseLoop) {
  std::mt19937_64 rng(8);
  std::vector<Vec3<double>> p(257), q(257);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = {uniform01(rng), uniform01(rng), uniform01(rng)};
    q[i] = {uniform01(rng), uniform01(rng), uniform01(rng)};
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int a = 0; a < 3; ++a) expected += (p[i][a] - q[i][a]) * (p[i][a] - q[i][a]);
  EXPECT_NEAR(reconstruction_loss<double>(p, q), expected, 1e-9);
}

TEST(IntersectAabb, HitAndMiss) {
  Ray r;
  r.origin = {0, 0, 3};
  r.direction = {0, 0, -1};
  const auto hit = intersect_aabb(r, Aabb{});
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->first, 2.0);
  EXPECT_DOUBLE_EQ(hit->second, 4.0);
  r.origin = {5, 0, 3};
  EXPECT_FALSE(intersect_aabb(r, Aabb{}));
}
