#include <gtest/gtest.h>

#include <random>

#include "hashfield/field_grid.hpp"
#include "support/oracles.hpp"

using namespace hashfield;
using hashfield::testing::brute_force_hash;

namespace {

HashConfig single_level(std::uint32_t T, std::uint32_t resolution = 16) {
  HashConfig c;
  c.table_size = T;
  c.levels = 1;
  c.base_resolution = resolution;
  return c;
}

}  // namespace

TEST(HashIndex, PinnedExamples) {
  const HashConfig c = single_level(1u << 16);
  EXPECT_EQ(hash_index({0, 0, 0}, c), 0u);
  EXPECT_EQ(hash_index({1, 0, 0}, c), 1u);
  EXPECT_EQ(hash_index({0, 1, 0}, c), 31153u);
  EXPECT_EQ(hash_index({0, 0, 1}, c), 22421u);
}

TEST(HashIndex, MatchesBruteForceOnFullCube) {
  for (std::uint32_t T : {1u << 10, 1u << 16}) {
    const HashConfig c = single_level(T);
    for (std::uint32_t x = 0; x < 64; ++x)
      for (std::uint32_t y = 0; y < 64; ++y)
        for (std::uint32_t z = 0; z < 64; ++z) {
          const std::uint32_t h = hash_index({x, y, z}, c);
          ASSERT_LT(h, T);
          ASSERT_EQ(h, brute_force_hash(x, y, z, T));
        }
  }
}

TEST(HashIndex, EvenXNeighbourDiffersInLowestBit) {
  const HashConfig c = single_level(1u << 16);
  for (std::uint32_t x = 0; x < 64; x += 2)
    for (std::uint32_t y = 0; y < 64; ++y)
      for (std::uint32_t z = 0; z < 64; ++z)
        ASSERT_EQ(hash_index({x + 1, y, z}, c) ^ hash_index({x, y, z}, c), 1u);
}

TEST(HashConfig, RejectsNonPowerOfTwo) {
  HashConfig c;
  c.table_size = 1000;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(NeighborCube, OriginHasUnitWeightOnVertexZero) {
  const auto cube = neighbor_cube(Vec3<double>{0, 0, 0}, 0, single_level(1u << 14));
  EXPECT_DOUBLE_EQ(cube.weights[0], 1.0);
  for (int v = 1; v < 8; ++v) EXPECT_DOUBLE_EQ(cube.weights[v], 0.0);
}

TEST(NeighborCube, CellCenterSplitsEvenly) {
  // resolution 3 -> cells of width 0.5; (0.25,0.25,0.25) is the centre of the first cell
  const auto cube = neighbor_cube(Vec3<double>{0.25, 0.25, 0.25}, 0, single_level(1u << 14, 3));
  for (double w : cube.weights) EXPECT_NEAR(w, 0.125, 1e-12);
}

TEST(NeighborCube, AxisAlignedSplit) {
  // resolution 2: one cell spanning [0,1]
  const auto cube = neighbor_cube(Vec3<double>{0.25, 0, 0}, 0, single_level(1u << 14, 2));
  EXPECT_NEAR(cube.weights[0], 0.75, 1e-12);
  EXPECT_NEAR(cube.weights[1], 0.25, 1e-12);
  for (int v = 2; v < 8; ++v) EXPECT_NEAR(cube.weights[v], 0.0, 1e-12);
}

TEST(NeighborCube, GroupsDifferOnlyInX) {
  const HashConfig c = single_level(1u << 16, 64);
  const auto cube = neighbor_cube(Vec3<double>{0.31, 0.72, 0.05}, 0, c);
  for (int g = 0; g < 4; ++g) {
    const auto a = cube.vertex_coords[2 * g], b = cube.vertex_coords[2 * g + 1];
    EXPECT_EQ(a.x + 1, b.x);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.z, b.z);
  }
}

TEST(NeighborCube, FarFaceStaysInsideLattice) {
  const HashConfig c = single_level(1u << 14, 16);
  const auto cube = neighbor_cube(Vec3<double>{1, 1, 1}, 0, c);
  for (const auto& v : cube.vertex_coords) {
    EXPECT_LE(v.x, 15u);
    EXPECT_LE(v.y, 15u);
    EXPECT_LE(v.z, 15u);
  }
  EXPECT_NEAR(cube.weights[7], 1.0, 1e-6);
}

TEST(NeighborCube, OutsideUnitCubeIsDomainError) {
  const HashConfig c = single_level(1u << 14);
  EXPECT_THROW(neighbor_cube(Vec3<double>{1.0001, 0.5, 0.5}, 0, c), DomainError);
  EXPECT_THROW(neighbor_cube(Vec3<double>{0.5, -0.1, 0.5}, 0, c), DomainError);
  EXPECT_THROW(neighbor_cube(Vec3<double>{0.5, 0.5, std::nan("")}, 0, c), DomainError);
}

TEST(NeighborCube, WeightsPartitionUnity) {
  std::mt19937_64 rng(3);
  HashConfig c;
  for (int i = 0; i < 10000; ++i) {
    const Vec3<float> p{static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng)),
                        static_cast<float>(uniform01(rng))};
    for (std::uint32_t l = 0; l < c.levels; ++l) {
      const auto cube = neighbor_cube(p, l, c);
      float s = 0;
      for (float w : cube.weights) s += w;
      ASSERT_NEAR(s, 1.0f, 1e-6f);
    }
  }
}

TEST(Interpolate, ConstantTableGivesConstant) {
  HashConfig c;
  EmbeddingTable<double> t(c);
  for (auto& v : t.data()) v = 0.37;
  const auto e = interpolate(Vec3<double>{0.2, 0.9, 0.4}, t);
  ASSERT_EQ(e.size(), c.embedding_dim());
  for (double v : e) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Interpolate, OnVertexReturnsStoredEmbedding) {
  const HashConfig c = single_level(1u << 14, 5);  // vertices at multiples of 0.25
  auto t = EmbeddingTable<double>::random(c, 9, 1.0);
  const auto e = interpolate(Vec3<double>{0.5, 0.25, 0.75}, t);
  const auto stored = t.entry(0, hash_index({2, 1, 3}, c));
  EXPECT_NEAR(e[0], stored[0], 1e-12);
  EXPECT_NEAR(e[1], stored[1], 1e-12);
}

TEST(Interpolate, MatchesDirectWeightedSum) {
  // two-entry table: every vertex hashes to 0 or 1
  HashConfig c = single_level(2, 2);
  c.features_per_entry = 1;
  EmbeddingTable<double> t(c);
  t.entry(0, 0)[0] = 3.0;
  t.entry(0, 1)[0] = -1.0;
  const Vec3<double> p{0.3, 0.6, 0.8};
  double expected = 0.0;
  for (std::uint32_t v = 0; v < 8; ++v) {
    const std::uint32_t bx = v & 1u, by = (v >> 1) & 1u, bz = (v >> 2) & 1u;
    const double w = (bx ? p.x : 1 - p.x) * (by ? p.y : 1 - p.y) * (bz ? p.z : 1 - p.z);
    const std::uint32_t h = static_cast<std::uint32_t>(brute_force_hash(bx, by, bz, 2));
    expected += w * (h == 0 ? 3.0 : -1.0);
  }
  EXPECT_NEAR(interpolate(p, t)[0], expected, 1e-12);
}

TEST(Interpolate, EmitsEightReadsPerLevel) {
  HashConfig c;
  auto t = EmbeddingTable<float>::random(c, 1);
  MemoryTraceSink sink;
  TraceTag tag{&sink, 4, Branch::Color, 77};
  interpolate(Vec3<float>{0.3f, 0.3f, 0.3f}, t, &tag);
  ASSERT_EQ(sink.records().size(), 8u * c.levels);
  for (std::size_t i = 0; i < sink.records().size(); ++i) {
    const auto& r = sink.records()[i];
    EXPECT_EQ(r.phase, Phase::Forward);
    EXPECT_EQ(r.kind, AccessKind::Read);
    EXPECT_EQ(r.level, i / 8);
    EXPECT_EQ(r.vertex, i % 8);
    EXPECT_EQ(r.point_id, 77u);
    EXPECT_EQ(r.iteration, 4u);
    EXPECT_LT(r.address, c.table_size);
  }
}

TEST(InterpolateBackward, ZeroUpstreamGivesZeroContributions) {
  HashConfig c;
  auto t = EmbeddingTable<double>::random(c, 2);
  std::vector<double> g(c.embedding_dim(), 0.0);
  for (const auto& contrib : interpolate_backward(Vec3<double>{0.4, 0.1, 0.8}, std::span<const double>(g), t))
    for (double v : contrib.gradient) EXPECT_EQ(v, 0.0);
}

TEST(InterpolateBackward, OnVertexSingleNonzero) {
  const HashConfig c = single_level(1u << 14, 5);
  auto t = EmbeddingTable<double>::random(c, 2);
  const std::vector<double> g{0.5, -2.0};
  std::size_t nonzero = 0;
  for (const auto& contrib : interpolate_backward(Vec3<double>{0.5, 0.25, 0.75}, std::span<const double>(g), t)) {
    if (contrib.gradient[0] == 0.0 && contrib.gradient[1] == 0.0) continue;
    ++nonzero;
    EXPECT_EQ(contrib.address, hash_index({2, 1, 3}, c));
    EXPECT_DOUBLE_EQ(contrib.gradient[0], 0.5);
    EXPECT_DOUBLE_EQ(contrib.gradient[1], -2.0);
  }
  EXPECT_EQ(nonzero, 1u);
}

TEST(InterpolateBackward, DimensionMismatchIsContractError) {
  HashConfig c;
  auto t = EmbeddingTable<double>::random(c, 2);
  std::vector<double> g(3, 1.0);
  EXPECT_THROW(interpolate_backward(Vec3<double>{0.5, 0.5, 0.5}, std::span<const double>(g), t), ContractError);
}

TEST(InterpolateBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  HashConfig c;
  c.table_size = 1u << 10;
  c.levels = 2;
  c.base_resolution = 8;
  for (int trial = 0; trial < 100; ++trial) {
    auto t = EmbeddingTable<double>::random(c, 100 + trial, 1.0);
    const Vec3<double> p{uniform01(rng), uniform01(rng), uniform01(rng)};
    std::vector<double> up(c.embedding_dim());
    for (auto& v : up) v = 2.0 * uniform01(rng) - 1.0;
    // L(table) = up . interpolate(p, table); dense analytic gradient
    std::vector<double> analytic(t.data().size(), 0.0);
    interpolate_backward_accumulate(p, std::span<const double>(up), t, std::span<double>(analytic));
    auto loss = [&](const EmbeddingTable<double>& tab) {
      const auto e = interpolate(p, tab);
      double s = 0;
      for (std::size_t i = 0; i < e.size(); ++i) s += up[i] * e[i];
      return s;
    };
    for (const auto& contrib : interpolate_backward(p, std::span<const double>(up), t)) {
      for (std::uint32_t f = 0; f < c.features_per_entry; ++f) {
        const std::size_t idx = t.offset(contrib.level, contrib.address) + f;
        const double h = 1e-5;
        auto tp = t, tm = t;
        tp.data()[idx] += h;
        tm.data()[idx] -= h;
        const double fd = (loss(tp) - loss(tm)) / (2 * h);
        ASSERT_LT(hashfield::testing::relative_error(analytic[idx], fd, 1e-6), 1e-4) << "trial " << trial;
      }
    }
  }
}
