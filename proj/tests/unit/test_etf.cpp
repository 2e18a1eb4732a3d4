#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flowline/etf.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace flowline;

namespace {

FlowField initial_field(const ImageBuf& img) {
  const Gradients g = sobel_gradients(to_grayscale(img));
  return etf_init(g.gradient, g.magnitude);
}

}  // namespace

TEST(Sobel, StepEdgeGradientPointsAcross) {
  const Gradients g = sobel_gradients(fixtures::step_edge(8, 6));
  // Columns 3 and 4 straddle the step: |gx| = 4 * 0.6.
  EXPECT_NEAR(g.gradient.at(3, 2).x, 2.4f, 1e-5);
  EXPECT_NEAR(g.gradient.at(4, 2).x, 2.4f, 1e-5);
  EXPECT_FLOAT_EQ(g.gradient.at(3, 2).y, 0.0f);
  EXPECT_FLOAT_EQ(g.magnitude.at(0, 2), 0.0f);
  // Replicate borders: the top row sees the same step.
  EXPECT_NEAR(g.gradient.at(3, 0).x, 2.4f, 1e-5);
}

TEST(Sobel, RejectsTinyImages) { EXPECT_THROW(sobel_gradients(ImageBuf(2, 5, 1)), std::invalid_argument); }

TEST(EtfInit, TangentIsRotatedGradientWithUnitMaxMagnitude) {
  std::mt19937_64 rng(4);
  const ImageBuf img = fixtures::random_image(rng, 12, 10);
  const Gradients g = sobel_gradients(img);
  const FlowField f = etf_init(g.gradient, g.magnitude);
  float max_mag = 0.0f;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      const Vec2 t = f.tangent(x, y), gr = g.gradient.at(x, y);
      EXPECT_NEAR(dot(t, gr), 0.0f, 1e-5f);
      EXPECT_GE(gr.x * t.y - gr.y * t.x, -1e-6f);  // +90 degrees
      max_mag = std::max(max_mag, f.magnitude(x, y));
    }
  EXPECT_FLOAT_EQ(max_mag, 1.0f);
  EXPECT_TRUE(f.tangents_valid());
}

TEST(EtfInit, FlatImageGivesZeroField) {
  const FlowField f = compute_etf(fixtures::constant(9, 9, 0.3f));
  for (const Vec2 t : f.tangents().data()) EXPECT_TRUE(is_zero(t));
  for (const float m : f.magnitudes().data()) EXPECT_EQ(m, 0.0f);
}

TEST(EtfRefine, MatchesNaiveOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const int w = 16 + static_cast<int>(rng() % 17), h = 16 + static_cast<int>(rng() % 17);
    const FlowField f0 = initial_field(fixtures::random_image(rng, w, h));
    EtfParams p;
    p.kernel_radius = 2 + trial % 4;
    p.eta = trial % 2 ? 1.0f : 2.5f;
    const FlowField fast = etf_refine(f0, p);
    const FlowField slow = oracles::etf_refine(f0, p.kernel_radius, p.eta);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        ASSERT_NEAR(fast.tangent(x, y).x, slow.tangent(x, y).x, 1e-5) << x << "," << y;
        ASSERT_NEAR(fast.tangent(x, y).y, slow.tangent(x, y).y, 1e-5) << x << "," << y;
      }
  }
}

TEST(EtfRefine, ZeroCentreAdoptsNeighbourFlow) {
  // Flat band left of a vertical edge: initial tangents are zero there.
  const FlowField f0 = initial_field(fixtures::step_edge(20, 12));
  ASSERT_TRUE(is_zero(f0.tangent(7, 5)));
  EtfParams p;
  const FlowField f1 = etf_refine(f0, p);
  EXPECT_GT(std::abs(f1.tangent(7, 5).y), 0.99f);
  EXPECT_TRUE(f1.tangents_valid());
  // Magnitudes are carried through unchanged.
  EXPECT_EQ(f1.magnitudes(), f0.magnitudes());
}

TEST(EtfRefine, OutputIsUnitOrZeroAndSignInvariant) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    FlowField f0 = initial_field(fixtures::random_image(rng, 14, 14));
    const FlowField a = etf_refine(f0, {});
    EXPECT_TRUE(a.tangents_valid());
    // Flipping every input tangent flips every output tangent.
    for (Vec2& t : f0.tangents().data()) t = {-t.x, -t.y};
    const FlowField b = etf_refine(f0, {});
    for (std::size_t i = 0; i < a.tangents().size(); ++i) {
      EXPECT_NEAR(a.tangents().data()[i].x, -b.tangents().data()[i].x, 1e-6);
      EXPECT_NEAR(a.tangents().data()[i].y, -b.tangents().data()[i].y, 1e-6);
    }
  }
}

TEST(EtfParams, Validation) {
  EtfParams p;
  p.kernel_radius = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.eta = 0.0f;
  EXPECT_THROW(compute_etf(fixtures::constant(5, 5, 0.1f), p), std::invalid_argument);
  p = {};
  p.iterations = -1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(EtfGeometry, StepEdgeTangentsFollowTheEdge) {
  const FlowField f = compute_etf(fixtures::step_edge(32, 32));
  for (int y = 0; y < 32; ++y)
    for (int x = 14; x <= 17; ++x) EXPECT_GT(std::abs(f.tangent(x, y).y), 0.99f) << x << "," << y;
}

TEST(EtfGeometry, DiskBoundaryIsTangential) {
  const int n = 64;
  const double r = 20.0, c = (n - 1) / 2.0;
  const FlowField f = compute_etf(fixtures::disk(n, r));
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = x - c, dy = y - c, d = std::hypot(dx, dy);
      if (std::abs(d - r) > 1.0) continue;
      const Vec2 t = f.tangent(x, y);
      EXPECT_LT(std::abs(t.x * dx / d + t.y * dy / d), 0.1) << x << "," << y;
    }
}

TEST(EtfGeometry, QuarterTurnEquivariance) {
  const int n = 40;
  const ImageBuf img = fixtures::synthetic_scene(7, n);
  ImageBuf rot(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int ch = 0; ch < 3; ++ch) rot.at(y, n - 1 - x, ch) = img.at(x, y, ch);
  const FlowField a = compute_etf(img), b = compute_etf(rot);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (a.magnitude(x, y) <= 0.1f) continue;
      const Vec2 ta = a.tangent(x, y), tb = b.tangent(y, n - 1 - x);
      sum += std::abs(ta.y * tb.x - ta.x * tb.y);
      ++count;
    }
  ASSERT_GT(count, 50);
  EXPECT_GT(sum / count, 0.99);
}

TEST(Visualize, HueEncodesAxisNotSign) {
  FlowField f(2, 1);
  f.tangent(0, 0) = {0.6f, 0.8f};
  f.tangent(1, 0) = {-0.6f, -0.8f};
  f.magnitude(0, 0) = f.magnitude(1, 0) = 1.0f;
  const ImageBuf v = visualize_field(f);
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(v.at(0, 0, c), v.at(1, 0, c));
}
