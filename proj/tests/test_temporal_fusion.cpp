#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pcfuse/temporal_fusion.hpp"
#include "test_support.hpp"

using namespace pcfuse;
using pcfuse::test::Rng;

namespace {

PriorProjection prior_from(const Image& depth, const Image& color) { return bootstrap_prior(depth, color); }

}  // namespace

TEST(ResidualMask, IdenticalPriorGivesZero) {
  Rng rng(1);
  const Image d = pcfuse::test::random_image(rng, 5, 4, 1, 1, 3);
  const Image c = pcfuse::test::random_image(rng, 5, 4, 3, 0, 1);
  const Image alpha = residual_mask(d, prior_from(d, c), c);
  for (double a : alpha.data()) EXPECT_EQ(a, 0.0);
}

TEST(ResidualMask, AllHolePriorGivesOne) {
  const Image d = constant_image(4, 3, 2.0);
  const Image alpha = residual_mask(d, PriorProjection(4, 3), Image(4, 3, 3, 0.2));
  for (double a : alpha.data()) EXPECT_EQ(a, 1.0);
}

TEST(ResidualMask, SingleDepthOutlier) {
  Image d_t = constant_image(3, 3, 1.0);
  d_t(2, 1) = 1.3;
  const Image c(3, 3, 3, 0.4);
  const Image alpha = residual_mask(d_t, prior_from(constant_image(3, 3, 1.0), c), c, 0.2, 0.1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) EXPECT_EQ(alpha(x, y), (x == 2 && y == 1) ? 1.0 : 0.0);
}

TEST(ResidualMask, ColorResidual) {
  const Image d = constant_image(2, 1, 1.0);
  const Image c_p(2, 1, 3, 0.5);
  Image c_t = c_p;
  c_t(1, 0, 0) = 0.5 + 0.11;  // RGB distance 0.11 > 0.1
  c_t(0, 0, 2) = 0.5 + 0.09;
  const Image alpha = residual_mask(d, prior_from(d, c_p), c_t, 0.1, 0.1);
  EXPECT_EQ(alpha(0, 0), 0.0);
  EXPECT_EQ(alpha(1, 0), 1.0);
}

TEST(OracleMask, ObservationExact) {
  const Image g = constant_image(3, 2, 2.0);
  const Image alpha = oracle_mask(g, constant_image(3, 2, 2.5), g);
  for (double a : alpha.data()) EXPECT_EQ(a, 1.0);
}

TEST(OracleMask, PriorExact) {
  const Image g = constant_image(3, 2, 2.0);
  const Image alpha = oracle_mask(constant_image(3, 2, 1.5), g, g);
  for (double a : alpha.data()) EXPECT_EQ(a, 0.0);
}

TEST(OracleMask, MixedTwoByTwo) {
  Image d_t(2, 2), d_p(2, 2), g(2, 2);
  // pixel:        (0,0)  (1,0)  (0,1)  (1,1)
  const double t[] = {1.0, 2.0, 3.0, 4.0};
  const double p[] = {1.5, 2.1, 2.0, 4.0};
  const double gt[] = {1.1, 2.2, 2.2, 4.0};
  for (int i = 0; i < 4; ++i) {
    d_t(i % 2, i / 2) = t[i];
    d_p(i % 2, i / 2) = p[i];
    g(i % 2, i / 2) = gt[i];
  }
  const Image alpha = oracle_mask(d_t, d_p, g);
  for (int i = 0; i < 4; ++i) {
    const double expected = std::abs(t[i] - gt[i]) < std::abs(p[i] - gt[i]) ? 1.0 : 0.0;
    EXPECT_EQ(alpha(i % 2, i / 2), expected) << i;
  }
  EXPECT_EQ(alpha(0, 0), 1.0);
  EXPECT_EQ(alpha(1, 0), 0.0);
  EXPECT_EQ(alpha(0, 1), 0.0);
  EXPECT_EQ(alpha(1, 1), 0.0);  // equal errors keep the prior
}

TEST(OracleMask, HolesAndMissingGroundTruth) {
  Image d_t = constant_image(3, 1, 1.0), d_p = constant_image(3, 1, 1.0), g = constant_image(3, 1, 1.0);
  d_p(0, 0) = kHole;
  d_t(1, 0) = kHole;
  g(2, 0) = kHole;
  const Image alpha = oracle_mask(d_t, d_p, g);
  EXPECT_EQ(alpha(0, 0), 1.0);
  EXPECT_EQ(alpha(1, 0), 0.0);
  EXPECT_EQ(alpha(2, 0), 1.0);
  EXPECT_THROW(oracle_mask(d_t, d_p, Image{}), std::invalid_argument);
}

TEST(TemporalBlend, ExtremesOfAlpha) {
  Rng rng(2);
  const Image d_t = pcfuse::test::random_image(rng, 4, 4, 1, 1, 5);
  const Image d_p = pcfuse::test::random_image(rng, 4, 4, 1, 1, 5);
  EXPECT_TRUE(pcfuse::test::same_bits(temporal_blend(d_t, d_p, constant_image(4, 4, 1.0)), d_t));
  EXPECT_TRUE(pcfuse::test::same_bits(temporal_blend(d_t, d_p, constant_image(4, 4, 0.0)), d_p));
}

TEST(TemporalBlend, QuarterAlpha) {
  const Image out = temporal_blend(constant_image(1, 1, 4.0), constant_image(1, 1, 8.0), constant_image(1, 1, 0.25));
  EXPECT_DOUBLE_EQ(out(0, 0), 7.0);
}

TEST(TemporalBlend, HoleOnEitherSide) {
  Image d_t = constant_image(3, 1, 2.0), d_p = constant_image(3, 1, 6.0);
  d_p(0, 0) = kHole;
  d_t(1, 0) = kHole;
  d_t(2, 0) = kHole;
  d_p(2, 0) = kHole;
  const Image out = temporal_blend(d_t, d_p, constant_image(3, 1, 0.0));
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(1, 0), 6.0);
  EXPECT_EQ(out(2, 0), kHole);
}

TEST(TemporalBlend, ConvexCombination) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Image d_t = pcfuse::test::random_image(rng, 6, 5, 1, 0.1, 20);
    const Image d_p = pcfuse::test::random_image(rng, 6, 5, 1, 0.1, 20);
    const Image alpha = pcfuse::test::random_image(rng, 6, 5, 1, 0, 1);
    const Image d_f = temporal_blend(d_t, d_p, alpha);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        EXPECT_GE(d_f(x, y), std::min(d_t(x, y), d_p(x, y)));
        EXPECT_LE(d_f(x, y), std::max(d_t(x, y), d_p(x, y)));
      }
  }
}

TEST(TemporalBlend, StaticSceneIsIdempotent) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Image d = pcfuse::test::random_image(rng, 5, 5, 1, 0.1, 20);
    const Image alpha = pcfuse::test::random_image(rng, 5, 5, 1, 0, 1);
    const Image d_f = temporal_blend(d, d, alpha);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) EXPECT_NEAR(d_f(x, y), d(x, y), 1e-12 * d(x, y));
  }
}

TEST(TemporalBlend, OracleMaskPicksPointwiseBetter) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Image g = pcfuse::test::random_image(rng, 6, 6, 1, 1, 5);
    Image d_t = g, d_p = g;
    for (double& v : d_t.data()) v += rng.uniform(-0.5, 0.5);
    for (double& v : d_p.data()) v += rng.uniform(-0.5, 0.5);
    const Image d_f = temporal_blend(d_t, d_p, oracle_mask(d_t, d_p, g));
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const double e = std::abs(d_f(x, y) - g(x, y));
        EXPECT_LE(e, std::abs(d_t(x, y) - g(x, y)));
        EXPECT_LE(e, std::abs(d_p(x, y) - g(x, y)));
      }
  }
}

TEST(BootstrapPrior, FirstFrameBlendIsObservation) {
  Rng rng(6);
  Image d0 = pcfuse::test::random_image(rng, 5, 4, 1, 1, 4);
  d0(1, 2) = kHole;
  const Image c0 = pcfuse::test::random_image(rng, 5, 4, 3, 0, 1);
  const PriorProjection prior = bootstrap_prior(d0, c0);
  EXPECT_TRUE(prior.is_hole(1, 2));
  EXPECT_EQ(prior.confidence(1, 2), 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      if (x == 1 && y == 2) continue;
      EXPECT_EQ(prior.confidence(x, y), kBootstrapConfidence);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(prior.color(x, y, c), c0(x, y, c));
    }
  for (int trial = 0; trial < 5; ++trial) {
    const Image alpha = pcfuse::test::random_image(rng, 5, 4, 1, 0, 1);
    const Image d_f = temporal_blend(d0, prior.depth, alpha);
    EXPECT_TRUE(pcfuse::test::same_bits(d_f, d0));
  }
}

TEST(MaskProvider, ForcedOneAtPriorHoles) {
  Image alpha = constant_image(3, 1, 0.0);
  PriorProjection prior = bootstrap_prior(constant_image(3, 1, 1.0), Image(3, 1, 3, 0.0));
  prior.clear_pixel(2, 0);
  force_alpha_at_prior_holes(alpha, prior);
  EXPECT_EQ(alpha(0, 0), 0.0);
  EXPECT_EQ(alpha(2, 0), 1.0);
}

TEST(MaskProvider, FileMaskIsClampedToUnitRange) {
  Image file(3, 1);
  file(0, 0) = -0.5;
  file(1, 0) = 0.25;
  file(2, 0) = 7.0;
  const Image d = constant_image(3, 1, 1.0);
  const Image c(3, 1, 3, 0.0);
  const PriorProjection prior = bootstrap_prior(d, c);
  MaskInputs in;
  in.d_t = &d;
  in.c_t = &c;
  in.prior = &prior;
  in.file_mask = &file;
  const Image alpha = MaskProvider::file().compute(in);
  EXPECT_EQ(alpha(0, 0), 0.0);
  EXPECT_EQ(alpha(1, 0), 0.25);
  EXPECT_EQ(alpha(2, 0), 1.0);
}

TEST(MaskProvider, FileMaskFromLoaderTemplate) {
  const Image d = constant_image(2, 2, 1.0);
  const Image c(2, 2, 3, 0.0);
  const PriorProjection prior = bootstrap_prior(d, c);
  MaskProvider p = MaskProvider::file("masks/%06d.pfm");
  std::string requested;
  p.loader = [&](const std::string& path) {
    requested = path;
    return constant_image(2, 2, 0.5);
  };
  MaskInputs in;
  in.frame = 12;
  in.d_t = &d;
  in.c_t = &c;
  in.prior = &prior;
  const Image alpha = p.compute(in);
  EXPECT_EQ(requested, "masks/000012.pfm");
  EXPECT_EQ(alpha(1, 1), 0.5);
}

TEST(MaskProvider, OracleWithoutGroundTruthFails) {
  const Image d = constant_image(2, 2, 1.0);
  const Image c(2, 2, 3, 0.0);
  const PriorProjection prior = bootstrap_prior(d, c);
  MaskInputs in;
  in.d_t = &d;
  in.c_t = &c;
  in.prior = &prior;
  EXPECT_THROW(MaskProvider::oracle().compute(in), std::invalid_argument);
}

TEST(MaskProvider, BlurStaysInUnitRange) {
  Rng rng(7);
  Image alpha(6, 6);
  for (double& a : alpha.data()) a = rng.uniform(0, 1) < 0.5 ? 0.0 : 1.0;
  const Image b = blur_mask(alpha);
  for (double v : b.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const Image ones = blur_mask(constant_image(4, 4, 1.0));
  for (double v : ones.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}
