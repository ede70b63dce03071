#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "pcfuse/pcfuse.hpp"
#include "test_support.hpp"

namespace pcfuse {
namespace {

using test::same_bits;
using test::synthetic_loader;

SyntheticSequence small_sequence(SceneKind scene = SceneKind::moving_sphere, int frames = 5, double noise = 0.02) {
  return make_synthetic({scene, frames, 24, 20, noise, 3});
}

TEST(Pipeline, FirstFrameReproducesExactInput) {
  const SyntheticSequence s = make_synthetic({SceneKind::moving_sphere, 1, 32, 32, 0.0, 1});
  PipelineConfig cfg;
  cfg.mask = MaskProvider::oracle();
  FusionState state(s.intrinsics);
  const FrameRecord rec = run_frame(state, synthetic_loader(s)(0), cfg);
  for (std::size_t i = 0; i < rec.output.data().size(); ++i) {
    const double g = s.ground_truth[0].data()[i];
    ASSERT_NEAR(rec.output.data()[i], g, 1e-12 * g);
  }
  EXPECT_EQ(state.next_frame, 1);
  EXPECT_EQ(state.cloud.size(), rec.output.pixel_count());
}

TEST(Pipeline, ZeroFileMaskEqualsNoTemporal) {
  const SyntheticSequence s = small_sequence();
  const int n = static_cast<int>(s.depths.size());
  PipelineConfig zero;
  zero.mask = MaskProvider::file("zero/%06d.pfm");
  zero.mask.loader = [&](const std::string&) { return Image(24, 20, 1, 0.0); };
  PipelineConfig nt;
  nt.ablation = Ablation::no_temporal;
  const auto a = run_sequence(s.intrinsics, n, synthetic_loader(s), zero);
  const auto b = run_sequence(s.intrinsics, n, synthetic_loader(s), nt);
  for (int t = 0; t < n; ++t) EXPECT_TRUE(same_bits(a.outputs[t], b.outputs[t])) << "frame " << t;
  EXPECT_EQ(a.final_cloud_size, b.final_cloud_size);
}

TEST(Pipeline, RunsAreDeterministic) {
  const SyntheticSequence s = small_sequence();
  const int n = static_cast<int>(s.depths.size());
  const auto a = run_sequence(s.intrinsics, n, synthetic_loader(s), {});
  const auto b = run_sequence(s.intrinsics, n, synthetic_loader(s), {});
  for (int t = 0; t < n; ++t) EXPECT_TRUE(same_bits(a.outputs[t], b.outputs[t]));
  EXPECT_EQ(a.final_cloud_size, b.final_cloud_size);
}

TEST(Pipeline, OutputsDoNotDependOnLaterFrames) {
  const SyntheticSequence s = small_sequence(SceneKind::moving_sphere, 6);
  std::vector<int> order;
  auto load = [&](int t) {
    order.push_back(t);
    return synthetic_loader(s)(t);
  };
  const auto full = run_sequence(s.intrinsics, 6, load, {});
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4, 5}));

  // Later frames replaced by garbage must not change earlier outputs.
  auto scrambled = [&](int t) {
    FrameInputs in = synthetic_loader(s)(t);
    if (t >= 4) in.depth = Image(24, 20, 1, 0.3);
    return in;
  };
  const auto other = run_sequence(s.intrinsics, 6, scrambled, {});
  const auto cut = run_sequence(s.intrinsics, 4, synthetic_loader(s), {});
  for (int t = 0; t < 4; ++t) {
    EXPECT_TRUE(same_bits(full.outputs[t], cut.outputs[t])) << "frame " << t;
    EXPECT_TRUE(same_bits(full.outputs[t], other.outputs[t])) << "frame " << t;
  }
}

TEST(Pipeline, Errors) {
  const SyntheticSequence s = small_sequence(SceneKind::static_plane, 2);
  try {
    run_sequence(s.intrinsics, 0, synthetic_loader(s), {});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_EQ(std::string(e.what()), "empty sequence");
  }
  FusionState state(s.intrinsics);
  try {
    run_frame(state, synthetic_loader(s)(1), {});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1: out of order, expected frame 0"), std::string::npos);
  }
  PipelineConfig oracle;
  oracle.mask = MaskProvider::oracle();
  EXPECT_THROW(run_sequence(s.intrinsics, 2, synthetic_loader(s, false), oracle), std::invalid_argument);
  EXPECT_NO_THROW(run_sequence(s.intrinsics, 2, synthetic_loader(s, false), {}));

  FrameInputs no_pose = synthetic_loader(s)(0);
  no_pose.pose.reset();
  EXPECT_THROW(run_frame(state, no_pose, {}), std::invalid_argument);
  FrameInputs gray = synthetic_loader(s)(0);
  gray.color = Image(24, 20, 1);
  EXPECT_THROW(run_frame(state, gray, {}), std::invalid_argument);

  PipelineConfig bad;
  bad.box_size = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.background_ratio = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Pipeline, RecordInvariants) {
  const SyntheticSequence s = small_sequence();
  run_sequence(s.intrinsics, 5, synthetic_loader(s), {}, [&](const FrameRecord& rec, const FusionState& state) {
    for (std::size_t i = 0; i < rec.alpha.data().size(); ++i) {
      const double a = rec.alpha.data()[i];
      ASSERT_GE(a, 0.0);
      ASSERT_LE(a, 1.0);
      if (!is_valid_depth(rec.prior.depth.data()[i])) { ASSERT_EQ(a, 1.0); }
      ASSERT_GE(rec.beta.data()[i], 0.0);
      ASSERT_GT(rec.gamma.data()[i], 0.0);
      ASSERT_LE(rec.gamma.data()[i], 1.0);
    }
    for (double c : state.cloud.confidence()) ASSERT_GE(c, kDefaultPruneEpsilon);
  });
}

TEST(Pipeline, NoSpatialOutputIsTemporalBlend) {
  const SyntheticSequence s = small_sequence();
  PipelineConfig cfg;
  cfg.ablation = Ablation::no_spatial;
  run_sequence(s.intrinsics, 5, synthetic_loader(s), cfg,
               [](const FrameRecord& rec, const FusionState&) { EXPECT_TRUE(same_bits(rec.output, rec.d_f)); });
}

TEST(Pipeline, NoGlobalCloudKeepsOnlyLastFrame) {
  const SyntheticSequence s = small_sequence();
  PipelineConfig cfg;
  cfg.ablation = Ablation::no_global_pc;
  run_sequence(s.intrinsics, 5, synthetic_loader(s), cfg, [](const FrameRecord& rec, const FusionState& state) {
    std::size_t valid = 0;
    for (double d : rec.output.data()) valid += is_valid_depth(d);
    EXPECT_EQ(state.cloud.size(), valid);
    double want = 0.0, got = 0.0;
    for (std::size_t i = 0; i < rec.output.data().size(); ++i)
      if (is_valid_depth(rec.output.data()[i])) want += rec.beta.data()[i] + rec.gamma.data()[i];
    for (double c : state.cloud.confidence()) {
      EXPECT_GT(c, 0.0);
      got += c;
    }
    EXPECT_NEAR(got, want, 1e-9 * want);
  });
}

TEST(Pipeline, InverseDepthBlendsReciprocals) {
  const SyntheticSequence s = small_sequence();
  PipelineConfig cfg;
  cfg.ablation = Ablation::no_spatial;
  cfg.parameterization = DepthParam::inverse_depth;
  run_sequence(s.intrinsics, 5, synthetic_loader(s), cfg, [&](const FrameRecord& rec, const FusionState&) {
    const Image& d_t = s.depths[rec.frame];
    for (std::size_t i = 0; i < rec.output.data().size(); ++i) {
      const double a = rec.alpha.data()[i];
      const double dp = rec.prior.depth.data()[i];
      if (!is_valid_depth(dp)) continue;
      const double inv = a / d_t.data()[i] + (1.0 - a) / dp;
      ASSERT_NEAR(rec.output.data()[i], 1.0 / inv, 1e-12 / inv);
    }
  });
  cfg.ablation = Ablation::full;
  const auto r = run_sequence(s.intrinsics, 5, synthetic_loader(s), cfg);
  for (const Image& out : r.outputs)
    for (double d : out.data()) ASSERT_TRUE(is_valid_depth(d));
}

TEST(Pipeline, LiteralGatePassesObservationThroughWhereStatic) {
  const SyntheticSequence s = small_sequence(SceneKind::static_plane, 3);
  PipelineConfig cfg;
  cfg.beta_gate = BetaGate::literal;
  cfg.mask = MaskProvider::file();
  run_sequence(
      s.intrinsics, 3,
      [&](int t) {
        FrameInputs in = synthetic_loader(s)(t);
        in.mask = Image(24, 20, 1, 0.0);
        return in;
      },
      cfg, [&](const FrameRecord& rec, const FusionState&) {
        for (std::size_t i = 0; i < rec.output.data().size(); ++i) {
          if (rec.alpha.data()[i] != 0.0) continue;
          const double d = s.depths[rec.frame].data()[i];
          ASSERT_NEAR(rec.output.data()[i], d, 1e-12 * d);
        }
      });
}

TEST(Pipeline, StaticNoiseIsReduced) {
  const SyntheticSequence s = make_synthetic({SceneKind::static_plane, 10, 32, 32, 0.05, 4});
  const auto r = run_sequence(s.intrinsics, 10, synthetic_loader(s, false), {});
  const MetricReport out = test::evaluate_synthetic(s, r.outputs);
  const MetricReport in = test::evaluate_synthetic(s, s.depths);
  EXPECT_LT(*out.opw, *in.opw);
  EXPECT_LT(*out.rae, *in.rae);
}

TEST(Pipeline, AblationNamesRoundTrip) {
  for (Ablation a : {Ablation::full, Ablation::no_temporal, Ablation::no_spatial, Ablation::no_global_pc}) {
    EXPECT_EQ(parse_ablation(to_string(a)), a);
  }
  EXPECT_THROW(parse_ablation("nope"), std::invalid_argument);
}

}  // namespace
}  // namespace pcfuse
