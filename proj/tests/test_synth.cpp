#include <gtest/gtest.h>

#include <cmath>

#include "facedepth/adam.hpp"
#include "facedepth/dataprep.hpp"
#include "facedepth/losses.hpp"
#include "facedepth/models.hpp"
#include "facedepth/synth.hpp"

using namespace facedepth;

TEST(Synth, SameSeedBitIdentical) {
  const auto a = synth_face_dataset(2, 4, 32, 123);
  const auto b = synth_face_dataset(2, 4, 32, 123);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].gray.px, b[i].gray.px);
    EXPECT_EQ(a[i].depth.px, b[i].depth.px);
    EXPECT_EQ(a[i].yaw, b[i].yaw);
  }
}

TEST(Synth, DifferentSeedsDiffer) {
  const auto a = synth_face_dataset(1, 1, 32, 1);
  const auto b = synth_face_dataset(1, 1, 32, 2);
  EXPECT_NE(a[0].depth.px, b[0].depth.px);
}

TEST(Synth, BackgroundIsFarPlaneAndHeadStrictlyNearer) {
  SynthConfig cfg;
  const auto samples = synth_face_dataset(2, 6, 32, 5);
  const uint16_t far_plane = static_cast<uint16_t>(std::lround(cfg.far_plane_mm));
  for (const auto& s : samples) {
    bool head_seen = false;
    for (uint16_t v : s.depth.px) {
      if (v == far_plane) continue;
      head_seen = true;
      EXPECT_LT(v, far_plane);
      EXPECT_GT(v, 400);
    }
    EXPECT_TRUE(head_seen) << "frame renders an empty head";
  }
}

TEST(Synth, SubjectGeometriesPairwiseDistinct) {
  const int n = 6;
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      const auto ga = synth_subject_geometry(42, a).as_array();
      const auto gb = synth_subject_geometry(42, b).as_array();
      double dist = 0.0;
      for (size_t i = 0; i < ga.size(); ++i) dist += (ga[i] - gb[i]) * (ga[i] - gb[i]);
      EXPECT_GT(dist, 0.0) << "subjects " << a << " and " << b;
    }
  }
}

TEST(Synth, AnnotationsConsistent) {
  const auto samples = synth_face_dataset(3, 10, 32, 9);
  EXPECT_EQ(samples.size(), 30u);
  for (const auto& s : samples) {
    EXPECT_GE(s.sequence_id, 1);
    EXPECT_LE(s.sequence_id, 5);
    EXPECT_GE(s.center_x, 0.0f);
    EXPECT_LT(s.center_x, 32.0f);
    EXPECT_GE(s.center_y, 0.0f);
    EXPECT_LT(s.center_y, 32.0f);
    EXPECT_LE(std::fabs(s.yaw), 30.0f);
    EXPECT_LE(std::fabs(s.pitch), 30.0f);
    EXPECT_LE(std::fabs(s.roll), 30.0f);
    // Constrained sequences vary one angle at a time.
    if (s.sequence_id == 1) EXPECT_EQ(s.pitch, 0.0f);
    if (s.sequence_id == 2) EXPECT_EQ(s.yaw, 0.0f);
    if (s.sequence_id == 3) EXPECT_EQ(s.pitch, 0.0f);
  }
}

TEST(Synth, SizeMustBeDivisibleBySixteen) {
  EXPECT_THROW(synth_face_dataset(1, 1, 30, 1), std::invalid_argument);
  EXPECT_THROW(synth_face_dataset(0, 1, 32, 1), std::invalid_argument);
}

// The gray-to-depth mapping must be learnable: a small conv regressor beats
// the constant mean-depth predictor on held-out frames within 200 steps.
TEST(Synth, MappingLearnableByTinyRegressor) {
  const auto samples = synth_face_dataset(2, 24, 32, 77);
  DepthRange range;
  std::vector<Tensor> gray, depth;
  for (const auto& s : samples) {
    gray.push_back(normalize_gray(s.gray));
    depth.push_back(normalize_depth(s.depth, range));
  }
  const size_t n_train = 40;

  // Per-pixel mean of the training depth maps.
  std::vector<float> mean_img(depth[0].numel(), 0.0f);
  for (size_t i = 0; i < n_train; ++i) {
    for (size_t j = 0; j < mean_img.size(); ++j) mean_img[j] += depth[i].data()[j];
  }
  for (auto& v : mean_img) v /= static_cast<float>(n_train);
  Tensor mean_pred({1, 32, 32}, mean_img);

  // 3-layer conv regressor, width multiplier 1/16 equivalent widths.
  struct Reg {
    Conv2dLayer c1{1, 8, 5, 1, 2}, c2{8, 8, 5, 1, 2}, c3{8, 1, 5, 1, 2};
    Tensor forward(const Tensor& x) {
      return c3.forward(relu(c2.forward(relu(c1.forward(x)))));
    }
  } reg;
  Rng rng(5);
  reg.c1.init_params(rng);
  reg.c2.init_params(rng);
  reg.c3.init_params(rng);
  std::vector<NamedTensor> params;
  reg.c1.collect("c1", params);
  reg.c2.collect("c2", params);
  reg.c3.collect("c3", params);
  AdamState opt = AdamState::for_params(params);

  Rng order(7);
  for (int step = 0; step < 200; ++step) {
    const size_t pick = order.below(n_train);
    std::vector<Tensor> g{gray[pick], gray[(pick + 1) % n_train]};
    std::vector<Tensor> d{depth[pick], depth[(pick + 1) % n_train]};
    zero_grads(params);
    Tensor loss = mse_loss(reg.forward(stack(g)), stack(d));
    loss.backward();
    adam_step(params, opt, 2e-3f, 0.5f, 0.999f, 1e-8f);
  }

  double reg_mse = 0.0, mean_mse = 0.0;
  int held_out = 0;
  for (size_t i = n_train; i < samples.size(); ++i) {
    Tensor pred = reg.forward(stack({gray[i]}));
    reg_mse += mse_loss(pred, stack({depth[i]})).item();
    mean_mse += mse_loss(stack({mean_pred}), stack({depth[i]})).item();
    ++held_out;
  }
  ASSERT_GT(held_out, 0);
  EXPECT_LT(reg_mse / held_out, mean_mse / held_out);
}
