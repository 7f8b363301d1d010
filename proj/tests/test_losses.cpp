#include <gtest/gtest.h>

#include <cmath>

#include "facedepth/losses.hpp"
#include "facedepth/ops.hpp"
#include "facedepth/rng.hpp"

using namespace facedepth;

TEST(BceLoss, NearZeroWhenPredictionMatchesTarget) {
  Tensor y({2, 1}, {1.0f - 1e-6f, 1e-6f});
  Tensor t({2, 1}, {1.0f, 0.0f});
  EXPECT_NEAR(bce_loss(y, t).item(), 0.0f, 1e-4f);
}

TEST(BceLoss, HalfPredictionGivesLn2) {
  Tensor y({1, 1}, {0.5f});
  Tensor t({1, 1}, {1.0f});
  EXPECT_NEAR(bce_loss(y, t).item(), std::log(2.0f), 1e-6f);
}

TEST(BceLoss, TwoSampleHandValue) {
  Tensor y({2, 1}, {0.9f, 0.1f});
  Tensor t({2, 1}, {1.0f, 0.0f});
  const float expected = -(std::log(0.9f) + std::log(0.9f)) / 2.0f;  // 0.105360...
  EXPECT_NEAR(bce_loss(y, t).item(), expected, 1e-6f);
  EXPECT_NEAR(bce_loss(y, t).item(), 0.1053605f, 1e-5f);
}

TEST(BceLoss, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(bce_loss(Tensor({1}, {1.5f}), Tensor({1}, {1.0f})), std::invalid_argument);
  EXPECT_THROW(bce_loss(Tensor({1}, {0.0f}), Tensor({1}, {0.0f})), std::invalid_argument);
}

// Finite at logits far beyond float32 sigmoid saturation.
TEST(BceLoss, StableThroughSigmoidAtLargeLogits) {
  Tensor z({4, 1}, {50.0f, -50.0f, 80.0f, -80.0f}, true);
  Tensor t({4, 1}, {0.0f, 1.0f, 1.0f, 0.0f});
  Tensor loss = bce_loss(sigmoid(z), t);
  EXPECT_TRUE(std::isfinite(loss.item()));
  // Mislabeled saturated logits cost |z| nats each; two of four are right.
  EXPECT_NEAR(loss.item(), (50.0f + 50.0f) / 4.0f, 1e-3f);
  loss.backward();
  for (float g : z.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(MseLoss, ZeroAtIdentity) {
  Tensor a({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_FLOAT_EQ(mse_loss(a, a).item(), 0.0f);
}

// Squared Euclidean norm per image, averaged over the batch only.
TEST(MseLoss, SingleImageSquaredNorm) {
  Tensor gen({1, 2}, {0.0f, 0.0f});
  Tensor target({1, 2}, {3.0f, 4.0f});
  EXPECT_FLOAT_EQ(mse_loss(gen, target).item(), 25.0f);
}

TEST(MseLoss, DuplicatingTheBatchKeepsTheValue) {
  Tensor gen({1, 4}, {1, 2, 3, 4});
  Tensor tgt({1, 4}, {0, 0, 1, 1});
  const float single = mse_loss(gen, tgt).item();
  Tensor gen2({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
  Tensor tgt2({2, 4}, {0, 0, 1, 1, 0, 0, 1, 1});
  EXPECT_FLOAT_EQ(mse_loss(gen2, tgt2).item(), single);
}

TEST(MseLoss, ShapeMismatchRejected) {
  EXPECT_THROW(mse_loss(Tensor::zeros({1, 2}), Tensor::zeros({2, 1})), std::invalid_argument);
}
