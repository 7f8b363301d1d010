#include <gtest/gtest.h>

#include "gradcheck_common.hpp"

// Analytic gradients vs central finite differences of the double-precision
// reference path, five seeds per op.

namespace {
constexpr uint64_t kSeeds[] = {11, 22, 33, 44, 55};
constexpr double kTol = 1e-3;
}  // namespace

TEST(GradCheck, Conv2d) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::conv2d(s), kTol) << "seed " << s;
}

TEST(GradCheck, ConvTranspose2d) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::conv_transpose2d(s), kTol) << "seed " << s;
}

TEST(GradCheck, BatchNormTraining) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::batch_norm2d(s, true), kTol) << "seed " << s;
}

TEST(GradCheck, BatchNormEval) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::batch_norm2d(s, false), kTol) << "seed " << s;
}

TEST(GradCheck, Relu) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::relu(s), kTol) << "seed " << s;
}

TEST(GradCheck, LeakyRelu) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::leaky_relu(s), kTol) << "seed " << s;
}

TEST(GradCheck, Tanh) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::tanh_act(s), kTol) << "seed " << s;
}

TEST(GradCheck, Sigmoid) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::sigmoid(s), kTol) << "seed " << s;
}

TEST(GradCheck, FullyConnected) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::fully_connected(s), kTol) << "seed " << s;
}

TEST(GradCheck, AvgPool2d) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::avg_pool2d(s), kTol) << "seed " << s;
}

TEST(GradCheck, BceThroughSigmoid) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::bce_fused(s), kTol) << "seed " << s;
}

TEST(GradCheck, BceOnProbabilities) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::bce_plain(s), kTol) << "seed " << s;
}

TEST(GradCheck, Mse) {
  for (uint64_t s : kSeeds) EXPECT_LT(gradcheck::mse(s), kTol) << "seed " << s;
}
