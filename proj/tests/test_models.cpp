#include <gtest/gtest.h>

#include <cmath>

#include "facedepth/losses.hpp"
#include "facedepth/models.hpp"
#include "facedepth/rng.hpp"
#include "ref_ops.hpp"

using namespace facedepth;

namespace {

Tensor random_image_batch(int n, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<size_t>(n) * size * size);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor({n, 1, size, size}, std::move(v));
}

}  // namespace

TEST(Generator, ReferenceShapeLadderAt96) {
  GeneratorNet g(1.0f / 8.0f);  // full-width ladder is covered by the acceptance suite
  g.init_weights(1);
  ShapeTrace trace;
  Tensor out = g.forward(random_image_batch(2, 96, 3), false, &trace);
  ASSERT_EQ(trace.size(), 9u);
  const int spatial[] = {48, 24, 12, 6, 12, 24, 48, 96, 96};
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(trace[i][2], spatial[i]) << "stage " << i;
    EXPECT_EQ(trace[i][3], spatial[i]) << "stage " << i;
  }
  EXPECT_EQ(out.shape(), (std::vector<int>{2, 1, 96, 96}));
}

TEST(Generator, BottleneckIsSixteenthResolution) {
  GeneratorNet g(1.0f / 8.0f);
  g.init_weights(2);
  ShapeTrace trace;
  g.forward(random_image_batch(2, 32, 4), false, &trace);
  EXPECT_EQ(trace[3][2], 2);  // 32 / 16
  EXPECT_EQ(trace[3][3], 2);
  EXPECT_EQ(trace.back()[2], 32);
}

TEST(Generator, OutputBoundedByTanh) {
  GeneratorNet g(1.0f / 16.0f);
  g.init_weights(5);
  Tensor out = g.forward(random_image_batch(2, 32, 6), true);
  for (float v : out.data()) {
    EXPECT_LE(std::fabs(v), 1.0f);
  }
}

TEST(Generator, IndivisibleExtentRejectedBeforeCompute) {
  GeneratorNet g(1.0f / 16.0f);
  g.init_weights(1);
  EXPECT_THROW(g.forward(Tensor::zeros({2, 1, 24, 24}), false), std::invalid_argument);
}

TEST(Discriminator, PerItemScalarInOpenInterval) {
  DiscriminatorNet d(1.0f / 8.0f, 32);
  d.init_weights(9);
  Tensor out = d.forward(random_image_batch(4, 32, 10), false);
  EXPECT_EQ(out.shape(), (std::vector<int>{4, 1}));
  for (float v : out.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Discriminator, FreshNetScoresNearHalfOnAverage) {
  DiscriminatorNet d(1.0f / 8.0f, 32);
  d.init_weights(11);
  double acc = 0.0;
  for (int i = 0; i < 25; ++i) {
    Tensor out = d.forward(random_image_batch(4, 32, 100 + i), false);
    for (float v : out.data()) acc += v;
  }
  EXPECT_LT(std::fabs(acc / 100.0 - 0.5), 0.15);
}

TEST(Discriminator, WrongChannelCountRejected) {
  DiscriminatorNet d(1.0f / 8.0f, 32);
  d.init_weights(1);
  EXPECT_THROW(d.forward(Tensor::zeros({2, 3, 32, 32}), false), std::invalid_argument);
}

// "Shares the same architecture": conv stack weight shapes equal the
// generator encoder's at the same multiplier.
TEST(Discriminator, EncoderShapesMatchGenerator) {
  const float m = 0.25f;
  GeneratorNet g(m);
  DiscriminatorNet d(m, 96);
  ASSERT_EQ(g.encoder.size(), d.encoder.size());
  for (size_t i = 0; i < g.encoder.size(); ++i) {
    EXPECT_EQ(g.encoder[i].conv.weight.shape(), d.encoder[i].conv.weight.shape());
    EXPECT_EQ(g.encoder[i].bn.gamma.shape(), d.encoder[i].bn.gamma.shape());
  }
}

TEST(Siamese, ScoreIsSymmetricBitExactly) {
  SiameseNet s(1.0f / 8.0f, 32);
  s.init_weights(21);
  Tensor a = random_image_batch(3, 32, 30);
  Tensor b = random_image_batch(3, 32, 31);
  Tensor s1 = s.forward_pair(a, b, false);
  Tensor s2 = s.forward_pair(b, a, false);
  ASSERT_EQ(s1.numel(), s2.numel());
  for (size_t i = 0; i < s1.numel(); ++i) EXPECT_EQ(s1.data()[i], s2.data()[i]);
}

TEST(Siamese, IdenticalInputsShareOneScore) {
  SiameseNet s(1.0f / 8.0f, 32);
  s.init_weights(22);
  Tensor x = random_image_batch(2, 32, 40);
  Tensor y = random_image_batch(2, 32, 41);
  const float sx = s.forward_pair(x, x, false).data()[0];
  const float sy = s.forward_pair(y, y, false).data()[0];
  // Zero fused difference leaves only the bias path, whatever the input.
  EXPECT_FLOAT_EQ(sx, sy);
}

TEST(Siamese, TowerShapeLadderAt96) {
  SiameseNet s(1.0f, 96);
  ShapeTrace trace;
  s.init_weights(23);
  Tensor x = random_image_batch(2, 96, 50);
  Tensor emb = s.embed(x, false, &trace);
  ASSERT_EQ(trace.size(), 6u);
  const int spatial[] = {48, 24, 12, 6, 3, 1};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(trace[i][2], spatial[i]) << "stage " << i;
  EXPECT_EQ(emb.shape(), (std::vector<int>{2, 256}));
}

TEST(Siamese, PairShapeMismatchRejected) {
  SiameseNet s(1.0f / 8.0f, 32);
  s.init_weights(1);
  EXPECT_THROW(
      s.forward_pair(Tensor::zeros({1, 1, 32, 32}), Tensor::zeros({1, 1, 16, 16}), false),
      std::invalid_argument);
}

TEST(InitWeights, SameSeedBitIdentical) {
  GeneratorNet a(0.25f), b(0.25f);
  a.init_weights(99);
  b.init_weights(99);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].tensor.data(), pb[i].tensor.data());
  EXPECT_EQ(parameter_hash(pa), parameter_hash(pb));
}

TEST(InitWeights, DifferentSeedsDiffer) {
  GeneratorNet a(0.25f), b(0.25f);
  a.init_weights(1);
  b.init_weights(2);
  EXPECT_NE(parameter_hash(a.parameters()), parameter_hash(b.parameters()));
}

TEST(InitWeights, WeightSlabStatistics) {
  GeneratorNet g(0.25f);
  g.init_weights(7);
  const Tensor w = g.encoder[1].conv.weight;  // 64x32x5x5 at m=1/4
  ASSERT_GE(w.numel(), 1024u);
  double sum = 0.0, ssq = 0.0;
  for (size_t i = 0; i < 1024; ++i) {
    sum += w.data()[i];
    ssq += static_cast<double>(w.data()[i]) * w.data()[i];
  }
  const double mean = sum / 1024.0;
  const double std = std::sqrt(ssq / 1024.0 - mean * mean);
  EXPECT_GT(std, 0.015);
  EXPECT_LT(std, 0.025);
  // Batch-norm gamma draws sit near 1.
  const Tensor gamma = g.encoder[1].bn.gamma;
  for (float v : gamma.data()) EXPECT_NEAR(v, 1.0f, 0.2f);
}

TEST(Models, ParameterCountStableAcrossInstances) {
  GeneratorNet a(0.5f), b(0.5f);
  EXPECT_EQ(parameter_count(a.parameters()), parameter_count(b.parameters()));
  DiscriminatorNet da(0.5f, 96), db(0.5f, 96);
  EXPECT_EQ(parameter_count(da.parameters()), parameter_count(db.parameters()));
}

// Composite finite-difference check through the whole generator (training
// mode batch norm) on sampled parameters and inputs.
TEST(Models, GeneratorCompositeGradientCheck) {
  GeneratorNet g(1.0f / 16.0f);
  g.init_weights(61);
  Rng rng(62);
  const int size = 16;
  Tensor input = random_image_batch(2, size, 63);
  input.set_requires_grad(true);

  Tensor out = g.forward(input, true);
  refops::RefTensor probe = refops::RefTensor(out.shape());
  for (auto& v : probe.v) v = rng.normal();
  {
    Tensor r(out.shape(), std::vector<float>(probe.v.begin(), probe.v.end()));
    sum(mul(out, r)).backward();
  }

  refops::RefGenerator ref(g);
  refops::RefTensor in_d = refops::from_tensor(input);
  auto eval = [&] {
    auto y = ref.forward(in_d, true);
    double acc = 0.0;
    for (size_t i = 0; i < y.numel(); ++i) acc += y.v[i] * probe.v[i];
    return acc;
  };

  // The composite map amplifies early-layer sensitivities by orders of
  // magnitude, so a fixed step is either in truncation (h too big) or on an
  // activation kink. A sample passes if it agrees at either step size; a
  // genuinely wrong gradient fails at both.
  auto fd_error = [&](double* slot, double analytic) {
    double best = 1e9;
    for (double h : {1e-5, 1e-6}) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = eval();
      *slot = saved - h;
      const double down = eval();
      *slot = saved;
      best = std::min(best, refops::grad_error(analytic, (up - down) / (2.0 * h)));
      if (best < 1e-2) break;
    }
    return best;
  };

  double worst = 0.0;
  // A few sampled indices in every parameter tensor, plus input pixels.
  for (const auto& p : g.parameters()) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    for (int pick = 0; pick < 3; ++pick) {
      const size_t idx = rng.below(p.tensor.numel());
      worst = std::max(worst, fd_error(ref.param(p.name, idx), p.tensor.grad()[idx]));
    }
  }
  for (int pick = 0; pick < 8; ++pick) {
    const size_t idx = rng.below(input.numel());
    worst = std::max(worst, fd_error(&in_d.v[idx], input.grad()[idx]));
  }
  EXPECT_LT(worst, 1e-2);
}
