#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "facedepth/ops.hpp"
#include "facedepth/tensor.hpp"

namespace facedepth {

// Binary cross entropy, averaged over elements:
//   -(1/N) sum [ t*log(y) + (1-t)*log(1-y) ]
//
// When the prediction tensor is the direct output of sigmoid(), the loss is
// rebuilt from the pre-sigmoid logits in log-sum-exp form, which keeps it
// finite even at logit magnitudes where float32 sigmoid saturates. Otherwise
// probabilities are clamped away from {0,1} before taking logs.
inline Tensor bce_loss(const Tensor& predictions, const Tensor& targets) {
  if (predictions.numel() == 0 || targets.numel() == 0) {
    throw std::invalid_argument("bce_loss: empty input");
  }
  detail::expect_same_shape(predictions, targets, "bce_loss");
  const size_t n = predictions.numel();
  const float inv_n = 1.0f / static_cast<float>(n);

  const bool fused = predictions.op_kind() == OpKind::kSigmoid &&
                     !predictions.impl()->parents.empty();

  if (fused) {
    auto logits = predictions.impl()->parents[0];
    auto t_impl = targets.impl_ptr();
    const float* z = logits->data.data();
    const float* t = t_impl->data.data();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double zi = z[i], ti = t[i];
      // max(z,0) - t*z + log(1 + exp(-|z|))
      acc += std::max(zi, 0.0) - ti * zi + std::log1p(std::exp(-std::fabs(zi)));
    }
    detail::GradSlot sz(logits), st(t_impl);
    auto backward = [sz, st, inv_n](const std::vector<float>& gout,
                                    detail::GradTable& table) {
      float* gz = sz.get(table);
      if (!gz) return;
      const float* z = sz.data().data();
      const float* t = st.data().data();
      const float g = gout[0] * inv_n;
      for (size_t i = 0; i < sz.numel(); ++i) {
        const float zi = z[i];
        float s;
        if (zi >= 0.0f) {
          s = 1.0f / (1.0f + std::exp(-zi));
        } else {
          const float e = std::exp(zi);
          s = e / (1.0f + e);
        }
        gz[i] += (s - t[i]) * g;
      }
    };
    return Tensor::make_node({1}, {static_cast<float>(acc * inv_n)}, OpKind::kBce,
                             {logits, t_impl}, std::move(backward));
  }

  for (size_t i = 0; i < n; ++i) {
    const float y = predictions.data()[i];
    if (!(y > 0.0f && y < 1.0f)) {
      throw std::invalid_argument("bce_loss: predictions must lie strictly in (0,1)");
    }
  }
  constexpr double eps = 1e-7;
  auto p_impl = predictions.impl_ptr();
  auto t_impl = targets.impl_ptr();
  const float* y = p_impl->data.data();
  const float* t = t_impl->data.data();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double yi = std::min(std::max(static_cast<double>(y[i]), eps), 1.0 - eps);
    acc -= t[i] * std::log(yi) + (1.0 - t[i]) * std::log(1.0 - yi);
  }
  detail::GradSlot sy(p_impl), st(t_impl);
  auto backward = [sy, st, inv_n](const std::vector<float>& gout,
                                  detail::GradTable& table) {
    float* gy = sy.get(table);
    if (!gy) return;
    const float* y = sy.data().data();
    const float* t = st.data().data();
    const float g = gout[0] * inv_n;
    for (size_t i = 0; i < sy.numel(); ++i) {
      const float yi = std::min(std::max(y[i], 1e-7f), 1.0f - 1e-7f);
      gy[i] += (-t[i] / yi + (1.0f - t[i]) / (1.0f - yi)) * g;
    }
  };
  return Tensor::make_node({1}, {static_cast<float>(acc * inv_n)}, OpKind::kBce, {p_impl, t_impl},
                           std::move(backward));
}

// Mean squared error over a batch: the squared Euclidean norm of each item's
// difference, averaged over the leading (batch) axis only.
inline Tensor mse_loss(const Tensor& generated, const Tensor& target) {
  detail::expect_same_shape(generated, target, "mse_loss");
  if (generated.numel() == 0) throw std::invalid_argument("mse_loss: empty input");
  const int batch = generated.shape().empty() ? 1 : generated.dim(0);
  const float inv_batch = 1.0f / static_cast<float>(batch);

  auto g_impl = generated.impl_ptr();
  auto t_impl = target.impl_ptr();
  const float* a = g_impl->data.data();
  const float* b = t_impl->data.data();
  double acc = 0.0;
  for (size_t i = 0; i < generated.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  detail::GradSlot sa(g_impl), sb(t_impl);
  auto backward = [sa, sb, inv_batch](const std::vector<float>& gout,
                                      detail::GradTable& table) {
    float* ga = sa.get(table);
    float* gb = sb.get(table);
    if (!ga && !gb) return;
    const float* a = sa.data().data();
    const float* b = sb.data().data();
    const float g = 2.0f * gout[0] * inv_batch;
    for (size_t i = 0; i < sa.numel(); ++i) {
      const float d = (a[i] - b[i]) * g;
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  };
  return Tensor::make_node({1}, {static_cast<float>(acc * inv_batch)}, OpKind::kMse,
                           {g_impl, t_impl}, std::move(backward));
}

}  // namespace facedepth
