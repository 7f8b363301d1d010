#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/tensor.hpp"

namespace facedepth {

// Bias-corrected Adam over a fixed parameter list. Moment buffers are laid
// out in the same order as the parameter list they were initialized from.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  long step = 0;

  static AdamState for_params(const std::vector<NamedTensor>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.numel(), 0.0f);
      s.v.emplace_back(p.tensor.numel(), 0.0f);
    }
    return s;
  }
};

// One update over all parameters. Parameters whose grad buffer was never
// populated are treated as having zero gradient.
inline void adam_step(const std::vector<NamedTensor>& params, AdamState& state, float lr,
                      float beta1, float beta2, float eps) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const size_t n = t.numel();
    if (state.m[i].size() != n) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + params[i].name);
    }
    float* p = t.mutable_data().data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const float* g = t.has_grad() ? t.grad().data() : nullptr;
    for (size_t j = 0; j < n; ++j) {
      const float gj = g ? g[j] : 0.0f;
      m[j] = beta1 * m[j] + (1.0f - beta1) * gj;
      v[j] = beta2 * v[j] + (1.0f - beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

inline void zero_grads(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace facedepth
