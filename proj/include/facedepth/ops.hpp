#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/tensor.hpp"

// Differentiable operations over NCHW tensors. Forward paths run in float32
// with fixed accumulation order; per-channel statistics and scalar reductions
// accumulate in double for stability. Every op wires its own backward rule.

namespace facedepth {

namespace detail {

inline void expect(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

// Output range [lo, hi) of o such that 0 <= o*stride + off < limit.
inline void conv_bounds(int off, int stride, int limit, int out_extent, int& lo, int& hi) {
  lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  // largest o with o*stride + off <= limit - 1
  hi = (limit - 1 - off) / stride + 1;
  if (off > limit - 1) hi = 0;
  lo = std::min(lo, out_extent);
  hi = std::min(hi, out_extent);
  if (hi < lo) hi = lo;
}

}  // namespace detail

// -------------------------------------------------------------------------
// conv2d: input (N,C,H,W), weight (O,I,K,K), bias (O). Output spatial extent
// is floor((H + 2*padding - K)/stride) + 1.
// -------------------------------------------------------------------------
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                     int padding) {
  detail::expect(input.rank() == 4, "conv2d: input must be NCHW, got " + detail::shape_str(input.shape()));
  detail::expect(weight.rank() == 4, "conv2d: weight must be OIKK, got " + detail::shape_str(weight.shape()));
  detail::expect(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square");
  detail::expect(input.dim(1) == weight.dim(1),
                 "conv2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match weight input extent " + std::to_string(weight.dim(1)));
  detail::expect(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
                 "conv2d: bias extent must equal output channel count");
  detail::expect(stride >= 1, "conv2d: stride must be >= 1");
  detail::expect(padding >= 0, "conv2d: padding must be >= 0");

  const int n_batch = input.dim(0), ch_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int ch_out = weight.dim(0), k = weight.dim(2);
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || w + 2 * padding < k || oh <= 0 || ow <= 0) {
    throw std::domain_error("conv2d: zero-sized output for input " + detail::shape_str(input.shape()) +
                            " kernel " + std::to_string(k));
  }

  const float* in = input.data().data();
  const float* wt = weight.data().data();
  const float* bs = bias.data().data();
  std::vector<float> out(static_cast<size_t>(n_batch) * ch_out * oh * ow);

  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < ch_out; ++oc) {
      float* out_plane = out.data() + (static_cast<size_t>(n) * ch_out + oc) * oh * ow;
      std::fill(out_plane, out_plane + static_cast<size_t>(oh) * ow, bs[oc]);
      for (int ic = 0; ic < ch_in; ++ic) {
        const float* in_plane = in + (static_cast<size_t>(n) * ch_in + ic) * h * w;
        const float* w_kern = wt + (static_cast<size_t>(oc) * ch_in + ic) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          int oh_lo, oh_hi;
          detail::conv_bounds(kh - padding, stride, h, oh, oh_lo, oh_hi);
          for (int kw = 0; kw < k; ++kw) {
            int ow_lo, ow_hi;
            detail::conv_bounds(kw - padding, stride, w, ow, ow_lo, ow_hi);
            const float wv = w_kern[kh * k + kw];
            for (int o_r = oh_lo; o_r < oh_hi; ++o_r) {
              const float* in_row = in_plane + (o_r * stride - padding + kh) * w;
              float* out_row = out_plane + static_cast<size_t>(o_r) * ow;
              int iw = ow_lo * stride - padding + kw;
              for (int o_c = ow_lo; o_c < ow_hi; ++o_c, iw += stride) {
                out_row[o_c] += wv * in_row[iw];
              }
            }
          }
        }
      }
    }
  }

  auto in_impl = input.impl_ptr();
  auto w_impl = weight.impl_ptr();
  auto b_impl = bias.impl_ptr();
  detail::GradSlot sx(in_impl), sw(w_impl), sb(b_impl);
  auto backward = [sx, sw, sb, stride, padding, n_batch, ch_in, ch_out, h, w, k, oh,
                   ow](const std::vector<float>& gout, detail::GradTable& table) {
    const float* in = sx.data().data();
    const float* wt = sw.data().data();
    float* gin = sx.get(table);
    float* gw = sw.get(table);
    float* gb = sb.get(table);

    if (gb != nullptr) {
      for (int oc = 0; oc < ch_out; ++oc) {
        double acc = 0.0;
        for (int n = 0; n < n_batch; ++n) {
          const float* g_plane = gout.data() + (static_cast<size_t>(n) * ch_out + oc) * oh * ow;
          for (int i = 0; i < oh * ow; ++i) acc += g_plane[i];
        }
        gb[oc] += static_cast<float>(acc);
      }
    }
    if (gin == nullptr && gw == nullptr) return;

    for (int n = 0; n < n_batch; ++n) {
      for (int oc = 0; oc < ch_out; ++oc) {
        const float* g_plane = gout.data() + (static_cast<size_t>(n) * ch_out + oc) * oh * ow;
        for (int ic = 0; ic < ch_in; ++ic) {
          const float* in_plane = in + (static_cast<size_t>(n) * ch_in + ic) * h * w;
          float* gin_plane =
              gin ? gin + (static_cast<size_t>(n) * ch_in + ic) * h * w : nullptr;
          const size_t w_base = (static_cast<size_t>(oc) * ch_in + ic) * k * k;
          for (int kh = 0; kh < k; ++kh) {
            int oh_lo, oh_hi;
            detail::conv_bounds(kh - padding, stride, h, oh, oh_lo, oh_hi);
            for (int kw = 0; kw < k; ++kw) {
              int ow_lo, ow_hi;
              detail::conv_bounds(kw - padding, stride, w, ow, ow_lo, ow_hi);
              const float wv = wt[w_base + kh * k + kw];
              double wacc = 0.0;
              for (int o_r = oh_lo; o_r < oh_hi; ++o_r) {
                const int ih = o_r * stride - padding + kh;
                const float* g_row = g_plane + static_cast<size_t>(o_r) * ow;
                const float* in_row = in_plane + static_cast<size_t>(ih) * w;
                float* gin_row = gin_plane ? gin_plane + static_cast<size_t>(ih) * w : nullptr;
                int iw = ow_lo * stride - padding + kw;
                for (int o_c = ow_lo; o_c < ow_hi; ++o_c, iw += stride) {
                  const float g = g_row[o_c];
                  if (gin_row) gin_row[iw] += wv * g;
                  wacc += static_cast<double>(g) * in_row[iw];
                }
              }
              if (gw) gw[w_base + kh * k + kw] += static_cast<float>(wacc);
            }
          }
        }
      }
    }
  };

  return Tensor::make_node({n_batch, ch_out, oh, ow}, std::move(out), OpKind::kConv2d,
                           {in_impl, w_impl, b_impl}, std::move(backward));
}

// -------------------------------------------------------------------------
// conv_transpose2d: input (N,CI,H,W), weight (CI,CO,K,K), bias (CO). Output
// extent is (H-1)*stride - 2*padding + K + output_padding; the forward map is
// the adjoint of conv2d with the same weight.
// -------------------------------------------------------------------------
inline Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                               int stride, int padding, int output_padding) {
  detail::expect(input.rank() == 4, "conv_transpose2d: input must be NCHW");
  detail::expect(weight.rank() == 4, "conv_transpose2d: weight must be (CI,CO,K,K)");
  detail::expect(weight.dim(2) == weight.dim(3), "conv_transpose2d: kernel must be square");
  detail::expect(input.dim(1) == weight.dim(0),
                 "conv_transpose2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match weight extent " + std::to_string(weight.dim(0)));
  detail::expect(bias.rank() == 1 && bias.dim(0) == weight.dim(1),
                 "conv_transpose2d: bias extent must equal output channel count");
  detail::expect(stride >= 1, "conv_transpose2d: stride must be >= 1");
  detail::expect(padding >= 0, "conv_transpose2d: padding must be >= 0");
  detail::expect(output_padding >= 0 && output_padding < stride,
                 "conv_transpose2d: output_padding must satisfy 0 <= op < stride");

  const int n_batch = input.dim(0), ch_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int ch_out = weight.dim(1), k = weight.dim(2);
  const int oh = (h - 1) * stride - 2 * padding + k + output_padding;
  const int ow = (w - 1) * stride - 2 * padding + k + output_padding;
  if (oh <= 0 || ow <= 0) {
    throw std::domain_error("conv_transpose2d: zero-sized output for input " +
                            detail::shape_str(input.shape()));
  }

  const float* in = input.data().data();
  const float* wt = weight.data().data();
  const float* bs = bias.data().data();
  std::vector<float> out(static_cast<size_t>(n_batch) * ch_out * oh * ow);

  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < ch_out; ++co) {
      float* out_plane = out.data() + (static_cast<size_t>(n) * ch_out + co) * oh * ow;
      std::fill(out_plane, out_plane + static_cast<size_t>(oh) * ow, bs[co]);
    }
    for (int ci = 0; ci < ch_in; ++ci) {
      const float* in_plane = in + (static_cast<size_t>(n) * ch_in + ci) * h * w;
      for (int co = 0; co < ch_out; ++co) {
        float* out_plane = out.data() + (static_cast<size_t>(n) * ch_out + co) * oh * ow;
        const float* w_kern = wt + (static_cast<size_t>(ci) * ch_out + co) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          int ih_lo, ih_hi;
          detail::conv_bounds(kh - padding, stride, oh, h, ih_lo, ih_hi);
          for (int kw = 0; kw < k; ++kw) {
            int iw_lo, iw_hi;
            detail::conv_bounds(kw - padding, stride, ow, w, iw_lo, iw_hi);
            const float wv = w_kern[kh * k + kw];
            for (int ih = ih_lo; ih < ih_hi; ++ih) {
              const float* in_row = in_plane + static_cast<size_t>(ih) * w;
              float* out_row = out_plane + static_cast<size_t>(ih * stride - padding + kh) * ow;
              int oc = iw_lo * stride - padding + kw;
              for (int iw = iw_lo; iw < iw_hi; ++iw, oc += stride) {
                out_row[oc] += wv * in_row[iw];
              }
            }
          }
        }
      }
    }
  }

  auto in_impl = input.impl_ptr();
  auto w_impl = weight.impl_ptr();
  auto b_impl = bias.impl_ptr();
  detail::GradSlot sx(in_impl), sw(w_impl), sb(b_impl);
  auto backward = [sx, sw, sb, stride, padding, n_batch, ch_in, ch_out, h, w, k, oh,
                   ow](const std::vector<float>& gout, detail::GradTable& table) {
    const float* in = sx.data().data();
    const float* wt = sw.data().data();
    float* gin = sx.get(table);
    float* gw = sw.get(table);
    float* gb = sb.get(table);

    if (gb != nullptr) {
      for (int co = 0; co < ch_out; ++co) {
        double acc = 0.0;
        for (int n = 0; n < n_batch; ++n) {
          const float* g_plane = gout.data() + (static_cast<size_t>(n) * ch_out + co) * oh * ow;
          for (int i = 0; i < oh * ow; ++i) acc += g_plane[i];
        }
        gb[co] += static_cast<float>(acc);
      }
    }
    if (gin == nullptr && gw == nullptr) return;

    for (int n = 0; n < n_batch; ++n) {
      for (int ci = 0; ci < ch_in; ++ci) {
        const float* in_plane = in + (static_cast<size_t>(n) * ch_in + ci) * h * w;
        float* gin_plane = gin ? gin + (static_cast<size_t>(n) * ch_in + ci) * h * w : nullptr;
        for (int co = 0; co < ch_out; ++co) {
          const float* g_plane = gout.data() + (static_cast<size_t>(n) * ch_out + co) * oh * ow;
          const size_t w_base = (static_cast<size_t>(ci) * ch_out + co) * k * k;
          for (int kh = 0; kh < k; ++kh) {
            int ih_lo, ih_hi;
            detail::conv_bounds(kh - padding, stride, oh, h, ih_lo, ih_hi);
            for (int kw = 0; kw < k; ++kw) {
              int iw_lo, iw_hi;
              detail::conv_bounds(kw - padding, stride, ow, w, iw_lo, iw_hi);
              const float wv = wt[w_base + kh * k + kw];
              double wacc = 0.0;
              for (int ih = ih_lo; ih < ih_hi; ++ih) {
                const float* in_row = in_plane + static_cast<size_t>(ih) * w;
                float* gin_row = gin_plane ? gin_plane + static_cast<size_t>(ih) * w : nullptr;
                const float* g_row =
                    g_plane + static_cast<size_t>(ih * stride - padding + kh) * ow;
                int oc = iw_lo * stride - padding + kw;
                for (int iw = iw_lo; iw < iw_hi; ++iw, oc += stride) {
                  const float g = g_row[oc];
                  if (gin_row) gin_row[iw] += wv * g;
                  wacc += static_cast<double>(g) * in_row[iw];
                }
              }
              if (gw) gw[w_base + kh * k + kw] += static_cast<float>(wacc);
            }
          }
        }
      }
    }
  };

  return Tensor::make_node({n_batch, ch_out, oh, ow}, std::move(out), OpKind::kConvTranspose2d,
                           {in_impl, w_impl, b_impl}, std::move(backward));
}

// -------------------------------------------------------------------------
// batch_norm2d. Training mode normalizes with biased batch statistics and
// updates the running buffers in place with EMA factor `momentum`; eval mode
// normalizes with the running statistics only.
// -------------------------------------------------------------------------
inline Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           Tensor& running_mean, Tensor& running_var, bool training,
                           float eps = 1e-5f, float momentum = 0.1f) {
  detail::expect(input.rank() == 4, "batch_norm2d: input must be NCHW");
  const int n_batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::expect(gamma.rank() == 1 && gamma.dim(0) == ch, "batch_norm2d: gamma extent mismatch");
  detail::expect(beta.rank() == 1 && beta.dim(0) == ch, "batch_norm2d: beta extent mismatch");
  detail::expect(running_mean.rank() == 1 && running_mean.dim(0) == ch,
                 "batch_norm2d: running_mean extent mismatch");
  detail::expect(running_var.rank() == 1 && running_var.dim(0) == ch,
                 "batch_norm2d: running_var extent mismatch");
  if (training && n_batch < 2) {
    throw std::domain_error("batch_norm2d: training mode requires batch size >= 2");
  }

  const float* in = input.data().data();
  const float* g = gamma.data().data();
  const float* b = beta.data().data();
  const size_t plane = static_cast<size_t>(h) * w;
  const size_t per_ch = static_cast<size_t>(n_batch) * plane;

  std::vector<float> mean(ch), inv_std(ch);
  if (training) {
    float* rm = running_mean.mutable_data().data();
    float* rv = running_var.mutable_data().data();
    for (int c = 0; c < ch; ++c) {
      double sum = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = in + (static_cast<size_t>(n) * ch + c) * plane;
        for (size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(per_ch);
      double ssq = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = in + (static_cast<size_t>(n) * ch + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          ssq += d * d;
        }
      }
      const double var = ssq / static_cast<double>(per_ch);
      mean[c] = static_cast<float>(mu);
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + eps));
      rm[c] = (1.0f - momentum) * rm[c] + momentum * static_cast<float>(mu);
      rv[c] = (1.0f - momentum) * rv[c] + momentum * static_cast<float>(var);
    }
  } else {
    const float* rm = running_mean.data().data();
    const float* rv = running_var.data().data();
    for (int c = 0; c < ch; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0f / std::sqrt(rv[c] + eps);
    }
  }

  std::vector<float> out(input.numel());
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < ch; ++c) {
      const float* p = in + (static_cast<size_t>(n) * ch + c) * plane;
      float* q = out.data() + (static_cast<size_t>(n) * ch + c) * plane;
      const float mu = mean[c], is = inv_std[c], gc = g[c], bc = b[c];
      for (size_t i = 0; i < plane; ++i) q[i] = gc * (p[i] - mu) * is + bc;
    }
  }

  auto in_impl = input.impl_ptr();
  auto g_impl = gamma.impl_ptr();
  auto b_impl = beta.impl_ptr();
  detail::GradSlot sx(in_impl), sg(g_impl), sb(b_impl);
  auto backward = [sx, sg, sb, mean, inv_std, training, n_batch, ch, plane,
                   per_ch](const std::vector<float>& gout, detail::GradTable& table) {
    const float* in = sx.data().data();
    const float* g = sg.data().data();
    float* gin = sx.get(table);
    float* ggamma = sg.get(table);
    float* gbeta = sb.get(table);

    for (int c = 0; c < ch; ++c) {
      const float mu = mean[c], is = inv_std[c];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const size_t base = (static_cast<size_t>(n) * ch + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double go = gout[base + i];
          sum_g += go;
          sum_gx += go * (in[base + i] - mu) * is;
        }
      }
      if (gbeta) gbeta[c] += static_cast<float>(sum_g);
      if (ggamma) ggamma[c] += static_cast<float>(sum_gx);
      if (gin == nullptr) continue;
      const float gc = g[c];
      if (training) {
        const float mean_g = static_cast<float>(sum_g / static_cast<double>(per_ch));
        const float mean_gx = static_cast<float>(sum_gx / static_cast<double>(per_ch));
        for (int n = 0; n < n_batch; ++n) {
          const size_t base = (static_cast<size_t>(n) * ch + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            const float xhat = (in[base + i] - mu) * is;
            gin[base + i] += gc * is * (gout[base + i] - mean_g - xhat * mean_gx);
          }
        }
      } else {
        for (int n = 0; n < n_batch; ++n) {
          const size_t base = (static_cast<size_t>(n) * ch + c) * plane;
          for (size_t i = 0; i < plane; ++i) gin[base + i] += gc * is * gout[base + i];
        }
      }
    }
  };

  return Tensor::make_node(input.shape(), std::move(out), OpKind::kBatchNorm,
                           {in_impl, g_impl, b_impl}, std::move(backward));
}

// -------------------------------------------------------------------------
// Element-wise activations.
// -------------------------------------------------------------------------
inline Tensor relu(const Tensor& input) {
  std::vector<float> out(input.numel());
  const float* in = input.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto backward = [sx](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    const float* in = sx.data().data();
    for (size_t i = 0; i < gout.size(); ++i) {
      if (in[i] > 0.0f) gin[i] += gout[i];
    }
  };
  return Tensor::make_node(input.shape(), std::move(out), OpKind::kRelu, {in_impl},
                           std::move(backward));
}

inline Tensor leaky_relu(const Tensor& input, float slope) {
  std::vector<float> out(input.numel());
  const float* in = input.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= 0.0f ? in[i] : slope * in[i];
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto backward = [sx, slope](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    const float* in = sx.data().data();
    for (size_t i = 0; i < gout.size(); ++i) gin[i] += (in[i] >= 0.0f ? 1.0f : slope) * gout[i];
  };
  return Tensor::make_node(input.shape(), std::move(out), OpKind::kLeakyRelu, {in_impl},
                           std::move(backward));
}

inline Tensor tanh_act(const Tensor& input) {
  std::vector<float> out(input.numel());
  const float* in = input.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto out_copy = out;  // y values for the derivative 1 - y^2
  auto backward = [sx, out_copy](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    for (size_t i = 0; i < gout.size(); ++i) gin[i] += (1.0f - out_copy[i] * out_copy[i]) * gout[i];
  };
  return Tensor::make_node(input.shape(), std::move(out), OpKind::kTanh, {in_impl},
                           std::move(backward));
}

// Sigmoid output is clamped into the open interval (0,1); large positive
// logits saturate just below 1 instead of rounding onto it.
inline Tensor sigmoid(const Tensor& input) {
  constexpr float clamp = 1e-7f;
  std::vector<float> out(input.numel());
  const float* in = input.data().data();
  for (size_t i = 0; i < out.size(); ++i) {
    const float x = in[i];
    float y;
    if (x >= 0.0f) {
      y = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      y = e / (1.0f + e);
    }
    out[i] = std::min(std::max(y, clamp), 1.0f - clamp);
  }
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto out_copy = out;
  auto backward = [sx, out_copy](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    for (size_t i = 0; i < gout.size(); ++i) {
      gin[i] += out_copy[i] * (1.0f - out_copy[i]) * gout[i];
    }
  };
  return Tensor::make_node(input.shape(), std::move(out), OpKind::kSigmoid, {in_impl},
                           std::move(backward));
}

// -------------------------------------------------------------------------
// fully_connected: input (N,F), weight (F,U), bias (U) -> (N,U).
// -------------------------------------------------------------------------
inline Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  detail::expect(input.rank() == 2, "fully_connected: input must be (N,F)");
  detail::expect(weight.rank() == 2, "fully_connected: weight must be (F,U)");
  detail::expect(input.dim(1) == weight.dim(0),
                 "fully_connected: inner dimensions do not match, input " +
                     detail::shape_str(input.shape()) + " weight " +
                     detail::shape_str(weight.shape()));
  detail::expect(bias.rank() == 1 && bias.dim(0) == weight.dim(1),
                 "fully_connected: bias extent must equal unit count");

  const int n_batch = input.dim(0), feat = input.dim(1), units = weight.dim(1);
  const float* in = input.data().data();
  const float* wt = weight.data().data();
  const float* bs = bias.data().data();
  std::vector<float> out(static_cast<size_t>(n_batch) * units);
  for (int n = 0; n < n_batch; ++n) {
    float* row = out.data() + static_cast<size_t>(n) * units;
    for (int u = 0; u < units; ++u) row[u] = bs[u];
    const float* in_row = in + static_cast<size_t>(n) * feat;
    for (int f = 0; f < feat; ++f) {
      const float x = in_row[f];
      const float* w_row = wt + static_cast<size_t>(f) * units;
      for (int u = 0; u < units; ++u) row[u] += x * w_row[u];
    }
  }

  auto in_impl = input.impl_ptr();
  auto w_impl = weight.impl_ptr();
  auto b_impl = bias.impl_ptr();
  detail::GradSlot sx(in_impl), sw(w_impl), sb(b_impl);
  auto backward = [sx, sw, sb, n_batch, feat,
                   units](const std::vector<float>& gout, detail::GradTable& table) {
    const float* in = sx.data().data();
    const float* wt = sw.data().data();
    float* gin = sx.get(table);
    float* gw = sw.get(table);
    float* gb = sb.get(table);
    for (int n = 0; n < n_batch; ++n) {
      const float* g_row = gout.data() + static_cast<size_t>(n) * units;
      const float* in_row = in + static_cast<size_t>(n) * feat;
      if (gb) {
        for (int u = 0; u < units; ++u) gb[u] += g_row[u];
      }
      for (int f = 0; f < feat; ++f) {
        const float* w_row = wt + static_cast<size_t>(f) * units;
        if (gw) {
          float* gw_row = gw + static_cast<size_t>(f) * units;
          const float x = in_row[f];
          for (int u = 0; u < units; ++u) gw_row[u] += x * g_row[u];
        }
        if (gin) {
          double acc = 0.0;
          for (int u = 0; u < units; ++u) acc += static_cast<double>(g_row[u]) * w_row[u];
          gin[static_cast<size_t>(n) * feat + f] += static_cast<float>(acc);
        }
      }
    }
  };

  return Tensor::make_node({n_batch, units}, std::move(out), OpKind::kLinear,
                           {in_impl, w_impl, b_impl}, std::move(backward));
}

// -------------------------------------------------------------------------
// avg_pool2d in floor mode: trailing rows/cols that do not fill a window are
// dropped (3x3 with k2 s2 collapses to 1x1).
// -------------------------------------------------------------------------
inline Tensor avg_pool2d(const Tensor& input, int kernel, int stride) {
  detail::expect(input.rank() == 4, "avg_pool2d: input must be NCHW");
  detail::expect(kernel >= 1 && stride >= 1, "avg_pool2d: kernel and stride must be >= 1");
  const int n_batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = (h - kernel) / stride + 1;
  const int ow = (w - kernel) / stride + 1;
  if (h < kernel || w < kernel || oh <= 0 || ow <= 0) {
    throw std::domain_error("avg_pool2d: window larger than input");
  }
  const float inv = 1.0f / static_cast<float>(kernel * kernel);
  const float* in = input.data().data();
  std::vector<float> out(static_cast<size_t>(n_batch) * ch * oh * ow);
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < ch; ++c) {
      const float* plane = in + (static_cast<size_t>(n) * ch + c) * h * w;
      float* out_plane = out.data() + (static_cast<size_t>(n) * ch + c) * oh * ow;
      for (int o_r = 0; o_r < oh; ++o_r) {
        for (int o_c = 0; o_c < ow; ++o_c) {
          float acc = 0.0f;
          for (int kh = 0; kh < kernel; ++kh) {
            const float* row = plane + static_cast<size_t>(o_r * stride + kh) * w + o_c * stride;
            for (int kw = 0; kw < kernel; ++kw) acc += row[kw];
          }
          out_plane[static_cast<size_t>(o_r) * ow + o_c] = acc * inv;
        }
      }
    }
  }
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto backward = [sx, kernel, stride, n_batch, ch, h, w, oh, ow,
                   inv](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    for (int n = 0; n < n_batch; ++n) {
      for (int c = 0; c < ch; ++c) {
        float* gin_plane = gin + (static_cast<size_t>(n) * ch + c) * h * w;
        const float* g_plane = gout.data() + (static_cast<size_t>(n) * ch + c) * oh * ow;
        for (int o_r = 0; o_r < oh; ++o_r) {
          for (int o_c = 0; o_c < ow; ++o_c) {
            const float g = g_plane[static_cast<size_t>(o_r) * ow + o_c] * inv;
            for (int kh = 0; kh < kernel; ++kh) {
              float* row = gin_plane + static_cast<size_t>(o_r * stride + kh) * w + o_c * stride;
              for (int kw = 0; kw < kernel; ++kw) row[kw] += g;
            }
          }
        }
      }
    }
  };
  return Tensor::make_node({n_batch, ch, oh, ow}, std::move(out), OpKind::kAvgPool, {in_impl},
                           std::move(backward));
}

// -------------------------------------------------------------------------
// Shape and element-wise plumbing.
// -------------------------------------------------------------------------
inline Tensor reshape(const Tensor& input, std::vector<int> new_shape) {
  const size_t n = detail::shape_numel(new_shape);
  detail::expect(n == input.numel(), "reshape: element count mismatch");
  auto in_impl = input.impl_ptr();
  detail::GradSlot sx(in_impl);
  auto backward = [sx](const std::vector<float>& gout, detail::GradTable& table) {
    float* gin = sx.get(table);
    if (!gin) return;
    for (size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
  };
  return Tensor::make_node(std::move(new_shape), input.data(), OpKind::kReshape, {in_impl},
                           std::move(backward));
}

inline Tensor flatten(const Tensor& input) {
  detail::expect(input.rank() >= 2, "flatten: input must have a batch dimension");
  const int n_batch = input.dim(0);
  return reshape(input, {n_batch, static_cast<int>(input.numel()) / n_batch});
}

namespace detail {

inline void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  expect(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                     " vs " + shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  detail::GradSlot sa(ai), sb(bi);
  auto backward = [sa, sb](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (float* gb = sb.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
    }
  };
  return Tensor::make_node(a.shape(), std::move(out), OpKind::kAdd, {ai, bi}, std::move(backward));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  detail::GradSlot sa(ai), sb(bi);
  auto backward = [sa, sb](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (float* gb = sb.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
    }
  };
  return Tensor::make_node(a.shape(), std::move(out), OpKind::kSub, {ai, bi}, std::move(backward));
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  detail::GradSlot sa(ai), sb(bi);
  auto backward = [sa, sb](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) ga[i] += sb.data()[i] * gout[i];
    }
    if (float* gb = sb.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) gb[i] += sa.data()[i] * gout[i];
    }
  };
  return Tensor::make_node(a.shape(), std::move(out), OpKind::kMul, {ai, bi}, std::move(backward));
}

inline Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  auto ai = a.impl_ptr();
  detail::GradSlot sa(ai);
  auto backward = [sa, factor](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < gout.size(); ++i) ga[i] += factor * gout[i];
    }
  };
  return Tensor::make_node(a.shape(), std::move(out), OpKind::kScale, {ai}, std::move(backward));
}

inline Tensor abs_diff(const Tensor& a, const Tensor& b) {
  detail::expect_same_shape(a, b, "abs_diff");
  std::vector<float> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.data()[i] - b.data()[i]);
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  detail::GradSlot sa(ai), sb(bi);
  auto backward = [sa, sb](const std::vector<float>& gout, detail::GradTable& table) {
    float* ga = sa.get(table);
    float* gb = sb.get(table);
    if (!ga && !gb) return;
    for (size_t i = 0; i < gout.size(); ++i) {
      const float d = sa.data()[i] - sb.data()[i];
      const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      if (ga) ga[i] += s * gout[i];
      if (gb) gb[i] -= s * gout[i];
    }
  };
  return Tensor::make_node(a.shape(), std::move(out), OpKind::kAbsDiff, {ai, bi},
                           std::move(backward));
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  auto ai = a.impl_ptr();
  detail::GradSlot sa(ai);
  auto backward = [sa](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < sa.numel(); ++i) ga[i] += gout[0];
    }
  };
  return Tensor::make_node({1}, {static_cast<float>(acc)}, OpKind::kSum, {ai},
                           std::move(backward));
}

inline Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const float inv = 1.0f / static_cast<float>(a.numel());
  auto ai = a.impl_ptr();
  detail::GradSlot sa(ai);
  auto backward = [sa, inv](const std::vector<float>& gout, detail::GradTable& table) {
    if (float* ga = sa.get(table)) {
      for (size_t i = 0; i < sa.numel(); ++i) ga[i] += inv * gout[0];
    }
  };
  return Tensor::make_node({1}, {static_cast<float>(acc) * inv}, OpKind::kMean, {ai},
                           std::move(backward));
}

// Concatenates along the existing leading axis. Batch assembly only; the
// result is a fresh leaf.
inline Tensor concat_batch(const Tensor& a, const Tensor& b) {
  detail::expect(a.rank() == b.rank() && a.rank() >= 1, "concat_batch: rank mismatch");
  for (size_t i = 1; i < a.rank(); ++i) {
    detail::expect(a.shape()[i] == b.shape()[i], "concat_batch: trailing extents differ");
  }
  std::vector<int> shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<float> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor(std::move(shape), std::move(out));
}

// Stacks equal-shape tensors along a new leading axis. Batch assembly only;
// the result is a fresh leaf.
inline Tensor stack(const std::vector<Tensor>& items) {
  detail::expect(!items.empty(), "stack: empty input");
  const auto& s0 = items.front().shape();
  std::vector<int> out_shape;
  out_shape.push_back(static_cast<int>(items.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  std::vector<float> out;
  out.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    detail::expect(t.shape() == s0, "stack: mixed shapes");
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(out_shape), std::move(out));
}

}  // namespace facedepth
