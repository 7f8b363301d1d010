#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/ops.hpp"
#include "facedepth/rng.hpp"
#include "facedepth/tensor.hpp"

// The three networks: a convolutional encoder-decoder generator, a
// discriminator sharing the encoder topology, and a Siamese verifier. All
// widths scale with a multiplier so desk-size variants keep the reference
// layer structure; multiplier 1 is the full configuration.

namespace facedepth {

inline int scaled_channels(int base, float multiplier) {
  const int c = static_cast<int>(std::lround(base * multiplier));
  return c < 4 ? 4 : c;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Conv2dLayer {
  Tensor weight;  // (O,I,K,K)
  Tensor bias;    // (O)
  int stride = 1;
  int padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int in_ch, int out_ch, int kernel, int stride_, int padding_)
      : weight(Tensor::zeros({out_ch, in_ch, kernel, kernel}, true)),
        bias(Tensor::zeros({out_ch}, true)),
        stride(stride_),
        padding(padding_) {}

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

  void init_params(Rng& rng) {
    for (float& v : weight.mutable_data()) v = static_cast<float>(rng.normal(0.0, 0.02));
    for (float& v : bias.mutable_data()) v = 0.0f;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

struct ConvTranspose2dLayer {
  Tensor weight;  // (CI,CO,K,K)
  Tensor bias;    // (CO)
  int stride = 1;
  int padding = 0;
  int output_padding = 0;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(int in_ch, int out_ch, int kernel, int stride_, int padding_, int out_pad)
      : weight(Tensor::zeros({in_ch, out_ch, kernel, kernel}, true)),
        bias(Tensor::zeros({out_ch}, true)),
        stride(stride_),
        padding(padding_),
        output_padding(out_pad) {}

  Tensor forward(const Tensor& x) const {
    return conv_transpose2d(x, weight, bias, stride, padding, output_padding);
  }

  void init_params(Rng& rng) {
    for (float& v : weight.mutable_data()) v = static_cast<float>(rng.normal(0.0, 0.02));
    for (float& v : bias.mutable_data()) v = 0.0f;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

struct BatchNorm2dLayer {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  BatchNorm2dLayer() = default;
  explicit BatchNorm2dLayer(int ch)
      : gamma(Tensor::ones({ch}, true)),
        beta(Tensor::zeros({ch}, true)),
        running_mean(Tensor::zeros({ch})),
        running_var(Tensor::ones({ch})) {}

  Tensor forward(const Tensor& x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, training, eps, momentum);
  }

  void init_params(Rng& rng) {
    for (float& v : gamma.mutable_data()) v = static_cast<float>(rng.normal(1.0, 0.02));
    for (float& v : beta.mutable_data()) v = 0.0f;
    for (float& v : running_mean.mutable_data()) v = 0.0f;
    for (float& v : running_var.mutable_data()) v = 1.0f;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }

  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".running_mean", running_mean});
    out.push_back({prefix + ".running_var", running_var});
  }
};

struct LinearLayer {
  Tensor weight;  // (F,U)
  Tensor bias;    // (U)

  LinearLayer() = default;
  LinearLayer(int in_features, int units)
      : weight(Tensor::zeros({in_features, units}, true)), bias(Tensor::zeros({units}, true)) {}

  Tensor forward(const Tensor& x) const { return fully_connected(x, weight, bias); }

  void init_params(Rng& rng) {
    for (float& v : weight.mutable_data()) v = static_cast<float>(rng.normal(0.0, 0.02));
    for (float& v : bias.mutable_data()) v = 0.0f;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

// conv k5 s2 p2 -> batch norm -> LeakyReLU(0.2); the downsampling block used
// by the generator encoder and, identically, by the discriminator.
struct EncoderBlock {
  Conv2dLayer conv;
  BatchNorm2dLayer bn;

  EncoderBlock() = default;
  EncoderBlock(int in_ch, int out_ch) : conv(in_ch, out_ch, 5, 2, 2), bn(out_ch) {}

  Tensor forward(const Tensor& x, bool training) {
    return leaky_relu(bn.forward(conv.forward(x), training), 0.2f);
  }

  void init_params(Rng& rng) {
    conv.init_params(rng);
    bn.init_params(rng);
  }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
    bn.collect_buffers(prefix + ".bn", out);
  }
};

// transposed conv k5 s2 p2 op1 -> batch norm -> ReLU; doubles spatial extent.
struct DecoderBlock {
  ConvTranspose2dLayer conv;
  BatchNorm2dLayer bn;

  DecoderBlock() = default;
  DecoderBlock(int in_ch, int out_ch) : conv(in_ch, out_ch, 5, 2, 2, 1), bn(out_ch) {}

  Tensor forward(const Tensor& x, bool training) {
    return relu(bn.forward(conv.forward(x), training));
  }

  void init_params(Rng& rng) {
    conv.init_params(rng);
    bn.init_params(rng);
  }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
    bn.collect_buffers(prefix + ".bn", out);
  }
};

using ShapeTrace = std::vector<std::vector<int>>;

// ---------------------------------------------------------------------------
// Generator: 4 encoder blocks (128,256,512,1024 maps), 4 decoder blocks
// (512,256,128,64), then conv k5 s1 to one channel with tanh. Input extents
// must be divisible by 16; the bottleneck sits at 1/16 resolution.
// ---------------------------------------------------------------------------
struct GeneratorNet {
  float multiplier = 1.0f;
  std::vector<EncoderBlock> encoder;
  std::vector<DecoderBlock> decoder;
  Conv2dLayer out_conv;

  GeneratorNet() = default;
  explicit GeneratorNet(float width_multiplier) : multiplier(width_multiplier) {
    const int e1 = scaled_channels(128, multiplier);
    const int e2 = scaled_channels(256, multiplier);
    const int e3 = scaled_channels(512, multiplier);
    const int e4 = scaled_channels(1024, multiplier);
    const int d1 = scaled_channels(512, multiplier);
    const int d2 = scaled_channels(256, multiplier);
    const int d3 = scaled_channels(128, multiplier);
    const int d4 = scaled_channels(64, multiplier);
    encoder = {EncoderBlock(1, e1), EncoderBlock(e1, e2), EncoderBlock(e2, e3),
               EncoderBlock(e3, e4)};
    decoder = {DecoderBlock(e4, d1), DecoderBlock(d1, d2), DecoderBlock(d2, d3),
               DecoderBlock(d3, d4)};
    out_conv = Conv2dLayer(d4, 1, 5, 1, 2);
  }

  Tensor forward(const Tensor& gray, bool training, ShapeTrace* trace = nullptr) {
    detail::expect(gray.rank() == 4 && gray.dim(1) == 1,
                   "generator: input must be (N,1,H,W), got " + detail::shape_str(gray.shape()));
    if (gray.dim(2) % 16 != 0 || gray.dim(3) % 16 != 0) {
      throw std::invalid_argument("generator: spatial extents must be divisible by 16, got " +
                                  detail::shape_str(gray.shape()));
    }
    Tensor x = gray;
    for (auto& block : encoder) {
      x = block.forward(x, training);
      if (trace) trace->push_back(x.shape());
    }
    for (auto& block : decoder) {
      x = block.forward(x, training);
      if (trace) trace->push_back(x.shape());
    }
    x = tanh_act(out_conv.forward(x));
    if (trace) trace->push_back(x.shape());
    return x;
  }

  void init_weights(uint64_t seed) {
    Rng rng(seed);
    for (auto& b : encoder) b.init_params(rng);
    for (auto& b : decoder) b.init_params(rng);
    out_conv.init_params(rng);
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < encoder.size(); ++i) encoder[i].collect("enc" + std::to_string(i + 1), out);
    for (size_t i = 0; i < decoder.size(); ++i) decoder[i].collect("dec" + std::to_string(i + 1), out);
    out_conv.collect("out", out);
    return out;
  }

  std::vector<NamedTensor> buffers() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < encoder.size(); ++i)
      encoder[i].collect_buffers("enc" + std::to_string(i + 1), out);
    for (size_t i = 0; i < decoder.size(); ++i)
      decoder[i].collect_buffers("dec" + std::to_string(i + 1), out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Discriminator: the generator's encoder stack, flattened into a single
// fully connected unit with sigmoid. Output is the probability that the
// input is a real depth map (target 1 on real, 0 on generated).
// ---------------------------------------------------------------------------
struct DiscriminatorNet {
  float multiplier = 1.0f;
  int image_size = 96;
  std::vector<EncoderBlock> encoder;
  LinearLayer fc;

  DiscriminatorNet() = default;
  DiscriminatorNet(float width_multiplier, int image_size_)
      : multiplier(width_multiplier), image_size(image_size_) {
    if (image_size % 16 != 0) {
      throw std::invalid_argument("discriminator: image size must be divisible by 16");
    }
    const int e1 = scaled_channels(128, multiplier);
    const int e2 = scaled_channels(256, multiplier);
    const int e3 = scaled_channels(512, multiplier);
    const int e4 = scaled_channels(1024, multiplier);
    encoder = {EncoderBlock(1, e1), EncoderBlock(e1, e2), EncoderBlock(e2, e3),
               EncoderBlock(e3, e4)};
    const int spatial = image_size / 16;
    fc = LinearLayer(e4 * spatial * spatial, 1);
  }

  Tensor forward(const Tensor& depth, bool training, ShapeTrace* trace = nullptr) {
    detail::expect(depth.rank() == 4 && depth.dim(1) == 1,
                   "discriminator: input must be (N,1,H,W), got " +
                       detail::shape_str(depth.shape()));
    Tensor x = depth;
    for (auto& block : encoder) {
      x = block.forward(x, training);
      if (trace) trace->push_back(x.shape());
    }
    x = flatten(x);
    if (trace) trace->push_back(x.shape());
    return sigmoid(fc.forward(x));
  }

  void init_weights(uint64_t seed) {
    Rng rng(seed);
    for (auto& b : encoder) b.init_params(rng);
    fc.init_params(rng);
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < encoder.size(); ++i) encoder[i].collect("enc" + std::to_string(i + 1), out);
    fc.collect("fc", out);
    return out;
  }

  std::vector<NamedTensor> buffers() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < encoder.size(); ++i)
      encoder[i].collect_buffers("enc" + std::to_string(i + 1), out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Siamese verifier: a shared 5-block k3 s2 tower (64,128,256,256,256 maps)
// with average pooling, fused by element-wise |a-b| on the pooled embeddings,
// scored through fc128-fc32-fc1 with sigmoid. The fusion is symmetric, so
// score(a,b) == score(b,a) exactly.
// ---------------------------------------------------------------------------
struct SiameseNet {
  // conv k3 s2 p1 -> batch norm -> LeakyReLU(0.2)
  struct TowerBlock {
    Conv2dLayer conv;
    BatchNorm2dLayer bn;
    TowerBlock() = default;
    TowerBlock(int in_ch, int out_ch) : conv(in_ch, out_ch, 3, 2, 1), bn(out_ch) {}
    Tensor forward(const Tensor& x, bool training) {
      return leaky_relu(bn.forward(conv.forward(x), training), 0.2f);
    }
    void init_params(Rng& rng) {
      conv.init_params(rng);
      bn.init_params(rng);
    }
  };

  float multiplier = 1.0f;
  int image_size = 96;
  std::vector<TowerBlock> tower;
  LinearLayer fc1, fc2, fc3;

  SiameseNet() = default;
  SiameseNet(float width_multiplier, int image_size_)
      : multiplier(width_multiplier), image_size(image_size_) {
    const int c1 = scaled_channels(64, multiplier);
    const int c2 = scaled_channels(128, multiplier);
    const int c3 = scaled_channels(256, multiplier);
    tower = {TowerBlock(1, c1), TowerBlock(c1, c2), TowerBlock(c2, c3), TowerBlock(c3, c3),
             TowerBlock(c3, c3)};
    const int emb = embedding_size();
    fc1 = LinearLayer(emb, 128);
    fc2 = LinearLayer(128, 32);
    fc3 = LinearLayer(32, 1);
  }

  int embedding_size() const {
    int s = image_size;
    for (size_t i = 0; i < 5; ++i) s = (s + 2 - 3) / 2 + 1;  // conv k3 s2 p1
    if (s >= 2) s = (s - 2) / 2 + 1;                         // avg pool k2 s2, floor
    return scaled_channels(256, multiplier) * s * s;
  }

  // Shared-weight embedding of one branch.
  Tensor embed(const Tensor& x, bool training, ShapeTrace* trace = nullptr) {
    detail::expect(x.rank() == 4 && x.dim(1) == 1,
                   "siamese: input must be (N,1,H,W), got " + detail::shape_str(x.shape()));
    Tensor h = x;
    for (auto& block : tower) {
      h = block.forward(h, training);
      if (trace) trace->push_back(h.shape());
    }
    // Inputs below 64 px reach the pool already at 1x1; the pool then has
    // nothing to collapse and is skipped.
    if (h.dim(2) >= 2 && h.dim(3) >= 2) h = avg_pool2d(h, 2, 2);
    if (trace) trace->push_back(h.shape());
    return flatten(h);
  }

  Tensor forward_pair(const Tensor& a, const Tensor& b, bool training) {
    detail::expect(a.shape() == b.shape(), "siamese: pair inputs must share a shape");
    const Tensor ea = embed(a, training);
    const Tensor eb = embed(b, training);
    Tensor h = abs_diff(ea, eb);
    h = relu(fc1.forward(h));
    h = relu(fc2.forward(h));
    return sigmoid(fc3.forward(h));
  }

  void init_weights(uint64_t seed) {
    Rng rng(seed);
    for (auto& b : tower) b.init_params(rng);
    fc1.init_params(rng);
    fc2.init_params(rng);
    fc3.init_params(rng);
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < tower.size(); ++i) {
      tower[i].conv.collect("tower" + std::to_string(i + 1) + ".conv", out);
      tower[i].bn.collect("tower" + std::to_string(i + 1) + ".bn", out);
    }
    fc1.collect("fc1", out);
    fc2.collect("fc2", out);
    fc3.collect("fc3", out);
    return out;
  }

  std::vector<NamedTensor> buffers() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < tower.size(); ++i) {
      tower[i].bn.collect_buffers("tower" + std::to_string(i + 1) + ".bn", out);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Shared parameter helpers.
// ---------------------------------------------------------------------------

inline size_t parameter_count(const std::vector<NamedTensor>& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

// FNV-1a over the raw float bytes of every tensor, in list order.
inline uint64_t parameter_hash(const std::vector<NamedTensor>& params) {
  uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const void* ptr, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(ptr);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params) {
    mix_bytes(p.name.data(), p.name.size());
    mix_bytes(p.tensor.data().data(), p.tensor.numel() * sizeof(float));
  }
  return h;
}

inline void set_requires_grad(const std::vector<NamedTensor>& params, bool value) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(value);
  }
}

}  // namespace facedepth
