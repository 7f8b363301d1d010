#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/adam.hpp"
#include "facedepth/tensor.hpp"

// Versioned binary checkpoint: magic "DFCKPT", header, named float32 tensor
// table, optional Adam state, trailing CRC32. All multi-byte values are
// little-endian on disk regardless of host.

namespace facedepth {

enum class ModelKind : uint8_t { kGenerator = 0, kDiscriminator = 1, kSiamese = 2 };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kGenerator: return "generator";
    case ModelKind::kDiscriminator: return "discriminator";
    default: return "siamese";
  }
}

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  ModelKind kind = ModelKind::kGenerator;
  float width_multiplier = 1.0f;
  int image_size = 96;
  int epoch = 0;
  std::string config_snapshot;
  std::vector<NamedTensor> tensors;  // parameters and buffers
  bool has_optimizer = false;
  AdamState optimizer;
  std::vector<std::string> optimizer_names;  // aligned with optimizer.m/v
};

namespace detail {

inline uint32_t crc32(const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u16(static_cast<uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) {
    for (float f : v) f32(f);
  }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    const uint8_t* b = take(2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32() {
    const uint8_t* b = take(4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const uint16_t n = u16();
    const uint8_t* b = take(n);
    return std::string(reinterpret_cast<const char*>(b), n);
  }
  std::vector<float> floats(size_t n) {
    std::vector<float> out(n);
    for (auto& f : out) f = f32();
    return out;
  }
  size_t offset() const { return off_; }

 private:
  const uint8_t* take(size_t n) {
    if (off_ + n > n_) throw std::runtime_error("checkpoint: truncated file");
    const uint8_t* p = p_ + off_;
    off_ += n;
    return p;
  }
  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes("DFCKPT", 6);
  w.u32(Checkpoint::kVersion);
  w.u8(static_cast<uint8_t>(ckpt.kind));
  w.f32(ckpt.width_multiplier);
  w.u32(static_cast<uint32_t>(ckpt.image_size));
  w.u32(static_cast<uint32_t>(ckpt.epoch));
  w.u32(static_cast<uint32_t>(ckpt.config_snapshot.size()));
  w.bytes(ckpt.config_snapshot.data(), ckpt.config_snapshot.size());

  w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    const auto& shape = t.tensor.shape();
    w.u32(static_cast<uint32_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<uint32_t>(d));
    w.floats(t.tensor.data());
  }

  w.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    if (ckpt.optimizer_names.size() != ckpt.optimizer.m.size()) {
      throw std::invalid_argument("checkpoint: optimizer names misaligned with state");
    }
    w.u64(static_cast<uint64_t>(ckpt.optimizer.step));
    w.u32(static_cast<uint32_t>(ckpt.optimizer.m.size()));
    for (size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
      w.str(ckpt.optimizer_names[i]);
      w.u32(static_cast<uint32_t>(ckpt.optimizer.m[i].size()));
      w.floats(ckpt.optimizer.m[i]);
      w.floats(ckpt.optimizer.v[i]);
    }
  }

  const uint32_t crc = detail::crc32(w.data().data(), w.data().size());
  detail::ByteWriter trailer;
  trailer.u32(crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.data().size()));
  out.write(reinterpret_cast<const char*>(trailer.data().data()), 4);
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 10) throw std::runtime_error("checkpoint: file too short: " + path);

  const size_t body = raw.size() - 4;
  const uint32_t stored_crc = static_cast<uint32_t>(raw[body]) |
                              (static_cast<uint32_t>(raw[body + 1]) << 8) |
                              (static_cast<uint32_t>(raw[body + 2]) << 16) |
                              (static_cast<uint32_t>(raw[body + 3]) << 24);
  if (detail::crc32(raw.data(), body) != stored_crc) {
    throw std::runtime_error("checkpoint: checksum mismatch: " + path);
  }

  detail::ByteReader r(raw.data(), body);
  char magic[6];
  std::memcpy(magic, raw.data(), 6);
  if (std::string(magic, 6) != "DFCKPT") {
    throw std::runtime_error("checkpoint: bad magic: " + path);
  }
  detail::ByteReader rr(raw.data() + 6, body - 6);
  const uint32_t version = rr.u32();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.kind = static_cast<ModelKind>(rr.u8());
  ckpt.width_multiplier = rr.f32();
  ckpt.image_size = static_cast<int>(rr.u32());
  ckpt.epoch = static_cast<int>(rr.u32());
  const uint32_t cfg_len = rr.u32();
  ckpt.config_snapshot.resize(cfg_len);
  for (uint32_t i = 0; i < cfg_len; ++i) ckpt.config_snapshot[i] = static_cast<char>(rr.u8());

  const uint32_t n_tensors = rr.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = rr.str();
    const uint32_t ndim = rr.u32();
    std::vector<int> shape(ndim);
    size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(rr.u32());
      numel *= static_cast<size_t>(d);
    }
    ckpt.tensors.push_back({name, Tensor(shape, rr.floats(numel))});
  }

  ckpt.has_optimizer = rr.u8() != 0;
  if (ckpt.has_optimizer) {
    ckpt.optimizer.step = static_cast<long>(rr.u64());
    const uint32_t n = rr.u32();
    for (uint32_t i = 0; i < n; ++i) {
      ckpt.optimizer_names.push_back(rr.str());
      const uint32_t numel = rr.u32();
      ckpt.optimizer.m.push_back(rr.floats(numel));
      ckpt.optimizer.v.push_back(rr.floats(numel));
    }
  }
  return ckpt;
}

// Copies checkpoint tensors into a model's parameter/buffer list by name.
// Every destination tensor must be present with an identical shape.
inline void restore_tensors(const std::vector<NamedTensor>& dst, const Checkpoint& ckpt) {
  for (const auto& d : dst) {
    const NamedTensor* found = nullptr;
    for (const auto& t : ckpt.tensors) {
      if (t.name == d.name) {
        found = &t;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint: missing tensor " + d.name);
    if (found->tensor.shape() != d.tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + d.name);
    }
    Tensor t = d.tensor;
    t.mutable_data() = found->tensor.data();
  }
}

// Restores Adam state in the order of `params`, validating names and shapes.
inline AdamState restore_optimizer(const std::vector<NamedTensor>& params,
                                   const Checkpoint& ckpt) {
  if (!ckpt.has_optimizer) throw std::runtime_error("checkpoint: no optimizer state stored");
  if (ckpt.optimizer_names.size() != params.size()) {
    throw std::runtime_error("checkpoint: optimizer entry count mismatch");
  }
  AdamState state;
  state.step = ckpt.optimizer.step;
  for (size_t i = 0; i < params.size(); ++i) {
    if (ckpt.optimizer_names[i] != params[i].name) {
      throw std::runtime_error("checkpoint: optimizer entry order mismatch at " +
                               params[i].name);
    }
    if (ckpt.optimizer.m[i].size() != params[i].tensor.numel()) {
      throw std::runtime_error("checkpoint: optimizer moment shape mismatch for " +
                               params[i].name);
    }
    state.m.push_back(ckpt.optimizer.m[i]);
    state.v.push_back(ckpt.optimizer.v[i]);
  }
  return state;
}

}  // namespace facedepth
