#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "facedepth/image.hpp"
#include "facedepth/rng.hpp"
#include "facedepth/tensor.hpp"

namespace facedepth {

// Raised when a frame cannot be used (empty depth window, degenerate crop).
// Callers skip and count such samples rather than aborting.
struct UnusableSampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One paired frame: gray-level image plus depth map in millimeters with the
// dataset annotations needed by the crop and the subset protocol.
struct FaceSample {
  ImageU8 gray;
  ImageU16 depth;
  int subject_id = 0;
  int sequence_id = 1;
  int frame = 0;
  float center_x = 0.0f;  // head center, pixels
  float center_y = 0.0f;
  float yaw = 0.0f;  // degrees
  float pitch = 0.0f;
  float roll = 0.0f;
  std::string gray_path;
  std::string depth_path;
};

// Crop geometry: box extent is focal * face-extent / head-distance.
struct CropParams {
  float fx = 365.0f;  // focal lengths, pixels
  float fy = 365.0f;
  float rx_mm = 320.0f;  // average face extents, mm
  float ry_mm = 320.0f;
  int center_window_radius = 5;  // head-center depth averaging window
  int out_size = 96;

  void validate() const {
    if (!(fx > 0.0f && fy > 0.0f && rx_mm > 0.0f && ry_mm > 0.0f)) {
      throw std::invalid_argument("crop params: focal lengths and face extents must be positive");
    }
    if (center_window_radius < 0) {
      throw std::invalid_argument("crop params: averaging radius must be >= 0");
    }
    if (out_size < 8) throw std::invalid_argument("crop params: output size too small");
  }
};

struct VerificationPair {
  int index_a = 0;  // indices into the sample list the pair set was built from
  int index_b = 0;
  bool same_subject = false;
  std::string path_a;  // depth-map paths, for the serialized pair list
  std::string path_b;
};

enum class AngleSubset { kA1, kA2 };
enum class SequenceSubset { kS123, kS45 };

// --------------------------------------------------------------------------
// Head distance and the dynamic face crop.
// --------------------------------------------------------------------------

// Mean of the non-missing depth values in the (2r+1)^2 window around the
// head center, clipped to image bounds.
inline double estimate_head_distance(const ImageU16& depth, int cx, int cy, int radius) {
  if (radius < 0) throw std::invalid_argument("estimate_head_distance: radius must be >= 0");
  const int r0 = std::max(0, cy - radius), r1 = std::min(depth.height - 1, cy + radius);
  const int c0 = std::max(0, cx - radius), c1 = std::min(depth.width - 1, cx + radius);
  if (r0 > r1 || c0 > c1) {
    throw std::invalid_argument("estimate_head_distance: window does not intersect the image");
  }
  double sum = 0.0;
  long count = 0;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const uint16_t v = depth.at(r, c);
      if (v > 0) {
        sum += v;
        ++count;
      }
    }
  }
  if (count == 0) {
    throw UnusableSampleError("estimate_head_distance: no valid depth in window");
  }
  return sum / static_cast<double>(count);
}

// Box extents in pixels for a head at distance d_mm: (fx*Rx/D, fy*Ry/D).
inline std::pair<double, double> crop_box_size(const CropParams& p, double d_mm) {
  if (!(d_mm > 0.0)) throw std::invalid_argument("crop_box_size: distance must be positive");
  return {static_cast<double>(p.fx) * p.rx_mm / d_mm, static_cast<double>(p.fy) * p.ry_mm / d_mm};
}

namespace detail {

// Bilinear resample with half-pixel centers; used for gray crops.
inline ImageU8 resize_bilinear(const ImageU8& src, int r0, int c0, int h, int w, int out) {
  ImageU8 dst(out, out);
  const double sy = static_cast<double>(h) / out;
  const double sx = static_cast<double>(w) / out;
  for (int r = 0; r < out; ++r) {
    double fy = (r + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * src.at(r0 + y0, c0 + x0) +
                                   wx * src.at(r0 + y0, c0 + x1)) +
                       wy * ((1 - wx) * src.at(r0 + y1, c0 + x0) +
                             wx * src.at(r0 + y1, c0 + x1));
      dst.at(r, c) = static_cast<uint8_t>(std::lround(std::min(std::max(v, 0.0), 255.0)));
    }
  }
  return dst;
}

// Nearest-neighbor resample; depth values are never interpolated across
// silhouette discontinuities.
inline ImageU16 resize_nearest(const ImageU16& src, int r0, int c0, int h, int w, int out) {
  ImageU16 dst(out, out);
  const double sy = static_cast<double>(h) / out;
  const double sx = static_cast<double>(w) / out;
  for (int r = 0; r < out; ++r) {
    int y = static_cast<int>((r + 0.5) * sy);
    y = std::min(std::max(y, 0), h - 1);
    for (int c = 0; c < out; ++c) {
      int x = static_cast<int>((c + 0.5) * sx);
      x = std::min(std::max(x, 0), w - 1);
      dst.at(r, c) = src.at(r0 + y, c0 + x);
    }
  }
  return dst;
}

}  // namespace detail

struct CropResult {
  ImageU8 gray;
  ImageU16 depth;
  double head_distance_mm = 0.0;
  int box_x0 = 0, box_y0 = 0, box_w = 0, box_h = 0;
};

// Cuts the distance-adaptive box around the annotated head center from both
// images and resizes to out_size (bilinear gray, nearest depth). The same box
// is applied to both rasters.
inline CropResult face_crop(const FaceSample& sample, const CropParams& params) {
  params.validate();
  if (sample.gray.height != sample.depth.height || sample.gray.width != sample.depth.width) {
    throw std::invalid_argument("face_crop: gray and depth extents differ");
  }
  const int cx = static_cast<int>(std::lround(sample.center_x));
  const int cy = static_cast<int>(std::lround(sample.center_y));
  if (cx < 0 || cx >= sample.depth.width || cy < 0 || cy >= sample.depth.height) {
    throw std::invalid_argument("face_crop: head center outside image bounds");
  }
  const double d = estimate_head_distance(sample.depth, cx, cy, params.center_window_radius);
  const auto [bw, bh] = crop_box_size(params, d);

  int x0 = static_cast<int>(std::lround(cx - bw / 2.0));
  int y0 = static_cast<int>(std::lround(cy - bh / 2.0));
  int x1 = static_cast<int>(std::lround(cx + bw / 2.0));
  int y1 = static_cast<int>(std::lround(cy + bh / 2.0));
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(sample.depth.width, x1);
  y1 = std::min(sample.depth.height, y1);
  const int w = x1 - x0, h = y1 - y0;
  if (w < 8 || h < 8) {
    throw UnusableSampleError("face_crop: clamped box degenerate (" + std::to_string(w) + "x" +
                              std::to_string(h) + ")");
  }

  CropResult out;
  out.gray = detail::resize_bilinear(sample.gray, y0, x0, h, w, params.out_size);
  out.depth = detail::resize_nearest(sample.depth, y0, x0, h, w, params.out_size);
  out.head_distance_mm = d;
  out.box_x0 = x0;
  out.box_y0 = y0;
  out.box_w = w;
  out.box_h = h;
  return out;
}

// --------------------------------------------------------------------------
// Protocol subsets.
// --------------------------------------------------------------------------

// A1 holds frontal samples: every head angle within +/-10 degrees, boundary
// inclusive. Everything else is A2.
inline AngleSubset angle_subset(const FaceSample& s) {
  const bool frontal = std::fabs(s.yaw) <= 10.0f && std::fabs(s.pitch) <= 10.0f &&
                       std::fabs(s.roll) <= 10.0f;
  return frontal ? AngleSubset::kA1 : AngleSubset::kA2;
}

inline SequenceSubset sequence_subset(const FaceSample& s) {
  if (s.sequence_id < 1 || s.sequence_id > 5) {
    throw std::domain_error("sequence_subset: sequence id must be in [1,5], got " +
                            std::to_string(s.sequence_id));
  }
  return s.sequence_id <= 3 ? SequenceSubset::kS123 : SequenceSubset::kS45;
}

inline const std::set<int>& default_test_subjects() {
  static const std::set<int> subjects{10, 14, 16, 20};
  return subjects;
}

// Disjoint cross-subject partition by subject id.
inline std::pair<std::vector<FaceSample>, std::vector<FaceSample>> split_train_test(
    const std::vector<FaceSample>& samples, const std::set<int>& test_subjects) {
  std::vector<FaceSample> train, test;
  for (const auto& s : samples) {
    (test_subjects.count(s.subject_id) ? test : train).push_back(s);
  }
  return {std::move(train), std::move(test)};
}

inline std::pair<std::vector<FaceSample>, std::vector<FaceSample>> split_train_test(
    const std::vector<FaceSample>& samples) {
  return split_train_test(samples, default_test_subjects());
}

// --------------------------------------------------------------------------
// Verification pairs.
// --------------------------------------------------------------------------

// Seeded, duplicate-free pair list with an exact count of same-subject pairs
// (round(n_pairs * balance)). Serializing the list freezes the experiment.
inline std::vector<VerificationPair> build_pair_set(const std::vector<FaceSample>& samples,
                                                    int n_pairs, double balance, uint64_t seed) {
  if (n_pairs <= 0) throw std::invalid_argument("build_pair_set: n_pairs must be positive");
  if (balance < 0.0 || balance > 1.0) {
    throw std::invalid_argument("build_pair_set: balance must be in [0,1]");
  }
  std::map<int, std::vector<int>> by_subject;
  for (size_t i = 0; i < samples.size(); ++i) {
    by_subject[samples[i].subject_id].push_back(static_cast<int>(i));
  }
  const int n_pos = static_cast<int>(std::lround(n_pairs * balance));
  const int n_neg = n_pairs - n_pos;

  std::vector<int> subjects_with_two;
  for (const auto& [sid, idx] : by_subject) {
    if (idx.size() >= 2) subjects_with_two.push_back(sid);
  }
  if (n_pos > 0 && subjects_with_two.empty()) {
    throw std::invalid_argument("build_pair_set: no subject has two samples for positive pairs");
  }
  if (n_neg > 0 && by_subject.size() < 2) {
    throw std::invalid_argument("build_pair_set: need at least two subjects for negative pairs");
  }

  std::vector<int> subject_ids;
  for (const auto& [sid, idx] : by_subject) subject_ids.push_back(sid);

  Rng rng(seed);
  std::set<std::pair<int, int>> seen;
  std::vector<VerificationPair> pairs;
  pairs.reserve(static_cast<size_t>(n_pairs));

  auto push_unique = [&](int a, int b, bool label) {
    const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
    if (a == b || seen.count(key)) return false;
    seen.insert(key);
    VerificationPair p;
    p.index_a = a;
    p.index_b = b;
    p.same_subject = label;
    p.path_a = samples[static_cast<size_t>(a)].depth_path;
    p.path_b = samples[static_cast<size_t>(b)].depth_path;
    pairs.push_back(std::move(p));
    return true;
  };

  const long max_attempts = 10000L * n_pairs;
  long attempts = 0;
  int made = 0;
  while (made < n_pos) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument("build_pair_set: cannot realize requested positive pairs");
    }
    const int sid = subjects_with_two[rng.below(subjects_with_two.size())];
    const auto& idx = by_subject[sid];
    const int a = idx[rng.below(idx.size())];
    const int b = idx[rng.below(idx.size())];
    if (push_unique(a, b, true)) ++made;
  }
  made = 0;
  while (made < n_neg) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument("build_pair_set: cannot realize requested negative pairs");
    }
    const int sa = subject_ids[rng.below(subject_ids.size())];
    const int sb = subject_ids[rng.below(subject_ids.size())];
    if (sa == sb) continue;
    const auto& ia = by_subject[sa];
    const auto& ib = by_subject[sb];
    if (push_unique(ia[rng.below(ia.size())], ib[rng.below(ib.size())], false)) ++made;
  }
  return pairs;
}

// --------------------------------------------------------------------------
// Normalization to and from the tanh range.
// --------------------------------------------------------------------------

struct DepthRange {
  double min_mm = 400.0;
  double max_mm = 2000.0;

  void validate() const {
    if (!(max_mm > min_mm) || min_mm <= 0.0) {
      throw std::invalid_argument("depth range: need 0 < min < max");
    }
  }
};

// Gray [0,255] -> [-1,1], shape (1,H,W).
inline Tensor normalize_gray(const ImageU8& img) {
  std::vector<float> v(img.px.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(img.px[i]) / 127.5f - 1.0f;
  return Tensor({1, img.height, img.width}, std::move(v));
}

inline ImageU8 denormalize_gray(const Tensor& t) {
  const auto& s = t.shape();
  const int h = s[s.size() - 2], w = s[s.size() - 1];
  ImageU8 img(h, w);
  for (size_t i = 0; i < img.px.size(); ++i) {
    const float v = std::min(std::max(t.data()[i], -1.0f), 1.0f);
    img.px[i] = static_cast<uint8_t>(std::lround((v + 1.0f) * 127.5f));
  }
  return img;
}

// Depth [min_mm, max_mm] -> [-1,1]; missing (0) maps to +1 (far plane).
inline Tensor normalize_depth(const ImageU16& img, const DepthRange& range) {
  range.validate();
  const double span = range.max_mm - range.min_mm;
  std::vector<float> v(img.px.size());
  for (size_t i = 0; i < v.size(); ++i) {
    if (img.px[i] == 0) {
      v[i] = 1.0f;
    } else {
      const double d = std::min(std::max(static_cast<double>(img.px[i]), range.min_mm),
                                range.max_mm);
      v[i] = static_cast<float>(2.0 * (d - range.min_mm) / span - 1.0);
    }
  }
  return Tensor({1, img.height, img.width}, std::move(v));
}

// Values outside [-1,1] clamp onto the range boundary.
inline ImageU16 denormalize_depth(const Tensor& t, const DepthRange& range) {
  range.validate();
  const auto& s = t.shape();
  const int h = s[s.size() - 2], w = s[s.size() - 1];
  const double span = range.max_mm - range.min_mm;
  ImageU16 img(h, w);
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double v = std::min(std::max(static_cast<double>(t.data()[i]), -1.0), 1.0);
    img.px[i] = static_cast<uint16_t>(std::lround(range.min_mm + (v + 1.0) / 2.0 * span));
  }
  return img;
}

}  // namespace facedepth
