#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/dataprep.hpp"
#include "facedepth/image.hpp"
#include "facedepth/models.hpp"
#include "facedepth/ops.hpp"

// Pixel-wise evaluation suite and the face-verification protocol. Every
// metric is computed per image and averaged over the set. Target pixels <= 0
// (depth holes) are excluded from relative and log metrics but kept in the
// absolute rows; predictions are floored at a tiny epsilon inside logs.

namespace facedepth {

enum class ValueSpace { k8Bit, kMillimeters };

inline const char* value_space_name(ValueSpace s) {
  return s == ValueSpace::k8Bit ? "8bit" : "millimeters";
}

struct MetricReport {
  double l1_norm = 0.0;
  double l2_norm = 0.0;
  std::optional<double> abs_rel;
  std::optional<double> sq_rel;
  double rmse_lin = 0.0;
  std::optional<double> rmse_log;
  std::optional<double> rmse_scale_inv;
  std::optional<double> delta1;
  std::optional<double> delta2;
  std::optional<double> delta3;
  std::optional<double> face_verification_acc;
  int n_images = 0;
  long excluded_pixels = 0;
  ValueSpace value_space = ValueSpace::k8Bit;

  bool pixel_metrics_complete() const {
    return abs_rel && sq_rel && rmse_log && rmse_scale_inv && delta1 && delta2 && delta3;
  }
};

namespace detail {
constexpr double kLogFloor = 1e-6;
}

inline MetricReport pixelwise_report(const std::vector<ImageF>& predictions,
                                     const std::vector<ImageF>& targets, ValueSpace space) {
  if (predictions.empty() || predictions.size() != targets.size()) {
    throw std::invalid_argument("pixelwise_report: empty or misaligned image lists");
  }
  MetricReport rep;
  rep.value_space = space;
  rep.n_images = static_cast<int>(predictions.size());

  double sum_l1 = 0, sum_l2 = 0, sum_rmse = 0;
  double sum_abs_rel = 0, sum_sq_rel = 0, sum_rmse_log = 0, sum_si = 0;
  double sum_d1 = 0, sum_d2 = 0, sum_d3 = 0;
  int images_with_valid = 0;

  for (size_t i = 0; i < predictions.size(); ++i) {
    const ImageF& y = predictions[i];
    const ImageF& t = targets[i];
    if (y.height != t.height || y.width != t.width) {
      throw std::invalid_argument("pixelwise_report: image " + std::to_string(i) +
                                  " extent mismatch");
    }
    const size_t n_px = y.px.size();
    double abs_sum = 0, sq_sum = 0;
    double rel_sum = 0, rel_sq_sum = 0, log_sq_sum = 0, log_sum = 0;
    long d1 = 0, d2 = 0, d3 = 0;
    long valid = 0;
    for (size_t p = 0; p < n_px; ++p) {
      const double d = y.px[p] - t.px[p];
      abs_sum += std::fabs(d);
      sq_sum += d * d;
      if (t.px[p] <= 0.0) {
        ++rep.excluded_pixels;
        continue;
      }
      ++valid;
      rel_sum += std::fabs(d) / t.px[p];
      rel_sq_sum += d * d / t.px[p];
      const double dl = std::log(std::max(y.px[p], detail::kLogFloor)) - std::log(t.px[p]);
      log_sq_sum += dl * dl;
      log_sum += dl;
      if (y.px[p] > 0.0) {
        const double ratio = std::max(y.px[p] / t.px[p], t.px[p] / y.px[p]);
        if (ratio < 1.25) ++d1;
        if (ratio < 1.25 * 1.25) ++d2;
        if (ratio < 1.25 * 1.25 * 1.25) ++d3;
      }
    }
    sum_l1 += abs_sum / static_cast<double>(n_px);
    sum_l2 += std::sqrt(sq_sum);
    sum_rmse += std::sqrt(sq_sum / static_cast<double>(n_px));
    if (valid > 0) {
      ++images_with_valid;
      sum_abs_rel += rel_sum / valid;
      sum_sq_rel += rel_sq_sum / valid;
      sum_rmse_log += std::sqrt(log_sq_sum / valid);
      const double mean_dl = log_sum / valid;
      sum_si += std::sqrt(std::max(0.0, log_sq_sum / valid - mean_dl * mean_dl));
      sum_d1 += static_cast<double>(d1) / valid;
      sum_d2 += static_cast<double>(d2) / valid;
      sum_d3 += static_cast<double>(d3) / valid;
    }
  }

  const double n_img = static_cast<double>(rep.n_images);
  rep.l1_norm = sum_l1 / n_img;
  rep.l2_norm = sum_l2 / n_img;
  rep.rmse_lin = sum_rmse / n_img;
  if (images_with_valid > 0) {
    const double nv = images_with_valid;
    rep.abs_rel = sum_abs_rel / nv;
    rep.sq_rel = sum_sq_rel / nv;
    rep.rmse_log = sum_rmse_log / nv;
    rep.rmse_scale_inv = sum_si / nv;
    rep.delta1 = sum_d1 / nv;
    rep.delta2 = sum_d2 / nv;
    rep.delta3 = sum_d3 / nv;
  }
  return rep;
}

// Linear 8-bit quantization of a millimeter depth map over a fixed range;
// missing values stay 0 and fall under the hole exclusion downstream.
inline ImageF quantize_depth_8bit(const ImageU16& depth, const DepthRange& range) {
  range.validate();
  ImageF out(depth.height, depth.width);
  const double span = range.max_mm - range.min_mm;
  for (size_t i = 0; i < depth.px.size(); ++i) {
    if (depth.px[i] == 0) {
      out.px[i] = 0.0;
      continue;
    }
    const double unit = (static_cast<double>(depth.px[i]) - range.min_mm) / span;
    out.px[i] = std::lround(std::min(std::max(unit, 0.0), 1.0) * 255.0);
  }
  return out;
}

// --------------------------------------------------------------------------
// Face verification.
// --------------------------------------------------------------------------

// Fraction of pairs the thresholded similarity labels correctly. Evaluation
// runs the network in eval mode (running batch-norm statistics, no updates).
inline double verification_accuracy(SiameseNet& net, const std::vector<VerificationPair>& pairs,
                                    const std::vector<Tensor>& images) {
  if (pairs.empty()) throw std::invalid_argument("verification_accuracy: empty pair list");
  long correct = 0;
  const size_t batch = 64;
  for (size_t base = 0; base < pairs.size(); base += batch) {
    const size_t n = std::min(batch, pairs.size() - base);
    std::vector<Tensor> lhs, rhs;
    lhs.reserve(n);
    rhs.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      lhs.push_back(images.at(static_cast<size_t>(pairs[base + i].index_a)));
      rhs.push_back(images.at(static_cast<size_t>(pairs[base + i].index_b)));
    }
    Tensor score = net.forward_pair(stack(lhs), stack(rhs), /*training=*/false);
    for (size_t i = 0; i < n; ++i) {
      const bool predicted_same = score.data()[i] > 0.5f;
      if (predicted_same == pairs[base + i].same_subject) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// --------------------------------------------------------------------------
// Table of verification accuracy over {A1, A2, A1 u A2} x {S123, S45, all},
// on original and on generated depth maps.
// --------------------------------------------------------------------------

struct SubsetCell {
  long pair_count = 0;
  bool defined = false;
  double accuracy_original = 0.0;
  double accuracy_generated = 0.0;
};

struct SubsetReport {
  // rows: A1, A2, both; cols: S123, S45, all
  SubsetCell cells[3][3];

  static const char* row_label(int r) {
    static const char* labels[] = {"A1", "A2", "A1uA2"};
    return labels[r];
  }
  static const char* col_label(int c) {
    static const char* labels[] = {"S123", "S45", "all"};
    return labels[c];
  }
};

inline SubsetReport subset_report(SiameseNet& net, const std::vector<VerificationPair>& pairs,
                                  const std::vector<FaceSample>& samples,
                                  const std::vector<Tensor>& original_images,
                                  const std::vector<Tensor>& generated_images) {
  auto row_ok = [&](int row, const FaceSample& s) {
    if (row == 2) return true;
    const AngleSubset a = angle_subset(s);
    return row == 0 ? a == AngleSubset::kA1 : a == AngleSubset::kA2;
  };
  auto col_ok = [&](int col, const FaceSample& s) {
    if (col == 2) return true;
    const SequenceSubset q = sequence_subset(s);
    return col == 0 ? q == SequenceSubset::kS123 : q == SequenceSubset::kS45;
  };

  SubsetReport rep;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::vector<VerificationPair> cell_pairs;
      for (const auto& p : pairs) {
        const FaceSample& a = samples.at(static_cast<size_t>(p.index_a));
        const FaceSample& b = samples.at(static_cast<size_t>(p.index_b));
        if (row_ok(r, a) && row_ok(r, b) && col_ok(c, a) && col_ok(c, b)) {
          cell_pairs.push_back(p);
        }
      }
      SubsetCell& cell = rep.cells[r][c];
      cell.pair_count = static_cast<long>(cell_pairs.size());
      if (cell_pairs.empty()) continue;  // flagged by defined == false
      cell.defined = true;
      cell.accuracy_original = verification_accuracy(net, cell_pairs, original_images);
      cell.accuracy_generated = verification_accuracy(net, cell_pairs, generated_images);
    }
  }
  return rep;
}

// --------------------------------------------------------------------------
// Report serialization, one row per metric in the reference order.
// --------------------------------------------------------------------------

struct ReportRow {
  std::string label;
  std::optional<double> value;
};

inline std::vector<ReportRow> report_rows(const MetricReport& rep) {
  return {
      {"L1 Norm", rep.l1_norm},
      {"L2 Norm", rep.l2_norm},
      {"Absolute Diff", rep.abs_rel},
      {"Squared Diff", rep.sq_rel},
      {"RMSE_lin", rep.rmse_lin},
      {"RMSE_log", rep.rmse_log},
      {"RMSE_scale-inv", rep.rmse_scale_inv},
      {"delta<1.25", rep.delta1},
      {"delta<1.25^2", rep.delta2},
      {"delta<1.25^3", rep.delta3},
      {"Face Verification", rep.face_verification_acc},
  };
}

}  // namespace facedepth
