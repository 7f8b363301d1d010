#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "facedepth/dataprep.hpp"
#include "facedepth/rng.hpp"

// Procedural paired-face generator. Each subject is a parametric head --
// ellipsoid cranium, nose bump, carved eye sockets -- with per-subject random
// geometry. Depth maps are rendered by sphere-traced ray casting against the
// head's signed distance field; the gray image is Lambertian shading of the
// same surface under a fixed light, so the gray-to-depth mapping is exact
// and learnable by construction.

namespace facedepth {

struct SynthGeometry {
  // cranium semi-axes, mm
  double ax = 80, ay = 100, az = 85;
  // nose bump: protrusion length, sphere radius, vertical offset
  double nose_len = 20, nose_radius = 11, nose_y = 8;
  // eye sockets: radius, half-separation, height above nose, carve depth
  double eye_radius = 11, eye_sep = 30, eye_y = 18, eye_embed = 5;

  std::array<double, 10> as_array() const {
    return {ax, ay, az, nose_len, nose_radius, nose_y, eye_radius, eye_sep, eye_y, eye_embed};
  }
};

inline SynthGeometry synth_subject_geometry(uint64_t seed, int subject_id) {
  Rng rng(Rng::mix(seed, 0x5EED0000ull + static_cast<uint64_t>(subject_id)));
  SynthGeometry g;
  g.ax = rng.uniform(55.0, 95.0);
  g.ay = rng.uniform(75.0, 120.0);
  g.az = rng.uniform(60.0, 100.0);
  g.nose_len = rng.uniform(10.0, 32.0);
  g.nose_radius = rng.uniform(7.0, 16.0);
  g.nose_y = rng.uniform(0.0, 18.0);
  g.eye_radius = rng.uniform(8.0, 15.0);
  g.eye_sep = rng.uniform(22.0, 42.0);
  g.eye_y = rng.uniform(10.0, 28.0);
  g.eye_embed = rng.uniform(3.0, 7.0);
  return g;
}

namespace synth_detail {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double length(Vec3 v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(Vec3 v) {
  const double n = length(v);
  return n > 0 ? (1.0 / n) * v : Vec3{0, 0, 0};
}

struct Mat3 {
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  Vec3 apply(Vec3 v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Vec3 apply_transposed(Vec3 v) const {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
  }
};

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      r.m[i][j] = 0;
      for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
    }
  return r;
}

// Rotation from yaw (about y), pitch (about x), roll (about z), degrees.
inline Mat3 rotation(double yaw_deg, double pitch_deg, double roll_deg) {
  const double d2r = 3.14159265358979323846 / 180.0;
  const double cy = std::cos(yaw_deg * d2r), sy = std::sin(yaw_deg * d2r);
  const double cp = std::cos(pitch_deg * d2r), sp = std::sin(pitch_deg * d2r);
  const double cr = std::cos(roll_deg * d2r), sr = std::sin(roll_deg * d2r);
  Mat3 ry, rx, rz;
  ry.m[0][0] = cy;  ry.m[0][2] = sy;  ry.m[2][0] = -sy; ry.m[2][2] = cy;
  rx.m[1][1] = cp;  rx.m[1][2] = -sp; rx.m[2][1] = sp;  rx.m[2][2] = cp;
  rz.m[0][0] = cr;  rz.m[0][1] = -sr; rz.m[1][0] = sr;  rz.m[1][1] = cr;
  return matmul(rz, matmul(rx, ry));
}

// Signed distance of the head in local coordinates (face looks toward -z).
// Ellipsoid bound is the usual scaled under-estimate, safe for sphere
// tracing; nose is a union sphere, eye sockets carved by subtraction.
inline double head_sdf(const SynthGeometry& g, Vec3 p) {
  const Vec3 scaled{p.x / g.ax, p.y / g.ay, p.z / g.az};
  const double mins = std::min(g.ax, std::min(g.ay, g.az));
  double d = (length(scaled) - 1.0) * mins;

  const Vec3 nose_c{0.0, g.nose_y, -(g.az + g.nose_len - g.nose_radius)};
  d = std::min(d, length(p - nose_c) - g.nose_radius);

  const double socket_z = -(g.az + g.eye_radius - g.eye_embed);
  const Vec3 eye_l{-g.eye_sep, g.nose_y - g.eye_y, socket_z};
  const Vec3 eye_r{+g.eye_sep, g.nose_y - g.eye_y, socket_z};
  d = std::max(d, -(length(p - eye_l) - g.eye_radius));
  d = std::max(d, -(length(p - eye_r) - g.eye_radius));
  return d;
}

struct HeadPose {
  Vec3 center;  // world, mm; camera at origin looking +z
  Mat3 rot;
};

inline double posed_sdf(const SynthGeometry& g, const HeadPose& pose, Vec3 p) {
  return head_sdf(g, pose.rot.apply_transposed(p - pose.center));
}

inline Vec3 sdf_normal(const SynthGeometry& g, const HeadPose& pose, Vec3 p) {
  const double h = 0.5;
  const double dx = posed_sdf(g, pose, {p.x + h, p.y, p.z}) - posed_sdf(g, pose, {p.x - h, p.y, p.z});
  const double dy = posed_sdf(g, pose, {p.x, p.y + h, p.z}) - posed_sdf(g, pose, {p.x, p.y - h, p.z});
  const double dz = posed_sdf(g, pose, {p.x, p.y, p.z + h}) - posed_sdf(g, pose, {p.x, p.y, p.z - h});
  return normalized({dx, dy, dz});
}

// Sphere trace along ray origin + t*dir. Returns hit parameter or a negative
// value on miss.
inline double ray_cast(const SynthGeometry& g, const HeadPose& pose, Vec3 dir, double t_lo,
                       double t_hi) {
  double t = t_lo;
  for (int step = 0; step < 384 && t < t_hi; ++step) {
    const Vec3 p = t * dir;
    const double d = posed_sdf(g, pose, p);
    if (d < 0.05) return t;
    t += std::max(d * 0.9, 0.05);
  }
  return -1.0;
}

}  // namespace synth_detail

struct SynthConfig {
  int n_subjects = 6;
  int n_frames_per_subject = 50;
  int size = 96;
  uint64_t seed = 1;
  double far_plane_mm = 1600.0;
  uint8_t background_gray = 26;
};

// Renders one frame of one subject. Pure function of its arguments.
inline FaceSample synth_render_frame(const SynthConfig& cfg, int subject_id, int frame) {
  using namespace synth_detail;
  const SynthGeometry geom = synth_subject_geometry(cfg.seed, subject_id);
  Rng rng(Rng::mix(cfg.seed, 0xF4A3E0000ull + static_cast<uint64_t>(subject_id) * 100003ull +
                                 static_cast<uint64_t>(frame)));

  // Five sequences per subject in contiguous runs. Sequences 1-3 vary a
  // single angle (yaw, pitch, roll respectively); 4 and 5 vary all three.
  const int seq = 1 + (5 * frame) / std::max(1, cfg.n_frames_per_subject);
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  const double amp = 30.0;
  switch (seq) {
    case 1: yaw = rng.uniform(-amp, amp); break;
    case 2: pitch = rng.uniform(-amp, amp); break;
    case 3: roll = rng.uniform(-amp, amp); break;
    default:
      yaw = rng.uniform(-amp, amp);
      pitch = rng.uniform(-amp, amp);
      roll = rng.uniform(-amp, amp);
      break;
  }

  HeadPose pose;
  pose.rot = rotation(yaw, pitch, roll);
  const double dist = rng.uniform(850.0, 1050.0);
  pose.center = {rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0), dist};

  const double focal = 3.0 * cfg.size;  // pixels
  const double cx_img = cfg.size / 2.0, cy_img = cfg.size / 2.0;

  FaceSample s;
  s.subject_id = subject_id;
  s.sequence_id = seq;
  s.frame = frame;
  s.yaw = static_cast<float>(yaw);
  s.pitch = static_cast<float>(pitch);
  s.roll = static_cast<float>(roll);
  s.center_x = static_cast<float>(cx_img + focal * pose.center.x / pose.center.z);
  s.center_y = static_cast<float>(cy_img + focal * pose.center.y / pose.center.z);
  s.gray = ImageU8(cfg.size, cfg.size, cfg.background_gray);
  s.depth = ImageU16(cfg.size, cfg.size,
                     static_cast<uint16_t>(std::lround(cfg.far_plane_mm)));

  const Vec3 light = normalized({-0.4, -0.5, -0.75});
  const double reach = std::max({geom.ax, geom.ay, geom.az}) + geom.nose_len + 20.0;
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      const Vec3 dir = normalized({(c + 0.5 - cx_img) / focal, (r + 0.5 - cy_img) / focal, 1.0});
      const double t = ray_cast(geom, pose, dir, dist - reach, dist + reach);
      if (t < 0.0) continue;
      const Vec3 p = t * dir;
      const double depth_mm = p.z;
      s.depth.at(r, c) = static_cast<uint16_t>(std::lround(depth_mm));
      const Vec3 n = sdf_normal(geom, pose, p);
      const double shade = std::max(0.0, dot(n, light));
      const double value = 255.0 * (0.12 + 0.80 * shade);
      s.gray.at(r, c) = static_cast<uint8_t>(std::lround(std::min(value, 255.0)));
    }
  }
  return s;
}

// Full dataset ordered by (subject, sequence, frame).
inline std::vector<FaceSample> synth_face_dataset(int n_subjects, int n_frames_per_subject,
                                                  int size, uint64_t seed) {
  if (size % 16 != 0 || size <= 0) {
    throw std::invalid_argument("synth_face_dataset: size must be a positive multiple of 16");
  }
  if (n_subjects <= 0 || n_frames_per_subject <= 0) {
    throw std::invalid_argument("synth_face_dataset: counts must be positive");
  }
  SynthConfig cfg;
  cfg.n_subjects = n_subjects;
  cfg.n_frames_per_subject = n_frames_per_subject;
  cfg.size = size;
  cfg.seed = seed;
  std::vector<FaceSample> out;
  out.reserve(static_cast<size_t>(n_subjects) * n_frames_per_subject);
  for (int sid = 1; sid <= n_subjects; ++sid) {
    for (int f = 0; f < n_frames_per_subject; ++f) {
      out.push_back(synth_render_frame(cfg, sid, f));
    }
  }
  return out;
}

}  // namespace facedepth
