#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/csv.hpp"
#include "facedepth/dataprep.hpp"
#include "facedepth/pgm.hpp"

// On-disk dataset layout: one directory per subject (subject_NN), per frame
// NNNN_gray.pgm (8-bit) and NNNN_depth.pgm (16-bit, millimeters), plus an
// annotations.csv with frame, sequence, center_x, center_y, yaw, pitch, roll.

namespace facedepth {

namespace fs = std::filesystem;

inline std::string subject_dir_name(int subject_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject_%02d", subject_id);
  return buf;
}

inline std::string frame_stem(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", frame);
  return buf;
}

inline std::string format_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline void write_dataset(const std::string& root, const std::vector<FaceSample>& samples) {
  fs::create_directories(root);
  std::map<int, std::vector<const FaceSample*>> by_subject;
  for (const auto& s : samples) by_subject[s.subject_id].push_back(&s);
  for (const auto& [sid, list] : by_subject) {
    const fs::path dir = fs::path(root) / subject_dir_name(sid);
    fs::create_directories(dir);
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"frame", "sequence", "center_x", "center_y", "yaw", "pitch", "roll"});
    for (const FaceSample* s : list) {
      const std::string stem = frame_stem(s->frame);
      write_pgm((dir / (stem + "_gray.pgm")).string(), s->gray);
      write_pgm((dir / (stem + "_depth.pgm")).string(), s->depth);
      rows.push_back({std::to_string(s->frame), std::to_string(s->sequence_id),
                      format_float(s->center_x), format_float(s->center_y),
                      format_float(s->yaw), format_float(s->pitch), format_float(s->roll)});
    }
    write_csv((dir / "annotations.csv").string(), rows);
  }
}

// Loads every annotated frame; output ordered by (subject, sequence, frame).
// Paths in the returned samples are relative to the dataset root.
inline std::vector<FaceSample> read_dataset(const std::string& root) {
  if (!fs::is_directory(root)) {
    throw std::runtime_error("dataset: not a directory: " + root);
  }
  std::vector<FaceSample> samples;
  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("subject_", 0) == 0) {
      subject_dirs.push_back(entry.path());
    }
  }
  std::sort(subject_dirs.begin(), subject_dirs.end());
  for (const auto& dir : subject_dirs) {
    const std::string name = dir.filename().string();
    const int sid = std::stoi(name.substr(8));
    const fs::path ann = dir / "annotations.csv";
    if (!fs::exists(ann)) {
      throw std::runtime_error("dataset: missing annotations.csv in " + dir.string());
    }
    const auto rows = read_csv(ann.string());
    if (rows.empty() || rows[0].size() != 7 || rows[0][0] != "frame") {
      throw std::runtime_error("dataset: malformed annotations in " + ann.string());
    }
    for (size_t i = 1; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (row.size() != 7) {
        throw std::runtime_error("dataset: malformed annotation row in " + ann.string());
      }
      FaceSample s;
      s.subject_id = sid;
      s.frame = std::stoi(row[0]);
      s.sequence_id = std::stoi(row[1]);
      s.center_x = std::stof(row[2]);
      s.center_y = std::stof(row[3]);
      s.yaw = std::stof(row[4]);
      s.pitch = std::stof(row[5]);
      s.roll = std::stof(row[6]);
      const std::string stem = frame_stem(s.frame);
      const fs::path gray_path = dir / (stem + "_gray.pgm");
      const fs::path depth_path = dir / (stem + "_depth.pgm");
      s.gray = read_pgm8(gray_path.string());
      s.depth = read_pgm16(depth_path.string());
      s.gray_path = fs::relative(gray_path, root).string();
      s.depth_path = fs::relative(depth_path, root).string();
      samples.push_back(std::move(s));
    }
  }
  std::sort(samples.begin(), samples.end(), [](const FaceSample& a, const FaceSample& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    if (a.sequence_id != b.sequence_id) return a.sequence_id < b.sequence_id;
    return a.frame < b.frame;
  });
  return samples;
}

// Pair-list file: CSV columns path_a, path_b, label in {0,1}.
inline void write_pair_list(const std::string& path, const std::vector<VerificationPair>& pairs) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"path_a", "path_b", "label"});
  for (const auto& p : pairs) {
    rows.push_back({p.path_a, p.path_b, p.same_subject ? "1" : "0"});
  }
  write_csv(path, rows);
}

struct PairRecord {
  std::string path_a;
  std::string path_b;
  bool same_subject = false;
};

inline std::vector<PairRecord> read_pair_list(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() != 3 || rows[0][0] != "path_a") {
    throw std::runtime_error("pair list: malformed header in " + path);
  }
  std::vector<PairRecord> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw std::runtime_error("pair list: malformed row in " + path);
    out.push_back({rows[i][0], rows[i][1], rows[i][2] == "1"});
  }
  return out;
}

}  // namespace facedepth
