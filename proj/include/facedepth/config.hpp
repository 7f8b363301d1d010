#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/dataprep.hpp"
#include "facedepth/training.hpp"
#include "facedepth/verifier.hpp"

// Key = value run configuration with [section] headers. Unknown sections or
// keys are rejected; every field is validated before any compute starts.

namespace facedepth {

struct RunConfig {
  TrainConfig train;
  VerifierTrainConfig verifier;
  CropParams crop;
  DepthRange depth_range;
  std::string dataset_dir;
  std::string out_dir = "out";
  std::set<int> test_subjects = default_test_subjects();

  void validate() const {
    train.validate();
    verifier.validate();
    crop.validate();
    depth_range.validate();
  }
};

namespace detail {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string config_trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline float to_float(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const float f = std::stof(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return f;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

inline uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

inline std::set<int> to_int_set(const std::string& key, const std::string& v) {
  std::set<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = config_trim(item);
    if (!item.empty()) out.insert(to_int(key, item));
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  using detail::ConfigError;
  RunConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::config_trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config: malformed section at line " + std::to_string(line_no));
      section = t.substr(1, t.size() - 2);
      if (section != "data" && section != "train" && section != "verifier" && section != "crop") {
        throw ConfigError("config: unknown section [" + section + "]");
      }
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = detail::config_trim(t.substr(0, eq));
    const std::string value = detail::config_trim(t.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "data.dataset_dir") cfg.dataset_dir = value;
    else if (qual == "data.out_dir") cfg.out_dir = value;
    else if (qual == "data.depth_min_mm") cfg.depth_range.min_mm = detail::to_float(qual, value);
    else if (qual == "data.depth_max_mm") cfg.depth_range.max_mm = detail::to_float(qual, value);
    else if (qual == "data.test_subjects") cfg.test_subjects = detail::to_int_set(qual, value);
    else if (qual == "train.lr") cfg.train.lr = detail::to_float(qual, value);
    else if (qual == "train.beta1") cfg.train.beta1 = detail::to_float(qual, value);
    else if (qual == "train.beta2") cfg.train.beta2 = detail::to_float(qual, value);
    else if (qual == "train.lambda_mse") cfg.train.lambda_mse = detail::to_float(qual, value);
    else if (qual == "train.batch_size") cfg.train.batch_size = detail::to_int(qual, value);
    else if (qual == "train.epochs") cfg.train.epochs = detail::to_int(qual, value);
    else if (qual == "train.seed") cfg.train.seed = detail::to_u64(qual, value);
    else if (qual == "train.width_multiplier") cfg.train.width_multiplier = detail::to_float(qual, value);
    else if (qual == "train.image_size") cfg.train.image_size = detail::to_int(qual, value);
    else if (qual == "train.checkpoint_every") cfg.train.checkpoint_every = detail::to_int(qual, value);
    else if (qual == "verifier.lr") cfg.verifier.lr = detail::to_float(qual, value);
    else if (qual == "verifier.beta1") cfg.verifier.beta1 = detail::to_float(qual, value);
    else if (qual == "verifier.beta2") cfg.verifier.beta2 = detail::to_float(qual, value);
    else if (qual == "verifier.batch_size") cfg.verifier.batch_size = detail::to_int(qual, value);
    else if (qual == "verifier.epochs") cfg.verifier.epochs = detail::to_int(qual, value);
    else if (qual == "verifier.seed") cfg.verifier.seed = detail::to_u64(qual, value);
    else if (qual == "verifier.width_multiplier") cfg.verifier.width_multiplier = detail::to_float(qual, value);
    else if (qual == "verifier.n_train_pairs") cfg.verifier.n_train_pairs = detail::to_int(qual, value);
    else if (qual == "crop.fx") cfg.crop.fx = detail::to_float(qual, value);
    else if (qual == "crop.fy") cfg.crop.fy = detail::to_float(qual, value);
    else if (qual == "crop.rx_mm") cfg.crop.rx_mm = detail::to_float(qual, value);
    else if (qual == "crop.ry_mm") cfg.crop.ry_mm = detail::to_float(qual, value);
    else if (qual == "crop.center_window_radius") cfg.crop.center_window_radius = detail::to_int(qual, value);
    else if (qual == "crop.out_size") cfg.crop.out_size = detail::to_int(qual, value);
    else throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw detail::ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace facedepth
