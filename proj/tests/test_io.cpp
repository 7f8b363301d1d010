#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "facedepth/checkpoint.hpp"
#include "facedepth/config.hpp"
#include "facedepth/csv.hpp"
#include "facedepth/dataset_io.hpp"
#include "facedepth/models.hpp"
#include "facedepth/pgm.hpp"
#include "facedepth/synth.hpp"

using namespace facedepth;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("facedepth_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST(Pgm, EightBitRoundTrip) {
  TempDir tmp;
  ImageU8 img(5, 7);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<uint8_t>(i * 7 % 256);
  write_pgm(tmp.str("a.pgm"), img);
  const ImageU8 back = read_pgm8(tmp.str("a.pgm"));
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.px, img.px);
  EXPECT_FALSE(pgm_is_16bit(tmp.str("a.pgm")));
}

TEST(Pgm, SixteenBitRoundTripAndBigEndianLayout) {
  TempDir tmp;
  ImageU16 img(2, 2);
  img.px = {0x1234, 0x00FF, 0xFF00, 0xABCD};
  write_pgm(tmp.str("d.pgm"), img);
  const ImageU16 back = read_pgm16(tmp.str("d.pgm"));
  EXPECT_EQ(back.px, img.px);
  EXPECT_TRUE(pgm_is_16bit(tmp.str("d.pgm")));

  // Most significant byte first on disk.
  std::ifstream in(tmp.str("d.pgm"), std::ios::binary);
  std::string header;
  std::getline(in, header);  // P5
  std::getline(in, header);  // dims
  std::getline(in, header);  // maxval
  unsigned char b0 = in.get(), b1 = in.get();
  EXPECT_EQ(b0, 0x12);
  EXPECT_EQ(b1, 0x34);
}

TEST(Pgm, RejectsWrongDepthAndMissingFile) {
  TempDir tmp;
  write_pgm(tmp.str("a.pgm"), ImageU8(2, 2, 9));
  EXPECT_THROW(read_pgm16(tmp.str("a.pgm")), std::runtime_error);
  EXPECT_THROW(read_pgm8(tmp.str("nope.pgm")), std::runtime_error);
}

TEST(Csv, QuotingRoundTrip) {
  const std::vector<std::string> fields{"plain", "with,comma", "with\"quote", "with\nnewline"};
  const std::string joined = csv_join(fields);
  const auto back = csv_split(joined);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[0], "plain");
  EXPECT_EQ(back[1], "with,comma");
  EXPECT_EQ(back[2], "with\"quote");
}

TEST(Csv, FileRoundTrip) {
  TempDir tmp;
  std::vector<std::vector<std::string>> rows{{"a", "b"}, {"1,5", "x\"y"}};
  write_csv(tmp.str("t.csv"), rows);
  const auto back = read_csv(tmp.str("t.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1][0], "1,5");
  EXPECT_EQ(back[1][1], "x\"y");
}

TEST(DatasetIo, WriteReadRoundTripPreservesEverything) {
  TempDir tmp;
  const auto samples = synth_face_dataset(3, 4, 32, 11);
  write_dataset(tmp.str("data"), samples);
  const auto back = read_dataset(tmp.str("data"));
  ASSERT_EQ(back.size(), samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].subject_id, samples[i].subject_id);
    EXPECT_EQ(back[i].sequence_id, samples[i].sequence_id);
    EXPECT_EQ(back[i].frame, samples[i].frame);
    EXPECT_EQ(back[i].gray.px, samples[i].gray.px);
    EXPECT_EQ(back[i].depth.px, samples[i].depth.px);
    EXPECT_NEAR(back[i].yaw, samples[i].yaw, 1e-3);
    EXPECT_FALSE(back[i].depth_path.empty());
  }
}

TEST(DatasetIo, OrderedBySubjectSequenceFrame) {
  TempDir tmp;
  const auto samples = synth_face_dataset(3, 10, 32, 13);
  write_dataset(tmp.str("data"), samples);
  const auto back = read_dataset(tmp.str("data"));
  for (size_t i = 1; i < back.size(); ++i) {
    const auto key = std::make_tuple(back[i - 1].subject_id, back[i - 1].sequence_id,
                                     back[i - 1].frame);
    const auto next = std::make_tuple(back[i].subject_id, back[i].sequence_id, back[i].frame);
    EXPECT_LT(key, next);
  }
}

TEST(DatasetIo, PairListRoundTrip) {
  TempDir tmp;
  std::vector<VerificationPair> pairs(2);
  pairs[0] = {0, 1, true, "subject_01/0000_depth.pgm", "subject_01/0001_depth.pgm"};
  pairs[1] = {0, 2, false, "subject_01/0000_depth.pgm", "subject_02/0000_depth.pgm"};
  write_pair_list(tmp.str("pairs.csv"), pairs);
  const auto back = read_pair_list(tmp.str("pairs.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].path_a, pairs[0].path_a);
  EXPECT_TRUE(back[0].same_subject);
  EXPECT_FALSE(back[1].same_subject);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir tmp;
  GeneratorNet g(0.25f);
  g.init_weights(5);
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kGenerator;
  ckpt.width_multiplier = 0.25f;
  ckpt.image_size = 32;
  ckpt.epoch = 7;
  ckpt.config_snapshot = "[train]\nlr = 2e-4\n";
  ckpt.tensors = g.parameters();
  for (const auto& b : g.buffers()) ckpt.tensors.push_back(b);
  ckpt.has_optimizer = true;
  ckpt.optimizer = AdamState::for_params(g.parameters());
  ckpt.optimizer.step = 42;
  for (const auto& p : g.parameters()) ckpt.optimizer_names.push_back(p.name);

  save_checkpoint(tmp.str("g.dfc"), ckpt);
  const Checkpoint back = load_checkpoint(tmp.str("g.dfc"));
  EXPECT_EQ(back.kind, ModelKind::kGenerator);
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.config_snapshot, ckpt.config_snapshot);
  EXPECT_EQ(back.optimizer.step, 42);
  ASSERT_EQ(back.tensors.size(), ckpt.tensors.size());
  for (size_t i = 0; i < back.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, ckpt.tensors[i].name);
    EXPECT_EQ(back.tensors[i].tensor.data(), ckpt.tensors[i].tensor.data());
  }

  // Restoring into a fresh net reproduces the parameter hash exactly.
  GeneratorNet g2(0.25f);
  g2.init_weights(99);
  restore_tensors(g2.parameters(), back);
  EXPECT_EQ(parameter_hash(g2.parameters()), parameter_hash(g.parameters()));
  const AdamState opt = restore_optimizer(g2.parameters(), back);
  EXPECT_EQ(opt.step, 42);

  // Byte determinism of the writer.
  save_checkpoint(tmp.str("g2.dfc"), ckpt);
  std::ifstream f1(tmp.str("g.dfc"), std::ios::binary), f2(tmp.str("g2.dfc"), std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, CorruptionAndVersionRejected) {
  TempDir tmp;
  GeneratorNet g(1.0f / 16.0f);
  g.init_weights(1);
  Checkpoint ckpt;
  ckpt.tensors = g.parameters();
  save_checkpoint(tmp.str("g.dfc"), ckpt);

  // Flip one payload byte; the checksum must catch it.
  std::fstream f(tmp.str("g.dfc"), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(40);
  char c;
  f.seekg(40);
  f.get(c);
  f.seekp(40);
  f.put(static_cast<char>(c ^ 0x01));
  f.close();
  EXPECT_THROW(load_checkpoint(tmp.str("g.dfc")), std::runtime_error);

  // Unknown version: rewrite the version field and fix up the checksum.
  save_checkpoint(tmp.str("g2.dfc"), ckpt);
  std::ifstream in(tmp.str("g2.dfc"), std::ios::binary);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  raw[6] = 99;  // version lives after the 6-byte magic
  const uint32_t crc = facedepth::detail::crc32(raw.data(), raw.size() - 4);
  for (int i = 0; i < 4; ++i) raw[raw.size() - 4 + i] = static_cast<uint8_t>((crc >> (8 * i)) & 0xFF);
  std::ofstream out(tmp.str("g2.dfc"), std::ios::binary);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  out.close();
  EXPECT_THROW(load_checkpoint(tmp.str("g2.dfc")), std::runtime_error);
}

TEST(Config, ParsesSectionsAndDefaults) {
  const std::string text = R"(
# run configuration
[data]
dataset_dir = /tmp/ds
out_dir = /tmp/out
depth_min_mm = 500
depth_max_mm = 1800
test_subjects = 5, 6

[train]
lr = 0.0002
lambda_mse = 50
batch_size = 8
epochs = 3
seed = 11
width_multiplier = 0.125
image_size = 32

[crop]
fx = 370
fy = 370
)";
  const RunConfig cfg = parse_run_config(text);
  EXPECT_EQ(cfg.dataset_dir, "/tmp/ds");
  EXPECT_FLOAT_EQ(cfg.train.lambda_mse, 50.0f);
  EXPECT_EQ(cfg.train.batch_size, 8);
  EXPECT_EQ(cfg.test_subjects, (std::set<int>{5, 6}));
  EXPECT_FLOAT_EQ(cfg.crop.fx, 370.0f);
  EXPECT_FLOAT_EQ(cfg.train.beta1, 0.5f);    // defaults untouched
  EXPECT_FLOAT_EQ(cfg.train.beta2, 0.999f);
  EXPECT_DOUBLE_EQ(cfg.depth_range.min_mm, 500.0);
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_THROW(parse_run_config("[train]\nlearning_rate = 1\n"), std::runtime_error);
  EXPECT_THROW(parse_run_config("[optimizer]\nlr = 1\n"), std::runtime_error);
  EXPECT_THROW(parse_run_config("[train]\nlr = abc\n"), std::runtime_error);
  EXPECT_THROW(parse_run_config("[train]\nbatch_size = 1\n"), std::invalid_argument);
}

TEST(Config, ValidatedBeforeUse) {
  EXPECT_THROW(parse_run_config("[train]\nimage_size = 20\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("[data]\ndepth_min_mm = 900\ndepth_max_mm = 500\n"),
               std::invalid_argument);
}
