#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "haanet/commands.hpp"
#include "haanet/haze.hpp"
#include "haanet/image_io.hpp"

using namespace haanet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("haanet_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double quantize(double v) { return std::floor(v * 255.0 + 0.5) / 255.0; }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

fs::path identity_checkpoint(const fs::path& dir) {
  NetWeights<float> w = NetWeights<float>::init(NetConfig{8, 1, true, true, true}, 3);
  const fs::path p = dir / "identity.haan";
  write_checkpoint(p, net_table(w));
  return p;
}

}  // namespace

TEST_CASE("ppm save/load quantizes with round half up") {
  const fs::path dir = scratch("ppm");
  Tensor<float> img({1, 3, 2, 3});
  const std::vector<float> v = {0.f, 1.f, 0.5f, -0.2f, 1.7f, 0.25f, 0.1f, 0.9f, 0.33f,
                                0.66f, 0.002f, 0.998f, 0.4f, 0.6f, 0.8f, 0.05f, 0.95f, 0.7f};
  for (std::size_t i = 0; i < v.size(); ++i) img[i] = v[i];
  save_ppm(dir / "a.ppm", img);
  const std::string bytes = slurp(dir / "a.ppm");
  CHECK(bytes.rfind("P6\n3 2\n255\n", 0) == 0);
  CHECK(bytes.size() == 11 + 18);
  const Tensor<float> back = load_ppm(dir / "a.ppm");
  CHECK(back.shape() == img.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double clamped = std::clamp<double>(v[i], 0.0, 1.0);
    CHECK(back[i] == doctest::Approx(quantize(clamped)).epsilon(1e-7));
    CHECK(std::abs(back[i] - clamped) <= 0.5 / 255 + 1e-7);
  }
  // 0.5 * 255 = 127.5 rounds up; channels interleave per pixel.
  CHECK(static_cast<unsigned char>(bytes[11 + 3 * 2]) == 128);

  std::ofstream(dir / "comment.ppm", std::ios::binary) << "P6\n# made by hand\n1 1\n255\n" << "\x10\x20\x30";
  const Tensor<float> c = load_ppm(dir / "comment.ppm");
  CHECK(c[0] == doctest::Approx(16.0 / 255));
  CHECK(c[2] == doctest::Approx(48.0 / 255));

  std::ofstream(dir / "p3.ppm") << "P3\n1 1\n255\n1 2 3\n";
  CHECK_THROWS_AS(load_ppm(dir / "p3.ppm"), ImageIoError);
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n2 2\n255\n" << "abc";
  CHECK_THROWS_AS(load_ppm(dir / "short.ppm"), ImageIoError);
  std::ofstream(dir / "deep.ppm", std::ios::binary) << "P6\n1 1\n65535\n" << "abcdef";
  CHECK_THROWS_AS(load_ppm(dir / "deep.ppm"), ImageIoError);
  CHECK_THROWS_AS(load_ppm(dir / "absent.ppm"), ImageIoError);
}

TEST_CASE("reflect pad mirrors without repeating the edge") {
  Tensor<float> img({1, 3, 3, 6});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i);
  const Tensor<float> p = reflect_pad(img, 4);
  CHECK(p.shape() == Shape{1, 3, 4, 8});
  for (int c = 0; c < 3; ++c) {
    CHECK(p.at(0, c, 3, 0) == img.at(0, c, 1, 0));  // row 3 -> 2*(3-1)-3 = 1
    CHECK(p.at(0, c, 0, 6) == img.at(0, c, 0, 4));  // col 6 -> 2*(6-1)-6 = 4
    CHECK(p.at(0, c, 0, 7) == img.at(0, c, 0, 3));
    CHECK(p.at(0, c, 3, 7) == img.at(0, c, 1, 3));
  }
  CHECK(testing::bit_equal(crop(p, 0, 0, 3, 6), img));
  CHECK(reflect_pad(Tensor<float>({1, 3, 8, 4}), 4).shape() == Shape{1, 3, 8, 4});
  CHECK_THROWS(reflect_pad(Tensor<float>({1, 3, 1, 1}), 4));
  CHECK_THROWS(reflect_pad(Tensor<float>({1, 3, 3, 2}), 4));
  CHECK(side_by_side(img, img).shape() == Shape{1, 3, 3, 12});
}

TEST_CASE("manifest text round trip") {
  const fs::path dir = scratch("manifest");
  Manifest m;
  m.size = 32;
  m.seed = 18446744073709551557ull;
  m.entries.push_back({"0000", 12345678901234567ull, 0.123456789012345678, {0.7, 0.8000000000000001, 0.95}});
  write_manifest(dir / kManifestName, m);
  const Manifest back = read_manifest(dir / kManifestName);
  CHECK(back.size == 32);
  CHECK(back.seed == m.seed);
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].id == "0000");
  CHECK(back.entries[0].seed == m.entries[0].seed);
  CHECK(back.entries[0].beta == m.entries[0].beta);
  CHECK(back.entries[0].airlight[1] == m.entries[0].airlight[1]);
  std::ofstream(dir / "bad.txt") << "size 4\nseed x\n";
  CHECK_THROWS(read_manifest(dir / "bad.txt"));
}

TEST_CASE("synth is byte-identical per seed and physically consistent") {
  const fs::path a = scratch("synth_a");
  const fs::path b = scratch("synth_b");
  std::ostringstream log;
  const Manifest m = cmd_synth({7, 2, 32, a}, log);
  cmd_synth({7, 2, 32, b}, log);
  REQUIRE(m.entries.size() == 2);
  for (const ManifestEntry& e : m.entries) {
    const PairPaths pa = pair_paths(a, e.id);
    const PairPaths pb = pair_paths(b, e.id);
    CHECK(slurp(pa.clean) == slurp(pb.clean));
    CHECK(slurp(pa.hazy) == slurp(pb.hazy));
    CHECK(slurp(pa.transmission) == slurp(pb.transmission));
  }
  CHECK(slurp(a / kManifestName) == slurp(b / kManifestName));

  // Rounding is monotone, so quantized hazy stays between quantized clean and A.
  for (const ManifestEntry& e : m.entries) {
    const PairPaths p = pair_paths(a, e.id);
    const Tensor<float> clean = load_ppm(p.clean);
    const Tensor<float> hazy = load_ppm(p.hazy);
    for (int c = 0; c < 3; ++c) {
      const float qa = static_cast<float>(quantize(e.airlight[c]));
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          const float j = clean.at(0, c, y, x);
          const float i = hazy.at(0, c, y, x);
          CHECK((i >= std::min(j, qa) && i <= std::max(j, qa)));
        }
      }
    }
  }

  // Exact inversion from the stored beta/A and transmission map. Two 8-bit
  // inputs each perturb J by at most (0.5/255)/t, and the clean file adds
  // another 0.5/255, so t >= 0.5 keeps the error under 1/(255*0.5) + 0.5/255.
  const double bound = 1.0 / (255 * 0.5) + 0.5 / 255;
  REQUIRE(bound < 1e-2);
  for (const ManifestEntry& e : read_manifest(a / kManifestName).entries) {
    const PairPaths p = pair_paths(a, e.id);
    const Tensor<double> clean = load_ppm(p.clean).cast<double>();
    const Tensor<double> hazy = load_ppm(p.hazy).cast<double>();
    const Tensor<float> tmap = load_ppm(p.transmission);
    Tensor<double> t({1, 1, 32, 32});
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) t.at(0, 0, y, x) = tmap.at(0, 0, y, x);
    }
    const Airlight air{e.airlight[0], e.airlight[1], e.airlight[2]};
    const Tensor<double> j = invert_exact(hazy, t, air);
    double worst = 0.0;
    int counted = 0;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          if (t.at(0, 0, y, x) < 0.5) continue;
          ++counted;
          worst = std::max(worst, std::abs(j.at(0, c, y, x) - clean.at(0, c, y, x)));
        }
      }
    }
    CHECK(worst < bound);
    CHECK(counted > 0);
  }

  CHECK_THROWS(cmd_synth({7, 1, 30, scratch("synth_bad")}, log));
}

TEST_CASE("eval with an identity checkpoint reproduces hazy metrics") {
  const fs::path dir = scratch("eval");
  std::ostringstream log;
  cmd_synth({11, 3, 32, dir / "data"}, log);
  fs::remove(pair_paths(dir / "data", "0001").hazy);
  const fs::path ckpt = identity_checkpoint(dir);
  const std::vector<EvalRow> rows = cmd_eval({ckpt, dir / "data", dir / "eval.csv"}, log);
  CHECK(log.str().find("missing pair 0001") != std::string::npos);
  REQUIRE(rows.size() == 3);
  for (const EvalRow& r : rows) {
    CHECK(r.psnr_pred == r.psnr_hazy);
    CHECK(r.ssim_pred == r.ssim_hazy);
  }

  const auto csv = read_csv(dir / "eval.csv");
  REQUIRE(csv.size() == 4);
  CHECK(csv[0] == std::vector<std::string>{"pair_id", "psnr_hazy", "psnr_pred", "ssim_hazy",
                                           "ssim_pred"});
  CHECK(csv[3][0] == "mean");
  // Each cell carries at most 5e-7 rounding, so the mean of the printed
  // rows and the printed mean differ by at most 1e-6.
  for (int col = 1; col <= 4; ++col) {
    const double avg = (std::stod(csv[1][col]) + std::stod(csv[2][col])) / 2;
    CHECK(std::abs(avg - std::stod(csv[3][col])) <= 1e-6);
  }
}

TEST_CASE("dehaze keeps P6 dimensions and writes a panel") {
  const fs::path dir = scratch("dehaze");
  std::ostringstream log;
  const fs::path ckpt = identity_checkpoint(dir);
  const Tensor<float> src = testing::random_tensor<float>({1, 3, 30, 22}, 5, 0.0, 1.0);
  save_ppm(dir / "in.ppm", src);
  const Tensor<float> out = cmd_dehaze({ckpt, dir / "in.ppm", dir / "out.ppm", true}, log);
  CHECK(log.str().find("reflect-padded 30x22 to 32x24") != std::string::npos);
  const Tensor<float> reread = load_ppm(dir / "out.ppm");
  CHECK(reread.shape() == Shape{1, 3, 30, 22});
  CHECK(testing::max_abs_diff(reread, load_ppm(dir / "in.ppm")) == 0.0);
  CHECK(panel_path(dir / "out.ppm") == dir / "out_panel.ppm");
  CHECK(load_ppm(dir / "out_panel.ppm").shape() == Shape{1, 3, 30, 44});

  NetWeights<float> other = NetWeights<float>::init(NetConfig{16, 1, true, true, true}, 3);
  auto table = net_table(other);
  for (NamedTensor& e : table) {
    if (e.name == "stem.weight") e.dims = {9, 3, 3, 3}, e.values.resize(9 * 27);
  }
  write_checkpoint(dir / "broken.haan", table);
  CHECK_THROWS_AS(cmd_dehaze({dir / "broken.haan", dir / "in.ppm", dir / "x.ppm", false}, log),
                  CheckpointError);
}

TEST_CASE("train from a data directory writes checkpoint, log and config") {
  const fs::path dir = scratch("train");
  std::ostringstream log;
  cmd_synth({3, 6, 32, dir / "data"}, log);
  std::ofstream(dir / "cfg.txt") << "base_channels = 8\nnum_haab = 1\nbatch_size = 2\n"
                                    "crop = 16\ntotal_steps = 3\nval_pairs = 2\nval_interval = 2\n";
  const TrainResult r = cmd_train({dir / "cfg.txt", dir / "data", std::nullopt, dir / "out"}, log);
  CHECK(log.str().find("# effective configuration") != std::string::npos);
  CHECK(log.str().find("lr_max = ") != std::string::npos);  // default echoed
  CHECK(log.str().find("loaded 4 train / 2 validation pairs") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "model.haan"));
  CHECK(read_csv(dir / "out" / "train_log.csv").size() == 4);
  CHECK(parse_train_config(slurp(dir / "out" / "config.txt")).total_steps == 3);
  const auto table = read_checkpoint(dir / "out" / "model.haan");
  CHECK(net_from_table<float>(table).config == NetConfig{8, 1, true, true, true});
  CHECK(r.log.size() == 3);

  std::ofstream(dir / "bad.txt") << "crop = 63\n";
  CHECK_THROWS_AS(cmd_train({dir / "bad.txt", std::nullopt, std::nullopt, dir / "o2"}, log),
                  ConfigError);
}

TEST_CASE("gradcheck command rejects unknown modules") {
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_gradcheck("nonsense", log), std::invalid_argument);
}
