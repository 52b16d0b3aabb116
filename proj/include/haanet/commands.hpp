#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "haanet/gradcheck_suite.hpp"
#include "haanet/trainer.hpp"

namespace haanet {

struct SynthOptions {
  std::uint64_t seed = 0;
  int count = 1;
  int size = 64;
  std::filesystem::path out_dir;
};

struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::uint64_t> synth_seed;
  std::filesystem::path out;
};

struct DehazeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path in;
  std::filesystem::path out;
  bool panel = false;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::filesystem::path csv;
};

/// Writes a dataset directory (images plus manifest).
Manifest cmd_synth(const SynthOptions& opt, std::ostream& log);

/// Trains and writes `<out>/model.haan`, `<out>/train_log.csv` and
/// `<out>/config.txt`. With a data directory the last val_pairs manifest
/// pairs are held out for validation. Returns the training result.
TrainResult cmd_train(const TrainOptions& opt, std::ostream& log);

/// Path of the hazy|dehazed panel written next to `out`.
std::filesystem::path panel_path(const std::filesystem::path& out);

/// Dehazes one P6 image; returns the output tensor.
Tensor<float> cmd_dehaze(const DehazeOptions& opt, std::ostream& log);

struct EvalRow {
  std::string pair_id;
  double psnr_hazy = 0;
  double psnr_pred = 0;
  double ssim_hazy = 0;
  double ssim_pred = 0;
};

/// Per-pair rows followed by a "mean" row; missing pairs are reported and
/// skipped.
std::vector<EvalRow> cmd_eval(const EvalOptions& opt, std::ostream& log);

/// Prints one line per parameter group; returns the report.
GradcheckReport cmd_gradcheck(const std::string& module, std::ostream& log);

}  // namespace haanet
