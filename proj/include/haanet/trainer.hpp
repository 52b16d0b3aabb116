#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "haanet/checkpoint.hpp"
#include "haanet/dataset.hpp"
#include "haanet/net.hpp"

namespace haanet {

/// Optimizer, schedule, data and architecture settings of one run. Defaults
/// are the desk-scale configuration.
struct TrainConfig {
  double lr_max = 1.5e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 8;
  int crop = 64;
  int total_steps = 2000;
  double lambda = 0.0;  // contrastive weight; 0.2 at full scale
  double gamma = 0.25;  // parsed and recorded, not consumed
  std::uint64_t seed = 1;
  std::uint64_t dataset_seed = 2024;
  std::uint64_t cr_seed = 77;
  int base_channels = 16;
  int num_haab = 2;
  bool use_haam = true;
  bool use_mfem = true;
  bool use_skfusion = true;
  int train_pairs = 200;
  int val_pairs = 50;
  int scene_size = 96;
  int val_size = 64;
  int val_interval = 100;

  NetConfig net() const {
    return {base_channels, num_haab, use_haam, use_mfem, use_skfusion};
  }
  void validate() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Grammar: one `key = value` per line; `#` starts a comment. Unknown keys
/// and malformed values throw ConfigError; absent keys keep their defaults.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Every field as `key = value` lines, in declaration order.
std::string format_train_config(const TrainConfig& cfg);
std::vector<std::pair<std::string, std::string>> config_fields(const TrainConfig& cfg);

/// lr_min + (lr_max - lr_min) (1 + cos(pi step / total_steps)) / 2.
double cosine_lr(int step, const TrainConfig& cfg);

template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
  long t = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& name)
      : std::runtime_error("non-finite gradient in parameter " + name),
        name_(name) {}
  const std::string& parameter() const { return name_; }

 private:
  std::string name_;
};

/// Bias-corrected Adam on each parameter's accumulated gradient. All
/// gradients are checked before any parameter moves. Parameters without a
/// gradient are treated as having a zero gradient.
template <typename S>
void adam_step(const std::vector<std::pair<std::string, Tensor<S>*>>& params,
               AdamState<S>& state, double lr, const TrainConfig& cfg);

struct TrainData {
  PairSet train;
  PairSet val;
};

/// Procedural train/validation sets, drawn from independent seed streams.
TrainData make_train_data(const TrainConfig& cfg);

struct ValMetrics {
  double psnr_pred = 0;
  double psnr_hazy = 0;
  double ssim_pred = 0;
  double ssim_hazy = 0;
};

ValMetrics evaluate(NetWeights<float>& weights, const PairSet& pairs);

struct LogRow {
  int step = 0;
  double lr = 0;
  double loss = 0;
  std::optional<double> val_psnr;
  std::optional<double> val_ssim;
};

struct TrainResult {
  NetWeights<float> weights;
  std::vector<LogRow> log;
  ValMetrics final_val;
  bool diverged = false;
  std::string diverged_reason;
};

/// Runs cfg.total_steps optimizer updates. Row s (1-based) logs the loss
/// of the batch used for update s and the learning rate cosine_lr(s - 1)
/// that update used. Validation runs every val_interval steps and after
/// the last step. On a non-finite loss or gradient the run stops and
/// returns the last finite weights with `diverged` set.
TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const std::function<void(const LogRow&)>& on_row = {});

/// Checkpoint table: network plus `train.*` config echo and `loss.cr_seed`.
std::vector<NamedTensor> train_checkpoint(NetWeights<float>& weights,
                                          const TrainConfig& cfg);

/// CSV with header step,lr,loss,val_psnr,val_ssim.
std::string format_log_csv(const std::vector<LogRow>& log);

struct AblationArm {
  std::string name;
  TrainConfig config;
};

/// Base, Base+HAAM, Base+MFEM and Full derived from `base` with identical
/// seeds and data. The three partial arms merge skips by averaging; Full
/// enables every module including SK fusion.
std::vector<AblationArm> ablation_arms(const TrainConfig& base);

}  // namespace haanet
