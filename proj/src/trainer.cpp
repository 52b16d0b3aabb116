#include "haanet/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "haanet/image_io.hpp"
#include "haanet/losses.hpp"
#include "haanet/metrics.hpp"
#include "haanet/rng.hpp"

namespace haanet {
namespace {

// Seed streams derived from TrainConfig seeds.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kCropStream = 2;
constexpr std::uint64_t kTrainSetStream = 10;
constexpr std::uint64_t kValSetStream = 11;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

// Single table driving parsing, echo and checkpoint provenance.
struct Field {
  const char* key;
  enum Kind { kReal, kInt, kU64, kBool } kind;
  void* (*member)(TrainConfig&);
};

#define HAANET_FIELD(name, kind) \
  Field{#name, Field::kind, [](TrainConfig& c) -> void* { return &c.name; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HAANET_FIELD(lr_max, kReal),       HAANET_FIELD(lr_min, kReal),
      HAANET_FIELD(beta1, kReal),        HAANET_FIELD(beta2, kReal),
      HAANET_FIELD(eps, kReal),          HAANET_FIELD(batch_size, kInt),
      HAANET_FIELD(crop, kInt),          HAANET_FIELD(total_steps, kInt),
      HAANET_FIELD(lambda, kReal),       HAANET_FIELD(gamma, kReal),
      HAANET_FIELD(seed, kU64),          HAANET_FIELD(dataset_seed, kU64),
      HAANET_FIELD(cr_seed, kU64),       HAANET_FIELD(base_channels, kInt),
      HAANET_FIELD(num_haab, kInt),      HAANET_FIELD(use_haam, kBool),
      HAANET_FIELD(use_mfem, kBool),     HAANET_FIELD(use_skfusion, kBool),
      HAANET_FIELD(train_pairs, kInt),   HAANET_FIELD(val_pairs, kInt),
      HAANET_FIELD(scene_size, kInt),    HAANET_FIELD(val_size, kInt),
      HAANET_FIELD(val_interval, kInt),
  };
  return table;
}

#undef HAANET_FIELD

std::string field_text(const Field& f, TrainConfig& cfg) {
  void* p = f.member(cfg);
  switch (f.kind) {
    case Field::kReal: return fmt_double(*static_cast<double*>(p));
    case Field::kInt: return std::to_string(*static_cast<int*>(p));
    case Field::kU64: return std::to_string(*static_cast<std::uint64_t*>(p));
    case Field::kBool: return *static_cast<bool*>(p) ? "true" : "false";
  }
  return {};
}

void set_field(const Field& f, TrainConfig& cfg, const std::string& text) {
  void* p = f.member(cfg);
  switch (f.kind) {
    case Field::kReal:
      try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        *static_cast<double*>(p) = v;
      } catch (const std::exception&) {
        throw ConfigError(std::string("invalid value for ") + f.key + ": '" + text + "'");
      }
      break;
    case Field::kInt: *static_cast<int*>(p) = parse_number<int>(f.key, text); break;
    case Field::kU64:
      *static_cast<std::uint64_t*>(p) = parse_number<std::uint64_t>(f.key, text);
      break;
    case Field::kBool: *static_cast<bool*>(p) = parse_bool(f.key, text); break;
  }
}

// Stacks random crops of randomly chosen pairs into one (B,3,crop,crop) batch.
void sample_batch(const PairSet& set, int batch, int crop_size, Rng& rng,
                  Tensor<float>& hazy, Tensor<float>& clean) {
  hazy = Tensor<float>({batch, 3, crop_size, crop_size});
  clean = Tensor<float>({batch, 3, crop_size, crop_size});
  const std::size_t item = static_cast<std::size_t>(3) * crop_size * crop_size;
  for (int b = 0; b < batch; ++b) {
    const std::size_t idx = rng.below(set.size());
    const Shape s = set.hazy[idx].shape();
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.h - crop_size + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.w - crop_size + 1)));
    const Tensor<float> h = crop(set.hazy[idx], top, left, crop_size, crop_size);
    const Tensor<float> c = crop(set.clean[idx], top, left, crop_size, crop_size);
    std::copy(h.raw(), h.raw() + item, hazy.raw() + b * item);
    std::copy(c.raw(), c.raw() + item, clean.raw() + b * item);
  }
}

}  // namespace

void TrainConfig::validate() const {
  net().validate();
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(lr_max > 0 && lr_min >= 0 && lr_min <= lr_max,
          "need 0 <= lr_min <= lr_max and lr_max > 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
          "Adam betas must lie in [0, 1)");
  require(eps > 0, "eps must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(crop > 0 && crop % 4 == 0,
          "crop must be a positive multiple of 4, got " + std::to_string(crop));
  require(total_steps > 0, "total_steps must be positive");
  require(lambda >= 0, "lambda must be non-negative");
  require(train_pairs > 0 && val_pairs > 0, "train_pairs and val_pairs must be positive");
  require(scene_size >= crop, "scene_size must be at least crop");
  require(val_size >= 16 && val_size % 4 == 0,
          "val_size must be a multiple of 4 and at least 16");
  require(val_interval > 0, "val_interval must be positive");
}

std::vector<std::pair<std::string, std::string>> config_fields(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, field_text(f, copy));
  return out;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_fields(cfg)) out += key + " = " + value + "\n";
  return out;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const Field& f : fields()) {
      if (key == f.key) match = &f;
    }
    if (!match) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    set_field(*match, cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

double cosine_lr(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
  }
  const double phase = std::numbers::pi * step / cfg.total_steps;
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

template <typename S>
void adam_step(const std::vector<std::pair<std::string, Tensor<S>*>>& params,
               AdamState<S>& state, double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p->size(), S(0));
      state.v.emplace_back(p->size(), S(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("Adam state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (state.m[i].size() != p->size()) {
      throw ShapeError("Adam moment size mismatch for " + name);
    }
    if (!p->has_grad()) continue;
    for (S g : p->grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(name);
    }
  }
  ++state.t;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = *params[i].second;
    std::vector<S>& m = state.m[i];
    std::vector<S>& v = state.v[i];
    const bool has = p.has_grad();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = has ? static_cast<double>(p.grad()[k]) : 0.0;
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<S>(mk);
      v[k] = static_cast<S>(vk);
      const double step = lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps);
      p[k] = static_cast<S>(p[k] - step);
    }
  }
}

TrainData make_train_data(const TrainConfig& cfg) {
  return {synth_pairs(derive_seed(cfg.dataset_seed, kTrainSetStream), cfg.train_pairs,
                      cfg.scene_size),
          synth_pairs(derive_seed(cfg.dataset_seed, kValSetStream), cfg.val_pairs,
                      cfg.val_size)};
}

ValMetrics evaluate(NetWeights<float>& weights, const PairSet& pairs) {
  ValMetrics m;
  if (pairs.size() == 0) return m;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Tensor<float> pred = dehaze(pairs.hazy[i], weights);
    m.psnr_pred += psnr(pred, pairs.clean[i]);
    m.psnr_hazy += psnr(pairs.hazy[i], pairs.clean[i]);
    m.ssim_pred += ssim(pred, pairs.clean[i]);
    m.ssim_hazy += ssim(pairs.hazy[i], pairs.clean[i]);
  }
  const double n = static_cast<double>(pairs.size());
  m.psnr_pred /= n;
  m.psnr_hazy /= n;
  m.ssim_pred /= n;
  m.ssim_hazy /= n;
  return m;
}

TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const std::function<void(const LogRow&)>& on_row) {
  cfg.validate();
  if (data.train.size() == 0) throw std::invalid_argument("empty training set");
  for (const Tensor<float>& img : data.train.hazy) {
    if (img.shape().h < cfg.crop || img.shape().w < cfg.crop) {
      throw ShapeError("training image " + img.shape().str() + " smaller than crop " +
                       std::to_string(cfg.crop));
    }
  }
  TrainResult result;
  result.weights = NetWeights<float>::init(cfg.net(), derive_seed(cfg.seed, kInitStream));
  NetWeights<float>& w = result.weights;
  CrExtractor<float> ext = CrExtractor<float>::make(cfg.cr_seed);
  Rng crops(derive_seed(cfg.seed, kCropStream));
  AdamState<float> adam;
  const auto params = w.named_parameters();

  Tensor<float> hazy;
  Tensor<float> clean;
  for (int step = 1; step <= cfg.total_steps; ++step) {
    sample_batch(data.train, cfg.batch_size, cfg.crop, crops, hazy, clean);
    for (const auto& entry : params) entry.second->zero_grad();
    LogRow row;
    row.step = step;
    row.lr = cosine_lr(step - 1, cfg);
    {
      Tape<float> tape;
      const Var<float> pred = net_forward(tape.constant(hazy), w);
      const Var<float> loss = total_loss(pred, clean, hazy, cfg.lambda, ext);
      row.loss = loss.value()[0];
      if (!std::isfinite(row.loss)) {
        result.diverged = true;
        result.diverged_reason = "non-finite loss at step " + std::to_string(step);
        break;
      }
      tape.backward(loss);
    }
    try {
      adam_step(params, adam, row.lr, cfg);
    } catch (const NonFiniteGradient& e) {
      result.diverged = true;
      result.diverged_reason = std::string(e.what()) + " at step " + std::to_string(step);
      break;
    }
    if (step % cfg.val_interval == 0 || step == cfg.total_steps) {
      const ValMetrics vm = evaluate(w, data.val);
      row.val_psnr = vm.psnr_pred;
      row.val_ssim = vm.ssim_pred;
    }
    result.log.push_back(row);
    if (on_row) on_row(row);
  }
  for (const auto& entry : params) entry.second->clear_grad();
  result.final_val = evaluate(w, data.val);
  return result;
}

std::vector<NamedTensor> train_checkpoint(NetWeights<float>& weights,
                                          const TrainConfig& cfg) {
  std::vector<NamedTensor> table = net_table(weights);
  TrainConfig copy = cfg;
  for (const Field& f : fields()) {
    void* p = f.member(copy);
    const std::string name = std::string("train.") + f.key;
    switch (f.kind) {
      case Field::kReal: table.push_back(scalar_entry(name, *static_cast<double*>(p))); break;
      case Field::kInt: table.push_back(scalar_entry(name, *static_cast<int*>(p))); break;
      case Field::kU64:
        table.push_back(u64_entry(name, *static_cast<std::uint64_t*>(p)));
        break;
      case Field::kBool: table.push_back(scalar_entry(name, *static_cast<bool*>(p))); break;
    }
  }
  table.push_back(u64_entry("loss.cr_seed", cfg.cr_seed));
  return table;
}

std::string format_log_csv(const std::vector<LogRow>& log) {
  std::string out = "step,lr,loss,val_psnr,val_ssim\n";
  char buf[160];
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,", r.step, r.lr, r.loss);
    out += buf;
    if (r.val_psnr) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", *r.val_psnr, *r.val_ssim);
      out += buf;
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

std::vector<AblationArm> ablation_arms(const TrainConfig& base) {
  auto arm = [&](const char* name, bool haam, bool mfem, bool sk) {
    TrainConfig c = base;
    c.use_haam = haam;
    c.use_mfem = mfem;
    c.use_skfusion = sk;
    return AblationArm{name, c};
  };
  return {arm("base", false, false, false), arm("base+haam", true, false, false),
          arm("base+mfem", false, true, false), arm("full", true, true, true)};
}

template void adam_step(const std::vector<std::pair<std::string, Tensor<float>*>>&,
                        AdamState<float>&, double, const TrainConfig&);
template void adam_step(const std::vector<std::pair<std::string, Tensor<double>*>>&,
                        AdamState<double>&, double, const TrainConfig&);

}  // namespace haanet
