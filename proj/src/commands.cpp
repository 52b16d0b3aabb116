#include "haanet/commands.hpp"

#include <cstdio>
#include <fstream>

#include "haanet/checkpoint.hpp"
#include "haanet/image_io.hpp"
#include "haanet/metrics.hpp"

namespace haanet {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Splits loaded pairs into train (leading) and validation (trailing).
TrainData split_pairs(const PairSet& all, int val_pairs) {
  if (static_cast<int>(all.size()) <= val_pairs) {
    throw std::invalid_argument("dataset has " + std::to_string(all.size()) +
                                " pairs; need more than val_pairs = " +
                                std::to_string(val_pairs));
  }
  TrainData data;
  const std::size_t cut = all.size() - static_cast<std::size_t>(val_pairs);
  for (std::size_t i = 0; i < all.size(); ++i) {
    PairSet& dst = i < cut ? data.train : data.val;
    dst.ids.push_back(all.ids[i]);
    dst.hazy.push_back(all.hazy[i]);
    dst.clean.push_back(all.clean[i]);
  }
  return data;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

Manifest cmd_synth(const SynthOptions& opt, std::ostream& log) {
  const Manifest m = synth_dataset(opt.out_dir, opt.seed, opt.count, opt.size);
  log << "wrote " << m.entries.size() << " pairs of " << opt.size << "x" << opt.size
      << " to " << opt.out_dir.string() << "\n";
  return m;
}

TrainResult cmd_train(const TrainOptions& opt, std::ostream& log) {
  TrainConfig cfg = opt.config ? load_train_config(*opt.config) : TrainConfig{};
  if (opt.synth_seed) cfg.dataset_seed = *opt.synth_seed;
  cfg.validate();
  log << "# effective configuration\n" << format_train_config(cfg);

  TrainData data;
  if (opt.data_dir) {
    const LoadedDataset loaded = load_dataset(*opt.data_dir);
    for (const std::string& id : loaded.missing) log << "missing pair " << id << "\n";
    data = split_pairs(loaded.pairs, cfg.val_pairs);
    log << "loaded " << data.train.size() << " train / " << data.val.size()
        << " validation pairs from " << opt.data_dir->string() << "\n";
  } else {
    data = make_train_data(cfg);
    log << "synthesized " << data.train.size() << " train / " << data.val.size()
        << " validation pairs (dataset_seed " << cfg.dataset_seed << ")\n";
  }

  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  if (ec || !std::filesystem::is_directory(opt.out)) {
    throw std::runtime_error("cannot create output directory " + opt.out.string());
  }
  TrainResult result = train(cfg, data, [&](const LogRow& row) {
    if (row.val_psnr) {
      log << "step " << row.step << " lr " << row.lr << " loss " << fixed(row.loss, 5)
          << " val_psnr " << fixed(*row.val_psnr, 3) << " val_ssim "
          << fixed(*row.val_ssim, 4) << "\n";
    }
  });
  if (result.diverged) log << "training stopped: " << result.diverged_reason << "\n";
  write_checkpoint(opt.out / "model.haan", train_checkpoint(result.weights, cfg));
  write_text(opt.out / "train_log.csv", format_log_csv(result.log));
  write_text(opt.out / "config.txt", format_train_config(cfg));
  log << "validation psnr " << fixed(result.final_val.psnr_pred, 3) << " (hazy "
      << fixed(result.final_val.psnr_hazy, 3) << "), ssim "
      << fixed(result.final_val.ssim_pred, 4) << " (hazy "
      << fixed(result.final_val.ssim_hazy, 4) << ")\n";
  return result;
}

std::filesystem::path panel_path(const std::filesystem::path& out) {
  std::filesystem::path p = out;
  p.replace_filename(out.stem().string() + "_panel.ppm");
  return p;
}

Tensor<float> cmd_dehaze(const DehazeOptions& opt, std::ostream& log) {
  NetWeights<float> weights = net_from_table<float>(read_checkpoint(opt.checkpoint));
  const Tensor<float> hazy = load_ppm(opt.in);
  const Shape s = hazy.shape();
  const Tensor<float> padded = reflect_pad(hazy, 4);
  if (padded.shape() != s) {
    log << "reflect-padded " << s.h << "x" << s.w << " to " << padded.shape().h << "x"
        << padded.shape().w << "; output cropped back\n";
  }
  Tensor<float> out = dehaze(padded, weights);
  if (padded.shape() != s) out = crop(out, 0, 0, s.h, s.w);
  save_ppm(opt.out, out);
  log << "wrote " << opt.out.string() << "\n";
  if (opt.panel) {
    const std::filesystem::path p = panel_path(opt.out);
    save_ppm(p, side_by_side(hazy, out));
    log << "wrote " << p.string() << "\n";
  }
  return out;
}

std::vector<EvalRow> cmd_eval(const EvalOptions& opt, std::ostream& log) {
  NetWeights<float> weights = net_from_table<float>(read_checkpoint(opt.checkpoint));
  const LoadedDataset loaded = load_dataset(opt.data_dir);
  for (const std::string& id : loaded.missing) log << "missing pair " << id << "\n";
  std::vector<EvalRow> rows;
  EvalRow mean{"mean"};
  const PairSet& pairs = loaded.pairs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Tensor<float> padded = reflect_pad(pairs.hazy[i], 4);
    Tensor<float> pred = dehaze(padded, weights);
    const Shape s = pairs.hazy[i].shape();
    if (padded.shape() != s) pred = crop(pred, 0, 0, s.h, s.w);
    EvalRow r{pairs.ids[i], psnr(pairs.hazy[i], pairs.clean[i]), psnr(pred, pairs.clean[i]),
              ssim(pairs.hazy[i], pairs.clean[i]), ssim(pred, pairs.clean[i])};
    mean.psnr_hazy += r.psnr_hazy;
    mean.psnr_pred += r.psnr_pred;
    mean.ssim_hazy += r.ssim_hazy;
    mean.ssim_pred += r.ssim_pred;
    rows.push_back(r);
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    mean.psnr_hazy /= n;
    mean.psnr_pred /= n;
    mean.ssim_hazy /= n;
    mean.ssim_pred /= n;
  }
  rows.push_back(mean);

  std::string csv = "pair_id,psnr_hazy,psnr_pred,ssim_hazy,ssim_pred\n";
  for (const EvalRow& r : rows) {
    csv += r.pair_id + "," + fixed(r.psnr_hazy, 6) + "," + fixed(r.psnr_pred, 6) + "," +
           fixed(r.ssim_hazy, 6) + "," + fixed(r.ssim_pred, 6) + "\n";
  }
  write_text(opt.csv, csv);
  log << "evaluated " << rows.size() - 1 << " pairs: psnr " << fixed(mean.psnr_pred, 3)
      << " (hazy " << fixed(mean.psnr_hazy, 3) << "), ssim " << fixed(mean.ssim_pred, 4)
      << " (hazy " << fixed(mean.ssim_hazy, 4) << ")\n";
  return rows;
}

GradcheckReport cmd_gradcheck(const std::string& module, std::ostream& log) {
  const GradcheckReport report = run_gradcheck(module);
  char buf[160];
  for (const GradcheckGroup& g : report.groups) {
    std::snprintf(buf, sizeof buf, "%-10s %-22s max_rel_err %.3e  tol %.0e  %s\n",
                  g.module.c_str(), g.group.c_str(), g.max_error, g.tolerance,
                  g.passed() ? "PASS" : "FAIL");
    log << buf;
  }
  log << (report.passed() ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return report;
}

}  // namespace haanet
