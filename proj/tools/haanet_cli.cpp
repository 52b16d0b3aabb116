#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "haanet/commands.hpp"

int main(int argc, char** argv) {
  using namespace haanet;
  CLI::App app{"Haze-aware attention network: synthesis, training, dehazing, evaluation"};
  app.require_subcommand(1);

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write procedural hazy/clean pairs");
  synth_cmd->add_option("--seed", synth.seed, "Dataset seed")->required();
  synth_cmd->add_option("--count", synth.count, "Number of pairs")->required();
  synth_cmd->add_option("--size", synth.size, "Square image size (multiple of 4)")
      ->required();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  TrainOptions train_opt;
  std::string config_path;
  std::string data_dir;
  std::uint64_t synth_seed = 0;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a network");
  train_cmd->add_option("--config", config_path, "key = value configuration file");
  CLI::Option* data_opt =
      train_cmd->add_option("--data-dir", data_dir, "Dataset written by synth");
  CLI::Option* seed_opt = train_cmd->add_option(
      "--synth-seed", synth_seed, "Synthesize the dataset in memory from this seed");
  data_opt->excludes(seed_opt);
  train_cmd->add_option("--out", train_opt.out, "Output directory")->required();

  DehazeOptions dehaze_opt;
  CLI::App* dehaze_cmd = app.add_subcommand("dehaze", "Dehaze one P6 image");
  dehaze_cmd->add_option("--checkpoint", dehaze_opt.checkpoint)->required();
  dehaze_cmd->add_option("--in", dehaze_opt.in, "Hazy input (P6)")->required();
  dehaze_cmd->add_option("--out", dehaze_opt.out, "Dehazed output (P6)")->required();
  dehaze_cmd->add_flag("--panel", dehaze_opt.panel,
                       "Also write a hazy|dehazed panel next to the output");

  EvalOptions eval_opt;
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a dataset directory");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint)->required();
  eval_cmd->add_option("--data-dir", eval_opt.data_dir)->required();
  eval_cmd->add_option("--csv", eval_opt.csv, "Output CSV")->required();

  std::string module = "all";
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  grad_cmd->add_option("--module", module)
      ->check(CLI::IsMember({"all", "primitives", "haam", "mfem", "backbone", "loss"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      cmd_synth(synth, std::cout);
    } else if (*train_cmd) {
      if (!config_path.empty()) train_opt.config = config_path;
      if (*data_opt) train_opt.data_dir = data_dir;
      if (*seed_opt) train_opt.synth_seed = synth_seed;
      const TrainResult result = cmd_train(train_opt, std::cout);
      return result.diverged ? EXIT_FAILURE : EXIT_SUCCESS;
    } else if (*dehaze_cmd) {
      cmd_dehaze(dehaze_opt, std::cout);
    } else if (*eval_cmd) {
      cmd_eval(eval_opt, std::cout);
    } else if (*grad_cmd) {
      return cmd_gradcheck(module, std::cout).passed() ? EXIT_SUCCESS : EXIT_FAILURE;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
