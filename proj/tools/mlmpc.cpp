// Command-line front end: gen-data | train | control | compare | predict-demo.
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime fault.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mlmpc/commands.hpp"
#include "mlmpc/config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment configuration file (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides the config's out_dir)");
  cmd->add_option("--seed", args.seed,
                  "master seed override; replaces every configured seed with values derived "
                  "from it");
}

mlmpc::ExperimentConfig load_config(const CommonArgs& args) {
  mlmpc::ExperimentConfig cfg = mlmpc::ExperimentConfig::load(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed) {
    cfg.data.seed = mlmpc::derive_seed(*args.seed, 1);
    cfg.split_cfg.seed = mlmpc::derive_seed(*args.seed, 2);
    cfg.network.seed = mlmpc::derive_seed(*args.seed, 3);
    cfg.training.seed = mlmpc::derive_seed(*args.seed, 4);
    cfg.controller.ga.seed = mlmpc::derive_seed(*args.seed, 5);
    cfg.demo_seed = mlmpc::derive_seed(*args.seed, 6);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ml-mpc laboratory: data generation, network training and closed-loop "
               "comparison of a learned prediction model against a perfect one"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate excitation episodes and the dataset");
  add_common(gen, gen_args);

  CommonArgs train_args;
  std::string dataset_path;
  CLI::App* train = app.add_subcommand("train", "train the prediction network on a dataset");
  add_common(train, train_args);
  train->add_option("--dataset", dataset_path, "dataset CSV produced by gen-data")->required();

  CommonArgs control_args;
  std::string control_weights;
  bool use_perfect = false;
  CLI::App* control = app.add_subcommand("control", "run one closed-loop control session");
  add_common(control, control_args);
  control->add_option("--weights", control_weights, "trained weights file (ml prediction model)");
  control->add_flag("--perfect", use_perfect, "use the plant itself as the prediction model");

  CommonArgs compare_args;
  std::string compare_weights;
  CLI::App* compare =
      app.add_subcommand("compare", "run both controllers under identical settings");
  add_common(compare, compare_args);
  compare->add_option("--weights", compare_weights, "trained weights file")->required();

  CommonArgs demo_args;
  std::string demo_weights;
  CLI::App* demo = app.add_subcommand(
      "predict-demo", "prediction session with and without state correction");
  add_common(demo, demo_args);
  demo->add_option("--weights", demo_weights, "trained weights file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cmd_gen_data(load_config(gen_args), std::cout);
    } else if (train->parsed()) {
      cmd_train(load_config(train_args), dataset_path, std::cout);
    } else if (control->parsed()) {
      if (use_perfect == !control_weights.empty()) {
        std::cerr << "control: pass exactly one of --weights or --perfect\n";
        return 1;
      }
      std::optional<std::string> weights;
      if (!use_perfect) weights = control_weights;
      cmd_control(load_config(control_args), weights, std::cout);
    } else if (compare->parsed()) {
      cmd_compare(load_config(compare_args), compare_weights, std::cout);
    } else if (demo->parsed()) {
      cmd_predict_demo(load_config(demo_args), demo_weights, std::cout);
    }
  } catch (const mlmpc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mlmpc::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
