// Command-line front end: draw datasets, train, evaluate, predict, benchmark
// against reference networks, and sweep data regimes.

#include <CLI11.hpp>
#include <iostream>

#include "csiva/cliops.hpp"

namespace {

csiva::RunConfig load_config(const std::string& path, const std::string& preset) {
  csiva::RunConfig cfg;
  if (!path.empty()) cfg = csiva::RunConfig::from_text(csiva::read_file(path));
  if (!preset.empty()) cfg.apply_preset(preset);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer workbench: sample datasets in, causal graphs out"};
  app.require_subcommand(1);

  std::string config_path, preset, out, ckpt, bif, dataset_path;
  uint64_t seed = 1;

  CLI::App* c_gen = app.add_subcommand("generate", "draw one dataset/graph pair");
  c_gen->add_option("--config", config_path, "run config file ([data] section)");
  c_gen->add_option("--seed", seed, "root seed");
  c_gen->add_option("--out", out, "output dataset file")->required();

  CLI::App* c_train = app.add_subcommand("train", "train a model from scratch");
  c_train->add_option("--config", config_path, "run config file");
  c_train->add_option("--seed", seed, "root seed");
  c_train->add_option("--preset", preset, "model preset: main-v1, appendix-v2, desk")
      ->check(CLI::IsMember({"main-v1", "appendix-v2", "desk"}));
  c_train->add_option("--out", out, "output directory")->required();

  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on fresh pairs");
  c_eval->add_option("--config", config_path, "run config file");
  c_eval->add_option("--seed", seed, "root seed");
  c_eval->add_option("--ckpt", ckpt, "model checkpoint")->required();
  c_eval->add_option("--out", out, "report file")->required();

  CLI::App* c_pred = app.add_subcommand("predict", "decode one dataset file");
  c_pred->add_option("--ckpt", ckpt, "model checkpoint")->required();
  c_pred->add_option("--dataset", dataset_path, "dataset file")->required();
  c_pred->add_option("--out", out, "prediction file")->required();

  CLI::App* c_bench = app.add_subcommand(
      "bench-bnlearn", "sample from a reference network and score recovery");
  c_bench->add_option("--bif", bif, "reference network file")->required();
  c_bench->add_option("--config", config_path, "run config file ([data] section)");
  c_bench->add_option("--seed", seed, "root seed");
  c_bench->add_option("--ckpt", ckpt, "model checkpoint (optional)");
  c_bench->add_option("--out", out, "report file")->required();

  CLI::App* c_sweep = app.add_subcommand("sweep", "evaluate across a data-regime sweep");
  c_sweep->add_option("--config", config_path, "run config file ([sweep] section)");
  c_sweep->add_option("--seed", seed, "root seed");
  c_sweep->add_option("--ckpt", ckpt, "model checkpoint")->required();
  c_sweep->add_option("--out", out, "csv file")->required();

  try {
    app.parse(argc, argv);
    if (c_gen->parsed())
      csiva::cmd_generate(load_config(config_path, ""), seed, out, std::cout);
    else if (c_train->parsed())
      csiva::cmd_train(load_config(config_path, preset), seed, out, std::cout);
    else if (c_eval->parsed())
      csiva::cmd_eval(load_config(config_path, ""), seed, ckpt, out, std::cout);
    else if (c_pred->parsed())
      csiva::cmd_predict(ckpt, dataset_path, out, std::cout);
    else if (c_bench->parsed())
      csiva::cmd_bench_bnlearn(load_config(config_path, ""), seed, bif, ckpt, out,
                               std::cout);
    else if (c_sweep->parsed())
      csiva::cmd_sweep(load_config(config_path, ""), seed, ckpt, out, std::cout);
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are usage errors; help is not
  } catch (const csiva::Error& e) {
    return csiva::report_error(e, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error category=other msg=" << e.what() << "\n";
    return 1;
  }
}
