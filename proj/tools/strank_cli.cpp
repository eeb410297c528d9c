// Command-line entry point: dataset generation, training, evaluation and the
// synthetic-study sweeps, all driven by JSON configs.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strank/harness.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw strank::ConfigError(std::string("config error: ") + e.what());
  }
  return j;
}

void save_eval_csv(const strank::EvalSet& ev, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << "x0,target\n";
  for (Eigen::Index i = 0; i < ev.features.rows(); ++i)
    out << strank::detail::format_double(ev.features(i, 0)) << ","
        << strank::detail::format_double(ev.targets(i, 0)) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"STRank synthetic-study harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", preset_name = "desk";
  int seeds = 3, workers = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--preset", preset_name, "paper|desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seeds", seeds, "number of seeds");
    cmd->add_option("--workers", workers, "parallel worker count");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, true);
  auto* train_cmd = app.add_subcommand("train", "run one experiment config");
  add_common(train_cmd, true);
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval_cmd, false);
  std::string ckpt_path, data_path;
  eval_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint")
      ->required();
  eval_cmd->add_option("--data", data_path, "dataset directory")->required();
  auto* table1 = app.add_subcommand("table1", "reproduce the loss-comparison table");
  add_common(table1, false);
  auto* nk = app.add_subcommand("sweep-nk", "ListSTRank group-size sweep");
  add_common(nk, false);
  std::vector<int> nk_values = strank::default_nk_values();
  nk->add_option("--values", nk_values, "N^k values");
  auto* down = app.add_subcommand("sweep-downsample",
                                  "binomial downsampling robustness sweep");
  add_common(down, false);
  std::vector<double> rates = strank::default_downsample_rates();
  down->add_option("--rates", rates, "thinning rates");
  auto* params_cmd =
      app.add_subcommand("sweep-params", "batch-parameter sweep");
  add_common(params_cmd, false);

  CLI11_PARSE(app, argc, argv);

  const strank::Preset preset = strank::preset_from_string(preset_name);

  if (gen->parsed()) {
    const auto j = load_json(config_path);
    const auto synth = strank::synth_config_from_json(
        j.contains("synth") ? j.at("synth") : j);
    const auto data = strank::generate_dataset(synth);
    strank::save_dataset(data.train, std::filesystem::path(out_dir) / "train");
    save_eval_csv(data.val, std::filesystem::path(out_dir) / "val.csv");
    save_eval_csv(data.test, std::filesystem::path(out_dir) / "test.csv");
    std::cout << "wrote " << out_dir << " (" << data.train.n_spots()
              << " train spots)\n";
  } else if (train_cmd->parsed()) {
    const auto cfg = strank::experiment_config_from_json(load_json(config_path));
    strank::run_experiment(cfg, out_dir);
    std::cout << "wrote " << out_dir << "\n";
  } else if (eval_cmd->parsed()) {
    const auto params = strank::load_params(ckpt_path);
    const auto ds = strank::load_dataset(data_path);
    const auto rep = strank::evaluate(params, ds.features,
                                      ds.counts.cast<double>());
    strank::write_report(rep, out_dir);
    std::cout << "mean_scc=" << rep.mean_scc << "\n";
  } else if (table1->parsed()) {
    strank::reproduce_table1(out_dir, preset, seeds, workers);
    std::cout << "wrote " << out_dir << "/table1.csv\n";
  } else if (nk->parsed()) {
    strank::sweep_nk(out_dir, nk_values, preset, seeds, workers);
    std::cout << "wrote " << out_dir << "/sweep_nk.csv\n";
  } else if (down->parsed()) {
    strank::sweep_downsample(out_dir, rates, preset, seeds, workers);
    std::cout << "wrote " << out_dir << "/sweep_downsample.csv\n";
  } else if (params_cmd->parsed()) {
    strank::ParamGrid grid;
    if (!config_path.empty()) {
      const auto j = load_json(config_path);
      grid.alpha2 = strank::detail::get_field(j, "alpha2", grid.alpha2);
      grid.beta2 = strank::detail::get_field(j, "beta2", grid.beta2);
      grid.dispersion =
          strank::detail::get_field(j, "dispersion", grid.dispersion);
      grid.include_no_batch_effect = strank::detail::get_field(
          j, "include_no_batch_effect", grid.include_no_batch_effect);
    }
    strank::sweep_params(out_dir, grid, preset, seeds, workers);
    std::cout << "wrote " << out_dir << "/sweep_params.csv\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const strank::ConfigError& e) {
    std::cerr << "ERR_CONFIG: " << e.what() << "\n";
  } catch (const std::domain_error& e) {
    std::cerr << "ERR_DOMAIN: " << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "ERR_ARG: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "ERR_IO: " << e.what() << "\n";
  }
  return 1;
}
