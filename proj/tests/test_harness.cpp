#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "strank/harness.hpp"

using namespace strank;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("strank_harness_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

// Small enough that a full loss x setting grid runs in seconds.
Preset tiny_preset() { return {"tiny", 60, 30, 30, 2, 4}; }

json tiny_config() {
  return json{
      {"synth", {{"n_train_per_tissue", 40}, {"n_val", 20}, {"n_test", 20}}},
      {"loss", {{"kind", "MSE"}}},
      {"train", {{"epochs", 3}, {"batch_size", 16}}},
      {"model", {{"hidden_dim", 8}}},
  };
}

}  // namespace

TEST_CASE("presets") {
  const Preset paper = preset_from_string("paper");
  CHECK(paper.n_train_per_tissue == 50000);
  CHECK(paper.epochs == 2000);
  CHECK(paper.hidden_dim == 128);
  const Preset desk = preset_from_string("desk");
  CHECK(desk.n_train_per_tissue == 5000);
  CHECK(desk.epochs == 300);
  CHECK_THROWS_AS(preset_from_string("tiny"), ConfigError);
}

TEST_CASE("config errors name the offending field") {
  auto message_of = [](const json& j) -> std::string {
    try {
      experiment_config_from_json(j);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };

  // loss.kind missing / invalid
  json j = tiny_config();
  j["loss"].erase("kind");
  CHECK(message_of(j).find("'kind'") != std::string::npos);
  j = tiny_config();
  j["loss"]["kind"] = "Huber";
  CHECK(message_of(j).find("'kind'") != std::string::npos);

  // wrong types
  j = tiny_config();
  j["train"]["epochs"] = "many";
  CHECK(message_of(j).find("'epochs'") != std::string::npos);
  j = tiny_config();
  j["train"]["batch_strategy"] = "per_gene";
  CHECK(message_of(j).find("'batch_strategy'") != std::string::npos);

  // exactly one data source
  j = tiny_config();
  j["ingest"] = "some/dir";
  CHECK(message_of(j).find("'synth' or 'ingest'") != std::string::npos);
  j = tiny_config();
  j.erase("synth");
  CHECK(message_of(j).find("'synth' or 'ingest'") != std::string::npos);

  j = tiny_config();
  j["repeats"] = 0;
  CHECK(message_of(j).find("'repeats'") != std::string::npos);
  j = tiny_config();
  j["loss"] = {{"kind", "ListSTRank"}, {"list_size", 1}};
  CHECK(message_of(j).find("'list_size'") != std::string::npos);
  j = tiny_config();
  j["synth"]["mode"] = "stratified";
  CHECK(message_of(j).find("'mode'") != std::string::npos);
}

TEST_CASE("config parsing round trip") {
  json j = tiny_config();
  j["synth"]["mode"] = "imbalanced";
  j["synth"]["tissues"] = json::array(
      {{{"alpha", 1.0}, {"beta", 0.0}},
       {{"alpha", 5.0}, {"beta", 2.0}, {"interval", {0.25, 0.75}}}});
  j["synth"]["dispersion"] = 3.5;
  j["loss"] = {{"kind", "ListSTRank"}, {"list_size", 4}, {"size_correction", true}};
  j["train"]["batch_strategy"] = "inter_tissue";
  j["repeats"] = 2;
  const ExperimentConfig cfg = experiment_config_from_json(j);
  REQUIRE(cfg.synth.has_value());
  CHECK(cfg.synth->mode == SamplingMode::Imbalanced);
  REQUIRE(cfg.synth->tissues.size() == 2);
  CHECK(cfg.synth->tissues[1].alpha == 5.0);
  CHECK(cfg.synth->tissues[1].interval_lo == 0.25);
  CHECK(cfg.synth->dispersion == 3.5);
  CHECK(cfg.loss.kind == LossKind::ListSTRank);
  CHECK(cfg.loss.list_size == 4);
  CHECK(cfg.loss.size_correction);
  CHECK(cfg.train.batch_strategy == BatchStrategy::InterTissue);
  CHECK(cfg.repeats == 2);
  CHECK(cfg.hidden_dim == 8);
}

TEST_CASE("run_experiment writes per-seed reports and an aggregate") {
  const fs::path dir = temp_dir("exp");
  json j = tiny_config();
  j["repeats"] = 2;
  run_experiment(experiment_config_from_json(j), dir);
  CHECK(fs::exists(dir / "seed0" / "report.csv"));
  CHECK(fs::exists(dir / "seed0" / "summary.json"));
  CHECK(fs::exists(dir / "seed1" / "report.csv"));
  const json agg = json::parse(slurp(dir / "aggregate.json"));
  CHECK(agg.at("repeats") == 2);
  CHECK(agg.at("loss") == "MSE");
  const double m = agg.at("mean_scc").get<double>();
  CHECK(m >= -1.0);
  CHECK(m <= 1.0);
}

TEST_CASE("run_experiment is byte-identical across reruns") {
  const fs::path d1 = temp_dir("det1");
  const fs::path d2 = temp_dir("det2");
  json j = tiny_config();
  j["loss"] = {{"kind", "PairSTRank"}};
  const ExperimentConfig cfg = experiment_config_from_json(j);
  run_experiment(cfg, d1);
  run_experiment(cfg, d2);
  for (const char* rel : {"seed0/report.csv", "seed0/summary.json",
                          "aggregate.json"})
    CHECK(slurp(d1 / rel) == slurp(d2 / rel));
}

TEST_CASE("run_jobs results do not depend on the worker count") {
  std::vector<double> a(20), b(20);
  auto make_jobs = [](std::vector<double>& dst) {
    std::vector<std::function<void()>> jobs;
    for (int i = 0; i < 20; ++i)
      jobs.push_back([&dst, i] { dst[static_cast<std::size_t>(i)] = i * i; });
    return jobs;
  };
  run_jobs(make_jobs(a), 1);
  run_jobs(make_jobs(b), 4);
  CHECK(a == b);
}

TEST_CASE("mean_of and std_of") {
  CHECK(mean_of({1.0, 2.0, 3.0}) == doctest::Approx(2.0));
  CHECK(std_of({1.0, 2.0, 3.0}) == doctest::Approx(1.0));
  CHECK(std_of({5.0}) == 0.0);
  CHECK(std::isnan(mean_of({})));
}

TEST_CASE("reproduce_table1 emits one row per loss") {
  const fs::path dir = temp_dir("t1");
  const Table1Result res = reproduce_table1(dir, tiny_preset(), 1, 1);
  REQUIRE(res.per_seed.size() == 7);
  for (const auto& cell : res.per_seed) {
    CHECK(cell[0].size() == 1);
    CHECK(cell[1].size() == 1);
  }
  const std::string csv = slurp(dir / "table1.csv");
  CHECK(count_lines(csv) == 8);  // header + 7 losses
  CHECK(csv.find("ListSTRank,") != std::string::npos);
  CHECK(csv.find("paper_uniform") != std::string::npos);
  CHECK(csv.find("0.945000") != std::string::npos);  // reference column intact
}

TEST_CASE("reproduce_table1 is deterministic") {
  const fs::path d1 = temp_dir("t1a");
  const fs::path d2 = temp_dir("t1b");
  reproduce_table1(d1, tiny_preset(), 1, 1);
  reproduce_table1(d2, tiny_preset(), 1, 2);
  CHECK(slurp(d1 / "table1.csv") == slurp(d2 / "table1.csv"));
}

TEST_CASE("sweep_nk layout and validation") {
  const fs::path dir = temp_dir("nk");
  CHECK_THROWS_AS(sweep_nk(dir, {1}, tiny_preset(), 1, 1),
                  std::invalid_argument);
  const NkSweepResult res = sweep_nk(dir, {2, 4}, tiny_preset(), 2, 1);
  REQUIRE(res.values == std::vector<int>{2, 4});
  REQUIRE(res.uniform.size() == 2);
  CHECK(res.uniform[0].size() == 2);
  CHECK(res.pair_uniform.size() == 2);
  const std::string csv = slurp(dir / "sweep_nk.csv");
  CHECK(count_lines(csv) == 4);  // header + 2 values + pair row
  CHECK(csv.find("pair,") != std::string::npos);
}

TEST_CASE("sweep_nk uniform-only leaves imbalanced columns as nan") {
  const fs::path dir = temp_dir("nk_u");
  const NkSweepResult res = sweep_nk(dir, {2}, tiny_preset(), 1, 1, false);
  CHECK(std::isnan(res.imbalanced[0][0]));
  CHECK(!std::isnan(res.uniform[0][0]));
  CHECK(slurp(dir / "sweep_nk.csv").find("nan") != std::string::npos);
}

TEST_CASE("sweep_downsample layout; rate 1 equals an unthinned run") {
  const fs::path dir = temp_dir("ds");
  CHECK_THROWS_AS(sweep_downsample(dir, {1.5}, tiny_preset(), 1, 1),
                  std::domain_error);
  const Preset p = tiny_preset();
  const DownsampleSweepResult res = sweep_downsample(dir, {0.5, 1.0}, p, 1, 1);
  REQUIRE(res.rates.size() == 2);
  REQUIRE(res.losses.size() == 4);
  const std::string csv = slurp(dir / "sweep_downsample.csv");
  CHECK(count_lines(csv) == 9);  // header + 2 rates x 4 losses

  // rate = 1.0 must match the plain pipeline with the same seeds.
  for (std::size_t li = 0; li < res.losses.size(); ++li) {
    SyntheticRun run;
    run.synth = downsample_synth_config(p, 0);
    run.train = sweep_train_config(p, static_cast<std::uint64_t>(li) + 200);
    run.loss = table1_loss_spec(res.losses[li]);
    run.hidden_dim = sweep_hidden_dim(p);
    CHECK(res.scc[1][li][0] == run_synthetic(run));
  }
}

TEST_CASE("sweep_params covers the grid and the no-batch-effect point") {
  const fs::path dir = temp_dir("pg");
  ParamGrid grid;
  grid.alpha2 = {1.0, 10.0};
  grid.beta2 = {0.0};
  grid.dispersion = {2.0};
  sweep_params(dir, grid, tiny_preset(), 1, 1);
  const std::string csv = slurp(dir / "sweep_params.csv");
  // header + (2 + 1 + 1 + 1 no-batch-effect cells) x 7 losses
  CHECK(count_lines(csv) == 1 + 5 * 7);
  CHECK(csv.find("no_batch_effect,") != std::string::npos);
  CHECK(csv.find("alpha2,10.000000,") != std::string::npos);

  ParamGrid bad;
  bad.dispersion = {0.0};
  CHECK_THROWS_AS(sweep_params(dir, bad, tiny_preset(), 1, 1),
                  std::domain_error);
}
