#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <vector>

#include "strank/optim.hpp"

using namespace strank;

namespace {

MlpParams scalar_param(double value) {
  MlpParams p;
  p.weights.push_back(Eigen::MatrixXd::Constant(1, 1, value));
  p.biases.push_back(Eigen::VectorXd::Zero(1));
  return p;
}

GradBuffer scalar_grad(const MlpParams& p, double g) {
  GradBuffer gb = zero_like(p);
  gb.weights[0](0, 0) = g;
  return gb;
}

Dataset line_dataset(int n) {
  // e = i on x = i/n: a noiseless increasing line.
  Dataset ds;
  ds.features.resize(n, 1);
  ds.counts.resize(n, 1);
  ds.tissue_ids.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    ds.features(i, 0) = static_cast<double>(i) / n;
    ds.counts(i, 0) = i;
  }
  ds.recompute_library_sizes();
  return ds;
}

}  // namespace

TEST_CASE("adamw_step trivial cases") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto p = scalar_param(1.0);
  auto st = init_optim_state(p);

  adamw_step(p, scalar_grad(p, 0.0), st, 0.1, cfg);
  CHECK(p.weights[0](0, 0) == 1.0);
  CHECK(st.step == 1);

  adamw_step(p, scalar_grad(p, 3.0), st, 0.0, cfg);
  CHECK(p.weights[0](0, 0) == 1.0);
}

TEST_CASE("adamw_step first-step hand value") {
  // theta = 1, grad = 0.5, lr = 0.1, wd = 0: bias correction cancels at t=1
  // so theta' = 1 - 0.1 * 0.5/(0.5 + ~1e-8) ~= 0.9.
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto p = scalar_param(1.0);
  auto st = init_optim_state(p);
  adamw_step(p, scalar_grad(p, 0.5), st, 0.1, cfg);
  CHECK(p.weights[0](0, 0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adamw with wd=0 matches a textbook Adam recurrence over 10 steps") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto p = scalar_param(2.0);
  auto st = init_optim_state(p);

  // Independent scalar recurrence.
  double theta = 2.0, m = 0.0, v = 0.0;
  const double lr = 0.05;
  for (int t = 1; t <= 10; ++t) {
    const double g = std::sin(static_cast<double>(t));  // arbitrary sequence
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    adamw_step(p, scalar_grad(p, g), st, lr, cfg);
  }
  CHECK(p.weights[0](0, 0) == doctest::Approx(theta).epsilon(1e-14));
}

TEST_CASE("weight decay is decoupled") {
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  auto p = scalar_param(1.0);
  auto st = init_optim_state(p);
  adamw_step(p, scalar_grad(p, 0.0), st, 0.5, cfg);
  // Zero gradient: only the decay term applies, theta -= lr*wd*theta.
  CHECK(p.weights[0](0, 0) == doctest::Approx(1.0 - 0.5 * 0.1).epsilon(1e-14));
}

TEST_CASE("cosine_lr endpoints, midpoint, monotonicity") {
  CHECK(cosine_lr(0, 100, 1e-3, 1e-5) == doctest::Approx(1e-3));
  CHECK(cosine_lr(100, 100, 1e-3, 1e-5) == doctest::Approx(1e-5));
  CHECK(cosine_lr(50, 100, 1e-3, 1e-5) ==
        doctest::Approx((1e-3 + 1e-5) / 2).epsilon(1e-12));
  double prev = cosine_lr(0, 100, 1e-3, 0.0);
  for (int s = 1; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 1e-3, 0.0);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(101, 100, 1e-3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cosine_lr(-1, 100, 1e-3, 0.0), std::invalid_argument);
}

TEST_CASE("make_minibatches covers every index once") {
  std::vector<int> tissues;
  for (int i = 0; i < 37; ++i) tissues.push_back(i % 3);
  for (BatchStrategy strat : {BatchStrategy::Default, BatchStrategy::IntraTissue,
                              BatchStrategy::InterTissue}) {
    RngStream rng(1);
    const auto batches = make_minibatches(tissues, 8, strat, rng);
    std::set<int> seen;
    for (const auto& b : batches) {
      CHECK(b.size() >= 2);
      for (int i : b) CHECK(seen.insert(i).second);
    }
    // All retained; at most one short tail per chunked sequence was dropped.
    CHECK(seen.size() >= 34);
  }
}

TEST_CASE("make_minibatches default chunk sizes") {
  std::vector<int> tissues(10, 0);
  RngStream rng(2);
  const auto batches = make_minibatches(tissues, 4, BatchStrategy::Default, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
}

TEST_CASE("intra_tissue batches never cross tissues") {
  std::vector<int> tissues;
  for (int i = 0; i < 30; ++i) tissues.push_back(i < 13 ? 0 : 1);
  RngStream rng(3);
  const auto batches =
      make_minibatches(tissues, 4, BatchStrategy::IntraTissue, rng);
  for (const auto& b : batches) {
    const int t = tissues[static_cast<std::size_t>(b[0])];
    for (int i : b) CHECK(tissues[static_cast<std::size_t>(i)] == t);
  }
}

TEST_CASE("inter_tissue batches balance tissue composition") {
  std::vector<int> tissues;
  for (int i = 0; i < 16; ++i) tissues.push_back(i % 2);
  RngStream rng(4);
  const auto batches =
      make_minibatches(tissues, 4, BatchStrategy::InterTissue, rng);
  REQUIRE(batches.size() == 4);
  for (const auto& b : batches) {
    int c0 = 0;
    for (int i : b)
      if (tissues[static_cast<std::size_t>(i)] == 0) ++c0;
    CHECK(c0 == 2);
  }
}

TEST_CASE("group_for_loss pairwise skips singleton tissues") {
  LossSpec spec;
  spec.kind = LossKind::PairSTRank;
  RngStream rng(5);
  const std::vector<int> tissues = {0, 0, 1};
  const std::vector<int> batch = {0, 1, 2};
  const auto g = group_for_loss(batch, tissues, spec, rng);
  REQUIRE(g.pairs.size() == 2);  // both tissue-0 members serve as reference
  for (auto [a, b] : g.pairs) {
    CHECK(a != b);
    CHECK(a <= 1);
    CHECK(b <= 1);
  }
}

TEST_CASE("group_for_loss listwise chunking") {
  LossSpec spec;
  spec.kind = LossKind::ListSTRank;
  RngStream rng(6);
  const std::vector<int> tissues(7, 0);
  const std::vector<int> batch = {0, 1, 2, 3, 4, 5, 6};

  spec.list_size = 7;
  auto g = group_for_loss(batch, tissues, spec, rng);
  REQUIRE(g.groups.size() == 1);
  CHECK(g.groups[0].size() == 7);

  spec.list_size = 4;
  g = group_for_loss(batch, tissues, spec, rng);
  REQUIRE(g.groups.size() == 2);
  CHECK(g.groups[0].size() == 4);
  CHECK(g.groups[1].size() == 3);
}

TEST_CASE("train: zero epochs leaves parameters untouched") {
  const Dataset ds = line_dataset(16);
  RngStream rng(7);
  const auto p0 = init_params(1, 8, 1, rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train(p0, ds, {LossKind::Mse}, cfg);
  CHECK(res.history.empty());
  for (std::size_t k = 0; k < p0.n_layers(); ++k)
    CHECK(res.params.weights[k] == p0.weights[k]);
}

TEST_CASE("train: MSE converges on a noiseless line") {
  const Dataset ds = line_dataset(16);
  RngStream rng(8);
  const auto p0 = init_params(1, 16, 1, rng);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.02;
  cfg.weight_decay = 0.0;
  const auto res = train(p0, ds, {LossKind::Mse}, cfg);
  REQUIRE(res.history.size() == 200);
  CHECK(res.history.back().train_loss < 0.01 * res.history.front().train_loss);
}

TEST_CASE("train is bitwise deterministic") {
  const Dataset ds = line_dataset(24);
  RngStream r1(9), r2(9);
  const auto p1 = init_params(1, 8, 1, r1);
  const auto p2 = init_params(1, 8, 1, r2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  LossSpec spec;
  spec.kind = LossKind::PairSTRank;
  const auto a = train(p1, ds, spec, cfg);
  const auto b = train(p2, ds, spec, cfg);
  for (std::size_t k = 0; k < a.params.n_layers(); ++k)
    CHECK(a.params.weights[k] == b.params.weights[k]);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
}

TEST_CASE("early stopping returns the best-validation parameters") {
  const Dataset ds = line_dataset(32);
  EvalSet val;
  val.features.resize(16, 1);
  val.targets.resize(16, 1);
  for (int i = 0; i < 16; ++i) {
    val.features(i, 0) = (i + 0.5) / 16.0;
    val.targets(i, 0) = 2.0 * val.features(i, 0);
  }
  RngStream rng(10);
  const auto p0 = init_params(1, 8, 1, rng);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 8;
  cfg.early_stop_patience = 10;
  const auto res = train(p0, ds, {LossKind::Mse}, cfg, &val);
  REQUIRE(!res.history.empty());
  double best = -2.0;
  for (const auto& rec : res.history) best = std::max(best, rec.val_scc);
  const double final_scc =
      evaluate(res.params, val.features, val.targets).mean_scc;
  CHECK(final_scc == doctest::Approx(best).epsilon(1e-12));
}
