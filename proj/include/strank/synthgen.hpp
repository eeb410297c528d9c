#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "strank/dataset.hpp"
#include "strank/sampling.hpp"

namespace strank {

// mu(x) = a sin(cx) + b sin(dx) + a + b; non-negative on [0,1] when a,b >= 0.
struct MeanFnParams {
  double a = 2.0, b = 1.0, c = 6.0, d = 20.0;
};

inline double mean_function(double x, const MeanFnParams& p) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::domain_error("mean_function: x must be in [0,1]");
  return p.a * std::sin(p.c * x) + p.b * std::sin(p.d * x) + p.a + p.b;
}

struct TissueBatchParams {
  double alpha = 1.0;          // scaling, > 0
  double beta = 0.0;           // offset, >= 0
  double interval_lo = 0.0;    // sampling interval within [0,1]
  double interval_hi = 1.0;
};

enum class SamplingMode { Uniform, Imbalanced };

struct SynthConfig {
  MeanFnParams mean_fn;
  // Optional multi-gene panel: when non-empty, counts get one column per
  // entry (shared x, per-tissue batch effects applied to every gene) and
  // mean_fn is ignored. Empty keeps the single-gene behaviour.
  std::vector<MeanFnParams> genes;
  std::vector<TissueBatchParams> tissues = {
      {1.0, 0.0, 0.0, 1.0},
      {10.0, 10.0, 0.0, 1.0},
  };
  double dispersion = 2.0;
  int n_train_per_tissue = 5000;
  int n_val = 2000;
  int n_test = 2000;
  SamplingMode mode = SamplingMode::Uniform;
  std::uint64_t seed = 0;

  void validate() const {
    if (tissues.empty()) throw std::invalid_argument("SynthConfig: no tissues");
    for (const auto& t : tissues) {
      if (t.alpha <= 0.0)
        throw std::invalid_argument("SynthConfig: alpha must be > 0");
      if (t.beta < 0.0)
        throw std::invalid_argument("SynthConfig: beta must be >= 0");
      if (!(t.interval_lo < t.interval_hi) || t.interval_lo < 0.0 ||
          t.interval_hi > 1.0)
        throw std::invalid_argument("SynthConfig: bad sampling interval");
    }
    if (mean_fn.a < 0.0 || mean_fn.b < 0.0)
      throw std::invalid_argument("SynthConfig: mean fn needs a, b >= 0");
    if (dispersion <= 0.0)
      throw std::invalid_argument("SynthConfig: dispersion must be > 0");
    if (n_train_per_tissue <= 0 || n_val <= 0 || n_test <= 0)
      throw std::invalid_argument("SynthConfig: sample sizes must be > 0");
  }
};

// The effective x-interval for a tissue: in imbalanced mode tissue 1 (the
// second patient) is confined to [0, 0.5]; other tissues use their configured
// interval.
inline std::pair<double, double> tissue_interval(const SynthConfig& cfg,
                                                 int tissue_index) {
  const auto& t = cfg.tissues[static_cast<std::size_t>(tissue_index)];
  if (cfg.mode == SamplingMode::Imbalanced && tissue_index == 1)
    return {0.0, 0.5};
  return {t.interval_lo, t.interval_hi};
}

// One tissue's draws: x ~ Uniform(interval), e ~ NB(alpha*mu(x)+beta, r).
inline std::pair<std::vector<double>, std::vector<long long>> generate_tissue(
    const SynthConfig& cfg, int tissue_index, int count, RngStream& rng) {
  cfg.validate();
  if (tissue_index < 0 ||
      tissue_index >= static_cast<int>(cfg.tissues.size()))
    throw std::invalid_argument("generate_tissue: tissue_index out of range");
  const auto& t = cfg.tissues[static_cast<std::size_t>(tissue_index)];
  const auto [lo, hi] = tissue_interval(cfg, tissue_index);
  std::vector<double> xs(static_cast<std::size_t>(count));
  std::vector<long long> es(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double x = rng.uniform(lo, hi);
    xs[static_cast<std::size_t>(i)] = x;
    es[static_cast<std::size_t>(i)] =
        nb_sample(t.alpha * mean_function(x, cfg.mean_fn) + t.beta,
                  cfg.dispersion, rng);
  }
  return {std::move(xs), std::move(es)};
}

// The gene panel in effect: the configured panel, or just mean_fn.
inline std::vector<MeanFnParams> effective_genes(const SynthConfig& cfg) {
  return cfg.genes.empty() ? std::vector<MeanFnParams>{cfg.mean_fn}
                           : cfg.genes;
}

// Multi-gene draws for one tissue: per sample, x ~ Uniform(interval), then
// one NB count per gene with the tissue's batch parameters. With a single
// gene the draw order matches generate_tissue exactly.
inline std::pair<std::vector<double>,
                 Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>>
generate_tissue_panel(
    const SynthConfig& cfg, int tissue_index, int count, RngStream& rng) {
  cfg.validate();
  if (tissue_index < 0 ||
      tissue_index >= static_cast<int>(cfg.tissues.size()))
    throw std::invalid_argument(
        "generate_tissue_panel: tissue_index out of range");
  const auto genes = effective_genes(cfg);
  const auto& t = cfg.tissues[static_cast<std::size_t>(tissue_index)];
  const auto [lo, hi] = tissue_interval(cfg, tissue_index);
  std::vector<double> xs(static_cast<std::size_t>(count));
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> es(
      count, static_cast<Eigen::Index>(genes.size()));
  for (int i = 0; i < count; ++i) {
    const double x = rng.uniform(lo, hi);
    xs[static_cast<std::size_t>(i)] = x;
    for (std::size_t g = 0; g < genes.size(); ++g)
      es(i, static_cast<Eigen::Index>(g)) =
          nb_sample(t.alpha * mean_function(x, genes[g]) + t.beta,
                    cfg.dispersion, rng);
  }
  return {std::move(xs), std::move(es)};
}

// Uniform-x evaluation split whose targets are the noiseless mu(x) values.
struct EvalSet {
  Eigen::MatrixXd features;  // N x 1
  Eigen::MatrixXd targets;   // N x 1
};

struct SyntheticData {
  Dataset train;
  EvalSet val;
  EvalSet test;
};

inline SyntheticData generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SyntheticData out;

  const auto genes = effective_genes(cfg);
  const Eigen::Index ng = static_cast<Eigen::Index>(genes.size());
  const int nt = static_cast<int>(cfg.tissues.size());
  const int n_train = cfg.n_train_per_tissue * nt;
  out.train.features.resize(n_train, 1);
  out.train.counts.resize(n_train, ng);
  out.train.tissue_ids.resize(static_cast<std::size_t>(n_train));
  int row = 0;
  for (int t = 0; t < nt; ++t) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(t) + 1);
    auto [xs, es] = generate_tissue_panel(cfg, t, cfg.n_train_per_tissue, rng);
    for (int i = 0; i < cfg.n_train_per_tissue; ++i, ++row) {
      out.train.features(row, 0) = xs[static_cast<std::size_t>(i)];
      out.train.counts.row(row) = es.row(i);
      out.train.tissue_ids[static_cast<std::size_t>(row)] = t;
    }
  }
  out.train.recompute_library_sizes();

  auto make_eval = [&](int n, std::uint64_t stream) {
    EvalSet ev;
    ev.features.resize(n, 1);
    ev.targets.resize(n, ng);
    RngStream rng(cfg.seed, stream);
    for (int i = 0; i < n; ++i) {
      const double x = rng.next_double();
      ev.features(i, 0) = x;
      for (Eigen::Index g = 0; g < ng; ++g)
        ev.targets(i, g) =
            mean_function(x, genes[static_cast<std::size_t>(g)]);
    }
    return ev;
  };
  out.val = make_eval(cfg.n_val, static_cast<std::uint64_t>(nt) + 1);
  out.test = make_eval(cfg.n_test, static_cast<std::uint64_t>(nt) + 2);
  return out;
}

// Binomial thinning of every count at the given rate; features and tissue
// labels are untouched.
inline Dataset downsample_counts(const Dataset& ds, double rate,
                                 RngStream& rng) {
  if (rate < 0.0 || rate > 1.0)
    throw std::domain_error("downsample_counts: rate must be in [0,1]");
  Dataset out = ds;
  for (Eigen::Index i = 0; i < out.counts.rows(); ++i)
    for (Eigen::Index j = 0; j < out.counts.cols(); ++j)
      out.counts(i, j) = binomial_sample(ds.counts(i, j), rate, rng);
  out.recompute_library_sizes();
  return out;
}

}  // namespace strank
