#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "strank/dataset.hpp"
#include "strank/losses.hpp"
#include "strank/metrics.hpp"
#include "strank/model.hpp"
#include "strank/sampling.hpp"
#include "strank/synthgen.hpp"

namespace strank {

enum class BatchStrategy { Default, IntraTissue, InterTissue };

inline BatchStrategy batch_strategy_from_string(const std::string& s) {
  if (s == "default") return BatchStrategy::Default;
  if (s == "intra_tissue") return BatchStrategy::IntraTissue;
  if (s == "inter_tissue") return BatchStrategy::InterTissue;
  throw std::invalid_argument("unknown batch strategy: '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 2000;
  int batch_size = 256;
  double lr_min = 0.0;
  BatchStrategy batch_strategy = BatchStrategy::Default;
  int early_stop_patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0.0)
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("TrainConfig: betas must be in [0,1)");
    if (batch_size < 2)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (epochs < 0)
      throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  }
};

struct OptimState {
  GradBuffer m;
  GradBuffer v;
  long long step = 0;
};

inline OptimState init_optim_state(const MlpParams& p) {
  return {zero_like(p), zero_like(p), 0};
}

// One decoupled-weight-decay Adam update in place.
inline void adamw_step(MlpParams& params, const GradBuffer& grads,
                       OptimState& state, double lr, const TrainConfig& cfg) {
  if (lr < 0.0) throw std::invalid_argument("adamw_step: lr must be >= 0");
  if (grads.weights.size() != params.weights.size())
    throw std::invalid_argument("adamw_step: gradient shape mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](Eigen::Ref<Eigen::MatrixXd> theta,
                    const Eigen::MatrixXd& g, Eigen::MatrixXd& m,
                    Eigen::MatrixXd& v) {
    if (g.rows() != theta.rows() || g.cols() != theta.cols())
      throw std::invalid_argument("adamw_step: gradient shape mismatch");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
    const Eigen::ArrayXXd mhat = m.array() / bc1;
    const Eigen::ArrayXXd vhat = v.array() / bc2;
    theta.array() -= lr * (mhat / (vhat.sqrt() + cfg.adam_eps) +
                           cfg.weight_decay * theta.array());
  };
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    update(params.weights[k], grads.weights[k], state.m.weights[k],
           state.v.weights[k]);
    Eigen::MatrixXd gb = grads.biases[k];
    Eigen::MatrixXd mb = state.m.biases[k], vb = state.v.biases[k];
    Eigen::MatrixXd bb = params.biases[k];
    update(bb, gb, mb, vb);
    params.biases[k] = bb;
    state.m.biases[k] = mb;
    state.v.biases[k] = vb;
  }
}

inline double cosine_lr(int step, int total_steps, double lr0, double lr_min) {
  if (total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step out of range");
  return lr_min + 0.5 * (lr0 - lr_min) *
                      (1.0 + std::cos(3.141592653589793238462643 *
                                      static_cast<double>(step) /
                                      static_cast<double>(total_steps)));
}

// Epoch mini-batches as index lists. Every retained index appears exactly
// once; a final chunk of fewer than 2 samples is dropped.
inline std::vector<std::vector<int>> make_minibatches(
    const std::vector<int>& tissue_ids, int batch_size, BatchStrategy strategy,
    RngStream& rng) {
  if (batch_size < 2)
    throw std::invalid_argument("make_minibatches: batch_size must be >= 2");
  const int n = static_cast<int>(tissue_ids.size());

  auto shuffled = [&](std::vector<std::size_t> v) {
    detail::fisher_yates(v, rng);
    return v;
  };
  auto chunk = [&](const std::vector<std::size_t>& seq,
                   std::vector<std::vector<int>>& out) {
    for (std::size_t start = 0; start < seq.size(); start += batch_size) {
      const std::size_t end =
          std::min(seq.size(), start + static_cast<std::size_t>(batch_size));
      if (end - start < 2) break;  // drop singleton tail
      std::vector<int> b;
      b.reserve(end - start);
      for (std::size_t k = start; k < end; ++k)
        b.push_back(static_cast<int>(seq[k]));
      out.push_back(std::move(b));
    }
  };

  std::vector<std::vector<int>> batches;
  if (strategy == BatchStrategy::Default) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    chunk(shuffled(std::move(idx)), batches);
  } else if (strategy == BatchStrategy::IntraTissue) {
    for (auto& block : detail::tissue_blocks(tissue_ids))
      chunk(shuffled(std::move(block)), batches);
    // Shuffle batch order so tissues interleave across the epoch.
    for (std::size_t i = batches.size(); i > 1; --i)
      std::swap(batches[i - 1], batches[rng.below(i)]);
  } else {
    // Round-robin across per-tissue shuffles so each batch's tissue
    // composition is as even as possible.
    auto blocks = detail::tissue_blocks(tissue_ids);
    for (auto& b : blocks) detail::fisher_yates(b, rng);
    std::vector<std::size_t> seq;
    seq.reserve(static_cast<std::size_t>(n));
    std::vector<std::size_t> pos(blocks.size(), 0);
    bool more = true;
    while (more) {
      more = false;
      for (std::size_t t = 0; t < blocks.size(); ++t)
        if (pos[t] < blocks[t].size()) {
          seq.push_back(blocks[t][pos[t]++]);
          more = more || pos[t] < blocks[t].size();
        }
    }
    chunk(seq, batches);
  }
  return batches;
}

struct LossGrouping {
  PairList pairs;    // batch-local indices
  GroupList groups;  // batch-local indices
};

// Pair/list construction within one mini-batch. Members whose tissue occurs
// only once in the batch are skipped for relational losses.
inline LossGrouping group_for_loss(const std::vector<int>& batch,
                                   const std::vector<int>& tissue_ids,
                                   const LossSpec& spec, RngStream& rng) {
  LossGrouping out;
  if (!spec.is_pairwise() && !spec.is_listwise()) return out;

  // Batch-local tissue blocks, singletons dropped.
  int max_t = 0;
  for (int i : batch) max_t = std::max(max_t, tissue_ids[static_cast<std::size_t>(i)]);
  std::vector<std::vector<int>> blocks(static_cast<std::size_t>(max_t + 1));
  for (std::size_t k = 0; k < batch.size(); ++k)
    blocks[static_cast<std::size_t>(
               tissue_ids[static_cast<std::size_t>(batch[k])])]
        .push_back(static_cast<int>(k));

  if (spec.is_pairwise()) {
    for (auto& block : blocks) {
      if (block.size() < 2) continue;
      // No-fixed-point shuffle of this single block (self-pairs carry no
      // ranking signal).
      const std::vector<int> tiss(block.size(), 0);
      const auto pi = grouped_permutation_no_fixed(tiss, rng);
      for (std::size_t i = 0; i < block.size(); ++i)
        out.pairs.emplace_back(block[i], block[pi[i]]);
    }
  } else {
    const int nk = std::max(2, spec.list_size);
    for (auto& block : blocks) {
      if (block.size() < 2) continue;
      std::vector<std::size_t> order(block.size());
      std::iota(order.begin(), order.end(), 0);
      detail::fisher_yates(order, rng);
      for (std::size_t start = 0; start < block.size();
           start += static_cast<std::size_t>(nk)) {
        const std::size_t end =
            std::min(block.size(), start + static_cast<std::size_t>(nk));
        if (end - start < 2) break;  // singleton remainder dropped
        std::vector<int> g;
        for (std::size_t k = start; k < end; ++k)
          g.push_back(block[order[k]]);
        out.groups.push_back(std::move(g));
      }
    }
  }
  return out;
}

struct TrainResult {
  MlpParams params;
  std::vector<EpochRecord> history;
};

// Full training loop: per epoch, mini-batches -> grouping -> forward ->
// loss -> backward -> AdamW, with the cosine schedule stepped once per epoch.
// When a validation set and patience are given, the parameters with the best
// mean validation SCC are returned and training stops after `patience`
// epochs without improvement.
inline TrainResult train(MlpParams params, const Dataset& data,
                         const LossSpec& loss_spec, const TrainConfig& cfg,
                         const EvalSet* val = nullptr) {
  cfg.validate();
  TrainResult out;
  RngStream rng(cfg.seed, 0xba7c5);
  const Eigen::MatrixXd counts_d = data.counts.cast<double>();

  double best_scc = -2.0;
  MlpParams best_params = params;
  int since_best = 0;

  OptimState state = init_optim_state(params);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cosine_lr(epoch, cfg.epochs, cfg.learning_rate, cfg.lr_min);
    auto batches =
        make_minibatches(data.tissue_ids, cfg.batch_size, cfg.batch_strategy, rng);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      const auto bsz = static_cast<Eigen::Index>(batch.size());
      Eigen::MatrixXd x(bsz, data.features.cols());
      Eigen::MatrixXd e(bsz, data.counts.cols());
      for (Eigen::Index k = 0; k < bsz; ++k) {
        x.row(k) = data.features.row(batch[static_cast<std::size_t>(k)]);
        e.row(k) = counts_d.row(batch[static_cast<std::size_t>(k)]);
      }
      const auto grouping = group_for_loss(batch, data.tissue_ids, loss_spec, rng);
      ForwardCache cache;
      const Eigen::MatrixXd preds = forward(params, x, &cache);
      const LossResult lr_res =
          compute_loss(loss_spec, e, preds, grouping.pairs, grouping.groups);
      loss_sum += lr_res.value;
      const GradBuffer grads = backward(params, cache, lr_res.grad);
      adamw_step(params, grads, state, lr, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches.empty() ? 0.0 : loss_sum / batches.size();
    if (val) {
      rec.val_scc = evaluate(params, val->features, val->targets).mean_scc;
      if (rec.val_scc > best_scc) {
        best_scc = rec.val_scc;
        best_params = params;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    out.history.push_back(rec);
    if (val && cfg.early_stop_patience > 0 &&
        since_best >= cfg.early_stop_patience)
      break;
  }
  out.params = (val && cfg.early_stop_patience > 0) ? best_params
                                                    : std::move(params);
  return out;
}

}  // namespace strank
