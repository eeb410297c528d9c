#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace strank {

enum class LossKind { Mse, Poisson, NegBin, Rank, PairSTRank, Pcc, ListSTRank };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "MSE";
    case LossKind::Poisson: return "Poisson";
    case LossKind::NegBin: return "NB";
    case LossKind::Rank: return "Rank";
    case LossKind::PairSTRank: return "PairSTRank";
    case LossKind::Pcc: return "PCC";
    case LossKind::ListSTRank: return "ListSTRank";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  for (LossKind k : {LossKind::Mse, LossKind::Poisson, LossKind::NegBin,
                     LossKind::Rank, LossKind::PairSTRank, LossKind::Pcc,
                     LossKind::ListSTRank})
    if (s == loss_name(k)) return k;
  throw std::invalid_argument("unknown loss kind: '" + s + "'");
}

struct LossSpec {
  LossKind kind = LossKind::ListSTRank;
  double margin = 1.0;          // Rank hinge margin
  double nb_dispersion = 2.0;   // NB baseline dispersion
  int list_size = 8;            // ListSTRank group size N^k, >= 2
  bool size_correction = false; // ListSTRank library-size correction

  bool is_pairwise() const {
    return kind == LossKind::Rank || kind == LossKind::PairSTRank;
  }
  bool is_listwise() const { return kind == LossKind::ListSTRank; }
};

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // dL / dpredictions, same shape as predictions
};

using PairList = std::vector<std::pair<int, int>>;
using GroupList = std::vector<std::vector<int>>;

namespace detail {

inline void check_shapes(const Eigen::MatrixXd& counts,
                         const Eigen::MatrixXd& preds) {
  if (counts.rows() != preds.rows() || counts.cols() != preds.cols())
    throw std::invalid_argument("loss: counts/predictions shape mismatch");
}

constexpr double kLinkClamp = 30.0;

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace detail

// Mean over samples of the per-sample mean squared error.
inline LossResult mse_loss(const Eigen::MatrixXd& counts,
                           const Eigen::MatrixXd& preds) {
  detail::check_shapes(counts, preds);
  const double n = static_cast<double>(counts.size());
  LossResult res;
  const Eigen::MatrixXd diff = preds - counts;
  res.value = diff.squaredNorm() / n;
  res.grad = 2.0 * diff / n;
  return res;
}

// Poisson NLL with exponential link (log e! dropped); logits clamped to
// +-30 before exponentiation.
inline LossResult poisson_loss(const Eigen::MatrixXd& counts,
                               const Eigen::MatrixXd& preds) {
  detail::check_shapes(counts, preds);
  const double n = static_cast<double>(counts.size());
  LossResult res;
  res.grad.resize(preds.rows(), preds.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < preds.rows(); ++i)
    for (Eigen::Index j = 0; j < preds.cols(); ++j) {
      const double r = preds(i, j);
      const double rc = std::clamp(r, -detail::kLinkClamp, detail::kLinkClamp);
      const double lambda = std::exp(rc);
      total += lambda - counts(i, j) * rc;
      const bool active = r > -detail::kLinkClamp && r < detail::kLinkClamp;
      res.grad(i, j) = active ? (lambda - counts(i, j)) / n : 0.0;
    }
  res.value = total / n;
  return res;
}

// Negative binomial NLL with fixed dispersion and exponential link.
inline LossResult nb_loss(const Eigen::MatrixXd& counts,
                          const Eigen::MatrixXd& preds, double dispersion) {
  detail::check_shapes(counts, preds);
  if (dispersion <= 0.0)
    throw std::domain_error("nb_loss: dispersion must be > 0");
  const double r = dispersion;
  const double n = static_cast<double>(counts.size());
  LossResult res;
  res.grad.resize(preds.rows(), preds.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < preds.rows(); ++i)
    for (Eigen::Index j = 0; j < preds.cols(); ++j) {
      const double e = counts(i, j);
      const double s = preds(i, j);
      const double sc = std::clamp(s, -detail::kLinkClamp, detail::kLinkClamp);
      const double mu = std::exp(sc);
      double ll = std::lgamma(e + r) - std::lgamma(r) - std::lgamma(e + 1.0) +
                  r * std::log(r / (r + mu));
      if (e > 0.0) ll += e * std::log(mu / (r + mu));
      total -= ll;
      const bool active = s > -detail::kLinkClamp && s < detail::kLinkClamp;
      res.grad(i, j) = active ? (mu * (r + e) / (r + mu) - e) / n : 0.0;
    }
  res.value = total / n;
  return res;
}

// Hinge ranking loss over same-tissue pairs: each (pair, gene) term is
// oriented so the higher count comes first, ties skipped, and
// max(0, r_low - r_high + margin) accumulated; the mean over contributing
// terms is returned. Subgradient at the kink is 0.
inline LossResult rank_loss(const Eigen::MatrixXd& counts,
                            const Eigen::MatrixXd& preds, const PairList& pairs,
                            double margin) {
  detail::check_shapes(counts, preds);
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(preds.rows(), preds.cols());
  double total = 0.0;
  long long terms = 0;
  for (const auto& [a, b] : pairs) {
    for (Eigen::Index g = 0; g < counts.cols(); ++g) {
      int hi = a, lo = b;
      if (counts(a, g) == counts(b, g)) continue;
      if (counts(a, g) < counts(b, g)) std::swap(hi, lo);
      ++terms;
      const double h = preds(lo, g) - preds(hi, g) + margin;
      if (h > 0.0) {
        total += h;
        res.grad(lo, g) += 1.0;
        res.grad(hi, g) -= 1.0;
      }
    }
  }
  if (terms > 0) {
    res.value = total / static_cast<double>(terms);
    res.grad /= static_cast<double>(terms);
  }
  return res;
}

// Pairwise STRank: binomial NLL of each pair's counts under the two-way
// softmax of rank scores, averaged over pairs. Computed through softplus of
// score differences, which equals -(e_i log p_i + e_j log p_j) exactly and is
// stable for large score gaps.
inline LossResult pair_strank_loss(const Eigen::MatrixXd& counts,
                                   const Eigen::MatrixXd& preds,
                                   const PairList& pairs) {
  detail::check_shapes(counts, preds);
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(preds.rows(), preds.cols());
  if (pairs.empty()) return res;
  const double nb = static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    for (Eigen::Index g = 0; g < counts.cols(); ++g) {
      const double ei = counts(i, g);
      const double ej = counts(j, g);
      const double t = ei + ej;
      if (t == 0.0) continue;
      const double gap = preds(j, g) - preds(i, g);
      total += ei * detail::softplus(gap) + ej * detail::softplus(-gap);
      const double pi = 1.0 / (1.0 + std::exp(gap));  // softmax over {r_i, r_j}
      res.grad(i, g) -= (ei - t * pi) / nb;
      res.grad(j, g) -= (ej - t * (1.0 - pi)) / nb;
    }
  }
  res.value = total / nb;
  return res;
}

// Per-gene Pearson loss over the whole batch: mean over genes of (1 - rho_g).
// Near-constant columns contribute 1 with zero gradient.
inline LossResult pcc_loss(const Eigen::MatrixXd& counts,
                           const Eigen::MatrixXd& preds) {
  detail::check_shapes(counts, preds);
  const Eigen::Index n = counts.rows();
  if (n < 2) throw std::invalid_argument("pcc_loss: batch must be >= 2");
  const Eigen::Index ng = counts.cols();
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(n, ng);
  double total = 0.0;
  for (Eigen::Index g = 0; g < ng; ++g) {
    const Eigen::VectorXd x = preds.col(g);
    const Eigen::VectorXd y = counts.col(g);
    const Eigen::VectorXd xc = x.array() - x.mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double sxx = xc.squaredNorm();
    const double syy = yc.squaredNorm();
    const double nn = static_cast<double>(n);
    if (sxx / nn < 1e-12 || syy / nn < 1e-12) {
      total += 1.0;
      continue;
    }
    const double sxy = xc.dot(yc);
    const double denom = std::sqrt(sxx * syy);
    const double rho = sxy / denom;
    total += 1.0 - rho;
    // d rho / dx_k = yc_k / denom - rho * xc_k / sxx
    res.grad.col(g) =
        -(yc / denom - (rho / sxx) * xc) / static_cast<double>(ng);
  }
  res.value = total / static_cast<double>(ng);
  return res;
}

// Listwise STRank: multinomial NLL of each same-tissue group's counts under
// the softmax of rank scores across the group, summed over genes and groups,
// divided by the number of groups. With size correction the softmax runs over
// (r + ln l) and zero-library members are excluded from the normalization.
inline LossResult list_strank_loss(const Eigen::MatrixXd& counts,
                                   const Eigen::MatrixXd& preds,
                                   const GroupList& groups,
                                   bool size_correction) {
  detail::check_shapes(counts, preds);
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(preds.rows(), preds.cols());
  if (groups.empty()) return res;
  const double ngroups = static_cast<double>(groups.size());
  const Eigen::Index ng = counts.cols();
  double total = 0.0;
  std::vector<double> logits, probs;
  std::vector<int> active;
  for (const auto& group : groups) {
    if (group.size() < 2)
      throw std::invalid_argument("list_strank_loss: group of size 1");
    // Library sizes from the current count rows.
    std::vector<double> lib(group.size());
    for (std::size_t m = 0; m < group.size(); ++m)
      lib[m] = counts.row(group[m]).sum();
    for (Eigen::Index g = 0; g < ng; ++g) {
      logits.clear();
      active.clear();
      double tg = 0.0;
      for (std::size_t m = 0; m < group.size(); ++m) {
        if (size_correction && lib[m] == 0.0) continue;  // count is 0 too
        double z = preds(group[m], g);
        if (size_correction) z += std::log(lib[m]);
        logits.push_back(z);
        active.push_back(static_cast<int>(m));
        tg += counts(group[m], g);
      }
      if (active.empty()) continue;
      double zmax = logits[0];
      for (double z : logits) zmax = std::max(zmax, z);
      double lse = 0.0;
      for (double z : logits) lse += std::exp(z - zmax);
      const double log_norm = zmax + std::log(lse);
      probs.resize(logits.size());
      for (std::size_t m = 0; m < logits.size(); ++m)
        probs[m] = std::exp(logits[m] - log_norm);
      for (std::size_t m = 0; m < active.size(); ++m) {
        const int row = group[static_cast<std::size_t>(active[m])];
        const double e = counts(row, g);
        if (e > 0.0) total += e * (log_norm - logits[m]);  // -e log p
        res.grad(row, g) -= (e - tg * probs[m]) / ngroups;
      }
    }
  }
  res.value = total / ngroups;
  return res;
}

// Dispatch on LossSpec. Pairwise kinds need `pairs`, the listwise kind needs
// `groups`; pointwise/PCC kinds ignore both.
inline LossResult compute_loss(const LossSpec& spec,
                               const Eigen::MatrixXd& counts,
                               const Eigen::MatrixXd& preds,
                               const PairList& pairs = {},
                               const GroupList& groups = {}) {
  switch (spec.kind) {
    case LossKind::Mse: return mse_loss(counts, preds);
    case LossKind::Poisson: return poisson_loss(counts, preds);
    case LossKind::NegBin: return nb_loss(counts, preds, spec.nb_dispersion);
    case LossKind::Rank: return rank_loss(counts, preds, pairs, spec.margin);
    case LossKind::PairSTRank: return pair_strank_loss(counts, preds, pairs);
    case LossKind::Pcc: return pcc_loss(counts, preds);
    case LossKind::ListSTRank:
      return list_strank_loss(counts, preds, groups, spec.size_correction);
  }
  throw std::logic_error("compute_loss: unreachable");
}

}  // namespace strank
