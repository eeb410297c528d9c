#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strank/dataset.hpp"
#include "strank/model.hpp"

namespace strank {

// Average (mid) ranks, 1-based; ties share the mean of their rank range.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Spearman correlation: Pearson of tie-averaged ranks. NaN when either
// vector is constant.
inline double spearman(const std::vector<double>& pred,
                       const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("spearman: length mismatch");
  if (pred.size() < 2)
    throw std::invalid_argument("spearman: need at least 2 values");
  const auto rx = average_ranks(pred);
  const auto ry = average_ranks(target);
  const double n = static_cast<double>(rx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_scc = std::numeric_limits<double>::quiet_NaN();
};

struct Report {
  std::vector<double> per_gene_scc;
  double mean_scc = std::numeric_limits<double>::quiet_NaN();
  int nan_count = 0;
  std::vector<EpochRecord> history;
  std::string config_fingerprint;
};

inline Report make_report(const Eigen::MatrixXd& preds,
                          const Eigen::MatrixXd& targets) {
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols())
    throw std::invalid_argument("make_report: shape mismatch");
  Report rep;
  double sum = 0.0;
  int finite = 0;
  for (Eigen::Index g = 0; g < preds.cols(); ++g) {
    std::vector<double> p(preds.col(g).data(), preds.col(g).data() + preds.rows());
    std::vector<double> t(targets.col(g).data(),
                          targets.col(g).data() + targets.rows());
    const double s = spearman(p, t);
    rep.per_gene_scc.push_back(s);
    if (std::isnan(s)) {
      ++rep.nan_count;
    } else {
      sum += s;
      ++finite;
    }
  }
  if (finite > 0) rep.mean_scc = sum / finite;
  return rep;
}

inline Report evaluate(const MlpParams& params, const Eigen::MatrixXd& features,
                       const Eigen::MatrixXd& targets) {
  return make_report(forward(params, features), targets);
}

inline void write_report(const Report& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.csv");
    out << "gene,scc\n";
    for (std::size_t g = 0; g < rep.per_gene_scc.size(); ++g) {
      out << g << ",";
      if (std::isnan(rep.per_gene_scc[g]))
        out << "nan";
      else
        out << detail::format_double(rep.per_gene_scc[g]);
      out << "\n";
    }
  }
  {
    nlohmann::json j;
    j["mean_scc"] = rep.mean_scc;
    j["nan_count"] = rep.nan_count;
    j["config_fingerprint"] = rep.config_fingerprint;
    std::ofstream out(dir / "summary.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << j.dump(2) << "\n";
  }
}

}  // namespace strank
