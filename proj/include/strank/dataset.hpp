#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace strank {

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

// Spots with features, expression counts and tissue labels. Immutable after
// construction in practice; library sizes are cached row sums of counts.
struct Dataset {
  Eigen::MatrixXd features;       // N x d
  CountMatrix counts;             // N x G, entries >= 0
  std::vector<int> tissue_ids;    // N, contiguous range starting at 0
  std::vector<long long> library_sizes;  // N, row sums of counts

  Eigen::Index n_spots() const { return features.rows(); }
  Eigen::Index n_features() const { return features.cols(); }
  Eigen::Index n_genes() const { return counts.cols(); }

  void recompute_library_sizes() {
    library_sizes.assign(static_cast<std::size_t>(counts.rows()), 0);
    for (Eigen::Index i = 0; i < counts.rows(); ++i)
      library_sizes[static_cast<std::size_t>(i)] = counts.row(i).sum();
  }

  int n_tissues() const {
    int m = -1;
    for (int t : tissue_ids) m = std::max(m, t);
    return m + 1;
  }

  void validate() const {
    const auto n = features.rows();
    if (counts.rows() != n ||
        static_cast<Eigen::Index>(tissue_ids.size()) != n ||
        static_cast<Eigen::Index>(library_sizes.size()) != n)
      throw std::invalid_argument("Dataset: row counts disagree");
    if ((counts.array() < 0).any())
      throw std::invalid_argument("Dataset: negative count");
    for (Eigen::Index i = 0; i < n; ++i)
      if (library_sizes[static_cast<std::size_t>(i)] != counts.row(i).sum())
        throw std::invalid_argument("Dataset: stale library size at row " +
                                    std::to_string(i));
    std::set<int> seen(tissue_ids.begin(), tissue_ids.end());
    int expect = 0;
    for (int t : seen)
      if (t != expect++)
        throw std::invalid_argument(
            "Dataset: tissue ids must form a contiguous range from 0");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace detail

// File layout: features.csv (x0..x{d-1}), counts.csv (g0..g{G-1}),
// tissues.csv (tissue), meta.json. UTF-8, LF line endings, '.' decimal
// separator. Features are written with 17 significant digits so the text
// round-trips to the same binary64.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(dir / "features.csv");
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
      out << (j ? "," : "") << "x" << j;
    out << "\n";
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
        out << (j ? "," : "") << detail::format_double(ds.features(i, j));
      out << "\n";
    }
  }
  {
    auto out = open(dir / "counts.csv");
    for (Eigen::Index j = 0; j < ds.counts.cols(); ++j)
      out << (j ? "," : "") << "g" << j;
    out << "\n";
    for (Eigen::Index i = 0; i < ds.counts.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.counts.cols(); ++j)
        out << (j ? "," : "") << ds.counts(i, j);
      out << "\n";
    }
  }
  {
    auto out = open(dir / "tissues.csv");
    out << "tissue\n";
    for (int t : ds.tissue_ids) out << t << "\n";
  }
  {
    nlohmann::json meta;
    meta["d"] = ds.features.cols();
    meta["n_genes"] = ds.counts.cols();
    meta["n_spots"] = ds.features.rows();
    meta["provenance"] = "strank";
    auto out = open(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  for (const char* name :
       {"features.csv", "counts.csv", "tissues.csv", "meta.json"})
    if (!std::filesystem::exists(dir / name))
      throw std::runtime_error("missing file: " + (dir / name).string());

  auto feat_rows = detail::read_csv(dir / "features.csv");
  auto count_rows = detail::read_csv(dir / "counts.csv");
  auto tissue_rows = detail::read_csv(dir / "tissues.csv");
  if (feat_rows.empty() || count_rows.empty() || tissue_rows.empty())
    throw std::runtime_error("schema error: missing header row in " +
                             dir.string());

  const std::size_t n = feat_rows.size() - 1;
  if (count_rows.size() - 1 != n || tissue_rows.size() - 1 != n)
    throw std::runtime_error(
        "schema error: row counts disagree across files in " + dir.string());

  const std::size_t d = feat_rows[0].size();
  const std::size_t g = count_rows[0].size();

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n),
                     static_cast<Eigen::Index>(d));
  ds.counts.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g));
  ds.tissue_ids.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& fr = feat_rows[i + 1];
    if (fr.size() != d)
      throw std::runtime_error("schema error: features.csv row " +
                               std::to_string(i + 1) + " has width " +
                               std::to_string(fr.size()));
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t pos = 0;
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::stod(fr[j], &pos);
      if (pos != fr[j].size())
        throw std::runtime_error("schema error: bad feature value '" + fr[j] +
                                 "' at row " + std::to_string(i + 1));
    }
    const auto& cr = count_rows[i + 1];
    if (cr.size() != g)
      throw std::runtime_error("schema error: counts.csv row " +
                               std::to_string(i + 1) + " has width " +
                               std::to_string(cr.size()));
    for (std::size_t j = 0; j < g; ++j) {
      const std::string& s = cr[j];
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw std::runtime_error("schema error: count '" + s + "' at row " +
                                 std::to_string(i + 1) +
                                 " is not a non-negative integer");
      ds.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::stoll(s);
    }
    const auto& tr = tissue_rows[i + 1];
    if (tr.size() != 1)
      throw std::runtime_error("schema error: tissues.csv row " +
                               std::to_string(i + 1));
    ds.tissue_ids[i] = std::stoi(tr[0]);
  }
  ds.recompute_library_sizes();
  ds.validate();
  return ds;
}

// Row-subsets by tissue membership. Tissue ids are re-indexed contiguously
// within each split, following the sorted order of the original ids.
inline std::tuple<Dataset, Dataset, Dataset> split_by_tissue(
    const Dataset& ds, const std::set<int>& train_tissues,
    const std::set<int>& val_tissues, const std::set<int>& test_tissues) {
  if (train_tissues.empty())
    throw std::invalid_argument("split_by_tissue: train tissues required");
  if (val_tissues.empty())
    throw std::invalid_argument("split_by_tissue: val tissue required");
  if (test_tissues.empty())
    throw std::invalid_argument("split_by_tissue: test tissue required");

  std::set<int> all;
  auto add = [&](const std::set<int>& s, const char* name) {
    for (int t : s) {
      if (!all.insert(t).second)
        throw std::invalid_argument(std::string("split_by_tissue: tissue ") +
                                    std::to_string(t) + " appears in " + name +
                                    " and another group");
    }
  };
  add(train_tissues, "train");
  add(val_tissues, "val");
  add(test_tissues, "test");
  const int nt = ds.n_tissues();
  for (int t : all)
    if (t < 0 || t >= nt)
      throw std::invalid_argument("split_by_tissue: unknown tissue id " +
                                  std::to_string(t));
  if (static_cast<int>(all.size()) != nt)
    throw std::invalid_argument(
        "split_by_tissue: groups must cover all tissue ids");

  auto take = [&](const std::set<int>& tissues) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < ds.n_spots(); ++i)
      if (tissues.count(ds.tissue_ids[static_cast<std::size_t>(i)]))
        rows.push_back(i);
    std::vector<int> reindex(static_cast<std::size_t>(nt), -1);
    int next = 0;
    for (int t : tissues) reindex[static_cast<std::size_t>(t)] = next++;
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()),
                        ds.features.cols());
    out.counts.resize(static_cast<Eigen::Index>(rows.size()),
                      ds.counts.cols());
    out.tissue_ids.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.features.row(static_cast<Eigen::Index>(k)) = ds.features.row(rows[k]);
      out.counts.row(static_cast<Eigen::Index>(k)) = ds.counts.row(rows[k]);
      out.tissue_ids[k] = reindex[static_cast<std::size_t>(
          ds.tissue_ids[static_cast<std::size_t>(rows[k])])];
    }
    out.recompute_library_sizes();
    return out;
  };
  return {take(train_tissues), take(val_tissues), take(test_tissues)};
}

}  // namespace strank
