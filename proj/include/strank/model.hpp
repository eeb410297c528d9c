#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "strank/rng.hpp"

namespace strank {

// Fully connected net: 3 linear layers with ReLU between them (identity at
// the output), or a single linear map when hidden_dim == 0.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // layer k: in_k x out_k
  std::vector<Eigen::VectorXd> biases;   // layer k: out_k

  int input_dim() const { return static_cast<int>(weights.front().rows()); }
  int output_dim() const { return static_cast<int>(weights.back().cols()); }
  std::size_t n_layers() const { return weights.size(); }
};

struct GradBuffer {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

inline GradBuffer zero_like(const MlpParams& p) {
  GradBuffer g;
  for (const auto& w : p.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : p.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

// He-style init: W ~ N(0, 2/fan_in), biases zero.
inline MlpParams init_params(int input_dim, int hidden_dim, int output_dim,
                             RngStream& rng) {
  if (input_dim < 1 || output_dim < 1 || hidden_dim < 0)
    throw std::invalid_argument("init_params: bad dimensions");
  std::vector<std::pair<int, int>> shapes;
  if (hidden_dim == 0) {
    shapes = {{input_dim, output_dim}};
  } else {
    shapes = {{input_dim, hidden_dim},
              {hidden_dim, hidden_dim},
              {hidden_dim, output_dim}};
  }
  MlpParams p;
  for (auto [in, out] : shapes) {
    Eigen::MatrixXd w(in, out);
    const double scale = std::sqrt(2.0 / in);
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j) w(i, j) = scale * rng.normal();
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return p;
}

struct ForwardCache {
  Eigen::MatrixXd input;                  // batch x d
  std::vector<Eigen::MatrixXd> pre;       // pre-activations per layer
  std::vector<Eigen::MatrixXd> post;      // post-ReLU activations (hidden only)
};

inline Eigen::MatrixXd forward(const MlpParams& p, const Eigen::MatrixXd& x,
                               ForwardCache* cache = nullptr) {
  if (x.cols() != p.input_dim())
    throw std::invalid_argument("forward: input width mismatch");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t k = 0; k < p.n_layers(); ++k) {
    Eigen::MatrixXd z = a * p.weights[k];
    z.rowwise() += p.biases[k].transpose();
    if (cache) cache->pre.push_back(z);
    if (k + 1 < p.n_layers()) {
      a = z.cwiseMax(0.0);  // ReLU; subgradient at 0 is 0
      if (cache) cache->post.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

// Exact backprop for the scalar loss whose output gradient is dL_dout.
inline GradBuffer backward(const MlpParams& p, const ForwardCache& cache,
                           const Eigen::MatrixXd& dL_dout) {
  const std::size_t L = p.n_layers();
  if (cache.pre.size() != L)
    throw std::invalid_argument("backward: cache does not match params");
  if (dL_dout.rows() != cache.input.rows() ||
      dL_dout.cols() != p.output_dim())
    throw std::invalid_argument("backward: output gradient shape mismatch");

  GradBuffer g;
  g.weights.resize(L);
  g.biases.resize(L);
  Eigen::MatrixXd delta = dL_dout;
  for (std::size_t k = L; k-- > 0;) {
    const Eigen::MatrixXd& a_in = (k == 0) ? cache.input : cache.post[k - 1];
    g.weights[k].noalias() = a_in.transpose() * delta;
    g.biases[k] = delta.colwise().sum().transpose();
    if (k > 0) {
      Eigen::MatrixXd da = delta * p.weights[k].transpose();
      // ReLU mask: strictly positive pre-activations pass gradient.
      delta = (cache.pre[k - 1].array() > 0.0).cast<double>() * da.array();
    }
  }
  return g;
}

// Checkpoint: little-endian header (magic, layer count, per-layer in/out)
// followed by the flat binary64 weight then bias entries in layer order.
inline void save_params(const MlpParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t magic = 0x4b4e415254534c4dULL;  // "MLSTRANK"
  auto put_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_u64(magic);
  put_u64(p.n_layers());
  for (std::size_t k = 0; k < p.n_layers(); ++k) {
    put_u64(static_cast<std::uint64_t>(p.weights[k].rows()));
    put_u64(static_cast<std::uint64_t>(p.weights[k].cols()));
  }
  for (std::size_t k = 0; k < p.n_layers(); ++k) {
    out.write(reinterpret_cast<const char*>(p.weights[k].data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           static_cast<std::size_t>(p.weights[k].size())));
    out.write(reinterpret_cast<const char*>(p.biases[k].data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           static_cast<std::size_t>(p.biases[k].size())));
  }
}

inline MlpParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto get_u64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
    return v;
  };
  if (get_u64() != 0x4b4e415254534c4dULL)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::uint64_t layers = get_u64();
  MlpParams p;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
  for (std::uint64_t k = 0; k < layers; ++k) {
    const auto rows = get_u64();
    const auto cols = get_u64();
    shapes.emplace_back(rows, cols);
  }
  for (auto [rows, cols] : shapes) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
    Eigen::VectorXd b(static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    in.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(sizeof(double) * cols));
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace strank
