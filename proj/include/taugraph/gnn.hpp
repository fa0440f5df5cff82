#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taugraph/error.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/random.hpp"
#include "taugraph/spatial_graph.hpp"

namespace taugraph::gnn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kEmbeddingDim = 12;
inline constexpr int kClasses = 2;
inline constexpr double kLeakySlope = 0.2;

enum class Arch { gcn, sage, wsage, cheb, gat };
enum class Head { node_level, graph_mean_pool };

inline std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::gcn: return "gcn";
    case Arch::sage: return "sage";
    case Arch::wsage: return "wsage";
    case Arch::cheb: return "cheb";
    case Arch::gat: return "gat";
  }
  return "?";
}
inline std::string_view to_string(Head h) { return h == Head::node_level ? "node_level" : "graph_mean_pool"; }

inline std::optional<Arch> parse_arch(std::string_view s) {
  for (Arch a : {Arch::gcn, Arch::sage, Arch::wsage, Arch::cheb, Arch::gat}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}
inline std::optional<Head> parse_head(std::string_view s) {
  if (s == "node_level") return Head::node_level;
  if (s == "graph_mean_pool") return Head::graph_mean_pool;
  return std::nullopt;
}

enum class OptimizerKind { adam, sgd };

struct GnnConfig {
  Arch arch = Arch::gcn;
  int cheb_k = 3;
  int gat_heads = 2;
  std::vector<int> layer_dims = {kNodeFeatureCount, 32, kEmbeddingDim};  // input dim first
  Head head = Head::node_level;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.005;
  int max_epochs = 100;
  int patience = 15;
  int kfold_k = 5;
  double score_lambda = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_dims.size() < 2) throw Error(ErrorKind::BadConfig, "layer_dims needs an input and an output size");
    if (layer_dims.back() != kEmbeddingDim) throw Error(ErrorKind::BadConfig, "last layer dim must be 12");
    for (int d : layer_dims) {
      if (d < 1) throw Error(ErrorKind::BadConfig, "layer dims must be positive");
    }
    if (cheb_k < 1) throw Error(ErrorKind::BadConfig, "cheb K must be >= 1");
    if (gat_heads < 1) throw Error(ErrorKind::BadConfig, "gat heads must be >= 1");
    if (arch == Arch::gat) {
      for (std::size_t i = 1; i < layer_dims.size(); ++i) {
        if (layer_dims[i] % gat_heads != 0) throw Error(ErrorKind::BadConfig, "gat layer dims must divide by heads");
      }
    }
    if (!(learning_rate >= 0.0) || max_epochs < 0 || patience < 0 || kfold_k < 2 || !(score_lambda >= 0.0)) {
      throw Error(ErrorKind::BadConfig, "training parameters out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// Graph context: every propagation operator the layers need, precomputed.

/// Y = diag .* X + sum over messages of coef * mask[edge] * X[src] into Y[dst].
struct Propagator {
  struct Message {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t edge = 0;
    double coef = 0.0;
  };
  std::vector<Message> messages;
  std::vector<double> diag;

  Mat apply(const Mat& x, const double* mask) const {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = diag[static_cast<std::size_t>(i)] * x.row(i);
    for (const auto& m : messages) {
      const double c = mask ? m.coef * mask[m.edge] : m.coef;
      y.row(m.dst) += c * x.row(m.src);
    }
    return y;
  }

  /// Accumulates the input gradient and, when requested, the mask gradient.
  void backward(const Mat& x, const Mat& gy, const double* mask, Mat& gx, double* gmask) const {
    for (Eigen::Index i = 0; i < x.rows(); ++i) gx.row(i) += diag[static_cast<std::size_t>(i)] * gy.row(i);
    for (const auto& m : messages) {
      const double c = mask ? m.coef * mask[m.edge] : m.coef;
      gx.row(m.src) += c * gy.row(m.dst);
      if (gmask) gmask[m.edge] += m.coef * gy.row(m.dst).dot(x.row(m.src));
    }
  }
};

struct GraphContext {
  std::size_t n = 0;
  std::size_t m = 0;
  Propagator gcn;    // D^-1/2 (A+I) D^-1/2, self-loop weight 1
  Propagator mean;   // arithmetic mean over neighbors
  Propagator wmean;  // edge-weight mean over neighbors
  Propagator cheb;   // scaled Laplacian 2L/lambda - I
  double lambda_max = 2.0;
  /// For each node: (neighbor, edge) pairs, self excluded.
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> neighbors;
};

inline constexpr int kPowerIterations = 50;

namespace detail {

/// Largest eigenvalue of the normalized Laplacian by power iteration. The
/// start vector depends only on the seed and each node's weighted degree,
/// so the estimate does not depend on node order. Edgeless graphs use 2.
inline double lambda_max_estimate(std::size_t n, const Propagator& lap, const std::vector<double>& wdeg,
                                  std::uint64_t seed) {
  if (lap.messages.empty()) return 2.0;
  Mat x(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = splitmix64(seed ^ std::bit_cast<std::uint64_t>(wdeg[i]));
    x(static_cast<Eigen::Index>(i), 0) = 0.5 + static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  double lambda = 0.0;
  for (int it = 0; it < kPowerIterations; ++it) {
    const double norm = x.norm();
    if (!(norm > 0.0)) break;
    x /= norm;
    Mat y = lap.apply(x, nullptr);
    lambda = x.col(0).dot(y.col(0));
    x = std::move(y);
  }
  return lambda > 0.0 ? lambda : 2.0;
}

}  // namespace detail

inline GraphContext make_context(const PathologyGraph& g, std::uint64_t seed = 0) {
  GraphContext c;
  c.n = g.nodes.size();
  c.m = g.edges.size();
  c.neighbors.resize(c.n);
  std::vector<double> wdeg(c.n, 0.0), count(c.n, 0.0);
  for (std::size_t e = 0; e < c.m; ++e) {
    const auto& ed = g.edges[e];
    if (!(ed.weight > 0.0) || !std::isfinite(ed.weight)) throw Error(ErrorKind::BadValue, "edge weights must be positive");
    wdeg[ed.u] += ed.weight;
    wdeg[ed.v] += ed.weight;
    count[ed.u] += 1.0;
    count[ed.v] += 1.0;
    c.neighbors[ed.u].push_back({static_cast<std::uint32_t>(ed.v), static_cast<std::uint32_t>(e)});
    c.neighbors[ed.v].push_back({static_cast<std::uint32_t>(ed.u), static_cast<std::uint32_t>(e)});
  }
  c.gcn.diag.resize(c.n);
  c.mean.diag.assign(c.n, 0.0);
  c.wmean.diag.assign(c.n, 0.0);
  Propagator lap;  // unscaled normalized Laplacian, for the eigenvalue estimate
  lap.diag.resize(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    c.gcn.diag[i] = 1.0 / (1.0 + wdeg[i]);
    lap.diag[i] = count[i] > 0.0 ? 1.0 : 0.0;
  }
  for (std::size_t e = 0; e < c.m; ++e) {
    const auto& ed = g.edges[e];
    const auto u = static_cast<std::uint32_t>(ed.u), v = static_cast<std::uint32_t>(ed.v);
    const auto id = static_cast<std::uint32_t>(e);
    const double gc = ed.weight / std::sqrt((1.0 + wdeg[u]) * (1.0 + wdeg[v]));
    const double lc = -ed.weight / std::sqrt(wdeg[u] * wdeg[v]);
    for (auto [s, d] : {std::pair{u, v}, std::pair{v, u}}) {
      c.gcn.messages.push_back({s, d, id, gc});
      c.mean.messages.push_back({s, d, id, 1.0 / count[d]});
      c.wmean.messages.push_back({s, d, id, ed.weight / wdeg[d]});
      lap.messages.push_back({s, d, id, lc});
    }
  }
  c.lambda_max = detail::lambda_max_estimate(c.n, lap, wdeg, seed);
  c.cheb = lap;
  const double scale = 2.0 / c.lambda_max;
  for (auto& d : c.cheb.diag) d = scale * d - 1.0;
  for (auto& msg : c.cheb.messages) msg.coef *= scale;
  return c;
}

// ---------------------------------------------------------------------------
// Model parameters

struct LayerSlot {
  std::size_t first = 0;  // index of the layer's first parameter
  int in = 0;
  int out = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct GnnModel {
  GnnConfig config;
  std::vector<Mat> params;
  std::vector<std::string> names;
  std::vector<LayerSlot> layers;
  std::size_t head_w = 0;
  std::size_t head_b = 0;
  Eigen::RowVectorXd feature_mean;
  Eigen::RowVectorXd feature_scale;
  std::vector<EpochRecord> history;
  int best_epoch = 0;

  int input_dim() const { return config.layer_dims.front(); }
  std::size_t parameter_count() const {
    std::size_t s = 0;
    for (const auto& p : params) s += static_cast<std::size_t>(p.size());
    return s;
  }
};

namespace detail {

inline Mat glorot(Rng& rng, int rows, int cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  return w;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases. Parameter order per layer:
/// gcn W,b; sage/wsage W_self,W_neigh,b; cheb W_0..W_{K-1},b; gat W,a_src,a_dst,b.
inline GnnModel init_model(const GnnConfig& cfg) {
  cfg.validate();
  GnnModel m;
  m.config = cfg;
  Rng rng(derive_seed(cfg.seed, 0x6e6e));
  auto add = [&](std::string name, Mat value) {
    m.names.push_back(std::move(name));
    m.params.push_back(std::move(value));
  };
  for (std::size_t l = 0; l + 1 < cfg.layer_dims.size(); ++l) {
    const int in = cfg.layer_dims[l], out = cfg.layer_dims[l + 1];
    const std::string p = "conv" + std::to_string(l) + ".";
    m.layers.push_back({m.params.size(), in, out});
    switch (cfg.arch) {
      case Arch::gcn:
        add(p + "W", detail::glorot(rng, in, out));
        break;
      case Arch::sage:
      case Arch::wsage:
        add(p + "W_self", detail::glorot(rng, in, out));
        add(p + "W_neigh", detail::glorot(rng, in, out));
        break;
      case Arch::cheb:
        for (int k = 0; k < cfg.cheb_k; ++k) add(p + "W_" + std::to_string(k), detail::glorot(rng, in, out));
        break;
      case Arch::gat: {
        const int c = out / cfg.gat_heads;
        add(p + "W", detail::glorot(rng, in, out));
        add(p + "a_src", detail::glorot(rng, cfg.gat_heads, c));
        add(p + "a_dst", detail::glorot(rng, cfg.gat_heads, c));
        break;
      }
    }
    add(p + "b", Mat::Zero(1, out));
  }
  m.head_w = m.params.size();
  add("head.W", detail::glorot(rng, kEmbeddingDim, kClasses));
  m.head_b = m.params.size();
  add("head.b", Mat::Zero(1, kClasses));
  const int in = cfg.layer_dims.front();
  m.feature_mean = Eigen::RowVectorXd::Zero(in);
  m.feature_scale = Eigen::RowVectorXd::Ones(in);
  return m;
}

inline std::vector<Mat> zeros_like(const std::vector<Mat>& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(Mat::Zero(p.rows(), p.cols()));
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Mat input;                 // layer input H
  Mat pre;                   // pre-activation output
  Mat z;                     // gcn/gat: H W
  Mat agg;                   // sage/wsage: aggregated neighbor features
  std::vector<Mat> cheb_t;   // T_0 .. T_{K-1}
  std::vector<double> alpha;  // gat: per (node, slot, head)
  std::vector<double> score;  // gat: pre-LeakyReLU scores, same layout
  std::vector<std::size_t> offset;  // gat: slot offset per node
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mat pooled;  // graph head only
};

struct ForwardResult {
  Mat embeddings;  // n x 12, node order
  Mat logits;      // n x 2 (node head) or 1 x 2 (pooled head)
};

namespace detail {

inline void check_dims(const GnnModel& m, const GraphContext& g, const Mat& x) {
  if (static_cast<std::size_t>(x.rows()) != g.n || x.cols() != m.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "features are " + std::to_string(x.rows()) + "x" +
                                                  std::to_string(x.cols()) + ", expected " + std::to_string(g.n) +
                                                  "x" + std::to_string(m.input_dim()));
  }
}

inline double leaky(double v) { return v > 0.0 ? v : kLeakySlope * v; }

inline Mat gat_forward(const GnnModel& m, const LayerSlot& s, const GraphContext& g, const Mat& h,
                       const double* mask, LayerCache* cache) {
  const Mat& w = m.params[s.first];
  const Mat& a_src = m.params[s.first + 1];
  const Mat& a_dst = m.params[s.first + 2];
  const int heads = m.config.gat_heads;
  const int c = s.out / heads;
  Mat z = h * w;
  Mat out = Mat::Zero(z.rows(), z.cols());
  const auto n = static_cast<Eigen::Index>(g.n);
  Mat src(n, heads), dst(n, heads);
  for (int k = 0; k < heads; ++k) {
    src.col(k) = z.middleCols(k * c, c) * a_src.row(k).transpose();
    dst.col(k) = z.middleCols(k * c, c) * a_dst.row(k).transpose();
  }
  std::vector<std::size_t> offset(g.n + 1, 0);
  for (std::size_t v = 0; v < g.n; ++v) offset[v + 1] = offset[v] + 1 + g.neighbors[v].size();
  std::vector<double> alpha(offset.back() * static_cast<std::size_t>(heads));
  std::vector<double> score(alpha.size());
  for (std::size_t v = 0; v < g.n; ++v) {
    const std::size_t deg = g.neighbors[v].size();
    const auto vi = static_cast<Eigen::Index>(v);
    for (int k = 0; k < heads; ++k) {
      auto at = [&](std::size_t slot) { return (offset[v] + slot) * static_cast<std::size_t>(heads) + static_cast<std::size_t>(k); };
      // slot 0 is the self edge
      score[at(0)] = dst(vi, k) + src(vi, k);
      for (std::size_t j = 0; j < deg; ++j) score[at(j + 1)] = dst(vi, k) + src(g.neighbors[v][j].first, k);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= deg; ++j) mx = std::max(mx, leaky(score[at(j)]));
      double total = 0.0;
      for (std::size_t j = 0; j <= deg; ++j) {
        alpha[at(j)] = std::exp(leaky(score[at(j)]) - mx);
        total += alpha[at(j)];
      }
      for (std::size_t j = 0; j <= deg; ++j) alpha[at(j)] /= total;
      auto row = out.row(vi).segment(k * c, c);
      row += alpha[at(0)] * z.row(vi).segment(k * c, c);
      for (std::size_t j = 0; j < deg; ++j) {
        const auto [u, e] = g.neighbors[v][j];
        const double sm = mask ? mask[e] : 1.0;
        row += alpha[at(j + 1)] * sm * z.row(u).segment(k * c, c);
      }
    }
  }
  if (cache) {
    cache->z = std::move(z);
    cache->alpha = std::move(alpha);
    cache->score = std::move(score);
    cache->offset = std::move(offset);
  }
  return out;
}

inline void gat_backward(const GnnModel& m, const LayerSlot& s, const GraphContext& g, const LayerCache& lc,
                         const Mat& gout, const double* mask, std::vector<Mat>& grads, Mat& gh, double* gmask) {
  const Mat& w = m.params[s.first];
  const Mat& a_src = m.params[s.first + 1];
  const Mat& a_dst = m.params[s.first + 2];
  const int heads = m.config.gat_heads;
  const int c = s.out / heads;
  const Mat& z = lc.z;
  Mat gz = Mat::Zero(z.rows(), z.cols());
  const auto n = static_cast<Eigen::Index>(g.n);
  Mat gsrc = Mat::Zero(n, heads), gdst = Mat::Zero(n, heads);
  std::vector<double> galpha;
  for (std::size_t v = 0; v < g.n; ++v) {
    const std::size_t deg = g.neighbors[v].size();
    const auto vi = static_cast<Eigen::Index>(v);
    galpha.assign(deg + 1, 0.0);
    for (int k = 0; k < heads; ++k) {
      auto at = [&](std::size_t slot) { return (lc.offset[v] + slot) * static_cast<std::size_t>(heads) + static_cast<std::size_t>(k); };
      const auto gv = gout.row(vi).segment(k * c, c);
      for (std::size_t j = 0; j <= deg; ++j) {
        const Eigen::Index u = j == 0 ? vi : static_cast<Eigen::Index>(g.neighbors[v][j - 1].first);
        const double sm = (j == 0 || !mask) ? 1.0 : mask[g.neighbors[v][j - 1].second];
        const double dot = gv.dot(z.row(u).segment(k * c, c));
        galpha[j] = sm * dot;
        gz.row(u).segment(k * c, c) += lc.alpha[at(j)] * sm * gv;
        if (j > 0 && gmask) gmask[g.neighbors[v][j - 1].second] += lc.alpha[at(j)] * dot;
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= deg; ++j) sum += lc.alpha[at(j)] * galpha[j];
      for (std::size_t j = 0; j <= deg; ++j) {
        const double ge = lc.alpha[at(j)] * (galpha[j] - sum);
        const double gs = ge * (lc.score[at(j)] > 0.0 ? 1.0 : kLeakySlope);
        const Eigen::Index u = j == 0 ? vi : static_cast<Eigen::Index>(g.neighbors[v][j - 1].first);
        gdst(vi, k) += gs;
        gsrc(u, k) += gs;
      }
    }
  }
  Mat& ga_src = grads[s.first + 1];
  Mat& ga_dst = grads[s.first + 2];
  for (int k = 0; k < heads; ++k) {
    ga_src.row(k) += gsrc.col(k).transpose() * z.middleCols(k * c, c);
    ga_dst.row(k) += gdst.col(k).transpose() * z.middleCols(k * c, c);
    gz.middleCols(k * c, c) += gsrc.col(k) * a_src.row(k) + gdst.col(k) * a_dst.row(k);
  }
  grads[s.first] += lc.input.transpose() * gz;
  gh += gz * w.transpose();
}

inline Mat layer_forward(const GnnModel& m, const LayerSlot& s, const GraphContext& g, const Mat& h,
                         const double* mask, LayerCache* cache) {
  const auto& p = m.params;
  Mat out;
  std::size_t bias = 0;
  switch (m.config.arch) {
    case Arch::gcn: {
      Mat z = h * p[s.first];
      out = g.gcn.apply(z, mask);
      if (cache) cache->z = std::move(z);
      bias = s.first + 1;
      break;
    }
    case Arch::sage:
    case Arch::wsage: {
      Mat agg = (m.config.arch == Arch::sage ? g.mean : g.wmean).apply(h, mask);
      out = h * p[s.first] + agg * p[s.first + 1];
      if (cache) cache->agg = std::move(agg);
      bias = s.first + 2;
      break;
    }
    case Arch::cheb: {
      const int K = m.config.cheb_k;
      std::vector<Mat> t;
      t.push_back(h);
      if (K > 1) t.push_back(g.cheb.apply(h, mask));
      for (int k = 2; k < K; ++k) t.push_back(2.0 * g.cheb.apply(t[k - 1], mask) - t[k - 2]);
      out = t[0] * p[s.first];
      for (int k = 1; k < K; ++k) out += t[static_cast<std::size_t>(k)] * p[s.first + static_cast<std::size_t>(k)];
      if (cache) cache->cheb_t = std::move(t);
      bias = s.first + static_cast<std::size_t>(K);
      break;
    }
    case Arch::gat:
      out = gat_forward(m, s, g, h, mask, cache);
      bias = s.first + 3;
      break;
  }
  out.rowwise() += p[bias].row(0);
  return out;
}

inline void layer_backward(const GnnModel& m, const LayerSlot& s, const GraphContext& g, const LayerCache& lc,
                           const Mat& gout, const double* mask, std::vector<Mat>& grads, Mat& gh, double* gmask) {
  const auto& p = m.params;
  const Mat& h = lc.input;
  switch (m.config.arch) {
    case Arch::gcn: {
      Mat gz = Mat::Zero(lc.z.rows(), lc.z.cols());
      g.gcn.backward(lc.z, gout, mask, gz, gmask);
      grads[s.first] += h.transpose() * gz;
      gh += gz * p[s.first].transpose();
      grads[s.first + 1] += gout.colwise().sum();
      break;
    }
    case Arch::sage:
    case Arch::wsage: {
      grads[s.first] += h.transpose() * gout;
      grads[s.first + 1] += lc.agg.transpose() * gout;
      gh += gout * p[s.first].transpose();
      const Mat gagg = gout * p[s.first + 1].transpose();
      (m.config.arch == Arch::sage ? g.mean : g.wmean).backward(h, gagg, mask, gh, gmask);
      grads[s.first + 2] += gout.colwise().sum();
      break;
    }
    case Arch::cheb: {
      const int K = m.config.cheb_k;
      std::vector<Mat> gt;
      for (int k = 0; k < K; ++k) {
        grads[s.first + static_cast<std::size_t>(k)] += lc.cheb_t[static_cast<std::size_t>(k)].transpose() * gout;
        gt.push_back(gout * p[s.first + static_cast<std::size_t>(k)].transpose());
      }
      // T_k = 2 L T_{k-1} - T_{k-2}; T_1 = L T_0.
      for (int k = K - 1; k >= 2; --k) {
        Mat scaled = 2.0 * gt[static_cast<std::size_t>(k)];
        g.cheb.backward(lc.cheb_t[static_cast<std::size_t>(k - 1)], scaled, mask, gt[static_cast<std::size_t>(k - 1)], gmask);
        gt[static_cast<std::size_t>(k - 2)] -= gt[static_cast<std::size_t>(k)];
      }
      if (K > 1) g.cheb.backward(lc.cheb_t[0], gt[1], mask, gt[0], gmask);
      gh += gt[0];
      grads[s.first + static_cast<std::size_t>(K)] += gout.colwise().sum();
      break;
    }
    case Arch::gat:
      gat_backward(m, s, g, lc, gout, mask, grads, gh, gmask);
      grads[s.first + 3] += gout.colwise().sum();
      break;
  }
}

}  // namespace detail

/// Standardizes raw node features with the model's stored statistics.
inline Mat standardize(const GnnModel& m, const Mat& x) {
  Mat out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = (out.row(i) - m.feature_mean).cwiseQuotient(m.feature_scale);
  }
  return out;
}

/// ReLU between convolutions, linear last convolution (the embedding), then
/// a linear 12 -> 2 head per node or on the mean-pooled embedding. `mask`,
/// when given, scales each edge's messages in every convolution.
inline ForwardResult forward(const GnnModel& m, const GraphContext& g, const Mat& features,
                             const std::vector<double>* mask = nullptr, ForwardCache* cache = nullptr) {
  detail::check_dims(m, g, features);
  if (g.n == 0) throw Error(ErrorKind::EmptyGraph, "graph has no nodes");
  if (mask && mask->size() != g.m) throw Error(ErrorKind::LengthMismatch, "mask length differs from edge count");
  const double* mk = mask ? mask->data() : nullptr;
  Mat h = standardize(m, features);
  if (cache) cache->layers.assign(m.layers.size(), {});
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->input = h;
    Mat pre = detail::layer_forward(m, m.layers[l], g, h, mk, lc);
    if (l + 1 < m.layers.size()) {
      h = pre.cwiseMax(0.0);
    } else {
      h = pre;
    }
    if (lc) lc->pre = std::move(pre);
  }
  ForwardResult r;
  r.embeddings = std::move(h);
  if (m.config.head == Head::node_level) {
    r.logits = r.embeddings * m.params[m.head_w];
    r.logits.rowwise() += m.params[m.head_b].row(0);
  } else {
    Mat pooled = r.embeddings.colwise().mean();
    r.logits = pooled * m.params[m.head_w] + m.params[m.head_b];
    if (cache) cache->pooled = std::move(pooled);
  }
  return r;
}

/// Mean cross-entropy over logit rows against one class label; fills the
/// logit gradient when asked.
inline double cross_entropy(const Mat& logits, int label, Mat* grad = nullptr) {
  double loss = 0.0;
  if (grad) grad->resize(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    loss += -(logits(i, label) - mx - std::log(z));
    if (grad) {
      grad->row(i) = e / z * inv;
      (*grad)(i, label) -= inv;
    }
  }
  loss *= inv;
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFiniteLoss, "cross-entropy is not finite");
  return loss;
}

/// Class probabilities averaged over the logit rows.
inline Eigen::RowVector2d mean_probability(const Mat& logits) {
  Eigen::RowVector2d p = Eigen::RowVector2d::Zero();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVector2d e = (logits.row(i).array() - mx).exp().matrix();
    p += e / e.sum();
  }
  return p / static_cast<double>(logits.rows());
}

/// Reverse pass from the logit gradient. Parameter gradients accumulate into
/// `grads`; the edge-mask gradient into `gmask` when non-null.
inline void backward(const GnnModel& m, const GraphContext& g, const ForwardCache& cache, const ForwardResult& fr,
                     const Mat& glogits, std::vector<Mat>& grads, const std::vector<double>* mask = nullptr,
                     std::vector<double>* gmask = nullptr) {
  const double* mk = mask ? mask->data() : nullptr;
  double* gmk = nullptr;
  if (gmask) {
    gmask->assign(g.m, 0.0);
    gmk = gmask->data();
  }
  Mat ge;
  if (m.config.head == Head::node_level) {
    grads[m.head_w] += fr.embeddings.transpose() * glogits;
    grads[m.head_b] += glogits.colwise().sum();
    ge = glogits * m.params[m.head_w].transpose();
  } else {
    grads[m.head_w] += cache.pooled.transpose() * glogits;
    grads[m.head_b] += glogits;
    const Mat gp = glogits * m.params[m.head_w].transpose();
    ge = Mat(fr.embeddings.rows(), fr.embeddings.cols());
    for (Eigen::Index i = 0; i < ge.rows(); ++i) ge.row(i) = gp.row(0) / static_cast<double>(ge.rows());
  }
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const auto& lc = cache.layers[l];
    if (l + 1 < m.layers.size()) ge = ge.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
    Mat gh = Mat::Zero(lc.input.rows(), lc.input.cols());
    detail::layer_backward(m, m.layers[l], g, lc, ge, mk, grads, gh, gmk);
    ge = std::move(gh);
  }
}

/// Loss and gradients for one graph whose nodes all carry `label`.
inline double loss_and_gradients(const GnnModel& m, const GraphContext& g, const Mat& features, int label,
                                 std::vector<Mat>& grads, const std::vector<double>* mask = nullptr,
                                 std::vector<double>* gmask = nullptr) {
  ForwardCache cache;
  const auto fr = forward(m, g, features, mask, &cache);
  Mat gl;
  const double loss = cross_entropy(fr.logits, label, &gl);
  backward(m, g, cache, fr, gl, grads, mask, gmask);
  return loss;
}

}  // namespace taugraph::gnn
