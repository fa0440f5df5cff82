#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "taugraph/gnn.hpp"
#include "taugraph/gnn_train.hpp"

namespace taugraph::explain {

using gnn::Mat;

enum class Method { gnnx, pgx };

inline std::string_view to_string(Method m) { return m == Method::gnnx ? "gnnx" : "pgx"; }

/// Edge and node importances in [0, 1] for one graph.
struct Explanation {
  std::vector<double> edge_importance;  // edge order of the graph
  std::vector<double> node_importance;  // mean of incident edges; 0 when isolated
  int target = 0;
  Method method = Method::gnnx;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Masked-prediction objective shared by both explainers:
///   CE(target | masked graph) + size * sum(s) + entropy * mean H(s).
/// With a node-level head every node's prediction is explained, so the
/// cross-entropy is summed over nodes.
struct Objective {
  double lambda_size = 0.005;
  double lambda_ent = 1.0;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double binary_entropy(double s) {
  const double a = std::clamp(s, 1e-12, 1.0 - 1e-12);
  return -(a * std::log(a) + (1.0 - a) * std::log(1.0 - a));
}

/// Objective value at mask `s`; writes d(objective)/d(s) into `gs` when given.
inline double masked_objective(const gnn::GnnModel& model, const gnn::GraphSample& x, int target,
                               const std::vector<double>& s, const Objective& obj, std::vector<double>* gs) {
  auto grads = gnn::zeros_like(model.params);
  gnn::ForwardCache cache;
  const auto fr = gnn::forward(model, x.context, x.features, &s, &cache);
  Mat gl;
  const double rows = static_cast<double>(fr.logits.rows());
  double loss = rows * gnn::cross_entropy(fr.logits, target, gs ? &gl : nullptr);
  if (gs) gl *= rows;
  if (gs) gnn::backward(model, x.context, cache, fr, gl, grads, &s, gs);
  const double m = static_cast<double>(s.size());
  for (std::size_t e = 0; e < s.size(); ++e) {
    loss += obj.lambda_size * s[e] + obj.lambda_ent * binary_entropy(s[e]) / m;
    if (gs) {
      const double a = std::clamp(s[e], 1e-12, 1.0 - 1e-12);
      (*gs)[e] += obj.lambda_size + obj.lambda_ent * std::log((1.0 - a) / a) / m;
    }
  }
  return loss;
}

inline std::vector<double> node_importance(const PathologyGraph& g, const std::vector<double>& edge) {
  std::vector<double> sum(g.nodes.size(), 0.0), cnt(g.nodes.size(), 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    for (std::size_t v : {g.edges[e].u, g.edges[e].v}) {
      sum[v] += edge[e];
      cnt[v] += 1.0;
    }
  }
  for (std::size_t v = 0; v < sum.size(); ++v) sum[v] = cnt[v] > 0.0 ? sum[v] / cnt[v] : 0.0;
  return sum;
}

/// Predicted class of the unmasked graph (mean node probability).
inline int predicted_class(const gnn::GnnModel& model, const gnn::GraphSample& x) {
  const auto p = gnn::mean_probability(gnn::forward(model, x.context, x.features).logits);
  return p(1) > p(0) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// gnnx: one free mask logit per edge, optimized per graph

/// Plain gradient steps by default: every edge is its own coordinate, and
/// Adam's per-coordinate scaling would move all mask logits at nearly the same
/// rate, keeping only the sign of each edge's effect.
struct GnnxConfig {
  int epochs = 100;
  gnn::OptimizerKind optimizer = gnn::OptimizerKind::sgd;
  double learning_rate = 0.1;
  Objective objective;
};

inline Explanation gnnx_explain(const gnn::GnnModel& model, const PathologyGraph& g, const gnn::GraphSample& x,
                                int target, const GnnxConfig& cfg = {}) {
  if (g.edges.size() != x.context.m) throw Error(ErrorKind::LengthMismatch, "graph and sample edge counts differ");
  Explanation out;
  out.method = Method::gnnx;
  out.target = target;
  const std::size_t m = g.edges.size();
  std::vector<Mat> logits{Mat::Zero(1, static_cast<Eigen::Index>(m))};
  std::vector<double> s(m), gs(m);
  auto refresh = [&] {
    for (std::size_t e = 0; e < m; ++e) s[e] = sigmoid(logits[0](0, static_cast<Eigen::Index>(e)));
  };
  refresh();
  gnn::Adam opt;
  opt.lr = cfg.learning_rate;
  for (int it = 0; it < cfg.epochs && m > 0; ++it) {
    const double loss = masked_objective(model, x, target, s, cfg.objective, &gs);
    if (it == 0) out.initial_loss = loss;
    std::vector<Mat> grad{Mat(1, static_cast<Eigen::Index>(m))};
    for (std::size_t e = 0; e < m; ++e) grad[0](0, static_cast<Eigen::Index>(e)) = gs[e] * s[e] * (1.0 - s[e]);
    if (cfg.optimizer == gnn::OptimizerKind::adam) {
      opt.step(logits, grad);
    } else {
      gnn::sgd_step(logits, grad, cfg.learning_rate);
    }
    refresh();
  }
  if (m > 0) {
    out.final_loss = masked_objective(model, x, target, s, cfg.objective, nullptr);
    if (cfg.epochs == 0) out.initial_loss = out.final_loss;
  }
  out.edge_importance = s;
  out.node_importance = node_importance(g, s);
  return out;
}

// ---------------------------------------------------------------------------
// pgx: an MLP over endpoint embeddings scores every edge; trained across graphs

struct PgxConfig {
  int epochs = 30;
  double learning_rate = 0.003;
  int hidden = 64;
  Objective objective;
  std::uint64_t seed = 0;
};

/// Edge logit = mean of f([E_u, E_v]) and f([E_v, E_u]) so the score does not
/// depend on endpoint order; f(z) = relu(z W1 + b1) W2 + b2.
struct PgxExplainer {
  std::vector<Mat> params;  // W1 (24 x h), b1 (1 x h), W2 (h x 1), b2 (1 x 1)
  std::vector<double> epoch_loss;
};

inline PgxExplainer init_pgx(const PgxConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x7067));
  PgxExplainer p;
  const int in = 2 * gnn::kEmbeddingDim;
  p.params = {gnn::detail::glorot(rng, in, cfg.hidden), Mat::Zero(1, cfg.hidden), gnn::detail::glorot(rng, cfg.hidden, 1), Mat::Zero(1, 1)};
  return p;
}

namespace detail {

struct PgxCache {
  Mat z_fwd, z_rev;  // m x 24
  Mat h_fwd, h_rev;  // pre-activation, m x hidden
};

inline std::vector<double> pgx_logits(const PgxExplainer& p, const PathologyGraph& g, const Mat& emb, PgxCache* cache) {
  const auto m = static_cast<Eigen::Index>(g.edges.size());
  const int d = gnn::kEmbeddingDim;
  Mat zf(m, 2 * d), zr(m, 2 * d);
  for (Eigen::Index e = 0; e < m; ++e) {
    const auto u = static_cast<Eigen::Index>(g.edges[static_cast<std::size_t>(e)].u);
    const auto v = static_cast<Eigen::Index>(g.edges[static_cast<std::size_t>(e)].v);
    zf.row(e) << emb.row(u), emb.row(v);
    zr.row(e) << emb.row(v), emb.row(u);
  }
  Mat hf = zf * p.params[0];
  hf.rowwise() += p.params[1].row(0);
  Mat hr = zr * p.params[0];
  hr.rowwise() += p.params[1].row(0);
  const Mat of = hf.cwiseMax(0.0) * p.params[2];
  const Mat orr = hr.cwiseMax(0.0) * p.params[2];
  std::vector<double> w(static_cast<std::size_t>(m));
  for (Eigen::Index e = 0; e < m; ++e) w[static_cast<std::size_t>(e)] = 0.5 * (of(e, 0) + orr(e, 0)) + p.params[3](0, 0);
  if (cache) *cache = {std::move(zf), std::move(zr), std::move(hf), std::move(hr)};
  return w;
}

inline void pgx_backward(const PgxExplainer& p, const PgxCache& c, const std::vector<double>& gw, std::vector<Mat>& grads) {
  const auto m = static_cast<Eigen::Index>(gw.size());
  Mat go(m, 1);
  for (Eigen::Index e = 0; e < m; ++e) go(e, 0) = 0.5 * gw[static_cast<std::size_t>(e)];
  grads[3](0, 0) += std::accumulate(gw.begin(), gw.end(), 0.0);
  for (const auto* pair : {&c.h_fwd, &c.h_rev}) {
    const Mat& h = *pair;
    const Mat& z = pair == &c.h_fwd ? c.z_fwd : c.z_rev;
    grads[2] += h.cwiseMax(0.0).transpose() * go;
    const Mat gh = (go * p.params[2].transpose()).cwiseProduct((h.array() > 0.0).cast<double>().matrix());
    grads[0] += z.transpose() * gh;
    grads[1] += gh.colwise().sum();
  }
}

}  // namespace detail

/// Deterministic edge mask for one graph.
inline std::vector<double> pgx_mask(const PgxExplainer& p, const PathologyGraph& g, const Mat& emb) {
  auto w = detail::pgx_logits(p, g, emb, nullptr);
  for (double& v : w) v = sigmoid(v);
  return w;
}

/// Mean objective over graphs for the current scorer.
inline double pgx_objective(const PgxExplainer& p, const gnn::GnnModel& model, const std::vector<const PathologyGraph*>& graphs,
                            const std::vector<const gnn::GraphSample*>& samples, const std::vector<Mat>& embeddings,
                            const std::vector<int>& targets, const Objective& obj) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i]->edges.empty()) continue;
    total += masked_objective(model, *samples[i], targets[i], pgx_mask(p, *graphs[i], embeddings[i]), obj, nullptr);
    ++used;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

/// One Adam step per graph, graphs visited in a seeded order each epoch.
/// `epoch_loss` records the mean objective before training and after every
/// epoch.
inline PgxExplainer train_pgx(const gnn::GnnModel& model, const std::vector<const PathologyGraph*>& graphs,
                              const std::vector<const gnn::GraphSample*>& samples, const std::vector<int>& targets,
                              const PgxConfig& cfg = {}) {
  if (graphs.size() != samples.size() || graphs.size() != targets.size()) {
    throw Error(ErrorKind::LengthMismatch, "pgx training inputs differ in length");
  }
  PgxExplainer p = init_pgx(cfg);
  std::vector<Mat> emb;
  for (const auto* s : samples) emb.push_back(gnn::embed(model, *s));
  p.epoch_loss.push_back(pgx_objective(p, model, graphs, samples, emb, targets, cfg.objective));
  gnn::Adam opt;
  opt.lr = cfg.learning_rate;
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x7067'6f72));
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const auto& g = *graphs[i];
      if (g.edges.empty()) continue;
      detail::PgxCache cache;
      auto w = detail::pgx_logits(p, g, emb[i], &cache);
      std::vector<double> s(w.size()), gs;
      for (std::size_t e = 0; e < w.size(); ++e) s[e] = sigmoid(w[e]);
      masked_objective(model, *samples[i], targets[i], s, cfg.objective, &gs);
      for (std::size_t e = 0; e < w.size(); ++e) gs[e] *= s[e] * (1.0 - s[e]);
      auto grads = gnn::zeros_like(p.params);
      detail::pgx_backward(p, cache, gs, grads);
      opt.step(p.params, grads);
    }
    p.epoch_loss.push_back(pgx_objective(p, model, graphs, samples, emb, targets, cfg.objective));
  }
  return p;
}

inline Explanation pgx_explain(const PgxExplainer& p, const gnn::GnnModel& model, const PathologyGraph& g,
                               const gnn::GraphSample& x, int target, const Objective& obj = {}) {
  if (g.edges.size() != x.context.m) throw Error(ErrorKind::LengthMismatch, "graph and sample edge counts differ");
  Explanation out;
  out.method = Method::pgx;
  out.target = target;
  out.edge_importance = pgx_mask(p, g, gnn::embed(model, x));
  out.node_importance = node_importance(g, out.edge_importance);
  if (!g.edges.empty()) {
    out.initial_loss = masked_objective(model, x, target, std::vector<double>(g.edges.size(), 0.5), obj, nullptr);
    out.final_loss = masked_objective(model, x, target, out.edge_importance, obj, nullptr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison and aggregation

/// Ranks starting at 1; tied values share the mean of their ranks.
inline std::vector<double> mid_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mid;
    i = j + 1;
  }
  return r;
}

struct Agreement {
  double rho = 0.0;
  bool degenerate = false;  // one side constant (or fewer than two values)
};

/// Spearman correlation of two importance vectors.
inline Agreement spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "importance vectors differ in length");
  const auto ra = mid_ranks(a), rb = mid_ranks(b);
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return {0.0, true};
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {sab / std::sqrt(saa * sbb), false};
}

inline Agreement explainer_agreement(const Explanation& a, const Explanation& b) {
  return spearman(a.edge_importance, b.edge_importance);
}

/// Mean importance per (class, layer). Nodes without incident edges and
/// edges joining two different layers do not contribute; a cell with no
/// contributions is absent.
struct LayerImportance {
  struct Cell {
    std::optional<double> node_mean, edge_mean;
    std::size_t nodes = 0, edges = 0;
  };
  std::array<std::array<Cell, kLayerCount>, 2> cells;  // [class][layer - 1]

  const Cell& at(Diagnosis d, int layer) const {
    return cells[static_cast<std::size_t>(class_index(d))][static_cast<std::size_t>(layer - 1)];
  }
};

inline LayerImportance layer_importance(const std::vector<const PathologyGraph*>& graphs,
                                        const std::vector<const Explanation*>& ex) {
  if (graphs.size() != ex.size()) throw Error(ErrorKind::LengthMismatch, "graphs and explanations differ in length");
  std::array<std::array<double, kLayerCount>, 2> ns{}, es{};
  LayerImportance out;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& g = *graphs[i];
    const auto& x = *ex[i];
    if (x.edge_importance.size() != g.edges.size() || x.node_importance.size() != g.nodes.size()) {
      throw Error(ErrorKind::LengthMismatch, "explanation does not match graph");
    }
    const auto c = static_cast<std::size_t>(class_index(g.diagnosis));
    std::vector<bool> touched(g.nodes.size(), false);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto& ed = g.edges[e];
      touched[ed.u] = touched[ed.v] = true;
      const int lu = layer_number(g.nodes[ed.u].layer);
      if (lu == 0 || lu != layer_number(g.nodes[ed.v].layer)) continue;
      const auto l = static_cast<std::size_t>(lu - 1);
      es[c][l] += x.edge_importance[e];
      ++out.cells[c][l].edges;
    }
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
      const int lv = layer_number(g.nodes[v].layer);
      if (lv == 0 || !touched[v]) continue;
      const auto l = static_cast<std::size_t>(lv - 1);
      ns[c][l] += x.node_importance[v];
      ++out.cells[c][l].nodes;
    }
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      auto& cell = out.cells[c][l];
      if (cell.nodes) cell.node_mean = ns[c][l] / static_cast<double>(cell.nodes);
      if (cell.edges) cell.edge_mean = es[c][l] / static_cast<double>(cell.edges);
    }
  }
  return out;
}

/// Area under the ROC curve by the Mann-Whitney statistic; ties count one half.
inline double roc_auc(const std::vector<double>& score, const std::vector<bool>& positive) {
  if (score.size() != positive.size()) throw Error(ErrorKind::LengthMismatch, "scores and labels differ in length");
  const auto r = mid_ranks(score);
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += r[i];
    }
  }
  const double neg = static_cast<double>(r.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error(ErrorKind::SingleClass, "AUC needs positives and negatives");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

inline std::string format_explanation(const PathologyGraph& g, const Explanation& x) {
  text::CsvWriter w({"u", "v", "u_id", "v_id", "importance"});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& ed = g.edges[e];
    w.row({std::to_string(ed.u), std::to_string(ed.v), g.nodes[ed.u].record_ref, g.nodes[ed.v].record_ref,
           text::exact(x.edge_importance[e])});
  }
  return w.str();
}

}  // namespace taugraph::explain
