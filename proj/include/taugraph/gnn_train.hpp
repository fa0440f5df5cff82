#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "taugraph/gnn.hpp"
#include "taugraph/tabular.hpp"
#include "taugraph/text.hpp"

namespace taugraph::gnn {

// ---------------------------------------------------------------------------
// Optimizers

struct Adam {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Mat> m, v;
  long t = 0;

  void step(std::vector<Mat>& params, const std::vector<Mat>& grads) {
    if (m.empty()) {
      m = zeros_like(params);
      v = zeros_like(params);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      params[i].array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

inline void sgd_step(std::vector<Mat>& params, const std::vector<Mat>& grads, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

/// Stops once `patience` epochs pass without a strict improvement of the
/// monitored loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool update(int epoch, double loss) {
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epoch;
      return false;
    }
    return epoch - best_epoch_ >= patience_;
  }
  bool improved_at(int epoch) const { return best_epoch_ == epoch; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
};

inline double model_score(double accuracy, double loss, double lambda) { return accuracy - lambda * loss; }

// ---------------------------------------------------------------------------
// Samples

struct GraphSample {
  GraphContext context;
  Mat features;
  int label = 0;  // class index
  std::string group_id;
};

inline GraphSample make_sample(const PathologyGraph& g, std::uint64_t seed = 0) {
  GraphSample s;
  s.context = make_context(g, seed);
  s.features = node_features(g);
  s.label = class_index(g.diagnosis);
  s.group_id = g.slide_id;
  return s;
}

/// Indices of a class-balanced training list: every input index once, then
/// minority indices appended cyclically in a seeded order until both classes
/// have equal counts.
inline std::vector<std::size_t> oversample(const std::vector<int>& labels, std::uint64_t seed) {
  std::vector<std::size_t> by[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i] == 0 ? 0 : 1].push_back(i);
  if (by[0].empty() || by[1].empty()) throw Error(ErrorKind::SingleClass, "oversampling needs both classes");
  std::vector<std::size_t> out(labels.size());
  std::iota(out.begin(), out.end(), 0);
  const int minority = by[0].size() < by[1].size() ? 0 : 1;
  auto pool = by[minority];
  Rng rng(seed);
  rng.shuffle(pool);
  const std::size_t need = by[1 - minority].size() - by[minority].size();
  for (std::size_t k = 0; k < need; ++k) out.push_back(pool[k % pool.size()]);
  return out;
}

/// Per-column mean and standard deviation over every node of the given
/// graphs; zero-variance columns get scale 1.
inline void fit_standardization(GnnModel& m, const std::vector<const Mat*>& features) {
  const int d = m.input_dim();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d), sq = Eigen::RowVectorXd::Zero(d);
  double n = 0.0;
  for (const Mat* f : features) {
    sum += f->colwise().sum();
    n += static_cast<double>(f->rows());
  }
  if (n == 0.0) return;
  const Eigen::RowVectorXd mean = sum / n;
  for (const Mat* f : features) {
    for (Eigen::Index i = 0; i < f->rows(); ++i) sq += (f->row(i) - mean).cwiseAbs2();
  }
  m.feature_mean = mean;
  m.feature_scale = (sq / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(m.feature_scale(j) > 1e-12)) m.feature_scale(j) = 1.0;
  }
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> rpad_probability;  // per sample
};

/// Graph-level loss (mean over samples of their mean node cross-entropy) and
/// accuracy of the mean predicted class probability.
inline Evaluation evaluate(const GnnModel& m, const std::vector<GraphSample>& samples,
                           const std::vector<std::size_t>& which) {
  Evaluation e;
  if (which.empty()) return e;
  std::size_t correct = 0;
  for (std::size_t i : which) {
    const auto& s = samples[i];
    const auto fr = forward(m, s.context, s.features);
    e.loss += cross_entropy(fr.logits, s.label);
    const auto p = mean_probability(fr.logits);
    e.rpad_probability.push_back(p(1));
    if ((p(1) > p(0) ? 1 : 0) == s.label) ++correct;
  }
  e.loss /= static_cast<double>(which.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(which.size());
  return e;
}

/// Trains on `train` (indices may repeat) with one optimizer step per graph
/// in a per-epoch shuffled order. With a non-empty `val`, early stopping on
/// validation loss restores the best epoch's parameters.
inline GnnModel train_model(const GnnConfig& cfg, const std::vector<GraphSample>& samples,
                            const std::vector<std::size_t>& train, const std::vector<std::size_t>& val) {
  GnnModel m = init_model(cfg);
  {
    std::vector<std::size_t> uniq = train;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<const Mat*> feats;
    for (std::size_t i : uniq) feats.push_back(&samples[i].features);
    fit_standardization(m, feats);
  }
  Adam adam;
  adam.lr = cfg.learning_rate;
  EarlyStopper stopper(cfg.patience);
  std::vector<Mat> best = m.params;
  m.best_epoch = 0;
  Rng rng(derive_seed(cfg.seed, 0x7472));
  std::vector<std::size_t> order = train;
  auto grads = zeros_like(m.params);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      for (auto& g : grads) g.setZero();
      const auto& s = samples[i];
      total += loss_and_gradients(m, s.context, s.features, s.label, grads);
      if (cfg.optimizer == OptimizerKind::adam) {
        adam.step(m.params, grads);
      } else {
        sgd_step(m.params, grads, cfg.learning_rate);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = order.empty() ? 0.0 : total / static_cast<double>(order.size());
    rec.train_accuracy = evaluate(m, samples, train).accuracy;
    if (!val.empty()) {
      const auto ev = evaluate(m, samples, val);
      rec.val_loss = ev.loss;
      rec.val_accuracy = ev.accuracy;
    }
    m.history.push_back(rec);
    if (!val.empty()) {
      const bool stop = stopper.update(epoch, rec.val_loss);
      if (stopper.improved_at(epoch)) best = m.params;
      if (stop) break;
    }
  }
  if (!val.empty() && stopper.best_epoch() > 0) {
    m.params = std::move(best);
    m.best_epoch = stopper.best_epoch();
  } else {
    m.best_epoch = static_cast<int>(m.history.size());
  }
  return m;
}

struct FoldMetrics {
  int fold = 0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double score = 0.0;
  int best_epoch = 0;
  std::size_t train_size = 0;  // after oversampling
};

struct TrainResult {
  GnnModel model;  // best fold by model_score
  int best_fold = 0;
  std::vector<FoldMetrics> folds;
  std::vector<Split> splits;
};

/// Grouped k-fold training over slides. Each fold oversamples its training
/// part, early-stops on its held-out part, and is scored by
/// accuracy - lambda * loss; the highest-scoring fold's model is returned.
inline TrainResult train(const std::vector<GraphSample>& samples, const GnnConfig& cfg) {
  cfg.validate();
  std::vector<std::string> groups;
  std::vector<Diagnosis> labels;
  for (const auto& s : samples) {
    groups.push_back(s.group_id);
    labels.push_back(diagnosis_from_class(s.label));
  }
  TrainResult r;
  r.splits = grouped_kfold(groups, labels, cfg.kfold_k, derive_seed(cfg.seed, 0x666f));
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < r.splits.size(); ++f) {
    const auto& sp = r.splits[f];
    std::vector<int> train_labels;
    for (std::size_t i : sp.train) train_labels.push_back(samples[i].label);
    const auto over = oversample(train_labels, derive_seed(cfg.seed, 0x6f00 + f));
    std::vector<std::size_t> train_idx;
    for (std::size_t k : over) train_idx.push_back(sp.train[k]);
    GnnConfig fc = cfg;
    fc.seed = derive_seed(cfg.seed, 0x6d00 + f);
    GnnModel m = train_model(fc, samples, train_idx, sp.test);
    const auto ev = evaluate(m, samples, sp.test);
    FoldMetrics fm{static_cast<int>(f), ev.loss, ev.accuracy, model_score(ev.accuracy, ev.loss, cfg.score_lambda),
                   m.best_epoch, train_idx.size()};
    r.folds.push_back(fm);
    if (fm.score > best) {
      best = fm.score;
      r.best_fold = static_cast<int>(f);
      r.model = std::move(m);
    }
  }
  return r;
}

inline Mat embed(const GnnModel& m, const GraphSample& s) { return forward(m, s.context, s.features).embeddings; }

// ---------------------------------------------------------------------------
// k-means on embeddings

struct KMeansResult {
  std::vector<int> labels;  // renumbered by first appearance
  Mat centers;
  double inertia = 0.0;
};

inline constexpr int kKMeansRestarts = 50;

namespace detail {

inline KMeansResult kmeans_once(const Mat& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Mat c(k, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
  c.row(0) = x.row(first);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - c.row(j - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    }
    c.row(j) = x.row(pick);
  }
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  double inertia = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (x.row(i) - c.row(j)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      inertia += bd;
      if (label[static_cast<std::size_t>(i)] != best) {
        label[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Mat sum = Mat::Zero(k, x.cols());
    std::vector<double> count(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(label[static_cast<std::size_t>(i)]) += x.row(i);
      count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] += 1.0;
    }
    for (int j = 0; j < k; ++j) {
      if (count[static_cast<std::size_t>(j)] > 0.0) c.row(j) = sum.row(j) / count[static_cast<std::size_t>(j)];
    }
  }
  return {label, c, inertia};
}

}  // namespace detail

/// k-means++ seeding and Lloyd iterations, best inertia over restarts; restart
/// r draws from derive_seed(seed, r). Labels are renumbered in order of first
/// appearance so equal partitions compare equal.
inline KMeansResult embedding_clustering(const Mat& e, int k, std::uint64_t seed, int restarts = kKMeansRestarts) {
  if (k < 1 || k > e.rows()) {
    throw Error(ErrorKind::BadK, "k=" + std::to_string(k) + " with " + std::to_string(e.rows()) + " rows");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto res = detail::kmeans_once(e, k, rng, 300);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  std::map<int, int> remap;
  Mat centers(best.centers.rows(), best.centers.cols());
  for (auto& l : best.labels) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
    if (inserted) centers.row(it->second) = best.centers.row(l);
    l = it->second;
  }
  best.centers = centers.topRows(static_cast<Eigen::Index>(remap.size()));
  return best;
}

// ---------------------------------------------------------------------------
// Text formats

inline std::string format_embeddings(const PathologyGraph& g, const Mat& e) {
  std::vector<std::string> header{"node_id"};
  for (int j = 0; j < e.cols(); ++j) header.push_back("e" + std::to_string(j));
  text::CsvWriter csv(header);
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    std::vector<std::string> row{g.nodes[static_cast<std::size_t>(i)].record_ref};
    for (Eigen::Index j = 0; j < e.cols(); ++j) row.push_back(text::exact(e(i, j)));
    csv.row(row);
  }
  return csv.str();
}

inline std::string format_history(const std::vector<EpochRecord>& h) {
  text::CsvWriter csv({"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"});
  for (const auto& r : h) {
    csv.row({std::to_string(r.epoch), text::exact(r.train_loss), text::exact(r.train_accuracy), text::exact(r.val_loss),
             text::exact(r.val_accuracy)});
  }
  return csv.str();
}

inline std::string save_checkpoint(const GnnModel& m) {
  std::ostringstream o;
  const auto& c = m.config;
  o << "taugraph-gnn v1\n";
  o << "arch " << to_string(c.arch) << " cheb_k " << c.cheb_k << " gat_heads " << c.gat_heads << " head "
    << to_string(c.head) << "\n";
  o << "layer_dims " << c.layer_dims.size();
  for (int d : c.layer_dims) o << " " << d;
  o << "\nbest_epoch " << m.best_epoch << "\n";
  auto row = [&](const char* name, const Eigen::RowVectorXd& v) {
    o << name;
    for (Eigen::Index j = 0; j < v.size(); ++j) o << " " << text::exact(v(j));
    o << "\n";
  };
  row("feature_mean", m.feature_mean);
  row("feature_scale", m.feature_scale);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& p = m.params[i];
    o << "param " << m.names[i] << " " << p.rows() << " " << p.cols() << "\n";
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index col = 0; col < p.cols(); ++col) o << (col ? " " : "") << text::exact(p(r, col));
      o << "\n";
    }
  }
  o << "end\n";
  return o.str();
}

inline GnnModel load_checkpoint(std::string_view bytes) {
  std::istringstream in{std::string(bytes)};
  auto bad = [](const std::string& w) { return Error(ErrorKind::CorruptPayload, "gnn checkpoint: " + w); };
  auto word = [&]() {
    std::string w;
    if (!(in >> w)) throw bad("truncated");
    return w;
  };
  auto expect = [&](const char* w) {
    if (word() != w) throw bad(std::string("expected '") + w + "'");
  };
  auto real = [&]() {
    const auto s = word();
    const auto v = text::parse_double(s);
    if (!v) throw bad("number '" + s + "'");
    return *v;
  };
  auto integer = [&]() {
    const auto s = word();
    const auto v = text::parse_int<long>(s);
    if (!v) throw bad("integer '" + s + "'");
    return *v;
  };
  expect("taugraph-gnn");
  expect("v1");
  GnnConfig c;
  expect("arch");
  const auto arch = parse_arch(word());
  if (!arch) throw bad("arch");
  c.arch = *arch;
  expect("cheb_k");
  c.cheb_k = static_cast<int>(integer());
  expect("gat_heads");
  c.gat_heads = static_cast<int>(integer());
  expect("head");
  const auto head = parse_head(word());
  if (!head) throw bad("head");
  c.head = *head;
  expect("layer_dims");
  const long nd = integer();
  if (nd < 2 || nd > 64) throw bad("layer_dims");
  c.layer_dims.clear();
  for (long i = 0; i < nd; ++i) c.layer_dims.push_back(static_cast<int>(integer()));
  GnnModel m;
  try {
    m = init_model(c);
  } catch (const Error& e) {
    throw bad(e.detail());
  }
  expect("best_epoch");
  m.best_epoch = static_cast<int>(integer());
  expect("feature_mean");
  for (Eigen::Index j = 0; j < m.feature_mean.size(); ++j) m.feature_mean(j) = real();
  expect("feature_scale");
  for (Eigen::Index j = 0; j < m.feature_scale.size(); ++j) m.feature_scale(j) = real();
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    expect("param");
    if (word() != m.names[i]) throw bad("parameter order");
    if (integer() != m.params[i].rows() || integer() != m.params[i].cols()) throw bad("shape of " + m.names[i]);
    for (Eigen::Index k = 0; k < m.params[i].size(); ++k) m.params[i].data()[k] = real();
  }
  expect("end");
  return m;
}

}  // namespace taugraph::gnn
