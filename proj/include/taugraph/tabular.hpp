#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "taugraph/clustering.hpp"
#include "taugraph/data_model.hpp"
#include "taugraph/error.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/random.hpp"
#include "taugraph/text.hpp"

namespace taugraph {

// ---------------------------------------------------------------------------
// Feature tables

enum class RowKind { cluster, graph };

inline std::string_view to_string(RowKind k) { return k == RowKind::cluster ? "cluster" : "graph"; }

struct FeatureRow {
  std::vector<double> features;
  Diagnosis label = Diagnosis::cAD;
  std::string group_id;
  RowKind kind = RowKind::cluster;
  std::string row_id;
};

struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<FeatureRow> rows;

  std::size_t n_features() const { return columns.size(); }
  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

/// One block of rows sharing a schema, e.g. the clusters of one slide.
struct RowSource {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;
  std::string group_id;
  Diagnosis label = Diagnosis::cAD;
  RowKind kind = RowKind::cluster;
};

inline RowSource rows_from_cluster_stats(const std::vector<ClusterStats>& stats, const std::string& slide_id,
                                         Diagnosis label) {
  RowSource s{ClusterStats::feature_names(), {}, slide_id, label, RowKind::cluster};
  for (const auto& c : stats) s.values.push_back(c.features());
  return s;
}

inline RowSource rows_from_graph_metrics(const GraphMetrics& m, const std::string& slide_id, Diagnosis label) {
  return {GraphMetrics::names(), {m.values()}, slide_id, label, RowKind::graph};
}

/// Concatenates sources into one table. Row ids are "<group>:<kind>:<index>".
inline FeatureTable assemble_features(const std::vector<RowSource>& sources) {
  FeatureTable t;
  bool have_schema = false;
  for (const auto& s : sources) {
    if (!have_schema) {
      t.columns = s.columns;
      have_schema = true;
    } else if (s.columns != t.columns) {
      throw Error(ErrorKind::SchemaMismatch, "group " + s.group_id + " has a different column set");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (s.values[i].size() != t.columns.size()) {
        throw Error(ErrorKind::SchemaMismatch, "group " + s.group_id + " row " + std::to_string(i) + " width");
      }
      t.rows.push_back({s.values[i], s.label, s.group_id, s.kind,
                        s.group_id + ":" + std::string(to_string(s.kind)) + ":" + std::to_string(i)});
    }
  }
  return t;
}

inline FeatureTable select_columns(const FeatureTable& t, const std::vector<std::size_t>& keep) {
  FeatureTable out;
  for (std::size_t j : keep) out.columns.push_back(t.columns.at(j));
  out.rows.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    FeatureRow nr = r;
    nr.features.clear();
    for (std::size_t j : keep) nr.features.push_back(r.features[j]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

inline FeatureTable subset_rows(const FeatureTable& t, const std::vector<std::size_t>& idx) {
  FeatureTable out;
  out.columns = t.columns;
  for (std::size_t i : idx) out.rows.push_back(t.rows.at(i));
  return out;
}

inline std::string format_table(const FeatureTable& t) {
  std::vector<std::string> header{"row_id", "group_id", "row_kind", "label"};
  header.insert(header.end(), t.columns.begin(), t.columns.end());
  text::CsvWriter csv(header);
  for (const auto& r : t.rows) {
    std::vector<std::string> cells{r.row_id, r.group_id, std::string(to_string(r.kind)), std::string(to_string(r.label))};
    for (double v : r.features) cells.push_back(text::exact(v));
    csv.row(cells);
  }
  return csv.str();
}

/// Inverse of format_table.
inline FeatureTable parse_table(std::string_view csv) {
  FeatureTable t;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(csv, '\n')) {
    const auto line = text::trim(raw);
    if (line.empty()) continue;
    auto cells = text::split(line, ',');
    ++line_no;
    if (line_no == 1) {
      if (cells.size() < 4 || cells[0] != "row_id" || cells[3] != "label") {
        throw Error(ErrorKind::MissingColumn, "feature table header needs row_id,group_id,row_kind,label");
      }
      t.columns.assign(cells.begin() + 4, cells.end());
      continue;
    }
    if (cells.size() != t.columns.size() + 4) {
      throw Error(ErrorKind::SchemaMismatch, "feature table line " + std::to_string(line_no) + " has " +
                                                 std::to_string(cells.size()) + " cells");
    }
    FeatureRow r;
    r.row_id = cells[0];
    r.group_id = cells[1];
    if (cells[2] == "cluster") {
      r.kind = RowKind::cluster;
    } else if (cells[2] == "graph") {
      r.kind = RowKind::graph;
    } else {
      throw Error(ErrorKind::BadValue, "row_kind '" + cells[2] + "'");
    }
    const auto label = parse_diagnosis(cells[3]);
    if (!label) throw Error(ErrorKind::BadValue, "label '" + cells[3] + "'");
    r.label = *label;
    for (std::size_t j = 4; j < cells.size(); ++j) {
      const auto v = text::parse_double(cells[j]);
      if (!v) throw Error(ErrorKind::BadValue, "feature value '" + cells[j] + "'");
      r.features.push_back(*v);
    }
    t.rows.push_back(std::move(r));
  }
  if (line_no == 0) throw Error(ErrorKind::MissingColumn, "empty feature table");
  return t;
}

// ---------------------------------------------------------------------------
// Grouped, class-stratified k-fold

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Fold index per group. Groups of each class are shuffled and dealt
/// round-robin, with the dealing position carried over between classes so
/// fold sizes stay within one group of each other.
inline std::map<std::string, int> assign_group_folds(const std::map<std::string, Diagnosis>& group_label, int k,
                                                     std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::BadConfig, "k must be >= 2");
  if (static_cast<std::size_t>(k) > group_label.size()) {
    throw Error(ErrorKind::TooFewGroups,
                "k=" + std::to_string(k) + " but only " + std::to_string(group_label.size()) + " groups");
  }
  std::map<std::string, int> fold;
  std::size_t deal = 0;
  for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
    std::vector<std::string> members;
    for (const auto& [g, l] : group_label) {
      if (l == d) members.push_back(g);
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(class_index(d))));
    rng.shuffle(members);
    for (const auto& g : members) fold[g] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return fold;
}

/// Splits rows by group into k folds; every row of a group lands on the same
/// side of every split.
inline std::vector<Split> grouped_kfold(const std::vector<std::string>& groups, const std::vector<Diagnosis>& labels,
                                        int k, std::uint64_t seed) {
  if (groups.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "groups vs labels");
  std::map<std::string, Diagnosis> group_label;
  for (std::size_t i = 0; i < groups.size(); ++i) group_label.emplace(groups[i], labels[i]);
  const auto fold = assign_group_folds(group_label, k, seed);
  std::vector<Split> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const int f = fold.at(groups[i]);
    for (int j = 0; j < k; ++j) (j == f ? out[j].test : out[j].train).push_back(i);
  }
  return out;
}

inline std::vector<Split> grouped_kfold(const FeatureTable& t, int k, std::uint64_t seed) {
  std::vector<std::string> groups;
  std::vector<Diagnosis> labels;
  for (const auto& r : t.rows) {
    groups.push_back(r.group_id);
    labels.push_back(r.label);
  }
  return grouped_kfold(groups, labels, k, seed);
}

/// Leakage guard: true iff no split shares a group between train and test
/// and every group is tested exactly once.
inline bool splits_group_disjoint(const std::vector<Split>& splits, const std::vector<std::string>& groups) {
  std::map<std::string, int> tested;
  for (const auto& s : splits) {
    std::set<std::string> train, test;
    for (std::size_t i : s.train) train.insert(groups.at(i));
    for (std::size_t i : s.test) test.insert(groups.at(i));
    for (const auto& g : test) {
      if (train.count(g)) return false;
      ++tested[g];
    }
  }
  std::set<std::string> all(groups.begin(), groups.end());
  if (tested.size() != all.size()) return false;
  return std::all_of(tested.begin(), tested.end(), [](const auto& kv) { return kv.second == 1; });
}

// ---------------------------------------------------------------------------
// Random forest

struct RfConfig {
  int n_trees = 200;
  int max_depth = 0;  // 0 = unlimited
  int min_leaf = 1;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // x[feature] <= threshold
  int right = -1;
  double proba[2] = {0.0, 0.0};  // cAD, rpAD; set on leaves
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(const double* x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)];
  }
  double predict_rpad(const double* x) const { return leaf(x).proba[1]; }
};

struct RFModel {
  std::vector<DecisionTree> trees;
  RfConfig config;
  std::size_t n_features = 0;
  int feature_subsample = 1;
  std::vector<std::string> columns;
  std::vector<double> importance;  // mean decrease in impurity, sums to 1 when any split exists

  double predict_rpad(const double* x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict_rpad(x);
    return s / static_cast<double>(trees.size());
  }
};

namespace detail {

inline double gini(double c0, double c1) {
  const double n = c0 + c1;
  if (n <= 0.0) return 0.0;
  const double p = c1 / n;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& t, const RfConfig& cfg, int mtry, Rng& rng, std::vector<double>& importance)
      : t_(t), cfg_(cfg), mtry_(mtry), rng_(rng), imp_(importance), m_(t.n_features()) {
    y_.reserve(t.rows.size());
    for (const auto& r : t.rows) y_.push_back(class_index(r.label));
  }

  DecisionTree build(std::vector<std::size_t> sample) {
    total_ = static_cast<double>(sample.size());
    grow(std::move(sample), 0);
    return std::move(tree_);
  }

 private:
  struct Best {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
  };

  int grow(std::vector<std::size_t> idx, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double c[2] = {0.0, 0.0};
    for (std::size_t i : idx) c[y_[i]] += 1.0;
    const double n = c[0] + c[1];
    const bool pure = c[0] == 0.0 || c[1] == 0.0;
    const bool depth_cap = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
    Best best;
    if (!pure && !depth_cap && n >= 2.0 * cfg_.min_leaf) best = choose_split(idx, c);
    if (best.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].proba[0] = c[0] / n;
      tree_.nodes[static_cast<std::size_t>(id)].proba[1] = c[1] / n;
      return id;
    }
    imp_[static_cast<std::size_t>(best.feature)] += best.gain / total_;
    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      (t_.rows[i].features[static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  /// Weighted impurity decrease n*G - nl*Gl - nr*Gr over the sampled
  /// features; if every sampled feature is constant on this node the
  /// remaining features are tried in index order.
  Best choose_split(const std::vector<std::size_t>& idx, const double* c) {
    std::vector<int> perm(m_);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < mtry_; ++i) std::swap(perm[static_cast<std::size_t>(i)], perm[i + rng_.index(m_ - static_cast<std::size_t>(i))]);
    std::vector<int> drawn(perm.begin(), perm.begin() + mtry_);
    std::sort(drawn.begin(), drawn.end());
    Best best = scan(idx, c, drawn);
    if (best.feature < 0) {
      std::vector<int> rest(perm.begin() + mtry_, perm.end());
      std::sort(rest.begin(), rest.end());
      best = scan(idx, c, rest);
    }
    return best;
  }

  Best scan(const std::vector<std::size_t>& idx, const double* c, const std::vector<int>& features) {
    Best best;
    const double n = c[0] + c[1];
    const double parent = n * gini(c[0], c[1]);
    std::vector<std::pair<double, int>> col(idx.size());
    for (int f : features) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        col[k] = {t_.rows[idx[k]].features[static_cast<std::size_t>(f)], y_[idx[k]]};
      }
      std::sort(col.begin(), col.end());
      double l[2] = {0.0, 0.0};
      for (std::size_t k = 0; k + 1 < col.size(); ++k) {
        l[col[k].second] += 1.0;
        if (col[k].first == col[k + 1].first) continue;
        const double nl = static_cast<double>(k + 1), nr = n - nl;
        if (nl < cfg_.min_leaf || nr < cfg_.min_leaf) continue;
        const double gain = parent - nl * gini(l[0], l[1]) - nr * gini(c[0] - l[0], c[1] - l[1]);
        if (gain > best.gain) {
          double thr = 0.5 * (col[k].first + col[k + 1].first);
          if (!(thr < col[k + 1].first)) thr = col[k].first;  // adjacent doubles
          best = {f, thr, gain};
        }
      }
    }
    if (best.gain < 0.0) best.gain = 0.0;
    return best;
  }

  const FeatureTable& t_;
  const RfConfig& cfg_;
  int mtry_;
  Rng& rng_;
  std::vector<double>& imp_;
  std::size_t m_;
  std::vector<int> y_;
  double total_ = 1.0;
  DecisionTree tree_;
};

}  // namespace detail

inline int default_feature_subsample(std::size_t m) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m)))));
}

/// CART forest on bootstrap samples with Gini splits and ceil(sqrt(M))
/// candidate features per split. Split ties keep the lowest feature index,
/// then the lowest threshold. Tree i draws from derive_seed(seed, i).
inline RFModel train_random_forest(const FeatureTable& t, const RfConfig& cfg = {}) {
  if (t.rows.size() < 2) throw Error(ErrorKind::SingleClass, "need at least 2 rows");
  if (t.n_features() == 0) throw Error(ErrorKind::DimensionMismatch, "table has no feature columns");
  bool seen[2] = {false, false};
  for (const auto& r : t.rows) seen[class_index(r.label)] = true;
  if (!seen[0] || !seen[1]) throw Error(ErrorKind::SingleClass, "training rows contain one class");
  if (cfg.n_trees < 1 || cfg.min_leaf < 1 || cfg.max_depth < 0) throw Error(ErrorKind::BadConfig, "forest config");

  RFModel m;
  m.config = cfg;
  m.n_features = t.n_features();
  m.feature_subsample = default_feature_subsample(m.n_features);
  m.columns = t.columns;
  m.importance.assign(m.n_features, 0.0);
  const std::size_t n = t.rows.size();
  for (int k = 0; k < cfg.n_trees; ++k) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = rng.index(n);
    std::vector<double> imp(m.n_features, 0.0);
    detail::TreeBuilder b(t, cfg, m.feature_subsample, rng, imp);
    m.trees.push_back(b.build(std::move(sample)));
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0) {
      for (std::size_t j = 0; j < imp.size(); ++j) m.importance[j] += imp[j] / total;
    }
  }
  const double total = std::accumulate(m.importance.begin(), m.importance.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : m.importance) v /= total;
  }
  return m;
}

struct ClassProba {
  double cad = 0.0;
  double rpad = 0.0;
  /// Ties go to cAD.
  Diagnosis predicted() const { return rpad > cad ? Diagnosis::rpAD : Diagnosis::cAD; }
};

inline std::vector<ClassProba> rf_predict(const RFModel& m, const std::vector<std::vector<double>>& rows) {
  std::vector<ClassProba> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != m.n_features) {
      throw Error(ErrorKind::DimensionMismatch,
                  "row has " + std::to_string(r.size()) + " features, model expects " + std::to_string(m.n_features));
    }
    double c = 0.0, p = 0.0;
    for (const auto& t : m.trees) {
      const auto& leaf = t.leaf(r.data());
      c += leaf.proba[0];
      p += leaf.proba[1];
    }
    const double k = static_cast<double>(m.trees.size());
    out.push_back({c / k, p / k});
  }
  return out;
}

inline std::vector<ClassProba> rf_predict(const RFModel& m, const FeatureTable& t) {
  std::vector<std::vector<double>> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) rows.push_back(r.features);
  return rf_predict(m, rows);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvPrediction {
  std::size_t row = 0;
  int fold = 0;
  ClassProba proba;
};

struct CvResult {
  std::vector<CvPrediction> predictions;  // ordered by row
  std::vector<std::vector<double>> fold_importance;
  double row_accuracy = 0.0;
  /// Per group, the mean rpAD probability of its rows decides the call.
  double group_accuracy = 0.0;
  std::map<std::string, double> group_rpad;

  std::vector<double> mean_importance() const {
    std::vector<double> out;
    if (fold_importance.empty()) return out;
    out.assign(fold_importance[0].size(), 0.0);
    for (const auto& f : fold_importance) {
      for (std::size_t j = 0; j < f.size(); ++j) out[j] += f[j] / static_cast<double>(fold_importance.size());
    }
    return out;
  }
};

inline CvResult cross_validate(const FeatureTable& t, const std::vector<Split>& splits, const RfConfig& cfg) {
  CvResult out;
  out.predictions.resize(t.rows.size());
  for (std::size_t f = 0; f < splits.size(); ++f) {
    RfConfig c = cfg;
    c.seed = derive_seed(cfg.seed, 1000 + f);
    const auto model = train_random_forest(subset_rows(t, splits[f].train), c);
    out.fold_importance.push_back(model.importance);
    const auto proba = rf_predict(model, subset_rows(t, splits[f].test));
    for (std::size_t k = 0; k < splits[f].test.size(); ++k) {
      out.predictions[splits[f].test[k]] = {splits[f].test[k], static_cast<int>(f), proba[k]};
    }
  }
  std::size_t correct = 0;
  std::map<std::string, std::pair<double, double>> acc;  // sum, count
  std::map<std::string, Diagnosis> truth;
  for (const auto& p : out.predictions) {
    const auto& r = t.rows[p.row];
    if (p.proba.predicted() == r.label) ++correct;
    acc[r.group_id].first += p.proba.rpad;
    acc[r.group_id].second += 1.0;
    truth[r.group_id] = r.label;
  }
  out.row_accuracy = t.rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(t.rows.size());
  std::size_t gc = 0;
  for (const auto& [g, sc] : acc) {
    const double p = sc.first / sc.second;
    out.group_rpad[g] = p;
    if ((p > 0.5 ? Diagnosis::rpAD : Diagnosis::cAD) == truth[g]) ++gc;
  }
  out.group_accuracy = acc.empty() ? 0.0 : static_cast<double>(gc) / static_cast<double>(acc.size());
  return out;
}

// ---------------------------------------------------------------------------
// Recursive feature elimination

struct RfeResult {
  std::vector<std::string> elimination_order;  // first dropped first
  std::map<std::size_t, double> accuracy_by_size;
  std::vector<std::string> best_subset;
  /// 1 = last survivor.
  std::map<std::string, int> rank;
};

/// Drops one feature per round (lowest mean impurity importance over the CV
/// fold models, ties to the lowest column index) until one remains. The best
/// subset is the smallest size reaching the highest row accuracy.
inline RfeResult recursive_feature_elimination(const FeatureTable& t, const RfConfig& cfg, int k, std::uint64_t cv_seed) {
  if (t.n_features() < 2) throw Error(ErrorKind::BadConfig, "RFE needs at least 2 features");
  const auto splits = grouped_kfold(t, k, cv_seed);
  std::vector<std::size_t> remaining(t.n_features());
  std::iota(remaining.begin(), remaining.end(), 0);
  RfeResult out;
  std::map<std::size_t, std::vector<std::size_t>> subset_at;
  while (true) {
    const auto sub = select_columns(t, remaining);
    const auto cv = cross_validate(sub, splits, cfg);
    out.accuracy_by_size[remaining.size()] = cv.row_accuracy;
    subset_at[remaining.size()] = remaining;
    if (remaining.size() == 1) break;
    const auto imp = cv.mean_importance();
    const std::size_t drop = static_cast<std::size_t>(std::min_element(imp.begin(), imp.end()) - imp.begin());
    out.elimination_order.push_back(t.columns[remaining[drop]]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  out.elimination_order.push_back(t.columns[remaining[0]]);
  const int m = static_cast<int>(out.elimination_order.size());
  for (int i = 0; i < m; ++i) out.rank[out.elimination_order[static_cast<std::size_t>(i)]] = m - i;
  out.elimination_order.pop_back();
  double best = -1.0;
  std::size_t best_size = 1;
  for (const auto& [size, acc] : out.accuracy_by_size) {
    if (acc > best) {
      best = acc;
      best_size = size;
    }
  }
  for (std::size_t j : subset_at[best_size]) out.best_subset.push_back(t.columns[j]);
  return out;
}

// ---------------------------------------------------------------------------
// Shapley attributions

enum class ShapleyMode { exact, sampled };

struct ShapleyConfig {
  ShapleyMode mode = ShapleyMode::exact;
  int n_permutations = 200;
  std::size_t max_background = 100;
  std::uint64_t seed = 0;
};

struct ShapleyAttribution {
  std::string row_id;
  double base_value = 0.0;
  std::vector<double> phi;
  double prediction = 0.0;
  ShapleyMode mode = ShapleyMode::exact;
};

inline constexpr std::size_t kMaxExactShapleyFeatures = 15;

/// Background rows: all of them when there are at most `cap`, otherwise a
/// seeded sample without replacement (kept in table order).
inline std::vector<std::vector<double>> shapley_background(const FeatureTable& t, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(t.rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (cap > 0 && idx.size() > cap) {
    Rng rng(derive_seed(seed, 77));
    rng.shuffle(idx);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<std::vector<double>> out;
  for (std::size_t i : idx) out.push_back(t.rows[i].features);
  return out;
}

/// Interventional Shapley values of the forest's rpAD probability. The value
/// of a coalition S is the mean prediction over background rows with the
/// features in S taken from x. Exact mode enumerates all 2^M coalitions;
/// sampled mode averages marginal contributions along seeded permutations,
/// pairing each permutation with one background row.
inline ShapleyAttribution shapley_attribution(const RFModel& m, const std::vector<std::vector<double>>& background,
                                              const std::vector<double>& x, const ShapleyConfig& cfg = {}) {
  const std::size_t M = m.n_features;
  if (x.size() != M) throw Error(ErrorKind::DimensionMismatch, "row width differs from model");
  if (background.empty()) throw Error(ErrorKind::BadConfig, "empty background");
  ShapleyAttribution out;
  out.mode = cfg.mode;
  out.phi.assign(M, 0.0);
  out.prediction = m.predict_rpad(x.data());
  std::vector<double> z(M);

  if (cfg.mode == ShapleyMode::exact) {
    if (M > kMaxExactShapleyFeatures) {
      throw Error(ErrorKind::TooManyFeaturesForExact, std::to_string(M) + " features, exact mode allows " +
                                                          std::to_string(kMaxExactShapleyFeatures));
    }
    const std::size_t full = std::size_t{1} << M;
    std::vector<double> v(full, 0.0);
    for (std::size_t mask = 0; mask < full; ++mask) {
      double s = 0.0;
      for (const auto& b : background) {
        for (std::size_t j = 0; j < M; ++j) z[j] = (mask >> j) & 1 ? x[j] : b[j];
        s += m.predict_rpad(z.data());
      }
      v[mask] = s / static_cast<double>(background.size());
    }
    // w(s) = s! (M-s-1)! / M!
    std::vector<double> w(M, 0.0);
    for (std::size_t s = 0; s < M; ++s) {
      w[s] = std::exp(std::lgamma(double(s) + 1) + std::lgamma(double(M - s)) - std::lgamma(double(M) + 1));
    }
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t bit = std::size_t{1} << j;
      double phi = 0.0;
      for (std::size_t mask = 0; mask < full; ++mask) {
        if (mask & bit) continue;
        phi += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
      }
      out.phi[j] = phi;
    }
    out.base_value = v[0];
    return out;
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(M);
  double base = 0.0;
  for (int p = 0; p < cfg.n_permutations; ++p) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto& b = background[rng.index(background.size())];
    z = b;
    double prev = m.predict_rpad(z.data());
    base += prev;
    for (std::size_t j : order) {
      z[j] = x[j];
      const double cur = m.predict_rpad(z.data());
      out.phi[j] += cur - prev;
      prev = cur;
    }
  }
  const double n = static_cast<double>(std::max(1, cfg.n_permutations));
  for (auto& p : out.phi) p /= n;
  out.base_value = base / n;
  return out;
}

inline std::string format_attributions(const std::vector<std::string>& columns,
                                       const std::vector<ShapleyAttribution>& rows) {
  text::CsvWriter csv({"row_id", "feature", "phi", "base_value", "prediction"});
  for (const auto& a : rows) {
    for (std::size_t j = 0; j < a.phi.size(); ++j) {
      csv.row({a.row_id, columns[j], text::exact(a.phi[j]), text::exact(a.base_value), text::exact(a.prediction)});
    }
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// Model text format

inline std::string dump_model(const RFModel& m) {
  std::ostringstream o;
  o << "taugraph-rf v1\n";
  o << "n_trees " << m.trees.size() << " max_depth " << m.config.max_depth << " min_leaf " << m.config.min_leaf
    << " seed " << m.config.seed << " feature_subsample " << m.feature_subsample << "\n";
  o << "columns " << m.n_features;
  for (const auto& c : m.columns) o << " " << c;
  o << "\nimportance";
  for (double v : m.importance) o << " " << text::exact(v);
  o << "\n";
  for (const auto& t : m.trees) {
    o << "tree " << t.nodes.size() << "\n";
    for (const auto& n : t.nodes) {
      if (n.feature < 0) {
        o << "leaf " << text::exact(n.proba[0]) << " " << text::exact(n.proba[1]) << "\n";
      } else {
        o << "split " << n.feature << " " << text::exact(n.threshold) << " " << n.left << " " << n.right << "\n";
      }
    }
  }
  o << "end\n";
  return o.str();
}

inline RFModel load_model(std::string_view bytes) {
  std::istringstream in{std::string(bytes)};
  auto bad = [](const std::string& what) { return Error(ErrorKind::CorruptPayload, "forest model: " + what); };
  auto expect = [&](const std::string& word) {
    std::string w;
    if (!(in >> w) || w != word) throw bad("expected '" + word + "'");
  };
  auto real = [&]() {
    std::string s;
    if (!(in >> s)) throw bad("truncated");
    const auto v = text::parse_double(s);
    if (!v) throw bad("number '" + s + "'");
    return *v;
  };
  RFModel m;
  std::string header, version;
  in >> header >> version;
  if (header != "taugraph-rf" || version != "v1") throw bad("header");
  std::size_t n_trees = 0;
  expect("n_trees");
  in >> n_trees;
  expect("max_depth");
  in >> m.config.max_depth;
  expect("min_leaf");
  in >> m.config.min_leaf;
  expect("seed");
  in >> m.config.seed;
  expect("feature_subsample");
  in >> m.feature_subsample;
  expect("columns");
  in >> m.n_features;
  if (!in) throw bad("header fields");
  m.columns.resize(m.n_features);
  for (auto& c : m.columns) in >> c;
  expect("importance");
  m.importance.resize(m.n_features);
  for (auto& v : m.importance) v = real();
  m.config.n_trees = static_cast<int>(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    expect("tree");
    std::size_t nn = 0;
    if (!(in >> nn) || nn == 0) throw bad("tree size");
    DecisionTree tree;
    for (std::size_t i = 0; i < nn; ++i) {
      std::string kind;
      in >> kind;
      TreeNode node;
      if (kind == "leaf") {
        node.proba[0] = real();
        node.proba[1] = real();
      } else if (kind == "split") {
        in >> node.feature;
        node.threshold = real();
        in >> node.left >> node.right;
        if (!in || node.feature < 0 || static_cast<std::size_t>(node.feature) >= m.n_features || node.left <= static_cast<int>(i) ||
            node.right <= static_cast<int>(i) || static_cast<std::size_t>(std::max(node.left, node.right)) >= nn) {
          throw bad("split node");
        }
      } else {
        throw bad("node kind '" + kind + "'");
      }
      tree.nodes.push_back(node);
    }
    m.trees.push_back(std::move(tree));
  }
  expect("end");
  return m;
}

}  // namespace taugraph
