#pragma once

// End-to-end steps shared by the command-line tool and the acceptance suite.

#include <map>
#include <string>
#include <vector>

#include "taugraph/clustering.hpp"
#include "taugraph/data_model.hpp"
#include "taugraph/explain.hpp"
#include "taugraph/gnn.hpp"
#include "taugraph/gnn_train.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/spatial_graph.hpp"
#include "taugraph/tabular.hpp"

namespace taugraph::pipeline {

using gnn::GraphSample;
using gnn::Mat;

inline std::vector<PathologyGraph> patient_graphs(const Cohort& c, ObjectType type) {
  std::vector<PathologyGraph> out;
  for (const auto& s : c.slides) out.push_back(build_patient_graph(s, type));
  return out;
}

inline std::vector<GraphSample> make_samples(const std::vector<PathologyGraph>& graphs) {
  std::vector<GraphSample> out;
  for (const auto& g : graphs) out.push_back(gnn::make_sample(g));
  return out;
}

/// Clusters with fewer than `min_size` nodes carry no edges and are dropped.
inline constexpr int kMinClusterSize = 2;

/// One row per cluster (connected components or MCL) of every graph.
inline FeatureTable raw_cluster_table(const std::vector<PathologyGraph>& graphs, ClusterMethod method,
                                      const MclParams& mcl = {}) {
  std::vector<RowSource> sources;
  for (const auto& g : graphs) {
    const auto a = cluster_graph(g, method, mcl);
    std::vector<ClusterStats> keep;
    for (const auto& s : cluster_stats(g, a.cluster_of)) {
      if (s.size >= kMinClusterSize) keep.push_back(s);
    }
    sources.push_back(rows_from_cluster_stats(keep, g.slide_id, g.diagnosis));
  }
  return assemble_features(sources);
}

inline const std::vector<std::string>& embedding_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c;
    for (int j = 0; j < gnn::kEmbeddingDim; ++j) c.push_back("emb_" + std::to_string(j));
    for (const auto& n : ClusterStats::feature_names()) c.push_back(n);
    return c;
  }();
  return cols;
}

/// Per graph, k-means on node embeddings; one row per embedding cluster with
/// its mean embedding and its cluster statistics. Graphs with fewer nodes
/// than `k` use one cluster per node.
inline FeatureTable embedding_table(const std::vector<PathologyGraph>& graphs, const std::vector<Mat>& embeddings, int k,
                                    std::uint64_t seed) {
  std::vector<RowSource> sources;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& g = graphs[i];
    const Mat& e = embeddings[i];
    const int kk = std::min<int>(k, static_cast<int>(e.rows()));
    const auto km = gnn::embedding_clustering(e, kk, derive_seed(seed, i));
    const auto stats = cluster_stats(g, km.labels);
    RowSource src{embedding_columns(), {}, g.slide_id, g.diagnosis, RowKind::cluster};
    for (const auto& s : stats) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(gnn::kEmbeddingDim);
      for (std::size_t v = 0; v < km.labels.size(); ++v) {
        if (km.labels[v] == s.cluster_id) mean += e.row(static_cast<Eigen::Index>(v));
      }
      mean /= s.size;
      std::vector<double> row(mean.data(), mean.data() + mean.size());
      for (double f : s.features()) row.push_back(f);
      src.values.push_back(std::move(row));
    }
    sources.push_back(std::move(src));
  }
  return assemble_features(sources);
}

/// Maps slide-level splits onto the rows of a table through the row groups.
/// Rows of slides tested in no split go to every training side.
inline std::vector<Split> row_splits(const FeatureTable& t, const std::vector<Split>& slide_splits,
                                     const std::vector<std::string>& slide_ids) {
  std::map<std::string, std::size_t> fold;
  for (std::size_t f = 0; f < slide_splits.size(); ++f) {
    for (std::size_t i : slide_splits[f].test) fold[slide_ids[i]] = f;
  }
  std::vector<Split> out(slide_splits.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto it = fold.find(t.rows[r].group_id);
    const std::size_t f = it == fold.end() ? out.size() : it->second;
    for (std::size_t j = 0; j < out.size(); ++j) (j == f ? out[j].test : out[j].train).push_back(r);
  }
  return out;
}

/// Slide-level calls from row probabilities: the mean rpAD probability of a
/// slide's rows decides.
struct SlideCalls {
  std::map<std::string, double> rpad;
  double accuracy = 0.0;
  double row_accuracy = 0.0;
};

inline SlideCalls slide_calls(const FeatureTable& t, const std::vector<ClassProba>& proba) {
  SlideCalls out;
  std::map<std::string, std::pair<double, double>> acc;
  std::map<std::string, Diagnosis> truth;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    acc[t.rows[r].group_id].first += proba[r].rpad;
    acc[t.rows[r].group_id].second += 1.0;
    truth[t.rows[r].group_id] = t.rows[r].label;
    if (proba[r].predicted() == t.rows[r].label) ++correct;
  }
  std::size_t gc = 0;
  for (const auto& [g, sc] : acc) {
    out.rpad[g] = sc.first / sc.second;
    if ((out.rpad[g] > 0.5 ? Diagnosis::rpAD : Diagnosis::cAD) == truth[g]) ++gc;
  }
  out.accuracy = acc.empty() ? 0.0 : static_cast<double>(gc) / static_cast<double>(acc.size());
  out.row_accuracy = t.rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(t.rows.size());
  return out;
}

struct ComparisonConfig {
  int outer_k = 5;
  ClusterMethod raw_method = ClusterMethod::connected_components;
  MclParams mcl;
  int embedding_clusters = 8;
  RfConfig rf;
  gnn::GnnConfig gnn;  // inner k-fold on the outer training slides
  std::uint64_t seed = 42;
};

struct Comparison {
  std::vector<Split> slide_splits;
  SlideCalls raw, embedding;
  std::vector<std::vector<Split>> gnn_inner_splits;  // per outer fold, indices into that fold's training slides
  std::vector<std::vector<std::size_t>> gnn_train_slides;  // per outer fold
};

/// Raw cluster features against embedding-cluster features on the same
/// grouped outer folds. The GNN of each outer fold sees only that fold's
/// training slides.
inline Comparison compare_raw_and_embedding(const std::vector<PathologyGraph>& graphs,
                                            const std::vector<GraphSample>& samples, const ComparisonConfig& cfg) {
  Comparison out;
  std::vector<std::string> ids;
  std::vector<Diagnosis> labels;
  for (const auto& g : graphs) {
    ids.push_back(g.slide_id);
    labels.push_back(g.diagnosis);
  }
  out.slide_splits = grouped_kfold(ids, labels, cfg.outer_k, derive_seed(cfg.seed, 0x6f75));

  const auto raw = raw_cluster_table(graphs, cfg.raw_method, cfg.mcl);
  auto raw_cfg = cfg.rf;
  raw_cfg.seed = derive_seed(cfg.seed, 0x7261);
  const auto raw_cv = cross_validate(raw, row_splits(raw, out.slide_splits, ids), raw_cfg);
  std::vector<ClassProba> raw_p;
  for (const auto& p : raw_cv.predictions) raw_p.push_back(p.proba);
  out.raw = slide_calls(raw, raw_p);

  std::vector<ClassProba> emb_p;
  FeatureTable emb_test_all;
  for (std::size_t f = 0; f < out.slide_splits.size(); ++f) {
    const auto& sp = out.slide_splits[f];
    std::vector<GraphSample> train_samples;
    for (std::size_t i : sp.train) train_samples.push_back(samples[i]);
    auto gc = cfg.gnn;
    gc.seed = derive_seed(cfg.seed, 0x676e00 + f);
    const auto tr = gnn::train(train_samples, gc);
    out.gnn_inner_splits.push_back(tr.splits);
    out.gnn_train_slides.push_back(sp.train);
    std::vector<Mat> emb;
    for (const auto& s : samples) emb.push_back(gnn::embed(tr.model, s));
    const auto table = embedding_table(graphs, emb, cfg.embedding_clusters, derive_seed(cfg.seed, 0x6b6d));
    const auto rs = row_splits(table, {sp}, ids);
    auto rf = cfg.rf;
    rf.seed = derive_seed(cfg.seed, 0x656d00 + f);
    const auto model = train_random_forest(subset_rows(table, rs[0].train), rf);
    const auto test = subset_rows(table, rs[0].test);
    const auto proba = rf_predict(model, test);
    for (std::size_t r = 0; r < test.rows.size(); ++r) {
      emb_test_all.rows.push_back(test.rows[r]);
      emb_p.push_back(proba[r]);
    }
  }
  emb_test_all.columns = embedding_columns();
  out.embedding = slide_calls(emb_test_all, emb_p);
  return out;
}

// ---------------------------------------------------------------------------
// Explanations over a cohort

struct CohortExplanations {
  std::vector<explain::Explanation> gnnx, pgx;
  std::vector<explain::Agreement> agreement;  // per graph
  explain::PgxExplainer pgx_model;
};

/// Explains every graph for its true class with both explainers.
inline CohortExplanations explain_cohort(const gnn::GnnModel& model, const std::vector<PathologyGraph>& graphs,
                                         const std::vector<GraphSample>& samples, const explain::GnnxConfig& gx = {},
                                         const explain::PgxConfig& px = {}) {
  CohortExplanations out;
  std::vector<const PathologyGraph*> gp;
  std::vector<const GraphSample*> sp;
  std::vector<int> targets;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    gp.push_back(&graphs[i]);
    sp.push_back(&samples[i]);
    targets.push_back(samples[i].label);
  }
  out.pgx_model = explain::train_pgx(model, gp, sp, targets, px);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    out.gnnx.push_back(explain::gnnx_explain(model, graphs[i], samples[i], targets[i], gx));
    out.pgx.push_back(explain::pgx_explain(out.pgx_model, model, graphs[i], samples[i], targets[i], px.objective));
    out.agreement.push_back(explain::explainer_agreement(out.gnnx.back(), out.pgx.back()));
  }
  return out;
}

inline explain::LayerImportance layer_table(const std::vector<PathologyGraph>& graphs,
                                            const std::vector<explain::Explanation>& ex) {
  std::vector<const PathologyGraph*> gp;
  std::vector<const explain::Explanation*> ep;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    gp.push_back(&graphs[i]);
    ep.push_back(&ex[i]);
  }
  return explain::layer_importance(gp, ep);
}

/// Mean of the node means over the given layers; layers with no value are
/// skipped.
inline double mean_over_layers(const explain::LayerImportance& t, Diagnosis d, std::initializer_list<int> layers) {
  double s = 0.0, n = 0.0;
  for (int l : layers) {
    if (const auto& v = t.at(d, l).node_mean) {
      s += *v;
      n += 1.0;
    }
  }
  return n > 0.0 ? s / n : 0.0;
}

}  // namespace taugraph::pipeline
