#pragma once

// Sectioned run configuration. Every key has a default; an INI file and
// "section.key=value" overrides are layered on top. Unknown keys are errors.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "taugraph/clustering.hpp"
#include "taugraph/error.hpp"
#include "taugraph/explain.hpp"
#include "taugraph/gnn.hpp"
#include "taugraph/spatial_graph.hpp"
#include "taugraph/synth.hpp"
#include "taugraph/tabular.hpp"
#include "taugraph/text.hpp"

namespace taugraph::config {

inline const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"run.seed", "42"},

      {"synth.slides_per_class", "20"},
      {"synth.roi_width_um", "4000"},
      {"synth.roi_height_um", "4000"},
      {"synth.parent_rate_per_mm2", "2"},
      {"synth.offspring_mean", "10"},
      {"synth.rpad_multipliers", "1,1,3,3,1,1"},
      {"synth.cad_multipliers", "1,3,1,1,3,3"},
      {"synth.rpad_sigma_um", "40"},
      {"synth.cad_sigma_um", "120"},
      {"synth.plaque_fraction", "0.5"},
      {"synth.resolution_nm_per_px", "250"},

      {"graph.object_type", "plaque"},
      {"graph.max_edge_um", "1000"},

      {"cluster.method", "cc"},
      {"cluster.expansion", "2"},
      {"cluster.inflation", "2"},
      {"cluster.tolerance", "1e-6"},
      {"cluster.max_iters", "200"},

      {"rf.n_trees", "200"},
      {"rf.max_depth", "0"},
      {"rf.min_leaf", "1"},
      {"rf.kfold", "5"},

      {"shap.mode", "exact"},
      {"shap.permutations", "200"},
      {"shap.max_background", "100"},
      {"shap.max_rows", "200"},

      {"gnn.arch", "gcn"},
      {"gnn.head", "node_level"},
      {"gnn.hidden", "32"},
      {"gnn.cheb_k", "3"},
      {"gnn.gat_heads", "2"},
      {"gnn.optimizer", "adam"},
      {"gnn.learning_rate", "0.005"},
      {"gnn.max_epochs", "100"},
      {"gnn.patience", "15"},
      {"gnn.kfold", "5"},
      {"gnn.score_lambda", "0.5"},

      {"embed.clusters", "8"},

      {"explain.lambda_size", "0.005"},
      {"explain.lambda_ent", "1"},
      {"explain.gnnx_epochs", "100"},
      {"explain.gnnx_optimizer", "sgd"},
      {"explain.gnnx_learning_rate", "0.1"},
      {"explain.pgx_epochs", "30"},
      {"explain.pgx_learning_rate", "0.003"},
      {"explain.pgx_hidden", "64"},
  };
  return d;
}

class Settings {
 public:
  Settings() : values_(defaults()) {}

  /// Reads INI text. Keys outside any section are rejected.
  void merge_ini(const std::string& text) {
    boost::property_tree::ptree pt;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw Error(ErrorKind::BadConfig, std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    for (const auto& [section, body] : pt) {
      if (body.empty()) throw Error(ErrorKind::BadConfig, "config: key '" + section + "' outside a section");
      for (const auto& [key, v] : body) set(section + "." + key, v.get_value<std::string>());
    }
  }

  /// "section.key=value".
  void merge_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::BadConfig, "override '" + kv + "' is not key=value");
    set(std::string(text::trim(kv.substr(0, eq))), std::string(text::trim(kv.substr(eq + 1))));
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw Error(ErrorKind::BadConfig, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorKind::BadConfig, "unknown config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key) const {
    const auto v = text::parse_double(str(key));
    if (!v) throw Error(ErrorKind::BadConfig, key + " = '" + str(key) + "' is not a number");
    return *v;
  }

  long long integer(const std::string& key) const {
    const auto v = text::parse_int<long long>(str(key));
    if (!v) throw Error(ErrorKind::BadConfig, key + " = '" + str(key) + "' is not an integer");
    return *v;
  }

  std::uint64_t seed() const {
    const auto v = text::parse_int<std::uint64_t>(str("run.seed"));
    if (!v) throw Error(ErrorKind::BadConfig, "run.seed must be a non-negative integer");
    return *v;
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : text::split(str(key), ',')) {
      const auto v = text::parse_double(p);
      if (!v) throw Error(ErrorKind::BadConfig, key + ": '" + p + "' is not a number");
      out.push_back(*v);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views

inline SynthConfig synth(const Settings& s) {
  SynthConfig c;
  c.n_slides_per_class = static_cast<int>(s.integer("synth.slides_per_class"));
  c.roi_width_um = s.num("synth.roi_width_um");
  c.roi_height_um = s.num("synth.roi_height_um");
  c.parent_rate_per_mm2 = s.num("synth.parent_rate_per_mm2");
  c.offspring_mean = s.num("synth.offspring_mean");
  auto six = [&](const char* key, std::array<double, kLayerCount>& dst) {
    const auto v = s.list(key);
    if (v.size() != kLayerCount) throw Error(ErrorKind::BadConfig, std::string(key) + " needs 6 values");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  six("synth.rpad_multipliers", c.rpad_multipliers);
  six("synth.cad_multipliers", c.cad_multipliers);
  c.rpad_sigma_um = s.num("synth.rpad_sigma_um");
  c.cad_sigma_um = s.num("synth.cad_sigma_um");
  c.plaque_fraction = s.num("synth.plaque_fraction");
  c.resolution_nm_per_px = s.num("synth.resolution_nm_per_px");
  c.seed = s.seed();
  c.validate();
  return c;
}

inline ObjectType object_type(const Settings& s) {
  const auto t = parse_object_type(s.str("graph.object_type"));
  if (!t) throw Error(ErrorKind::BadConfig, "graph.object_type must be plaque or tangle");
  return *t;
}

inline BuildOptions build_options(const Settings& s) {
  BuildOptions o;
  o.max_edge_um = s.num("graph.max_edge_um");
  if (!(o.max_edge_um > 0.0)) throw Error(ErrorKind::BadConfig, "graph.max_edge_um must be > 0");
  return o;
}

inline ClusterMethod cluster_method(const Settings& s) {
  const auto& m = s.str("cluster.method");
  if (m == "cc") return ClusterMethod::connected_components;
  if (m == "mcl") return ClusterMethod::markov;
  throw Error(ErrorKind::BadConfig, "cluster.method must be cc or mcl");
}

inline MclParams mcl(const Settings& s) {
  MclParams p;
  p.expansion = static_cast<int>(s.integer("cluster.expansion"));
  p.inflation = s.num("cluster.inflation");
  p.tolerance = s.num("cluster.tolerance");
  p.max_iters = static_cast<int>(s.integer("cluster.max_iters"));
  if (p.expansion < 2 || !(p.inflation > 1.0) || !(p.tolerance > 0.0) || p.max_iters < 1) {
    throw Error(ErrorKind::BadConfig, "cluster: expansion >= 2, inflation > 1, tolerance > 0, max_iters >= 1");
  }
  return p;
}

inline RfConfig rf(const Settings& s) {
  RfConfig c;
  c.n_trees = static_cast<int>(s.integer("rf.n_trees"));
  c.max_depth = static_cast<int>(s.integer("rf.max_depth"));
  c.min_leaf = static_cast<int>(s.integer("rf.min_leaf"));
  c.seed = derive_seed(s.seed(), 0x7266);
  if (c.n_trees < 1 || c.max_depth < 0 || c.min_leaf < 1) throw Error(ErrorKind::BadConfig, "rf parameters out of range");
  return c;
}

inline ShapleyConfig shapley(const Settings& s) {
  ShapleyConfig c;
  const auto& m = s.str("shap.mode");
  if (m == "exact") {
    c.mode = ShapleyMode::exact;
  } else if (m == "sampled") {
    c.mode = ShapleyMode::sampled;
  } else {
    throw Error(ErrorKind::BadConfig, "shap.mode must be exact or sampled");
  }
  c.n_permutations = static_cast<int>(s.integer("shap.permutations"));
  c.max_background = static_cast<std::size_t>(std::max(0LL, s.integer("shap.max_background")));
  c.seed = derive_seed(s.seed(), 0x7368);
  if (c.n_permutations < 1) throw Error(ErrorKind::BadConfig, "shap.permutations must be >= 1");
  return c;
}

inline gnn::OptimizerKind optimizer(const std::string& key, const std::string& v) {
  if (v == "adam") return gnn::OptimizerKind::adam;
  if (v == "sgd") return gnn::OptimizerKind::sgd;
  throw Error(ErrorKind::BadConfig, key + " must be adam or sgd");
}

inline gnn::GnnConfig gnn(const Settings& s) {
  gnn::GnnConfig c;
  const auto arch = gnn::parse_arch(s.str("gnn.arch"));
  if (!arch) throw Error(ErrorKind::BadConfig, "gnn.arch must be gcn, sage, wsage, cheb or gat");
  c.arch = *arch;
  const auto head = gnn::parse_head(s.str("gnn.head"));
  if (!head) throw Error(ErrorKind::BadConfig, "gnn.head must be node_level or graph_mean_pool");
  c.head = *head;
  c.layer_dims = {kNodeFeatureCount};
  for (double h : s.list("gnn.hidden")) c.layer_dims.push_back(static_cast<int>(h));
  c.layer_dims.push_back(gnn::kEmbeddingDim);
  c.cheb_k = static_cast<int>(s.integer("gnn.cheb_k"));
  c.gat_heads = static_cast<int>(s.integer("gnn.gat_heads"));
  c.optimizer = optimizer("gnn.optimizer", s.str("gnn.optimizer"));
  c.learning_rate = s.num("gnn.learning_rate");
  c.max_epochs = static_cast<int>(s.integer("gnn.max_epochs"));
  c.patience = static_cast<int>(s.integer("gnn.patience"));
  c.kfold_k = static_cast<int>(s.integer("gnn.kfold"));
  c.score_lambda = s.num("gnn.score_lambda");
  c.seed = derive_seed(s.seed(), 0x676e);
  c.validate();
  return c;
}

inline explain::Objective objective(const Settings& s) {
  explain::Objective o{s.num("explain.lambda_size"), s.num("explain.lambda_ent")};
  if (!(o.lambda_size >= 0.0) || !(o.lambda_ent >= 0.0)) throw Error(ErrorKind::BadConfig, "explain lambdas must be >= 0");
  return o;
}

inline explain::GnnxConfig gnnx(const Settings& s) {
  explain::GnnxConfig c;
  c.epochs = static_cast<int>(s.integer("explain.gnnx_epochs"));
  c.optimizer = optimizer("explain.gnnx_optimizer", s.str("explain.gnnx_optimizer"));
  c.learning_rate = s.num("explain.gnnx_learning_rate");
  c.objective = objective(s);
  if (c.epochs < 0 || !(c.learning_rate >= 0.0)) throw Error(ErrorKind::BadConfig, "gnnx parameters out of range");
  return c;
}

inline explain::PgxConfig pgx(const Settings& s) {
  explain::PgxConfig c;
  c.epochs = static_cast<int>(s.integer("explain.pgx_epochs"));
  c.learning_rate = s.num("explain.pgx_learning_rate");
  c.hidden = static_cast<int>(s.integer("explain.pgx_hidden"));
  c.objective = objective(s);
  c.seed = derive_seed(s.seed(), 0x7067);
  if (c.epochs < 0 || !(c.learning_rate >= 0.0) || c.hidden < 1) throw Error(ErrorKind::BadConfig, "pgx parameters out of range");
  return c;
}

}  // namespace taugraph::config
