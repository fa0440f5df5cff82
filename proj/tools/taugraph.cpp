// taugraph: command-line pipeline over a work directory.
//
//   taugraph gen-data    --out W            -> W/cohort/
//   taugraph build-graph --out W [--data D] -> W/graphs/
//   taugraph metrics | cluster | train-rf | shap | train-gnn | embed | explain | report
//
// Every command writes W/manifests/<command>.json with the effective config,
// the fingerprints of what it read and wrote, and the seed.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "taugraph/config.hpp"
#include "taugraph/graph_io.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/io.hpp"
#include "taugraph/pipeline.hpp"
#include "taugraph/report.hpp"
#include "taugraph/synth.hpp"

#ifndef TAUGRAPH_VERSION
#define TAUGRAPH_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace taugraph;
using json = nlohmann::ordered_json;

namespace {

class Run {
 public:
  Run(std::string command, fs::path out, config::Settings settings)
      : command_(std::move(command)), out_(std::move(out)), settings_(std::move(settings)) {}

  const config::Settings& settings() const { return settings_; }
  const fs::path& out() const { return out_; }

  std::string read(const fs::path& p) {
    std::string bytes = text::read_file(p);
    inputs_[label(p)] = text::hex64(text::fnv1a(bytes));
    return bytes;
  }

  void write(const fs::path& rel, const std::string& bytes) {
    text::write_file(out_ / rel, bytes);
    outputs_[rel.generic_string()] = text::hex64(text::fnv1a(bytes));
  }

  /// Fingerprints a file some library call already wrote under the work dir.
  void record(const fs::path& rel) { outputs_[rel.generic_string()] = text::hex64(text::fnv1a(text::read_file(out_ / rel))); }

  void finish() {
    json m;
    m["command"] = command_;
    m["version"] = TAUGRAPH_VERSION;
    m["seed"] = settings_.seed();
    json cfg = json::object();
    for (const auto& [k, v] : settings_.values()) cfg[k] = v;
    m["config"] = cfg;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    text::write_file(out_ / "manifests" / (command_ + ".json"), m.dump(2) + "\n");
  }

 private:
  std::string label(const fs::path& p) const {
    const auto rel = p.lexically_proximate(out_);
    const auto s = rel.generic_string();
    return s.rfind("..", 0) == 0 ? p.generic_string() : s;
  }

  std::string command_;
  fs::path out_;
  config::Settings settings_;
  std::map<std::string, std::string> inputs_, outputs_;
};

// ---------------------------------------------------------------------------
// Work-directory readers

Cohort load_cohort(Run& run, const fs::path& dir) {
  run.read(dir / "cohort.txt");
  Cohort c = io::read_cohort(dir);
  for (const auto& s : c.slides) {
    run.read(dir / (s.slide_id + ".csv"));
    run.read(dir / (s.slide_id + ".meta"));
  }
  return c;
}

std::vector<std::string> graph_index(Run& run) {
  std::vector<std::string> ids;
  for (const auto& line : text::split(run.read(run.out() / "graphs" / "index.txt"), '\n')) {
    const auto t = text::trim(line);
    if (!t.empty()) ids.emplace_back(t);
  }
  if (ids.empty()) throw Error(ErrorKind::EmptyGraph, "graphs/index.txt lists no graphs");
  return ids;
}

std::vector<PathologyGraph> load_graphs(Run& run) {
  std::vector<PathologyGraph> out;
  for (const auto& id : graph_index(run)) {
    out.push_back(io::deserialize_graph(run.read(run.out() / "graphs" / (id + ".graph"))));
  }
  return out;
}

gnn::GnnModel load_gnn(Run& run) { return gnn::load_checkpoint(run.read(run.out() / "models" / "gnn.ckpt")); }

FeatureTable load_table(Run& run, const std::string& name) {
  return parse_table(run.read(run.out() / "tables" / name));
}

std::vector<std::size_t> spread_rows(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || n <= cap) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < cap; ++k) idx.push_back(k * n / cap);
  return idx;
}

// ---------------------------------------------------------------------------
// Commands

void gen_data(Run& run) {
  const auto cfg = config::synth(run.settings());
  const auto cohort = generate_cohort(cfg);
  io::write_cohort(cohort, run.out() / "cohort");
  for (const auto& s : cohort.slides) {
    run.record(fs::path("cohort") / (s.slide_id + ".csv"));
    run.record(fs::path("cohort") / (s.slide_id + ".meta"));
  }
  run.record("cohort/cohort.txt");
}

void build_graph(Run& run, const fs::path& data) {
  const auto cohort = load_cohort(run, data);
  const auto type = config::object_type(run.settings());
  const auto opt = config::build_options(run.settings());
  std::string index;
  for (const auto& s : cohort.slides) {
    const auto g = build_patient_graph(s, type, opt);
    run.write(fs::path("graphs") / (s.slide_id + ".graph"), io::serialize_graph(g));
    index += s.slide_id + "\n";
  }
  run.write("graphs/index.txt", index);
}

void metrics(Run& run, const fs::path& data) {
  const auto cohort = load_cohort(run, data);
  std::map<std::string, double> area;
  for (const auto& s : cohort.slides) area[s.slide_id] = roi_area(s.roi_polygon) / 1e6;
  std::vector<std::string> head{"slide_id", "diagnosis"};
  for (const auto& n : GraphMetrics::names()) head.push_back(n);
  text::CsvWriter csv(head);
  for (const auto& g : load_graphs(run)) {
    const auto it = area.find(g.slide_id);
    if (it == area.end()) throw Error(ErrorKind::MissingColumn, "no ROI for slide " + g.slide_id);
    std::vector<std::string> row{g.slide_id, std::string(to_string(g.diagnosis))};
    for (double v : graph_summary(g, it->second).values()) row.push_back(text::exact(v));
    csv.row(row);
    run.write(fs::path("metrics") / "nodes" / (g.slide_id + ".csv"), format_node_features(g, node_features(g)));
  }
  run.write("metrics/graph_metrics.csv", csv.str());
}

void cluster(Run& run) {
  const auto method = config::cluster_method(run.settings());
  const auto mcl = config::mcl(run.settings());
  const auto graphs = load_graphs(run);
  for (const auto& g : graphs) {
    run.write(fs::path("clusters") / (g.slide_id + ".csv"), format_assignment(g, cluster_graph(g, method, mcl)));
  }
  run.write("tables/cluster_features.csv", format_table(pipeline::raw_cluster_table(graphs, method, mcl)));
}

void train_rf(Run& run) {
  const auto t = load_table(run, "cluster_features.csv");
  const auto rf = config::rf(run.settings());
  const int k = static_cast<int>(run.settings().integer("rf.kfold"));
  const auto cv = cross_validate(t, grouped_kfold(t, k, derive_seed(run.settings().seed(), 0x6376)), rf);

  text::CsvWriter rows({"row_id", "group_id", "label", "fold", "p_rpad"});
  for (const auto& p : cv.predictions) {
    const auto& r = t.rows[p.row];
    rows.row({r.row_id, r.group_id, std::string(to_string(r.label)), std::to_string(p.fold), text::exact(p.proba.rpad)});
  }
  run.write("tables/rf_cv.csv", rows.str());

  text::CsvWriter slides({"slide_id", "mean_p_rpad", "call"});
  for (const auto& [g, p] : cv.group_rpad) slides.row({g, text::exact(p), p > 0.5 ? "rpAD" : "cAD"});
  run.write("tables/rf_slides.csv", slides.str());

  text::CsvWriter imp({"feature", "importance"});
  const auto mi = cv.mean_importance();
  for (std::size_t j = 0; j < t.columns.size(); ++j) imp.row({t.columns[j], text::exact(mi[j])});
  run.write("tables/rf_importance.csv", imp.str());

  text::CsvWriter summary({"row_accuracy", "slide_accuracy", "folds"});
  summary.row({text::exact(cv.row_accuracy), text::exact(cv.group_accuracy), std::to_string(k)});
  run.write("tables/rf_summary.csv", summary.str());

  run.write("models/rf.txt", dump_model(train_random_forest(t, rf)));
}

void shap(Run& run) {
  const auto t = load_table(run, "cluster_features.csv");
  const auto model = load_model(run.read(run.out() / "models" / "rf.txt"));
  if (model.columns != t.columns) throw Error(ErrorKind::SchemaMismatch, "model columns differ from the table");
  const auto sc = config::shapley(run.settings());
  const auto background = shapley_background(t, sc.max_background, derive_seed(sc.seed, 1));
  std::vector<ShapleyAttribution> attr;
  std::vector<std::vector<double>> feats;
  const auto cap = static_cast<std::size_t>(std::max(0LL, run.settings().integer("shap.max_rows")));
  for (std::size_t i : spread_rows(t.rows.size(), cap)) {
    auto c = sc;
    c.seed = derive_seed(sc.seed, 100 + i);
    attr.push_back(shapley_attribution(model, background, t.rows[i].features, c));
    attr.back().row_id = t.rows[i].row_id;
    feats.push_back(t.rows[i].features);
  }
  run.write("tables/shap.csv", format_attributions(t.columns, attr));
  run.write("figures/shap_summary.svg", report::shap_summary_svg(t.columns, feats, attr));
}

void train_gnn(Run& run) {
  const auto cfg = config::gnn(run.settings());
  const auto samples = pipeline::make_samples(load_graphs(run));
  const auto tr = gnn::train(samples, cfg);
  text::CsvWriter folds({"fold", "val_loss", "val_accuracy", "score", "best_epoch", "train_size", "selected"});
  for (const auto& f : tr.folds) {
    folds.row({std::to_string(f.fold), text::exact(f.val_loss), text::exact(f.val_accuracy), text::exact(f.score),
               std::to_string(f.best_epoch), std::to_string(f.train_size), f.fold == tr.best_fold ? "1" : "0"});
  }
  run.write("tables/gnn_folds.csv", folds.str());
  run.write("tables/gnn_history.csv", gnn::format_history(tr.model.history));
  run.write("models/gnn.ckpt", gnn::save_checkpoint(tr.model));
}

void embed(Run& run) {
  const auto graphs = load_graphs(run);
  const auto model = load_gnn(run);
  const auto samples = pipeline::make_samples(graphs);
  std::vector<gnn::Mat> emb;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    emb.push_back(gnn::embed(model, samples[i]));
    run.write(fs::path("embeddings") / (graphs[i].slide_id + ".csv"), gnn::format_embeddings(graphs[i], emb.back()));
  }
  const int k = static_cast<int>(run.settings().integer("embed.clusters"));
  if (k < 1) throw Error(ErrorKind::BadK, "embed.clusters must be >= 1");
  run.write("tables/embedding_features.csv",
            format_table(pipeline::embedding_table(graphs, emb, k, derive_seed(run.settings().seed(), 0x6b6d))));
}

void explain_cmd(Run& run) {
  const auto graphs = load_graphs(run);
  const auto model = load_gnn(run);
  const auto samples = pipeline::make_samples(graphs);
  const auto ex = pipeline::explain_cohort(model, graphs, samples, config::gnnx(run.settings()), config::pgx(run.settings()));
  text::CsvWriter agree({"slide_id", "diagnosis", "spearman", "degenerate", "gnnx_initial_loss", "gnnx_final_loss",
                         "pgx_initial_loss", "pgx_final_loss"});
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& id = graphs[i].slide_id;
    run.write(fs::path("explanations") / "gnnx" / (id + ".csv"), explain::format_explanation(graphs[i], ex.gnnx[i]));
    run.write(fs::path("explanations") / "pgx" / (id + ".csv"), explain::format_explanation(graphs[i], ex.pgx[i]));
    agree.row({id, std::string(to_string(graphs[i].diagnosis)), text::exact(ex.agreement[i].rho),
               ex.agreement[i].degenerate ? "1" : "0", text::exact(ex.gnnx[i].initial_loss),
               text::exact(ex.gnnx[i].final_loss), text::exact(ex.pgx[i].initial_loss), text::exact(ex.pgx[i].final_loss)});
  }
  run.write("tables/explainer_agreement.csv", agree.str());
  run.write("tables/layer_importance_gnnx.csv",
            report::format_layer_importance(pipeline::layer_table(graphs, ex.gnnx), explain::Method::gnnx));
  run.write("tables/layer_importance_pgx.csv",
            report::format_layer_importance(pipeline::layer_table(graphs, ex.pgx), explain::Method::pgx));
}

explain::LayerImportance parse_layer_importance(const std::string& csv) {
  explain::LayerImportance t;
  bool header = true;
  for (const auto& line : text::split(csv, '\n')) {
    if (text::trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto c = text::split(text::trim(line), ',');
    const auto d = c.size() == 7 ? parse_diagnosis(c[1]) : std::nullopt;
    const auto l = c.size() == 7 ? text::parse_int<int>(c[2]) : std::nullopt;
    if (!d || !l || *l < 1 || *l > kLayerCount) throw Error(ErrorKind::CorruptPayload, "layer importance line: " + line);
    auto& cell = t.cells[static_cast<std::size_t>(class_index(*d))][static_cast<std::size_t>(*l - 1)];
    cell.node_mean = text::parse_double(c[3]);
    cell.edge_mean = text::parse_double(c[4]);
    cell.nodes = text::parse_int<std::size_t>(c[5]).value_or(0);
    cell.edges = text::parse_int<std::size_t>(c[6]).value_or(0);
  }
  return t;
}

void report_cmd(Run& run) {
  const auto t = load_table(run, "cluster_features.csv");
  run.write("tables/correlation.csv", report::format_correlation(t.columns, report::correlation_matrix(t)));
  const auto tables = run.out() / "tables";
  if (fs::exists(tables / "embedding_features.csv")) {
    const auto e = load_table(run, "embedding_features.csv");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(e.rows.size()), gnn::kEmbeddingDim);
    std::vector<int> cls;
    for (std::size_t i = 0; i < e.rows.size(); ++i) {
      for (int j = 0; j < gnn::kEmbeddingDim; ++j) x(static_cast<Eigen::Index>(i), j) = e.rows[i].features[static_cast<std::size_t>(j)];
      cls.push_back(class_index(e.rows[i].label));
    }
    const auto xy = report::pca_2d(x);
    text::CsvWriter pc({"row_id", "group_id", "label", "pc1", "pc2"});
    for (std::size_t i = 0; i < e.rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      pc.row({e.rows[i].row_id, e.rows[i].group_id, std::string(to_string(e.rows[i].label)), report::fixed(xy(r, 0), 6),
              report::fixed(xy(r, 1), 6)});
    }
    run.write("tables/embedding_pca.csv", pc.str());
    run.write("figures/embedding_pca.svg",
              report::scatter_svg(xy, cls, "Embedding clusters, PCA (blue cAD, red rpAD)"));
  }
  for (const char* m : {"gnnx", "pgx"}) {
    const auto p = tables / (std::string("layer_importance_") + m + ".csv");
    if (!fs::exists(p)) continue;
    const auto li = parse_layer_importance(run.read(p));
    run.write(fs::path("figures") / (std::string("layer_importance_") + m + ".svg"),
              report::layer_importance_svg(li, std::string("Node importance by layer (") + m + ")"));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial graph analysis of annotated tau pathology"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TAUGRAPH_VERSION);

  std::string config_path, out_dir, data_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  const std::vector<std::string> names = {"gen-data", "build-graph", "metrics", "cluster", "train-rf",
                                          "shap",     "train-gnn",   "embed",   "explain", "report"};
  const std::map<std::string, std::string> help = {
      {"gen-data", "generate a synthetic cohort into OUT/cohort"},
      {"build-graph", "build patient graphs from a cohort directory"},
      {"metrics", "graph-level and node-level metrics"},
      {"cluster", "cluster every graph and tabulate cluster features"},
      {"train-rf", "grouped cross-validation and a final random forest"},
      {"shap", "Shapley attributions of the forest"},
      {"train-gnn", "train the graph network with grouped k-fold selection"},
      {"embed", "node embeddings and embedding-cluster features"},
      {"explain", "edge and node importance with both explainers"},
      {"report", "correlation table and figures"}};
  for (const auto& n : names) {
    auto* sub = app.add_subcommand(n, help.at(n));
    sub->add_option("--config", config_path, "INI file, sections per module")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "work directory")->required();
    sub->add_option("--seed", seed, "overrides run.seed");
    sub->add_option("--set", overrides, "section.key=value override (repeatable)");
    if (n == "build-graph" || n == "metrics") sub->add_option("--data", data_dir, "cohort directory (default OUT/cohort)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code_for(ErrorKind::Usage);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    config::Settings s;
    if (!config_path.empty()) s.merge_ini(text::read_file(config_path));
    for (const auto& kv : overrides) s.merge_assignment(kv);
    if (seed) s.set("run.seed", std::to_string(*seed));
    s.seed();  // validates

    Run run(cmd, out_dir, s);
    if (!config_path.empty()) run.read(config_path);
    const fs::path data = data_dir.empty() ? fs::path(out_dir) / "cohort" : fs::path(data_dir);
    if (cmd == "gen-data") gen_data(run);
    else if (cmd == "build-graph") build_graph(run, data);
    else if (cmd == "metrics") metrics(run, data);
    else if (cmd == "cluster") cluster(run);
    else if (cmd == "train-rf") train_rf(run);
    else if (cmd == "shap") shap(run);
    else if (cmd == "train-gnn") train_gnn(run);
    else if (cmd == "embed") embed(run);
    else if (cmd == "explain") explain_cmd(run);
    else if (cmd == "report") report_cmd(run);
    run.finish();
  } catch (const Error& e) {
    std::cerr << "taugraph " << cmd << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "taugraph " << cmd << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
