#pragma once

// Tables and SVG figures for the report command. All numbers are printed with
// fixed precision so that reruns produce identical bytes.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "taugraph/explain.hpp"
#include "taugraph/tabular.hpp"
#include "taugraph/text.hpp"

namespace taugraph::report {

/// Fixed decimals; values that round to zero print without a sign.
inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

// ---------------------------------------------------------------------------
// Statistics

/// Pearson correlation between every pair of columns; constant columns give
/// NaN against everything but themselves.
inline Eigen::MatrixXd correlation_matrix(const FeatureTable& t) {
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto m = static_cast<Eigen::Index>(t.columns.size());
  Eigen::MatrixXd x(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) x(i, j) = t.rows[static_cast<std::size_t>(i)].features[static_cast<std::size_t>(j)];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd c = x.transpose() * x;
  const Eigen::VectorXd sd = c.diagonal().cwiseSqrt();
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      if (a == b) {
        c(a, b) = 1.0;
      } else {
        c(a, b) = (sd(a) > 0.0 && sd(b) > 0.0) ? c(a, b) / (sd(a) * sd(b)) : std::nan("");
      }
    }
  }
  return c;
}

inline std::string format_correlation(const std::vector<std::string>& cols, const Eigen::MatrixXd& c) {
  std::vector<std::string> head{"feature"};
  head.insert(head.end(), cols.begin(), cols.end());
  text::CsvWriter w(head);
  for (Eigen::Index a = 0; a < c.rows(); ++a) {
    std::vector<std::string> row{cols[static_cast<std::size_t>(a)]};
    for (Eigen::Index b = 0; b < c.cols(); ++b) row.push_back(std::isnan(c(a, b)) ? "nan" : fixed(c(a, b), 6));
    w.row(row);
  }
  return w.str();
}

/// Rows projected on the top two principal components. Each axis is signed
/// so that its largest-magnitude loading is positive.
inline Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) return Eigen::MatrixXd(0, 2);
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd axes(x.cols(), 2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Index col = x.cols() - 1 - std::min<Eigen::Index>(k, x.cols() - 1);
    Eigen::VectorXd v = es.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    axes.col(k) = v;
  }
  return centered * axes;
}

// ---------------------------------------------------------------------------
// SVG

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  Svg& rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + fixed(x, 2) + "\" y=\"" + fixed(y, 2) + "\" width=\"" + fixed(w, 2) + "\" height=\"" +
             fixed(h, 2) + "\" fill=\"" + fill + "\"/>\n";
    return *this;
  }
  Svg& circle(double x, double y, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + fixed(x, 2) + "\" cy=\"" + fixed(y, 2) + "\" r=\"" + fixed(r, 2) + "\" fill=\"" + fill +
             "\" fill-opacity=\"0.75\"/>\n";
    return *this;
  }
  Svg& line(double x1, double y1, double x2, double y2, const std::string& stroke = "#444") {
    body_ += "<line x1=\"" + fixed(x1, 2) + "\" y1=\"" + fixed(y1, 2) + "\" x2=\"" + fixed(x2, 2) + "\" y2=\"" +
             fixed(y2, 2) + "\" stroke=\"" + stroke + "\"/>\n";
    return *this;
  }
  Svg& label(double x, double y, const std::string& s, const std::string& anchor = "middle", int size = 12) {
    body_ += "<text x=\"" + fixed(x, 2) + "\" y=\"" + fixed(y, 2) + "\" font-family=\"sans-serif\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
    return *this;
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(w_, 0) + "\" height=\"" + fixed(h_, 0) +
           "\" viewBox=\"0 0 " + fixed(w_, 0) + " " + fixed(h_, 0) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
      }
    }
    return out;
  }

  double w_, h_;
  std::string body_;
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return p;
}

/// Grouped bars: mean node importance per layer, one bar per class. Missing
/// cells are left out.
inline std::string layer_importance_svg(const explain::LayerImportance& t, const std::string& title) {
  const double W = 560, H = 320, left = 60, bottom = 270, top = 40, plot_h = bottom - top;
  double vmax = 0.0;
  for (const auto& cls : t.cells) {
    for (const auto& c : cls) vmax = std::max(vmax, c.node_mean.value_or(0.0));
  }
  if (vmax <= 0.0) vmax = 1.0;
  Svg s(W, H);
  s.label(W / 2, 22, title, "middle", 14);
  s.line(left, bottom, W - 20, bottom).line(left, top, left, bottom);
  const double group_w = (W - 20 - left) / kLayerCount;
  for (int l = 1; l <= kLayerCount; ++l) {
    const double gx = left + (l - 1) * group_w;
    for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
      const auto& v = t.at(d, l).node_mean;
      if (!v) continue;
      const double h = *v / vmax * plot_h;
      const double x = gx + 8 + class_index(d) * (group_w - 16) / 2;
      s.rect(x, bottom - h, (group_w - 16) / 2 - 2, h, palette()[static_cast<std::size_t>(class_index(d))]);
    }
    s.label(gx + group_w / 2, bottom + 16, "L" + std::to_string(l));
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = bottom - k * plot_h / 4;
    s.line(left - 4, y, left, y).label(left - 6, y + 4, fixed(vmax * k / 4, 3), "end", 10);
  }
  s.rect(W - 150, top, 10, 10, palette()[0]).label(W - 135, top + 9, "cAD", "start", 11);
  s.rect(W - 90, top, 10, 10, palette()[1]).label(W - 75, top + 9, "rpAD", "start", 11);
  s.label(W / 2, H - 8, "cortical layer; mean node importance", "middle", 11);
  return s.str();
}

/// One row per feature (ordered by mean |phi|, largest on top); dots at each
/// attribution, colored from blue (low feature value) to red (high).
inline std::string shap_summary_svg(const std::vector<std::string>& columns,
                                    const std::vector<std::vector<double>>& features,
                                    const std::vector<ShapleyAttribution>& attr) {
  const std::size_t m = columns.size();
  std::vector<double> mean_abs(m, 0.0), lo(m, 1e300), hi(m, -1e300);
  double vmax = 1e-12;
  for (std::size_t r = 0; r < attr.size(); ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      mean_abs[j] += std::abs(attr[r].phi[j]);
      vmax = std::max(vmax, std::abs(attr[r].phi[j]));
      lo[j] = std::min(lo[j], features[r][j]);
      hi[j] = std::max(hi[j], features[r][j]);
    }
  }
  std::vector<std::size_t> order(m);
  for (std::size_t j = 0; j < m; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  const double row_h = 28, left = 180, right = 30, W = 640, top = 40;
  const double H = top + row_h * static_cast<double>(m) + 50;
  const double mid = left + (W - left - right) / 2, half = (W - left - right) / 2;
  Svg s(W, H);
  s.label(W / 2, 22, "Shapley values (rpAD probability)", "middle", 14);
  s.line(mid, top - 6, mid, top + row_h * static_cast<double>(m), "#999");
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = order[k];
    const double y = top + row_h * (static_cast<double>(k) + 0.5);
    s.label(left - 8, y + 4, columns[j], "end", 11);
    for (std::size_t r = 0; r < attr.size(); ++r) {
      const double t = hi[j] > lo[j] ? (features[r][j] - lo[j]) / (hi[j] - lo[j]) : 0.5;
      char col[16];
      std::snprintf(col, sizeof col, "#%02x40%02x", static_cast<int>(40 + 200 * t), static_cast<int>(240 - 200 * t));
      // Deterministic vertical jitter from the row index.
      const double jitter = (static_cast<double>((r * 2654435761u) % 1000) / 1000.0 - 0.5) * row_h * 0.6;
      s.circle(mid + attr[r].phi[j] / vmax * half, y + jitter, 2.5, col);
    }
  }
  const double axis_y = top + row_h * static_cast<double>(m) + 14;
  s.label(left, axis_y, fixed(-vmax, 3), "start", 10).label(mid, axis_y, "0", "middle", 10);
  s.label(W - right, axis_y, fixed(vmax, 3), "end", 10);
  s.label(W / 2, H - 8, "contribution to rpAD probability; color = feature value", "middle", 11);
  return s.str();
}

/// Scatter of 2-d points colored by group index.
inline std::string scatter_svg(const Eigen::MatrixXd& xy, const std::vector<int>& group, const std::string& title) {
  const double W = 520, H = 520, pad = 50;
  Svg s(W, H);
  s.label(W / 2, 22, title, "middle", 14);
  if (xy.rows() == 0) return s.str();
  const double x0 = xy.col(0).minCoeff(), x1 = xy.col(0).maxCoeff();
  const double y0 = xy.col(1).minCoeff(), y1 = xy.col(1).maxCoeff();
  const double sx = x1 > x0 ? (W - 2 * pad) / (x1 - x0) : 1.0, sy = y1 > y0 ? (H - 2 * pad) / (y1 - y0) : 1.0;
  s.line(pad, H - pad, W - pad, H - pad).line(pad, pad, pad, H - pad);
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    const auto& c = palette()[static_cast<std::size_t>(group[static_cast<std::size_t>(i)]) % palette().size()];
    s.circle(pad + (xy(i, 0) - x0) * sx, H - pad - (xy(i, 1) - y0) * sy, 2.5, c);
  }
  s.label(W / 2, H - 14, "PC1", "middle", 11).label(16, H / 2, "PC2", "middle", 11);
  return s.str();
}

/// Per (class, layer) node and edge means as CSV; absent cells are empty.
inline std::string format_layer_importance(const explain::LayerImportance& t, explain::Method m) {
  text::CsvWriter w({"method", "diagnosis", "layer", "node_mean", "edge_mean", "n_nodes", "n_edges"});
  for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
    for (int l = 1; l <= kLayerCount; ++l) {
      const auto& c = t.at(d, l);
      w.row({std::string(explain::to_string(m)), std::string(to_string(d)), std::to_string(l),
             c.node_mean ? text::exact(*c.node_mean) : "", c.edge_mean ? text::exact(*c.edge_mean) : "",
             std::to_string(c.nodes), std::to_string(c.edges)});
    }
  }
  return w.str();
}

}  // namespace taugraph::report
