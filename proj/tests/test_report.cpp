#include <gtest/gtest.h>

#include "taugraph/report.hpp"

using namespace taugraph;

namespace {

FeatureTable table_of(const std::vector<std::vector<double>>& rows) {
  FeatureTable t;
  for (std::size_t j = 0; j < rows.front().size(); ++j) t.columns.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < rows.size(); ++i) t.rows.push_back({rows[i], Diagnosis::cAD, "g", RowKind::cluster, "r" + std::to_string(i)});
  return t;
}

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Correlation, MatchesHandComputedPearson) {
  // f1 = 2 f0 + 1, f2 = -f0, f3 constant.
  const auto t = table_of({{1, 3, -1, 5}, {2, 5, -2, 5}, {4, 9, -4, 5}});
  const auto c = report::correlation_matrix(t);
  EXPECT_NEAR(c(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(c(0, 2), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(c(0, 3)));
  EXPECT_EQ(c(3, 3), 1.0);
  const auto t2 = table_of({{1, 2}, {2, 1}, {3, 4}, {4, 3}});
  // x = 1..4, y = 2,1,4,3: centered cross products sum to 3, squares to 5 each
  EXPECT_NEAR(report::correlation_matrix(t2)(0, 1), 0.6, 1e-12);
  const auto csv = report::format_correlation(t.columns, c);
  EXPECT_NE(csv.find("f0,1.000000,1.000000,-1.000000,nan"), std::string::npos) << csv;
}

TEST(Pca, RecoversDominantAxisWithFixedSign) {
  // Points along (3, 4)/5 with a small orthogonal spread.
  Eigen::MatrixXd x(5, 2);
  x << -6, -8, -3, -4, 0, 0, 3, 4, 6.08, 7.94;
  const auto p = report::pca_2d(x);
  ASSERT_EQ(p.cols(), 2);
  // First component variance carries nearly everything.
  EXPECT_GT(p.col(0).squaredNorm(), 100.0 * p.col(1).squaredNorm());
  // Loading (0.6, 0.8) is the positive-largest convention, so the last point projects positive.
  EXPECT_GT(p(4, 0), 9.9);
  Eigen::MatrixXd neg = -x;
  const auto q = report::pca_2d(neg);
  EXPECT_NEAR(q(4, 0), -p(4, 0), 1e-9);
}

TEST(Pca, ProjectionPreservesTotalVariance) {
  Rng rng(5);
  Eigen::MatrixXd x(50, 2);
  for (Eigen::Index i = 0; i < 50; ++i) x.row(i) << rng.normal(), 3.0 * rng.normal() + x(i, 0);
  const auto p = report::pca_2d(x);
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  EXPECT_NEAR(p.squaredNorm(), c.squaredNorm(), 1e-8);
  EXPECT_NEAR(p.col(0).dot(p.col(1)), 0.0, 1e-8);
}

TEST(Svg, LayerChartHasOneBarPerPresentCell) {
  explain::LayerImportance t;
  for (int l = 1; l <= kLayerCount; ++l) {
    t.cells[0][static_cast<std::size_t>(l - 1)].node_mean = 0.1 * l;
    if (l != 3) t.cells[1][static_cast<std::size_t>(l - 1)].node_mean = 0.05 * l;
  }
  const auto svg = report::layer_importance_svg(t, "x < y");
  // 11 bars, 2 legend swatches, 1 background
  EXPECT_EQ(count(svg, "<rect"), 14u);
  EXPECT_NE(svg.find("x &lt; y"), std::string::npos);
  EXPECT_EQ(svg, report::layer_importance_svg(t, "x < y"));
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(Svg, ShapSummaryDrawsEveryAttribution) {
  std::vector<ShapleyAttribution> a(3);
  std::vector<std::vector<double>> f = {{1, 2}, {2, 3}, {3, 1}};
  for (std::size_t i = 0; i < 3; ++i) a[i].phi = {0.1 * static_cast<double>(i), -0.2};
  const auto svg = report::shap_summary_svg({"alpha", "beta"}, f, a);
  EXPECT_EQ(count(svg, "<circle"), 6u);
  // beta has the larger mean |phi|, so it is listed first.
  EXPECT_LT(svg.find(">beta<"), svg.find(">alpha<"));
}

TEST(Svg, ScatterColorsByGroup) {
  Eigen::MatrixXd xy(3, 2);
  xy << 0, 0, 1, 1, 2, 0;
  const auto svg = report::scatter_svg(xy, {0, 1, 1}, "t");
  EXPECT_EQ(count(svg, "<circle"), 3u);
  EXPECT_EQ(count(svg, report::palette()[1]), 2u);
}

TEST(Fixed, NoNegativeZero) {
  EXPECT_EQ(report::fixed(-0.0, 2), "0.00");
  EXPECT_EQ(report::fixed(-1e-9, 3), "0.000");
  EXPECT_EQ(report::fixed(-0.25, 1), "-0.2");
}
