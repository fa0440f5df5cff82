#include <gtest/gtest.h>

#include <set>

#include "taugraph/io.hpp"
#include "taugraph/spatial_graph.hpp"
#include "taugraph/synth.hpp"

using namespace taugraph;

namespace {

std::array<double, kLayerCount> mean_layer_counts(const Cohort& c, Diagnosis d) {
  std::array<double, kLayerCount> sum{};
  double slides = 0.0;
  for (const auto& s : c.slides) {
    if (s.diagnosis != d) continue;
    slides += 1.0;
    for (const auto& r : s.records) sum[static_cast<std::size_t>(layer_number(r.layer) - 1)] += 1.0;
  }
  for (double& v : sum) v /= slides;
  return sum;
}

}  // namespace

TEST(Synth, LayerCountsMatchExpectationOverTwentySlides) {
  SynthConfig cfg;
  const auto cohort = generate_cohort(cfg);
  ASSERT_EQ(cohort.slides.size(), 40u);
  for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
    const auto got = mean_layer_counts(cohort, d);
    const auto want = expected_layer_counts(cfg, d);
    for (std::size_t k = 0; k < kLayerCount; ++k) {
      EXPECT_NEAR(got[k], want[k], 0.2 * want[k]) << to_string(d) << " layer " << k + 1;
    }
  }
}

TEST(Synth, ExpectedCountsMatchClosedFormWithoutBorders) {
  // Wide ROI and tiny sigma: nearly nothing spills, so counts approach
  // rate * multiplier * band area * offspring mean.
  SynthConfig cfg;
  cfg.rpad_sigma_um = 1e-3;
  const auto got = expected_layer_counts(cfg, Diagnosis::rpAD);
  for (std::size_t k = 0; k < kLayerCount; ++k) {
    EXPECT_NEAR(got[k], 2.0 * cfg.rpad_multipliers[k] * 16.0 / 6.0 * 10.0, 1e-3);
  }
}

TEST(Synth, ExpectedCountsMatchMonteCarlo) {
  SynthConfig cfg;
  cfg.roi_width_um = 1000.0;
  cfg.roi_height_um = 1200.0;
  const auto want = expected_layer_counts(cfg, Diagnosis::cAD);
  // Independent estimate: parents and offspring drawn directly, no Poisson.
  Rng rng(99);
  std::array<double, kLayerCount> got{};
  const double bh = 200.0;
  const int trials = 200000;
  double total_weight = 0.0;
  for (std::size_t k = 0; k < kLayerCount; ++k) total_weight += cfg.cad_multipliers[k];
  for (int t = 0; t < trials; ++t) {
    double pick = rng.uniform() * total_weight;
    std::size_t k = 0;
    while (pick > cfg.cad_multipliers[k]) pick -= cfg.cad_multipliers[k++];
    const double x = rng.uniform(0, 1000) + 120.0 * rng.normal();
    const double y = rng.uniform(k * bh, (k + 1) * bh) + 120.0 * rng.normal();
    if (x < 0 || x > 1000 || y < 0 || y > 1200) continue;
    got[static_cast<std::size_t>(std::min(5.0, std::floor(y / bh)))] += 1.0;
  }
  const double per_slide = 2.0 * total_weight * 0.2 * 10.0;  // offspring per slide before losses
  for (std::size_t k = 0; k < kLayerCount; ++k) {
    EXPECT_NEAR(got[k] / trials * per_slide, want[k], 0.01 * per_slide) << k;
  }
}

TEST(Synth, EnrichedLayerRatioNearConfigured) {
  SynthConfig cfg;
  const auto c = generate_cohort(cfg);
  const auto rp = mean_layer_counts(c, Diagnosis::rpAD);
  const double ratio = (rp[2] + rp[3]) / (rp[0] + rp[1] + rp[4] + rp[5]);
  EXPECT_NEAR(ratio, 6.0 / 4.0, 0.2 * 1.5);
}

TEST(Synth, PointsInsideRoiAndLayerMatchesBand) {
  SynthConfig cfg;
  cfg.n_slides_per_class = 3;
  for (const auto& s : generate_cohort(cfg).slides) {
    EXPECT_GE(s.records.size(), 300u);
    EXPECT_LE(s.records.size(), 800u);
    EXPECT_TRUE(io::validate_dataset(s).empty());
    for (const auto& r : s.records) {
      EXPECT_GE(r.x_um, 0.0);
      EXPECT_LE(r.x_um, cfg.roi_width_um);
      EXPECT_GE(r.y_um, 0.0);
      EXPECT_LE(r.y_um, cfg.roi_height_um);
      const int band = std::min(6, static_cast<int>(r.y_um / (cfg.roi_height_um / 6.0)) + 1);
      EXPECT_EQ(layer_number(r.layer), band);
    }
  }
}

TEST(Synth, SameSeedSameBytes) {
  SynthConfig cfg;
  cfg.n_slides_per_class = 2;
  auto dump = [](const SynthConfig& c) {
    std::string out;
    for (const auto& s : generate_cohort(c).slides) out += io::format_metadata(s) + io::format_annotations(s);
    return out;
  };
  EXPECT_EQ(dump(cfg), dump(cfg));
  auto other = cfg;
  other.seed = 43;
  EXPECT_NE(dump(cfg), dump(other));
}

TEST(Synth, RpadClustersTighterThanCad) {
  SynthConfig cfg;
  cfg.n_slides_per_class = 4;
  const auto c = generate_cohort(cfg);
  double mean_len[2] = {0, 0};
  for (const auto& s : c.slides) {
    const auto g = build_patient_graph(s, ObjectType::plaque);
    double sum = 0.0;
    for (const auto& e : g.edges) sum += e.length_um;
    mean_len[class_index(s.diagnosis)] += sum / static_cast<double>(g.edges.size());
  }
  EXPECT_LT(mean_len[1], mean_len[0]);
}

TEST(Synth, ZeroIntensityGivesEmptySlidesAndTooFewObjects) {
  SynthConfig cfg;
  cfg.n_slides_per_class = 1;
  cfg.parent_rate_per_mm2 = 0.0;
  const auto c = generate_cohort(cfg);
  for (const auto& s : c.slides) {
    EXPECT_TRUE(s.records.empty());
    try {
      build_patient_graph(s, ObjectType::plaque);
      FAIL() << "expected TooFewObjects";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::TooFewObjects);
    }
  }
}

TEST(Synth, InvalidConfigIsBadConfig) {
  auto expect_bad = [](SynthConfig cfg) {
    try {
      generate_cohort(cfg);
      FAIL() << "expected BadConfig";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BadConfig);
    }
  };
  SynthConfig a;
  a.rpad_sigma_um = 0.0;
  expect_bad(a);
  SynthConfig b;
  b.cad_multipliers[2] = -1.0;
  expect_bad(b);
  SynthConfig c;
  c.plaque_fraction = 1.5;
  expect_bad(c);
  SynthConfig d;
  d.roi_width_um = 0.0;
  expect_bad(d);
}

TEST(Motif, CloseGroupDetector) {
  std::vector<Point2> p{{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 5}, {500, 500}};
  EXPECT_TRUE(has_close_group(p, 5, 15.0));
  EXPECT_FALSE(has_close_group(p, 5, 14.0));  // the square's diagonal is 14.14
  EXPECT_TRUE(has_close_group(p, 6, 708.0));
  EXPECT_FALSE(has_close_group(p, 6, 700.0));  // (500, 500) is 707.1 from the origin
}

TEST(Motif, PositivesCarryOneTightGroupNegativesNone) {
  MotifConfig cfg;
  cfg.n_graphs_per_class = 10;
  const auto c = planted_motif_task(cfg);
  ASSERT_EQ(c.slides.size(), 20u);
  for (const auto& s : c.slides) {
    std::vector<Point2> motif, all;
    for (const auto& r : s.records) {
      all.push_back(r.position());
      if (is_motif_record(r.id)) motif.push_back(r.position());
    }
    if (s.diagnosis == Diagnosis::rpAD) {
      ASSERT_EQ(motif.size(), 5u);
      for (std::size_t i = 0; i < motif.size(); ++i) {
        for (std::size_t j = i + 1; j < motif.size(); ++j) {
          EXPECT_LE(std::hypot(motif[i].x - motif[j].x, motif[i].y - motif[j].y), cfg.motif_diameter());
        }
      }
    } else {
      EXPECT_TRUE(motif.empty());
      EXPECT_FALSE(has_close_group(all, cfg.motif_size, cfg.motif_diameter()));
    }
  }
}

TEST(Motif, IdsAreUnique) {
  MotifConfig cfg;
  cfg.n_graphs_per_class = 3;
  for (const auto& s : planted_motif_task(cfg).slides) {
    std::set<std::string> ids;
    for (const auto& r : s.records) EXPECT_TRUE(ids.insert(r.id).second);
  }
}
