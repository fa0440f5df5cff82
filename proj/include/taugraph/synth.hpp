#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "taugraph/data_model.hpp"
#include "taugraph/error.hpp"
#include "taugraph/random.hpp"

namespace taugraph {

/// Thomas cluster process per cortical band. Layer k occupies the k-th of six
/// equal horizontal bands, counted from y = 0.
struct SynthConfig {
  int n_slides_per_class = 20;
  double roi_width_um = 4000.0;
  double roi_height_um = 4000.0;
  double parent_rate_per_mm2 = 2.0;
  double offspring_mean = 10.0;
  std::array<double, kLayerCount> rpad_multipliers = {1, 1, 3, 3, 1, 1};
  std::array<double, kLayerCount> cad_multipliers = {1, 3, 1, 1, 3, 3};
  double rpad_sigma_um = 40.0;
  double cad_sigma_um = 120.0;
  double plaque_fraction = 0.5;
  double resolution_nm_per_px = 250.0;
  std::uint64_t seed = 42;

  const std::array<double, kLayerCount>& multipliers(Diagnosis d) const {
    return d == Diagnosis::rpAD ? rpad_multipliers : cad_multipliers;
  }
  double sigma(Diagnosis d) const { return d == Diagnosis::rpAD ? rpad_sigma_um : cad_sigma_um; }

  void validate() const {
    auto bad = [](const std::string& w) { return Error(ErrorKind::BadConfig, "synthetic cohort: " + w); };
    if (n_slides_per_class < 0) throw bad("n_slides_per_class < 0");
    if (!(roi_width_um > 0.0) || !(roi_height_um > 0.0)) throw bad("ROI size must be > 0");
    if (!(parent_rate_per_mm2 >= 0.0) || !(offspring_mean >= 0.0)) throw bad("rates must be >= 0");
    for (double m : rpad_multipliers) {
      if (!(m >= 0.0)) throw bad("intensity multipliers must be >= 0");
    }
    for (double m : cad_multipliers) {
      if (!(m >= 0.0)) throw bad("intensity multipliers must be >= 0");
    }
    if (!(rpad_sigma_um > 0.0) || !(cad_sigma_um > 0.0)) throw bad("offspring sigma must be > 0");
    if (!(plaque_fraction >= 0.0 && plaque_fraction <= 1.0)) throw bad("plaque_fraction outside [0, 1]");
    if (!(resolution_nm_per_px > 0.0)) throw bad("resolution must be > 0");
  }
};

inline double round_to_nm(double v) { return std::round(v * 1000.0) / 1000.0; }

inline int band_of(double y, double height) {
  const int k = static_cast<int>(std::floor(y / height * kLayerCount));
  return std::clamp(k, 0, kLayerCount - 1) + 1;
}

namespace detail {

/// Antiderivative of the standard normal CDF.
inline double phi_integral(double a) {
  return a * 0.5 * std::erfc(-a / std::sqrt(2.0)) + std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
}

/// P(parent + N(0, sigma^2) lands in [q0, q1]) for a parent uniform on [p0, p1].
inline double landing_probability(double p0, double p1, double q0, double q1, double sigma) {
  auto mass_below = [&](double q) { return sigma * (phi_integral((q - p0) / sigma) - phi_integral((q - p1) / sigma)); };
  return (mass_below(q1) - mass_below(q0)) / (p1 - p0);
}

}  // namespace detail

/// Expected objects (both types) per layer and slide, including offspring that
/// spill into neighboring bands and those lost past the ROI border.
inline std::array<double, kLayerCount> expected_layer_counts(const SynthConfig& cfg, Diagnosis d) {
  std::array<double, kLayerCount> out{};
  const double w = cfg.roi_width_um, bh = cfg.roi_height_um / kLayerCount;
  const double sigma = cfg.sigma(d);
  const double keep_x = detail::landing_probability(0.0, w, 0.0, w, sigma);
  for (int k = 0; k < kLayerCount; ++k) {
    const double offspring = cfg.parent_rate_per_mm2 * cfg.multipliers(d)[static_cast<std::size_t>(k)] * w * bh / 1e6 *
                             cfg.offspring_mean * keep_x;
    for (int j = 0; j < kLayerCount; ++j) {
      out[static_cast<std::size_t>(j)] +=
          offspring * detail::landing_probability(k * bh, (k + 1) * bh, j * bh, (j + 1) * bh, sigma);
    }
  }
  return out;
}

inline std::string slide_name(Diagnosis d, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%02d", d == Diagnosis::cAD ? "cAD" : "rpAD", index + 1);
  return buf;
}

inline SlideDataset generate_slide(const SynthConfig& cfg, Diagnosis d, int index, std::uint64_t seed) {
  Rng rng(seed);
  SlideDataset s;
  s.slide_id = slide_name(d, index);
  s.patient_id = "P-" + s.slide_id;
  s.diagnosis = d;
  s.resolution_nm_per_px = cfg.resolution_nm_per_px;
  const double w = cfg.roi_width_um, h = cfg.roi_height_um;
  s.roi_polygon = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  const double band_h = h / kLayerCount;
  const double band_mm2 = w * band_h / 1e6;
  const double sigma = cfg.sigma(d);
  std::size_t next = 0;
  for (int k = 0; k < kLayerCount; ++k) {
    const double mean_parents = cfg.parent_rate_per_mm2 * cfg.multipliers(d)[static_cast<std::size_t>(k)] * band_mm2;
    const auto parents = rng.poisson(mean_parents);
    for (std::uint64_t p = 0; p < parents; ++p) {
      const double px = rng.uniform(0.0, w);
      const double py = rng.uniform(k * band_h, (k + 1) * band_h);
      const auto children = rng.poisson(cfg.offspring_mean);
      for (std::uint64_t c = 0; c < children; ++c) {
        const double x = round_to_nm(px + sigma * rng.normal());
        const double y = round_to_nm(py + sigma * rng.normal());
        const bool plaque = rng.uniform() < cfg.plaque_fraction;
        if (x < 0.0 || x > w || y < 0.0 || y > h) continue;
        AnnotationRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "o%05zu", next++);
        r.id = id;
        r.slide_id = s.slide_id;
        r.object_type = plaque ? ObjectType::plaque : ObjectType::tangle;
        r.x_um = x;
        r.y_um = y;
        r.area_um2 = round_to_nm(plaque ? 200.0 + 50.0 * rng.uniform() : 80.0 + 20.0 * rng.uniform());
        r.layer = layer_from_number(band_of(y, h));
        s.records.push_back(std::move(r));
      }
    }
  }
  return s;
}

/// cAD slides first, then rpAD; slide i of class c draws from
/// derive_seed(seed, c * 10000 + i).
inline Cohort generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  Cohort out;
  out.provenance = Provenance::synthetic;
  out.seed = cfg.seed;
  for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
    for (int i = 0; i < cfg.n_slides_per_class; ++i) {
      const auto stream = static_cast<std::uint64_t>(class_index(d)) * 10000u + static_cast<std::uint64_t>(i);
      out.slides.push_back(generate_slide(cfg, d, i, derive_seed(cfg.seed, stream)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planted-motif task

struct MotifConfig {
  int n_graphs_per_class = 40;
  int noise_points = 40;
  double extent_um = 1200.0;
  int motif_size = 5;
  double motif_radius_um = 25.0;  // pairwise distances <= 2 * radius
  std::uint64_t seed = 7;

  double motif_diameter() const { return 2.0 * motif_radius_um; }

  void validate() const {
    auto bad = [](const std::string& w) { return Error(ErrorKind::BadConfig, "motif task: " + w); };
    if (n_graphs_per_class < 1) throw bad("n_graphs_per_class < 1");
    if (noise_points < 3) throw bad("need at least 3 noise points");
    if (motif_size < 3) throw bad("motif_size < 3");
    if (!(motif_radius_um > 0.0) || !(extent_um > 4.0 * motif_radius_um)) throw bad("geometry");
  }
};

/// Motif record ids start with "m"; noise ids with "n".
inline bool is_motif_record(const std::string& id) { return !id.empty() && id[0] == 'm'; }

/// True when some `size` points are pairwise within `dist` (exhaustive over
/// cliques of the distance graph; intended for the small task graphs).
inline bool has_close_group(const std::vector<Point2>& p, int size, double dist) {
  const std::size_t n = p.size();
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::hypot(p[i].x - p[j].x, p[i].y - p[j].y) <= dist) {
        nb[i].push_back(j);
      }
    }
  }
  auto close = [&](std::size_t a, std::size_t b) { return std::hypot(p[a].x - p[b].x, p[a].y - p[b].y) <= dist; };
  std::vector<std::size_t> chosen;
  std::function<bool(std::size_t)> extend = [&](std::size_t from) -> bool {
    if (static_cast<int>(chosen.size()) == size) return true;
    const auto& cand = nb[chosen.front()];
    for (std::size_t k = from; k < cand.size(); ++k) {
      const std::size_t c = cand[k];
      if (!std::all_of(chosen.begin() + 1, chosen.end(), [&](std::size_t q) { return close(q, c); })) continue;
      chosen.push_back(c);
      if (extend(k + 1)) return true;
      chosen.pop_back();
    }
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    chosen = {i};
    if (extend(0)) return true;
  }
  return false;
}

/// Class rpAD graphs carry one planted group of close points; class cAD graphs
/// are rejection-sampled to contain none. Noise points never form a group on
/// their own in either class.
inline Cohort planted_motif_task(const MotifConfig& cfg) {
  cfg.validate();
  Cohort out;
  out.provenance = Provenance::synthetic;
  out.seed = cfg.seed;
  const double e = cfg.extent_um;
  for (Diagnosis d : {Diagnosis::cAD, Diagnosis::rpAD}) {
    for (int i = 0; i < cfg.n_graphs_per_class; ++i) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(class_index(d)) * 10000u + static_cast<std::uint64_t>(i)));
      std::vector<Point2> noise;
      do {
        noise.clear();
        for (int k = 0; k < cfg.noise_points; ++k) noise.push_back({round_to_nm(rng.uniform(0, e)), round_to_nm(rng.uniform(0, e))});
      } while (has_close_group(noise, cfg.motif_size, cfg.motif_diameter()));
      SlideDataset s;
      s.slide_id = std::string(d == Diagnosis::cAD ? "neg-" : "pos-") + std::to_string(i + 1);
      s.patient_id = s.slide_id;
      s.diagnosis = d;
      s.roi_polygon = {{0, 0}, {e, 0}, {e, e}, {0, e}};
      for (int k = 0; k < cfg.noise_points; ++k) {
        s.records.push_back({"n" + std::to_string(k), s.slide_id, ObjectType::plaque, noise[static_cast<std::size_t>(k)].x,
                             noise[static_cast<std::size_t>(k)].y, 100.0, Layer::unassigned});
      }
      if (d == Diagnosis::rpAD) {
        const double r = cfg.motif_radius_um;
        const double cx = rng.uniform(r, e - r), cy = rng.uniform(r, e - r);
        for (int k = 0; k < cfg.motif_size; ++k) {
          // Uniform in the disk; the 1 nm rounding can push a point past the
          // radius by at most half a nanometer, so shrink the disk slightly.
          const double rr = (r - 0.001) * std::sqrt(rng.uniform());
          const double a = rng.uniform(0, 2.0 * std::numbers::pi);
          s.records.push_back({"m" + std::to_string(k), s.slide_id, ObjectType::plaque, round_to_nm(cx + rr * std::cos(a)),
                               round_to_nm(cy + rr * std::sin(a)), 100.0, Layer::unassigned});
        }
      }
      out.slides.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace taugraph
