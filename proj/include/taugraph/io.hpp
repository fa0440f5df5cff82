#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "taugraph/data_model.hpp"
#include "taugraph/error.hpp"
#include "taugraph/text.hpp"

namespace taugraph::io {

/// Header names for the logical annotation columns.
struct ColumnMap {
  std::string id = "id";
  std::string type = "type";
  std::string x_um = "x_um";
  std::string y_um = "y_um";
  std::string area_um2 = "area_um2";
  std::string layer = "layer";
};

/// Reads an annotation table (comma or tab separated, detected from the
/// header). Row order is preserved; unknown columns are ignored. Only the
/// record fields are filled; slide metadata comes from the sidecar file.
inline SlideDataset parse_annotations(std::istream& in, const ColumnMap& columns = {}) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::MissingColumn, columns.id);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';

  std::map<std::string, std::size_t> index;
  const auto header = text::split(line, delim);
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(std::string(text::trim(header[i])), i);

  auto need = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorKind::MissingColumn, name);
    return it->second;
  };
  const std::size_t c_id = need(columns.id), c_type = need(columns.type), c_x = need(columns.x_um),
                    c_y = need(columns.y_um), c_area = need(columns.area_um2), c_layer = need(columns.layer);
  const std::size_t width = std::max({c_id, c_type, c_x, c_y, c_area, c_layer}) + 1;

  SlideDataset ds;
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    ++row;
    const auto cells = text::split(line, delim);
    auto bad = [&](const std::string& column) {
      return Error(ErrorKind::BadValue, "row " + std::to_string(row) + ", column " + column);
    };
    if (cells.size() < width) throw bad("<row too short>");

    AnnotationRecord r;
    r.id = std::string(text::trim(cells[c_id]));
    if (r.id.empty() || text::has_whitespace(r.id)) throw bad(columns.id);
    const auto type = parse_object_type(text::trim(cells[c_type]));
    if (!type) throw bad(columns.type);
    r.object_type = *type;
    const auto x = text::parse_double(cells[c_x]);
    if (!x || !std::isfinite(*x)) throw bad(columns.x_um);
    const auto y = text::parse_double(cells[c_y]);
    if (!y || !std::isfinite(*y)) throw bad(columns.y_um);
    const auto area = text::parse_double(cells[c_area]);
    if (!area || !std::isfinite(*area)) throw bad(columns.area_um2);
    const auto layer = parse_layer(text::trim(cells[c_layer]));
    if (!layer) throw bad(columns.layer);
    r.x_um = *x;
    r.y_um = *y;
    r.area_um2 = *area;
    r.layer = *layer;
    if (!seen.insert(r.id).second) throw Error(ErrorKind::DuplicateId, r.id);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

struct SlideMetadata {
  std::string slide_id;
  std::string patient_id;
  Diagnosis diagnosis = Diagnosis::cAD;
  double resolution_nm_per_px = 1.0;
  std::vector<Point2> roi_polygon;
};

/// Key/value sidecar: `slide_id`, `patient_id`, `diagnosis`,
/// `resolution_nm_per_px` as `key: value`, then `roi:` and one `x y` vertex per
/// line.
inline SlideMetadata parse_metadata(std::istream& in) {
  SlideMetadata m;
  std::set<std::string> keys;
  bool in_roi = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto bad = [&](const std::string& what) {
      return Error(ErrorKind::BadValue, "metadata line " + std::to_string(lineno) + ": " + what);
    };
    if (in_roi) {
      const auto parts = text::split_ws(t);
      if (parts.size() != 2) throw bad("expected 'x y' vertex");
      const auto x = text::parse_double(parts[0]);
      const auto y = text::parse_double(parts[1]);
      if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) throw bad("non-numeric vertex");
      m.roi_polygon.push_back({*x, *y});
      continue;
    }
    const auto colon = t.find(':');
    if (colon == std::string_view::npos) throw bad("expected 'key: value'");
    const std::string key(text::trim(t.substr(0, colon)));
    const std::string value(text::trim(t.substr(colon + 1)));
    keys.insert(key);
    if (key == "roi") {
      in_roi = true;
    } else if (key == "slide_id") {
      if (value.empty() || text::has_whitespace(value)) throw bad("slide_id");
      m.slide_id = value;
    } else if (key == "patient_id") {
      if (value.empty() || text::has_whitespace(value)) throw bad("patient_id");
      m.patient_id = value;
    } else if (key == "diagnosis") {
      const auto d = parse_diagnosis(value);
      if (!d) throw bad("diagnosis must be cAD or rpAD");
      m.diagnosis = *d;
    } else if (key == "resolution_nm_per_px") {
      const auto r = text::parse_double(value);
      if (!r || !(*r > 0.0)) throw bad("resolution_nm_per_px must be > 0");
      m.resolution_nm_per_px = *r;
    }
  }
  for (const char* k : {"slide_id", "patient_id", "diagnosis", "resolution_nm_per_px", "roi"}) {
    if (!keys.count(k)) throw Error(ErrorKind::MissingColumn, k);
  }
  return m;
}

inline SlideDataset assemble_slide(SlideDataset annotations, const SlideMetadata& meta) {
  annotations.slide_id = meta.slide_id;
  annotations.patient_id = meta.patient_id;
  annotations.diagnosis = meta.diagnosis;
  annotations.resolution_nm_per_px = meta.resolution_nm_per_px;
  annotations.roi_polygon = meta.roi_polygon;
  for (auto& r : annotations.records) r.slide_id = meta.slide_id;
  return annotations;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string record_id;  // empty for slide-level violations
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

/// Lists every invariant violation; an empty report means the dataset is valid.
inline ValidationReport validate_dataset(const SlideDataset& d) {
  ValidationReport report;
  const bool roi_ok = d.roi_polygon.size() >= 3;
  if (!roi_ok) {
    report.push_back({"", "ROI has fewer than 3 vertices"});
  } else if (!is_simple_polygon(d.roi_polygon)) {
    report.push_back({"", "ROI not simple"});
  } else if (signed_area_um2(d.roi_polygon) == 0.0) {
    report.push_back({"", "ROI has zero area"});
  }
  if (!(d.resolution_nm_per_px > 0.0)) report.push_back({"", "resolution must be > 0"});

  std::set<std::string> seen;
  for (const auto& r : d.records) {
    if (!seen.insert(r.id).second) report.push_back({r.id, "duplicate id"});
    if (!std::isfinite(r.x_um) || !std::isfinite(r.y_um)) {
      report.push_back({r.id, "non-finite coordinate"});
      continue;
    }
    if (roi_ok && !inside_or_on(d.roi_polygon, r.position())) {
      report.push_back({r.id, "outside ROI"});
    } else if (r.x_um < 0.0 || r.y_um < 0.0) {
      report.push_back({r.id, "negative coordinate"});
    }
    if (!(r.area_um2 >= 0.0)) report.push_back({r.id, "negative area"});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Writers (exact inverse of the parsers above)

inline std::string format_annotations(const SlideDataset& d) {
  std::string out = "id,type,x_um,y_um,area_um2,layer\n";
  for (const auto& r : d.records) {
    out += r.id;
    out += ',';
    out += to_string(r.object_type);
    out += ',' + text::exact(r.x_um) + ',' + text::exact(r.y_um) + ',' + text::exact(r.area_um2) + ',';
    out += layer_token(r.layer);
    out += '\n';
  }
  return out;
}

inline std::string format_metadata(const SlideDataset& d) {
  std::string out;
  out += "slide_id: " + d.slide_id + "\n";
  out += "patient_id: " + d.patient_id + "\n";
  out += "diagnosis: " + std::string(to_string(d.diagnosis)) + "\n";
  out += "resolution_nm_per_px: " + text::exact(d.resolution_nm_per_px) + "\n";
  out += "roi:\n";
  for (const auto& p : d.roi_polygon) out += text::exact(p.x) + " " + text::exact(p.y) + "\n";
  return out;
}

inline SlideDataset load_slide(const std::filesystem::path& annotations, const std::filesystem::path& metadata) {
  std::istringstream a(text::read_file(annotations));
  std::istringstream m(text::read_file(metadata));
  return assemble_slide(parse_annotations(a), parse_metadata(m));
}

/// Cohort directory: `cohort.txt` (provenance, seed, slide list) plus
/// `<slide>.csv` and `<slide>.meta` per slide.
inline void write_cohort(const Cohort& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string index = "taugraph-cohort v1\n";
  index += "provenance: " + std::string(to_string(c.provenance)) + "\n";
  index += "seed: " + (c.seed ? std::to_string(*c.seed) : std::string("none")) + "\n";
  index += "slides:\n";
  for (const auto& s : c.slides) {
    index += s.slide_id + "\n";
    text::write_file(dir / (s.slide_id + ".csv"), format_annotations(s));
    text::write_file(dir / (s.slide_id + ".meta"), format_metadata(s));
  }
  text::write_file(dir / "cohort.txt", index);
}

inline Cohort read_cohort(const std::filesystem::path& dir) {
  std::istringstream in(text::read_file(dir / "cohort.txt"));
  std::string line;
  std::getline(in, line);
  if (text::trim(line) != "taugraph-cohort v1") throw Error(ErrorKind::CorruptPayload, "cohort.txt header");
  Cohort c;
  bool slides = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (slides) {
      const std::string id(t);
      if (!ids.insert(id).second) throw Error(ErrorKind::DuplicateId, id);
      c.slides.push_back(load_slide(dir / (id + ".csv"), dir / (id + ".meta")));
      continue;
    }
    if (t.rfind("provenance:", 0) == 0) {
      c.provenance = text::trim(t.substr(11)) == "synthetic" ? Provenance::synthetic : Provenance::real;
    } else if (t.rfind("seed:", 0) == 0) {
      const auto v = text::parse_int<std::uint64_t>(t.substr(5));
      if (v) c.seed = *v;
    } else if (t == "slides:") {
      slides = true;
    }
  }
  return c;
}

}  // namespace taugraph::io
