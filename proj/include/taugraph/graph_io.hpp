#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "taugraph/error.hpp"
#include "taugraph/spatial_graph.hpp"
#include "taugraph/text.hpp"

namespace taugraph::io {

// Versioned text format:
//
//   taugraph-graph v1
//   slide_id <id>
//   diagnosis <cAD|rpAD>
//   object_type <plaque|tangle>
//   level <patient|L1..L6>
//   alpha_optimal_um <real>
//   nodes <n>
//   <record_ref> <x_um> <y_um> <layer|NA>      (n lines)
//   edges <m>
//   <u> <v> <length_um> <alpha_um> <weight>    (m lines)
//   end
//
// Reals use 17 significant digits, so serialization is bit-exact.

inline std::string serialize_graph(const PathologyGraph& g) {
  std::string out = "taugraph-graph v1\n";
  out += "slide_id " + (g.slide_id.empty() ? std::string("-") : g.slide_id) + "\n";
  out += "diagnosis " + std::string(to_string(g.diagnosis)) + "\n";
  out += "object_type " + std::string(to_string(g.object_type)) + "\n";
  out += "level " + g.level.token() + "\n";
  out += "alpha_optimal_um " + text::exact(g.alpha_optimal_um) + "\n";
  out += "nodes " + std::to_string(g.nodes.size()) + "\n";
  for (const auto& n : g.nodes) {
    out += n.record_ref + " " + text::exact(n.x_um) + " " + text::exact(n.y_um) + " " + layer_token(n.layer) + "\n";
  }
  out += "edges " + std::to_string(g.edges.size()) + "\n";
  for (const auto& e : g.edges) {
    out += std::to_string(e.u) + " " + std::to_string(e.v) + " " + text::exact(e.length_um) + " " +
           text::exact(e.alpha_um) + " " + text::exact(e.weight) + "\n";
  }
  out += "end\n";
  return out;
}

inline PathologyGraph deserialize_graph(std::string_view bytes) {
  std::istringstream in{std::string(bytes)};
  std::string line;
  std::size_t lineno = 0;
  auto corrupt = [&](const std::string& what) {
    return Error(ErrorKind::CorruptPayload, "line " + std::to_string(lineno) + ": " + what);
  };
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(in, line)) throw corrupt("unexpected end of payload");
    ++lineno;
    return text::split_ws(line);
  };
  auto keyed = [&](const char* key) -> std::string {
    const auto t = next();
    if (t.size() != 2 || t[0] != key) throw corrupt(std::string("expected '") + key + " <value>'");
    return t[1];
  };
  auto real = [&](const std::string& s) {
    const auto v = text::parse_double(s);
    if (!v || std::isnan(*v)) throw corrupt("bad number '" + s + "'");
    return *v;
  };
  auto count = [&](const std::string& s) {
    const auto v = text::parse_int<std::size_t>(s);
    if (!v) throw corrupt("bad count '" + s + "'");
    return *v;
  };

  {
    const auto t = next();
    if (t.size() != 2 || t[0] != "taugraph-graph" || t[1] != "v1") throw corrupt("bad header");
  }
  PathologyGraph g;
  g.slide_id = keyed("slide_id");
  if (g.slide_id == "-") g.slide_id.clear();
  const auto diag = parse_diagnosis(keyed("diagnosis"));
  if (!diag) throw corrupt("diagnosis");
  g.diagnosis = *diag;
  const auto type = parse_object_type(keyed("object_type"));
  if (!type) throw corrupt("object_type");
  g.object_type = *type;
  const auto level = keyed("level");
  if (level == "patient") {
    g.level = GraphLevel::patient();
  } else if (level.size() == 2 && level[0] == 'L' && level[1] >= '1' && level[1] <= '6') {
    g.level = GraphLevel::of_layer(level[1] - '0');
  } else {
    throw corrupt("level");
  }
  g.alpha_optimal_um = real(keyed("alpha_optimal_um"));

  const std::size_t n = count(keyed("nodes"));
  g.nodes.reserve(std::min<std::size_t>(n, 1 << 20));
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = next();
    if (t.size() != 4) throw corrupt("node row");
    const auto layer = parse_layer(t[3]);
    if (!layer) throw corrupt("node layer");
    g.nodes.push_back({t[0], real(t[1]), real(t[2]), *layer});
  }
  const std::size_t m = count(keyed("edges"));
  for (std::size_t i = 0; i < m; ++i) {
    const auto t = next();
    if (t.size() != 5) throw corrupt("edge row");
    GraphEdge e{count(t[0]), count(t[1]), real(t[2]), real(t[3]), real(t[4])};
    if (e.u >= n || e.v >= n || e.u >= e.v) throw corrupt("edge endpoints");
    g.edges.push_back(e);
  }
  const auto t = next();
  if (t.size() != 1 || t[0] != "end") throw corrupt("missing end marker");
  return g;
}

}  // namespace taugraph::io
