// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/ingestion.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "biaslens/error.hpp"

namespace biaslens {

using nlohmann::json;

namespace {

std::string id_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  return {};
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::kLoad, std::string("missing field '") + key + "'", where);
  return *it;
}

AttributeGroup parse_group(const json& g, std::size_t index) {
  const std::string where = "schema[" + std::to_string(index) + "]";
  if (!g.is_object()) throw Error(ErrorCode::kLoad, "schema entry is not an object", where);
  AttributeGroup out;
  const json& name = require(g, "name", where);
  if (!name.is_string()) throw Error(ErrorCode::kLoad, "group name must be a string", where);
  out.name = name.get<std::string>();
  const json& kind = require(g, "kind", where);
  if (kind == "continuous") {
    out.kind = AttributeKind::kContinuous;
  } else if (kind == "discrete") {
    out.kind = AttributeKind::kDiscrete;
  } else {
    throw Error(ErrorCode::kLoad, "kind must be \"continuous\" or \"discrete\"", where);
  }
  const json& cols = require(g, "columns", where);
  if (!cols.is_array()) throw Error(ErrorCode::kLoad, "columns must be a list", where);
  for (const auto& c : cols) {
    if (!c.is_string()) throw Error(ErrorCode::kLoad, "column names must be strings", where);
    out.columns.push_back(c.get<std::string>());
  }
  if (out.kind == AttributeKind::kDiscrete) {
    const json& cats = require(g, "categories", where);
    if (!cats.is_array()) throw Error(ErrorCode::kLoad, "categories must be a list", where);
    for (const auto& c : cats) {
      const std::string text = c.is_string() ? c.get<std::string>() : c.dump();
      out.categories.push_back(text);
    }
  }
  return out;
}

}  // namespace

Dataset parse_dataset(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kLoad, "dataset document must be an object");
  const json& schema_doc = require(doc, "schema", "document");
  const json& points_doc = require(doc, "points", "document");
  if (!schema_doc.is_array() || !points_doc.is_array()) {
    throw Error(ErrorCode::kLoad, "schema and points must be lists");
  }

  std::vector<AttributeGroup> schema;
  for (std::size_t i = 0; i < schema_doc.size(); ++i) schema.push_back(parse_group(schema_doc[i], i));

  std::set<std::string, std::less<>> discrete_columns;
  for (const auto& g : schema) {
    if (!g.continuous()) discrete_columns.insert(g.columns.begin(), g.columns.end());
  }

  std::vector<DataPoint> points;
  points.reserve(points_doc.size());
  for (std::size_t row = 0; row < points_doc.size(); ++row) {
    const json& p = points_doc[row];
    const std::string where = "row " + std::to_string(row);
    if (!p.is_object()) throw Error(ErrorCode::kLoad, "point is not an object", where);
    DataPoint pt;
    pt.id = id_text(require(p, "id", where));
    if (pt.id.empty()) throw Error(ErrorCode::kLoad, "point id must be a string or integer", where);
    const json& values = require(p, "values", where);
    if (!values.is_object()) throw Error(ErrorCode::kLoad, "values must be an object", where);
    for (auto it = values.begin(); it != values.end(); ++it) {
      if (it.value().is_number() && !discrete_columns.contains(it.key())) {
        pt.values.emplace(it.key(), it.value().get<double>());
      } else if (it.value().is_string()) {
        pt.values.emplace(it.key(), it.value().get<std::string>());
      } else {
        pt.values.emplace(it.key(), it.value().dump());
      }
    }
    points.push_back(std::move(pt));
  }

  return Dataset::build(std::move(schema), std::move(points));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kLoad, "cannot open dataset file", path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kLoad, "dataset file is not valid JSON", path.string() + ": " + e.what());
  }
  try {
    return parse_dataset(doc);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string() + ": " + e.detail());
  }
}

json dataset_to_json(const Dataset& dataset) {
  json schema = json::array();
  for (const auto& g : dataset.schema()) {
    json entry = {{"name", g.name},
                  {"kind", g.continuous() ? "continuous" : "discrete"},
                  {"columns", g.columns}};
    if (!g.continuous()) entry["categories"] = g.categories;
    schema.push_back(std::move(entry));
  }
  json points = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const DataPoint& p = dataset.point(i);
    json values = json::object();
    for (const auto& [col, v] : p.values) {
      if (const double* d = std::get_if<double>(&v)) {
        values[col] = *d;
      } else {
        values[col] = std::get<std::string>(v);
      }
    }
    points.push_back({{"id", p.id}, {"values", std::move(values)}});
  }
  return {{"schema", std::move(schema)}, {"points", std::move(points)}};
}

std::string_view to_string(InteractionKind kind) {
  return kind == InteractionKind::kClick ? "click" : "hover";
}

std::optional<InteractionKind> parse_interaction_kind(std::string_view text) {
  if (text == "click") return InteractionKind::kClick;
  if (text == "hover") return InteractionKind::kHover;
  return std::nullopt;
}

SessionLog parse_session_log(std::istream& in, std::string session_id) {
  SessionLog log;
  log.session_id = std::move(session_id);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::kLoad, "malformed interaction record", where);
    }
    if (!rec.is_object()) throw Error(ErrorCode::kLoad, "interaction record is not an object", where);
    RawEvent ev;
    ev.point_id = id_text(require(rec, "point_id", where));
    if (ev.point_id.empty()) throw Error(ErrorCode::kLoad, "point_id must be a string or integer", where);
    const json& kind = require(rec, "kind", where);
    const auto parsed = kind.is_string() ? parse_interaction_kind(kind.get<std::string>()) : std::nullopt;
    if (!parsed) throw Error(ErrorCode::kLoad, "kind must be \"click\" or \"hover\"", where);
    ev.kind = *parsed;
    if (auto it = rec.find("dwell_ms"); it != rec.end() && !it->is_null()) {
      if (!it->is_number() || it->get<double>() < 0.0) {
        throw Error(ErrorCode::kLoad, "dwell_ms must be a non-negative number", where);
      }
      ev.dwell_ms = it->get<double>();
    }
    if (auto it = rec.find("ts"); it != rec.end()) ev.wall_clock = *it;
    ev.timestep = static_cast<std::int64_t>(log.events.size()) + 1;
    log.events.push_back(std::move(ev));
  }
  return log;
}

SessionLog load_session_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kLoad, "cannot open interaction log", path.string());
  try {
    SessionLog log = parse_session_log(in, path.stem().string());
    log.provenance = path.string();
    return log;
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string() + ": " + e.detail());
  }
}

void write_session_log(std::ostream& out, const SessionLog& log) {
  for (const RawEvent& ev : log.events) {
    json rec = {{"point_id", ev.point_id}, {"kind", to_string(ev.kind)}};
    if (ev.dwell_ms) rec["dwell_ms"] = *ev.dwell_ms;
    if (!ev.wall_clock.is_null()) rec["ts"] = ev.wall_clock;
    out << rec.dump() << '\n';
  }
}

std::optional<SessionLog> filter_hovers(const SessionLog& log, HoverFilter filter) {
  SessionLog out;
  out.session_id = log.session_id;
  out.provenance = log.provenance;
  bool saw_hover = false;
  for (const RawEvent& ev : log.events) {
    if (ev.kind == InteractionKind::kHover) {
      saw_hover = true;
      if (ev.dwell_ms.value_or(0.0) < filter.min_dwell_ms) continue;
    }
    RawEvent kept = ev;
    kept.timestep = static_cast<std::int64_t>(out.events.size()) + 1;
    out.events.push_back(std::move(kept));
  }
  if (saw_hover && out.events.size() < filter.min_events) return std::nullopt;
  return out;
}

std::vector<InteractionEvent> to_interactions(const SessionLog& log) {
  std::vector<InteractionEvent> out;
  out.reserve(log.events.size());
  for (const RawEvent& ev : log.events) {
    out.push_back({ev.point_id, ev.timestep, ev.kind, ev.dwell_ms});
  }
  return out;
}

}  // namespace biaslens
