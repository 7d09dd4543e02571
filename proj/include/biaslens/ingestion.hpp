// Apache License, Version 2.0, refer to LICENSE.txt
//
// File formats.
//
// Dataset (JSON):
//   { "schema": [ {"name": "location", "kind": "continuous",
//                  "columns": ["lat", "lng"]},
//                 {"name": "type", "kind": "discrete", "columns": ["type"],
//                  "categories": ["Italian", "Mexican"]} ],
//     "points": [ {"id": "r1", "values": {"lat": 0.35, "lng": 0.85,
//                                         "type": "Italian"}} ] }
//
// Interaction log (newline-delimited JSON, file order = arrival order):
//   {"point_id": "r3", "kind": "click"}
//   {"point_id": "r5", "kind": "hover", "dwell_ms": 1250, "ts": 1617200000}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "biaslens/dataset.hpp"
#include "biaslens/model_space.hpp"

namespace biaslens {

Dataset parse_dataset(const nlohmann::json& doc);
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& dataset);

struct RawEvent {
  std::string point_id;
  InteractionKind kind = InteractionKind::kClick;
  std::optional<double> dwell_ms;
  nlohmann::json wall_clock;  // preserved verbatim, never used for inference
  std::int64_t timestep = 0;
};

struct SessionLog {
  std::string session_id;
  std::vector<RawEvent> events;
  std::string provenance;
};

// Throws Error(kLoad) with "line N" detail on malformed records.
SessionLog parse_session_log(std::istream& in, std::string session_id);
SessionLog load_session_log(const std::filesystem::path& path);
void write_session_log(std::ostream& out, const SessionLog& log);

struct HoverFilter {
  double min_dwell_ms = 1000.0;
  std::size_t min_events = 4;
};

// Drops hovers shorter than min_dwell_ms and renumbers timesteps 1..n.
// Returns nullopt when a log that contained hovers keeps fewer than
// min_events events. Click-only logs pass through unchanged.
std::optional<SessionLog> filter_hovers(const SessionLog& log, HoverFilter filter = {});

std::vector<InteractionEvent> to_interactions(const SessionLog& log);

std::string_view to_string(InteractionKind kind);
std::optional<InteractionKind> parse_interaction_kind(std::string_view text);

}  // namespace biaslens
