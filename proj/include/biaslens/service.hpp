// Apache License, Version 2.0, refer to LICENSE.txt
//
// Live sessions behind a JSON request/response protocol.
//
//   POST /datasets                       dataset document -> {dataset_id, d, point_count}
//   POST /sessions                       {dataset_id, config} -> session handle
//   POST /sessions/{id}/events           {point_id, kind} -> {event_count}
//   GET  /sessions/{id}/posterior        {event_count, models: [{included, probability}]}
//   GET  /sessions/{id}/bias             {event_count, groups: [{name, probability}], map_model}
//   GET  /sessions/{id}/predictions?k=&exclude_visited=
//                                        {event_count, target_timestep, items: [{point_id, probability}]}
//   GET  /sessions/{id}/summary          per-group predictive summaries, raw units
//
// Errors are {code, message, detail} with a 4xx status.
//
// With a spool directory every dataset is written to datasets/<id>.json and
// every session to sessions/<id>.jsonl (header line, then one line per
// event); a new service on the same directory replays them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "biaslens/dataset.hpp"
#include "biaslens/error.hpp"
#include "biaslens/inference.hpp"
#include "biaslens/model_space.hpp"

namespace httplib {
class Server;
}

namespace biaslens {

struct SessionConfig {
  EngineConfig engine;
  bool exclude_visited = true;
  std::size_t k = 10;
};

// Unknown fields and wrong types throw Error(kInvalidArgument).
SessionConfig parse_session_config(const nlohmann::json& doc);
nlohmann::json to_json(const SessionConfig& config);

nlohmann::json posterior_json(const Session& session);
nlohmann::json bias_json(const Session& session);
nlohmann::json predictions_json(const Session& session, std::size_t k, bool exclude_visited);
nlohmann::json summary_json(const Session& session);
nlohmann::json error_json(const Error& error);
int http_status(ErrorCode code);

class SessionService {
 public:
  explicit SessionService(std::optional<std::filesystem::path> spool_dir = std::nullopt);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  nlohmann::json create_dataset(const nlohmann::json& doc);
  nlohmann::json create_session(const nlohmann::json& request);
  nlohmann::json post_event(const std::string& session_id, const nlohmann::json& request);

  nlohmann::json posterior(const std::string& session_id) const;
  nlohmann::json bias(const std::string& session_id) const;
  nlohmann::json predictions(const std::string& session_id, std::optional<std::size_t> k,
                             std::optional<bool> exclude_visited) const;
  nlohmann::json summary(const std::string& session_id) const;

  // Consistent copy of a session's state.
  Session snapshot(const std::string& session_id) const;

  std::size_t dataset_count() const;
  std::size_t session_count() const;

 private:
  struct DatasetEntry;
  struct SessionEntry;

  std::shared_ptr<const DatasetEntry> find_dataset(const std::string& id) const;
  std::shared_ptr<SessionEntry> find_session(const std::string& id) const;
  void recover();

  std::optional<std::filesystem::path> spool_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<const DatasetEntry>> datasets_;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
  std::uint64_t next_dataset_ = 1;
  std::uint64_t next_session_ = 1;
};

// HTTP front end over a SessionService.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  // Binds to host:port (0 = ephemeral) and returns the bound port. Throws
  // Error(kInvalidArgument) if the port cannot be bound.
  int bind(const std::string& host, int port);
  // Serves until stop(). Requires bind().
  void serve();
  // Blocks until serve() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  SessionService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace biaslens
