// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <vector>

#include <httplib.h>

#include "biaslens/ingestion.hpp"

namespace biaslens {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Numeric suffix of ids like "d12"; 0 if there is none.
std::uint64_t id_number(const std::string& id) {
  std::uint64_t n = 0;
  if (id.size() < 2) return 0;
  const auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), n);
  return ec == std::errc() && ptr == id.data() + id.size() ? n : 0;
}

double number_field(const json& v, const char* name) {
  if (!v.is_number()) throw Error(ErrorCode::kInvalidArgument, "config field must be a number", name);
  return v.get<double>();
}

std::vector<std::string> names_of(std::uint32_t mask, const Dataset& ds) {
  std::vector<std::string> out;
  for (std::size_t g = 0; g < ds.group_count(); ++g) {
    if ((mask >> g) & 1U) out.push_back(ds.group(g).name);
  }
  return out;
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

SessionConfig parse_session_config(const json& doc) {
  SessionConfig c;
  if (doc.is_null()) return c;
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "prior") {
      const auto p = v.is_string() ? parse_prior_policy(v.get<std::string>()) : std::nullopt;
      if (!p) throw Error(ErrorCode::kInvalidArgument, "prior must be \"uniform\" or \"size_penalized\"");
      c.engine.prior = *p;
    } else if (key == "scoring") {
      const auto r = v.is_string() ? parse_scoring_rule(v.get<std::string>()) : std::nullopt;
      if (!r) throw Error(ErrorCode::kInvalidArgument, "scoring must be \"inclusive\" or \"sequential\"");
      c.engine.scoring = *r;
    } else if (key == "alpha") {
      c.engine.alpha = number_field(v, "alpha");
    } else if (key == "kappa0") {
      c.engine.kappa0 = number_field(v, "kappa0");
    } else if (key == "psi_scale") {
      c.engine.psi_scale = number_field(v, "psi_scale");
    } else if (key == "nu0_offset") {
      c.engine.nu0_offset = number_field(v, "nu0_offset");
    } else if (key == "time_horizon") {
      c.engine.time_horizon = number_field(v, "time_horizon");
    } else if (key == "exclude_visited") {
      if (!v.is_boolean()) throw Error(ErrorCode::kInvalidArgument, "exclude_visited must be a boolean");
      c.exclude_visited = v.get<bool>();
    } else if (key == "k") {
      if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "k must be a positive integer");
      }
      c.k = v.get<std::size_t>();
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown config field", key);
    }
  }
  c.engine.validate();
  return c;
}

json to_json(const SessionConfig& c) {
  return {{"prior", to_string(c.engine.prior)},
          {"scoring", to_string(c.engine.scoring)},
          {"alpha", c.engine.alpha},
          {"kappa0", c.engine.kappa0},
          {"psi_scale", c.engine.psi_scale},
          {"nu0_offset", c.engine.nu0_offset},
          {"time_horizon", c.engine.time_horizon},
          {"exclude_visited", c.exclude_visited},
          {"k", c.k}};
}

json posterior_json(const Session& session) {
  const std::vector<double> post = session.posterior();
  json models = json::array();
  for (std::size_t i = 0; i < post.size(); ++i) {
    models.push_back({{"included", names_of(session.models()[i].mask, session.dataset())},
                      {"probability", post[i]}});
  }
  return {{"event_count", session.event_count()}, {"models", std::move(models)}};
}

json bias_json(const Session& session) {
  const BiasReport r = bias_report(session);
  json groups = json::array();
  for (const auto& g : r.groups) groups.push_back({{"name", g.name}, {"probability", g.probability}});
  return {{"event_count", r.event_count},
          {"groups", std::move(groups)},
          {"map_model", names_of(session.models()[r.map_model].mask, session.dataset())}};
}

json predictions_json(const Session& session, std::size_t k, bool exclude_visited) {
  const PredictionSet p = predict_next(session, k, exclude_visited);
  json items = json::array();
  for (const auto& it : p.items) items.push_back({{"point_id", it.point_id}, {"probability", it.probability}});
  return {{"event_count", p.event_count},
          {"target_timestep", p.target_timestep},
          {"k", p.k},
          {"exclude_visited", p.exclude_visited},
          {"items", std::move(items)}};
}

json summary_json(const Session& session) {
  const SessionSummary s = summarize(session);
  json continuous = json::array();
  for (const auto& c : s.continuous) {
    continuous.push_back({{"name", c.name},
                          {"columns", c.columns},
                          {"dof", c.dof},
                          {"location", vector_json(c.location)},
                          {"scale", matrix_rows(c.scale)},
                          {"sample_mean", c.sample_mean.size() ? vector_json(c.sample_mean) : json(nullptr)},
                          {"time_location", c.time_location},
                          {"time_scale", c.time_scale}});
  }
  json discrete = json::array();
  for (const auto& d : s.discrete) {
    discrete.push_back({{"name", d.name},
                        {"categories", d.categories},
                        {"probabilities", d.probabilities},
                        {"counts", d.counts}});
  }
  return {{"event_count", s.event_count},
          {"continuous", std::move(continuous)},
          {"discrete", std::move(discrete)}};
}

json error_json(const Error& e) {
  return {{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}};
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kSequencing:
      return 409;
    case ErrorCode::kTooLarge:
      return 413;
    case ErrorCode::kDegenerate:
    case ErrorCode::kNumeric:
      return 422;
    default:
      return 400;
  }
}

struct SessionService::DatasetEntry {
  std::string id;
  std::shared_ptr<const Dataset> dataset;
};

struct SessionService::SessionEntry {
  std::string id;
  std::string dataset_id;
  std::string created_at;
  SessionConfig config;
  mutable std::mutex mutex;  // single writer; readers copy under it
  Session session;
  std::optional<fs::path> spool_file;

  SessionEntry(std::string id_, std::string dataset_id_, std::string created, SessionConfig cfg,
               std::shared_ptr<const Dataset> ds)
      : id(std::move(id_)),
        dataset_id(std::move(dataset_id_)),
        created_at(std::move(created)),
        config(cfg),
        session(std::move(ds), cfg.engine) {}

  json handle() const {
    return {{"session_id", id},
            {"dataset_id", dataset_id},
            {"config", to_json(config)},
            {"created_at", created_at},
            {"event_count", session.event_count()}};
  }
};

SessionService::SessionService(std::optional<fs::path> spool_dir) : spool_(std::move(spool_dir)) {
  if (!spool_) return;
  std::error_code ec;
  fs::create_directories(*spool_ / "datasets", ec);
  fs::create_directories(*spool_ / "sessions", ec);
  if (ec) throw Error(ErrorCode::kLoad, "cannot create spool directory", spool_->string());
  recover();
}

SessionService::~SessionService() = default;

void SessionService::recover() {
  auto sorted_files = [](const fs::path& dir, const char* ext) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  for (const fs::path& file : sorted_files(*spool_ / "datasets", ".json")) {
    auto entry = std::make_shared<DatasetEntry>();
    entry->id = file.stem().string();
    entry->dataset = std::make_shared<const Dataset>(load_dataset(file));
    next_dataset_ = std::max(next_dataset_, id_number(entry->id) + 1);
    datasets_.emplace(entry->id, std::move(entry));
  }

  for (const fs::path& file : sorted_files(*spool_ / "sessions", ".jsonl")) {
    std::ifstream in(file);
    std::string line;
    if (!std::getline(in, line)) continue;
    json header;
    try {
      header = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::kLoad, "corrupt session spool header", file.string());
    }
    const std::string id = header.at("session_id").get<std::string>();
    const auto ds = find_dataset(header.at("dataset_id").get<std::string>());
    auto entry = std::make_shared<SessionEntry>(id, ds->id, header.value("created_at", ""),
                                                parse_session_config(header.at("config")), ds->dataset);
    SessionLog log = parse_session_log(in, id);
    for (const InteractionEvent& ev : to_interactions(log)) entry->session.observe(ev);
    entry->spool_file = file;
    next_session_ = std::max(next_session_, id_number(id) + 1);
    sessions_.emplace(id, std::move(entry));
  }
}

std::shared_ptr<const SessionService::DatasetEntry> SessionService::find_dataset(
    const std::string& id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) throw Error(ErrorCode::kNotFound, "unknown dataset", id);
  return it->second;
}

std::shared_ptr<SessionService::SessionEntry> SessionService::find_session(const std::string& id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "unknown session", id);
  return it->second;
}

json SessionService::create_dataset(const json& doc) {
  auto entry = std::make_shared<DatasetEntry>();
  entry->dataset = std::make_shared<const Dataset>(parse_dataset(doc));
  {
    std::unique_lock lock(registry_mutex_);
    entry->id = "d" + std::to_string(next_dataset_++);
    if (spool_) {
      std::ofstream out(*spool_ / "datasets" / (entry->id + ".json"));
      out << dataset_to_json(*entry->dataset).dump();
      if (!out) throw Error(ErrorCode::kLoad, "cannot write dataset spool", entry->id);
    }
    datasets_.emplace(entry->id, entry);
  }
  json out = {{"dataset_id", entry->id},
              {"d", entry->dataset->group_count()},
              {"point_count", entry->dataset->size()}};
  if (!entry->dataset->warnings().empty()) out["warnings"] = entry->dataset->warnings();
  return out;
}

json SessionService::create_session(const json& request) {
  if (!request.is_object()) throw Error(ErrorCode::kInvalidArgument, "request must be an object");
  auto it = request.find("dataset_id");
  if (it == request.end() || !it->is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset_id is required");
  }
  const auto ds = find_dataset(it->get<std::string>());
  const SessionConfig config = parse_session_config(request.value("config", json()));
  if (ds->dataset->group_count() > kMaxGroups) {
    throw Error(ErrorCode::kTooLarge, "too many attribute groups",
                "d=" + std::to_string(ds->dataset->group_count()) + " exceeds " + std::to_string(kMaxGroups));
  }

  std::unique_lock lock(registry_mutex_);
  const std::string id = "s" + std::to_string(next_session_++);
  auto entry = std::make_shared<SessionEntry>(id, ds->id, utc_now(), config, ds->dataset);
  if (spool_) {
    entry->spool_file = *spool_ / "sessions" / (id + ".jsonl");
    std::ofstream out(*entry->spool_file);
    out << json{{"session_id", id}, {"dataset_id", ds->id}, {"config", to_json(config)},
                {"created_at", entry->created_at}}
               .dump()
        << '\n';
    if (!out) throw Error(ErrorCode::kLoad, "cannot write session spool", id);
  }
  sessions_.emplace(id, entry);
  return entry->handle();
}

json SessionService::post_event(const std::string& session_id, const json& request) {
  if (!request.is_object()) throw Error(ErrorCode::kInvalidArgument, "request must be an object");
  auto pid = request.find("point_id");
  if (pid == request.end() || !(pid->is_string() || pid->is_number_integer())) {
    throw Error(ErrorCode::kInvalidArgument, "point_id is required");
  }
  RawEvent raw;
  raw.point_id = pid->is_string() ? pid->get<std::string>() : pid->dump();
  if (auto k = request.find("kind"); k != request.end()) {
    const auto kind = k->is_string() ? parse_interaction_kind(k->get<std::string>()) : std::nullopt;
    if (!kind) throw Error(ErrorCode::kInvalidArgument, "kind must be \"click\" or \"hover\"");
    raw.kind = *kind;
  }
  if (auto d = request.find("dwell_ms"); d != request.end() && d->is_number()) raw.dwell_ms = d->get<double>();

  auto entry = find_session(session_id);
  std::lock_guard lock(entry->mutex);
  raw.timestep = entry->session.event_count() + 1;
  Session next = entry->session;
  next.observe(InteractionEvent{raw.point_id, raw.timestep, raw.kind, raw.dwell_ms});
  if (entry->spool_file) {
    std::ofstream out(*entry->spool_file, std::ios::app);
    write_session_log(out, SessionLog{session_id, {raw}, {}});
    out.flush();
    if (!out) throw Error(ErrorCode::kLoad, "cannot append to session spool", session_id);
  }
  entry->session = std::move(next);
  return {{"event_count", entry->session.event_count()}};
}

Session SessionService::snapshot(const std::string& session_id) const {
  auto entry = find_session(session_id);
  std::lock_guard lock(entry->mutex);
  return entry->session;
}

json SessionService::posterior(const std::string& session_id) const {
  return posterior_json(snapshot(session_id));
}

json SessionService::bias(const std::string& session_id) const { return bias_json(snapshot(session_id)); }

json SessionService::predictions(const std::string& session_id, std::optional<std::size_t> k,
                                 std::optional<bool> exclude_visited) const {
  auto entry = find_session(session_id);
  Session snap = [&] {
    std::lock_guard lock(entry->mutex);
    return entry->session;
  }();
  return predictions_json(snap, k.value_or(entry->config.k),
                          exclude_visited.value_or(entry->config.exclude_visited));
}

json SessionService::summary(const std::string& session_id) const {
  return summary_json(snapshot(session_id));
}

std::size_t SessionService::dataset_count() const {
  std::shared_lock lock(registry_mutex_);
  return datasets_.size();
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(registry_mutex_);
  return sessions_.size();
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, 200, fn(req));
    } catch (const Error& e) {
      reply(res, http_status(e.code()), error_json(e));
    } catch (const json::exception& e) {
      reply(res, 400, {{"code", "load_error"}, {"message", "malformed request body"}, {"detail", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"code", "internal_error"}, {"message", e.what()}, {"detail", ""}});
    }
  };
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) throw Error(ErrorCode::kInvalidArgument, "request body is empty");
  return json::parse(req.body);
}

std::optional<std::size_t> k_param(const httplib::Request& req) {
  if (!req.has_param("k")) return std::nullopt;
  const std::string v = req.get_param_value("k");
  std::size_t k = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), k);
  if (ec != std::errc() || ptr != v.data() + v.size() || k == 0) {
    throw Error(ErrorCode::kInvalidArgument, "k must be a positive integer", v);
  }
  return k;
}

std::optional<bool> flag_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be true or false", v);
}

}  // namespace

HttpServer::HttpServer(SessionService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  // The library default sets SO_REUSEPORT, which lets a second server bind
  // a port that is already serving.
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  s.Post("/datasets", guarded([this](const httplib::Request& req) {
           return service_.create_dataset(body_of(req));
         }));
  s.Post("/sessions", guarded([this](const httplib::Request& req) {
           return service_.create_session(body_of(req));
         }));
  s.Post(R"(/sessions/([^/]+)/events)", guarded([this](const httplib::Request& req) {
           return service_.post_event(req.matches[1], body_of(req));
         }));
  s.Get(R"(/sessions/([^/]+)/posterior)", guarded([this](const httplib::Request& req) {
          return service_.posterior(req.matches[1]);
        }));
  s.Get(R"(/sessions/([^/]+)/bias)", guarded([this](const httplib::Request& req) {
          return service_.bias(req.matches[1]);
        }));
  s.Get(R"(/sessions/([^/]+)/predictions)", guarded([this](const httplib::Request& req) {
          return service_.predictions(req.matches[1], k_param(req), flag_param(req, "exclude_visited"));
        }));
  s.Get(R"(/sessions/([^/]+)/summary)", guarded([this](const httplib::Request& req) {
          return service_.summary(req.matches[1]);
        }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw Error(ErrorCode::kInvalidArgument, "cannot bind an ephemeral port", host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot bind port", host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace biaslens
