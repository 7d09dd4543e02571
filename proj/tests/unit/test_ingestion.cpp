// Apache License, Version 2.0, refer to LICENSE.txt

#include <random>
#include <sstream>
#include <string>

#include <doctest.h>

#include "biaslens/error.hpp"
#include "biaslens/ingestion.hpp"
#include "biaslens/synthetic.hpp"

using namespace biaslens;
using nlohmann::json;

namespace {

json restaurant_doc() { return dataset_to_json(make_restaurant_dataset()); }

std::string load_error_detail(const json& doc) {
  try {
    parse_dataset(doc);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLoad);
    return std::string(e.what()) + " | " + e.detail();
  }
  FAIL("expected a load error");
  return {};
}

SessionLog hover_log(std::initializer_list<double> dwells) {
  SessionLog log;
  log.session_id = "h";
  std::int64_t t = 1;
  for (double d : dwells) {
    RawEvent ev;
    ev.point_id = "r" + std::to_string(1 + (t % 7));
    ev.kind = InteractionKind::kHover;
    ev.dwell_ms = d;
    ev.timestep = t++;
    log.events.push_back(ev);
  }
  return log;
}

}  // namespace

TEST_CASE("restaurant file loads with d=2 and seven points") {
  const Dataset ds = load_dataset(BIASLENS_DATA_DIR "/restaurants.json");
  CHECK(ds.group_count() == 2);
  CHECK(ds.size() == 7);
  CHECK(ds.continuous_dim() == 2);
  CHECK(ds.discrete_groups().size() == 1);
  CHECK(ds.category_population(0) == std::vector<std::int64_t>{2, 3, 2});
  CHECK(ds.find("r5").value() == 4);
  CHECK(ds.warnings().empty());
}

TEST_CASE("round trip through the document format") {
  const Dataset a = make_crime_like_dataset(5, 300);
  const Dataset b = parse_dataset(json::parse(dataset_to_json(a).dump()));
  CHECK(b.size() == a.size());
  CHECK((a.raw() - b.raw()).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.category(0, i) == b.category(0, i));
}

TEST_CASE("crime-shaped dataset has 1,951 points and d=2") {
  const Dataset ds = make_crime_like_dataset(2024);
  CHECK(ds.size() == 1951);
  CHECK(ds.group_count() == 2);
}

TEST_CASE("validation errors name the row and column") {
  json doc = restaurant_doc();
  doc["points"] = json::array();
  CHECK(load_error_detail(doc).find("empty dataset") != std::string::npos);

  doc = restaurant_doc();
  doc["points"][3]["values"]["type"] = "Thai";
  const std::string cat = load_error_detail(doc);
  CHECK(cat.find("Thai") != std::string::npos);
  CHECK(cat.find("row 3") != std::string::npos);
  CHECK(cat.find("type") != std::string::npos);

  doc = restaurant_doc();
  doc["points"][2]["id"] = "r1";
  CHECK(load_error_detail(doc).find("duplicate point id") != std::string::npos);

  doc = restaurant_doc();
  doc["points"][5]["values"].erase("lng");
  const std::string missing = load_error_detail(doc);
  CHECK(missing.find("missing column") != std::string::npos);
  CHECK(missing.find("lng") != std::string::npos);

  doc = restaurant_doc();
  doc["points"][1]["values"]["lat"] = "north";
  const std::string nonnum = load_error_detail(doc);
  CHECK(nonnum.find("non-numeric") != std::string::npos);
  CHECK(nonnum.find("row 1") != std::string::npos);

  doc = restaurant_doc();
  doc["schema"][1]["kind"] = "ordinal";
  load_error_detail(doc);

  doc = restaurant_doc();
  doc["schema"][1]["categories"] = {"Italian"};
  load_error_detail(doc);

  CHECK_THROWS_AS(load_dataset("/nonexistent/file.json"), Error);
}

TEST_CASE("numeric category labels are read as text") {
  json doc = {{"schema", {{{"name", "x"}, {"kind", "continuous"}, {"columns", {"x"}}},
                          {{"name", "grade"}, {"kind", "discrete"}, {"columns", {"grade"}}, {"categories", {1, 2}}}}},
              {"points", {{{"id", 1}, {"values", {{"x", 0.0}, {"grade", 1}}}},
                          {{"id", 2}, {"values", {{"x", 1.0}, {"grade", 2}}}}}}};
  const Dataset ds = parse_dataset(doc);
  CHECK(ds.group(1).categories == std::vector<std::string>{"1", "2"});
  CHECK(ds.find("2").value() == 1);
}

TEST_CASE("standardization uses the population sd and round-trips") {
  const Dataset ds = make_crime_like_dataset(8, 500);
  for (std::size_t c = 0; c < ds.continuous_dim(); ++c) {
    const auto row = ds.standardized().row(static_cast<Eigen::Index>(c));
    CHECK(row.mean() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(row.array().square().mean() == doctest::Approx(1.0).epsilon(1e-12));
    const ColumnScaling& sc = ds.scaling()[c];
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      const double raw = ds.raw()(static_cast<Eigen::Index>(c), j);
      CHECK(std::abs(sc.destandardize(sc.standardize(raw)) - raw) <= 1e-12);
    }
  }
}

TEST_CASE("zero-variance column standardizes with divisor 1 and warns") {
  json doc = restaurant_doc();
  for (auto& p : doc["points"]) p["values"]["lat"] = 0.5;
  const Dataset ds = parse_dataset(doc);
  CHECK(ds.scaling()[0].sd == 1.0);
  CHECK(ds.standardized()(0, 0) == 0.0);
  REQUIRE(ds.warnings().size() == 1);
  CHECK(ds.warnings()[0].find("lat") != std::string::npos);
}

TEST_CASE("interaction logs parse in file order and report bad lines") {
  std::istringstream in(
      "{\"point_id\": \"r3\", \"kind\": \"click\"}\n"
      "\n"
      "{\"point_id\": \"r5\", \"kind\": \"hover\", \"dwell_ms\": 1250, \"ts\": 1617200000}\n");
  const SessionLog log = parse_session_log(in, "s");
  REQUIRE(log.events.size() == 2);
  CHECK(log.events[0].point_id == "r3");
  CHECK(log.events[1].kind == InteractionKind::kHover);
  CHECK(log.events[1].dwell_ms.value() == 1250.0);
  CHECK(log.events[1].wall_clock == 1617200000);
  CHECK(log.events[1].timestep == 2);

  std::istringstream bad("{\"point_id\": \"r3\", \"kind\": \"click\"}\n{\"point_id\": \"r3\", \"kind\": \"tap\"}\n");
  try {
    parse_session_log(bad, "s");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.detail() == "line 2");
  }
  std::istringstream broken("not json\n");
  CHECK_THROWS_AS(parse_session_log(broken, "s"), Error);

  const SessionLog file = load_session_log(BIASLENS_DATA_DIR "/restaurant_clicks.jsonl");
  CHECK(file.session_id == "restaurant_clicks");
  CHECK(file.events.size() == 2);
}

TEST_CASE("hover filtering") {
  SUBCASE("dwells [400, 1500, 900, 2000, 1200, 3000] keep four events") {
    const auto out = filter_hovers(hover_log({400, 1500, 900, 2000, 1200, 3000}));
    REQUIRE(out.has_value());
    REQUIRE(out->events.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out->events[i].timestep == static_cast<std::int64_t>(i + 1));
    CHECK(out->events[0].dwell_ms.value() == 1500);
    CHECK(out->events[3].dwell_ms.value() == 3000);
  }
  SUBCASE("all short dwells drop the session") {
    CHECK_FALSE(filter_hovers(hover_log({400, 999, 10, 0})).has_value());
  }
  SUBCASE("three survivors are below the default minimum, kept when the minimum is 3") {
    const SessionLog log = hover_log({1000, 1500, 2000, 10});
    CHECK_FALSE(filter_hovers(log).has_value());
    CHECK(filter_hovers(log, {1000.0, 3}).has_value());
  }
  SUBCASE("click-only logs pass through unchanged") {
    const SessionLog log = load_session_log(BIASLENS_DATA_DIR "/restaurant_clicks.jsonl");
    const auto out = filter_hovers(log);
    REQUIRE(out.has_value());
    REQUIRE(out->events.size() == log.events.size());
    for (std::size_t i = 0; i < log.events.size(); ++i) CHECK(out->events[i].point_id == log.events[i].point_id);
  }
  SUBCASE("clicks survive among short hovers") {
    SessionLog log = hover_log({100, 2000, 100, 1500, 1800});
    log.events[0].kind = InteractionKind::kClick;
    log.events[0].dwell_ms.reset();
    const auto out = filter_hovers(log);
    REQUIRE(out.has_value());
    CHECK(out->events.size() == 4);
    CHECK(out->events[0].kind == InteractionKind::kClick);
  }
}

TEST_CASE("hover filtering is idempotent and renumbers order-preservingly") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dwell(0.0, 3000.0);
  std::bernoulli_distribution is_click(0.2);
  for (int trial = 0; trial < 200; ++trial) {
    SessionLog log;
    log.session_id = "p";
    const int n = 1 + trial % 15;
    for (int i = 0; i < n; ++i) {
      RawEvent ev;
      ev.point_id = "r" + std::to_string(1 + i % 7);
      ev.kind = is_click(rng) ? InteractionKind::kClick : InteractionKind::kHover;
      if (ev.kind == InteractionKind::kHover) ev.dwell_ms = dwell(rng);
      ev.wall_clock = i;
      ev.timestep = i + 1;
      log.events.push_back(ev);
    }
    const auto once = filter_hovers(log);
    if (!once) continue;
    const auto twice = filter_hovers(*once);
    REQUIRE(twice.has_value());
    REQUIRE(twice->events.size() == once->events.size());
    int last = -1;
    for (std::size_t i = 0; i < once->events.size(); ++i) {
      CHECK(once->events[i].timestep == static_cast<std::int64_t>(i + 1));
      CHECK(twice->events[i].wall_clock == once->events[i].wall_clock);
      const int original = once->events[i].wall_clock.get<int>();
      CHECK(original > last);
      last = original;
    }
  }
}

TEST_CASE("session log write/parse round trip") {
  const SessionLog log = load_session_log(BIASLENS_DATA_DIR "/restaurant_hovers.jsonl");
  std::stringstream buf;
  write_session_log(buf, log);
  const SessionLog back = parse_session_log(buf, log.session_id);
  REQUIRE(back.events.size() == log.events.size());
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    CHECK(back.events[i].point_id == log.events[i].point_id);
    CHECK(back.events[i].dwell_ms == log.events[i].dwell_ms);
    CHECK(back.events[i].wall_clock == log.events[i].wall_clock);
  }
}
