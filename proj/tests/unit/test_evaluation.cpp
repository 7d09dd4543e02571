// Apache License, Version 2.0, refer to LICENSE.txt

#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <doctest.h>

#include "biaslens/error.hpp"
#include "biaslens/evaluation.hpp"
#include "biaslens/synthetic.hpp"

using namespace biaslens;
using nlohmann::json;

namespace {

std::vector<double> evenly(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

std::shared_ptr<const Dataset> restaurants() {
  static const auto ds = std::make_shared<const Dataset>(make_restaurant_dataset());
  return ds;
}

std::shared_ptr<const Dataset> crime() {
  static const auto ds = std::make_shared<const Dataset>(make_crime_like_dataset(2024));
  return ds;
}

std::vector<SessionLog> batch(const Dataset& ds, const std::string& strategy, std::size_t sessions,
                              std::size_t clicks, std::uint64_t seed) {
  SyntheticStrategy s = parse_strategy(strategy);
  s.click_count = clicks;
  std::vector<SessionLog> logs;
  for (std::size_t i = 0; i < sessions; ++i) {
    s.seed = seed + i;
    logs.push_back(generate_session(ds, s));
  }
  return logs;
}

}  // namespace

TEST_CASE("KS examples") {
  const auto a = evenly(0.0, 1.0, 100);
  const KsResult same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  const KsResult disjoint = ks_two_sample(evenly(0.0, 0.1, 30), evenly(0.9, 1.0, 30));
  CHECK(disjoint.statistic == 1.0);
  CHECK(disjoint.p_value < 1e-6);

  const KsResult half = ks_two_sample(a, evenly(0.0, 0.5, 100));
  CHECK(half.statistic == doctest::Approx(0.5));
  // Asymptotic p with the effective-size correction; the exact-distribution
  // value is 2.2e-11.
  CHECK(half.p_value > 1e-12);
  CHECK(half.p_value < 1e-10);

  CHECK_THROWS_AS(ks_two_sample(std::vector<double>{}, a), Error);
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.26999967));
}

TEST_CASE("chi-square examples") {
  const ChiSquareResult prop = chi_square_gof(std::vector<double>{20, 30, 50}, std::vector<double>{0.2, 0.3, 0.5});
  CHECK(prop.statistic == doctest::Approx(0.0));
  CHECK(prop.p_value == doctest::Approx(1.0));

  const ChiSquareResult skew =
      chi_square_gof(std::vector<double>{10, 0, 0}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(skew.statistic == doctest::Approx(20.0));
  CHECK(skew.dof == 2);
  CHECK(skew.p_value == doctest::Approx(std::exp(-10.0)).epsilon(1e-9));

  const ChiSquareResult even = chi_square_gof(std::vector<double>{5, 5}, std::vector<double>{0.5, 0.5});
  CHECK(even.statistic == 0.0);
  CHECK(even.p_value == 1.0);

  CHECK_THROWS_AS(chi_square_gof(std::vector<double>{1, 2}, std::vector<double>{1.0, 0.0}), Error);
  CHECK_THROWS_AS(chi_square_gof(std::vector<double>{0, 0}, std::vector<double>{0.5, 0.5}), Error);
}

TEST_CASE("KS and chi-square match the stored reference fixtures") {
  std::ifstream in(BIASLENS_FIXTURE_DIR "/stat_reference.json");
  REQUIRE(in.good());
  const json cases = json::parse(in).at("cases");
  REQUIRE(cases.size() == 50);
  for (const auto& c : cases) {
    if (c["kind"] == "ks") {
      const auto a = c["a"].get<std::vector<double>>();
      const auto b = c["b"].get<std::vector<double>>();
      const KsResult r = ks_two_sample(a, b);
      CHECK(std::abs(r.statistic - c["statistic"].get<double>()) <= 1e-12);
      CHECK(std::abs(r.p_value - c["p_value"].get<double>()) <= 1e-6);
      CHECK(r.p_value == doctest::Approx(c["p_value"].get<double>()).epsilon(1e-6));
    } else {
      const auto o = c["observed"].get<std::vector<double>>();
      const auto e = c["expected"].get<std::vector<double>>();
      const ChiSquareResult r = chi_square_gof(o, e);
      CHECK(r.statistic == doctest::Approx(c["statistic"].get<double>()).epsilon(1e-9));
      CHECK(r.dof == c["dof"].get<std::size_t>());
      CHECK(std::abs(r.p_value - c["p_value"].get<double>()) <= 1e-6);
      CHECK(r.p_value == doctest::Approx(c["p_value"].get<double>()).epsilon(1e-6));
    }
  }
}

TEST_CASE("attribute-distribution baseline") {
  const Dataset& ds = *crime();
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(attribute_distribution_bias(ds, all, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(attribute_distribution_bias(ds, all, 1) == doctest::Approx(0.0).epsilon(1e-12));

  // All interactions in one category (Robbery) of a six-category column.
  std::vector<std::size_t> robbery;
  for (std::size_t i = 0; i < ds.size() && robbery.size() < 40; ++i) {
    if (ds.category(0, i) == 4) robbery.push_back(i);
  }
  double last = -1.0;
  for (std::size_t n : {2u, 5u, 10u, 20u, 40u}) {
    const double score =
        attribute_distribution_bias(ds, std::span<const std::size_t>(robbery.data(), n), 1);
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);
    CHECK(score >= last);
    last = score;
  }
  CHECK(last > 0.999999);
  CHECK_THROWS_AS(attribute_distribution_bias(ds, std::vector<std::size_t>{}, 0), Error);
  CHECK(conjunction(std::vector<double>{0.9, 0.8}) == doctest::Approx(0.72));
}

TEST_CASE("baseline on a column with a single populated category") {
  std::vector<AttributeGroup> schema = {{"kind", AttributeKind::kDiscrete, {"kind"}, {"A", "B", "C"}}};
  std::vector<DataPoint> points(4);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].id = "p" + std::to_string(i);
    points[i].values.emplace("kind", std::string("B"));
  }
  const Dataset ds = Dataset::build(schema, points);
  CHECK(attribute_distribution_bias(ds, std::vector<std::size_t>{0, 2}, 0) == 0.0);
}

TEST_CASE("strategy grammar") {
  const SyntheticStrategy s =
      parse_strategy("groups=location,type;category:type=Assault;focus:location=0.5,0.5,r0.2");
  CHECK(s.biased_groups == std::vector<std::string>{"location", "type"});
  CHECK(s.target_category.at("type") == "Assault");
  const Focus& f = s.focus.at("location");
  CHECK(f.center == std::vector<double>{0.5, 0.5});
  CHECK(f.radius == 0.2);
  CHECK_FALSE(f.raw_units);
  CHECK(parse_strategy("groups=;").biased_groups.empty());
  CHECK(parse_strategy("groups=none").biased_groups.empty());
  CHECK(parse_strategy("groups=location;focus-raw:location=0.8,0.3,r0.1").focus.at("location").raw_units);
  CHECK_THROWS_AS(parse_strategy("category:type=Assault"), Error);
  CHECK_THROWS_AS(parse_strategy("groups=location;focus:location=0.5,0.5"), Error);
  CHECK_THROWS_AS(parse_strategy("groups=location;focus:location=a,0.5,r1"), Error);
  CHECK_THROWS_AS(parse_strategy("groups=location;zoom:location=1"), Error);

  const Dataset& ds = *crime();
  CHECK_THROWS_AS(validate_strategy(ds, parse_strategy("groups=location")), Error);
  CHECK_THROWS_AS(validate_strategy(ds, parse_strategy("groups=price;category:price=low")), Error);
  CHECK_THROWS_AS(validate_strategy(ds, parse_strategy("groups=type;category:type=Arson")), Error);
  CHECK_THROWS_AS(validate_strategy(ds, parse_strategy("groups=;category:type=Theft")), Error);
  CHECK_THROWS_AS(validate_strategy(ds, parse_strategy("groups=location;focus:location=0,0,0,r1")), Error);
  CHECK(strategy_mask(ds, s) == 0b11);
}

TEST_CASE("generated sessions satisfy their strategy") {
  const Dataset& rs = *restaurants();
  SyntheticStrategy mex = parse_strategy("groups=type;category:type=Mexican");
  mex.click_count = 40;
  mex.seed = 3;
  for (const auto& ev : generate_session(rs, mex).events) {
    CHECK(std::get<std::string>(rs.point(*rs.find(ev.point_id)).values.at("type")) == "Mexican");
  }

  SyntheticStrategy near = parse_strategy("groups=location;focus-raw:location=0.8,0.3,r0.1");
  near.click_count = 60;
  std::set<std::string> seen;
  for (const auto& ev : generate_session(rs, near).events) seen.insert(ev.point_id);
  // (0.8,0.35) at 0.05 and (0.7,0.3) at 0.1 qualify; (0.85,0.1) is 0.206 away.
  CHECK(seen == std::set<std::string>{"r2", "r4"});

  SyntheticStrategy none = parse_strategy("groups=location;focus-raw:location=5,5,r0.1");
  CHECK_THROWS_AS(generate_session(rs, none), Error);

  // Constraint check on a larger batch, standardized focus.
  const Dataset& ds = *crime();
  SyntheticStrategy mixed = parse_strategy("groups=location,type;focus:location=-0.5,-0.5,r0.6;category:type=Theft");
  const auto pool = eligible_points(ds, mixed);
  REQUIRE_FALSE(pool.empty());
  const std::set<std::size_t> allowed(pool.begin(), pool.end());
  for (const auto& log : batch(ds, "groups=location,type;focus:location=-0.5,-0.5,r0.6;category:type=Theft", 20, 20, 1)) {
    for (const auto& ev : log.events) {
      const std::size_t i = *ds.find(ev.point_id);
      CHECK(allowed.contains(i));
      CHECK(ds.category(0, i) == 0);
      const double dx = ds.standardized()(0, static_cast<Eigen::Index>(i)) + 0.5;
      const double dy = ds.standardized()(1, static_cast<Eigen::Index>(i)) + 0.5;
      CHECK(std::sqrt(dx * dx + dy * dy) <= 0.6 + 1e-12);
    }
  }
}

TEST_CASE("generation is deterministic under the seed") {
  const Dataset& ds = *crime();
  SyntheticStrategy u = parse_strategy("groups=");
  u.seed = 42;
  const SessionLog a = generate_session(ds, u);
  const SessionLog b = generate_session(ds, u);
  REQUIRE(a.events.size() == 20);
  for (std::size_t i = 0; i < a.events.size(); ++i) CHECK(a.events[i].point_id == b.events[i].point_id);
  u.seed = 43;
  const SessionLog c = generate_session(ds, u);
  bool differs = false;
  for (std::size_t i = 0; i < a.events.size(); ++i) differs |= a.events[i].point_id != c.events[i].point_id;
  CHECK(differs);
}

TEST_CASE("replay on a two-point dataset") {
  std::vector<AttributeGroup> schema = {{"x", AttributeKind::kContinuous, {"x"}, {}}};
  std::vector<DataPoint> points(2);
  points[0].id = "a";
  points[0].values.emplace("x", 0.0);
  points[1].id = "b";
  points[1].values.emplace("x", 1.0);
  const auto ds = std::make_shared<const Dataset>(Dataset::build(schema, points));
  SessionLog log;
  log.session_id = "alt";
  for (int t = 1; t <= 10; ++t) log.events.push_back({t % 2 ? "a" : "b", InteractionKind::kClick, {}, {}, t});
  EvalConfig cfg;
  cfg.k_grid = {1, 2};
  const SessionTrace tr = replay_session(ds, log, cfg);
  CHECK(tr.predictions() == 7);  // after events 3..9
  CHECK(tr.hit_rate(false, 1) == 1.0);
  CHECK(tr.hit_rate(false, 0) >= 0.0);
  CHECK(tr.hit_rate(false, 0) <= 1.0);
  // Excluding visited empties the pool once both points are seen.
  CHECK(tr.hit_rate(true, 1) == 0.0);
}

TEST_CASE("replay of a geo-biased batch") {
  const auto ds = crime();
  const auto logs = batch(*ds, "groups=location;focus:location=-0.9,-0.6,r0.5", 100, 20, 500);
  EvalConfig cfg;
  cfg.k_grid = {1, 5, 10, 20, 50};
  cfg.threads = 4;
  const EvalReport report = replay_and_score(ds, logs, cfg);
  REQUIRE(report.bias_curve.size() == 20);
  CHECK(report.bias_curve[19][0].mean > 0.9);
  CHECK(report.bias_curve[19][0].n == 100);

  for (const auto& s : report.sessions) {
    REQUIRE(s.predictions() == 17);
    for (bool excl : {true, false}) {
      for (std::size_t k = 1; k < cfg.k_grid.size(); ++k) CHECK(s.hit_rate(excl, k) >= s.hit_rate(excl, k - 1));
    }
    for (const auto& row : s.baseline) {
      for (double v : row) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  SUBCASE("aggregates recompute exactly from per-session rows") {
    EvalReport copy = report;
    copy.bias_curve.clear();
    copy.hit_rate_excluding.clear();
    copy.aggregate();
    for (std::size_t t = 0; t < report.bias_curve.size(); ++t) {
      for (std::size_t g = 0; g < 2; ++g) {
        CHECK(copy.bias_curve[t][g].mean == report.bias_curve[t][g].mean);
        CHECK(copy.baseline_curve[t][g].se == report.baseline_curve[t][g].se);
      }
    }
    double total = 0.0;
    for (const auto& s : report.sessions) total += s.hit_rate(true, 2);
    CHECK(report.hit_rate_excluding[2].mean == doctest::Approx(total / 100.0).epsilon(1e-14));
  }

  SUBCASE("thread count does not change the output") {
    EvalConfig serial = cfg;
    serial.threads = 1;
    const std::vector<SessionLog> few(logs.begin(), logs.begin() + 10);
    const EvalReport a = replay_and_score(ds, few, serial);
    const EvalReport b = replay_and_score(ds, few, cfg);
    CHECK(a.to_json().dump() == b.to_json().dump());
    std::ostringstream ta;
    std::ostringstream tb;
    a.write_tsv(ta);
    b.write_tsv(tb);
    CHECK(ta.str() == tb.str());
  }

  SUBCASE("serialized forms") {
    const json doc = report.to_json();
    CHECK(doc["sessions"].size() == 100);
    CHECK(doc["aggregate"]["hit_rate_excluding_visited"].size() == 5);
    std::ostringstream tsv;
    report.write_tsv(tsv);
    std::istringstream lines(tsv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "session\tt\tmetric\tkey\tvalue");
  }
}

TEST_CASE("replay rejects unknown points") {
  SessionLog log;
  log.session_id = "bad";
  log.events.push_back({"r1", InteractionKind::kClick, {}, {}, 1});
  log.events.push_back({"zz", InteractionKind::kClick, {}, {}, 2});
  CHECK_THROWS_AS(replay_session(restaurants(), log, EvalConfig{}), Error);
}

TEST_CASE("truth bias") {
  const auto models = enumerate_models(restaurants()->schema());
  const std::vector<double> post{0.1, 0.2, 0.3, 0.4};
  CHECK(truth_bias(post, models, 0b01) == doctest::Approx(0.6));
  CHECK(truth_bias(post, models, 0b11) == doctest::Approx(0.4));
  CHECK(truth_bias(post, models, 0) == doctest::Approx(0.1));
}
