// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "biaslens/error.hpp"

namespace biaslens {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view text, std::string_view clause) {
  const std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kInvalidArgument, "bad number in strategy", std::string(clause));
  }
  return v;
}

Focus parse_focus(std::string_view spec, bool raw, std::string_view clause) {
  Focus f;
  f.raw_units = raw;
  const auto parts = split(spec, ',');
  bool have_radius = false;
  for (std::string_view p : parts) {
    if (!p.empty() && p.front() == 'r') {
      if (have_radius) throw Error(ErrorCode::kInvalidArgument, "focus has two radii", std::string(clause));
      f.radius = parse_number(p.substr(1), clause);
      have_radius = true;
    } else {
      if (have_radius) throw Error(ErrorCode::kInvalidArgument, "radius must come last", std::string(clause));
      f.center.push_back(parse_number(p, clause));
    }
  }
  if (!have_radius || f.center.empty() || f.radius < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "focus needs a center and a non-negative radius rR",
                std::string(clause));
  }
  return f;
}

bool satisfies(const Dataset& dataset, const SyntheticStrategy& strategy, std::size_t point) {
  for (const auto& [name, focus] : strategy.focus) {
    const auto g = *dataset.group_index(name);
    const auto& coords = dataset.group_coordinates(g);
    const Matrix& m = focus.raw_units ? dataset.raw() : dataset.standardized();
    double d2 = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double diff = m(coords[i], static_cast<Eigen::Index>(point)) - focus.center[i];
      d2 += diff * diff;
    }
    if (std::sqrt(d2) > focus.radius + 1e-12) return false;
  }
  for (const auto& [name, target] : strategy.target_category) {
    const auto g = *dataset.group_index(name);
    const auto slot = *dataset.discrete_slot(g);
    const auto& cats = dataset.group(g).categories;
    if (cats[static_cast<std::size_t>(dataset.category(slot, point))] != target) return false;
  }
  return true;
}

}  // namespace

SyntheticStrategy parse_strategy(std::string_view text) {
  SyntheticStrategy s;
  bool saw_groups = false;
  for (std::string_view clause : split(text, ';')) {
    if (clause.empty()) continue;
    const auto eq = clause.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument, "strategy clause needs '='", std::string(clause));
    }
    const std::string_view key = trim(clause.substr(0, eq));
    const std::string_view value = trim(clause.substr(eq + 1));
    if (key == "groups") {
      saw_groups = true;
      if (value.empty() || value == "none") continue;
      for (std::string_view g : split(value, ',')) {
        if (g.empty()) throw Error(ErrorCode::kInvalidArgument, "empty group name", std::string(clause));
        s.biased_groups.emplace_back(g);
      }
    } else if (key.starts_with("category:")) {
      const std::string group(trim(key.substr(9)));
      if (group.empty() || value.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "category clause needs group and value", std::string(clause));
      }
      s.target_category[group] = std::string(value);
    } else if (key.starts_with("focus:")) {
      s.focus[std::string(trim(key.substr(6)))] = parse_focus(value, false, clause);
    } else if (key.starts_with("focus-raw:")) {
      s.focus[std::string(trim(key.substr(10)))] = parse_focus(value, true, clause);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown strategy clause", std::string(clause));
    }
  }
  if (!saw_groups) throw Error(ErrorCode::kInvalidArgument, "strategy needs a groups= clause");
  return s;
}

void validate_strategy(const Dataset& dataset, const SyntheticStrategy& strategy) {
  auto biased = [&](std::string_view name) {
    return std::find(strategy.biased_groups.begin(), strategy.biased_groups.end(), name) !=
           strategy.biased_groups.end();
  };
  for (const auto& name : strategy.biased_groups) {
    const auto g = dataset.group_index(name);
    if (!g) throw Error(ErrorCode::kInvalidArgument, "unknown group in strategy", name);
    const bool constrained = dataset.group(*g).continuous() ? strategy.focus.contains(name)
                                                            : strategy.target_category.contains(name);
    if (!constrained) throw Error(ErrorCode::kInvalidArgument, "biased group has no constraint", name);
  }
  for (const auto& [name, focus] : strategy.focus) {
    if (!biased(name)) throw Error(ErrorCode::kInvalidArgument, "focus on an unbiased group", name);
    const auto g = *dataset.group_index(name);
    if (!dataset.group(g).continuous()) {
      throw Error(ErrorCode::kInvalidArgument, "focus on a discrete group", name);
    }
    if (focus.center.size() != dataset.group_coordinates(g).size()) {
      throw Error(ErrorCode::kInvalidArgument, "focus center has the wrong dimension", name);
    }
  }
  for (const auto& [name, target] : strategy.target_category) {
    if (!biased(name)) throw Error(ErrorCode::kInvalidArgument, "category on an unbiased group", name);
    const auto g = *dataset.group_index(name);
    const auto& cats = dataset.group(g).categories;
    if (dataset.group(g).continuous()) {
      throw Error(ErrorCode::kInvalidArgument, "category on a continuous group", name);
    }
    if (std::find(cats.begin(), cats.end(), target) == cats.end()) {
      throw Error(ErrorCode::kInvalidArgument, "unknown target category", name + "=" + target);
    }
  }
}

std::uint32_t strategy_mask(const Dataset& dataset, const SyntheticStrategy& strategy) {
  std::uint32_t mask = 0;
  for (const auto& name : strategy.biased_groups) {
    const auto g = dataset.group_index(name);
    if (!g) throw Error(ErrorCode::kInvalidArgument, "unknown group in strategy", name);
    mask |= 1U << *g;
  }
  return mask;
}

std::vector<std::size_t> eligible_points(const Dataset& dataset, const SyntheticStrategy& strategy) {
  validate_strategy(dataset, strategy);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (satisfies(dataset, strategy, i)) out.push_back(i);
  }
  return out;
}

SessionLog generate_session(const Dataset& dataset, const SyntheticStrategy& strategy) {
  const std::vector<std::size_t> pool = eligible_points(dataset, strategy);
  if (pool.empty()) throw Error(ErrorCode::kInvalidArgument, "no point satisfies the strategy");
  std::mt19937_64 rng(strategy.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  SessionLog log;
  log.session_id = "synthetic-" + std::to_string(strategy.seed);
  log.provenance = "synthetic";
  for (std::size_t t = 0; t < strategy.click_count; ++t) {
    RawEvent ev;
    ev.point_id = dataset.point(pool[pick(rng)]).id;
    ev.kind = InteractionKind::kClick;
    ev.timestep = static_cast<std::int64_t>(t) + 1;
    log.events.push_back(std::move(ev));
  }
  return log;
}

Dataset make_restaurant_dataset() {
  struct Row {
    double lat, lng;
    const char* type;
  };
  static constexpr Row rows[] = {{0.35, 0.85, "Italian"}, {0.8, 0.35, "Mexican"}, {0.85, 0.1, "Persian"},
                                 {0.7, 0.3, "Italian"},   {0.15, 0.75, "Mexican"}, {0.1, 0.05, "Persian"},
                                 {0.9, 0.85, "Mexican"}};
  std::vector<AttributeGroup> schema = {
      {"location", AttributeKind::kContinuous, {"lat", "lng"}, {}},
      {"type", AttributeKind::kDiscrete, {"type"}, {"Italian", "Mexican", "Persian"}}};
  std::vector<DataPoint> points;
  for (std::size_t i = 0; i < std::size(rows); ++i) {
    DataPoint p;
    p.id = "r" + std::to_string(i + 1);
    p.values.emplace("lat", rows[i].lat);
    p.values.emplace("lng", rows[i].lng);
    p.values.emplace("type", std::string(rows[i].type));
    points.push_back(std::move(p));
  }
  return Dataset::build(std::move(schema), std::move(points));
}

Dataset make_crime_like_dataset(std::uint64_t seed, std::size_t n) {
  // Hot spots on a unit square plus a diffuse background.
  struct Cluster {
    double lat, lng, sd, weight;
  };
  static constexpr Cluster clusters[] = {{0.30, 0.35, 0.05, 0.25}, {0.65, 0.70, 0.06, 0.20},
                                         {0.75, 0.25, 0.04, 0.15}, {0.25, 0.80, 0.05, 0.10}};
  static constexpr double background = 0.30;
  static const std::vector<std::string> types = {"Theft", "Assault", "Burglary",
                                                 "Vandalism", "Robbery", "Fraud"};
  static constexpr double type_weights[] = {0.34, 0.20, 0.16, 0.13, 0.10, 0.07};

  std::mt19937_64 rng(seed);
  std::vector<double> cw;
  for (const auto& c : clusters) cw.push_back(c.weight);
  cw.push_back(background);
  std::discrete_distribution<std::size_t> which(cw.begin(), cw.end());
  std::discrete_distribution<std::size_t> type(std::begin(type_weights), std::end(type_weights));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<DataPoint> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = which(rng);
    double lat = 0.0;
    double lng = 0.0;
    if (c < std::size(clusters)) {
      lat = clusters[c].lat + clusters[c].sd * gauss(rng);
      lng = clusters[c].lng + clusters[c].sd * gauss(rng);
    } else {
      lat = unit(rng);
      lng = unit(rng);
    }
    DataPoint p;
    p.id = "c" + std::to_string(i + 1);
    p.values.emplace("lat", lat);
    p.values.emplace("lng", lng);
    p.values.emplace("type", types[type(rng)]);
    points.push_back(std::move(p));
  }
  std::vector<AttributeGroup> schema = {{"location", AttributeKind::kContinuous, {"lat", "lng"}, {}},
                                        {"type", AttributeKind::kDiscrete, {"type"}, types}};
  return Dataset::build(std::move(schema), std::move(points));
}

Dataset make_wide_dataset(std::uint64_t seed, std::size_t n) {
  static const std::vector<std::string> kinds = {"A", "B", "C", "D", "E"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cat(0, kinds.size() - 1);
  std::vector<AttributeGroup> schema;
  for (int c = 0; c < 6; ++c) {
    const std::string name = "x" + std::to_string(c + 1);
    schema.push_back({name, AttributeKind::kContinuous, {name}, {}});
  }
  schema.push_back({"kind", AttributeKind::kDiscrete, {"kind"}, kinds});
  std::vector<DataPoint> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DataPoint p;
    p.id = "w" + std::to_string(i + 1);
    for (int c = 0; c < 6; ++c) p.values.emplace("x" + std::to_string(c + 1), gauss(rng));
    p.values.emplace("kind", kinds[cat(rng)]);
    points.push_back(std::move(p));
  }
  return Dataset::build(std::move(schema), std::move(points));
}

}  // namespace biaslens
