// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <ostream>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "biaslens/error.hpp"
#include "biaslens/inference.hpp"

namespace biaslens {

using nlohmann::json;

namespace {

// Runs fn(i) for i in [0, n) on a small pool. Results must be written by
// index; the first failing index (lowest) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> column_values(const Dataset& dataset, int coord,
                                  std::span<const std::size_t> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (std::size_t p : points) out.push_back(dataset.raw()(coord, static_cast<Eigen::Index>(p)));
  return out;
}

json mean_se_json(const MeanSe& m) { return {{"mean", m.mean}, {"se", m.se}, {"n", m.n}}; }

}  // namespace

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // Theta-function form of the CDF converges fast for small lambda.
    const double w = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double k = 2.0 * j - 1.0;
      const double term = std::exp(-k * k * w);
      cdf += term;
      if (term < 1e-17 * cdf) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-17 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kInvalidArgument, "KS test needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  const double en = std::sqrt(n1 * n2 / (n1 + n2));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  return {d, kolmogorov_survival(lambda)};
}

ChiSquareResult chi_square_gof(std::span<const double> observed,
                               std::span<const double> expected_proportions) {
  if (observed.size() != expected_proportions.size() || observed.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "chi-square needs matching vectors of at least 2 cells");
  }
  double n = 0.0;
  double mass = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (observed[k] < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative observed count");
    if (!(expected_proportions[k] > 0.0)) {
      throw Error(ErrorCode::kDegenerate, "zero expected cell", "cell " + std::to_string(k));
    }
    n += observed[k];
    mass += expected_proportions[k];
  }
  if (!(n > 0.0)) throw Error(ErrorCode::kInvalidArgument, "chi-square needs at least one observation");
  if (std::abs(mass - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "expected proportions must sum to 1");
  }
  ChiSquareResult r;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double e = n * expected_proportions[k];
    r.statistic += (observed[k] - e) * (observed[k] - e) / e;
  }
  r.dof = observed.size() - 1;
  r.p_value = boost::math::gamma_q(static_cast<double>(r.dof) / 2.0, r.statistic / 2.0);
  return r;
}

double conjunction(std::span<const double> scores) {
  double out = 1.0;
  for (double s : scores) out *= s;
  return out;
}

double attribute_distribution_bias(const Dataset& dataset, std::span<const std::size_t> points,
                                   std::size_t group) {
  if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "no interactions to test");
  const AttributeGroup& grp = dataset.group(group);
  if (grp.continuous()) {
    std::vector<double> scores;
    for (int c : dataset.group_coordinates(group)) {
      const auto row = dataset.raw().row(c);
      const std::vector<double> all(row.begin(), row.end());
      const std::vector<double> seen = column_values(dataset, c, points);
      scores.push_back(1.0 - ks_two_sample(seen, all).p_value);
    }
    return conjunction(scores);
  }
  const std::size_t slot = *dataset.discrete_slot(group);
  const auto& population = dataset.category_population(slot);
  std::vector<double> counts(population.size(), 0.0);
  for (std::size_t p : points) counts[static_cast<std::size_t>(dataset.category(slot, p))] += 1.0;
  std::vector<double> observed;
  std::vector<double> expected;
  for (std::size_t k = 0; k < population.size(); ++k) {
    if (population[k] == 0) continue;
    observed.push_back(counts[k]);
    expected.push_back(static_cast<double>(population[k]) / static_cast<double>(dataset.size()));
  }
  // One populated category: any selection matches the dataset.
  if (observed.size() < 2) return 0.0;
  return 1.0 - chi_square_gof(observed, expected).p_value;
}

double SessionTrace::hit_rate(bool exclude_visited, std::size_t k_index) const {
  const auto& hits = exclude_visited ? hits_excluding : hits_including;
  if (hits.empty()) return 0.0;
  double total = 0.0;
  for (const auto& h : hits) total += h.at(k_index);
  return total / static_cast<double>(hits.size());
}

MeanSe mean_se(std::span<const double> values) {
  MeanSe out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
  }
  return out;
}

void EvalReport::aggregate() {
  std::size_t longest = 0;
  for (const auto& s : sessions) longest = std::max(longest, s.events);
  bias_curve.assign(longest, {});
  baseline_curve.assign(longest, {});
  for (std::size_t t = 0; t < longest; ++t) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      std::vector<double> ours;
      std::vector<double> theirs;
      for (const auto& s : sessions) {
        if (s.events <= t) continue;
        ours.push_back(s.bias[t][g]);
        theirs.push_back(s.baseline[t][g]);
      }
      bias_curve[t].push_back(mean_se(ours));
      baseline_curve[t].push_back(mean_se(theirs));
    }
  }
  hit_rate_excluding.clear();
  hit_rate_including.clear();
  for (std::size_t k = 0; k < k_grid.size(); ++k) {
    std::vector<double> excl;
    std::vector<double> incl;
    for (const auto& s : sessions) {
      if (s.predictions() == 0) continue;
      excl.push_back(s.hit_rate(true, k));
      incl.push_back(s.hit_rate(false, k));
    }
    hit_rate_excluding.push_back(mean_se(excl));
    hit_rate_including.push_back(mean_se(incl));
  }
}

json EvalReport::to_json() const {
  json doc;
  doc["groups"] = groups;
  doc["k_grid"] = k_grid;
  doc["warmup"] = warmup;
  doc["ks_variant"] = ks_variant;
  json per_session = json::array();
  for (const auto& s : sessions) {
    json hx = json::array();
    json hi = json::array();
    for (std::size_t k = 0; k < k_grid.size(); ++k) {
      hx.push_back(s.predictions() ? json(s.hit_rate(true, k)) : json(nullptr));
      hi.push_back(s.predictions() ? json(s.hit_rate(false, k)) : json(nullptr));
    }
    per_session.push_back({{"session_id", s.session_id},
                           {"events", s.events},
                           {"predictions", s.predictions()},
                           {"bias", s.bias},
                           {"baseline", s.baseline},
                           {"map_model", s.map_model},
                           {"hit_rate_excluding_visited", hx},
                           {"hit_rate_including_visited", hi}});
  }
  doc["sessions"] = std::move(per_session);

  auto curve = [](const std::vector<std::vector<MeanSe>>& c) {
    json out = json::array();
    for (const auto& row : c) {
      json r = json::array();
      for (const auto& m : row) r.push_back(mean_se_json(m));
      out.push_back(std::move(r));
    }
    return out;
  };
  auto hits = [&](const std::vector<MeanSe>& h) {
    json out = json::array();
    for (std::size_t k = 0; k < h.size(); ++k) {
      json m = mean_se_json(h[k]);
      m["k"] = k_grid[k];
      out.push_back(std::move(m));
    }
    return out;
  };
  doc["aggregate"] = {{"bias", curve(bias_curve)},
                      {"baseline", curve(baseline_curve)},
                      {"hit_rate_excluding_visited", hits(hit_rate_excluding)},
                      {"hit_rate_including_visited", hits(hit_rate_including)}};
  return doc;
}

void EvalReport::write_tsv(std::ostream& out) const {
  out << "session\tt\tmetric\tkey\tvalue\n";
  for (const auto& s : sessions) {
    for (std::size_t t = 0; t < s.events; ++t) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        out << s.session_id << '\t' << t + 1 << "\tbias\t" << groups[g] << '\t' << s.bias[t][g] << '\n';
        out << s.session_id << '\t' << t + 1 << "\tbaseline\t" << groups[g] << '\t'
            << s.baseline[t][g] << '\n';
      }
    }
    if (s.predictions() == 0) continue;
    for (std::size_t k = 0; k < k_grid.size(); ++k) {
      out << s.session_id << "\t-\thit_rate_excluding_visited\tk=" << k_grid[k] << '\t'
          << s.hit_rate(true, k) << '\n';
      out << s.session_id << "\t-\thit_rate_including_visited\tk=" << k_grid[k] << '\t'
          << s.hit_rate(false, k) << '\n';
    }
  }
}

SessionTrace replay_session(const std::shared_ptr<const Dataset>& dataset, const SessionLog& log,
                            const EvalConfig& config) {
  const Dataset& ds = *dataset;
  const std::vector<InteractionEvent> events = to_interactions(log);
  std::vector<std::size_t> indices;
  indices.reserve(events.size());
  for (const auto& ev : events) {
    const auto idx = ds.find(ev.point_id);
    if (!idx) throw Error(ErrorCode::kNotFound, "unknown point id", log.session_id + ": " + ev.point_id);
    indices.push_back(*idx);
  }
  const std::size_t k_max =
      config.k_grid.empty() ? 0 : *std::max_element(config.k_grid.begin(), config.k_grid.end());

  SessionTrace trace;
  trace.session_id = log.session_id;
  trace.events = events.size();
  Session session(dataset, config.engine);
  for (std::size_t t = 0; t < events.size(); ++t) {
    session.observe(events[t]);
    const std::vector<double> post = session.posterior();
    const std::span<const std::size_t> seen(indices.data(), t + 1);
    std::vector<double> ours;
    std::vector<double> theirs;
    for (std::size_t g = 0; g < ds.group_count(); ++g) {
      ours.push_back(attribute_bias(post, session.models(), g));
      theirs.push_back(attribute_distribution_bias(ds, seen, g));
    }
    trace.bias.push_back(std::move(ours));
    trace.baseline.push_back(std::move(theirs));
    trace.map_model.push_back(session.belief().map_model());

    const std::size_t done = t + 1;
    if (k_max == 0 || done < config.warmup || done >= events.size()) continue;
    const std::size_t target = indices[done];
    for (bool exclude : {true, false}) {
      const PredictionSet pred = predict_next(session, k_max, exclude);
      std::size_t rank = std::numeric_limits<std::size_t>::max();
      for (std::size_t r = 0; r < pred.items.size(); ++r) {
        if (pred.items[r].index == target) {
          rank = r;
          break;
        }
      }
      std::vector<std::uint8_t> hits;
      for (std::size_t k : config.k_grid) hits.push_back(rank < k ? 1 : 0);
      (exclude ? trace.hits_excluding : trace.hits_including).push_back(std::move(hits));
    }
  }
  return trace;
}

EvalReport replay_and_score(const std::shared_ptr<const Dataset>& dataset,
                            std::span<const SessionLog> logs, const EvalConfig& config) {
  config.engine.validate();
  for (std::size_t k : config.k_grid) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k values must be at least 1");
  }
  EvalReport report;
  for (const auto& g : dataset->schema()) report.groups.push_back(g.name);
  report.k_grid = config.k_grid;
  report.warmup = config.warmup;
  report.sessions.resize(logs.size());
  parallel_for(logs.size(), config.threads,
               [&](std::size_t i) { report.sessions[i] = replay_session(dataset, logs[i], config); });
  report.aggregate();
  return report;
}

double truth_bias(std::span<const double> posterior, std::span<const ModelSpec> models,
                  std::uint32_t truth_mask) {
  double total = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const bool hit = truth_mask == 0 ? models[i].mask == 0 : (models[i].mask & truth_mask) == truth_mask;
    if (hit) total += posterior[i];
  }
  return total;
}

double RecoveryReport::map_recovery_rate(std::size_t click) const {
  if (sessions.empty() || click == 0) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : sessions) {
    if (s.map_mask.size() >= click && s.map_mask[click - 1] == truth_mask) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sessions.size());
}

double RecoveryReport::mean_truth_bias(std::size_t click) const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : sessions) {
    if (click == 0 || s.truth_bias.size() < click) continue;
    total += s.truth_bias[click - 1];
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double RecoveryReport::mean_clicks_to_threshold() const {
  if (sessions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : sessions) {
    total += s.clicks_to_threshold > 0 ? static_cast<double>(s.clicks_to_threshold)
                                       : static_cast<double>(s.truth_bias.size() + 1);
  }
  return total / static_cast<double>(sessions.size());
}

RecoveryReport score_recovery(const std::shared_ptr<const Dataset>& dataset,
                              std::span<const SessionLog> logs, std::uint32_t truth_mask,
                              const EngineConfig& engine, double threshold, std::size_t threads) {
  RecoveryReport report;
  report.truth_mask = truth_mask;
  report.threshold = threshold;
  report.sessions.resize(logs.size());
  parallel_for(logs.size(), threads, [&](std::size_t i) {
    Session session(dataset, engine);
    RecoverySession& out = report.sessions[i];
    for (const InteractionEvent& ev : to_interactions(logs[i])) {
      session.observe(ev);
      const double tb = truth_bias(session.posterior(), session.models(), truth_mask);
      out.truth_bias.push_back(tb);
      out.map_mask.push_back(session.models()[session.belief().map_model()].mask);
      if (out.clicks_to_threshold < 0 && tb >= threshold) {
        out.clicks_to_threshold = static_cast<std::int64_t>(out.truth_bias.size());
      }
    }
  });
  return report;
}

}  // namespace biaslens
