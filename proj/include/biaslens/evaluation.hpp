// Apache License, Version 2.0, refer to LICENSE.txt
//
// Offline evaluation: the attribute-distribution baseline (KS for continuous
// columns, chi-square for categories), session replay with top-k hit rates,
// and ground-truth recovery scoring for synthetic sessions.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "biaslens/dataset.hpp"
#include "biaslens/ingestion.hpp"
#include "biaslens/model_space.hpp"

namespace biaslens {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Kolmogorov survival function Q(lambda) = 2 sum_j (-1)^(j-1) exp(-2 j^2 lambda^2).
double kolmogorov_survival(double lambda);

// Two-sided two-sample KS test, asymptotic p-value with the effective-size
// correction lambda = (sqrt(en) + 0.12 + 0.11 / sqrt(en)) * D.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

// Pearson goodness-of-fit of observed counts against expected proportions.
ChiSquareResult chi_square_gof(std::span<const double> observed,
                               std::span<const double> expected_proportions);

// 1 - p of the group's test of the interacted points against the whole
// dataset. Groups spanning several columns take the product over columns.
double attribute_distribution_bias(const Dataset& dataset, std::span<const std::size_t> points,
                                   std::size_t group);

// Conjunction of per-group baseline scores.
double conjunction(std::span<const double> scores);

struct EvalConfig {
  EngineConfig engine;
  std::vector<std::size_t> k_grid{1, 5, 10, 20, 50};
  std::size_t warmup = 3;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

// Per-session replay record. Index t-1 holds the state after t events.
struct SessionTrace {
  std::string session_id;
  std::size_t events = 0;
  std::vector<std::vector<double>> bias;      // [t-1][group], ours
  std::vector<std::vector<double>> baseline;  // [t-1][group], attribute distribution
  std::vector<std::size_t> map_model;         // [t-1]
  // Whether event t+1 fell in the top-k after t events, t >= warmup.
  std::vector<std::vector<std::uint8_t>> hits_excluding;  // [prediction][k index]
  std::vector<std::vector<std::uint8_t>> hits_including;

  std::size_t predictions() const { return hits_excluding.size(); }
  double hit_rate(bool exclude_visited, std::size_t k_index) const;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> values);

struct EvalReport {
  std::vector<std::string> groups;
  std::vector<std::size_t> k_grid;
  std::size_t warmup = 0;
  std::string ks_variant = "asymptotic, effective-size corrected";
  std::vector<SessionTrace> sessions;

  // Aggregates over sessions long enough to reach each timestep.
  std::vector<std::vector<MeanSe>> bias_curve;      // [t-1][group]
  std::vector<std::vector<MeanSe>> baseline_curve;  // [t-1][group]
  std::vector<MeanSe> hit_rate_excluding;           // [k index]
  std::vector<MeanSe> hit_rate_including;

  // Recomputes every aggregate from `sessions`.
  void aggregate();

  nlohmann::json to_json() const;
  // One row per session x timestep x metric.
  void write_tsv(std::ostream& out) const;
};

SessionTrace replay_session(const std::shared_ptr<const Dataset>& dataset, const SessionLog& log,
                            const EvalConfig& config);

// Replays every log (in parallel) and aggregates. Output does not depend on
// the number of threads.
EvalReport replay_and_score(const std::shared_ptr<const Dataset>& dataset,
                            std::span<const SessionLog> logs, const EvalConfig& config);

// Posterior mass on models containing every group of `truth_mask`; for the
// empty truth, the mass of the empty model.
double truth_bias(std::span<const double> posterior, std::span<const ModelSpec> models,
                  std::uint32_t truth_mask);

struct RecoverySession {
  std::vector<double> truth_bias;        // [t-1]
  std::vector<std::uint32_t> map_mask;   // [t-1]
  std::int64_t clicks_to_threshold = -1; // first t with truth_bias >= threshold
};

struct RecoveryReport {
  std::uint32_t truth_mask = 0;
  double threshold = 0.9;
  std::vector<RecoverySession> sessions;

  // Share of sessions whose MAP model equals the truth after `click` events.
  double map_recovery_rate(std::size_t click) const;
  double mean_truth_bias(std::size_t click) const;
  // Mean first-crossing click; sessions that never cross count as length + 1.
  double mean_clicks_to_threshold() const;
};

RecoveryReport score_recovery(const std::shared_ptr<const Dataset>& dataset,
                              std::span<const SessionLog> logs, std::uint32_t truth_mask,
                              const EngineConfig& engine, double threshold = 0.9,
                              std::size_t threads = 0);

}  // namespace biaslens
