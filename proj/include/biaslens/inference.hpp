// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "biaslens/model_space.hpp"

namespace biaslens {

struct GroupBias {
  std::string name;
  double probability = 0.0;
};

struct BiasReport {
  std::int64_t event_count = 0;
  std::vector<GroupBias> groups;   // schema order
  std::vector<double> posterior;   // per model, enumeration order
  std::size_t map_model = 0;
};

// Posterior mass of the models that include `group`.
double attribute_bias(const Session& session, std::string_view group);
double attribute_bias(std::span<const double> posterior, std::span<const ModelSpec> models,
                      std::size_t group);
BiasReport bias_report(const Session& session);

struct ScoredPoint {
  std::size_t index = 0;
  std::string point_id;
  double probability = 0.0;
};

struct PredictionSet {
  std::int64_t event_count = 0;
  std::int64_t target_timestep = 0;
  std::size_t k = 0;
  bool exclude_visited = true;
  std::vector<ScoredPoint> items;  // non-increasing probability
};

// Model-averaged probability of every point being the next interaction.
std::vector<double> next_interaction_distribution(const Session& session);

// Top-k of next_interaction_distribution. Visited points are filtered before
// truncation when requested; ties go to the smaller point id. k larger than
// the candidate pool returns the whole pool.
PredictionSet predict_next(const Session& session, std::size_t k, bool exclude_visited = true);

struct ContinuousSummary {
  std::string name;
  std::vector<std::string> columns;
  double dof = 0.0;
  Vector location;     // raw units
  Matrix scale;        // raw units
  Vector sample_mean;  // raw units; empty with no events
  double time_location = 0.0;  // timestep units
  double time_scale = 0.0;
};

struct DiscreteSummary {
  std::string name;
  std::vector<std::string> categories;
  std::vector<double> probabilities;
  std::vector<std::int64_t> counts;
};

struct SessionSummary {
  std::int64_t event_count = 0;
  std::vector<ContinuousSummary> continuous;
  std::vector<DiscreteSummary> discrete;
};

// Posterior predictive of each attribute group under the statistics of every
// event so far, independent of which model is favoured. Continuous values are
// mapped back to raw units.
SessionSummary summarize(const Dataset& dataset, const SufficientStats& stats,
                         const NiwPrior& prior, double time_horizon);
SessionSummary summarize(const Session& session);

}  // namespace biaslens
