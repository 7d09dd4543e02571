// Apache License, Version 2.0, refer to LICENSE.txt
//
// The competing-models space: one hypothesis per subset of attribute groups,
// each explaining an interaction stream with a Gaussian over its continuous
// coordinates (plus time) and a categorical per discrete group. All models
// read slices of one shared set of sufficient statistics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biaslens/core_math.hpp"
#include "biaslens/dataset.hpp"

namespace biaslens {

inline constexpr std::size_t kMaxGroups = 16;

struct ModelSpec {
  std::uint32_t mask = 0;                 // bit g <=> schema group g is included
  std::vector<int> continuous_slice;      // included continuous coords, then time
  std::vector<std::size_t> discrete_slots;

  bool includes(std::size_t group) const { return (mask >> group) & 1U; }
  std::size_t included_count() const;
  bool has_continuous() const { return !continuous_slice.empty(); }
};

// All 2^d subsets in ascending bitmask order. Throws Error(kTooLarge) for
// d > kMaxGroups. The time coordinate is appended to a model's slice only when
// it includes at least one continuous group; a time-only density is constant
// across points and normalizes to 1/|D|.
std::vector<ModelSpec> enumerate_models(const std::vector<AttributeGroup>& schema);

std::vector<std::string> model_group_names(const ModelSpec& model,
                                           const std::vector<AttributeGroup>& schema);

enum class PriorPolicy { kUniform, kSizePenalized };

// Normalized log prior. kSizePenalized weights a model by 1 / (|included| + 1).
std::vector<double> make_log_prior(std::span<const ModelSpec> models, PriorPolicy policy);

// When an event enters its own model's likelihood.
//   kInclusive:  fold the event into the statistics, then score it.
//   kSequential: score it against the statistics of the events before it.
enum class ScoringRule { kInclusive, kSequential };

std::string_view to_string(PriorPolicy p);
std::string_view to_string(ScoringRule r);
std::optional<PriorPolicy> parse_prior_policy(std::string_view text);
std::optional<ScoringRule> parse_scoring_rule(std::string_view text);

struct EngineConfig {
  PriorPolicy prior = PriorPolicy::kUniform;
  ScoringRule scoring = ScoringRule::kInclusive;
  double kappa0 = 5.0;
  double psi_scale = 3.0;
  double nu0_offset = 2.0;  // nu0 = (continuous dims + time) + offset
  double alpha = 0.01;      // symmetric Dirichlet pseudocount
  double time_horizon = 50.0;

  void validate() const;
};

// Prior over every continuous coordinate plus time, in standardized units.
NiwPrior make_niw_prior(const Dataset& dataset, const EngineConfig& config);

enum class InteractionKind { kClick, kHover };

struct InteractionEvent {
  std::string point_id;
  std::int64_t timestep = 0;  // 1-based position in the stream
  InteractionKind kind = InteractionKind::kClick;
  std::optional<double> dwell_ms;
};

// Standardized coordinates of a point followed by its time value.
Vector event_coordinates(const Dataset& dataset, std::size_t point, std::int64_t timestep,
                         double time_horizon);

struct SufficientStats {
  GaussianStats gaussian;
  std::vector<DirichletState> categorical;  // one per discrete slot
  std::vector<std::int64_t> visits;         // per point

  static SufficientStats empty(const Dataset& dataset, double alpha);

  std::int64_t events() const { return gaussian.n; }
  bool visited(std::size_t point) const { return visits.at(point) > 0; }
  void fold(const Dataset& dataset, std::size_t point, std::int64_t timestep,
            double time_horizon);
};

struct ModelBelief {
  std::vector<double> log_prior;
  std::vector<double> cumulative_log_likelihood;

  std::vector<double> posterior() const;
  std::size_t map_model() const;
};

// log p(x | M_i, stats, time) for every model i and every point x. Each row
// is a probability mass function over the dataset.
class LikelihoodTable {
 public:
  LikelihoodTable(std::size_t models, std::size_t points)
      : points_(points), values_(models * points) {}

  std::size_t model_count() const { return points_ == 0 ? 0 : values_.size() / points_; }
  std::size_t point_count() const { return points_; }
  double log_prob(std::size_t model, std::size_t point) const {
    return values_[model * points_ + point];
  }
  std::span<const double> row(std::size_t model) const {
    return {values_.data() + model * points_, points_};
  }
  std::span<double> row(std::size_t model) { return {values_.data() + model * points_, points_}; }

 private:
  std::size_t points_;
  std::vector<double> values_;
};

LikelihoodTable score_models(const Dataset& dataset, std::span<const ModelSpec> models,
                             const SufficientStats& stats, const NiwPrior& prior,
                             std::int64_t timestep, double time_horizon);

// Combined point likelihood of one model. The continuous factor is the
// Student-t predictive normalized over the dataset at the given time; each
// discrete factor is the categorical predictive shared among the points of
// that category. Their product is renormalized over the dataset so every
// model assigns a proper distribution to the next interaction.
double point_log_likelihood(const ModelSpec& model, const SufficientStats& stats,
                            const NiwPrior& prior, const Dataset& dataset, std::size_t point,
                            std::int64_t timestep, double time_horizon);

// One exploration session: the belief over the model space and the shared
// statistics, updated one event at a time. Copyable; a copy is a snapshot.
class Session {
 public:
  Session(std::shared_ptr<const Dataset> dataset, EngineConfig config);

  const Dataset& dataset() const { return *dataset_; }
  const std::shared_ptr<const Dataset>& dataset_ptr() const { return dataset_; }
  const EngineConfig& config() const { return config_; }
  const std::vector<ModelSpec>& models() const { return *models_; }
  const NiwPrior& niw_prior() const { return *niw_; }
  const ModelBelief& belief() const { return belief_; }
  const SufficientStats& stats() const { return stats_; }
  std::int64_t event_count() const { return stats_.events(); }

  // Throws Error(kSequencing) unless event.timestep == event_count() + 1 and
  // Error(kNotFound) for unknown points. The session is unchanged on error.
  void observe(const InteractionEvent& event);
  void observe(std::string_view point_id);
  void observe_index(std::size_t point);

  std::vector<double> posterior() const { return belief_.posterior(); }
  LikelihoodTable likelihood_at(std::int64_t timestep) const;

 private:
  std::shared_ptr<const Dataset> dataset_;
  EngineConfig config_;
  std::shared_ptr<const std::vector<ModelSpec>> models_;
  std::shared_ptr<const NiwPrior> niw_;
  ModelBelief belief_;
  SufficientStats stats_;
};

}  // namespace biaslens
