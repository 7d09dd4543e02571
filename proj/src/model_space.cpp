// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/model_space.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "biaslens/error.hpp"

namespace biaslens {

std::size_t ModelSpec::included_count() const {
  return static_cast<std::size_t>(std::popcount(mask));
}

std::vector<ModelSpec> enumerate_models(const std::vector<AttributeGroup>& schema) {
  const std::size_t d = schema.size();
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "schema declares no attribute groups");
  if (d > kMaxGroups) {
    throw Error(ErrorCode::kTooLarge, "model space too large",
                "d=" + std::to_string(d) + ", limit " + std::to_string(kMaxGroups));
  }

  std::vector<std::vector<int>> coords(d);
  std::vector<std::size_t> slot(d, 0);
  int next_coord = 0;
  std::size_t next_slot = 0;
  for (std::size_t g = 0; g < d; ++g) {
    if (schema[g].continuous()) {
      for (std::size_t c = 0; c < schema[g].columns.size(); ++c) coords[g].push_back(next_coord++);
    } else {
      slot[g] = next_slot++;
    }
  }
  const int time_coord = next_coord;

  std::vector<ModelSpec> models(std::size_t{1} << d);
  for (std::uint32_t mask = 0; mask < models.size(); ++mask) {
    ModelSpec& m = models[mask];
    m.mask = mask;
    for (std::size_t g = 0; g < d; ++g) {
      if (!m.includes(g)) continue;
      if (schema[g].continuous()) {
        m.continuous_slice.insert(m.continuous_slice.end(), coords[g].begin(), coords[g].end());
      } else {
        m.discrete_slots.push_back(slot[g]);
      }
    }
    if (!m.continuous_slice.empty()) m.continuous_slice.push_back(time_coord);
  }
  return models;
}

std::vector<std::string> model_group_names(const ModelSpec& model,
                                           const std::vector<AttributeGroup>& schema) {
  std::vector<std::string> names;
  for (std::size_t g = 0; g < schema.size(); ++g) {
    if (model.includes(g)) names.push_back(schema[g].name);
  }
  return names;
}

std::vector<double> make_log_prior(std::span<const ModelSpec> models, PriorPolicy policy) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "no models to place a prior on");
  std::vector<double> logp(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    logp[i] = policy == PriorPolicy::kUniform
                  ? 0.0
                  : -std::log(static_cast<double>(models[i].included_count() + 1));
  }
  const double lse = log_sum_exp(logp);
  for (double& v : logp) v -= lse;
  return logp;
}

std::string_view to_string(PriorPolicy p) {
  return p == PriorPolicy::kUniform ? "uniform" : "size_penalized";
}

std::string_view to_string(ScoringRule r) {
  return r == ScoringRule::kInclusive ? "inclusive" : "sequential";
}

std::optional<PriorPolicy> parse_prior_policy(std::string_view text) {
  if (text == "uniform") return PriorPolicy::kUniform;
  if (text == "size_penalized" || text == "size-penalized") return PriorPolicy::kSizePenalized;
  return std::nullopt;
}

std::optional<ScoringRule> parse_scoring_rule(std::string_view text) {
  if (text == "inclusive") return ScoringRule::kInclusive;
  if (text == "sequential") return ScoringRule::kSequential;
  return std::nullopt;
}

void EngineConfig::validate() const {
  auto bad = [](const char* what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(kappa0 > 0.0)) bad("kappa0 must be positive");
  if (!(psi_scale > 0.0)) bad("psi_scale must be positive");
  if (!(nu0_offset > 1.0)) bad("nu0_offset must exceed 1");
  if (!(alpha > 0.0)) bad("alpha must be positive");
  if (!(time_horizon > 0.0)) bad("time_horizon must be positive");
}

NiwPrior make_niw_prior(const Dataset& dataset, const EngineConfig& config) {
  const std::size_t p_max = dataset.continuous_dim() + 1;
  NiwPrior prior = NiwPrior::isotropic(p_max, config.kappa0,
                                       static_cast<double>(p_max) + config.nu0_offset,
                                       config.psi_scale);
  prior.validate();
  return prior;
}

Vector event_coordinates(const Dataset& dataset, std::size_t point, std::int64_t timestep,
                         double time_horizon) {
  const auto c = static_cast<Eigen::Index>(dataset.continuous_dim());
  Vector x(c + 1);
  x.head(c) = dataset.standardized().col(static_cast<Eigen::Index>(point));
  x(c) = static_cast<double>(timestep) / time_horizon;
  return x;
}

SufficientStats SufficientStats::empty(const Dataset& dataset, double alpha) {
  SufficientStats s;
  s.gaussian = GaussianStats(dataset.continuous_dim() + 1);
  for (std::size_t g : dataset.discrete_groups()) {
    s.categorical.emplace_back(dataset.group(g).categories.size(), alpha);
  }
  s.visits.assign(dataset.size(), 0);
  return s;
}

void SufficientStats::fold(const Dataset& dataset, std::size_t point, std::int64_t timestep,
                           double time_horizon) {
  gaussian.add(event_coordinates(dataset, point, timestep, time_horizon));
  for (std::size_t s = 0; s < categorical.size(); ++s) {
    categorical[s].observe(static_cast<std::size_t>(dataset.category(s, point)));
  }
  ++visits.at(point);
}

std::vector<double> ModelBelief::posterior() const {
  std::vector<double> w(log_prior.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = log_prior[i] + cumulative_log_likelihood[i];
  exp_normalize(w);
  return w;
}

std::size_t ModelBelief::map_model() const {
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_prior.size(); ++i) {
    const double v = log_prior[i] + cumulative_log_likelihood[i];
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

namespace {

// Continuous factor for one slice: Student-t log density of every point at
// the given time, normalized over the dataset.
std::vector<double> continuous_log_pmf(const Matrix& coords_at_time, const NiwPrior& prior,
                                       const SufficientStats& stats,
                                       std::span<const int> slice) {
  const auto p = static_cast<Eigen::Index>(slice.size());
  Matrix block(p, coords_at_time.cols());
  for (Eigen::Index r = 0; r < p; ++r) block.row(r) = coords_at_time.row(slice[r]);
  const StudentTDensity density(niw_posterior(prior, stats.gaussian, slice));
  std::vector<double> out(static_cast<std::size_t>(coords_at_time.cols()));
  density.log_pdf_columns(block, out);
  const double lse = log_sum_exp(out);
  for (double& v : out) v -= lse;
  return out;
}

// Discrete factor for one slot: log of predictive(category) / population.
std::vector<double> discrete_log_pmf(const Dataset& dataset, const SufficientStats& stats,
                                     std::size_t slot) {
  const auto& state = stats.categorical[slot];
  const auto& pop = dataset.category_population(slot);
  std::vector<double> per_category(state.size());
  for (std::size_t k = 0; k < state.size(); ++k) {
    per_category[k] = pop[k] == 0 ? -std::numeric_limits<double>::infinity()
                                  : std::log(categorical_predictive(state, k)) -
                                        std::log(static_cast<double>(pop[k]));
  }
  std::vector<double> out(dataset.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = per_category[static_cast<std::size_t>(dataset.category(slot, j))];
  }
  return out;
}

std::uint32_t continuous_mask(const ModelSpec& m, const Dataset& dataset) {
  std::uint32_t cm = 0;
  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    if (m.includes(g) && dataset.group(g).continuous()) cm |= (1U << g);
  }
  return cm;
}

Matrix coordinates_at(const Dataset& dataset, std::int64_t timestep, double time_horizon) {
  const auto c = static_cast<Eigen::Index>(dataset.continuous_dim());
  Matrix coords(c + 1, static_cast<Eigen::Index>(dataset.size()));
  coords.topRows(c) = dataset.standardized();
  coords.row(c).setConstant(static_cast<double>(timestep) / time_horizon);
  return coords;
}

void fill_model_row(std::span<double> row, const ModelSpec& m,
                    const std::vector<double>* continuous,
                    const std::vector<std::vector<double>>& discrete, double uniform) {
  const std::size_t factors = (continuous ? 1 : 0) + m.discrete_slots.size();
  for (std::size_t j = 0; j < row.size(); ++j) {
    double v = continuous ? (*continuous)[j] : 0.0;
    for (std::size_t s : m.discrete_slots) v += discrete[s][j];
    row[j] = factors == 0 ? uniform : v;
  }
  // A single factor is already a pmf over the dataset; a product is not.
  if (factors > 1) {
    const double lse = log_sum_exp(row);
    for (double& v : row) v -= lse;
  }
}

}  // namespace

LikelihoodTable score_models(const Dataset& dataset, std::span<const ModelSpec> models,
                             const SufficientStats& stats, const NiwPrior& prior,
                             std::int64_t timestep, double time_horizon) {
  const std::size_t n = dataset.size();
  LikelihoodTable table(models.size(), n);
  const Matrix coords = coordinates_at(dataset, timestep, time_horizon);

  std::vector<std::vector<double>> discrete(stats.categorical.size());
  for (std::size_t s = 0; s < discrete.size(); ++s) discrete[s] = discrete_log_pmf(dataset, stats, s);

  std::unordered_map<std::uint32_t, std::vector<double>> continuous;
  const double uniform = std::log(1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ModelSpec& m = models[i];
    const std::vector<double>* cont = nullptr;
    if (m.has_continuous()) {
      const std::uint32_t key = continuous_mask(m, dataset);
      auto it = continuous.find(key);
      if (it == continuous.end()) {
        it = continuous.emplace(key, continuous_log_pmf(coords, prior, stats, m.continuous_slice))
                 .first;
      }
      cont = &it->second;
    }
    fill_model_row(table.row(i), m, cont, discrete, uniform);
  }
  return table;
}

double point_log_likelihood(const ModelSpec& model, const SufficientStats& stats,
                            const NiwPrior& prior, const Dataset& dataset, std::size_t point,
                            std::int64_t timestep, double time_horizon) {
  if (point >= dataset.size()) throw Error(ErrorCode::kNotFound, "point not in dataset");
  const LikelihoodTable table =
      score_models(dataset, std::span<const ModelSpec>(&model, 1), stats, prior, timestep,
                   time_horizon);
  return table.log_prob(0, point);
}

Session::Session(std::shared_ptr<const Dataset> dataset, EngineConfig config)
    : dataset_(std::move(dataset)), config_(config) {
  if (!dataset_) throw Error(ErrorCode::kInvalidArgument, "session needs a dataset");
  config_.validate();
  models_ = std::make_shared<const std::vector<ModelSpec>>(enumerate_models(dataset_->schema()));
  niw_ = std::make_shared<const NiwPrior>(make_niw_prior(*dataset_, config_));
  belief_.log_prior = make_log_prior(*models_, config_.prior);
  belief_.cumulative_log_likelihood.assign(models_->size(), 0.0);
  stats_ = SufficientStats::empty(*dataset_, config_.alpha);
}

void Session::observe(const InteractionEvent& event) {
  if (event.timestep != event_count() + 1) {
    throw Error(ErrorCode::kSequencing, "out-of-order timestep",
                "expected " + std::to_string(event_count() + 1) + ", got " +
                    std::to_string(event.timestep));
  }
  const auto point = dataset_->find(event.point_id);
  if (!point) throw Error(ErrorCode::kNotFound, "unknown point", "point_id=" + event.point_id);
  observe_index(*point);
}

void Session::observe(std::string_view point_id) {
  const auto point = dataset_->find(point_id);
  if (!point) {
    throw Error(ErrorCode::kNotFound, "unknown point", "point_id=" + std::string(point_id));
  }
  observe_index(*point);
}

void Session::observe_index(std::size_t point) {
  if (point >= dataset_->size()) throw Error(ErrorCode::kNotFound, "point not in dataset");
  const std::int64_t t = event_count() + 1;
  SufficientStats next = stats_;
  next.fold(*dataset_, point, t, config_.time_horizon);
  const SufficientStats& scored_against =
      config_.scoring == ScoringRule::kInclusive ? next : stats_;
  const LikelihoodTable table =
      score_models(*dataset_, *models_, scored_against, *niw_, t, config_.time_horizon);

  std::vector<double> cumulative = belief_.cumulative_log_likelihood;
  for (std::size_t i = 0; i < cumulative.size(); ++i) cumulative[i] += table.log_prob(i, point);
  // The empty model ignores the data; keep its total in closed form so it
  // carries no accumulated rounding.
  const double uniform = std::log(1.0 / static_cast<double>(dataset_->size()));
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    if ((*models_)[i].mask == 0) cumulative[i] = static_cast<double>(t) * uniform;
  }
  belief_.cumulative_log_likelihood = std::move(cumulative);
  stats_ = std::move(next);
}

LikelihoodTable Session::likelihood_at(std::int64_t timestep) const {
  return score_models(*dataset_, *models_, stats_, *niw_, timestep, config_.time_horizon);
}

}  // namespace biaslens
