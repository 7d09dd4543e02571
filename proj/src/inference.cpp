// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/inference.hpp"

#include <algorithm>
#include <cmath>

#include "biaslens/error.hpp"

namespace biaslens {

double attribute_bias(std::span<const double> posterior, std::span<const ModelSpec> models,
                      std::size_t group) {
  double total = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].includes(group)) total += posterior[i];
  }
  return total;
}

double attribute_bias(const Session& session, std::string_view group) {
  const auto g = session.dataset().group_index(group);
  if (!g) throw Error(ErrorCode::kNotFound, "unknown attribute group", std::string(group));
  return attribute_bias(session.posterior(), session.models(), *g);
}

BiasReport bias_report(const Session& session) {
  BiasReport report;
  report.event_count = session.event_count();
  report.posterior = session.posterior();
  report.map_model = session.belief().map_model();
  const auto& schema = session.dataset().schema();
  for (std::size_t g = 0; g < schema.size(); ++g) {
    report.groups.push_back({schema[g].name, attribute_bias(report.posterior, session.models(), g)});
  }
  return report;
}

std::vector<double> next_interaction_distribution(const Session& session) {
  const std::int64_t target = session.event_count() + 1;
  const LikelihoodTable table = session.likelihood_at(target);
  const std::vector<double> posterior = session.posterior();
  std::vector<double> scores(session.dataset().size(), 0.0);
  for (std::size_t i = 0; i < posterior.size(); ++i) {
    if (posterior[i] == 0.0) continue;
    const auto row = table.row(i);
    for (std::size_t j = 0; j < scores.size(); ++j) scores[j] += posterior[i] * std::exp(row[j]);
  }
  return scores;
}

PredictionSet predict_next(const Session& session, std::size_t k, bool exclude_visited) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  const Dataset& ds = session.dataset();
  const std::vector<double> scores = next_interaction_distribution(session);

  std::vector<std::size_t> candidates;
  candidates.reserve(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    if (exclude_visited && session.stats().visited(j)) continue;
    candidates.push_back(j);
  }
  const std::size_t take = std::min(k, candidates.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ds.point(a).id < ds.point(b).id;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);

  PredictionSet out;
  out.event_count = session.event_count();
  out.target_timestep = session.event_count() + 1;
  out.k = k;
  out.exclude_visited = exclude_visited;
  out.items.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t j = candidates[r];
    out.items.push_back({j, ds.point(j).id, scores[j]});
  }
  return out;
}

SessionSummary summarize(const Dataset& dataset, const SufficientStats& stats,
                         const NiwPrior& prior, double time_horizon) {
  SessionSummary summary;
  summary.event_count = stats.events();
  const int time_coord = static_cast<int>(dataset.time_coordinate());
  const StudentTParams time_pred = niw_posterior(prior, stats.gaussian, std::vector<int>{time_coord});

  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    const AttributeGroup& grp = dataset.group(g);
    if (!grp.continuous()) continue;
    const auto& coords = dataset.group_coordinates(g);
    const StudentTParams pred = niw_posterior(prior, stats.gaussian, coords);

    ContinuousSummary cs;
    cs.name = grp.name;
    cs.columns = grp.columns;
    cs.dof = pred.dof;
    const auto p = static_cast<Eigen::Index>(coords.size());
    Vector sd(p);
    Vector mean(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const ColumnScaling& sc = dataset.scaling()[static_cast<std::size_t>(coords[i])];
      sd(i) = sc.sd;
      mean(i) = sc.mean;
    }
    cs.location = mean + sd.cwiseProduct(pred.location);
    cs.scale = sd.asDiagonal() * pred.scale * sd.asDiagonal();
    if (stats.events() > 0) {
      const Vector z = stats.gaussian.slice(coords).mean();
      cs.sample_mean = mean + sd.cwiseProduct(z);
    }
    cs.time_location = time_pred.location(0) * time_horizon;
    cs.time_scale = time_pred.scale(0, 0) * time_horizon * time_horizon;
    summary.continuous.push_back(std::move(cs));
  }

  for (std::size_t s = 0; s < dataset.discrete_groups().size(); ++s) {
    const AttributeGroup& grp = dataset.group(dataset.discrete_groups()[s]);
    DiscreteSummary d;
    d.name = grp.name;
    d.categories = grp.categories;
    d.counts = stats.categorical[s].counts;
    for (std::size_t k = 0; k < grp.categories.size(); ++k) {
      d.probabilities.push_back(categorical_predictive(stats.categorical[s], k));
    }
    summary.discrete.push_back(std::move(d));
  }
  return summary;
}

SessionSummary summarize(const Session& session) {
  return summarize(session.dataset(), session.stats(), session.niw_prior(),
                   session.config().time_horizon);
}

}  // namespace biaslens
