// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "biaslens/error.hpp"

namespace biaslens {
namespace {

std::string row_detail(std::size_t row, const std::string& id, const std::string& column) {
  std::string out = "row " + std::to_string(row);
  if (!id.empty()) out += " (id=" + id + ")";
  if (!column.empty()) out += ", column '" + column + "'";
  return out;
}

void validate_schema(const std::vector<AttributeGroup>& schema) {
  if (schema.empty()) throw Error(ErrorCode::kLoad, "schema declares no attribute groups");
  std::set<std::string, std::less<>> names;
  std::set<std::string, std::less<>> columns;
  for (const auto& g : schema) {
    if (g.name.empty()) throw Error(ErrorCode::kLoad, "attribute group without a name");
    if (!names.insert(g.name).second) {
      throw Error(ErrorCode::kLoad, "duplicate attribute group name", "group '" + g.name + "'");
    }
    if (g.columns.empty()) {
      throw Error(ErrorCode::kLoad, "attribute group spans no columns", "group '" + g.name + "'");
    }
    if (!g.continuous()) {
      if (g.columns.size() != 1) {
        throw Error(ErrorCode::kLoad, "discrete group must span exactly one column",
                    "group '" + g.name + "'");
      }
      if (g.categories.size() < 2) {
        throw Error(ErrorCode::kLoad, "discrete group needs at least two categories",
                    "group '" + g.name + "'");
      }
      std::set<std::string, std::less<>> cats(g.categories.begin(), g.categories.end());
      if (cats.size() != g.categories.size()) {
        throw Error(ErrorCode::kLoad, "duplicate category", "group '" + g.name + "'");
      }
    }
    for (const auto& c : g.columns) {
      if (!columns.insert(c).second) {
        throw Error(ErrorCode::kLoad, "column used by more than one group", "column '" + c + "'");
      }
    }
  }
}

}  // namespace

Dataset Dataset::build(std::vector<AttributeGroup> schema, std::vector<DataPoint> points) {
  validate_schema(schema);
  if (points.empty()) throw Error(ErrorCode::kLoad, "empty dataset");

  Dataset ds;
  ds.schema_ = std::move(schema);
  ds.points_ = std::move(points);
  const std::size_t n = ds.points_.size();

  ds.group_coords_.resize(ds.schema_.size());
  for (std::size_t g = 0; g < ds.schema_.size(); ++g) {
    const auto& grp = ds.schema_[g];
    if (grp.continuous()) {
      for (const auto& c : grp.columns) {
        ds.group_coords_[g].push_back(static_cast<int>(ds.continuous_columns_.size()));
        ds.continuous_columns_.push_back(c);
      }
    } else {
      ds.discrete_groups_.push_back(g);
    }
  }

  const auto cdim = static_cast<Eigen::Index>(ds.continuous_columns_.size());
  ds.raw_.resize(cdim, static_cast<Eigen::Index>(n));
  ds.categories_.assign(ds.discrete_groups_.size(), std::vector<int>(n, 0));
  ds.populations_.resize(ds.discrete_groups_.size());
  for (std::size_t s = 0; s < ds.discrete_groups_.size(); ++s) {
    ds.populations_[s].assign(ds.schema_[ds.discrete_groups_[s]].categories.size(), 0);
  }

  for (std::size_t row = 0; row < n; ++row) {
    const DataPoint& pt = ds.points_[row];
    if (pt.id.empty()) throw Error(ErrorCode::kLoad, "point without an id", row_detail(row, "", ""));
    if (!ds.index_.emplace(pt.id, row).second) {
      throw Error(ErrorCode::kLoad, "duplicate point id", row_detail(row, pt.id, ""));
    }
    Eigen::Index coord = 0;
    std::size_t slot = 0;
    for (const auto& grp : ds.schema_) {
      for (const auto& col : grp.columns) {
        auto it = pt.values.find(col);
        if (it == pt.values.end()) {
          throw Error(ErrorCode::kLoad, "missing column", row_detail(row, pt.id, col));
        }
        if (grp.continuous()) {
          const double* v = std::get_if<double>(&it->second);
          if (v == nullptr || !std::isfinite(*v)) {
            throw Error(ErrorCode::kLoad, "non-numeric continuous value",
                        row_detail(row, pt.id, col));
          }
          ds.raw_(coord++, static_cast<Eigen::Index>(row)) = *v;
        } else {
          const std::string* v = std::get_if<std::string>(&it->second);
          const auto& cats = grp.categories;
          auto pos = v == nullptr ? cats.end() : std::find(cats.begin(), cats.end(), *v);
          if (pos == cats.end()) {
            const std::string shown = v == nullptr ? "<number>" : *v;
            throw Error(ErrorCode::kLoad, "unknown category value '" + shown + "'",
                        row_detail(row, pt.id, col) + ", value '" + shown + "'");
          }
          const int k = static_cast<int>(pos - cats.begin());
          ds.categories_[slot][row] = k;
          ++ds.populations_[slot][static_cast<std::size_t>(k)];
          ++slot;
        }
      }
    }
  }

  ds.scaling_.resize(ds.continuous_columns_.size());
  ds.standardized_.resize(cdim, static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < cdim; ++c) {
    const double mean = ds.raw_.row(c).mean();
    const double var = (ds.raw_.row(c).array() - mean).square().mean();
    ColumnScaling sc{mean, std::sqrt(var)};
    if (!(sc.sd > 0.0)) {
      sc.sd = 1.0;
      ds.warnings_.push_back("column '" + ds.continuous_columns_[static_cast<std::size_t>(c)] +
                             "' has zero variance; standardized with divisor 1");
    }
    ds.scaling_[static_cast<std::size_t>(c)] = sc;
    ds.standardized_.row(c) = (ds.raw_.row(c).array() - sc.mean) / sc.sd;
  }
  return ds;
}

std::optional<std::size_t> Dataset::group_index(std::string_view name) const {
  for (std::size_t g = 0; g < schema_.size(); ++g) {
    if (schema_[g].name == name) return g;
  }
  return std::nullopt;
}

std::optional<std::size_t> Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Dataset::discrete_slot(std::size_t group) const {
  auto it = std::find(discrete_groups_.begin(), discrete_groups_.end(), group);
  if (it == discrete_groups_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - discrete_groups_.begin());
}

}  // namespace biaslens
