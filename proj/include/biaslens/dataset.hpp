// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "biaslens/core_math.hpp"

namespace biaslens {

enum class AttributeKind { kContinuous, kDiscrete };

// A named unit of exploration bias. Continuous groups may span several raw
// columns (latitude + longitude form one "location" group); discrete groups
// span exactly one column.
struct AttributeGroup {
  std::string name;
  AttributeKind kind = AttributeKind::kContinuous;
  std::vector<std::string> columns;
  std::vector<std::string> categories;  // discrete only, order is normative

  bool continuous() const { return kind == AttributeKind::kContinuous; }
};

using CellValue = std::variant<double, std::string>;

struct DataPoint {
  std::string id;
  std::map<std::string, CellValue, std::less<>> values;
};

struct ColumnScaling {
  double mean = 0.0;
  double sd = 1.0;  // 1 for zero-variance columns

  double standardize(double raw) const { return (raw - mean) / sd; }
  double destandardize(double z) const { return z * sd + mean; }
};

// The immutable point set a session explores, plus everything derived from
// it once at load time: standardized coordinates, category indices and the
// population of each category.
//
// Continuous coordinates are numbered in schema order (group by group, column
// by column). The time coordinate used by the models sits after them, at
// index continuous_dim().
class Dataset {
 public:
  // Validates and indexes; throws Error(kLoad) naming row and column.
  static Dataset build(std::vector<AttributeGroup> schema, std::vector<DataPoint> points);

  const std::vector<AttributeGroup>& schema() const { return schema_; }
  std::size_t group_count() const { return schema_.size(); }
  std::optional<std::size_t> group_index(std::string_view name) const;
  const AttributeGroup& group(std::size_t g) const { return schema_.at(g); }

  std::size_t size() const { return points_.size(); }
  const DataPoint& point(std::size_t i) const { return points_.at(i); }
  std::optional<std::size_t> find(std::string_view id) const;

  std::size_t continuous_dim() const { return scaling_.size(); }
  std::size_t time_coordinate() const { return scaling_.size(); }
  const std::vector<std::string>& continuous_columns() const { return continuous_columns_; }
  const std::vector<int>& group_coordinates(std::size_t g) const { return group_coords_.at(g); }
  const std::vector<ColumnScaling>& scaling() const { return scaling_; }

  // continuous_dim() x size(); column j holds point j.
  const Matrix& standardized() const { return standardized_; }
  const Matrix& raw() const { return raw_; }

  // Discrete groups are addressed by slot: their rank among discrete groups.
  const std::vector<std::size_t>& discrete_groups() const { return discrete_groups_; }
  std::optional<std::size_t> discrete_slot(std::size_t group) const;
  int category(std::size_t slot, std::size_t point) const { return categories_[slot][point]; }
  const std::vector<std::int64_t>& category_population(std::size_t slot) const {
    return populations_.at(slot);
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<AttributeGroup> schema_;
  std::vector<DataPoint> points_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> continuous_columns_;
  std::vector<std::vector<int>> group_coords_;
  std::vector<ColumnScaling> scaling_;
  Matrix standardized_;
  Matrix raw_;
  std::vector<std::size_t> discrete_groups_;
  std::vector<std::vector<int>> categories_;
  std::vector<std::vector<std::int64_t>> populations_;
  std::vector<std::string> warnings_;
};

}  // namespace biaslens
