// Apache License, Version 2.0, refer to LICENSE.txt
//
// Synthetic sessions with a known ground truth, and the generated datasets
// the benchmarks run on.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biaslens/dataset.hpp"
#include "biaslens/ingestion.hpp"

namespace biaslens {

struct Focus {
  std::vector<double> center;
  double radius = 0.0;
  bool raw_units = false;  // default: standardized units
};

struct SyntheticStrategy {
  std::vector<std::string> biased_groups;  // empty = unbiased
  std::map<std::string, Focus, std::less<>> focus;
  std::map<std::string, std::string, std::less<>> target_category;
  std::size_t click_count = 20;
  std::uint64_t seed = 0;
};

// Mini-grammar, clauses separated by ';':
//   groups=location,type          biased groups (empty or "none" = unbiased)
//   category:type=Assault         target category of a discrete group
//   focus:location=0.5,0.5,r0.2   center and radius, standardized units
//   focus-raw:location=...        same, raw units
SyntheticStrategy parse_strategy(std::string_view text);

// Throws Error(kInvalidArgument) when groups are unknown, a biased group has
// no matching constraint, or a constraint names an unbiased group.
void validate_strategy(const Dataset& dataset, const SyntheticStrategy& strategy);

// Bitmask of the biased groups in schema order.
std::uint32_t strategy_mask(const Dataset& dataset, const SyntheticStrategy& strategy);

// Indices of the points satisfying every constraint.
std::vector<std::size_t> eligible_points(const Dataset& dataset, const SyntheticStrategy& strategy);

// click_count clicks drawn uniformly (with replacement) from the eligible
// points. Throws Error(kInvalidArgument) if no point is eligible.
SessionLog generate_session(const Dataset& dataset, const SyntheticStrategy& strategy);

// The seven-restaurant example: location (lat, lng) and type.
Dataset make_restaurant_dataset();

// Clustered locations with a skewed crime-type column; groups {location, type}.
Dataset make_crime_like_dataset(std::uint64_t seed, std::size_t n = 1951);

// Six single-column continuous groups plus one discrete group (2^7 models).
Dataset make_wide_dataset(std::uint64_t seed, std::size_t n = 1951);

}  // namespace biaslens
