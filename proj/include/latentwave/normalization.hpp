#pragma once

#include <cmath>
#include <string>

#include "latentwave/errors.hpp"

namespace latentwave {

/// Affine map of [min, max] onto [-1, 1].
struct Range {
  double min = 0.0;
  double max = 1.0;

  double to_unit(double v) const { return 2.0 * (v - min) / (max - min) - 1.0; }
  double from_unit(double u) const { return min + 0.5 * (u + 1.0) * (max - min); }
  bool contains(double v, double tol = 1e-12) const { return v >= min - tol && v <= max + tol; }
  bool operator==(const Range&) const = default;
};

struct NormalizationSpec {
  /// Largest |E| over the training volumes; fields are divided by it.
  double field_scale = 1.0;
  Range radius;
  Range index;
  Range time;

  bool operator==(const NormalizationSpec&) const = default;

  void validate() const {
    if (!(field_scale > 0) || !std::isfinite(field_scale)) throw ConfigError("field_scale: must be positive and finite");
    auto check = [](const Range& r, const char* key) {
      if (!(r.max > r.min) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
        throw ConfigError(std::string(key) + ": degenerate range");
      }
    };
    check(radius, "radius_range");
    check(index, "index_range");
    check(time, "time_range");
  }
};

}  // namespace latentwave
