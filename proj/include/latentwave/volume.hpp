#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "latentwave/errors.hpp"

namespace latentwave {

/// Grid extents along x, y, z. Linear index is x + nx * (y + ny * z).
struct GridDims {
  std::size_t nx = 0, ny = 0, nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
  bool operator==(const GridDims&) const = default;
  std::string str() const {
    return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
  }
};

/// One scalar field snapshot with its time stamp and sphere parameters.
struct FieldVolume {
  GridDims dims;
  std::vector<float> data;
  double voxel_size = 0.0;
  double time = 0.0;
  double radius = 0.0;
  double index = 1.0;

  FieldVolume() = default;
  explicit FieldVolume(GridDims d) : dims(d), data(d.count(), 0.0f) {}

  float& at(std::size_t x, std::size_t y, std::size_t z) { return data[dims.index(x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data[dims.index(x, y, z)]; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const FieldVolume&) const = default;
};

/// Centered sub-block of `dims`; the extra voxel of an odd margin is dropped
/// from the high end.
inline FieldVolume center_crop(const FieldVolume& v, GridDims dims) {
  if (dims.nx > v.dims.nx || dims.ny > v.dims.ny || dims.nz > v.dims.nz) {
    throw ShapeError("cannot crop " + v.dims.str() + " to " + dims.str());
  }
  const std::size_t ox = (v.dims.nx - dims.nx) / 2;
  const std::size_t oy = (v.dims.ny - dims.ny) / 2;
  const std::size_t oz = (v.dims.nz - dims.nz) / 2;
  FieldVolume out(dims);
  out.voxel_size = v.voxel_size;
  out.time = v.time;
  out.radius = v.radius;
  out.index = v.index;
  for (std::size_t z = 0; z < dims.nz; ++z)
    for (std::size_t y = 0; y < dims.ny; ++y)
      for (std::size_t x = 0; x < dims.nx; ++x) out.at(x, y, z) = v.at(x + ox, y + oy, z + oz);
  return out;
}

}  // namespace latentwave
