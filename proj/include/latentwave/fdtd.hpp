#pragma once

// Explicit leapfrog integration of the scalar wave equation
//   d2E/dt2 + 2 sigma dE/dt = (1/n^2) laplacian(E)
// on a cubic cell (c = 1, one length unit per source wavelength) holding a
// dielectric sphere, driven by a soft plane source normal to the x axis and
// terminated by a polynomial sponge layer inside Dirichlet-zero outer faces.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "latentwave/errors.hpp"
#include "latentwave/volume.hpp"

namespace latentwave {

enum class SourceWaveform {
  RampedSine,          ///< min(1, t/lambda) sin(2 pi t / lambda)
  Gaussian,            ///< exp(-((t - t0)/w)^2)
  GaussianDerivative,  ///< -((t - t0)/w) exp(-((t - t0)/w)^2)
  GaussianSine,        ///< exp(-((t - t0)/w)^2) sin(2 pi (t - t0) / lambda)
};

struct SimulationConfig {
  double cell_extent = 12.0;
  double resolution = 4.0;
  double boundary_width = 2.0;
  double source_position = -4.0;
  std::array<double, 3> source_size{0.0, 8.0, 8.0};
  double wavelength = 1.0;
  double sphere_radius = 2.0;
  double sphere_index = 1.5;
  /// Index outside the sphere; 1 is vacuum.
  double background_index = 1.0;
  double snapshot_interval = 0.125;
  double duration = 5.0;
  double courant_safety = 0.9;
  long rng_seed = 0;

  bool source_enabled = true;
  SourceWaveform waveform = SourceWaveform::RampedSine;
  double pulse_center = 1.5;
  double pulse_width = 0.5;
  /// The source contributes nothing after this time.
  double source_stop_time = std::numeric_limits<double>::infinity();

  /// Physical duration of one time unit in microseconds. Metadata only.
  double time_unit_us = 104.17;

  /// Full-resolution settings of the reference data set.
  static SimulationConfig paper_scale() {
    SimulationConfig c;
    c.resolution = 16.0;
    c.snapshot_interval = 0.03125;
    c.duration = 10.0;
    return c;
  }

  std::size_t points_per_axis() const {
    return static_cast<std::size_t>(std::llround(resolution * cell_extent)) + 1;
  }
  GridDims grid() const {
    const std::size_t n = points_per_axis();
    return {n, n, n};
  }
  double dx() const { return 1.0 / resolution; }
  std::size_t snapshot_count() const {
    return static_cast<std::size_t>(std::floor(duration / snapshot_interval + 1e-9)) + 1;
  }
  /// Coordinate of grid point i along any axis, relative to the cell center.
  double coord(std::size_t i) const { return static_cast<double>(i) * dx() - 0.5 * cell_extent; }
  std::size_t source_plane_index() const {
    return static_cast<std::size_t>(std::llround((source_position + 0.5 * cell_extent) * resolution));
  }
};

inline void validate(const SimulationConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  if (!(c.cell_extent > 0)) fail("cell_extent", "must be positive");
  if (!(c.resolution > 0)) fail("resolution", "must be positive");
  const double cells = c.resolution * c.cell_extent;
  if (std::abs(cells - std::round(cells)) > 1e-9) fail("resolution", "resolution * cell_extent must be an integer");
  if (!(c.boundary_width > 0) || !(2 * c.boundary_width < c.cell_extent)) {
    fail("boundary_width", "need 0 < 2 * boundary_width < cell_extent");
  }
  if (!(c.sphere_radius >= 0)) fail("sphere_radius", "must be non-negative");
  if (!(c.sphere_radius + c.boundary_width < 0.5 * c.cell_extent)) {
    fail("sphere_radius", "sphere overlaps the absorbing layer");
  }
  if (!(c.sphere_index >= 1)) fail("sphere_index", "must be >= 1");
  if (!(c.background_index >= 1)) fail("background_index", "must be >= 1");
  if (!(c.wavelength > 0)) fail("wavelength", "must be positive");
  if (!(std::abs(c.source_position) < 0.5 * c.cell_extent)) fail("source_position", "outside the cell");
  if (!(c.snapshot_interval > 0)) fail("snapshot_interval", "must be positive");
  if (!(c.duration >= 0)) fail("duration", "must be non-negative");
  if (!(c.courant_safety > 0 && c.courant_safety < 1)) fail("courant_safety", "must lie in (0, 1)");
  if (!(c.pulse_width > 0)) fail("pulse_width", "must be positive");
}

/// Dense 3D array of doubles over the simulation grid.
struct Grid3 {
  GridDims dims;
  std::vector<double> values;

  Grid3() = default;
  explicit Grid3(GridDims d, double fill = 0.0) : dims(d), values(d.count(), fill) {}
  double& at(std::size_t x, std::size_t y, std::size_t z) { return values[dims.index(x, y, z)]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return values[dims.index(x, y, z)]; }
};

/// (n / c)^2 per grid point.
struct MediumGrid {
  Grid3 inverse_speed_squared;
};

struct DampingGrid {
  Grid3 sigma;
  double sigma_max = 0.0;
};

struct FieldState {
  Grid3 e_curr;
  Grid3 e_prev;
  long step_index = 0;
  double dt = 0.0;

  double time() const { return static_cast<double>(step_index) * dt; }
};

inline MediumGrid build_medium(const SimulationConfig& c) {
  validate(c);
  MediumGrid m{Grid3(c.grid())};
  const GridDims d = m.inverse_speed_squared.dims;
  const double r2 = c.sphere_radius * c.sphere_radius;
  const double inside = c.sphere_index * c.sphere_index;
  const double outside = c.background_index * c.background_index;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double px = c.coord(x), py = c.coord(y), pz = c.coord(z);
        const double dist2 = px * px + py * py + pz * pz;
        m.inverse_speed_squared.at(x, y, z) = dist2 <= r2 + 1e-12 ? inside : outside;
      }
  return m;
}

/// Time step from the 3D Courant bound, never larger than the snapshot interval.
inline double courant_dt(const SimulationConfig& c) {
  const double dt = c.courant_safety * c.dx() / std::sqrt(3.0);
  return std::min(dt, c.snapshot_interval);
}

constexpr int kSpongeOrder = 3;
constexpr double kSpongeRoundTrip = 1e-3;

/// Peak damping for a normally incident wave to lose a factor
/// kSpongeRoundTrip over a round trip through the graded layer:
/// exp(-2 * integral(sigma)) = R with integral(sigma) = sigma_max W / (p + 1).
inline double sponge_sigma_max(double width) {
  return (kSpongeOrder + 1) * std::log(1.0 / kSpongeRoundTrip) / (2.0 * width);
}

inline DampingGrid sponge_profile(const SimulationConfig& c) {
  validate(c);
  DampingGrid g{Grid3(c.grid()), sponge_sigma_max(c.boundary_width)};
  const GridDims d = g.sigma.dims;
  const double w = c.boundary_width;
  std::vector<double> depth(d.nx);
  for (std::size_t i = 0; i < d.nx; ++i) {
    const double to_face = static_cast<double>(std::min(i, d.nx - 1 - i)) * c.dx();
    depth[i] = std::max(0.0, w - to_face);
  }
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double dd = std::max({depth[x], depth[y], depth[z]});
        g.sigma.at(x, y, z) = dd > 0 ? g.sigma_max * std::pow(dd / w, kSpongeOrder) : 0.0;
      }
  return g;
}

/// Ramped continuous-wave source value at time t.
inline double source_amplitude(double t, double wavelength) {
  const double ramp = std::min(1.0, t / wavelength);
  return ramp * std::sin(2.0 * std::numbers::pi * t / wavelength);
}

inline double source_value(const SimulationConfig& c, double t) {
  if (!c.source_enabled || t > c.source_stop_time) return 0.0;
  const double u = (t - c.pulse_center) / c.pulse_width;
  switch (c.waveform) {
    case SourceWaveform::RampedSine:
      return source_amplitude(t, c.wavelength);
    case SourceWaveform::Gaussian:
      return std::exp(-u * u);
    case SourceWaveform::GaussianDerivative:
      return -u * std::exp(-u * u);
    case SourceWaveform::GaussianSine:
      return std::exp(-u * u) * std::sin(2.0 * std::numbers::pi * (t - c.pulse_center) / c.wavelength);
  }
  return 0.0;
}

inline FieldState initial_state(const SimulationConfig& c) {
  FieldState s;
  s.e_curr = Grid3(c.grid());
  s.e_prev = Grid3(c.grid());
  s.dt = courant_dt(c);
  return s;
}

/// Voxels of the source plane, as linear indices.
inline std::vector<std::size_t> source_voxels(const SimulationConfig& c) {
  const GridDims d = c.grid();
  const std::size_t xs = c.source_plane_index();
  std::vector<std::size_t> out;
  const double hy = 0.5 * c.source_size[1] + 1e-9, hz = 0.5 * c.source_size[2] + 1e-9;
  for (std::size_t z = 1; z + 1 < d.nz; ++z)
    for (std::size_t y = 1; y + 1 < d.ny; ++y)
      if (std::abs(c.coord(y)) <= hy && std::abs(c.coord(z)) <= hz) out.push_back(d.index(xs, y, z));
  return out;
}

/// Advances `state` by one time step in place.
inline void advance(FieldState& state, const MediumGrid& medium, const DampingGrid& damping,
                    const SimulationConfig& c, const std::vector<std::size_t>& source) {
  const GridDims d = state.e_curr.dims;
  if (!(medium.inverse_speed_squared.dims == d) || !(damping.sigma.dims == d) || !(state.e_prev.dims == d)) {
    throw ShapeError("step: state, medium and damping grids differ in size");
  }
  const double dt = state.dt;
  const double inv_dx2 = c.resolution * c.resolution;
  const std::size_t sy = d.nx, sz = d.nx * d.ny;
  const double* e = state.e_curr.values.data();
  const double* inv = medium.inverse_speed_squared.values.data();
  const double* sig = damping.sigma.values.data();
  // The next field overwrites e_prev; each output reads e_prev only at its own index.
  double* ep = state.e_prev.values.data();
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t row = d.index(0, y, z);
      if (z == 0 || y == 0 || z + 1 == d.nz || y + 1 == d.ny) {
        std::fill(ep + row, ep + row + d.nx, 0.0);
        continue;
      }
      ep[row] = 0.0;
      ep[row + d.nx - 1] = 0.0;
      for (std::size_t x = 1; x + 1 < d.nx; ++x) {
        const std::size_t i = row + x;
        const double lap =
            (e[i - 1] + e[i + 1] + e[i - sy] + e[i + sy] + e[i - sz] + e[i + sz] - 6.0 * e[i]) * inv_dx2;
        const double sdt = sig[i] * dt;
        ep[i] = (2.0 * e[i] - (1.0 - sdt) * ep[i] + dt * dt / inv[i] * lap) / (1.0 + sdt);
      }
    }
  }
  std::swap(state.e_curr, state.e_prev);
  ++state.step_index;
  const double amp = source_value(c, state.time());
  if (amp != 0.0) {
    for (std::size_t i : source) state.e_curr.values[i] += amp;
  }
  for (double v : state.e_curr.values) {
    if (!std::isfinite(v)) throw InstabilityError(state.step_index);
  }
}

/// Pure one-step update.
inline FieldState step(const FieldState& state, const MediumGrid& medium, const DampingGrid& damping,
                       const SimulationConfig& c) {
  FieldState next = state;
  advance(next, medium, damping, c, source_voxels(c));
  return next;
}

/// Discrete energy conserved by the undamped, source-free scheme:
///   sum n^2 ((E+ - E)/dt)^2 + grad(E+) . grad(E)
/// evaluated between e_prev (E) and e_curr (E+). Damping can only lower it.
inline double field_energy(const FieldState& s, const MediumGrid& medium, const SimulationConfig& c) {
  const GridDims d = s.e_curr.dims;
  const double inv_dx2 = c.resolution * c.resolution;
  const auto& a = s.e_curr.values;
  const auto& b = s.e_prev.values;
  const auto& inv = medium.inverse_speed_squared.values;
  double kinetic = 0.0, potential = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = (a[i] - b[i]) / s.dt;
    kinetic += inv[i] * v * v;
  }
  const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const bool has_next[3] = {x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
        for (int ax = 0; ax < 3; ++ax) {
          if (!has_next[ax]) continue;
          const std::size_t j = i + stride[ax];
          potential += (a[j] - a[i]) * (b[j] - b[i]) * inv_dx2;
        }
      }
  return kinetic + potential;
}

inline FieldVolume to_volume(const Grid3& g, const SimulationConfig& c, double time) {
  FieldVolume v(g.dims);
  for (std::size_t i = 0; i < g.values.size(); ++i) v.data[i] = static_cast<float>(g.values[i]);
  v.voxel_size = c.dx();
  v.time = time;
  v.radius = c.sphere_radius;
  v.index = c.sphere_index;
  return v;
}

/// Streams every snapshot to `sink` in schedule order. Snapshot k holds the
/// state of the internal step nearest to k * snapshot_interval.
inline void run_simulation(const SimulationConfig& c, const std::function<void(FieldVolume&&)>& sink) {
  validate(c);
  const MediumGrid medium = build_medium(c);
  const DampingGrid damping = sponge_profile(c);
  const auto source = source_voxels(c);
  FieldState state = initial_state(c);
  const std::size_t count = c.snapshot_count();
  sink(to_volume(state.e_curr, c, 0.0));
  for (std::size_t k = 1; k < count; ++k) {
    const double target_time = static_cast<double>(k) * c.snapshot_interval;
    const long target_step = std::lround(target_time / state.dt);
    while (state.step_index < target_step) advance(state, medium, damping, c, source);
    sink(to_volume(state.e_curr, c, target_time));
  }
}

inline std::vector<FieldVolume> run_simulation(const SimulationConfig& c) {
  std::vector<FieldVolume> out;
  out.reserve(c.snapshot_count());
  run_simulation(c, [&](FieldVolume&& v) { out.push_back(std::move(v)); });
  return out;
}

}  // namespace latentwave
