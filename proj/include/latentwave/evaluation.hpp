#pragma once

// Surrogate quality measurements: per-simulation reconstruction error,
// latent and voxel traces with their dominant period, and run-time
// comparison against time stepping.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "latentwave/dataset.hpp"
#include "latentwave/fdtd.hpp"
#include "latentwave/io.hpp"
#include "latentwave/model.hpp"

namespace latentwave {

enum class EvalMode { Interpolation, Extrapolation };

inline const char* mode_name(EvalMode m) { return m == EvalMode::Interpolation ? "interpolation" : "extrapolation"; }

inline EvalMode parse_mode(const std::string& s) {
  if (s == "interp" || s == "interpolation") return EvalMode::Interpolation;
  if (s == "extrap" || s == "extrapolation") return EvalMode::Extrapolation;
  throw ConfigError("mode: expected interp or extrap, got '" + s + "'");
}

struct ErrorRow {
  double radius = 0.0;
  double index = 1.0;
  double mean_l1 = 0.0;
  std::vector<double> frame_l1;
  EvalMode mode = EvalMode::Interpolation;
};

struct ErrorReport {
  EvalMode mode = EvalMode::Interpolation;
  std::vector<ErrorRow> rows;
  GridDims dims;
  std::size_t latent_size = 0;
  std::uint64_t seed = 0;

  double mean() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.mean_l1;
    return s / static_cast<double>(rows.size());
  }
};

inline double mean_abs_difference(const FieldVolume& a, const FieldVolume& b) {
  if (!(a.dims == b.dims)) throw ShapeError("cannot compare " + a.dims.str() + " with " + b.dims.str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

/// Produces the normalized prediction for (r, n, t).
using Predictor = std::function<FieldVolume(const ParamPoint&)>;

/// Mean L1 between already-normalized truth frames and predictions at their
/// time stamps. Frames must share dims and have strictly increasing times.
inline ErrorRow reconstruction_error(const std::vector<FieldVolume>& truth, const Predictor& predict, double radius,
                                     double index) {
  if (truth.empty()) throw ConfigError("truth: no frames");
  ErrorRow row;
  row.radius = radius;
  row.index = index;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!(truth[k].dims == truth[0].dims)) throw ShapeError("truth frame " + std::to_string(k) + " has different dims");
    if (k > 0 && !(truth[k].time > truth[k - 1].time)) {
      throw ConfigError("truth: frame " + std::to_string(k) + " time " + format_number(truth[k].time) +
                        " breaks the snapshot schedule");
    }
    row.frame_l1.push_back(mean_abs_difference(truth[k], predict({radius, index, truth[k].time})));
  }
  row.mean_l1 = std::accumulate(row.frame_l1.begin(), row.frame_l1.end(), 0.0) / static_cast<double>(row.frame_l1.size());
  return row;
}

/// Crops and normalizes one simulation of a manifest the way training did.
inline std::vector<FieldVolume> load_truth(const DatasetManifest& m, std::size_t entry, GridDims dims, double field_scale) {
  std::vector<FieldVolume> out;
  for (std::size_t k = 0; k < m.entries.at(entry).frames.size(); ++k) {
    FieldVolume raw = read_volume(m.frame_path(entry, k));
    if (!(raw.dims == m.dims)) throw ShapeError(m.frame_path(entry, k).string() + ": dims differ from manifest");
    raw.time = m.entries[entry].frames[k].time;
    out.push_back(prepare_volume(raw, dims, field_scale));
  }
  return out;
}

template <class T>
Predictor model_predictor(const ModelParams<T>& model, const NormalizationSpec& norm) {
  return [&model, norm](const ParamPoint& p) { return reconstruct(model, p, norm); };
}

/// Strictly inside the training ranges in every parameter.
inline bool inside_training_hull(double radius, double index, const NormalizationSpec& norm) {
  return radius > norm.radius.min && radius < norm.radius.max && index > norm.index.min && index < norm.index.max;
}

/// Beyond at least one training bound.
inline bool outside_training_hull(double radius, double index, const NormalizationSpec& norm) {
  return radius < norm.radius.min || radius > norm.radius.max || index < norm.index.min || index > norm.index.max;
}

template <class T>
ErrorReport evaluate(const ModelParams<T>& model, const NormalizationSpec& norm, const DatasetManifest& truth, EvalMode mode) {
  ErrorReport rep;
  rep.mode = mode;
  rep.dims = model.spec.input_dims;
  rep.latent_size = model.spec.latent_size;
  rep.seed = model.rng_seed;
  for (const auto& e : truth.entries) {
    const bool ok = mode == EvalMode::Interpolation ? inside_training_hull(e.radius, e.index, norm)
                                                    : outside_training_hull(e.radius, e.index, norm);
    if (!ok) {
      throw ConfigError("point r=" + format_number(e.radius) + " n=" + format_number(e.index) +
                        (mode == EvalMode::Interpolation ? " is not strictly inside the training ranges"
                                                         : " lies within the training ranges"));
    }
  }
  const auto predict = model_predictor(model, norm);
  for (std::size_t i = 0; i < truth.entries.size(); ++i) {
    auto row = reconstruction_error(load_truth(truth, i, model.spec.input_dims, norm.field_scale), predict,
                                    truth.entries[i].radius, truth.entries[i].index);
    row.mode = mode;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

template <class T>
ErrorReport evaluate_interpolation(const ModelParams<T>& model, const NormalizationSpec& norm, const DatasetManifest& truth) {
  return evaluate(model, norm, truth, EvalMode::Interpolation);
}

template <class T>
ErrorReport evaluate_extrapolation(const ModelParams<T>& model, const NormalizationSpec& norm, const DatasetManifest& truth) {
  return evaluate(model, norm, truth, EvalMode::Extrapolation);
}

struct OrderingStatistic {
  double interpolation_mean = 0.0;
  double extrapolation_mean = 0.0;
  bool extrapolation_not_better() const { return extrapolation_mean >= interpolation_mean; }
};

inline OrderingStatistic ordering_statistic(const ErrorReport& interp, const ErrorReport& extrap) {
  return {interp.mean(), extrap.mean()};
}

inline void write_report_csv(const ErrorReport& rep, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.rows) {
    rows.push_back({format_number(r.radius), format_number(r.index), mode_name(r.mode), format_number(r.mean_l1),
                    std::to_string(r.frame_l1.size())});
  }
  write_csv(path, {"radius", "index", "mode", "mean_l1", "frames"}, rows);
}

inline std::string report_summary(const ErrorReport& rep) {
  std::string s = std::string(mode_name(rep.mode)) + " report, " + std::to_string(rep.rows.size()) + " simulations, dims " +
                  rep.dims.str() + ", latent " + std::to_string(rep.latent_size) + "\n";
  for (const auto& r : rep.rows) {
    s += "  r=" + format_number(r.radius) + " n=" + format_number(r.index) + " mean L1 " + format_number(r.mean_l1) + "\n";
  }
  s += "  overall mean L1 " + format_number(rep.mean()) + "\n";
  return s;
}

// ---------------------------------------------------------------- traces

struct TraceSeries {
  enum class Kind { LatentComponent, Voxel } kind = Kind::Voxel;
  std::size_t component = 0;
  std::size_t x = 0, y = 0, z = 0;
  std::vector<double> times;
  std::vector<double> values;

  /// Samples with time >= t0.
  TraceSeries from_time(double t0) const {
    TraceSeries out = *this;
    out.times.clear();
    out.values.clear();
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] >= t0 - 1e-9) {
        out.times.push_back(times[i]);
        out.values.push_back(values[i]);
      }
    return out;
  }
};

template <class T>
TraceSeries latent_trace(const ModelParams<T>& model, const std::vector<FieldVolume>& frames, std::size_t component) {
  if (component >= model.spec.latent_size) {
    throw ConfigError("component: " + std::to_string(component) + " outside latent size " +
                      std::to_string(model.spec.latent_size));
  }
  TraceSeries s;
  s.kind = TraceSeries::Kind::LatentComponent;
  s.component = component;
  for (const auto& f : frames) {
    s.times.push_back(f.time);
    s.values.push_back(encode(model, f).values[component]);
  }
  return s;
}

/// Every latent component at once, one encoder pass per frame.
template <class T>
std::vector<TraceSeries> latent_traces(const ModelParams<T>& model, const std::vector<FieldVolume>& frames) {
  std::vector<TraceSeries> out(model.spec.latent_size);
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].kind = TraceSeries::Kind::LatentComponent;
    out[c].component = c;
  }
  for (const auto& f : frames) {
    const auto code = encode(model, f);
    for (std::size_t c = 0; c < out.size(); ++c) {
      out[c].times.push_back(f.time);
      out[c].values.push_back(code.values[c]);
    }
  }
  return out;
}

inline TraceSeries voxel_trace(const std::vector<FieldVolume>& frames, std::size_t x, std::size_t y, std::size_t z) {
  TraceSeries s;
  s.kind = TraceSeries::Kind::Voxel;
  s.x = x;
  s.y = y;
  s.z = z;
  for (const auto& f : frames) {
    if (x >= f.dims.nx || y >= f.dims.ny || z >= f.dims.nz) {
      throw ConfigError("voxel (" + std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(z) +
                        ") outside " + f.dims.str());
    }
    s.times.push_back(f.time);
    s.values.push_back(f.at(x, y, z));
  }
  return s;
}

/// On-axis voxel midway between the source plane and the near sphere
/// surface, in the coordinates of a volume of `dims` center-cropped from the
/// simulation grid. Returns the voxel and the time the source ramp has fully
/// arrived there.
struct TraceVoxel {
  std::size_t x = 0, y = 0, z = 0;
  double steady_time = 0.0;
};

inline TraceVoxel default_trace_voxel(const SimulationConfig& c, GridDims dims) {
  const GridDims full = c.grid();
  const double xpos = 0.5 * (c.source_position - c.sphere_radius);
  const auto to_index = [&](double pos, std::size_t n_full, std::size_t n) {
    const long i = std::lround((pos + 0.5 * c.cell_extent) * c.resolution) - static_cast<long>((n_full - n) / 2);
    if (i < 0 || i >= static_cast<long>(n)) throw ConfigError("trace voxel falls outside the cropped volume");
    return static_cast<std::size_t>(i);
  };
  TraceVoxel v;
  v.x = to_index(xpos, full.nx, dims.nx);
  v.y = to_index(0.0, full.ny, dims.ny);
  v.z = to_index(0.0, full.nz, dims.nz);
  v.steady_time = (xpos - c.source_position) * c.background_index + c.wavelength;
  return v;
}

/// Period from the first local maximum of the mean-removed autocorrelation
/// after it first turns negative, refined by a parabola through the peak.
/// Requires uniform sampling and at least three periods in the window.
inline double dominant_period(const TraceSeries& s) {
  const std::size_t n = s.values.size();
  if (n < 8 || s.times.size() != n) throw NumericalError("no period: series has fewer than 8 samples");
  const double dt = (s.times.back() - s.times.front()) / static_cast<double>(n - 1);
  if (!(dt > 0)) throw NumericalError("no period: time stamps do not increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(s.times[i] - s.times[i - 1] - dt) > 1e-6 * dt + 1e-12) throw NumericalError("no period: non-uniform sampling");
  }
  const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(n);
  std::vector<double> x(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = s.values[i] - mean;
    energy += x[i] * x[i];
  }
  double peak = 0.0;
  for (double v : s.values) peak = std::max(peak, std::abs(v));
  if (!(energy > 1e-24 * static_cast<double>(n) * std::max(1.0, peak * peak))) throw NumericalError("no period: constant series");

  const std::size_t max_lag = n - 2;
  std::vector<double> ac(max_lag + 2, 0.0);
  for (std::size_t k = 0; k <= max_lag + 1 && k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += x[i] * x[i + k];
    ac[k] = acc / static_cast<double>(n - k) / (energy / static_cast<double>(n));
  }
  std::size_t k = 1;
  while (k <= max_lag && ac[k] >= 0) ++k;
  for (; k <= max_lag; ++k) {
    if (ac[k] > 0 && ac[k] >= ac[k - 1] && ac[k] > ac[k + 1]) break;
  }
  if (k > max_lag) throw NumericalError("no period: autocorrelation has no positive peak");
  if (3 * k > n - 1) throw NumericalError("no period: fewer than three cycles in the window");
  const double a = ac[k - 1], b = ac[k], c = ac[k + 1];
  const double denom = a - 2 * b + c;
  const double shift = denom < 0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
  return (static_cast<double>(k) + shift) * dt;
}

inline void write_trace_csv(const TraceSeries& s, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < s.values.size(); ++i) rows.push_back({format_number(s.times[i]), format_number(s.values[i])});
  write_csv(path, {"time", "value"}, rows);
}

// ---------------------------------------------------------------- timing

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct TimingReport {
  double fdtd_seconds_per_frame = 0.0;
  double surrogate_seconds_per_frame = 0.0;
  double surrogate_seconds_first = 0.0;
  double surrogate_seconds_last = 0.0;
  std::size_t repetitions = 0;

  double speedup() const { return fdtd_seconds_per_frame / surrogate_seconds_per_frame; }
  /// Reconstruct cost at the end of the run over the cost at the first snapshot.
  double fast_forward_ratio() const { return surrogate_seconds_last / surrogate_seconds_first; }
};

/// Medians over `repetitions` timed runs after one untimed warm-up of each.
/// FDTD cost is the wall time to advance one snapshot interval; surrogate
/// cost is one reconstruct call. Early- and late-time reconstructs alternate
/// so drift affects both equally.
template <class T>
TimingReport timing_comparison(const ModelParams<T>& model, const NormalizationSpec& norm, const SimulationConfig& c,
                               double radius, double index, std::size_t repetitions = 7) {
  if (repetitions < 5) throw ConfigError("repetitions: at least 5 required");
  SimulationConfig sc = c;
  sc.sphere_radius = radius;
  sc.sphere_index = index;
  validate(sc);
  const auto medium = build_medium(sc);
  const auto damping = sponge_profile(sc);
  auto state = initial_state(sc);
  const auto steps = static_cast<std::size_t>(std::llround(sc.snapshot_interval / state.dt));
  const auto src = source_voxels(sc);
  auto advance_interval = [&] {
    for (std::size_t i = 0; i < steps; ++i) advance(state, medium, damping, sc, src);
  };
  const double t_first = sc.snapshot_interval;
  const double t_last = sc.duration;
  advance_interval();
  reconstruct(model, {radius, index, t_first}, norm);
  reconstruct(model, {radius, index, t_last}, norm);

  std::vector<double> fdtd, first, last;
  for (std::size_t r = 0; r < repetitions; ++r) {
    fdtd.push_back(seconds(advance_interval));
    if (r % 2 == 0) {
      first.push_back(seconds([&] { reconstruct(model, {radius, index, t_first}, norm); }));
      last.push_back(seconds([&] { reconstruct(model, {radius, index, t_last}, norm); }));
    } else {
      last.push_back(seconds([&] { reconstruct(model, {radius, index, t_last}, norm); }));
      first.push_back(seconds([&] { reconstruct(model, {radius, index, t_first}, norm); }));
    }
  }
  TimingReport rep;
  rep.repetitions = repetitions;
  rep.fdtd_seconds_per_frame = median(fdtd);
  rep.surrogate_seconds_first = median(first);
  rep.surrogate_seconds_last = median(last);
  std::vector<double> all = first;
  all.insert(all.end(), last.begin(), last.end());
  rep.surrogate_seconds_per_frame = median(all);
  return rep;
}

}  // namespace latentwave
