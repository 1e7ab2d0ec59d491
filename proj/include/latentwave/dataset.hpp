#pragma once

// Simulation data sets on disk, their normalization, a bounded volume cache
// and precomputed latent codes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <list>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "latentwave/fdtd.hpp"
#include "latentwave/io.hpp"
#include "latentwave/model.hpp"
#include "latentwave/normalization.hpp"

namespace latentwave {

struct FrameRecord {
  std::string file;  ///< relative to the manifest directory
  double time = 0.0;
};

struct SimulationEntry {
  double radius = 0.0;
  double index = 1.0;
  std::string directory;  ///< relative to the manifest directory
  std::vector<FrameRecord> frames;
};

struct DatasetManifest {
  /// Directory that relative paths resolve against.
  std::filesystem::path root;
  GridDims dims;
  SimulationConfig base_config;
  std::vector<SimulationEntry> entries;
  std::optional<NormalizationSpec> normalization;

  std::size_t frames_per_simulation() const { return entries.empty() ? 0 : entries.front().frames.size(); }
  std::size_t frame_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.frames.size();
    return n;
  }
  std::filesystem::path frame_path(std::size_t entry, std::size_t frame) const {
    return root / entries.at(entry).directory / entries.at(entry).frames.at(frame).file;
  }

  void validate() const {
    if (entries.empty()) throw ConfigError("entries: manifest has no simulations");
    std::set<std::pair<double, double>> seen;
    for (const auto& e : entries) {
      if (!seen.insert({e.radius, e.index}).second) {
        throw ConfigError("entries: duplicate parameter point r=" + format_number(e.radius) + " n=" + format_number(e.index));
      }
      if (e.frames.size() != entries.front().frames.size()) throw ConfigError("entries: simulations differ in frame count");
      for (std::size_t k = 0; k < e.frames.size(); ++k) {
        if (std::abs(e.frames[k].time - entries.front().frames[k].time) > 1e-9) {
          throw ConfigError("entries: simulations differ in snapshot schedule");
        }
      }
    }
  }
};

/// (r, n) pairs from either {"radii": [...], "indices": [...]} (full product,
/// radius-major) or {"points": [[r, n], ...]}.
inline std::vector<std::pair<double, double>> param_grid_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"radii", "indices", "points"}, "parameter grid");
  std::vector<std::pair<double, double>> out;
  if (j.contains("points")) {
    if (j.contains("radii") || j.contains("indices")) throw ConfigError("points: cannot be combined with radii/indices");
    for (const auto& p : j["points"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError("points: each point must be [r, n]");
      }
      out.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  } else {
    const auto radii = detail::json_get<std::vector<double>>(j, "radii");
    const auto indices = detail::json_get<std::vector<double>>(j, "indices");
    for (double r : radii)
      for (double n : indices) out.emplace_back(r, n);
  }
  if (out.empty()) throw ConfigError("parameter grid: no points");
  return out;
}

inline Json to_json(const DatasetManifest& m) {
  Json j;
  j["version"] = 1;
  j["grid_dims"] = to_json(m.dims);
  j["simulation_config"] = to_json(m.base_config);
  if (m.normalization) j["normalization"] = to_json(*m.normalization);
  Json entries = Json::array();
  for (const auto& e : m.entries) {
    Json je;
    je["radius"] = e.radius;
    je["index"] = e.index;
    je["directory"] = e.directory;
    Json frames = Json::array();
    for (const auto& f : e.frames) frames.push_back(Json{{"file", f.file}, {"time", f.time}});
    je["frames"] = std::move(frames);
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline DatasetManifest manifest_from_json(const Json& j, const std::filesystem::path& root) {
  detail::reject_unknown_keys(j, {"version", "grid_dims", "simulation_config", "normalization", "entries"}, "manifest");
  if (detail::json_get<int>(j, "version") != 1) throw ConfigError("version: unsupported manifest version");
  DatasetManifest m;
  m.root = root;
  m.dims = grid_dims_from_json(j.at("grid_dims"), "grid_dims");
  m.base_config = simulation_config_from_json(j.at("simulation_config"));
  if (j.contains("normalization")) m.normalization = normalization_from_json(j["normalization"]);
  if (!j.contains("entries") || !j["entries"].is_array()) throw ConfigError("entries: expected an array");
  for (const auto& je : j["entries"]) {
    detail::reject_unknown_keys(je, {"radius", "index", "directory", "frames"}, "manifest entry");
    SimulationEntry e;
    e.radius = detail::json_get<double>(je, "radius");
    e.index = detail::json_get<double>(je, "index");
    e.directory = detail::json_get<std::string>(je, "directory");
    if (!je.contains("frames") || !je["frames"].is_array()) throw ConfigError("frames: expected an array");
    for (const auto& jf : je["frames"]) {
      e.frames.push_back({detail::json_get<std::string>(jf, "file"), detail::json_get<double>(jf, "time")});
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path), path.parent_path());
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_json_file(path, to_json(m));
}

inline std::string simulation_directory_name(double r, double n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "sim_r%.3f_n%.3f", r, n);
  return buf;
}

inline std::string frame_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.evf", k);
  return buf;
}

/// Runs one simulation and writes its frames as EVF files into `dir`.
inline SimulationEntry write_simulation(const SimulationConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SimulationEntry e;
  e.radius = c.sphere_radius;
  e.index = c.sphere_index;
  e.directory = dir.filename().string();
  std::size_t k = 0;
  run_simulation(c, [&](FieldVolume&& v) {
    const std::string name = frame_file_name(k++);
    write_volume(v, dir / name);
    e.frames.push_back({name, v.time});
  });
  return e;
}

/// Runs (or resumes) one simulation per grid point under `out_dir` and writes
/// `out_dir/manifest.json`. A simulation whose directory holds a completion
/// marker is not rerun.
inline DatasetManifest build_dataset(const std::vector<std::pair<double, double>>& grid, const SimulationConfig& base,
                                     const std::filesystem::path& out_dir,
                                     const std::function<void(const std::string&)>& log = {}) {
  if (grid.empty()) throw ConfigError("parameter grid: no points");
  validate(base);
  DatasetManifest m;
  m.root = out_dir;
  m.dims = base.grid();
  m.base_config = base;
  for (const auto& [r, n] : grid) {
    SimulationConfig c = base;
    c.sphere_radius = r;
    c.sphere_index = n;
    validate(c);
    const std::string dirname = simulation_directory_name(r, n);
    const auto dir = out_dir / dirname;
    const auto marker = dir / "complete";
    SimulationEntry e;
    if (std::filesystem::exists(marker)) {
      e.radius = r;
      e.index = n;
      e.directory = dirname;
      for (std::size_t k = 0; k < c.snapshot_count(); ++k) {
        const std::string name = frame_file_name(k);
        if (!std::filesystem::exists(dir / name)) throw IoError("missing frame " + (dir / name).string());
        e.frames.push_back({name, static_cast<double>(k) * c.snapshot_interval});
      }
      if (log) log("reusing " + dirname);
    } else {
      if (log) log("simulating " + dirname);
      try {
        e = write_simulation(c, dir);
      } catch (const NumericalError& err) {
        throw NumericalError(dirname + ": " + err.what());
      } catch (const IoError& err) {
        throw IoError(dirname + ": " + err.what());
      } catch (const std::filesystem::filesystem_error& err) {
        throw IoError(dirname + ": " + err.what());
      }
      write_text_atomic(marker, "");
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

/// A range that is never degenerate: a single value v becomes [v - 0.5, v + 0.5].
inline Range range_over(double lo, double hi) {
  if (hi > lo) return {lo, hi};
  return {lo - 0.5, hi + 0.5};
}

/// Field scale from every volume of the manifest; parameter and time ranges
/// from its grid and schedule.
inline NormalizationSpec fit_normalization(const DatasetManifest& m,
                                           const std::function<FieldVolume(std::size_t, std::size_t)>& load = {}) {
  if (m.entries.empty() || m.frame_count() == 0) throw ConfigError("manifest: no volumes to normalize over");
  double scale = 0.0;
  double rmin = m.entries[0].radius, rmax = rmin, nmin = m.entries[0].index, nmax = nmin;
  double tmin = m.entries[0].frames[0].time, tmax = tmin;
  for (std::size_t e = 0; e < m.entries.size(); ++e) {
    rmin = std::min(rmin, m.entries[e].radius);
    rmax = std::max(rmax, m.entries[e].radius);
    nmin = std::min(nmin, m.entries[e].index);
    nmax = std::max(nmax, m.entries[e].index);
    for (std::size_t k = 0; k < m.entries[e].frames.size(); ++k) {
      tmin = std::min(tmin, m.entries[e].frames[k].time);
      tmax = std::max(tmax, m.entries[e].frames[k].time);
      const FieldVolume v = load ? load(e, k) : read_volume(m.frame_path(e, k));
      for (float x : v.data) scale = std::max(scale, static_cast<double>(std::abs(x)));
    }
  }
  if (!(scale > 0)) throw ConfigError("manifest: every volume is zero; field scale undefined");
  NormalizationSpec n;
  n.field_scale = scale;
  n.radius = range_over(rmin, rmax);
  n.index = range_over(nmin, nmax);
  n.time = range_over(tmin, tmax);
  return n;
}

/// Center-cropped, scale-normalized copy of a raw volume.
inline FieldVolume prepare_volume(const FieldVolume& raw, GridDims dims, double field_scale) {
  FieldVolume v = raw.dims == dims ? raw : center_crop(raw, dims);
  const double inv = 1.0 / field_scale;
  for (auto& x : v.data) x = static_cast<float>(x * inv);
  return v;
}

/// Prepared training volumes keyed by (entry, frame), loaded on demand and
/// evicted least-recently-used once the byte budget is exceeded.
class VolumeCache {
 public:
  VolumeCache(const DatasetManifest& m, GridDims dims, double field_scale, std::size_t byte_budget)
      : manifest_(m), dims_(dims), scale_(field_scale), budget_(byte_budget) {}

  const FieldVolume& get(std::size_t entry, std::size_t frame) {
    const std::size_t key = entry * stride() + frame;
    auto it = index_.find(key);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    FieldVolume raw = read_volume(manifest_.frame_path(entry, frame));
    if (!(raw.dims == manifest_.dims)) {
      throw ShapeError(manifest_.frame_path(entry, frame).string() + ": dims " + raw.dims.str() + ", manifest says " +
                       manifest_.dims.str());
    }
    lru_.emplace_front(key, prepare_volume(raw, dims_, scale_));
    index_[key] = lru_.begin();
    bytes_ += item_bytes();
    while (bytes_ > budget_ && lru_.size() > 1) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
      bytes_ -= item_bytes();
    }
    return lru_.front().second;
  }

  std::size_t resident() const { return lru_.size(); }
  std::size_t bytes() const { return bytes_; }

 private:
  std::size_t stride() const { return std::max<std::size_t>(1, manifest_.frames_per_simulation()); }
  std::size_t item_bytes() const { return dims_.count() * sizeof(float); }

  const DatasetManifest& manifest_;
  GridDims dims_;
  double scale_;
  std::size_t budget_;
  std::size_t bytes_ = 0;
  std::list<std::pair<std::size_t, FieldVolume>> lru_;
  std::unordered_map<std::size_t, std::list<std::pair<std::size_t, FieldVolume>>::iterator> index_;
};

/// One latent code per (simulation, frame) with its parameters.
struct LatentRecord {
  double radius = 0.0;
  double index = 1.0;
  double time = 0.0;
  std::vector<float> code;
};

struct LatentDataset {
  std::size_t latent_size = 0;
  NormalizationSpec normalization;
  std::vector<LatentRecord> records;
};

/// Writes `path` (JSON) and a sibling `.bin` sidecar holding the codes as
/// little-endian 32-bit floats.
inline void save_latents(const LatentDataset& d, const std::filesystem::path& path) {
  ByteWriter w;
  for (const auto& r : d.records) {
    if (r.code.size() != d.latent_size) throw ShapeError("latent record length differs from latent_size");
    for (float x : r.code) w.f32(x);
  }
  std::filesystem::path bin = path;
  bin.replace_extension(".bin");
  Json j;
  j["version"] = 1;
  j["latent_size"] = d.latent_size;
  j["count"] = d.records.size();
  j["normalization"] = to_json(d.normalization);
  j["codes_file"] = bin.filename().string();
  char sum[17];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(w.buffer())));
  j["codes_checksum"] = sum;
  Json rows = Json::array();
  for (const auto& r : d.records) rows.push_back(Json::array({r.radius, r.index, r.time}));
  j["points"] = std::move(rows);
  write_file_atomic(bin, w.buffer());
  write_json_file(path, j);
}

inline LatentDataset load_latents(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  detail::reject_unknown_keys(j, {"version", "latent_size", "count", "normalization", "codes_file", "codes_checksum", "points"},
                              "latent dataset");
  LatentDataset d;
  d.latent_size = detail::json_get<std::size_t>(j, "latent_size");
  const auto count = detail::json_get<std::size_t>(j, "count");
  d.normalization = normalization_from_json(j.at("normalization"));
  const auto bytes = read_file(path.parent_path() / detail::json_get<std::string>(j, "codes_file"));
  char sum[17];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  if (bytes.size() < count * d.latent_size * 4) throw TruncatedError(path.string() + ": codes sidecar is short");
  if (detail::json_get<std::string>(j, "codes_checksum") != sum) throw ChecksumError(path.string() + ": codes checksum mismatch");
  const Json& pts = j.at("points");
  if (!pts.is_array() || pts.size() != count) throw ConfigError("points: expected " + std::to_string(count) + " entries");
  ByteReader r(bytes.data(), bytes.size(), path.string());
  for (std::size_t i = 0; i < count; ++i) {
    LatentRecord rec;
    rec.radius = pts[i].at(0).get<double>();
    rec.index = pts[i].at(1).get<double>();
    rec.time = pts[i].at(2).get<double>();
    rec.code.resize(d.latent_size);
    for (auto& x : rec.code) x = r.f32();
    d.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": codes sidecar has trailing bytes");
  return d;
}

}  // namespace latentwave
