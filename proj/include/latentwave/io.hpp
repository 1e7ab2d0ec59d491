#pragma once

// File formats: EVF field volumes, CKPT checkpoints, JSON configs, CSV
// tables and PGM slice images. All binary data is little-endian.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentwave/errors.hpp"
#include "latentwave/fdtd.hpp"
#include "latentwave/model.hpp"
#include "latentwave/normalization.hpp"
#include "latentwave/volume.hpp"

namespace latentwave {

using Json = nlohmann::ordered_json;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes) { return fnv1a64(bytes.data(), bytes.size()); }

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> buf_;
};

/// Little-endian byte source over an in-memory file; running off the end
/// throws TruncatedError.
class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  std::uint8_t u8() { return need(1)[0]; }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  const unsigned char* bytes(std::size_t n) { return need(n); }
  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) throw FormatError(what_ + ": implausible string length " + std::to_string(n));
    const auto* p = need(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* need(std::size_t n) {
    if (n > size_ - pos_) throw TruncatedError(what_ + ": file ends early at byte " + std::to_string(size_));
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t get(int n) {
    const unsigned char* p = need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read " + path.string());
  return bytes;
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

// ---------------------------------------------------------------- EVF

inline constexpr char kEvfMagic[4] = {'E', 'V', 'F', '1'};
inline constexpr std::uint8_t kEvfFloat32 = 0;
inline constexpr std::uint8_t kEvfFloat64 = 1;

inline std::vector<unsigned char> encode_volume(const FieldVolume& v) {
  if (v.data.size() != v.dims.count()) throw ShapeError("volume buffer does not match dims " + v.dims.str());
  ByteWriter w;
  w.bytes(kEvfMagic, 4);
  w.u32(static_cast<std::uint32_t>(v.dims.nx));
  w.u32(static_cast<std::uint32_t>(v.dims.ny));
  w.u32(static_cast<std::uint32_t>(v.dims.nz));
  w.f64(v.voxel_size);
  w.f64(v.time);
  w.f64(v.radius);
  w.f64(v.index);
  w.u8(kEvfFloat32);
  const std::size_t start = w.buffer().size();
  for (float x : v.data) w.f32(x);
  const std::uint64_t sum = fnv1a64(w.buffer().data() + start, w.buffer().size() - start);
  w.u64(sum);
  return std::move(w.buffer());
}

inline FieldVolume decode_volume(const std::vector<unsigned char>& bytes, const std::string& what = "EVF") {
  ByteReader r(bytes.data(), bytes.size(), what);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEvfMagic, 4) != 0) throw BadMagicError(what + ": not an EVF1 file");
  r.bytes(4);
  FieldVolume v;
  v.dims.nx = r.u32();
  v.dims.ny = r.u32();
  v.dims.nz = r.u32();
  v.voxel_size = r.f64();
  v.time = r.f64();
  v.radius = r.f64();
  v.index = r.f64();
  const std::uint8_t dtype = r.u8();
  if (dtype != kEvfFloat32 && dtype != kEvfFloat64) throw FormatError(what + ": unknown dtype tag " + std::to_string(dtype));
  const std::size_t width = dtype == kEvfFloat32 ? 4 : 8;
  const std::size_t count = v.dims.count();
  if (count > (r.remaining() / width)) throw TruncatedError(what + ": payload shorter than " + v.dims.str());
  const unsigned char* payload = r.bytes(count * width);
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after footer");
  if (fnv1a64(payload, count * width) != stored) throw ChecksumError(what + ": payload checksum mismatch");
  ByteReader p(payload, count * width, what);
  v.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) v.data[i] = dtype == kEvfFloat32 ? p.f32() : static_cast<float>(p.f64());
  return v;
}

inline void write_volume(const FieldVolume& v, const std::filesystem::path& path) {
  write_file_atomic(path, encode_volume(v));
}

inline FieldVolume read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path), path.string()); }

// ---------------------------------------------------------------- JSON configs

namespace detail {

template <class V>
V json_get(const Json& j, const std::string& key) {
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": missing or of the wrong type");
  }
}

template <class V>
void json_opt(const Json& j, const std::string& key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(it.key() + ": unknown key in " + where);
  }
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON (" + e.what() + ")");
  }
}

}  // namespace detail

inline Json read_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return detail::parse_json(std::string(bytes.begin(), bytes.end()), path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline const char* waveform_name(SourceWaveform w) {
  switch (w) {
    case SourceWaveform::RampedSine: return "ramped_sine";
    case SourceWaveform::Gaussian: return "gaussian";
    case SourceWaveform::GaussianDerivative: return "gaussian_derivative";
    case SourceWaveform::GaussianSine: return "gaussian_sine";
  }
  return "ramped_sine";
}

inline SourceWaveform parse_waveform(const std::string& s) {
  for (auto w : {SourceWaveform::RampedSine, SourceWaveform::Gaussian, SourceWaveform::GaussianDerivative,
                 SourceWaveform::GaussianSine})
    if (s == waveform_name(w)) return w;
  throw ConfigError("waveform: unknown value '" + s + "'");
}

inline Json to_json(const SimulationConfig& c) {
  Json j;
  j["cell_extent"] = c.cell_extent;
  j["resolution"] = c.resolution;
  j["boundary_width"] = c.boundary_width;
  j["source_position"] = c.source_position;
  j["source_size"] = c.source_size;
  j["wavelength"] = c.wavelength;
  j["sphere_radius"] = c.sphere_radius;
  j["sphere_index"] = c.sphere_index;
  j["background_index"] = c.background_index;
  j["snapshot_interval"] = c.snapshot_interval;
  j["duration"] = c.duration;
  j["courant_safety"] = c.courant_safety;
  j["rng_seed"] = c.rng_seed;
  j["source_enabled"] = c.source_enabled;
  j["waveform"] = waveform_name(c.waveform);
  j["pulse_center"] = c.pulse_center;
  j["pulse_width"] = c.pulse_width;
  if (std::isfinite(c.source_stop_time)) j["source_stop_time"] = c.source_stop_time;
  j["time_unit_us"] = c.time_unit_us;
  return j;
}

/// Missing keys keep the desk defaults; unknown keys are rejected.
inline SimulationConfig simulation_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"cell_extent", "resolution", "boundary_width", "source_position", "source_size",
                               "wavelength", "sphere_radius", "sphere_index", "background_index", "snapshot_interval",
                               "duration", "courant_safety", "rng_seed", "source_enabled", "waveform", "pulse_center",
                               "pulse_width", "source_stop_time", "time_unit_us"},
                              "simulation config");
  SimulationConfig c;
  detail::json_opt(j, "cell_extent", c.cell_extent);
  detail::json_opt(j, "resolution", c.resolution);
  detail::json_opt(j, "boundary_width", c.boundary_width);
  detail::json_opt(j, "source_position", c.source_position);
  detail::json_opt(j, "source_size", c.source_size);
  detail::json_opt(j, "wavelength", c.wavelength);
  detail::json_opt(j, "sphere_radius", c.sphere_radius);
  detail::json_opt(j, "sphere_index", c.sphere_index);
  detail::json_opt(j, "background_index", c.background_index);
  detail::json_opt(j, "snapshot_interval", c.snapshot_interval);
  detail::json_opt(j, "duration", c.duration);
  detail::json_opt(j, "courant_safety", c.courant_safety);
  detail::json_opt(j, "rng_seed", c.rng_seed);
  detail::json_opt(j, "source_enabled", c.source_enabled);
  if (j.contains("waveform")) c.waveform = parse_waveform(detail::json_get<std::string>(j, "waveform"));
  detail::json_opt(j, "pulse_center", c.pulse_center);
  detail::json_opt(j, "pulse_width", c.pulse_width);
  detail::json_opt(j, "source_stop_time", c.source_stop_time);
  detail::json_opt(j, "time_unit_us", c.time_unit_us);
  validate(c);
  return c;
}

inline Json to_json(const GridDims& d) { return Json::array({d.nx, d.ny, d.nz}); }

inline GridDims grid_dims_from_json(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(key + ": expected [nx, ny, nz]");
  try {
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": extents must be non-negative integers");
  }
}

inline Json to_json(const ArchitectureSpec& s) {
  Json j;
  j["input_dims"] = to_json(s.input_dims);
  j["latent_size"] = s.latent_size;
  j["base_channels"] = s.base_channels;
  j["conv_block_depth"] = s.conv_block_depth;
  j["num_downsamples"] = s.num_downsamples;
  j["leaky_slope"] = s.leaky_slope;
  j["approx_hidden_width"] = s.approx_hidden_width;
  j["param_count"] = s.param_count;
  return j;
}

/// Unset input_dims/num_downsamples/approx_hidden_width are derived from
/// `volume_dims` (the raw simulation grid) when given.
inline ArchitectureSpec architecture_from_json(const Json& j, std::optional<GridDims> volume_dims = std::nullopt) {
  detail::reject_unknown_keys(j,
                              {"input_dims", "latent_size", "base_channels", "conv_block_depth", "num_downsamples",
                               "leaky_slope", "approx_hidden_width", "param_count"},
                              "architecture spec");
  ArchitectureSpec s;
  detail::json_opt(j, "latent_size", s.latent_size);
  detail::json_opt(j, "base_channels", s.base_channels);
  if (volume_dims && !j.contains("input_dims")) s = ArchitectureSpec::for_volume(*volume_dims, s.latent_size, s.base_channels);
  if (j.contains("input_dims")) s.input_dims = grid_dims_from_json(j["input_dims"], "input_dims");
  if (j.contains("input_dims") && !j.contains("num_downsamples")) s.num_downsamples = num_downsample_layers(s.input_dims);
  if (!j.contains("approx_hidden_width")) s.approx_hidden_width = std::max<std::size_t>(128, 2 * s.latent_size);
  detail::json_opt(j, "conv_block_depth", s.conv_block_depth);
  detail::json_opt(j, "num_downsamples", s.num_downsamples);
  detail::json_opt(j, "leaky_slope", s.leaky_slope);
  detail::json_opt(j, "approx_hidden_width", s.approx_hidden_width);
  detail::json_opt(j, "param_count", s.param_count);
  s.validate();
  return s;
}

inline Json to_json(const Range& r) { return Json::array({r.min, r.max}); }

inline Range range_from_json(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(key + ": expected [min, max]");
  try {
    return {j[0].get<double>(), j[1].get<double>()};
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": bounds must be numbers");
  }
}

inline Json to_json(const NormalizationSpec& n) {
  Json j;
  j["field_scale"] = n.field_scale;
  j["radius_range"] = to_json(n.radius);
  j["index_range"] = to_json(n.index);
  j["time_range"] = to_json(n.time);
  return j;
}

inline NormalizationSpec normalization_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"field_scale", "radius_range", "index_range", "time_range"}, "normalization");
  NormalizationSpec n;
  n.field_scale = detail::json_get<double>(j, "field_scale");
  n.radius = range_from_json(j.at("radius_range"), "radius_range");
  n.index = range_from_json(j.at("index_range"), "index_range");
  n.time = range_from_json(j.at("time_range"), "time_range");
  n.validate();
  return n;
}

// ---------------------------------------------------------------- CKPT

inline constexpr char kCkptMagic[4] = {'L', 'W', 'C', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

/// Model weights plus the normalization they were trained against.
struct Checkpoint {
  ModelParams<float> model;
  std::optional<NormalizationSpec> normalization;
  bool autoencoder_trained = false;
  bool approximator_trained = false;
};

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  Json header;
  header["architecture"] = to_json(ck.model.spec);
  header["rng_seed"] = ck.model.rng_seed;
  if (ck.normalization) header["normalization"] = to_json(*ck.normalization);
  header["autoencoder_trained"] = ck.autoencoder_trained;
  header["approximator_trained"] = ck.approximator_trained;
  const std::string text = header.dump();

  ByteWriter w;
  w.bytes(kCkptMagic, 4);
  w.u32(kCkptVersion);
  w.u64(0);  // total size, patched below
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  w.u32(static_cast<std::uint32_t>(ck.model.tensors.size()));
  for (std::size_t i = 0; i < ck.model.tensors.size(); ++i) {
    const auto& t = ck.model.tensors[i].value();
    w.str(ck.model.names[i]);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (float x : t.data()) w.f32(x);
  }
  const std::uint64_t total = w.buffer().size() + 8;
  for (int i = 0; i < 8; ++i) w.buffer()[8 + i] = static_cast<unsigned char>(total >> (8 * i));
  const std::uint64_t sum = fnv1a64(w.buffer());
  w.u64(sum);
  return std::move(w.buffer());
}

/// Parses a checkpoint. With `expected`, a differing architecture raises
/// SpecMismatchError.
inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& what = "CKPT",
                                    const ArchitectureSpec* expected = nullptr) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw BadMagicError(what + ": not a checkpoint file");
  }
  ByteReader head(bytes.data(), bytes.size(), what);
  head.bytes(4);
  const std::uint32_t version = head.u32();
  if (version != kCkptVersion) {
    throw VersionError(what + ": format version " + std::to_string(version) + ", expected " + std::to_string(kCkptVersion));
  }
  const std::uint64_t total = head.u64();
  if (bytes.size() < total) throw TruncatedError(what + ": file ends early at byte " + std::to_string(bytes.size()));
  if (bytes.size() != total || total < 32) throw FormatError(what + ": size field does not match the file");
  const std::size_t body = bytes.size() - 8;
  ByteReader foot(bytes.data() + body, 8, what);
  if (fnv1a64(bytes.data(), body) != foot.u64()) throw ChecksumError(what + ": checksum mismatch");

  ByteReader r(bytes.data(), body, what);
  r.bytes(16);
  const std::uint64_t text_len = r.u64();
  if (text_len > r.remaining()) throw TruncatedError(what + ": header block runs past the end");
  const auto* text = r.bytes(text_len);
  Json header;
  try {
    header = Json::parse(text, text + text_len);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(what + ": unreadable header block");
  }
  Checkpoint ck;
  try {
    ck.model.spec = architecture_from_json(header.at("architecture"));
    ck.model.rng_seed = header.at("rng_seed").get<std::uint64_t>();
    if (header.contains("normalization")) ck.normalization = normalization_from_json(header["normalization"]);
    ck.autoencoder_trained = header.value("autoencoder_trained", false);
    ck.approximator_trained = header.value("approximator_trained", false);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(what + ": malformed header block");
  } catch (const ConfigError& e) {
    throw FormatError(what + ": invalid header block (" + e.what() + ")");
  }
  if (expected && !(*expected == ck.model.spec)) {
    throw SpecMismatchError(what + ": stored architecture " + to_json(ck.model.spec).dump() + " differs from requested " +
                            to_json(*expected).dump());
  }

  const auto layout = parameter_layout(ck.model.spec);
  const std::uint32_t count = r.u32();
  if (count != layout.size()) {
    throw SpecMismatchError(what + ": " + std::to_string(count) + " tensors stored, architecture implies " +
                            std::to_string(layout.size()));
  }
  for (const auto& slot : layout) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 5) throw FormatError(what + ": tensor " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (name != slot.name || shape != slot.shape) {
      throw SpecMismatchError(what + ": stored tensor " + name + shape_str(shape) + " but architecture implies " +
                              slot.name + shape_str(slot.shape));
    }
    Tensor<float> t(shape);
    for (auto& x : t.data()) x = r.f32();
    ck.model.add(name, parameter(std::move(t)));
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes before footer");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchitectureSpec* expected = nullptr) {
  return decode_checkpoint(read_file(path), path.string(), expected);
}

// ---------------------------------------------------------------- CSV and PGM

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text += (i ? "," : "") + cells[i];
    text += "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  write_text_atomic(path, text);
}

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Maps [-scale, 0, scale] to [0, 128, 255], clamping outside.
inline std::uint8_t field_to_gray(double v, double scale) {
  const double u = std::clamp(v / scale, -1.0, 1.0);
  const double g = u >= 0 ? 128.0 + 127.0 * u : 128.0 + 128.0 * u;
  return static_cast<std::uint8_t>(std::lround(g));
}

/// Slice perpendicular to `axis` ('x', 'y' or 'z') at `index`. Image columns
/// run along the lower remaining axis.
inline GrayImage slice_image(const FieldVolume& v, char axis, std::size_t index, double scale) {
  if (!(scale > 0)) throw ConfigError("field_scale: must be positive");
  const GridDims d = v.dims;
  GrayImage img;
  auto sample = [&](std::size_t col, std::size_t row) -> float {
    switch (axis) {
      case 'x': return v.at(index, col, row);
      case 'y': return v.at(col, index, row);
      default: return v.at(col, row, index);
    }
  };
  switch (axis) {
    case 'x':
      if (index >= d.nx) throw ConfigError("index: " + std::to_string(index) + " outside x extent " + std::to_string(d.nx));
      img.width = d.ny;
      img.height = d.nz;
      break;
    case 'y':
      if (index >= d.ny) throw ConfigError("index: " + std::to_string(index) + " outside y extent " + std::to_string(d.ny));
      img.width = d.nx;
      img.height = d.nz;
      break;
    case 'z':
      if (index >= d.nz) throw ConfigError("index: " + std::to_string(index) + " outside z extent " + std::to_string(d.nz));
      img.width = d.nx;
      img.height = d.ny;
      break;
    default:
      throw ConfigError(std::string("axis: expected x, y or z, got '") + axis + "'");
  }
  img.pixels.resize(img.width * img.height);
  for (std::size_t row = 0; row < img.height; ++row)
    for (std::size_t col = 0; col < img.width; ++col) img.pixels[row * img.width + col] = field_to_gray(sample(col, row), scale);
  return img;
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  const std::string head = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline GrayImage export_slice(const FieldVolume& v, char axis, std::size_t index, double scale,
                              const std::filesystem::path& path) {
  GrayImage img = slice_image(v, axis, index, scale);
  write_file_atomic(path, encode_pgm(img));
  return img;
}

}  // namespace latentwave
