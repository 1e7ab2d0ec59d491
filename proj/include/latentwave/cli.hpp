#pragma once

// Command-line front end. run_cli returns the process exit status:
// 0 success, 1 usage error, 2 data or validation error, 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentwave/dataset.hpp"
#include "latentwave/evaluation.hpp"
#include "latentwave/io.hpp"
#include "latentwave/training.hpp"

namespace latentwave {

namespace cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline NormalizationSpec require_normalization(const Checkpoint& ck, const std::string& path) {
  if (!ck.normalization) throw ConfigError(path + ": checkpoint carries no normalization; train the autoencoder first");
  return *ck.normalization;
}

inline std::vector<FieldVolume> read_simulation_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".evf") files.push_back(e.path());
  if (files.empty()) throw ConfigError(dir.string() + ": no .evf frames");
  std::sort(files.begin(), files.end());
  std::vector<FieldVolume> out;
  for (const auto& f : files) out.push_back(read_volume(f));
  return out;
}

inline void cmd_simulate(const fs::path& config, const fs::path& out_dir, Streams io) {
  const SimulationConfig c = simulation_config_from_json(read_json_file(config));
  const auto entry = write_simulation(c, out_dir);
  io.out << "wrote " << entry.frames.size() << " frames of " << c.grid().str() << " to " << out_dir.string() << "\n";
}

inline void cmd_dataset(const fs::path& config, const fs::path& grid, const fs::path& out_dir, Streams io) {
  const SimulationConfig c = simulation_config_from_json(read_json_file(config));
  const auto points = param_grid_from_json(read_json_file(grid));
  auto m = build_dataset(points, c, out_dir, [&](const std::string& s) { io.out << s << "\n"; });
  m.normalization = fit_normalization(m);
  save_manifest(m, out_dir / "manifest.json");
  io.out << m.entries.size() << " simulations, " << m.frame_count() << " volumes, field scale "
         << format_number(m.normalization->field_scale) << "\n";
}

inline TrainingHooks log_hooks(const char* what, Streams io, std::function<void(std::size_t)> checkpoint = {}) {
  TrainingHooks h;
  h.on_log = [what, io](std::size_t it, double loss) {
    io.out << what << " iteration " << it << " loss " << format_number(loss) << "\n";
    io.out.flush();
  };
  h.on_checkpoint = std::move(checkpoint);
  return h;
}

inline void cmd_train_ae(const fs::path& manifest_path, const fs::path& spec_path, const fs::path& train_path,
                         const fs::path& out, Streams io) {
  const auto manifest = load_manifest(manifest_path);
  const auto spec = architecture_from_json(read_json_file(spec_path), manifest.dims);
  const auto cfg = train_config_from_json(read_json_file(train_path), TrainConfig::autoencoder_defaults());
  const NormalizationSpec norm = manifest.normalization ? *manifest.normalization : fit_normalization(manifest);
  Checkpoint ck;
  ck.model = build_models<float>(spec, cfg.seed);
  ck.normalization = norm;
  auto hooks = log_hooks("autoencoder", io, [&](std::size_t) { save_checkpoint(ck, out); });
  const auto res = train_autoencoder(ck.model, manifest, norm, cfg, hooks);
  ck.autoencoder_trained = true;
  save_checkpoint(ck, out);
  const auto [first, last] = windowed_ends(res.loss_history, 50);
  io.out << "autoencoder loss " << format_number(first) << " -> " << format_number(last) << ", checkpoint "
         << out.string() << "\n";
}

inline void cmd_encode(const fs::path& ckpt, const fs::path& manifest_path, const fs::path& out, Streams io) {
  const auto ck = load_checkpoint(ckpt);
  const auto norm = require_normalization(ck, ckpt.string());
  const auto latents = encode_dataset(ck.model, load_manifest(manifest_path), norm);
  save_latents(latents, out);
  io.out << "encoded " << latents.records.size() << " volumes to " << out.string() << "\n";
}

inline void cmd_train_proj(const fs::path& latents_path, const fs::path& ckpt, const fs::path& train_path,
                           const fs::path& out, Streams io) {
  auto ck = load_checkpoint(ckpt);
  const auto latents = load_latents(latents_path);
  if (ck.normalization && !(*ck.normalization == latents.normalization)) {
    throw ConfigError(latents_path.string() + ": normalization differs from the checkpoint's");
  }
  ck.normalization = latents.normalization;
  const auto cfg = train_config_from_json(read_json_file(train_path), TrainConfig::approximator_defaults());
  const double initial = approximator_dataset_loss(ck.model, latents);
  auto hooks = log_hooks("approximator", io, [&](std::size_t) { save_checkpoint(ck, out); });
  train_approximator(ck.model, latents, cfg, hooks);
  ck.approximator_trained = true;
  save_checkpoint(ck, out);
  const double final_loss = approximator_dataset_loss(ck.model, latents);
  io.out << "approximator loss over all codes " << format_number(initial) << " -> " << format_number(final_loss)
         << " (ratio " << format_number(final_loss / initial) << "), checkpoint " << out.string() << "\n";
}

inline void cmd_reconstruct(const fs::path& ckpt, double r, double n, double t, const fs::path& out, Streams io) {
  const auto ck = load_checkpoint(ckpt);
  const auto norm = require_normalization(ck, ckpt.string());
  const auto code = approximate(ck.model, {r, n, t}, norm);
  if (code.extrapolated) io.err << "warning: (r, n, t) lies outside the training ranges\n";
  FieldVolume v = decode(ck.model, code);
  for (auto& x : v.data) x = static_cast<float>(x * norm.field_scale);
  if (!v.all_finite()) throw NumericalError("reconstruction produced non-finite values");
  write_volume(v, out);
  io.out << "wrote " << v.dims.str() << " volume at t=" << format_number(t) << " to " << out.string() << "\n";
}

inline void cmd_evaluate(const fs::path& ckpt, const fs::path& truth, const std::string& mode, const fs::path& out,
                         Streams io) {
  const auto m = parse_mode(mode);
  const auto ck = load_checkpoint(ckpt);
  const auto norm = require_normalization(ck, ckpt.string());
  const auto rep = evaluate(ck.model, norm, load_manifest(truth), m);
  write_report_csv(rep, out);
  io.out << report_summary(rep);
}

inline void cmd_latent_trace(const fs::path& ckpt, const fs::path& sim, std::size_t component, const fs::path& out,
                             Streams io) {
  const auto ck = load_checkpoint(ckpt);
  const auto norm = require_normalization(ck, ckpt.string());
  std::vector<FieldVolume> frames;
  for (const auto& raw : read_simulation_dir(sim)) frames.push_back(prepare_volume(raw, ck.model.spec.input_dims, norm.field_scale));
  const auto s = latent_trace(ck.model, frames, component);
  write_trace_csv(s, out);
  io.out << "component " << component << ", " << s.values.size() << " frames";
  try {
    io.out << ", dominant period " << format_number(dominant_period(s));
  } catch (const NumericalError& e) {
    io.out << ", " << e.what();
  }
  io.out << "\n";
}

inline void cmd_timing(const fs::path& ckpt, const fs::path& config, double r, double n, std::size_t reps, Streams io) {
  const auto ck = load_checkpoint(ckpt);
  const auto norm = require_normalization(ck, ckpt.string());
  const auto c = simulation_config_from_json(read_json_file(config));
  const auto rep = timing_comparison(ck.model, norm, c, r, n, reps);
  io.out << "fdtd seconds per frame      " << format_number(rep.fdtd_seconds_per_frame) << "\n"
         << "surrogate seconds per frame " << format_number(rep.surrogate_seconds_per_frame) << "\n"
         << "speedup                     " << format_number(rep.speedup()) << "\n"
         << "late/early reconstruct time " << format_number(rep.fast_forward_ratio()) << "\n";
}

inline void cmd_export_slice(const fs::path& in, const std::string& axis, const std::string& index,
                             std::optional<double> scale, const fs::path& out, Streams io) {
  if (axis.size() != 1 || std::string("xyz").find(axis[0]) == std::string::npos) {
    throw ConfigError("axis: expected x, y or z, got '" + axis + "'");
  }
  const auto v = read_volume(in);
  const std::size_t extent = axis[0] == 'x' ? v.dims.nx : axis[0] == 'y' ? v.dims.ny : v.dims.nz;
  std::size_t i = extent / 2;
  if (index != "mid") {
    try {
      std::size_t used = 0;
      i = std::stoul(index, &used);
      if (used != index.size()) throw std::invalid_argument(index);
    } catch (const std::logic_error&) {
      throw ConfigError("index: expected a voxel index or 'mid', got '" + index + "'");
    }
  }
  double s = scale.value_or(0.0);
  if (!scale) {
    for (float x : v.data) s = std::max(s, static_cast<double>(std::abs(x)));
    if (s == 0.0) s = 1.0;
  }
  const auto img = export_slice(v, axis[0], i, s, out);
  io.out << "wrote " << img.width << "x" << img.height << " slice " << axis << "=" << i << " to " << out.string() << "\n";
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Latent-space surrogate for 3D wave simulations", "latentwave"};
  app.require_subcommand(1, 1);
  Streams io{out, err};

  std::string config, grid, out_path, manifest, spec, train, ckpt, latents, truth, mode, sim, axis = "z", index = "mid";
  std::optional<double> scale;
  double r = 2.5, n = 1.3, t = 0.0;
  std::size_t component = 0, reps = 7;

  auto* simulate = app.add_subcommand("simulate", "Run one FDTD simulation and write its frames");
  simulate->add_option("--config", config, "Simulation config JSON")->required();
  simulate->add_option("--out", out_path, "Output directory")->required();

  auto* dataset = app.add_subcommand("dataset", "Simulate a parameter grid and write a manifest");
  dataset->add_option("--config", config, "Base simulation config JSON")->required();
  dataset->add_option("--grid", grid, "Parameter grid JSON")->required();
  dataset->add_option("--out", out_path, "Output directory")->required();

  auto* train_ae = app.add_subcommand("train-ae", "Train the autoencoder");
  train_ae->add_option("--manifest", manifest, "Dataset manifest")->required();
  train_ae->add_option("--spec", spec, "Architecture JSON")->required();
  train_ae->add_option("--train", train, "Training config JSON")->required();
  train_ae->add_option("--out", out_path, "Checkpoint to write")->required();

  auto* encode_cmd = app.add_subcommand("encode", "Encode every volume of a dataset");
  encode_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  encode_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  encode_cmd->add_option("--out", out_path, "Latent dataset JSON to write")->required();

  auto* train_proj = app.add_subcommand("train-proj", "Train the projection approximator on latent codes");
  train_proj->add_option("--latents", latents, "Latent dataset JSON")->required();
  train_proj->add_option("--ckpt", ckpt, "Checkpoint with a trained autoencoder")->required();
  train_proj->add_option("--train", train, "Training config JSON")->required();
  train_proj->add_option("--out", out_path, "Checkpoint to write")->required();

  auto* recon = app.add_subcommand("reconstruct", "Predict the field at (r, n, t) without time stepping");
  recon->add_option("--ckpt", ckpt, "Checkpoint")->required();
  recon->add_option("-r,--radius", r, "Sphere radius")->required();
  recon->add_option("-n,--index", n, "Refractive index")->required();
  recon->add_option("-t,--time", t, "Time")->required();
  recon->add_option("--out", out_path, "EVF file to write")->required();

  auto* eval = app.add_subcommand("evaluate", "Per-simulation mean L1 against ground truth");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--truth", truth, "Manifest of held-out simulations")->required();
  eval->add_option("--mode", mode, "interp or extrap")->required();
  eval->add_option("--out", out_path, "CSV report")->required();

  auto* trace = app.add_subcommand("latent-trace", "One latent component over a simulation's frames");
  trace->add_option("--ckpt", ckpt, "Checkpoint")->required();
  trace->add_option("--sim", sim, "Simulation directory")->required();
  trace->add_option("--component", component, "Latent component index")->required();
  trace->add_option("--out", out_path, "CSV file")->required();

  auto* timing = app.add_subcommand("timing", "Compare surrogate and FDTD cost per frame");
  timing->add_option("--ckpt", ckpt, "Checkpoint")->required();
  timing->add_option("--config", config, "Simulation config JSON")->required();
  timing->add_option("-r,--radius", r, "Sphere radius");
  timing->add_option("-n,--index", n, "Refractive index");
  timing->add_option("--repetitions", reps, "Timed repetitions (at least 5)");

  auto* slice = app.add_subcommand("export-slice", "Write a middle or given slice as a PGM image");
  slice->add_option("--in", config, "EVF file")->required();
  slice->add_option("--axis", axis, "x, y or z");
  slice->add_option("--index", index, "Slice index or 'mid'");
  slice->add_option("--scale", scale, "Field value mapped to white (default: max |E|)");
  slice->add_option("--out", out_path, "PGM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*simulate) cmd_simulate(config, out_path, io);
    else if (*dataset) cmd_dataset(config, grid, out_path, io);
    else if (*train_ae) cmd_train_ae(manifest, spec, train, out_path, io);
    else if (*encode_cmd) cmd_encode(ckpt, manifest, out_path, io);
    else if (*train_proj) cmd_train_proj(latents, ckpt, train, out_path, io);
    else if (*recon) cmd_reconstruct(ckpt, r, n, t, out_path, io);
    else if (*eval) cmd_evaluate(ckpt, truth, mode, out_path, io);
    else if (*trace) cmd_latent_trace(ckpt, sim, component, out_path, io);
    else if (*timing) cmd_timing(ckpt, config, r, n, reps, io);
    else if (*slice) cmd_export_slice(config, axis, index, scale, out_path, io);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace latentwave
