#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <sstream>

#include "latentwave/cli.hpp"

using namespace latentwave;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "latentwave");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("latentwave_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& s) { write_text_atomic(p, s); }

Checkpoint tiny_checkpoint() {
  ArchitectureSpec s;
  s.input_dims = {8, 8, 8};
  s.latent_size = 4;
  s.base_channels = 1;
  s.num_downsamples = 1;
  s.approx_hidden_width = 8;
  Checkpoint ck;
  ck.model = build_models<float>(s, 1);
  NormalizationSpec n;
  n.field_scale = 2.0;
  n.radius = {2.0, 3.0};
  n.index = {1.1, 1.5};
  n.time = {0.0, 5.0};
  ck.normalization = n;
  return ck;
}

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("simulate"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndFlag) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"simulate", "--config", "a", "--out", "b", "--bogus"}).code, 1);
}

TEST(Cli, ReconstructWithoutCheckpointPrintsUsage) {
  const auto r = run({"reconstruct", "-r", "2.5", "-n", "1.3", "-t", "1", "--out", "x.evf"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--ckpt"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("export-slice"), std::string::npos);
}

TEST(Cli, SimulateDeskDefaultWrites41Frames) {
  const auto dir = scratch("simulate");
  write_text(dir / "desk.json", "{}\n");
  const auto r = run({"simulate", "--config", (dir / "desk.json").string(), "--out", (dir / "frames").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir / "frames")) count += e.path().extension() == ".evf";
  EXPECT_EQ(count, 41u);
  const auto last = read_volume(dir / "frames" / "frame_0040.evf");
  EXPECT_EQ(last.dims, (GridDims{49, 49, 49}));
  EXPECT_DOUBLE_EQ(last.time, 5.0);

  const auto slice = run({"export-slice", "--in", (dir / "frames" / "frame_0040.evf").string(), "--axis", "z", "--index",
                          "mid", "--out", (dir / "s.pgm").string()});
  ASSERT_EQ(slice.code, 0) << slice.err;
  EXPECT_EQ(read_file(dir / "s.pgm").size(), std::string("P5\n49 49\n255\n").size() + 49 * 49);
  EXPECT_EQ(run({"export-slice", "--in", (dir / "frames" / "frame_0040.evf").string(), "--index", "49", "--out",
                 (dir / "t.pgm").string()})
                .code,
            2);
}

TEST(Cli, BadConfigKeyIsDataError) {
  const auto dir = scratch("badkey");
  write_text(dir / "c.json", R"({"resolutoin": 4})");
  const auto r = run({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("resolutoin"), std::string::npos);
  write_text(dir / "broken.json", "{ not json");
  EXPECT_EQ(run({"simulate", "--config", (dir / "broken.json").string(), "--out", (dir / "o").string()}).code, 2);
}

TEST(Cli, MissingOrCorruptCheckpointIsDataError) {
  const auto dir = scratch("ckpt");
  EXPECT_EQ(run({"reconstruct", "--ckpt", (dir / "none.ckpt").string(), "-r", "2.5", "-n", "1.3", "-t", "1", "--out",
                 (dir / "x.evf").string()})
                .code,
            2);
  auto bytes = encode_checkpoint(tiny_checkpoint());
  bytes[bytes.size() / 3] ^= 0x20;
  write_file_atomic(dir / "bad.ckpt", bytes);
  const auto r = run({"reconstruct", "--ckpt", (dir / "bad.ckpt").string(), "-r", "2.5", "-n", "1.3", "-t", "1", "--out",
                      (dir / "x.evf").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("checksum"), std::string::npos);
}

TEST(Cli, ReconstructWritesDenormalizedVolume) {
  const auto dir = scratch("recon");
  const auto ck = tiny_checkpoint();
  save_checkpoint(ck, dir / "m.ckpt");
  const auto r = run({"reconstruct", "--ckpt", (dir / "m.ckpt").string(), "-r", "2.5", "-n", "1.3", "-t", "2", "--out",
                      (dir / "x.evf").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto v = read_volume(dir / "x.evf");
  const auto expected = reconstruct(ck.model, {2.5, 1.3, 2.0}, *ck.normalization);
  ASSERT_EQ(v.dims, expected.dims);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_EQ(v.data[i], static_cast<float>(expected.data[i] * 2.0));
  EXPECT_EQ(v.time, 2.0);
  const auto far = run({"reconstruct", "--ckpt", (dir / "m.ckpt").string(), "-r", "2.5", "-n", "1.9", "-t", "2", "--out",
                        (dir / "y.evf").string()});
  EXPECT_EQ(far.code, 0);
  EXPECT_NE(far.err.find("outside the training ranges"), std::string::npos);
}

TEST(Cli, NonFiniteTrainingLossIsNumericalError) {
  const auto dir = scratch("nan");
  save_checkpoint(tiny_checkpoint(), dir / "m.ckpt");
  LatentDataset d;
  d.latent_size = 4;
  d.normalization = *tiny_checkpoint().normalization;
  const float inf = std::numeric_limits<float>::infinity();
  d.records = {{2.0, 1.1, 0.0, {inf, 0.f, 0.f, 0.f}}, {3.0, 1.5, 0.5, {0.f, 1.f, 0.f, 0.f}}};
  save_latents(d, dir / "codes.json");
  write_text(dir / "train.json", R"({"num_iterations": 5, "batch_size": 2})");
  const auto r = run({"train-proj", "--latents", (dir / "codes.json").string(), "--ckpt", (dir / "m.ckpt").string(),
                      "--train", (dir / "train.json").string(), "--out", (dir / "o.ckpt").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("iteration"), std::string::npos);
}

TEST(Cli, SmallPipelineEndToEnd) {
  const auto dir = scratch("pipeline");
  write_text(dir / "sim.json", R"({"resolution": 1.5, "boundary_width": 2.0, "snapshot_interval": 0.5, "duration": 4.0})");
  write_text(dir / "grid.json", R"({"radii": [2.0, 3.0], "indices": [1.1, 1.5]})");
  write_text(dir / "held.json", R"({"points": [[2.5, 1.3]]})");
  write_text(dir / "spec.json", R"({"latent_size": 4, "base_channels": 1})");
  write_text(dir / "ae.json", R"({"num_iterations": 6, "batch_size": 2, "learning_rate": 0.001, "log_interval": 3})");
  write_text(dir / "proj.json", R"({"num_iterations": 50, "batch_size": 8, "log_interval": 25})");
  const auto p = [&](const char* name) { return (dir / name).string(); };

  ASSERT_EQ(run({"dataset", "--config", p("sim.json"), "--grid", p("grid.json"), "--out", p("train")}).code, 0);
  ASSERT_EQ(run({"dataset", "--config", p("sim.json"), "--grid", p("held.json"), "--out", p("held")}).code, 0);
  auto r = run({"train-ae", "--manifest", p("train/manifest.json"), "--spec", p("spec.json"), "--train", p("ae.json"),
                "--out", p("ae.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("autoencoder iteration 6"), std::string::npos);
  r = run({"encode", "--ckpt", p("ae.ckpt"), "--manifest", p("train/manifest.json"), "--out", p("codes.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train-proj", "--latents", p("codes.json"), "--ckpt", p("ae.ckpt"), "--train", p("proj.json"), "--out",
           p("full.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(dir / "full.ckpt");
  EXPECT_TRUE(ck.autoencoder_trained);
  EXPECT_TRUE(ck.approximator_trained);
  EXPECT_EQ(ck.model.spec.input_dims, (GridDims{16, 16, 16}));

  r = run({"evaluate", "--ckpt", p("full.ckpt"), "--truth", p("held/manifest.json"), "--mode", "interp", "--out",
           p("interp.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(read_file(dir / "interp.csv").size(), 40u);
  EXPECT_EQ(run({"evaluate", "--ckpt", p("full.ckpt"), "--truth", p("held/manifest.json"), "--mode", "extrap", "--out",
                 p("x.csv")})
                .code,
            2);
  EXPECT_EQ(run({"evaluate", "--ckpt", p("full.ckpt"), "--truth", p("held/manifest.json"), "--mode", "sideways", "--out",
                 p("x.csv")})
                .code,
            2);

  r = run({"latent-trace", "--ckpt", p("full.ckpt"), "--sim", p("train/sim_r2.000_n1.100"), "--component", "1", "--out",
           p("trace.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run({"latent-trace", "--ckpt", p("full.ckpt"), "--sim", p("train/sim_r2.000_n1.100"), "--component", "4",
                 "--out", p("trace.csv")})
                .code,
            2);

  r = run({"timing", "--ckpt", p("full.ckpt"), "--config", p("sim.json"), "--repetitions", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("speedup"), std::string::npos);

  // Same inputs and seeds give identical outputs.
  ASSERT_EQ(run({"train-ae", "--manifest", p("train/manifest.json"), "--spec", p("spec.json"), "--train", p("ae.json"),
                 "--out", p("ae2.ckpt")})
                .code,
            0);
  EXPECT_EQ(read_file(dir / "ae.ckpt"), read_file(dir / "ae2.ckpt"));
}
