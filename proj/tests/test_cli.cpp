// latctl — end-to-end tests of the command-line tool: every subcommand is
// exercised as a child process against a tiny planar pipeline, checking file
// schemas, byte-identical reruns, configuration precedence, and exit codes.
// SPDX-License-Identifier: MIT
#include <catch2/catch_amalgamated.hpp>

#include "latctl/env/env.hpp"
#include "latctl/io/checkpoint.hpp"
#include "latctl/io/dataset.hpp"
#include "latctl/io/image.hpp"
#include "latctl/io/metrics.hpp"

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace latctl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "latctl_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// Runs the installed CLI with the given arguments; returns the exit code and
// optionally captures interleaved stdout+stderr.
int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  const fs::path log = scratch_root() / ("cli_log_" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(LATCTL_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

// One tiny planar pipeline shared by every test case; built once per binary
// run so Catch2's section re-execution stays cheap.
struct Pipeline {
  fs::path dir;
  fs::path config;
  fs::path dataset;
  fs::path checkpoint;
  std::string base_args;  // config + seed + out-dir

  static const Pipeline& get() {
    static const Pipeline p = [] {
      Pipeline pl;
      pl.dir = scratch_root() / "pipeline";
      fs::create_directories(pl.dir);
      pl.config = pl.dir / "tiny.ini";
      std::ofstream cfg(pl.config);
      cfg << "[model]\n"
             "variant = e2c\n"
             "encoder_hidden = [16, 16]\n"
             "decoder_hidden = [16]\n"
             "transition_hidden = [16]\n"
             "[train]\n"
             "epochs = 2\n"
             "batch_size = 32\n"
             "[data]\n"
             "n = 60\n"
             "[control]\n"
             "horizon = 6\n"
             "steps = 6\n";
      cfg.close();
      pl.base_args = "--config " + pl.config.string() + " --seed 7 --out-dir " +
                     pl.dir.string() + " --quiet";
      pl.dataset = pl.dir / "dataset.ltds";
      pl.checkpoint = pl.dir / "model.ltck";
      REQUIRE(run_cli(pl.base_args + " gen-data") == 0);
      REQUIRE(run_cli(pl.base_args + " train --dataset " + pl.dataset.string()) == 0);
      REQUIRE(run_cli(pl.base_args + " eval --checkpoint " + pl.checkpoint.string() +
                      " --dataset " + pl.dataset.string()) == 0);
      return pl;
    }();
    return p;
  }
};

}  // namespace

TEST_CASE("cli pipeline emits loadable, well-formed files") {
  const Pipeline& pl = Pipeline::get();

  SECTION("dataset loads and matches the requested size and splits") {
    const io::DatasetSplits d = io::load_dataset(pl.dataset.string());
    CHECK(d.env == EnvKind::Planar);
    CHECK(d.train.size() == 48);
    CHECK(d.val.size() == 6);
    CHECK(d.test.size() == 6);
    const io::Blob blob = io::load_blob(pl.dataset.string(), io::kDatasetMagic);
    REQUIRE(blob.header.contains("meta"));
    CHECK(blob.header["meta"].contains("build"));
    CHECK(blob.header["meta"]["seed"] == 7);
    CHECK(blob.header["meta"]["config"]["train"]["epochs"] == 2);
  }

  SECTION("checkpoint holds the configured model trained to completion") {
    io::Checkpoint ck = io::load_checkpoint(pl.checkpoint.string());
    CHECK(ck.model.variant == Variant::E2C);
    CHECK(ck.model.n_z == 2);
    CHECK(ck.model.n_x == 1600);
    CHECK(ck.epoch == 2);
    CHECK_FALSE(ck.has_fitted);  // e2c plans through its own transition model
    CHECK(ck.meta["dataset"] == pl.dataset.string());
    CHECK(ck.meta["config"]["arch"]["encoder_hidden"][0] == 16);
  }

  SECTION("train metrics CSV carries the full loss breakdown for e2c") {
    const std::vector<std::string> rows = lines_of(slurp(pl.dir / "train_metrics.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "epoch,total,recon,recon_next,kl_prior,kl_latent,hinge");
    CHECK(rows[1].rfind("0,", 0) == 0);
    CHECK(rows[2].rfind("1,", 0) == 0);
  }

  SECTION("eval emits the metrics report and one row per control run") {
    const auto j = nlohmann::json::parse(slurp(pl.dir / "metrics.json"));
    CHECK(j["control_runs"] == 5);
    CHECK(j["test_examples"] == 6);
    CHECK(j["metrics"]["state_loss"].contains("mean"));
    CHECK(j["metrics"]["success_percent"].is_number());
    CHECK(j["meta"]["build"].is_string());

    const std::vector<std::string> mcsv = lines_of(slurp(pl.dir / "metrics.csv"));
    REQUIRE(mcsv.size() == 2);
    CHECK(mcsv[0] == io::MetricsReport::csv_header());

    const std::vector<std::string> runs = lines_of(slurp(pl.dir / "eval_runs.csv"));
    REQUIRE(runs.size() == 6);
    CHECK(runs[0] == "start0,start1,latent_cost,real_cost,success,all_converged,jitter_applied");
    CHECK(runs[1].rfind("4,2.5,", 0) == 0);  // canonical leftmost start
  }
}

TEST_CASE("cli reruns with identical arguments are byte-identical") {
  const Pipeline& pl = Pipeline::get();
  const std::string ds = slurp(pl.dataset);
  const std::string ck = slurp(pl.checkpoint);
  const std::string tm = slurp(pl.dir / "train_metrics.csv");
  const std::string mj = slurp(pl.dir / "metrics.json");
  const std::string mc = slurp(pl.dir / "metrics.csv");
  const std::string er = slurp(pl.dir / "eval_runs.csv");

  REQUIRE(run_cli(pl.base_args + " gen-data") == 0);
  REQUIRE(run_cli(pl.base_args + " train --dataset " + pl.dataset.string()) == 0);
  REQUIRE(run_cli(pl.base_args + " eval --checkpoint " + pl.checkpoint.string() +
                  " --dataset " + pl.dataset.string()) == 0);

  CHECK(slurp(pl.dataset) == ds);
  CHECK(slurp(pl.checkpoint) == ck);
  CHECK(slurp(pl.dir / "train_metrics.csv") == tm);
  CHECK(slurp(pl.dir / "metrics.json") == mj);
  CHECK(slurp(pl.dir / "metrics.csv") == mc);
  CHECK(slurp(pl.dir / "eval_runs.csv") == er);
}

TEST_CASE("cli control writes the trajectory, frames, and summary") {
  const Pipeline& pl = Pipeline::get();
  const fs::path dir = scratch_root() / "control";
  const std::string args = "--config " + pl.config.string() + " --seed 7 --out-dir " +
                           dir.string() + " --quiet control --checkpoint " +
                           pl.checkpoint.string();
  REQUIRE(run_cli(args) == 0);

  const std::vector<std::string> rows = lines_of(slurp(dir / "trajectory.csv"));
  REQUIRE(rows.size() == 7);  // header + one row per executed step
  CHECK(rows[0] == "step,s0,s1,z0,z1,u0,u1,latent_step_cost,real_step_cost,at_goal");
  CHECK(rows[1].rfind("0,4,2.5,", 0) == 0);  // starts at the default start state

  // One frame per visited observation: start plus each executed step.
  std::size_t frames = 0;
  for (const auto& e : fs::directory_iterator(dir / "frames")) {
    CHECK(e.path().extension() == ".png");
    ++frames;
  }
  CHECK(frames == 7);
  const io::GrayImage first = io::read_png((dir / "frames" / "frame_000.png").string());
  CHECK(first.w == 40);
  CHECK(first.h == 40);

  const auto j = nlohmann::json::parse(slurp(dir / "control_run.json"));
  CHECK(j["steps"] == 6);
  CHECK(j["plans"] == 1);  // single-shot planar protocol plans exactly once
  CHECK(j["frames"] == 7);
  CHECK(j["success"].is_boolean());
  CHECK(j["final_eval_state"].size() == 2);

  SECTION("steps=0 leaves the environment untouched: header-only CSV, one frame") {
    const fs::path dir0 = scratch_root() / "control0";
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir0.string() +
                    " --steps 0 --quiet control --checkpoint " + pl.checkpoint.string()) == 0);
    const std::vector<std::string> only = lines_of(slurp(dir0 / "trajectory.csv"));
    REQUIRE(only.size() == 1);
    CHECK(only[0].rfind("step,", 0) == 0);
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir0 / "frames")) ++n;
    CHECK(n == 1);
    const auto j0 = nlohmann::json::parse(slurp(dir0 / "control_run.json"));
    CHECK(j0["steps"] == 0);
    CHECK(j0["plans"] == 0);
  }

  SECTION("an invalid start position is a validation error") {
    CHECK(run_cli("--config " + pl.config.string() + " --quiet control --checkpoint " +
                  pl.checkpoint.string() + " --start 20,10") == 2);  // obstacle center
  }
}

TEST_CASE("cli dream rolls the model forward in imagination") {
  const Pipeline& pl = Pipeline::get();
  const fs::path dir = scratch_root() / "dream";
  fs::create_directories(dir);
  const fs::path acts = dir / "acts.txt";
  {
    std::ofstream f(acts);
    f << "# three pushes\n0.5 0\n0.5 0  # inline comment\n\n-1 1\n";
  }
  const std::string base = "--config " + pl.config.string() + " --seed 7 --out-dir " +
                           dir.string() + " --quiet dream --checkpoint " +
                           pl.checkpoint.string();
  REQUIRE(run_cli(base + " --actions " + acts.string()) == 0);

  for (int k = 0; k < 4; ++k) {
    char name[16];
    std::snprintf(name, sizeof(name), "dream_%03d.png", k);
    CHECK(fs::exists(dir / name));
  }
  CHECK_FALSE(fs::exists(dir / "dream_004.png"));
  CHECK(fs::exists(dir / "dream_strip.png"));

  const std::vector<std::string> lat = lines_of(slurp(dir / "dream_latents.csv"));
  REQUIRE(lat.size() == 5);  // header + K+1 latent states
  CHECK(lat[0] == "step,z0,z1,norm");

  const auto j = nlohmann::json::parse(slurp(dir / "dream_run.json"));
  CHECK(j["imagined_steps"] == 3);
  CHECK(j["frames"] == 4);
  CHECK(j["max_latent_norm"].is_number());

  SECTION("no actions means a single reconstructed frame") {
    const fs::path dir1 = scratch_root() / "dream_empty";
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir1.string() +
                    " --quiet dream --checkpoint " + pl.checkpoint.string()) == 0);
    CHECK(fs::exists(dir1 / "dream_000.png"));
    CHECK_FALSE(fs::exists(dir1 / "dream_001.png"));
    CHECK(lines_of(slurp(dir1 / "dream_latents.csv")).size() == 2);
  }

  SECTION("malformed action files fail with the offending line number") {
    const fs::path bad = dir / "bad.txt";
    {
      std::ofstream f(bad);
      f << "0.5 0\nx 1\n";
    }
    std::string out;
    CHECK(run_cli(base + " --actions " + bad.string(), &out) == 2);
    CHECK(out.find("line 2") != std::string::npos);

    const fs::path wide = dir / "wide.txt";
    {
      std::ofstream f(wide);
      f << "0.5 0 0.25\n";
    }
    CHECK(run_cli(base + " --actions " + wide.string(), &out) == 2);
    CHECK(out.find("expected 2") != std::string::npos);
  }

  SECTION("a recorded frame can seed the rollout") {
    const fs::path dir2 = scratch_root() / "dream_img";
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir2.string() +
                    " --quiet control --checkpoint " + pl.checkpoint.string()) == 0);
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir2.string() +
                    " --quiet dream --checkpoint " + pl.checkpoint.string() + " --start-image " +
                    (dir2 / "frames" / "frame_000.png").string() + " --actions " +
                    acts.string()) == 0);
    CHECK(fs::exists(dir2 / "dream_003.png"));
  }
}

TEST_CASE("cli latent map tabulates every valid integer position") {
  const Pipeline& pl = Pipeline::get();
  const fs::path dir = scratch_root() / "lmap";
  REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir.string() +
                  " --quiet latent-map --checkpoint " + pl.checkpoint.string()) == 0);

  // Independent recount of the grid the map is defined over.
  int valid = 0;
  const PlanarLayout& lay = planar_layout();
  for (int y = 0; y < PlanarLayout::kImage; ++y)
    for (int x = 0; x < PlanarLayout::kImage; ++x)
      if (planar_valid(lay, {static_cast<double>(x), static_cast<double>(y)})) ++valid;

  const std::vector<std::string> rows = lines_of(slurp(dir / "latent_map.csv"));
  REQUIRE(rows.size() == static_cast<std::size_t>(valid) + 1);
  CHECK(rows[0] == "x,y,z0,z1");
  CHECK(fs::exists(dir / "latent_scatter.png"));

  const auto j = nlohmann::json::parse(slurp(dir / "latent_map.json"));
  CHECK(j["rows"] == valid);

  SECTION("rerunning reproduces the table byte for byte") {
    const std::string before = slurp(dir / "latent_map.csv");
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir.string() +
                    " --quiet latent-map --checkpoint " + pl.checkpoint.string()) == 0);
    CHECK(slurp(dir / "latent_map.csv") == before);
  }
}

TEST_CASE("cli per-variant training metrics schemas") {
  const Pipeline& pl = Pipeline::get();
  const fs::path dir = scratch_root() / "variants";
  struct Case {
    const char* variant;
    const char* header;
  };
  const Case cases[] = {
      {"ae", "epoch,total,recon"},
      {"vae", "epoch,total,recon,kl_prior"},
      {"vae_slow", "epoch,total,recon,kl_prior,slowness"},
  };
  for (const Case& c : cases) {
    const fs::path sub = dir / c.variant;
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + sub.string() +
                    " --variant " + c.variant + " --quiet train --dataset " +
                    pl.dataset.string() + " --epochs 1") == 0);
    const std::vector<std::string> rows = lines_of(slurp(sub / "train_metrics.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == c.header);
    // Baselines get a fitted latent dynamics net once training completes.
    io::Checkpoint ck = io::load_checkpoint((sub / "model.ltck").string());
    CHECK(ck.has_fitted);
  }
}

TEST_CASE("cli resume continues training from a checkpoint") {
  const Pipeline& pl = Pipeline::get();
  const fs::path dir = scratch_root() / "resume";
  const std::string common = "--config " + pl.config.string() + " --seed 7 --out-dir " +
                             dir.string() + " --quiet train --dataset " + pl.dataset.string();
  REQUIRE(run_cli(common + " --epochs 1 --out " + (dir / "m1.ltck").string() + " --metrics " +
                  (dir / "tm.csv").string()) == 0);
  REQUIRE(run_cli(common + " --epochs 2 --resume " + (dir / "m1.ltck").string() + " --out " +
                  (dir / "m2.ltck").string() + " --metrics " + (dir / "tm.csv").string()) == 0);

  // The metrics file accumulates across the resumed run without a second header.
  const std::vector<std::string> rows = lines_of(slurp(dir / "tm.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("epoch,", 0) == 0);
  CHECK(rows[1].rfind("0,", 0) == 0);
  CHECK(rows[2].rfind("1,", 0) == 0);

  // And the resumed model matches the one-shot pipeline model parameter for
  // parameter (same seed, same per-epoch streams).
  io::Checkpoint resumed = io::load_checkpoint((dir / "m2.ltck").string());
  io::Checkpoint oneshot = io::load_checkpoint(pl.checkpoint.string());
  CHECK(resumed.epoch == 2);
  REQUIRE(resumed.model.encoder.layers.size() == oneshot.model.encoder.layers.size());
  for (std::size_t l = 0; l < resumed.model.encoder.layers.size(); ++l)
    CHECK(resumed.model.encoder.layers[l].W == oneshot.model.encoder.layers[l].W);

  SECTION("resuming under a different variant or width is rejected") {
    CHECK(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir.string() +
                  " --variant vae --quiet train --dataset " + pl.dataset.string() +
                  " --resume " + (dir / "m1.ltck").string()) == 2);
  }
}

TEST_CASE("cli configuration precedence and failure exit codes") {
  const Pipeline& pl = Pipeline::get();

  SECTION("command-line flags override the config file") {
    const fs::path dir = scratch_root() / "precedence";
    REQUIRE(run_cli("--config " + pl.config.string() + " --seed 7 --out-dir " + dir.string() +
                    " --quiet train --dataset " + pl.dataset.string() + " --epochs 1") == 0);
    io::Checkpoint ck = io::load_checkpoint((dir / "model.ltck").string());
    CHECK(ck.epoch == 1);  // config says 2; the flag wins
    bool recorded = false;
    for (const auto& o : ck.meta["config"]["overrides"])
      recorded = recorded || o == "train.epochs=1";
    CHECK(recorded);
  }

  SECTION("validation failures exit 2") {
    CHECK(run_cli("--variant nope --quiet gen-data") == 2);
    CHECK(run_cli("--quiet") == 2);  // a subcommand is required
    CHECK(run_cli("--env pendulum --quiet train --dataset " + pl.dataset.string()) == 2);
    const fs::path badcfg = scratch_root() / "bad.ini";
    {
      std::ofstream f(badcfg);
      f << "[model]\nmystery = 1\n";
    }
    CHECK(run_cli("--config " + badcfg.string() + " --quiet gen-data") == 2);
  }

  SECTION("I/O failures exit 3") {
    CHECK(run_cli("--quiet train --dataset " + (scratch_root() / "absent.ltds").string()) == 3);
    CHECK(run_cli("--config " + (scratch_root() / "absent.ini").string() + " --quiet gen-data") ==
          3);
    // A flipped byte in the dataset is caught by the checksum.
    const fs::path mangled = scratch_root() / "mangled.ltds";
    std::string bytes = slurp(Pipeline::get().dataset);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x20);
    {
      std::ofstream f(mangled, std::ios::binary);
      f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::string out;
    CHECK(run_cli("--quiet train --dataset " + mangled.string(), &out) == 3);
    CHECK(out.find("checksum") != std::string::npos);
  }

  SECTION("help exits 0") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("train --help") == 0);
  }
}
