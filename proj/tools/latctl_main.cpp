// latctl — command-line front end: configuration layering (defaults, then
// config file, then command-line flags) and dispatch to the subcommand
// implementations, with failures mapped onto the documented exit codes.
// SPDX-License-Identifier: MIT
#include "latctl/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

using latctl::Vec;

struct CliFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool quiet = false;
  std::string env;
  std::string variant;
  int n_z = 0;
  std::string planner;
  int horizon = 0;
  int steps = 0;
  bool receding = false;
  int starts = 0;
  // gen-data
  int data_n = 0;
  std::string gd_out;
  // train
  std::string tr_dataset, tr_out, tr_metrics, tr_resume;
  int epochs = 0;
  // eval
  std::string ev_ckpt, ev_dataset;
  // control
  std::string ct_ckpt, ct_start;
  std::uint64_t ct_start_seed = 0;
  bool ct_no_frames = false;
  // dream
  std::string dr_ckpt, dr_actions, dr_start, dr_image;
  // latent-map
  std::string lm_ckpt;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent dynamics models and stochastic optimal control from pixels"};
  app.require_subcommand(1);
  CliFlags f;

  app.add_option("--config", f.config_path, "INI-style configuration file");
  app.add_option("--seed", f.seed, "run seed (data, initialization, training)");
  app.add_option("--out-dir", f.out_dir, "directory for emitted files");
  app.add_flag("--quiet", f.quiet, "suppress progress output");
  app.add_option("--env", f.env, "environment: planar or pendulum");
  app.add_option("--variant", f.variant,
                 "model variant: ae, vae, vae_slow, e2c, e2c_global, e2c_nonlin, "
                 "e2c_no_latent_kl");
  app.add_option("--n-z", f.n_z, "latent dimension");
  app.add_option("--planner", f.planner, "trajectory optimizer: ilqr or aico");
  app.add_option("--horizon", f.horizon, "planning horizon (controls per plan)");
  app.add_option("--steps", f.steps, "executed control steps");
  app.add_option("--receding", f.receding, "replan every step (true) or plan once (false)");
  app.add_option("--starts", f.starts, "control runs aggregated by eval");

  CLI::App* gen = app.add_subcommand("gen-data", "sample a dataset and write it to disk");
  gen->add_option("--n", f.data_n, "number of (x, u, x') triples");
  gen->add_option("--out", f.gd_out, "dataset path (default: <out-dir>/dataset.ltds)");

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  train->add_option("--dataset", f.tr_dataset, "dataset file")->required();
  train->add_option("--out", f.tr_out, "checkpoint path (default: <out-dir>/model.ltck)");
  train->add_option("--metrics", f.tr_metrics,
                    "per-epoch loss CSV (default: <out-dir>/train_metrics.csv)");
  train->add_option("--resume", f.tr_resume, "checkpoint to continue from");
  train->add_option("--epochs", f.epochs, "train through this many total epochs");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on held-out data and control");
  eval->add_option("--checkpoint", f.ev_ckpt, "model checkpoint")->required();
  eval->add_option("--dataset", f.ev_dataset, "dataset file (test split is used)")->required();

  CLI::App* control = app.add_subcommand("control", "run closed-loop control and record it");
  control->add_option("--checkpoint", f.ct_ckpt, "model checkpoint")->required();
  control->add_option("--start", f.ct_start, "start state 'a,b' (position / angle,velocity)");
  control->add_option("--start-seed", f.ct_start_seed,
                      "derive a near-bottom pendulum start from this seed");
  control->add_flag("--no-frames", f.ct_no_frames, "skip writing per-step frame images");

  CLI::App* dream = app.add_subcommand("dream", "roll the model forward in imagination");
  dream->add_option("--checkpoint", f.dr_ckpt, "model checkpoint")->required();
  dream->add_option("--actions", f.dr_actions,
                    "control file, one whitespace-separated vector per line");
  dream->add_option("--start", f.dr_start, "start state 'a,b' to render");
  dream->add_option("--start-image", f.dr_image, "start observation as a PNG");

  CLI::App* lmap = app.add_subcommand("latent-map", "tabulate encoder means over the state space");
  lmap->add_option("--checkpoint", f.lm_ckpt, "model checkpoint")->required();

  for (CLI::App* sub : {gen, train, eval, control, dream, lmap}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : latctl::kExitValidation;
  }

  try {
    // Config layering: environment defaults, then the config file, then
    // command-line flags; every difference from the defaults is recorded in
    // the run's override list and lands in emitted metadata.
    latctl::io::ConfigMap merged;
    if (!f.config_path.empty()) merged = latctl::io::load_config(f.config_path);
    auto overlay = [&merged](const std::string& key, const std::string& value) {
      merged.values[key] = value;
    };
    if (app.count("--env")) overlay("run.env", f.env);
    if (app.count("--seed")) overlay("run.seed", std::to_string(f.seed));
    if (app.count("--out-dir")) overlay("run.out_dir", f.out_dir);
    if (app.count("--variant")) overlay("model.variant", f.variant);
    if (app.count("--n-z")) overlay("model.n_z", std::to_string(f.n_z));
    if (app.count("--planner")) overlay("control.planner", f.planner);
    if (app.count("--horizon")) overlay("control.horizon", std::to_string(f.horizon));
    if (app.count("--steps")) overlay("control.steps", std::to_string(f.steps));
    if (app.count("--receding")) overlay("control.receding", f.receding ? "true" : "false");
    if (app.count("--starts")) overlay("eval.starts", std::to_string(f.starts));
    if (train->count("--epochs")) overlay("train.epochs", std::to_string(f.epochs));
    if (gen->count("--n")) overlay("data.n", std::to_string(f.data_n));

    latctl::io::RunConfig run = latctl::io::default_run_config(latctl::EnvKind::Planar);
    latctl::io::apply_config(run, merged);
    run.quiet = run.quiet || f.quiet;

    if (gen->parsed()) {
      latctl::cli::cmd_gen_data(run, f.gd_out);
    } else if (train->parsed()) {
      latctl::cli::cmd_train(run, f.tr_dataset, f.tr_out, f.tr_metrics, f.tr_resume);
    } else if (eval->parsed()) {
      latctl::cli::cmd_eval(run, f.ev_ckpt, f.ev_dataset);
    } else if (control->parsed()) {
      Vec start;
      if (control->count("--start-seed")) {
        if (control->count("--start"))
          throw latctl::ValidationError("--start and --start-seed are mutually exclusive");
        if (run.env != latctl::EnvKind::Pendulum)
          throw latctl::ValidationError("--start-seed draws pendulum starts; set --env pendulum");
        const latctl::PendulumState s = latctl::pendulum_seeded_start(f.ct_start_seed);
        start = Vec{{s.theta, s.omega}};
      } else if (!f.ct_start.empty()) {
        start = latctl::cli::parse_state_pair(f.ct_start);
      }
      latctl::cli::cmd_control(run, f.ct_ckpt, start, !f.ct_no_frames);
    } else if (dream->parsed()) {
      Vec start;
      if (!f.dr_start.empty()) {
        if (!f.dr_image.empty())
          throw latctl::ValidationError("--start and --start-image are mutually exclusive");
        start = latctl::cli::parse_state_pair(f.dr_start);
      }
      latctl::cli::cmd_dream(run, f.dr_ckpt, f.dr_actions, start, f.dr_image);
    } else if (lmap->parsed()) {
      latctl::cli::cmd_latent_map(run, f.lm_ckpt);
    }
    return latctl::kExitOk;
  } catch (const latctl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return latctl::kExitValidation;
  } catch (const latctl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return latctl::kExitIo;
  } catch (const latctl::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return latctl::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return latctl::kExitNumeric;
  }
}
