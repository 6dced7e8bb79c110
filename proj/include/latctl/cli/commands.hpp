// latctl — the work behind each CLI subcommand: dataset generation, training
// with resume, held-out evaluation with control runs, closed-loop rollouts
// with frame capture, imagined rollouts, and latent-space maps.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/ctrl/mpc.hpp"
#include "latctl/env/env.hpp"
#include "latctl/errors.hpp"
#include "latctl/io/checkpoint.hpp"
#include "latctl/io/config.hpp"
#include "latctl/io/dataset.hpp"
#include "latctl/io/image.hpp"
#include "latctl/io/metrics.hpp"
#include "latctl/model/dream.hpp"
#include "latctl/model/train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

// Stamped by the build system with the source revision; the fallback keeps
// header-only consumers compiling.
#ifndef LATCTL_BUILD_ID
#define LATCTL_BUILD_ID "unversioned"
#endif

namespace latctl::cli {

inline const char* build_id() { return LATCTL_BUILD_ID; }

// Stream id for model weight initialization, distinct from the data and
// per-epoch shuffle streams derived from the same run seed.
constexpr std::uint64_t kInitStream = 0x5EED;

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  if (dir.empty() || dir == ".") return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

inline void ensure_parent_dir(const std::string& file_path) {
  ensure_dir(std::filesystem::path(file_path).parent_path().string());
}

inline std::ofstream open_text(const std::string& path, bool append = false) {
  ensure_parent_dir(path);
  std::ofstream out(path, append ? (std::ios::out | std::ios::app) : std::ios::out);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = open_text(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

inline EnvSpec env_spec_of(EnvKind kind) {
  if (kind == EnvKind::Planar) return planar_env_spec();
  if (kind == EnvKind::Pendulum) return pendulum_env_spec();
  throw ValidationError("the latent test environment has no command-line protocol");
}

inline std::string frame_name(const std::string& prefix, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", index);
  return prefix + buf;
}

}  // namespace detail

inline void log_line(const io::RunConfig& run, const std::string& msg) {
  if (!run.quiet) std::cout << msg << std::endl;
}

// Provenance block embedded in every emitted file: effective configuration,
// seed, container format version, and the source revision of the binary.
inline nlohmann::json make_metadata(const io::RunConfig& run) {
  nlohmann::json meta;
  meta["build"] = build_id();
  meta["format_version"] = io::kBlobVersion;
  meta["seed"] = run.seed;
  meta["config"] = io::run_config_json(run);
  return meta;
}

// "a,b" -> 2-vector; used for start states on the command line.
inline Vec parse_state_pair(const std::string& s) {
  std::istringstream is(s);
  double a = 0.0, b = 0.0;
  char comma = '\0';
  if (!(is >> a >> comma >> b) || comma != ',')
    throw ValidationError("expected a start state of the form 'a,b', got '" + s + "'");
  std::string rest;
  if (is >> rest)
    throw ValidationError("trailing text after start state '" + s + "'");
  return Vec{{a, b}};
}

// ---- shared control-run plumbing -------------------------------------------

// The planner's obstacle avoidance works on encodings of what the camera
// would see with the agent standing at each obstacle center. That obstacle's
// own disc is omitted from the frame — drawn, it would swallow the smaller
// agent disc and all six reference frames would collapse to the background.
inline std::vector<Vec> planar_obstacle_encodings(const E2cModel& model) {
  const PlanarLayout& lay = planar_layout();
  std::vector<Vec> out;
  out.reserve(lay.obstacles.size());
  for (int k = 0; k < static_cast<int>(lay.obstacles.size()); ++k)
    out.push_back(
        encode(model, planar_render(lay, PlanarState{lay.obstacles[k]}, k)).mean);
  return out;
}

inline LatentCost control_cost(EnvKind kind, const E2cModel& model) {
  LatentCost cost = default_latent_cost(kind, model.n_z, model.n_u);
  if (kind == EnvKind::Planar) cost.obstacle_encodings = planar_obstacle_encodings(model);
  return cost;
}

inline std::unique_ptr<SimEnv> make_sim_env(EnvKind kind, const Vec& start) {
  if (start.size() != 2)
    throw ValidationError("start state must have exactly two components");
  if (kind == EnvKind::Planar)
    return std::make_unique<PlanarEnv>(PlanarState{{start[0], start[1]}});
  if (kind == EnvKind::Pendulum) {
    PendulumState s;
    s.theta = start[0];
    s.omega = start[1];
    return std::make_unique<PendulumEnv>(s);
  }
  throw ValidationError("control runs need the planar or pendulum environment");
}

inline Vec default_start(EnvKind kind) {
  // Planar: the leftmost canonical start. Pendulum: hanging at rest, the
  // canonical swing-up problem.
  if (kind == EnvKind::Planar) {
    const auto& s = planar_layout().eval_starts.front();
    return Vec{{s.x(), s.y()}};
  }
  return Vec::Zero(2);
}

// Canonical evaluation starts: the fixed planar list (at most its size), or
// `count` evenly spaced at-rest release angles for the pendulum.
inline std::vector<Vec> eval_start_states(EnvKind kind, int count) {
  std::vector<Vec> starts;
  if (kind == EnvKind::Planar) {
    const auto& canon = planar_layout().eval_starts;
    if (count < 1 || count > static_cast<int>(canon.size()))
      throw ValidationError("eval.starts must lie in [1, " + std::to_string(canon.size()) +
                            "] for the planar task");
    for (int i = 0; i < count; ++i) starts.push_back(Vec{{canon[i].x(), canon[i].y()}});
  } else {
    for (const PendulumState& s : pendulum_eval_starts(count))
      starts.push_back(Vec{{s.theta, s.omega}});
  }
  return starts;
}

inline MpcOptions planner_options(const io::RunConfig& run) {
  MpcOptions opt;
  opt.horizon = run.horizon;
  opt.steps = run.steps;
  opt.receding = run.receding;
  opt.planner = run.planner;
  return opt;
}

// Loads a checkpoint and checks it against the run's environment and variant
// expectations shared by eval/control/dream/latent-map.
inline io::Checkpoint load_checked_checkpoint(const io::RunConfig& run,
                                              const std::string& ckpt_path) {
  io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
  const EnvSpec spec = detail::env_spec_of(run.env);
  if (ckpt.model.n_x != spec.n_x || ckpt.model.n_u != spec.n_u)
    throw ValidationError(ckpt_path + ": model dimensions do not match the '" +
                          env_kind_name(run.env) + "' environment");
  return ckpt;
}

// Baseline variants predict and plan through a separately fitted latent
// dynamics net; require it rather than silently degrading.
inline const MlpParams* fitted_or_null(const io::Checkpoint& ckpt) {
  if (is_e2c_family(ckpt.model.variant)) return nullptr;
  if (!ckpt.has_fitted)
    throw ValidationError("checkpoint lacks the fitted latent dynamics the '" +
                          std::string(variant_name(ckpt.model.variant)) +
                          "' variant needs; train it to completion first");
  return &ckpt.fitted;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataOutputs {
  std::string dataset_path;
};

inline GenDataOutputs cmd_gen_data(const io::RunConfig& run, std::string out_path = "") {
  if (out_path.empty()) out_path = detail::join_path(run.out_dir, "dataset.ltds");
  detail::ensure_parent_dir(out_path);
  io::DatasetSplits data = io::generate_dataset(run.env, run.data_n, run.seed);
  io::save_dataset(out_path, data, make_metadata(run));
  log_line(run, "wrote " + out_path + ": " + std::to_string(data.train.size()) + " train / " +
                    std::to_string(data.val.size()) + " val / " +
                    std::to_string(data.test.size()) + " test triples");
  return {out_path};
}

// ---- train ------------------------------------------------------------------

// Per-epoch metrics columns depend on which loss terms the variant trains on;
// plain autoencoders report no KL terms at all.
inline std::vector<std::string> train_csv_columns(Variant v) {
  if (is_e2c_family(v))
    return {"epoch", "total", "recon", "recon_next", "kl_prior", "kl_latent", "hinge"};
  if (v == Variant::VAE_SLOW) return {"epoch", "total", "recon", "kl_prior", "slowness"};
  if (v == Variant::VAE) return {"epoch", "total", "recon", "kl_prior"};
  return {"epoch", "total", "recon"};
}

inline std::vector<double> train_csv_values(Variant v, const LossBreakdown& m) {
  if (is_e2c_family(v))
    return {m.total, m.recon, m.recon_next, m.kl_prior, m.kl_latent, m.hinge};
  if (v == Variant::VAE_SLOW) return {m.total, m.recon, m.kl_prior, m.slowness};
  if (v == Variant::VAE) return {m.total, m.recon, m.kl_prior};
  return {m.total, m.recon};
}

struct TrainOutputs {
  std::string checkpoint_path;
  std::string metrics_path;
  int epochs_run = 0;
};

inline TrainOutputs cmd_train(const io::RunConfig& run, const std::string& dataset_path,
                              std::string ckpt_path = "", std::string metrics_path = "",
                              const std::string& resume_path = "") {
  if (ckpt_path.empty()) ckpt_path = detail::join_path(run.out_dir, "model.ltck");
  if (metrics_path.empty()) metrics_path = detail::join_path(run.out_dir, "train_metrics.csv");

  io::DatasetSplits data = io::load_dataset(dataset_path);
  if (data.env != run.env)
    throw ValidationError(dataset_path + " holds '" + env_kind_name(data.env) +
                          "' data but the run is configured for '" + env_kind_name(run.env) +
                          "'");
  const EnvSpec spec = detail::env_spec_of(run.env);

  io::Checkpoint ckpt;
  int start_epoch = 0;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    ckpt = io::load_checkpoint(resume_path);
    if (ckpt.model.n_x != spec.n_x || ckpt.model.n_u != spec.n_u)
      throw ValidationError(resume_path + ": checkpoint dimensions do not match the '" +
                            env_kind_name(run.env) + "' environment");
    if (ckpt.model.variant != run.variant || ckpt.model.n_z != run.n_z)
      throw ValidationError(resume_path +
                            ": checkpoint holds a different model (variant or latent size)");
    start_epoch = ckpt.epoch;
    // Hyperparameters follow the current run so epochs can be extended.
    ckpt.train_cfg = run.train;
  } else {
    ckpt.model = build_model(spec.n_x, run.n_z, spec.n_u, run.variant, run.arch);
    SeededRng init_rng = SeededRng(run.seed).split(kInitStream);
    init_model(ckpt.model, init_rng);
    ckpt.train_cfg = run.train;
    ckpt.epoch = 0;
  }
  ckpt.meta = make_metadata(run);
  ckpt.meta["dataset"] = dataset_path;

  const bool fresh_csv = !resuming || !std::filesystem::exists(metrics_path);
  detail::ensure_parent_dir(ckpt_path);
  std::ofstream csv = detail::open_text(metrics_path, /*append=*/!fresh_csv);
  if (fresh_csv) {
    const std::vector<std::string> cols = train_csv_columns(run.variant);
    for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
    csv << "\n";
    csv.flush();
  }

  int epochs_run = 0;
  auto on_epoch = [&](const EpochMetrics& em) {
    csv << em.epoch;
    for (double v : train_csv_values(run.variant, em.mean)) csv << "," << detail::fmt(v);
    csv << "\n";
    csv.flush();
    // Checkpoint after every epoch so an interrupted run resumes losslessly.
    ckpt.epoch = em.epoch + 1;
    io::save_checkpoint(ckpt_path, ckpt);
    ++epochs_run;
    log_line(run, "epoch " + std::to_string(em.epoch + 1) + "/" +
                      std::to_string(ckpt.train_cfg.epochs) + " total=" + detail::fmt(em.mean.total) +
                      " recon=" + detail::fmt(em.mean.recon));
  };
  train_model(ckpt.model, ckpt.adam, data.train, ckpt.train_cfg, run.seed, start_epoch, on_epoch);

  // Baselines plan and predict through a latent dynamics net fitted on the
  // frozen encoder; do it once the representation has finished training.
  if (!is_e2c_family(run.variant) && !ckpt.has_fitted && ckpt.epoch >= ckpt.train_cfg.epochs) {
    log_line(run, "fitting latent dynamics on the frozen encoder");
    LatentTripleSet lat = encode_latent_dataset(ckpt.model, data.train);
    DynamicsFitConfig fit_cfg;
    ckpt.fitted = fit_latent_dynamics(lat, ckpt.model.n_z, ckpt.model.n_u, fit_cfg, run.seed);
    ckpt.has_fitted = true;
  }
  io::save_checkpoint(ckpt_path, ckpt);
  log_line(run, "wrote " + ckpt_path + " (" + std::to_string(ckpt.epoch) + " epochs completed)");
  return {ckpt_path, metrics_path, epochs_run};
}

// ---- eval -------------------------------------------------------------------

struct EvalRunRow {
  Vec start;
  double latent_cost = 0.0;
  double real_cost = 0.0;
  bool success = false;
  bool all_converged = true;
  bool jitter_applied = false;
};

struct EvalOutputs {
  io::MetricsReport report;
  std::vector<EvalRunRow> runs;
  std::string json_path;
  std::string csv_path;
  std::string runs_path;
};

inline EvalOutputs cmd_eval(const io::RunConfig& run, const std::string& ckpt_path,
                            const std::string& dataset_path) {
  io::Checkpoint ckpt = load_checked_checkpoint(run, ckpt_path);
  const E2cModel& model = ckpt.model;
  const MlpParams* fitted = fitted_or_null(ckpt);

  io::DatasetSplits data = io::load_dataset(dataset_path);
  if (data.env != run.env)
    throw ValidationError(dataset_path + " holds '" + env_kind_name(data.env) +
                          "' data but the run is configured for '" + env_kind_name(run.env) +
                          "'");

  // Reconstruction and one-step-prediction losses over the held-out test
  // split, deterministic through encoder means, chunked to bound memory.
  const TripleSet& test = data.test;
  const Eigen::Index N = test.size();
  std::vector<double> state_losses, next_losses;
  state_losses.reserve(static_cast<std::size_t>(N));
  next_losses.reserve(static_cast<std::size_t>(N));
  const Eigen::Index chunk = 512;
  for (Eigen::Index base = 0; base < N; base += chunk) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk, N - base);
    const Mat X = test.X.middleCols(base, n);
    const Mat U = test.U.middleCols(base, n);
    const Mat Xn = test.Xn.middleCols(base, n);
    const EncodedBatch enc = encode_batch(model, X);
    const DecodedBatch dec = decode_batch(model, enc.mu);
    Mat Zn(model.n_z, n);
    for (Eigen::Index i = 0; i < n; ++i)
      Zn.col(i) = dream_step(model, enc.mu.col(i), U.col(i), fitted);
    const DecodedBatch decn = decode_batch(model, Zn);
    for (Eigen::Index i = 0; i < n; ++i) {
      state_losses.push_back(bernoulli_nll(dec.p.col(i), X.col(i)));
      next_losses.push_back(bernoulli_nll(decn.p.col(i), Xn.col(i)));
    }
  }

  // Control runs from the canonical starts.
  const LatentCost cost = control_cost(run.env, model);
  const MpcOptions opt = planner_options(run);
  std::vector<EvalRunRow> rows;
  std::vector<double> latent_costs, real_costs;
  int successes = 0;
  for (const Vec& s0 : eval_start_states(run.env, run.eval_starts)) {
    std::unique_ptr<SimEnv> env = make_sim_env(run.env, s0);
    const MpcResult r = mpc_run(*env, model, cost, opt, fitted);
    rows.push_back({s0, r.latent_cost, r.real_cost, r.success, r.all_converged, r.jitter_applied});
    latent_costs.push_back(r.latent_cost);
    real_costs.push_back(r.real_cost);
    successes += r.success ? 1 : 0;
    log_line(run, "control run from (" + detail::fmt(s0[0]) + ", " + detail::fmt(s0[1]) +
                      "): real cost " + detail::fmt(r.real_cost) +
                      (r.success ? ", success" : ", failure"));
  }

  EvalOutputs out;
  out.report.state_loss = io::mean_std(state_losses);
  out.report.next_state_loss = io::mean_std(next_losses);
  out.report.latent_traj_cost = io::mean_std(latent_costs);
  out.report.real_traj_cost = io::mean_std(real_costs);
  out.report.success_percent = 100.0 * successes / static_cast<double>(rows.size());
  out.report.validate();
  out.runs = rows;

  out.json_path = detail::join_path(run.out_dir, "metrics.json");
  out.csv_path = detail::join_path(run.out_dir, "metrics.csv");
  out.runs_path = detail::join_path(run.out_dir, "eval_runs.csv");

  nlohmann::json j;
  j["meta"] = make_metadata(run);
  j["checkpoint"] = ckpt_path;
  j["dataset"] = dataset_path;
  j["test_examples"] = static_cast<long long>(N);
  j["control_runs"] = static_cast<long long>(rows.size());
  j["metrics"] = out.report.to_json();
  detail::write_json_file(out.json_path, j);

  {
    std::ofstream mcsv = detail::open_text(out.csv_path);
    mcsv << out.report.to_csv();
  }
  {
    std::ofstream rcsv = detail::open_text(out.runs_path);
    rcsv << "start0,start1,latent_cost,real_cost,success,all_converged,jitter_applied\n";
    for (const EvalRunRow& r : rows)
      rcsv << detail::fmt(r.start[0]) << "," << detail::fmt(r.start[1]) << ","
           << detail::fmt(r.latent_cost) << "," << detail::fmt(r.real_cost) << ","
           << (r.success ? 1 : 0) << "," << (r.all_converged ? 1 : 0) << ","
           << (r.jitter_applied ? 1 : 0) << "\n";
  }
  log_line(run, "wrote " + out.json_path + "; success " +
                    detail::fmt(out.report.success_percent) + "%");
  return out;
}

// ---- control ----------------------------------------------------------------

// Transparent proxy that keeps every observation the controller saw; the
// control loop observes exactly once at the start and once after each applied
// control, so the capture doubles as the executed frame sequence with no
// second simulation pass.
class RecordingEnv final : public SimEnv {
 public:
  explicit RecordingEnv(SimEnv& inner) : inner_(inner) {}
  const EnvSpec& spec() const override { return inner_.spec(); }
  Vec observe() const override {
    Vec obs = inner_.observe();
    frames_.push_back(obs);
    return obs;
  }
  void apply(const Vec& u_norm) override { inner_.apply(u_norm); }
  Vec eval_state() const override { return inner_.eval_state(); }
  Vec goal_eval_state() const override { return inner_.goal_eval_state(); }
  Vec goal_observation() const override { return inner_.goal_observation(); }
  bool at_goal() const override { return inner_.at_goal(); }
  const std::vector<Vec>& frames() const { return frames_; }

 private:
  SimEnv& inner_;
  mutable std::vector<Vec> frames_;
};

struct ControlOutputs {
  MpcResult result;
  std::string csv_path;
  std::string json_path;
  std::vector<std::string> frame_paths;
};

inline ControlOutputs cmd_control(const io::RunConfig& run, const std::string& ckpt_path,
                                  Vec start = Vec(), bool write_frames = true) {
  io::Checkpoint ckpt = load_checked_checkpoint(run, ckpt_path);
  const E2cModel& model = ckpt.model;
  const MlpParams* fitted = fitted_or_null(ckpt);
  if (start.size() == 0) start = default_start(run.env);

  std::unique_ptr<SimEnv> env = make_sim_env(run.env, start);
  RecordingEnv rec(*env);
  // Fix the goal encoding up front so the per-step costs recomputed below use
  // the very same cost the planner saw.
  LatentCost cost = control_cost(run.env, model);
  cost.z_goal = encode(model, rec.goal_observation()).mean;
  const MpcResult res = mpc_run(rec, model, cost, planner_options(run), fitted);

  ControlOutputs out;
  out.result = res;
  out.csv_path = detail::join_path(run.out_dir, "trajectory.csv");
  out.json_path = detail::join_path(run.out_dir, "control_run.json");

  const EnvSpec spec = detail::env_spec_of(run.env);
  const Vec goal = env->goal_eval_state();
  {
    std::ofstream csv = detail::open_text(out.csv_path);
    csv << "step,s0,s1";
    for (int i = 0; i < model.n_z; ++i) csv << ",z" << i;
    for (int i = 0; i < model.n_u; ++i) csv << ",u" << i;
    csv << ",latent_step_cost,real_step_cost,at_goal\n";
    for (int t = 0; t < res.U.cols(); ++t) {
      const Vec& s = res.eval_states[static_cast<std::size_t>(t)];
      const Vec u = res.U.col(t);
      const Vec d = s - goal;
      const double real_step = d.dot(spec.eval_cost.R_s * d) + u.dot(spec.eval_cost.R_u * u);
      const double latent_step = quad_cost(res.Z.col(t), u, cost);
      csv << t << "," << detail::fmt(s[0]) << "," << detail::fmt(s[1]);
      for (int i = 0; i < model.n_z; ++i) csv << "," << detail::fmt(res.Z(i, t));
      for (int i = 0; i < model.n_u; ++i) csv << "," << detail::fmt(u[i]);
      csv << "," << detail::fmt(latent_step) << "," << detail::fmt(real_step) << ","
          << (res.at_goal[static_cast<std::size_t>(t)] ? 1 : 0) << "\n";
    }
  }

  if (write_frames) {
    const std::string frames_dir = detail::join_path(run.out_dir, "frames");
    detail::ensure_dir(frames_dir);
    int idx = 0;
    for (const Vec& obs : rec.frames()) {
      const io::GrayImage im =
          io::observation_image(obs, spec.image_w, spec.image_h, spec.channels);
      out.frame_paths.push_back(io::write_image(
          detail::join_path(frames_dir, detail::frame_name("frame_", idx)), im));
      ++idx;
    }
  }

  nlohmann::json j;
  j["meta"] = make_metadata(run);
  j["checkpoint"] = ckpt_path;
  j["start"] = {start[0], start[1]};
  j["steps"] = static_cast<int>(res.U.cols());
  j["success"] = res.success;
  j["latent_cost"] = res.latent_cost;
  j["real_cost"] = res.real_cost;
  j["all_converged"] = res.all_converged;
  j["jitter_applied"] = res.jitter_applied;
  j["plans"] = res.plans;
  j["final_eval_state"] = {res.eval_states.back()[0], res.eval_states.back()[1]};
  j["final_at_goal"] = static_cast<bool>(res.at_goal.back());
  j["frames"] = static_cast<int>(out.frame_paths.size());
  detail::write_json_file(out.json_path, j);

  log_line(run, "control run: real cost " + detail::fmt(res.real_cost) +
                    (res.success ? ", success" : ", failure") + "; wrote " + out.csv_path);
  return out;
}

// ---- dream ------------------------------------------------------------------

// One whitespace-separated control vector per line; '#' starts a comment and
// blank lines are skipped. Errors carry the offending line number.
inline Mat parse_action_file(const std::string& path, int n_u) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open action file: " + path);
  std::vector<Vec> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      bool ok = true;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok || used != tok.size())
        throw ValidationError(path + " line " + std::to_string(lineno) + ": '" + tok +
                              "' is not a number");
      vals.push_back(v);
    }
    if (vals.empty()) continue;
    if (static_cast<int>(vals.size()) != n_u)
      throw ValidationError(path + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(n_u) + " control value(s), got " +
                            std::to_string(vals.size()));
    rows.push_back(Eigen::Map<const Vec>(vals.data(), n_u));
  }
  Mat U(n_u, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) U.col(static_cast<Eigen::Index>(i)) = rows[i];
  return U;
}

inline Vec dream_default_start(EnvKind kind) {
  // Pendulum imagination is conventionally seeded horizontally at rest; the
  // planar default matches the control default.
  if (kind == EnvKind::Pendulum) return Vec{{-M_PI / 2.0, 0.0}};
  return default_start(kind);
}

// The start observation for imagination: a PNG of the right geometry (as
// written by the control/dream commands), or a rendered at-rest state.
inline Vec dream_start_observation(EnvKind kind, const EnvSpec& spec, const Vec& start_state,
                                   const std::string& image_path) {
  if (!image_path.empty()) {
    const io::GrayImage im = io::read_png(image_path);
    if (im.w != spec.image_w || im.h != spec.channels * spec.image_h)
      throw ValidationError(image_path + ": expected a " + std::to_string(spec.image_w) + "x" +
                            std::to_string(spec.channels * spec.image_h) +
                            " observation image, got " + std::to_string(im.w) + "x" +
                            std::to_string(im.h));
    Vec obs(spec.n_x);
    for (int i = 0; i < spec.n_x; ++i)
      obs[i] = static_cast<double>(im.px[static_cast<std::size_t>(i)]) / 255.0;
    return obs;
  }
  if (start_state.size() != 2)
    throw ValidationError("start state must have exactly two components");
  if (kind == EnvKind::Planar)
    return planar_observe(planar_layout(), PlanarState{{start_state[0], start_state[1]}});
  PendulumState s;
  s.theta = start_state[0];
  s.omega = start_state[1];
  // At-rest convention: both history channels show the same frame.
  return pendulum_observe(pendulum_params(), s, s);
}

struct DreamOutputs {
  DreamResult result;
  std::vector<std::string> frame_paths;
  std::string strip_path;
  std::string latents_path;
  std::string json_path;
};

inline DreamOutputs cmd_dream(const io::RunConfig& run, const std::string& ckpt_path,
                              const std::string& actions_path, Vec start_state = Vec(),
                              const std::string& start_image = "") {
  io::Checkpoint ckpt = load_checked_checkpoint(run, ckpt_path);
  const E2cModel& model = ckpt.model;
  const MlpParams* fitted = fitted_or_null(ckpt);
  const EnvSpec spec = detail::env_spec_of(run.env);
  if (start_state.size() == 0) start_state = dream_default_start(run.env);

  const Mat U =
      actions_path.empty() ? Mat(model.n_u, 0) : parse_action_file(actions_path, model.n_u);
  const Vec x0 = dream_start_observation(run.env, spec, start_state, start_image);
  DreamOutputs out;
  out.result = dream_rollout(model, x0, U, fitted);
  const Eigen::Index frames = out.result.frames.cols();

  detail::ensure_dir(run.out_dir);
  std::vector<io::GrayImage> images;
  for (Eigen::Index k = 0; k < frames; ++k) {
    images.push_back(io::observation_image(out.result.frames.col(k), spec.image_w, spec.image_h,
                                           spec.channels));
    out.frame_paths.push_back(io::write_image(
        detail::join_path(run.out_dir, detail::frame_name("dream_", static_cast<int>(k))),
        images.back()));
  }
  out.strip_path = detail::join_path(run.out_dir, "dream_strip");
  out.strip_path = io::write_image(out.strip_path, io::filmstrip(images));

  out.latents_path = detail::join_path(run.out_dir, "dream_latents.csv");
  double max_norm = 0.0;
  {
    std::ofstream csv = detail::open_text(out.latents_path);
    csv << "step";
    for (int i = 0; i < model.n_z; ++i) csv << ",z" << i;
    csv << ",norm\n";
    for (Eigen::Index k = 0; k < out.result.Z.cols(); ++k) {
      const double norm = out.result.Z.col(k).norm();
      max_norm = std::max(max_norm, norm);
      csv << k;
      for (int i = 0; i < model.n_z; ++i) csv << "," << detail::fmt(out.result.Z(i, k));
      csv << "," << detail::fmt(norm) << "\n";
    }
  }

  out.json_path = detail::join_path(run.out_dir, "dream_run.json");
  nlohmann::json j;
  j["meta"] = make_metadata(run);
  j["checkpoint"] = ckpt_path;
  j["imagined_steps"] = static_cast<long long>(U.cols());
  j["frames"] = static_cast<long long>(frames);
  j["max_latent_norm"] = max_norm;
  if (!start_image.empty())
    j["start_image"] = start_image;
  else
    j["start_state"] = {start_state[0], start_state[1]};
  detail::write_json_file(out.json_path, j);

  log_line(run, "imagined " + std::to_string(U.cols()) + " step(s); wrote " + out.strip_path);
  return out;
}

// ---- latent-map -------------------------------------------------------------

// Square scatter plot of 2-D points: dark dots on white, axes scaled to the
// data's bounding box, first coordinate rightward and second upward.
inline io::GrayImage scatter_image(const std::vector<std::array<double, 2>>& pts, int size = 400,
                                   int margin = 10) {
  io::GrayImage im = io::GrayImage::filled(size, size, 255);
  if (pts.empty()) return im;
  double lo[2] = {pts[0][0], pts[0][1]};
  double hi[2] = {pts[0][0], pts[0][1]};
  for (const auto& p : pts)
    for (int d = 0; d < 2; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  const double span = static_cast<double>(size - 1 - 2 * margin);
  for (const auto& p : pts) {
    double t[2];
    for (int d = 0; d < 2; ++d) {
      const double range = hi[d] - lo[d];
      t[d] = range > 0.0 ? (p[d] - lo[d]) / range : 0.5;
    }
    const int cx = margin + static_cast<int>(std::lround(t[0] * span));
    const int cy = size - 1 - margin - static_cast<int>(std::lround(t[1] * span));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x >= 0 && x < size && y >= 0 && y < size) im.at(y, x) = 0;
      }
  }
  return im;
}

struct LatentMapOutputs {
  std::string csv_path;
  std::string json_path;
  std::vector<std::string> scatter_paths;
  int rows = 0;
};

inline LatentMapOutputs cmd_latent_map(const io::RunConfig& run, const std::string& ckpt_path) {
  io::Checkpoint ckpt = load_checked_checkpoint(run, ckpt_path);
  const E2cModel& model = ckpt.model;
  const EnvSpec spec = detail::env_spec_of(run.env);

  // Assemble the observation grid and its true-state labels.
  std::vector<std::array<double, 2>> labels;
  Mat X;
  const char* label_names[2] = {"x", "y"};
  if (run.env == EnvKind::Planar) {
    const PlanarLayout& lay = planar_layout();
    for (int y = 0; y < PlanarLayout::kImage; ++y)
      for (int x = 0; x < PlanarLayout::kImage; ++x) {
        const Eigen::Vector2d pos{static_cast<double>(x), static_cast<double>(y)};
        if (planar_valid(lay, pos)) labels.push_back({pos.x(), pos.y()});
      }
    X.resize(spec.n_x, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
      X.col(static_cast<Eigen::Index>(i)) =
          planar_observe(lay, PlanarState{{labels[i][0], labels[i][1]}});
  } else {
    label_names[0] = "theta";
    label_names[1] = "omega";
    const PendulumParams& par = pendulum_params();
    const double frame_dt = par.dt * par.substeps;
    constexpr int kThetaBins = 36;
    constexpr int kOmegaBins = 17;  // -8 .. 8 inclusive, step 1
    std::vector<Vec> obs;
    for (int k = 0; k < kThetaBins; ++k)
      for (int j = 0; j < kOmegaBins; ++j) {
        PendulumState curr;
        curr.theta = wrap_angle((k + 0.5) * 2.0 * M_PI / kThetaBins - M_PI);
        curr.omega = -par.omega_max + j * (2.0 * par.omega_max / (kOmegaBins - 1));
        // Kinematic predecessor one frame back, so the two-channel input
        // carries the grid point's velocity while the label stays on-grid.
        PendulumState prev;
        prev.theta = wrap_angle(curr.theta - curr.omega * frame_dt);
        prev.omega = curr.omega;
        labels.push_back({curr.theta, curr.omega});
        obs.push_back(pendulum_observe(par, prev, curr));
      }
    X.resize(spec.n_x, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = obs[i];
  }

  const Mat Z = encode_batch(model, X).mu;

  LatentMapOutputs out;
  out.rows = static_cast<int>(labels.size());
  out.csv_path = detail::join_path(run.out_dir, "latent_map.csv");
  {
    std::ofstream csv = detail::open_text(out.csv_path);
    csv << label_names[0] << "," << label_names[1];
    for (int i = 0; i < model.n_z; ++i) csv << ",z" << i;
    csv << "\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
      csv << detail::fmt(labels[i][0]) << "," << detail::fmt(labels[i][1]);
      for (int d = 0; d < model.n_z; ++d)
        csv << "," << detail::fmt(Z(d, static_cast<Eigen::Index>(i)));
      csv << "\n";
    }
  }

  // One scatter for a plane, one per latent-coordinate pair otherwise.
  std::vector<std::pair<int, int>> pairs;
  if (model.n_z == 2) {
    pairs.emplace_back(0, 1);
  } else {
    for (int a = 0; a < model.n_z; ++a)
      for (int b = a + 1; b < model.n_z; ++b) pairs.emplace_back(a, b);
  }
  for (const auto& [a, b] : pairs) {
    std::vector<std::array<double, 2>> pts;
    pts.reserve(labels.size());
    for (Eigen::Index i = 0; i < Z.cols(); ++i) pts.push_back({Z(a, i), Z(b, i)});
    const std::string base =
        model.n_z == 2
            ? detail::join_path(run.out_dir, "latent_scatter")
            : detail::join_path(run.out_dir, "latent_scatter_z" + std::to_string(a) + "z" +
                                                 std::to_string(b));
    out.scatter_paths.push_back(io::write_image(base, scatter_image(pts)));
  }

  out.json_path = detail::join_path(run.out_dir, "latent_map.json");
  nlohmann::json j;
  j["meta"] = make_metadata(run);
  j["checkpoint"] = ckpt_path;
  j["rows"] = out.rows;
  j["labels"] = {label_names[0], label_names[1]};
  detail::write_json_file(out.json_path, j);

  log_line(run, "mapped " + std::to_string(out.rows) + " states; wrote " + out.csv_path);
  return out;
}

}  // namespace latctl::cli
