// latctl — closing the loop: encode observations, plan in latent space with
// iLQR or the message-passing optimizer, execute against a simulator, and
// keep the bookkeeping both in latent units and in true task units.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/ctrl/aico.hpp"
#include "latctl/ctrl/cost.hpp"
#include "latctl/ctrl/ilqr.hpp"
#include "latctl/ctrl/linearize.hpp"
#include "latctl/env/env.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/e2c.hpp"

#include <string>
#include <utility>
#include <vector>

namespace latctl {

enum class PlannerKind { Ilqr, Aico };

inline const char* planner_name(PlannerKind k) {
  return k == PlannerKind::Ilqr ? "ilqr" : "aico";
}

inline PlannerKind parse_planner(const std::string& s) {
  if (s == "ilqr") return PlannerKind::Ilqr;
  if (s == "aico") return PlannerKind::Aico;
  throw ValidationError("unknown optimizer '" + s + "' (expected ilqr or aico)");
}

struct MpcOptions {
  int horizon = 10;   // controls per plan
  int steps = 0;      // controls actually executed against the environment
  bool receding = true;  // false: plan once with horizon == steps, run open loop
  PlannerKind planner = PlannerKind::Ilqr;
  IlqrOptions ilqr;
  AicoOptions aico;
};

struct MpcResult {
  Mat U;                         // n_u × steps, executed normalized controls
  Mat Z;                         // n_z × (steps+1), encoder means of visited observations
  std::vector<Vec> eval_states;  // steps+1 true-task states
  std::vector<bool> at_goal;     // steps+1 success-predicate flags
  double latent_cost = 0.0;      // planner-cost units along the executed path
  double real_cost = 0.0;        // true-task units along the executed path
  bool success = false;
  bool all_converged = true;     // AND of per-plan optimizer convergence flags
  bool jitter_applied = false;   // message-passing numerical fallback seen
  int plans = 0;
};

namespace detail {

inline Trajectory solve_plan(const ControlProblem& problem, const Mat& U_init,
                             const MpcOptions& opt, MpcResult& diag) {
  ++diag.plans;
  if (opt.planner == PlannerKind::Ilqr) {
    Trajectory t = ilqr(problem, U_init, opt.ilqr);
    diag.all_converged = diag.all_converged && t.converged;
    return t;
  }
  AicoResult r = aico(problem, U_init, {}, opt.aico);
  diag.all_converged = diag.all_converged && r.trajectory.converged;
  diag.jitter_applied = diag.jitter_applied || r.jitter_applied;
  return std::move(r.trajectory);
}

}  // namespace detail

// Run model-based control against an environment. The goal is fixed up
// front: cost_template with z_goal filled from the encoder mean of the
// environment's goal observation (a caller-supplied non-empty z_goal wins).
// Each executed step re-encodes the current observation, replans over
// opt.horizon controls warm-started from the previous solution shifted by
// one (zero-padded), and applies the first planned control; with
// opt.receding false the problem is solved once over opt.steps controls and
// executed open loop.
//
// Optimizer non-convergence is recorded in the result, never fatal. With
// opt.steps == 0 the environment is left untouched and the result holds the
// start state alone.
inline MpcResult mpc_run(SimEnv& env, const E2cModel& model, const LatentCost& cost_template,
                         const MpcOptions& opt, const MlpParams* fitted = nullptr) {
  const EnvSpec& spec = env.spec();
  if (opt.steps < 0) throw ValidationError("mpc_run: steps must be non-negative");
  if (opt.horizon < 1) throw ValidationError("mpc_run: horizon must be at least 1");
  if (model.n_x != spec.n_x || model.n_u != spec.n_u)
    throw ValidationError("mpc_run: model dimensions do not match the environment");

  LatentCost cost = cost_template;
  if (cost.z_goal.size() == 0) cost.z_goal = encode(model, env.goal_observation()).mean;
  cost.validate();
  if (cost.z_goal.size() != model.n_z)
    throw ValidationError("mpc_run: cost dimension does not match the model latent size");

  const LatentDynamics dyn = model_dynamics(model, fitted);
  const int n_u = model.n_u;
  const int plan_len = opt.receding ? opt.horizon : opt.steps;

  MpcResult res;
  res.Z = Mat(model.n_z, opt.steps + 1);
  res.U = Mat(n_u, opt.steps);

  Vec z = encode(model, env.observe()).mean;
  res.Z.col(0) = z;
  res.eval_states.push_back(env.eval_state());
  res.at_goal.push_back(env.at_goal());

  Mat warm = Mat::Zero(n_u, plan_len);
  Trajectory plan;
  for (int step = 0; step < opt.steps; ++step) {
    const bool replan = opt.receding || step == 0;
    if (replan) {
      ControlProblem problem;
      problem.z_start = z;
      problem.T = plan_len + 1;
      problem.cost = cost;
      problem.dynamics = dyn;
      problem.u_lo = Vec::Constant(n_u, -1.0);
      problem.u_hi = Vec::Constant(n_u, 1.0);
      plan = detail::solve_plan(problem, warm, opt, res);
      // Next warm start: this solution shifted one step, zero-padded.
      if (opt.receding && plan_len > 1) {
        warm.leftCols(plan_len - 1) = plan.U.rightCols(plan_len - 1);
        warm.col(plan_len - 1).setZero();
      }
    }
    const Vec u = opt.receding ? Vec(plan.U.col(0)) : Vec(plan.U.col(step));
    res.U.col(step) = u;
    res.latent_cost += quad_cost(z, u, cost);

    env.apply(u);
    z = encode(model, env.observe()).mean;
    res.Z.col(step + 1) = z;
    res.eval_states.push_back(env.eval_state());
    res.at_goal.push_back(env.at_goal());
  }
  if (opt.steps > 0) {
    res.latent_cost += state_cost(z, cost);
    std::vector<Vec> controls;
    controls.reserve(opt.steps);
    for (int t = 0; t < opt.steps; ++t) controls.push_back(res.U.col(t));
    res.real_cost = true_cost(spec.eval_cost, res.eval_states, controls, env.goal_eval_state());
    res.success = success_hold(res.at_goal, opt.steps - spec.hold_steps);
  } else {
    // Nothing executed: zero costs by definition; success reflects the start.
    res.success = res.at_goal.front();
  }
  return res;
}

// The benchmark protocols from the two tasks, expressed through mpc_run.
// Planar: one long-horizon plan executed open loop. Pendulum: receding
// horizon with replanning at every step.
inline MpcResult planar_single_shot(SimEnv& env, const E2cModel& model,
                                    const LatentCost& cost_template, PlannerKind planner,
                                    int steps = 40) {
  MpcOptions opt;
  opt.horizon = steps;
  opt.steps = steps;
  opt.receding = false;
  opt.planner = planner;
  return mpc_run(env, model, cost_template, opt);
}

inline MpcResult pendulum_mpc(SimEnv& env, const E2cModel& model, const LatentCost& cost_template,
                              PlannerKind planner, int horizon = 10, int steps = 80) {
  MpcOptions opt;
  opt.horizon = horizon;
  opt.steps = steps;
  opt.receding = true;
  opt.planner = planner;
  return mpc_run(env, model, cost_template, opt);
}

// Latent-space cost defaults for the benchmark tasks, mirroring the
// true-task evaluation weights on the latent dimensions.
inline LatentCost default_latent_cost(EnvKind kind, int n_z, int n_u) {
  LatentCost c;
  c.z_goal = Vec();
  if (kind == EnvKind::Planar) {
    c.R_z = 0.1 * Mat::Identity(n_z, n_z);
    c.R_u = Mat::Identity(n_u, n_u);
    c.R_o = 1.0;
    c.d0 = 1.0;
  } else {
    c.R_z = Mat::Identity(n_z, n_z);
    c.R_u = 0.1 * Mat::Identity(n_u, n_u);
  }
  return c;
}

}  // namespace latctl
