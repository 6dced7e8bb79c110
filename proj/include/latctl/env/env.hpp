// latctl — environment façade: observation assembly, dataset sampling,
// true-state evaluation costs, success predicates, and the simulator
// interface consumed by the receding-horizon controller.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/rng.hpp"
#include "latctl/data.hpp"
#include "latctl/env/pendulum.hpp"
#include "latctl/env/planar.hpp"
#include "latctl/errors.hpp"

#include <memory>
#include <string>
#include <vector>

namespace latctl {

enum class EnvKind { Planar, Pendulum, Latent };

inline const char* env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::Planar: return "planar";
    case EnvKind::Pendulum: return "pendulum";
    case EnvKind::Latent: return "latent";
  }
  return "?";
}

inline EnvKind parse_env_kind(const std::string& name) {
  if (name == "planar") return EnvKind::Planar;
  if (name == "pendulum") return EnvKind::Pendulum;
  if (name == "latent") return EnvKind::Latent;
  throw ValidationError("unknown environment: " + name);
}

// Quadratic evaluation cost on true states; the same matrices are used for
// the true-model planning baseline and for scoring executed trajectories.
struct EvalCost {
  Mat R_s;
  Mat R_u;
};

// Static description of an environment: dimensions, control scaling, and the
// evaluation/success constants. Controls cross every API above the raw
// simulators normalized to [-1, 1]^{n_u}; u_max_raw converts back.
struct EnvSpec {
  EnvKind kind = EnvKind::Planar;
  int n_x = 0;
  int n_u = 0;
  int image_w = 0;
  int image_h = 0;
  int channels = 1;
  Vec u_max_raw;
  EvalCost eval_cost;
  double success_eps = 0.0;        // planar: pixels; pendulum: radians from upright
  double success_omega_eps = 0.0;  // pendulum only
  int hold_steps = 10;             // success must hold through this many final steps
};

inline EnvSpec planar_env_spec() {
  EnvSpec s;
  s.kind = EnvKind::Planar;
  s.n_x = PlanarLayout::kPixels;
  s.n_u = 2;
  s.image_w = PlanarLayout::kImage;
  s.image_h = PlanarLayout::kImage;
  s.channels = 1;
  s.u_max_raw = Vec::Constant(2, planar_layout().u_max);
  s.eval_cost.R_s = 0.1 * Mat::Identity(2, 2);
  s.eval_cost.R_u = Mat::Identity(2, 2);
  s.success_eps = 2.0;
  return s;
}

inline EnvSpec pendulum_env_spec() {
  EnvSpec s;
  s.kind = EnvKind::Pendulum;
  s.n_x = 2 * PendulumParams::kPixels;
  s.n_u = 1;
  s.image_w = PendulumParams::kImage;
  s.image_h = PendulumParams::kImage;
  s.channels = 2;
  s.u_max_raw = Vec::Constant(1, pendulum_params().u_max);
  s.eval_cost.R_s = Mat::Identity(2, 2);
  s.eval_cost.R_u = 0.1 * Mat::Identity(1, 1);
  s.success_eps = 0.35;
  s.success_omega_eps = 1.5;
  return s;
}

// ---- observations ----------------------------------------------------------

inline Vec planar_observe(const PlanarLayout& lay, const PlanarState& s) {
  return planar_render(lay, s);
}

// Channel 0 carries the previous frame, channel 1 the current one, so a single
// observation exposes one step of history (enough to infer angular velocity).
inline Vec pendulum_observe(const PendulumParams& p, const PendulumState& s_prev,
                            const PendulumState& s_curr) {
  Vec obs(2 * PendulumParams::kPixels);
  obs.head(PendulumParams::kPixels) = pendulum_render(p, s_prev);
  obs.tail(PendulumParams::kPixels) = pendulum_render(p, s_curr);
  return obs;
}

// ---- evaluation-state charts ----------------------------------------------

// Planar true state for evaluation: raw pixel position.
inline Vec planar_eval_state(const PlanarState& s) {
  return Vec{{s.pos.x(), s.pos.y()}};
}

// Pendulum true state for evaluation: deviation from the upright target,
// (wrap(theta - pi), omega), so the goal sits at the origin.
inline Vec pendulum_eval_state(const PendulumState& s) {
  return Vec{{wrap_angle(s.theta - M_PI), s.omega}};
}

inline bool planar_at_goal(const PlanarLayout& lay, const PlanarState& s, double eps) {
  return (s.pos - lay.goal).norm() < eps;
}

inline bool pendulum_at_goal(const PendulumState& s, double eps, double omega_eps) {
  return std::abs(wrap_angle(s.theta - M_PI)) < eps && std::abs(s.omega) < omega_eps;
}

// ---- dataset sampling ------------------------------------------------------

// Draws N (x_t, u_t, x_next) triples with states uniform over the valid state
// space and controls uniform over the admissible box; controls are stored
// normalized to [-1, 1]^{n_u}. Deterministic given the RNG state.
inline TripleSet sample_dataset(const EnvSpec& spec, int count, SeededRng& rng) {
  if (count < 1) throw ValidationError("sample_dataset: count must be >= 1");
  TripleSet out;
  out.X = Mat(spec.n_x, count);
  out.U = Mat(spec.n_u, count);
  out.Xn = Mat(spec.n_x, count);
  if (spec.kind == EnvKind::Planar) {
    const PlanarLayout& lay = planar_layout();
    const double lo = lay.bound_lo(), hi = lay.bound_hi();
    for (int i = 0; i < count; ++i) {
      PlanarState s;
      do {
        s.pos.x() = lo + rng.uniform() * (hi - lo);
        s.pos.y() = lo + rng.uniform() * (hi - lo);
      } while (!planar_clear_of_obstacles(lay, s.pos));
      Eigen::Vector2d u_raw{(2.0 * rng.uniform() - 1.0) * lay.u_max,
                            (2.0 * rng.uniform() - 1.0) * lay.u_max};
      PlanarState sn = planar_step(lay, s, u_raw);
      out.X.col(i) = planar_observe(lay, s);
      out.U.col(i) = Vec{{u_raw.x() / lay.u_max, u_raw.y() / lay.u_max}};
      out.Xn.col(i) = planar_observe(lay, sn);
    }
  } else if (spec.kind == EnvKind::Pendulum) {
    const PendulumParams& par = pendulum_params();
    for (int i = 0; i < count; ++i) {
      // The uniformly drawn state acts as the predecessor s_{-1}; one
      // uniform-torque control step produces the anchor s_0, so the
      // observation's history channel is dynamically consistent.
      PendulumState sm1;
      sm1.theta = wrap_angle(-M_PI + rng.uniform() * 2.0 * M_PI);
      sm1.omega = (2.0 * rng.uniform() - 1.0) * par.omega_max;
      const double u_prev = (2.0 * rng.uniform() - 1.0) * par.u_max;
      const double u_t = (2.0 * rng.uniform() - 1.0) * par.u_max;
      PendulumState s0 = pendulum_control_step(par, sm1, u_prev);
      PendulumState s1 = pendulum_control_step(par, s0, u_t);
      out.X.col(i) = pendulum_observe(par, sm1, s0);
      out.U.col(i) = Vec::Constant(1, u_t / par.u_max);
      out.Xn.col(i) = pendulum_observe(par, s0, s1);
    }
  } else {
    throw ValidationError("sample_dataset: only planar and pendulum environments have datasets");
  }
  return out;
}

// ---- trajectory scoring ----------------------------------------------------

// Accumulated quadratic deviation from the goal plus control effort:
//   sum_t (s_t - g)' R_s (s_t - g)  +  sum_t u_t' R_u u_t
// over evaluation-chart states and normalized controls.
inline double true_cost(const EvalCost& cost, const std::vector<Vec>& eval_states,
                        const std::vector<Vec>& controls_norm, const Vec& goal_eval) {
  double total = 0.0;
  for (const Vec& s : eval_states) {
    const Vec d = s - goal_eval;
    total += d.dot(cost.R_s * d);
  }
  for (const Vec& u : controls_norm) total += u.dot(cost.R_u * u);
  return total;
}

// True iff the trajectory enters the goal set at some step t <= hold_from and
// stays inside it through the end.
inline bool success_hold(const std::vector<bool>& at_goal_flags, int hold_from) {
  if (at_goal_flags.empty()) return false;
  int last_bad = -1;
  for (int t = 0; t < static_cast<int>(at_goal_flags.size()); ++t) {
    if (!at_goal_flags[t]) last_bad = t;
  }
  return last_bad + 1 <= std::min<int>(hold_from, static_cast<int>(at_goal_flags.size()) - 1);
}

// ---- canonical start states ------------------------------------------------

// Thirty evenly spaced release angles around the circle, at rest; used by the
// evaluation table's pendulum control runs.
inline std::vector<PendulumState> pendulum_eval_starts(int count = 30) {
  std::vector<PendulumState> starts;
  starts.reserve(count);
  for (int k = 0; k < count; ++k) {
    PendulumState s;
    s.theta = wrap_angle((k + 0.5) * 2.0 * M_PI / count - M_PI);
    s.omega = 0.0;
    starts.push_back(s);
  }
  return starts;
}

// Seeded near-bottom start used by the swing-up benchmark runs.
inline PendulumState pendulum_seeded_start(uint64_t seed) {
  SeededRng rng(seed);
  PendulumState s;
  s.theta = (2.0 * rng.uniform() - 1.0) * (M_PI / 4.0);
  s.omega = 2.0 * rng.uniform() - 1.0;
  return s;
}

// ---- simulator interface ---------------------------------------------------

// The controller's view of a live environment: observe pixels, apply one
// normalized control, and expose the evaluation chart for scoring.
class SimEnv {
 public:
  virtual ~SimEnv() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vec observe() const = 0;
  virtual void apply(const Vec& u_norm) = 0;
  virtual Vec eval_state() const = 0;
  virtual Vec goal_eval_state() const = 0;
  virtual Vec goal_observation() const = 0;
  virtual bool at_goal() const = 0;
};

class PlanarEnv final : public SimEnv {
 public:
  explicit PlanarEnv(const PlanarState& start) : spec_(planar_env_spec()), state_(start) {
    if (!planar_valid(planar_layout(), start.pos))
      throw ValidationError("PlanarEnv: start state violates bounds or obstacle clearance");
  }
  const EnvSpec& spec() const override { return spec_; }
  Vec observe() const override { return planar_observe(planar_layout(), state_); }
  void apply(const Vec& u_norm) override {
    if (u_norm.size() != 2) throw ValidationError("PlanarEnv: control must be a 2-vector");
    const double m = planar_layout().u_max;
    state_ = planar_step(planar_layout(), state_, {u_norm[0] * m, u_norm[1] * m});
  }
  Vec eval_state() const override { return planar_eval_state(state_); }
  Vec goal_eval_state() const override {
    const auto& g = planar_layout().goal;
    return Vec{{g.x(), g.y()}};
  }
  Vec goal_observation() const override {
    return planar_observe(planar_layout(), PlanarState{planar_layout().goal});
  }
  bool at_goal() const override {
    return planar_at_goal(planar_layout(), state_, spec_.success_eps);
  }
  const PlanarState& state() const { return state_; }

 private:
  EnvSpec spec_;
  PlanarState state_;
};

class PendulumEnv final : public SimEnv {
 public:
  explicit PendulumEnv(const PendulumState& start)
      : spec_(pendulum_env_spec()), prev_(start), curr_(start) {}
  const EnvSpec& spec() const override { return spec_; }
  Vec observe() const override { return pendulum_observe(pendulum_params(), prev_, curr_); }
  void apply(const Vec& u_norm) override {
    if (u_norm.size() != 1) throw ValidationError("PendulumEnv: control must be a scalar");
    const PendulumParams& p = pendulum_params();
    PendulumState next = pendulum_control_step(p, curr_, u_norm[0] * p.u_max);
    prev_ = curr_;
    curr_ = next;
  }
  Vec eval_state() const override { return pendulum_eval_state(curr_); }
  Vec goal_eval_state() const override { return Vec::Zero(2); }
  Vec goal_observation() const override {
    const PendulumState up{M_PI, 0.0};
    return pendulum_observe(pendulum_params(), up, up);
  }
  bool at_goal() const override {
    return pendulum_at_goal(curr_, spec_.success_eps, spec_.success_omega_eps);
  }
  const PendulumState& state() const { return curr_; }

 private:
  EnvSpec spec_;
  PendulumState prev_;
  PendulumState curr_;
};

// Synthetic environment whose true dynamics ARE a given affine latent system
// and whose observation is the state itself. With an identity encoder the
// learned model matches reality exactly, pinning down the controller's
// bookkeeping: executed real cost must equal planned latent cost.
class LatentSimEnv final : public SimEnv {
 public:
  LatentSimEnv(Mat A, Mat B, Vec offset, Vec start, Vec goal, EvalCost cost)
      : A_(std::move(A)), B_(std::move(B)), o_(std::move(offset)),
        z_(std::move(start)), goal_(std::move(goal)) {
    spec_.kind = EnvKind::Latent;
    spec_.n_x = static_cast<int>(z_.size());
    spec_.n_u = static_cast<int>(B_.cols());
    spec_.image_w = spec_.n_x;
    spec_.image_h = 1;
    spec_.u_max_raw = Vec::Ones(spec_.n_u);
    spec_.eval_cost = std::move(cost);
    spec_.success_eps = 1e-6;
  }
  const EnvSpec& spec() const override { return spec_; }
  Vec observe() const override { return z_; }
  void apply(const Vec& u_norm) override { z_ = A_ * z_ + B_ * u_norm + o_; }
  Vec eval_state() const override { return z_; }
  Vec goal_eval_state() const override { return goal_; }
  Vec goal_observation() const override { return goal_; }
  bool at_goal() const override { return (z_ - goal_).norm() < spec_.success_eps; }

 private:
  EnvSpec spec_;
  Mat A_, B_;
  Vec o_;
  Vec z_;
  Vec goal_;
};

}  // namespace latctl
