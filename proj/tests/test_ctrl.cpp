// latctl tests — latent-space trajectory costs, local linearization, the two
// trajectory optimizers, and the closed control loop.
// SPDX-License-Identifier: MIT
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "latctl/core/rng.hpp"
#include "latctl/ctrl/aico.hpp"
#include "latctl/ctrl/cost.hpp"
#include "latctl/ctrl/ilqr.hpp"
#include "latctl/ctrl/linearize.hpp"
#include "latctl/ctrl/mpc.hpp"
#include "latctl/env/env.hpp"
#include "latctl/model/e2c.hpp"
#include "oracles.hpp"

using namespace latctl;

namespace {

Vec random_vec(SeededRng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Mat random_mat(SeededRng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

Mat random_spd(SeededRng& rng, int n, double floor) {
  const Mat M = random_mat(rng, n, n);
  Mat S = M.transpose() * M / static_cast<double>(n) + floor * Mat::Identity(n, n);
  return 0.5 * (S + S.transpose());
}

// Independent straight-line recomputation of the stage cost.
double cost_by_loops(const Vec& z, const Vec& u, const LatentCost& c) {
  double total = 0.0;
  for (int i = 0; i < c.R_z.rows(); ++i)
    for (int j = 0; j < c.R_z.cols(); ++j)
      total += (z[i] - c.z_goal[i]) * c.R_z(i, j) * (z[j] - c.z_goal[j]);
  for (int i = 0; i < c.R_u.rows(); ++i)
    for (int j = 0; j < c.R_u.cols(); ++j) total += u[i] * c.R_u(i, j) * u[j];
  for (const Vec& zo : c.obstacle_encodings) {
    double d2 = 0.0;
    for (int i = 0; i < z.size(); ++i) d2 += (z[i] - zo[i]) * (z[i] - zo[i]);
    const double gap = c.d0 - std::sqrt(d2);
    if (gap > 0.0) total += c.R_o * gap * gap;
  }
  return total;
}

// A random but well-behaved LQG instance expressed as a ControlProblem with
// effectively unconstrained controls.
struct LqgInstance {
  ControlProblem problem;
  Mat A, B;
  Vec o;
};

LqgInstance make_lqg(SeededRng& rng, int n_z, int n_u, int T) {
  LqgInstance inst;
  Mat A = random_mat(rng, n_z, n_z, 0.6);
  // Tame the spectral radius so 20-step rollouts stay O(1).
  const double radius = std::sqrt(A.cwiseAbs2().sum());
  if (radius > 1.0) A *= 1.0 / radius;
  A += 0.5 * Mat::Identity(n_z, n_z);
  inst.A = A;
  inst.B = random_mat(rng, n_z, n_u, 1.0);
  inst.o = random_vec(rng, n_z, 0.3);

  ControlProblem& p = inst.problem;
  p.z_start = random_vec(rng, n_z, 2.0);
  p.T = T;
  p.cost.z_goal = random_vec(rng, n_z, 1.0);
  p.cost.R_z = random_spd(rng, n_z, 0.1);
  p.cost.R_u = random_spd(rng, n_u, 0.2);
  p.dynamics = affine_dynamics(inst.A, inst.B, inst.o);
  p.u_lo = Vec::Constant(n_u, -1e9);
  p.u_hi = Vec::Constant(n_u, 1e9);
  return inst;
}

// Map the problem onto the Riccati oracle's ½-convention and return the
// optimal cost in the problem's own units.
double lqg_oracle_cost(const LqgInstance& inst) {
  const ControlProblem& p = inst.problem;
  const Vec g = p.cost.z_goal;
  oracle::LqrStage stage;
  stage.A = inst.A;
  stage.B = inst.B;
  stage.c = inst.o;
  stage.Q = 2.0 * p.cost.R_z;
  stage.q = -2.0 * (p.cost.R_z * g);
  stage.R = 2.0 * p.cost.R_u;
  const std::vector<oracle::LqrStage> stages(p.T - 1, stage);
  const oracle::LqrSolution sol = oracle::riccati_solve(stages, stage.Q, stage.q, p.z_start);
  // The oracle's cost omits the constant gᵀR_z g carried by every one of the
  // T states.
  return sol.cost + static_cast<double>(p.T) * g.dot(p.cost.R_z * g);
}

double open_loop_cost(const ControlProblem& p, const Mat& U) {
  Vec z = p.z_start;
  double c = 0.0;
  for (int t = 0; t < p.T - 1; ++t) {
    const Vec u = clamp(Vec(U.col(t)), p.u_lo, p.u_hi);
    c += quad_cost(z, u, p.cost);
    z = p.dynamics.step(z, u);
  }
  return c + state_cost(z, p.cost);
}

}  // namespace

TEST_CASE("stage cost: fixed values and loop-summed oracle") {
  LatentCost c;
  c.z_goal = Vec::Zero(2);
  c.R_z = Mat::Identity(2, 2);
  c.R_u = Mat::Identity(2, 2);

  CHECK(quad_cost(Vec::Zero(2), Vec::Zero(2), c) == 0.0);
  CHECK(quad_cost(Vec{{1.0, 1.0}}, Vec::Zero(2), c) == 2.0);

  SeededRng rng(901);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_z = 2 + static_cast<int>(rng.uniform_index(4));
    const int n_u = 1 + static_cast<int>(rng.uniform_index(3));
    LatentCost cost;
    cost.z_goal = random_vec(rng, n_z);
    cost.R_z = random_spd(rng, n_z, 0.0);
    cost.R_u = random_spd(rng, n_u, 0.1);
    cost.R_o = rng.uniform() * 3.0;
    cost.d0 = 0.5 + rng.uniform();
    const int n_obs = static_cast<int>(rng.uniform_index(4));
    for (int k = 0; k < n_obs; ++k) cost.obstacle_encodings.push_back(random_vec(rng, n_z));
    const Vec z = random_vec(rng, n_z);
    const Vec u = random_vec(rng, n_u);
    CHECK(quad_cost(z, u, cost) == Catch::Approx(cost_by_loops(z, u, cost)).margin(1e-12));
  }
}

TEST_CASE("stage cost: local model has exact value and gradient, PSD curvature") {
  SeededRng rng(902);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_z = 2 + static_cast<int>(rng.uniform_index(3));
    LatentCost cost;
    cost.z_goal = random_vec(rng, n_z);
    cost.R_z = random_spd(rng, n_z, 0.05);
    cost.R_u = Mat::Identity(1, 1);
    cost.R_o = 2.0;
    cost.d0 = 1.5;
    for (int k = 0; k < 3; ++k) cost.obstacle_encodings.push_back(random_vec(rng, n_z));
    Vec z = random_vec(rng, n_z);

    const StateCostModel m = state_cost_model(z, cost);
    CHECK(m.value == Catch::Approx(state_cost(z, cost)).margin(1e-12));
    for (int i = 0; i < n_z; ++i) {
      const double fd = oracle::central_difference(
          &z[i], [&] { return state_cost(z, cost); }, 1e-6);
      CHECK(oracle::fd_match(m.grad[i], fd, 1e-5, 1e-7));
    }
    const Eigen::SelfAdjointEigenSolver<Mat> eig(m.hess);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("linearization: finite differences recover affine maps exactly") {
  SeededRng rng(903);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_z = 2 + static_cast<int>(rng.uniform_index(3));
    const int n_u = 1 + static_cast<int>(rng.uniform_index(2));
    const Mat A = random_mat(rng, n_z, n_z);
    const Mat B = random_mat(rng, n_z, n_u);
    const Vec o = random_vec(rng, n_z);
    auto f = [&](const Vec& z, const Vec& u) -> Vec { return A * z + B * u + o; };
    const Vec zb = random_vec(rng, n_z);
    const Vec ub = random_vec(rng, n_u);
    const LocalDynamics ld = linearize_finite_diff(f, zb, ub);
    CHECK((ld.A - A).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((ld.B - B).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((ld.o - o).cwiseAbs().maxCoeff() < 1e-6);
    // Exact at the expansion point by construction.
    CHECK((ld.A * zb + ld.B * ub + ld.o - f(zb, ub)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("linearization: componentwise square has derivative diag(2 z)") {
  auto f = [](const Vec& z, const Vec& u) -> Vec {
    Vec out = z.array().square().matrix();
    out += u;
    return out;
  };
  const Vec zb = Vec{{1.0, 2.0}};
  const Vec ub = Vec::Zero(2);
  const LocalDynamics ld = linearize_finite_diff(f, zb, ub);
  CHECK(ld.A(0, 0) == Catch::Approx(2.0).margin(1e-6));
  CHECK(ld.A(1, 1) == Catch::Approx(4.0).margin(1e-6));
  CHECK(std::abs(ld.A(0, 1)) < 1e-6);
  CHECK(std::abs(ld.A(1, 0)) < 1e-6);
  CHECK(ld.B.isApprox(Mat::Identity(2, 2), 1e-6));
}

TEST_CASE("linearization: transition-tensor models expose A = I + v r' exactly") {
  SeededRng rng(904);
  for (Variant variant : {Variant::E2C, Variant::E2C_GLOBAL, Variant::E2C_NO_LATENT_KL}) {
    E2cModel m = build_model(6, 3, 2, variant, ArchSizes{{16}, {16}, {16}});
    init_model(m, rng);
    if (variant == Variant::E2C_GLOBAL) {
      m.global_trans.v = random_vec(rng, 3, 0.3);
      m.global_trans.r = random_vec(rng, 3, 0.3);
      m.global_trans.B = random_mat(rng, 3, 2, 0.5);
      m.global_trans.o = random_vec(rng, 3, 0.2);
    }
    const LatentDynamics dyn = model_dynamics(m);
    const Vec z = random_vec(rng, 3);
    const Vec u = random_vec(rng, 2);
    const RankOneTransition tr = transition_params(m, z);
    const LocalDynamics ld = dyn.local(z, u);
    CHECK(ld.A.isApprox(Mat::Identity(3, 3) + tr.v * tr.r.transpose(), 1e-14));
    CHECK(ld.B.isApprox(tr.B, 1e-14));
    CHECK((dyn.step(z, u) - (ld.A * z + ld.B * u + ld.o)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("linearization: network-step models are exact at the expansion point") {
  SeededRng rng(905);
  E2cModel m = build_model(6, 3, 2, Variant::E2C_NONLIN, ArchSizes{{16}, {16}, {16}});
  init_model(m, rng);
  const LatentDynamics dyn = model_dynamics(m);
  const Vec z = random_vec(rng, 3);
  const Vec u = random_vec(rng, 2);
  const LocalDynamics ld = dyn.local(z, u);
  CHECK((ld.A * z + ld.B * u + ld.o - dyn.step(z, u)).cwiseAbs().maxCoeff() < 1e-10);

  // Baselines have no transition of their own: a fitted network is mandatory.
  E2cModel vae = build_model(6, 3, 2, Variant::VAE, ArchSizes{{16}, {16}, {16}});
  init_model(vae, rng);
  CHECK_THROWS_AS(model_dynamics(vae), ValidationError);
  MlpParams fitted = detail::make_mlp(5, {8}, 3, Act::Identity);
  init_mlp(fitted, rng);
  const LatentDynamics fdyn = model_dynamics(vae, &fitted);
  const LocalDynamics fld = fdyn.local(z, u);
  CHECK((fld.A * z + fld.B * u + fld.o - fdyn.step(z, u)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("iLQR: degenerate and already-optimal problems") {
  ControlProblem p;
  p.z_start = Vec{{0.7, -0.3}};
  p.T = 1;
  p.cost.z_goal = Vec{{1.0, 1.0}};
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = Mat::Identity(2, 2);
  p.dynamics = affine_dynamics(Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Zero(2));
  p.u_lo = Vec::Constant(2, -1.0);
  p.u_hi = Vec::Constant(2, 1.0);

  const Trajectory t1 = ilqr(p, Mat(2, 0));
  CHECK(t1.U.cols() == 0);
  CHECK(t1.Z.cols() == 1);
  CHECK(t1.converged);
  CHECK(t1.cost == Catch::Approx(state_cost(p.z_start, p.cost)).margin(1e-12));

  // Start at the goal with identity dynamics: staying put is optimal.
  p.T = 6;
  p.z_start = p.cost.z_goal;
  const Trajectory t2 = ilqr(p, Mat::Zero(2, 5));
  CHECK(t2.converged);
  CHECK(t2.cost < 1e-10);
  CHECK(t2.U.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("iLQR: validation failures") {
  ControlProblem p;
  p.z_start = Vec::Zero(2);
  p.T = 4;
  p.cost.z_goal = Vec::Zero(2);
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = Mat::Identity(1, 1);
  p.dynamics = affine_dynamics(Mat::Identity(2, 2), Mat::Ones(2, 1), Vec::Zero(2));
  p.u_lo = Vec::Constant(1, -1.0);
  p.u_hi = Vec::Constant(1, 1.0);

  CHECK_THROWS_AS(ilqr(p, Mat::Zero(1, 7)), ValidationError);  // wrong U_init length
  ControlProblem bad = p;
  bad.T = 0;
  CHECK_THROWS_AS(ilqr(bad, Mat(1, 0)), ValidationError);
  bad = p;
  bad.u_lo = Vec::Constant(1, 2.0);  // empty box
  CHECK_THROWS_AS(ilqr(bad, Mat::Zero(1, 3)), ValidationError);
  bad = p;
  bad.dynamics = LatentDynamics{};
  CHECK_THROWS_AS(ilqr(bad, Mat::Zero(1, 3)), ValidationError);
  bad = p;
  bad.cost.R_z = Mat::Identity(3, 3);
  CHECK_THROWS_AS(ilqr(bad, Mat::Zero(1, 3)), ValidationError);
}

TEST_CASE("iLQR: matches the Riccati oracle on randomized LQG problems") {
  SeededRng rng(906);
  for (int n_z : {2, 3, 8}) {
    for (int trial = 0; trial < 8; ++trial) {
      const int n_u = 1 + static_cast<int>(rng.uniform_index(3));
      const int T = trial % 2 == 0 ? 5 : 20;
      const LqgInstance inst = make_lqg(rng, n_z, n_u, T);
      const double j_star = lqg_oracle_cost(inst);
      const Trajectory t = ilqr(inst.problem, Mat::Zero(n_u, T - 1));
      CHECK(t.converged);
      CHECK(std::abs(t.cost - j_star) <= 1e-6 * std::max(1.0, std::abs(j_star)));
    }
  }
}

TEST_CASE("iLQR: double integrator reaches the goal") {
  const double dt = 0.5;
  Mat A(2, 2), B(2, 1);
  A << 1.0, dt, 0.0, 1.0;
  B << 0.0, dt;
  ControlProblem p;
  p.z_start = Vec::Zero(2);
  p.T = 20;
  p.cost.z_goal = Vec{{3.0, 0.0}};
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = 1e-4 * Mat::Identity(1, 1);
  p.dynamics = affine_dynamics(A, B, Vec::Zero(2));
  p.u_lo = Vec::Constant(1, -1e9);
  p.u_hi = Vec::Constant(1, 1e9);

  const Trajectory t = ilqr(p, Mat::Zero(1, p.T - 1));
  CHECK(t.converged);
  CHECK((t.Z.col(p.T - 1) - p.cost.z_goal).norm() < 1e-3);
}

TEST_CASE("iLQR: never worse than the initial rollout, warm start stable") {
  SeededRng rng(907);
  // A mildly nonlinear system handled through finite differences.
  auto f = [](const Vec& z, const Vec& u) -> Vec {
    Vec out(2);
    out[0] = z[0] + 0.3 * std::tanh(z[1]) + 0.1 * u[0];
    out[1] = 0.9 * z[1] + 0.4 * u[0] + 0.05 * z[0] * z[0];
    return out;
  };
  LatentDynamics dyn;
  dyn.step = f;
  dyn.local = [f](const Vec& z, const Vec& u) { return linearize_finite_diff(f, z, u); };

  ControlProblem p;
  p.z_start = Vec{{1.5, -0.8}};
  p.T = 15;
  p.cost.z_goal = Vec{{-0.5, 0.2}};
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = 0.1 * Mat::Identity(1, 1);
  p.dynamics = dyn;
  p.u_lo = Vec::Constant(1, -1.0);
  p.u_hi = Vec::Constant(1, 1.0);

  for (int trial = 0; trial < 5; ++trial) {
    const Mat U0 = random_mat(rng, 1, p.T - 1, 0.7);
    const double init_cost = open_loop_cost(p, U0);
    const Trajectory t = ilqr(p, U0);
    CHECK(t.cost <= init_cost + 1e-12);
    for (int s = 0; s < t.U.cols(); ++s) {
      CHECK(t.U(0, s) >= -1.0);
      CHECK(t.U(0, s) <= 1.0);
    }
    // Re-optimizing from the solution must not change the cost.
    const Trajectory t2 = ilqr(p, t.U);
    CHECK(std::abs(t2.cost - t.cost) < 1e-9);
  }
}

TEST_CASE("message-passing optimizer: trivial problems") {
  ControlProblem p;
  p.z_start = Vec{{0.4, 0.4}};
  p.T = 1;
  p.cost.z_goal = Vec{{0.4, 0.4}};
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = Mat::Identity(2, 2);
  p.dynamics = affine_dynamics(Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Zero(2));
  p.u_lo = Vec::Constant(2, -1.0);
  p.u_hi = Vec::Constant(2, 1.0);
  const AicoResult r1 = aico(p, Mat(2, 0));
  CHECK(r1.trajectory.converged);
  CHECK(r1.trajectory.cost == 0.0);

  // Start at the goal under identity dynamics: zero controls.
  p.T = 6;
  const AicoResult r2 = aico(p, Mat::Zero(2, 5));
  CHECK(r2.trajectory.converged);
  CHECK(r2.trajectory.U.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(r2.trajectory.cost < 1e-10);

  CHECK_THROWS_AS(aico(p, Mat::Zero(2, 5), std::vector<Mat>(3, Mat::Identity(2, 2))),
                  ValidationError);
}

TEST_CASE("message-passing optimizer: agrees with iLQR on randomized LQG problems") {
  SeededRng rng(908);
  for (int n_z : {2, 3, 8}) {
    for (int trial = 0; trial < 4; ++trial) {
      const int n_u = 1 + static_cast<int>(rng.uniform_index(3));
      const LqgInstance inst = make_lqg(rng, n_z, n_u, 12);
      const double j_star = lqg_oracle_cost(inst);
      const Trajectory ti = ilqr(inst.problem, Mat::Zero(n_u, 11));
      const std::vector<Mat> tiny_noise{1e-6 * Mat::Identity(n_z, n_z)};
      const AicoResult ra = aico(inst.problem, Mat::Zero(n_u, 11), tiny_noise);
      CHECK(ra.trajectory.converged);
      CHECK(std::abs(ra.trajectory.cost - ti.cost) <= 1e-3 * std::max(1.0, std::abs(ti.cost)));
      CHECK(std::abs(ra.trajectory.cost - j_star) <= 1e-5 * std::max(1.0, std::abs(j_star)));
    }
  }
}

TEST_CASE("message-passing optimizer: process noise does not move the LQG answer") {
  SeededRng rng(909);
  const LqgInstance inst = make_lqg(rng, 3, 2, 10);
  const Mat U0 = Mat::Zero(2, 9);
  const AicoResult small = aico(inst.problem, U0, {1e-4 * Mat::Identity(3, 3)});
  const AicoResult large = aico(inst.problem, U0, {10.0 * Mat::Identity(3, 3)});
  CHECK(small.trajectory.converged);
  CHECK(large.trajectory.converged);
  CHECK((small.trajectory.Z - large.trajectory.Z).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((small.trajectory.U - large.trajectory.U).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("message-passing optimizer: singular message covariance is jittered and flagged") {
  ControlProblem p;
  p.z_start = Vec{{1.0, 1.0}};
  p.T = 4;
  p.cost.z_goal = Vec::Zero(2);
  p.cost.R_z = Mat::Identity(2, 2);
  p.cost.R_u = Mat::Identity(1, 1);
  // No control authority and a rank-deficient A starve the forward filter of
  // covariance.
  p.dynamics = affine_dynamics(Mat::Zero(2, 2), Mat::Zero(2, 1), Vec::Zero(2));
  p.u_lo = Vec::Constant(1, -1.0);
  p.u_hi = Vec::Constant(1, 1.0);
  const AicoResult r = aico(p, Mat::Zero(1, 3));
  CHECK(r.jitter_applied);
  CHECK(all_finite(r.trajectory.Z));
}

TEST_CASE("obstacle hinge steers trajectories around encoded obstacles") {
  ControlProblem p;
  p.z_start = Vec{{-4.0, 0.0}};
  p.T = 25;
  p.cost.z_goal = Vec{{4.0, 0.0}};
  p.cost.R_z = 0.1 * Mat::Identity(2, 2);
  p.cost.R_u = 0.05 * Mat::Identity(2, 2);
  p.dynamics = affine_dynamics(Mat::Identity(2, 2), 0.5 * Mat::Identity(2, 2), Vec::Zero(2));
  p.u_lo = Vec::Constant(2, -1.0);
  p.u_hi = Vec::Constant(2, 1.0);

  const Trajectory straight = ilqr(p, Mat::Zero(2, p.T - 1));

  // Slightly off the start-goal axis so the hinge gradient has a lateral
  // component to follow (an exactly centered obstacle leaves the symmetric
  // iterates on the axis).
  const Vec obstacle = Vec{{0.0, 0.4}};
  ControlProblem guarded = p;
  guarded.cost.obstacle_encodings.push_back(obstacle);
  guarded.cost.R_o = 50.0;
  guarded.cost.d0 = 2.0;
  const Trajectory detour = ilqr(guarded, Mat::Zero(2, p.T - 1));

  auto min_obstacle_distance = [&](const Trajectory& t) {
    double dmin = 1e100;
    for (int s = 0; s < t.Z.cols(); ++s) dmin = std::min(dmin, (t.Z.col(s) - obstacle).norm());
    return dmin;
  };
  CHECK(min_obstacle_distance(straight) < 0.5);   // unguarded path cuts through
  CHECK(min_obstacle_distance(detour) > 1.0);     // guarded path swings wide
  CHECK(state_cost(detour.Z.col(p.T - 1), p.cost) < 0.05);  // still reaches the goal
}

namespace {

// Identity-encoder model over a two-dimensional latent world whose true
// dynamics equal the model's global transition tensors: the synthetic setup
// where the model is exactly right about reality.
struct LatentWorld {
  E2cModel model;
  Mat A, B;
  Vec o;
  LatentCost cost;
  Vec start, goal;

  LatentWorld() : model(build_model(2, 2, 2, Variant::E2C_GLOBAL, ArchSizes{{}, {}, {}})) {
    // Encoder head is [mu; log_std]: mean = x, log_std = 0.
    model.encoder.layers[0].W = Mat::Zero(4, 2);
    model.encoder.layers[0].W(0, 0) = 1.0;
    model.encoder.layers[0].W(1, 1) = 1.0;
    model.global_trans.v = Vec{{0.1, -0.05}};
    model.global_trans.r = Vec{{0.2, 0.1}};
    model.global_trans.B = Mat::Identity(2, 2);
    model.global_trans.o = Vec{{0.05, -0.02}};
    A = model.global_trans.A();
    B = model.global_trans.B;
    o = model.global_trans.o;
    start = Vec{{2.0, -1.5}};
    goal = Vec{{0.5, 0.5}};
    cost.z_goal = Vec();  // filled from the goal observation by mpc_run
    cost.R_z = Mat::Identity(2, 2);
    cost.R_u = 0.1 * Mat::Identity(2, 2);
  }

  LatentSimEnv env() const {
    EvalCost ec{cost.R_z, cost.R_u};
    return LatentSimEnv(A, B, o, start, goal, ec);
  }
};

}  // namespace

TEST_CASE("closed loop: on a synthetic latent world, latent and real costs coincide") {
  LatentWorld w;
  for (PlannerKind planner : {PlannerKind::Ilqr, PlannerKind::Aico}) {
    LatentSimEnv env = w.env();
    MpcOptions opt;
    opt.horizon = 8;
    opt.steps = 12;
    opt.planner = planner;
    const MpcResult res = mpc_run(env, w.model, w.cost, opt);
    CHECK(res.plans == 12);
    CHECK(std::abs(res.latent_cost - res.real_cost) < 1e-9);
    CHECK(res.U.cols() == 12);
    CHECK(res.Z.cols() == 13);
    CHECK(res.eval_states.size() == 13);
    // Encoded latent states are the environment's states themselves.
    for (int t = 0; t < res.Z.cols(); ++t)
      CHECK((res.Z.col(t) - res.eval_states[static_cast<std::size_t>(t)]).norm() == 0.0);
    CHECK(res.all_converged);
  }
}

TEST_CASE("closed loop: zero steps leaves the world untouched and costs zero") {
  LatentWorld w;
  LatentSimEnv env = w.env();
  MpcOptions opt;
  opt.horizon = 5;
  opt.steps = 0;
  const MpcResult res = mpc_run(env, w.model, w.cost, opt);
  CHECK(res.U.cols() == 0);
  CHECK(res.Z.cols() == 1);
  CHECK(res.latent_cost == 0.0);
  CHECK(res.real_cost == 0.0);
  CHECK(res.plans == 0);
  CHECK((env.observe() - w.start).norm() == 0.0);
}

TEST_CASE("closed loop: reaches and holds a reachable fixed-point goal") {
  // z' = 0.5 z + u + o with o = 0.5 * goal makes the goal a zero-control
  // fixed point, so the regulator can park there exactly.
  E2cModel model = build_model(2, 2, 2, Variant::E2C_GLOBAL, ArchSizes{{}, {}, {}});
  model.encoder.layers[0].W = Mat::Zero(4, 2);
  model.encoder.layers[0].W(0, 0) = 1.0;
  model.encoder.layers[0].W(1, 1) = 1.0;
  const Vec goal = Vec{{0.8, -0.6}};
  model.global_trans.v = Vec{{-0.5, 0.0}};  // v r' = -0.5 I on the first axis…
  model.global_trans.r = Vec{{1.0, 0.0}};
  model.global_trans.B = Mat::Identity(2, 2);
  model.global_trans.o = 0.5 * goal;
  // …and manually zero the second diagonal through A = I + v r' is not
  // possible with rank one, so accept A = diag(0.5, 1): still controllable.
  const Mat A = model.global_trans.A();

  LatentCost cost;
  cost.z_goal = Vec();
  cost.R_z = Mat::Identity(2, 2);
  cost.R_u = 1e-3 * Mat::Identity(2, 2);

  EvalCost ec{cost.R_z, cost.R_u};
  LatentSimEnv env(A, model.global_trans.B, model.global_trans.o, Vec{{2.5, 1.5}}, goal, ec);
  MpcOptions opt;
  opt.horizon = 10;
  opt.steps = 20;
  const MpcResult res = mpc_run(env, model, cost, opt);
  CHECK(res.success);
  CHECK((res.eval_states.back() - goal).norm() < 1e-6);
  // Saturation respected on the way in.
  CHECK(res.U.maxCoeff() <= 1.0 + 1e-12);
  CHECK(res.U.minCoeff() >= -1.0 - 1e-12);
}

TEST_CASE("closed loop: single-shot planning executes the whole plan open loop") {
  LatentWorld w;
  LatentSimEnv env = w.env();
  const MpcResult res = planar_single_shot(env, w.model, w.cost, PlannerKind::Ilqr, 15);
  CHECK(res.plans == 1);
  CHECK(res.U.cols() == 15);
  CHECK(res.Z.cols() == 16);
  CHECK(std::abs(res.latent_cost - res.real_cost) < 1e-9);

  // The executed controls are exactly the planned ones: replaying them
  // open-loop against the plan's own dynamics reproduces the visited states.
  Vec z = w.start;
  for (int t = 0; t < res.U.cols(); ++t) {
    CHECK((res.Z.col(t) - z).norm() < 1e-12);
    z = w.A * z + w.B * res.U.col(t) + w.o;
  }
}

TEST_CASE("closed loop: cost defaults mirror the task evaluators") {
  const LatentCost planar = default_latent_cost(EnvKind::Planar, 2, 2);
  CHECK(planar.R_z.isApprox(0.1 * Mat::Identity(2, 2)));
  CHECK(planar.R_u.isApprox(Mat::Identity(2, 2)));
  CHECK(planar.R_o == 1.0);
  CHECK(planar.d0 == 1.0);
  const LatentCost pend = default_latent_cost(EnvKind::Pendulum, 3, 1);
  CHECK(pend.R_z.isApprox(Mat::Identity(3, 3)));
  CHECK(pend.R_u.isApprox(0.1 * Mat::Identity(1, 1)));
  CHECK(pend.R_o == 0.0);

  CHECK(parse_planner("ilqr") == PlannerKind::Ilqr);
  CHECK(parse_planner("aico") == PlannerKind::Aico);
  CHECK_THROWS_AS(parse_planner("newton"), ValidationError);
}
