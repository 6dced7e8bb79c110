// latctl — underactuated pendulum: torque-limited swing-up dynamics and a
// line-segment rasterizer producing 48×48 binary frames.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"

namespace latctl {

// Angle convention: theta = 0 hangs straight down (stable equilibrium),
// theta = pi points straight up (the balance target). Angles live in (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);  // lands in [-pi, pi]
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

struct PendulumParams {
  static constexpr int kImage = 48;
  static constexpr int kPixels = kImage * kImage;
  double mass = 1.0;        // kg
  double length = 1.0;      // m
  double gravity = 9.81;    // m/s²
  double damping = 0.05;    // N·m·s/rad
  double dt = 0.01;         // integrator substep, seconds
  int substeps = 5;         // substeps per control step (0.05 s per control)
  double u_max = 2.0;       // torque bound, N·m — below mgl, so swing-up
                            // requires pumping energy over several swings
  double omega_max = 8.0;   // angular velocity clamp, rad/s
  double rod_pixels = 20.0; // rendered rod length
  double rod_thickness = 1.0;  // half-thickness of the rendered rod, pixels
  // The exact image center (a pixel-grid corner). With the rod pivot here,
  // no pixel center ever sits at exactly the half-thickness distance for
  // axis-aligned rods, and the frame mirrors map the pixel grid onto itself,
  // so up/down and left/right symmetry tests are bit-exact.
  Eigen::Vector2d center() const { return {24.0, 24.0}; }
};

inline const PendulumParams& pendulum_params() {
  static const PendulumParams params;
  return params;
}

struct PendulumState {
  double theta = 0.0;
  double omega = 0.0;
};

// One semi-implicit Euler substep of
//   theta_dd = -(g/l)·sin(theta) - b·omega/(m·l²) + u/(m·l²)
// with the torque clamped to the admissible band, omega clamped, theta wrapped.
inline PendulumState pendulum_step(const PendulumParams& p, const PendulumState& s,
                                   double u_raw, double dt) {
  const double u = clamp(u_raw, -p.u_max, p.u_max);
  const double ml2 = p.mass * p.length * p.length;
  const double acc = -(p.gravity / p.length) * std::sin(s.theta) -
                     p.damping * s.omega / ml2 + u / ml2;
  PendulumState out;
  out.omega = clamp(s.omega + dt * acc, -p.omega_max, p.omega_max);
  out.theta = wrap_angle(s.theta + dt * out.omega);
  return out;
}

// One control step: hold the torque constant across the integrator substeps.
inline PendulumState pendulum_control_step(const PendulumParams& p, const PendulumState& s,
                                           double u_raw) {
  PendulumState cur = s;
  for (int k = 0; k < p.substeps; ++k) cur = pendulum_step(p, cur, u_raw, p.dt);
  return cur;
}

// Mechanical energy with the hanging rest state as zero; used to check that
// the integrator is well-behaved on the undamped system.
inline double pendulum_energy(const PendulumParams& p, const PendulumState& s) {
  const double kinetic = 0.5 * p.mass * p.length * p.length * s.omega * s.omega;
  const double potential = p.mass * p.gravity * p.length * (1.0 - std::cos(s.theta));
  return kinetic + potential;
}

// Render one binary frame: a rod of fixed pixel length from the image center
// at angle theta, drawn as all pixels whose centers lie within the rod's
// half-thickness of the center-to-tip segment. Screen y grows downward, so
// theta = 0 (hanging) points to the bottom of the frame.
inline Vec pendulum_render(const PendulumParams& p, const PendulumState& s) {
  const int n = PendulumParams::kImage;
  Vec img = Vec::Zero(PendulumParams::kPixels);
  const Eigen::Vector2d a = p.center();
  const Eigen::Vector2d b = a + p.rod_pixels * Eigen::Vector2d{std::sin(s.theta),
                                                               std::cos(s.theta)};
  const double lo_x = std::min(a.x(), b.x()) - p.rod_thickness;
  const double hi_x = std::max(a.x(), b.x()) + p.rod_thickness;
  const double lo_y = std::min(a.y(), b.y()) - p.rod_thickness;
  const double hi_y = std::max(a.y(), b.y()) + p.rod_thickness;
  const int r0 = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
  const int r1 = std::min(n - 1, static_cast<int>(std::ceil(hi_y - 0.5)));
  const int c0 = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
  const int c1 = std::min(n - 1, static_cast<int>(std::ceil(hi_x - 0.5)));
  const Eigen::Vector2d ab = b - a;
  const double ab2 = ab.squaredNorm();
  const double t2 = p.rod_thickness * p.rod_thickness;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Eigen::Vector2d q{c + 0.5, r + 0.5};
      const double t = ab2 > 0.0 ? clamp((q - a).dot(ab) / ab2, 0.0, 1.0) : 0.0;
      if ((q - (a + t * ab)).squaredNorm() <= t2) img[r * n + c] = 1.0;
    }
  }
  return img;
}

}  // namespace latctl
