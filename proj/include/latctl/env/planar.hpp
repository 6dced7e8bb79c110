// latctl — planar obstacle world: point agent in a 40×40 arena with six
// circular obstacles, rendered to binary images.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"

#include <array>

namespace latctl {

// Coordinates are in pixels with x to the right (column) and y down (row),
// so the goal in the bottom-right corner has large x and large y. The pixel
// at (row r, col c) covers the unit square whose center is (c + 0.5, r + 0.5).
struct PlanarLayout {
  static constexpr int kImage = 40;      // square frame side in pixels
  static constexpr int kPixels = kImage * kImage;
  double agent_radius = 1.5;
  double obstacle_radius = 2.5;
  double u_max = 1.5;                    // max per-axis displacement per step, pixels
  // Two rows of three obstacles leaving a weaving corridor, mid-arena.
  std::array<Eigen::Vector2d, 6> obstacles{{
      {10.0, 12.0}, {20.0, 10.0}, {30.0, 12.0},
      {10.0, 26.0}, {20.0, 28.0}, {30.0, 26.0}}};
  Eigen::Vector2d goal{36.5, 36.5};
  // Canonical evaluation starts: spread along the top band.
  std::array<Eigen::Vector2d, 5> eval_starts{{
      {4.0, 2.5}, {12.0, 2.5}, {20.0, 2.5}, {28.0, 2.5}, {36.0, 2.5}}};

  double bound_lo() const { return agent_radius; }
  double bound_hi() const { return kImage - agent_radius; }
};

inline const PlanarLayout& planar_layout() {
  static const PlanarLayout layout;
  return layout;
}

struct PlanarState {
  Eigen::Vector2d pos;
};

inline bool planar_in_bounds(const PlanarLayout& lay, const Eigen::Vector2d& p) {
  return p.x() >= lay.bound_lo() && p.x() <= lay.bound_hi() &&
         p.y() >= lay.bound_lo() && p.y() <= lay.bound_hi();
}

inline bool planar_clear_of_obstacles(const PlanarLayout& lay, const Eigen::Vector2d& p) {
  const double clearance = lay.agent_radius + lay.obstacle_radius;
  for (const auto& c : lay.obstacles) {
    if ((p - c).norm() < clearance) return false;
  }
  return true;
}

inline bool planar_valid(const PlanarLayout& lay, const Eigen::Vector2d& p) {
  return planar_in_bounds(lay, p) && planar_clear_of_obstacles(lay, p);
}

// One control step: clamp the raw pixel displacement to the admissible box,
// clamp the candidate position to the arena bounds, and reject the whole move
// (state unchanged) if the candidate would overlap an obstacle.
inline PlanarState planar_step(const PlanarLayout& lay, const PlanarState& s,
                               const Eigen::Vector2d& u_raw) {
  Eigen::Vector2d u{clamp(u_raw.x(), -lay.u_max, lay.u_max),
                    clamp(u_raw.y(), -lay.u_max, lay.u_max)};
  Eigen::Vector2d cand = s.pos + u;
  cand.x() = clamp(cand.x(), lay.bound_lo(), lay.bound_hi());
  cand.y() = clamp(cand.y(), lay.bound_lo(), lay.bound_hi());
  if (!planar_clear_of_obstacles(lay, cand)) return s;
  return PlanarState{cand};
}

namespace detail {

// Stamp a filled disc into a row-major 40×40 frame: a pixel is white when its
// center lies inside the disc. No anti-aliasing; pixels are exactly 0 or 1.
inline void stamp_disc(Vec& img, const Eigen::Vector2d& center, double radius) {
  const int n = PlanarLayout::kImage;
  const double r2 = radius * radius;
  const int r0 = std::max(0, static_cast<int>(std::floor(center.y() - radius - 0.5)));
  const int r1 = std::min(n - 1, static_cast<int>(std::ceil(center.y() + radius - 0.5)));
  const int c0 = std::max(0, static_cast<int>(std::floor(center.x() - radius - 0.5)));
  const int c1 = std::min(n - 1, static_cast<int>(std::ceil(center.x() + radius - 0.5)));
  for (int r = r0; r <= r1; ++r) {
    const double dy = (r + 0.5) - center.y();
    for (int c = c0; c <= c1; ++c) {
      const double dx = (c + 0.5) - center.x();
      if (dx * dx + dy * dy <= r2) img[r * n + c] = 1.0;
    }
  }
}

}  // namespace detail

// Render the scene: black background, white obstacle discs, white agent disc.
// skip_obstacle (default none) omits one obstacle disc; used when encoding
// "agent standing at obstacle k" reference frames for the planner's
// proximity penalty, where the full scene would swallow the agent disc.
inline Vec planar_render(const PlanarLayout& lay, const PlanarState& s,
                         int skip_obstacle = -1) {
  Vec img = Vec::Zero(PlanarLayout::kPixels);
  for (int k = 0; k < static_cast<int>(lay.obstacles.size()); ++k) {
    if (k == skip_obstacle) continue;
    detail::stamp_disc(img, lay.obstacles[k], lay.obstacle_radius);
  }
  detail::stamp_disc(img, s.pos, lay.agent_radius);
  return img;
}

}  // namespace latctl
