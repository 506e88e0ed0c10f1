#pragma once

#include <cstdint>
#include <vector>

#include "cpnav/tensor.hpp"
#include "cpnav/world.hpp"

namespace cpnav {

inline constexpr double kFieldOfViewDeg = 90.0;
inline constexpr double kWallHeight = 2.5;
inline constexpr int kFrameSize = 64;

struct RayHit {
    double distance = 0.0;  // euclidean, metres
    int cell_x = 0, cell_y = 0;
    int texture = 0;
    bool vertical_face = false;  // crossed an x = const grid line
    double u = 0.0;              // position along the face, [0, 1)
};

/// Grid DDA from (x, y) along `angle` (radians). Throws StateError if the
/// origin lies inside a wall.
RayHit cast_ray(const FloorPlan& plan, double x, double y, double angle);
// Same walk along an explicit direction vector (normalised internally), so
// axis-aligned rays can be cast without trigonometric round-off.
RayHit cast_ray_dir(const FloorPlan& plan, double x, double y, double dx, double dy);

// Ray angle for screen column `col`; column 0 is the left edge (+45 deg).
double column_angle(const Pose& pose, int col, int width);

// One hit per screen column, left to right.
std::vector<RayHit> column_hits(const FloorPlan& plan, const Pose& pose, int width = kFrameSize);

/// First-person RGB frame (3, height, width) in [0, 1].
Tensor render(const FloorPlan& plan, const Pose& pose, int width = kFrameSize, int height = kFrameSize);

/// Live-stream noise: N(0, sigma^2) per value, clamped to [0, 1].
Tensor add_sensor_noise(const Tensor& frame, std::uint64_t seed, double sigma = 0.02);

}  // namespace cpnav
