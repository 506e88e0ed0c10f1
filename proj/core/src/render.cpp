#include "cpnav/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "cpnav/error.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/theme.hpp"

namespace cpnav {

RayHit cast_ray(const FloorPlan& plan, double x, double y, double angle) {
    return cast_ray_dir(plan, x, y, std::cos(angle), std::sin(angle));
}

RayHit cast_ray_dir(const FloorPlan& plan, double x, double y, double dx, double dy) {
    int mx = cell_of(x), my = cell_of(y);
    if (plan.is_wall(mx, my)) throw StateError("ray origin lies inside a wall");
    const double norm = std::hypot(dx, dy);
    if (norm == 0.0) throw DomainError("ray direction must be non-zero");
    dx /= norm;
    dy /= norm;

    // work in cell units
    const double px = x / kCellSize, py = y / kCellSize;
    const double inf = std::numeric_limits<double>::infinity();
    const double delta_x = dx == 0.0 ? inf : std::abs(1.0 / dx);
    const double delta_y = dy == 0.0 ? inf : std::abs(1.0 / dy);
    const int step_x = dx < 0 ? -1 : 1, step_y = dy < 0 ? -1 : 1;
    double side_x = dx == 0.0 ? inf : dx < 0 ? (px - mx) * delta_x : (mx + 1.0 - px) * delta_x;
    double side_y = dy == 0.0 ? inf : dy < 0 ? (py - my) * delta_y : (my + 1.0 - py) * delta_y;

    bool vertical = false;
    // Generated worlds are closed, so the walk always terminates at the
    // boundary at the latest (out-of-bounds counts as wall).
    while (true) {
        if (side_x < side_y) {
            side_x += delta_x;
            mx += step_x;
            vertical = true;
        } else {
            side_y += delta_y;
            my += step_y;
            vertical = false;
        }
        if (plan.is_wall(mx, my)) break;
    }
    const double t = vertical ? side_x - delta_x : side_y - delta_y;
    RayHit hit;
    hit.distance = t * kCellSize;
    hit.cell_x = mx;
    hit.cell_y = my;
    hit.texture = plan.in_bounds(mx, my) ? plan.cell(mx, my) : 0;
    hit.vertical_face = vertical;
    const double along = vertical ? py + t * dy : px + t * dx;
    hit.u = along - std::floor(along);
    return hit;
}

double column_angle(const Pose& pose, int col, int width) {
    const double half = width * 0.5;
    const double focal = half / std::tan(kFieldOfViewDeg * 0.5 * std::numbers::pi / 180.0);
    return pose.heading() + std::atan((half - (col + 0.5)) / focal);
}

std::vector<RayHit> column_hits(const FloorPlan& plan, const Pose& pose, int width) {
    std::vector<RayHit> hits;
    hits.reserve(static_cast<std::size_t>(width));
    for (int c = 0; c < width; ++c) hits.push_back(cast_ray(plan, pose.x, pose.y, column_angle(pose, c, width)));
    return hits;
}

namespace {

struct TargetLook {
    double width, z0, z1;
};

TargetLook target_look(TargetKind kind) {
    switch (kind) {
        case TargetKind::TrueTarget: return {0.44, 0.30, 1.10};
        case TargetKind::FakeBox: return {0.50, 0.30, 0.80};
        case TargetKind::FakeULock: return {0.34, 0.30, 1.00};
        case TargetKind::FakeBook: return {0.36, 0.30, 0.78};
        case TargetKind::FakeBottle: return {0.16, 0.30, 1.00};
    }
    return {0.3, 0.3, 0.8};
}

// Billboard colour at horizontal fraction u and height z (metres); nullopt
// where the sprite is transparent.
std::optional<Rgb> target_texel(TargetKind kind, double u, double z) {
    const TargetLook look = target_look(kind);
    if (z < 0.0 || z > look.z1) return std::nullopt;
    if (z < look.z0) {  // stand
        if (u > 0.42 && u < 0.58) return Rgb{0.30f, 0.30f, 0.32f};
        return std::nullopt;
    }
    switch (kind) {
        case TargetKind::TrueTarget:  // book bag
            if (z > 0.95) {
                if (u < 0.30 || u > 0.70) return std::nullopt;
                if (u > 0.38 && u < 0.62 && z < 1.04) return std::nullopt;
                return Rgb{0.25f, 0.08f, 0.06f};
            }
            if (z > 0.45 && z < 0.60) return Rgb{0.55f, 0.08f, 0.07f};
            return Rgb{0.82f, 0.12f, 0.10f};
        case TargetKind::FakeBox:
            if (u > 0.45 && u < 0.55) return Rgb{0.82f, 0.72f, 0.50f};
            return Rgb{0.62f, 0.44f, 0.22f};
        case TargetKind::FakeULock:
            if (z < 0.55) return Rgb{0.12f, 0.12f, 0.12f};
            if (u < 0.2 || u > 0.8 || z > 0.92) return Rgb{0.92f, 0.82f, 0.10f};
            return std::nullopt;
        case TargetKind::FakeBook:
            if (u < 0.10) return Rgb{0.92f, 0.92f, 0.90f};
            return Rgb{0.15f, 0.25f, 0.70f};
        case TargetKind::FakeBottle:
            if (z > 0.95) return (u > 0.3 && u < 0.7) ? std::optional<Rgb>(Rgb{0.10f, 0.15f, 0.45f}) : std::nullopt;
            if (z > 0.85 && (u < 0.3 || u > 0.7)) return std::nullopt;
            return Rgb{0.35f, 0.80f, 0.85f};
    }
    return std::nullopt;
}

float falloff(double distance) { return static_cast<float>(1.0 / (1.0 + 0.12 * distance)); }

}  // namespace

Tensor render(const FloorPlan& plan, const Pose& pose, int width, int height) {
    if (width <= 0 || height <= 0) throw DimensionError("frame extents must be positive");
    if (plan.is_wall(cell_of(pose.x), cell_of(pose.y))) throw StateError("cannot render from inside a wall");
    const Theme& th = theme(plan.theme);
    Tensor frame({3, height, width});
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    const double focal = width * 0.5 / std::tan(kFieldOfViewDeg * 0.5 * std::numbers::pi / 180.0);
    const double cam_z = kFlightHeight;

    auto put = [&](int row, int col, const Rgb& c, float gain) {
        const std::size_t i = static_cast<std::size_t>(row) * width + col;
        for (int ch = 0; ch < 3; ++ch) frame[ch * plane + i] = std::clamp(c[ch] * gain, 0.0f, 1.0f);
    };

    std::vector<double> zbuf(static_cast<std::size_t>(width));
    for (int col = 0; col < width; ++col) {
        const double angle = column_angle(pose, col, width);
        const double rel = angle - pose.heading();
        const double cos_rel = std::cos(rel);
        const double dir_x = std::cos(angle), dir_y = std::sin(angle);
        const RayHit hit = cast_ray(plan, pose.x, pose.y, angle);
        const double perp = hit.distance * cos_rel;
        zbuf[static_cast<std::size_t>(col)] = perp;
        const float wall_gain = th.light * (hit.vertical_face ? 1.0f : 0.8f) * falloff(hit.distance);

        for (int row = 0; row < height; ++row) {
            const double dv = height * 0.5 - (row + 0.5);  // up is positive
            const double z = cam_z + dv * perp / focal;
            if (z >= 0.0 && z < kWallHeight) {
                put(row, col, wall_texel(th, hit.texture, hit.u, z / kWallHeight), wall_gain);
            } else if (dv < 0.0) {
                const double dist = cam_z * focal / -dv / cos_rel;
                const double fx = pose.x + dist * dir_x, fy = pose.y + dist * dir_y;
                const bool odd = ((cell_of(fx) + cell_of(fy)) & 1) != 0;
                put(row, col, odd ? th.floor_a : th.floor_b, th.light * falloff(dist));
            } else {
                const double dist = (kWallHeight - cam_z) * focal / dv / cos_rel;
                const double fx = pose.x / kCellSize + dist * dir_x / kCellSize;
                const double fy = pose.y / kCellSize + dist * dir_y / kCellSize;
                const double ux = fx - std::floor(fx), uy = fy - std::floor(fy);
                const bool lamp = ux > 0.3 && ux < 0.7 && uy > 0.3 && uy < 0.7 && (cell_of(fx * kCellSize) % 3 == 0);
                const Rgb c = lamp ? Rgb{1.0f, 1.0f, 0.96f} : th.ceiling;
                put(row, col, c, th.light * falloff(dist));
            }
        }
    }

    // Billboards, far to near.
    struct Sprite {
        TargetKind kind;
        double forward, left;
    };
    std::vector<Sprite> sprites;
    const double ch = std::cos(pose.heading()), sh = std::sin(pose.heading());
    for (const TargetSpec& t : plan.targets) {
        const double dx = t.x - pose.x, dy = t.y - pose.y;
        const double fwd = dx * ch + dy * sh;
        const double left = -dx * sh + dy * ch;
        if (fwd > 0.05) sprites.push_back({t.kind, fwd, left});
    }
    std::stable_sort(sprites.begin(), sprites.end(), [](const Sprite& a, const Sprite& b) { return a.forward > b.forward; });
    for (const Sprite& s : sprites) {
        const TargetLook look = target_look(s.kind);
        const double sx = width * 0.5 - s.left / s.forward * focal;
        const double half = look.width * 0.5 / s.forward * focal;
        const int c0 = std::max(0, static_cast<int>(std::floor(sx - half)));
        const int c1 = std::min(width - 1, static_cast<int>(std::ceil(sx + half)));
        const float gain = th.light * falloff(std::hypot(s.forward, s.left));
        for (int col = c0; col <= c1; ++col) {
            const double u = (col + 0.5 - (sx - half)) / (2.0 * half);
            if (u < 0.0 || u >= 1.0 || s.forward >= zbuf[static_cast<std::size_t>(col)]) continue;
            for (int row = 0; row < height; ++row) {
                const double dv = height * 0.5 - (row + 0.5);
                const double z = cam_z + dv * s.forward / focal;
                if (auto c = target_texel(s.kind, u, z)) put(row, col, *c, gain);
            }
        }
    }
    return frame;
}

Tensor add_sensor_noise(const Tensor& frame, std::uint64_t seed, double sigma) {
    Tensor out = frame;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (float& v : out.values())
        v = static_cast<float>(std::clamp(static_cast<double>(v) + rng.normal(0.0, sigma), 0.0, 1.0));
    return out;
}

}  // namespace cpnav
