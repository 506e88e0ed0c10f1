#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpnav/command.hpp"

namespace cpnav {

inline constexpr double kCellSize = 0.5;      // metres per grid cell
inline constexpr double kFlightHeight = 1.0;  // metres, constant
inline constexpr int kNumThemes = 7;
inline constexpr int kFreeCell = -1;

enum class Layout { Corridor, CornerL, CornerT, Loop };
inline constexpr Layout kAllLayouts[] = {Layout::Corridor, Layout::CornerL, Layout::CornerT, Layout::Loop};

std::string_view layout_name(Layout layout) noexcept;
std::optional<Layout> parse_layout(std::string_view name) noexcept;

enum class TargetKind { TrueTarget, FakeBox, FakeULock, FakeBook, FakeBottle };

std::string_view target_kind_name(TargetKind kind) noexcept;
std::optional<TargetKind> parse_target_kind(std::string_view name) noexcept;

struct TargetSpec {
    TargetKind kind = TargetKind::TrueTarget;
    double x = 0.0, y = 0.0;

    // One signature per kind; the true target renders as the book bag.
    int visual_signature() const noexcept { return static_cast<int>(kind); }
    bool is_true() const noexcept { return kind == TargetKind::TrueTarget; }
    friend bool operator==(const TargetSpec&, const TargetSpec&) = default;
};

/// Drone pose at constant height. Heading is kept in degrees, [0, 360), so
/// 15-degree spins are exact and inverse spins restore the pose bitwise.
struct Pose {
    double x = 0.0, y = 0.0;
    double heading_deg = 0.0;

    double heading() const noexcept;  // radians in [0, 2*pi)
    friend bool operator==(const Pose&, const Pose&) = default;
};

double wrap_degrees(double deg) noexcept;         // -> [0, 360)
double signed_degrees(double deg) noexcept;       // -> (-180, 180]
// Rounds to a multiple of 2^-20 degrees, wrapped to [0, 360). Spins on such
// headings are exact, so inverse spin sequences restore them bitwise; every
// heading that is not a grid angle should pass through here.
double quantize_heading(double deg) noexcept;

struct FloorPlan {
    int width = 0, height = 0;         // cells
    std::vector<std::int8_t> cells;    // row-major (y * width + x); kFreeCell or wall texture id
    int theme = 0;
    Layout layout = Layout::Corridor;
    std::uint64_t seed = 0;
    std::vector<TargetSpec> targets;
    Pose spawn;

    bool in_bounds(int cx, int cy) const noexcept { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
    // Out-of-bounds cells count as wall.
    bool is_wall(int cx, int cy) const noexcept { return !in_bounds(cx, cy) || cell(cx, cy) != kFreeCell; }
    int cell(int cx, int cy) const noexcept { return cells[static_cast<std::size_t>(cy) * width + cx]; }
    void set_cell(int cx, int cy, int value) { cells[static_cast<std::size_t>(cy) * width + cx] = static_cast<std::int8_t>(value); }
    bool is_free_point(double x, double y) const noexcept;

    const TargetSpec& true_target() const;

    friend bool operator==(const FloorPlan&, const FloorPlan&) = default;
};

inline int cell_of(double coord) noexcept { return static_cast<int>(std::floor(coord / kCellSize)); }

/// Seeded procedural world. Free space is 4-connected, the true target sits
/// at the far end of the route from spawn, and 0-3 fake targets are placed
/// at least 3 m from it.
FloorPlan generate_world(std::uint64_t seed, Layout layout, int theme_id);

// Empty list means the plan satisfies every structural invariant.
std::vector<std::string> validate_plan(const FloorPlan& plan);

// ------------------------------------------------------------------ kinematics

struct Kinematics {
    double step_m = 0.25;
    double spin_deg = 15.0;
    double body_radius = 0.15;
    double reach_radius = 0.5;
    double reach_half_angle_deg = 45.0;
};

struct CollisionEvent {
    int step_index = 0;
    Pose pose_at_impact;
};

struct StepResult {
    Pose pose;
    std::optional<CollisionEvent> collision;
    std::optional<TargetSpec> reached;
};

/// Applies one non-Stop command. Translations are swept against the walls;
/// contact yields a CollisionEvent with the last contact-free pose.
StepResult step(const FloorPlan& plan, const Pose& pose, FlightCommand command, const Kinematics& kin = {});

// True when a body of `radius` centred at (x, y) overlaps a wall cell.
bool body_overlaps_wall(const FloorPlan& plan, double x, double y, double radius);

// Nearest target within `radius` whose bearing from the pose is within
// +-half_angle_deg.
std::optional<TargetSpec> target_in_cone(const FloorPlan& plan, const Pose& pose, double radius, double half_angle_deg);

/// Single-writer episode state; refuses further steps after a collision.
class Episode {
public:
    Episode(const FloorPlan& plan, Pose start, Kinematics kin = {});

    StepResult step(FlightCommand command);

    const Pose& pose() const noexcept { return pose_; }
    int steps() const noexcept { return steps_; }
    bool terminated() const noexcept { return collision_.has_value(); }
    const std::optional<CollisionEvent>& collision() const noexcept { return collision_; }
    const FloorPlan& plan() const noexcept { return *plan_; }
    const Kinematics& kinematics() const noexcept { return kin_; }

private:
    const FloorPlan* plan_;
    Kinematics kin_;
    Pose pose_;
    int steps_ = 0;
    std::optional<CollisionEvent> collision_;
};

}  // namespace cpnav
