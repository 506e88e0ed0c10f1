#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cpnav/command.hpp"
#include "cpnav/tensor.hpp"
#include "cpnav/world.hpp"

namespace cpnav {

struct OracleConfig {
    double wall_danger_dist = 0.75;  // forward clearance that triggers a spin
    double stop_dist = 1.0;          // true target closer than this (and in view) -> Stop
    double stop_half_angle_deg = 30.0;
    double center_band = 0.3;        // tolerated offset from the corridor centreline
    double turn_lead = 1.25;         // turn into the next leg once the current one has less left
    double turn_hysteresis = 0.5;    // extra lead once the heading already leans into that turn
    double align_tolerance_deg = 7.5;
    double centering_max_error_deg = 7.5;   // only strafe once aligned
    double evasive_max_error_deg = 22.5;    // looser gate for strafing off a wall ahead
};

// Throws DomainError when a field is non-positive or stop_dist does not
// exceed the simulator's reach radius.
void validate(const OracleConfig& config, const Kinematics& kin = {});

/// Free-space cross-section perpendicular to an axis direction.
struct CrossSection {
    double width = 0.0;
    double offset = 0.0;  // centre minus query point, along the axis' left normal
};

/// Scripted pilot reading ground-truth geometry. Holds a cost-to-go field
/// to the true target (path length, inflated near walls so routes keep to
/// corridor centres) so repeated queries on one plan stay cheap.
class Expert {
public:
    explicit Expert(const FloorPlan& plan, OracleConfig config = {});

    FlightCommand command(const Pose& pose) const;

    // Axis direction (0, 90, 180, 270 degrees) of the route leg to follow:
    // the first straight leg of the descent path with at least turn_lead
    // metres still ahead, so corners are entered while the side opening is
    // in view. The chosen leg's centreline comes back in `centre_offset`
    // (along the axis' left normal).
    int route_heading_deg(const Pose& pose, double* centre_offset = nullptr) const;

    double cost_to_go(int cx, int cy) const;  // negative for unreachable / wall
    const OracleConfig& config() const noexcept { return config_; }
    const FloorPlan& plan() const noexcept { return *plan_; }

private:
    bool target_stop_visible(const Pose& pose) const;
    std::optional<std::pair<int, int>> next_cell(int cx, int cy) const;

    const FloorPlan* plan_;
    OracleConfig config_;
    Kinematics kin_;
    std::vector<double> cost_;
};

FlightCommand expert_command(const FloorPlan& plan, const Pose& pose, const OracleConfig& config = {});

// Clearance from (x, y) along `angle` (radians) to the first wall, metres.
double clearance(const FloorPlan& plan, double x, double y, double angle);

// Narrowest cross-section among sample points (x, y) + s * axis for each s,
// skipping samples that lie in walls or behind a wall from (x, y).
std::optional<CrossSection> narrowest_cross_section(const FloorPlan& plan, double x, double y, int axis_deg,
                                                    const std::vector<double>& samples);

// ------------------------------------------------------------------ rollouts

enum class StartVariant { Nominal, Jittered, NearWall };

// Spawn pose perturbed per variant: Jittered = uniform +-0.3 m lateral and
// +-20 deg heading; NearWall = pushed to within 0.1 m of a side wall and
// yawed 10-20 deg towards it.
Pose start_pose(const FloorPlan& plan, StartVariant variant, std::uint64_t seed);

struct RolloutOptions {
    int max_steps = 500;
    StartVariant start = StartVariant::Nominal;
    std::uint64_t seed = 0;
    // Probability of executing a random collision-free command instead of
    // the expert's; the recorded label is always the expert's.
    double perturb_prob = 0.0;
    // A perturbation repeats its command for 1..perturb_burst steps, which
    // carries the drone well off the route (e.g. facing a dead-end arm).
    int perturb_burst = 1;
    // Extra Stop-labelled views sampled around the final pose.
    int stop_views = 0;
    bool render = true;
};

struct TrajectoryStep {
    Tensor frame;  // empty when rendering is disabled
    FlightCommand command = FlightCommand::MoveForward;
    Pose pose;
    bool executed_label = true;  // false when a perturbation was executed instead
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    bool stopped = false;
};

/// render + expert_command + step until Stop or max_steps. A collision is an
/// oracle bug and raises StateError.
Trajectory rollout_expert(const FloorPlan& plan, const OracleConfig& config, const RolloutOptions& options);
Trajectory rollout_expert(const FloorPlan& plan, const OracleConfig& config, int max_steps);

}  // namespace cpnav
