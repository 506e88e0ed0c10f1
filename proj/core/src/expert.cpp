#include "cpnav/expert.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

#include "cpnav/error.hpp"
#include "cpnav/render.hpp"
#include "cpnav/rng.hpp"

namespace cpnav {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Vec2 {
    double x, y;
};

Vec2 axis_vec(int deg) {
    switch (((deg % 360) + 360) % 360) {
        case 0: return {1, 0};
        case 90: return {0, 1};
        case 180: return {-1, 0};
        default: return {0, -1};
    }
}

FlightCommand spin_toward(double error_deg) {
    return error_deg >= 0.0 ? FlightCommand::SpinLeft : FlightCommand::SpinRight;
}

double axis_clearance(const FloorPlan& plan, double x, double y, int deg) {
    const Vec2 a = axis_vec(deg);
    return cast_ray_dir(plan, x, y, a.x, a.y).distance;
}

bool collides(const FloorPlan& plan, const Pose& pose, FlightCommand cmd, const Kinematics& kin) {
    return step(plan, pose, cmd, kin).collision.has_value();
}

}  // namespace

void validate(const OracleConfig& c, const Kinematics& kin) {
    if (c.wall_danger_dist <= 0 || c.stop_dist <= 0 || c.center_band <= 0 || c.stop_half_angle_deg <= 0 ||
        c.align_tolerance_deg <= 0 || c.centering_max_error_deg <= 0 || c.evasive_max_error_deg <= 0 ||
        c.turn_lead <= 0 ||
        c.turn_hysteresis < 0)
        throw DomainError("oracle config values must be positive");
    if (c.stop_dist <= kin.reach_radius) throw DomainError("stop_dist must exceed the reach radius");
}

double clearance(const FloorPlan& plan, double x, double y, double angle) {
    return cast_ray(plan, x, y, angle).distance;
}

std::optional<CrossSection> narrowest_cross_section(const FloorPlan& plan, double x, double y, int axis_deg,
                                                    const std::vector<double>& samples) {
    const Vec2 a = axis_vec(axis_deg);
    const double ahead = axis_clearance(plan, x, y, axis_deg);
    const double behind = axis_clearance(plan, x, y, axis_deg + 180);
    std::optional<CrossSection> best;
    double best_s = 0;
    for (double s : samples) {
        if ((s >= 0 && s >= ahead) || (s < 0 && -s >= behind)) continue;
        const double rx = x + s * a.x, ry = y + s * a.y;
        if (!plan.is_free_point(rx, ry)) continue;
        const double l = axis_clearance(plan, rx, ry, axis_deg + 90), r = axis_clearance(plan, rx, ry, axis_deg + 270);
        CrossSection cs{l + r, (l - r) * 0.5};
        if (!best || cs.width < best->width || (cs.width == best->width && std::abs(s) < std::abs(best_s))) {
            best = cs;
            best_s = s;
        }
    }
    return best;
}

namespace {

constexpr double kWallComfort = 1.0;  // path cost rises for cells closer than this to a wall
constexpr double kWallPenalty = 4.0;
constexpr double kMaxCorridorWidth = 4.5;
constexpr double kApproachFactor = 1.5;  // final approach starts this many stop distances out
constexpr std::pair<int, int> kNeighbours[] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};

double box_distance(double px, double py, int cx, int cy) {
    const double x0 = cx * kCellSize, y0 = cy * kCellSize;
    const double dx = std::max({x0 - px, 0.0, px - (x0 + kCellSize)});
    const double dy = std::max({y0 - py, 0.0, py - (y0 + kCellSize)});
    return std::hypot(dx, dy);
}

int axis_of(int dx, int dy) { return dx > 0 ? 0 : dy > 0 ? 90 : dx < 0 ? 180 : 270; }

struct Leg {
    int axis = 0;
    double length = 0.0;  // metres still ahead of the drone
    double centre = 0.0;  // centreline offset from the drone along the left normal
    bool has_centre = false;
};

}  // namespace

Expert::Expert(const FloorPlan& plan, OracleConfig config) : plan_(&plan), config_(config) {
    validate(config_, kin_);
    const TargetSpec& t = plan.true_target();
    const int tx = cell_of(t.x), ty = cell_of(t.y);
    if (plan.is_wall(tx, ty)) throw StateError("true target lies in a wall");
    const auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * plan.width + x; };

    std::vector<double> wall_dist(plan.cells.size(), 0.0);
    for (int y = 0; y < plan.height; ++y)
        for (int x = 0; x < plan.width; ++x) {
            if (plan.is_wall(x, y)) continue;
            const double cx = (x + 0.5) * kCellSize, cy = (y + 0.5) * kCellSize;
            double d = std::min({cx, cy, plan.width * kCellSize - cx, plan.height * kCellSize - cy});
            for (int wy = 0; wy < plan.height; ++wy)
                for (int wx = 0; wx < plan.width; ++wx)
                    if (plan.is_wall(wx, wy)) d = std::min(d, box_distance(cx, cy, wx, wy));
            wall_dist[idx(x, y)] = d;
        }

    cost_.assign(plan.cells.size(), -1.0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    cost_[idx(tx, ty)] = 0.0;
    pq.emplace(0.0, idx(tx, ty));
    std::vector<bool> done(plan.cells.size(), false);
    while (!pq.empty()) {
        const auto [c, i] = pq.top();
        pq.pop();
        if (done[i]) continue;
        done[i] = true;
        const int x = static_cast<int>(i % plan.width), y = static_cast<int>(i / plan.width);
        for (auto [dx, dy] : kNeighbours) {
            const int nx = x + dx, ny = y + dy;
            if (plan.is_wall(nx, ny)) continue;
            const std::size_t j = idx(nx, ny);
            const double tight = std::max(0.0, kWallComfort - 0.5 * (wall_dist[i] + wall_dist[j]));
            const double nc = c + kCellSize * (1.0 + kWallPenalty * tight);
            if (cost_[j] < 0 || nc < cost_[j]) {
                cost_[j] = nc;
                pq.emplace(nc, j);
            }
        }
    }
}

double Expert::cost_to_go(int cx, int cy) const {
    if (!plan_->in_bounds(cx, cy)) return -1.0;
    return cost_[static_cast<std::size_t>(cy) * plan_->width + cx];
}

std::optional<std::pair<int, int>> Expert::next_cell(int cx, int cy) const {
    const double here = cost_to_go(cx, cy);
    std::optional<std::pair<int, int>> best;
    double best_c = here;
    for (auto [dx, dy] : kNeighbours) {
        const int nx = cx + dx, ny = cy + dy;
        if (plan_->is_wall(nx, ny)) continue;
        const double c = cost_to_go(nx, ny);
        if (c >= 0 && c < best_c) {
            best_c = c;
            best = std::pair{nx, ny};
        }
    }
    return best;
}

bool Expert::target_stop_visible(const Pose& pose) const {
    const TargetSpec& t = plan_->true_target();
    const double dx = t.x - pose.x, dy = t.y - pose.y;
    const double d = std::hypot(dx, dy);
    if (d > config_.stop_dist) return false;
    if (d < 1e-9) return true;
    const double bearing_deg = std::atan2(dy, dx) / kDeg;
    if (std::abs(signed_degrees(bearing_deg - pose.heading_deg)) > config_.stop_half_angle_deg) return false;
    return clearance(*plan_, pose.x, pose.y, bearing_deg * kDeg) >= d;
}

int Expert::route_heading_deg(const Pose& pose, double* centre_offset) const {
    // Split the descent path into straight legs.
    std::vector<Leg> legs;
    int cx = cell_of(pose.x), cy = cell_of(pose.y);
    for (int guard = 0; guard < static_cast<int>(cost_.size()); ++guard) {
        const auto n = next_cell(cx, cy);
        if (!n) break;
        const int axis = axis_of(n->first - cx, n->second - cy);
        cx = n->first;
        cy = n->second;
        const Vec2 d = axis_vec(axis), nrm = axis_vec(axis + 90);
        const double px = (cx + 0.5) * kCellSize, py = (cy + 0.5) * kCellSize;
        if (legs.empty() || legs.back().axis != axis) {
            // the first leg is measured from the drone itself
            const double start = legs.empty() ? (px - pose.x) * d.x + (py - pose.y) * d.y : kCellSize;
            legs.push_back({axis, start, 0.0, false});
        } else {
            legs.back().length += kCellSize;
        }
        Leg& leg = legs.back();
        if (!leg.has_centre && leg.length >= kCellSize * 0.99) {
            const double l = axis_clearance(*plan_, px, py, axis + 90), r = axis_clearance(*plan_, px, py, axis + 270);
            if (l + r <= kMaxCorridorWidth) {
                leg.centre = (px - pose.x) * nrm.x + (py - pose.y) * nrm.y + 0.5 * (l - r);
                leg.has_centre = true;
            }
        }
    }

    const auto heading_axis = static_cast<int>(std::lround(wrap_degrees(pose.heading_deg) / 90.0)) % 4 * 90;
    if (legs.empty()) {
        if (centre_offset) *centre_offset = 0.0;
        return heading_axis;
    }
    const Leg* pick = nullptr;
    std::size_t first = 0;
    // Already leaning into an imminent turn: keep turning rather than
    // swinging back for the last stretch of the current leg.
    if (legs.size() >= 2 && legs[0].length < config_.turn_lead + config_.turn_hysteresis) {
        const double lean = signed_degrees(pose.heading_deg - legs[0].axis);
        const double turn = signed_degrees(legs[1].axis - legs[0].axis);
        if (lean * turn > 0 && std::abs(lean) >= config_.align_tolerance_deg) first = 1;
    }
    for (std::size_t i = first; i < legs.size(); ++i)
        if (legs[i].length >= config_.turn_lead) {
            pick = &legs[i];
            break;
        }
    if (!pick) {
        pick = &legs.front();
        for (const Leg& leg : legs)
            if (leg.length > pick->length) pick = &leg;
    }
    const double centre = pick->has_centre ? pick->centre : 0.0;
    if (centre_offset) *centre_offset = centre;
    return pick->axis;
}

FlightCommand Expert::command(const Pose& pose) const {
    const FloorPlan& plan = *plan_;
    if (plan.is_wall(cell_of(pose.x), cell_of(pose.y))) throw StateError("expert queried from inside a wall");

    // 1. target
    if (target_stop_visible(pose)) return FlightCommand::Stop;

    const double h = pose.heading();
    const double left_clear = clearance(plan, pose.x, pose.y, h + std::numbers::pi / 2);
    const double right_clear = clearance(plan, pose.x, pose.y, h - std::numbers::pi / 2);

    // Final approach: with the target in sight, face it and close in.
    const TargetSpec& t = plan.true_target();
    const double td = std::hypot(t.x - pose.x, t.y - pose.y);
    if (td <= kApproachFactor * config_.stop_dist) {
        const double bearing = std::atan2(t.y - pose.y, t.x - pose.x);
        if (clearance(plan, pose.x, pose.y, bearing) >= td) {
            const double berr = signed_degrees(bearing / kDeg - pose.heading_deg);
            if (std::abs(berr) > config_.stop_half_angle_deg * 0.5) return spin_toward(berr);
            if (!collides(plan, pose, FlightCommand::MoveForward, kin_)) return FlightCommand::MoveForward;
        }
    }

    double offset = 0.0;
    const int route = route_heading_deg(pose, &offset);
    const double err = signed_degrees(route - pose.heading_deg);

    FlightCommand toward_centre = FlightCommand::Stop;  // Stop = no correction needed
    if (std::abs(offset) > config_.center_band) {
        const Vec2 n = axis_vec(route + 90);
        const double toward_left = offset * (n.x * -std::sin(h) + n.y * std::cos(h));
        toward_centre = toward_left > 0 ? FlightCommand::MoveLeft : FlightCommand::MoveRight;
    }
    // Strafing while rotated looks like an offset in the frame, so routine
    // centring waits for alignment.
    const FlightCommand centering =
        std::abs(err) <= config_.centering_max_error_deg ? toward_centre : FlightCommand::Stop;

    // 2. safety. Facing along the route, a short forward clearance means
    // lateral misplacement, so a centring strafe is the evasive move.
    if (clearance(plan, pose.x, pose.y, h) < config_.wall_danger_dist) {
        const FlightCommand evade =
            std::abs(err) <= config_.evasive_max_error_deg ? toward_centre : FlightCommand::Stop;
        if (evade != FlightCommand::Stop && !collides(plan, pose, evade, kin_)) return evade;
        if (std::abs(err) > config_.align_tolerance_deg) return spin_toward(err);
    }

    // 3. centering, 4. cornering / alignment, 5. forward
    FlightCommand cmd = FlightCommand::MoveForward;
    if (centering != FlightCommand::Stop) cmd = centering;
    else if (std::abs(err) > config_.align_tolerance_deg) return spin_toward(err);

    if (collides(plan, pose, cmd, kin_)) {
        const FlightCommand away = left_clear >= right_clear ? FlightCommand::MoveLeft : FlightCommand::MoveRight;
        if (cmd == FlightCommand::MoveForward && !collides(plan, pose, away, kin_)) return away;
        // a blocked centring strafe: carry on along the leg instead
        if (cmd != FlightCommand::MoveForward && !collides(plan, pose, FlightCommand::MoveForward, kin_))
            return FlightCommand::MoveForward;
        return spin_toward(err);
    }
    return cmd;
}

FlightCommand expert_command(const FloorPlan& plan, const Pose& pose, const OracleConfig& config) {
    return Expert(plan, config).command(pose);
}

// ------------------------------------------------------------------ rollouts

Pose start_pose(const FloorPlan& plan, StartVariant variant, std::uint64_t seed) {
    const Pose spawn = plan.spawn;
    if (variant == StartVariant::Nominal) return spawn;
    Rng rng(mix_seed(seed, 0x5A17));
    const double h = spawn.heading();
    const Vec2 left{-std::sin(h), std::cos(h)};
    const double radius = Kinematics{}.body_radius;

    double lateral = 0, yaw = 0;
    if (variant == StartVariant::Jittered) {
        lateral = rng.uniform(-0.3, 0.3);
        yaw = rng.uniform(-20.0, 20.0);
    } else {
        const double side = rng.below(2) == 0 ? 1.0 : -1.0;
        const double c = clearance(plan, spawn.x, spawn.y, h + side * std::numbers::pi / 2);
        lateral = side * std::max(0.0, c - radius - rng.uniform(0.03, 0.10));
        yaw = side * rng.uniform(10.0, 20.0);
    }
    Pose p{spawn.x + lateral * left.x, spawn.y + lateral * left.y, quantize_heading(spawn.heading_deg + yaw)};
    for (int i = 0; i < 8 && body_overlaps_wall(plan, p.x, p.y, radius); ++i) {
        lateral *= 0.5;
        p.x = spawn.x + lateral * left.x;
        p.y = spawn.y + lateral * left.y;
    }
    if (body_overlaps_wall(plan, p.x, p.y, radius)) p = {spawn.x, spawn.y, p.heading_deg};
    return p;
}

Trajectory rollout_expert(const FloorPlan& plan, const OracleConfig& config, const RolloutOptions& options) {
    if (options.max_steps < 1) throw DomainError("max_steps must be at least 1");
    if (options.perturb_burst < 1) throw DomainError("perturb_burst must be at least 1");
    const Expert expert(plan, config);
    const Kinematics kin;
    Episode episode(plan, start_pose(plan, options.start, options.seed), kin);
    Rng perturb(mix_seed(options.seed, 0xD157));
    int burst_left = 0;
    FlightCommand burst_cmd = FlightCommand::MoveForward;
    Trajectory traj;

    for (int i = 0; i < options.max_steps; ++i) {
        const Pose pose = episode.pose();
        const FlightCommand label = expert.command(pose);
        TrajectoryStep rec{options.render ? render(plan, pose) : Tensor{}, label, pose, true};
        if (label == FlightCommand::Stop) {
            traj.steps.push_back(std::move(rec));
            traj.stopped = true;
            break;
        }
        FlightCommand exec = label;
        if (burst_left > 0 && burst_cmd != label && !collides(plan, pose, burst_cmd, kin)) {
            exec = burst_cmd;
            rec.executed_label = false;
            --burst_left;
        } else if (options.perturb_prob > 0.0 && perturb.uniform() < options.perturb_prob) {
            burst_left = 0;
            const FlightCommand alt = command_from_index(static_cast<int>(perturb.below(kNumCommands - 1)));
            if (alt != label && !collides(plan, pose, alt, kin)) {
                exec = alt;
                rec.executed_label = false;
                burst_cmd = alt;
                if (options.perturb_burst > 1)
                    burst_left = static_cast<int>(perturb.below(static_cast<std::uint64_t>(options.perturb_burst)));
            }
        } else {
            burst_left = 0;
        }
        traj.steps.push_back(std::move(rec));
        const StepResult r = episode.step(exec);
        if (r.collision)
            throw StateError("expert rollout collided at step " + std::to_string(i) + " (seed " +
                             std::to_string(plan.seed) + ", layout " + std::string(layout_name(plan.layout)) + ")");
    }

    if (traj.stopped && options.stop_views > 0) {
        Rng rng(mix_seed(options.seed, 0x5709));
        const TargetSpec& t = plan.true_target();
        const Pose last = traj.steps.back().pose;
        const double base = std::atan2(last.y - t.y, last.x - t.x);
        for (int v = 0; v < options.stop_views; ++v) {
            for (int attempt = 0; attempt < 20; ++attempt) {
                const double d = rng.uniform(0.45, config.stop_dist * 0.95);
                const double phi = base + rng.uniform(-60.0, 60.0) * kDeg;
                Pose p{t.x + d * std::cos(phi), t.y + d * std::sin(phi), 0.0};
                p.heading_deg = quantize_heading(std::atan2(t.y - p.y, t.x - p.x) / kDeg + rng.uniform(-20.0, 20.0));
                if (!plan.is_free_point(p.x, p.y) || body_overlaps_wall(plan, p.x, p.y, kin.body_radius)) continue;
                if (expert.command(p) != FlightCommand::Stop) continue;
                traj.steps.push_back({options.render ? render(plan, p) : Tensor{}, FlightCommand::Stop, p, true});
                break;
            }
        }
    }
    return traj;
}

Trajectory rollout_expert(const FloorPlan& plan, const OracleConfig& config, int max_steps) {
    RolloutOptions options;
    options.max_steps = max_steps;
    return rollout_expert(plan, config, options);
}

}  // namespace cpnav
