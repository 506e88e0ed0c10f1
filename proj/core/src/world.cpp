#include "cpnav/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numbers>

#include "cpnav/error.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/theme.hpp"

namespace cpnav {

std::string_view layout_name(Layout layout) noexcept {
    switch (layout) {
        case Layout::Corridor: return "corridor";
        case Layout::CornerL: return "corner_L";
        case Layout::CornerT: return "corner_T";
        case Layout::Loop: return "loop";
    }
    return "?";
}

std::optional<Layout> parse_layout(std::string_view name) noexcept {
    for (Layout l : kAllLayouts)
        if (layout_name(l) == name) return l;
    return std::nullopt;
}

std::string_view target_kind_name(TargetKind kind) noexcept {
    switch (kind) {
        case TargetKind::TrueTarget: return "true_target";
        case TargetKind::FakeBox: return "fake_box";
        case TargetKind::FakeULock: return "fake_ulock";
        case TargetKind::FakeBook: return "fake_book";
        case TargetKind::FakeBottle: return "fake_bottle";
    }
    return "?";
}

std::optional<TargetKind> parse_target_kind(std::string_view name) noexcept {
    for (TargetKind k : {TargetKind::TrueTarget, TargetKind::FakeBox, TargetKind::FakeULock, TargetKind::FakeBook,
                         TargetKind::FakeBottle})
        if (target_kind_name(k) == name) return k;
    return std::nullopt;
}

double wrap_degrees(double deg) noexcept {
    double r = deg - 360.0 * std::floor(deg / 360.0);
    if (r >= 360.0) r -= 360.0;
    return r;
}

double quantize_heading(double deg) noexcept {
    constexpr double q = 1048576.0;  // 2^20
    return wrap_degrees(std::round(deg * q) / q);
}

double signed_degrees(double deg) noexcept {
    double r = wrap_degrees(deg);
    if (r > 180.0) r -= 360.0;
    return r;
}

double Pose::heading() const noexcept { return heading_deg * std::numbers::pi / 180.0; }

bool FloorPlan::is_free_point(double x, double y) const noexcept { return !is_wall(cell_of(x), cell_of(y)); }

const TargetSpec& FloorPlan::true_target() const {
    for (const TargetSpec& t : targets)
        if (t.is_true()) return t;
    throw StateError("floor plan has no true target");
}

// ------------------------------------------------------------------ generation

namespace {

// Builds a world in a canonical frame (travel starts along +x) before a
// random mirror/rotation is applied.
struct Canvas {
    int width, height;
    std::vector<std::int8_t> cells;
    std::vector<std::array<int, 4>> rooms;  // carved rectangles, inclusive

    Canvas(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {}

    void carve(int x0, int y0, int x1, int y1) {
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) cells[static_cast<std::size_t>(y) * width + x] = kFreeCell;
        rooms.push_back({x0, y0, x1, y1});
    }
};

struct Canonical {
    Canvas canvas;
    Pose spawn;
    TargetSpec target;
};

double span_center(int c0, int c1) { return (c0 + c1 + 1) * 0.5 * kCellSize; }
double last_cell_center(int c) { return (c + 0.5) * kCellSize; }

Canonical build_canonical(Layout layout, Rng& rng) {
    const int w = rng.uniform_int(2, 4);
    switch (layout) {
        case Layout::Corridor: {
            const int len = rng.uniform_int(18, 30);
            Canvas cv(len + 2, w + 2);
            cv.carve(1, 1, len, w);
            Pose spawn{1.25, span_center(1, w), 0.0};
            TargetSpec tgt{TargetKind::TrueTarget, last_cell_center(len), span_center(1, w)};
            return {std::move(cv), spawn, tgt};
        }
        case Layout::CornerL: {
            const int la = rng.uniform_int(12, 22), lb = rng.uniform_int(10, 20);
            Canvas cv(la + w + 2, w + lb + 2);
            cv.carve(1, 1, la, w);                      // first leg
            cv.carve(la + 1, 1, la + w, w);             // corner square
            cv.carve(la + 1, w + 1, la + w, w + lb);    // second leg
            Pose spawn{1.25, span_center(1, w), 0.0};
            TargetSpec tgt{TargetKind::TrueTarget, span_center(la + 1, la + w), last_cell_center(w + lb)};
            return {std::move(cv), spawn, tgt};
        }
        case Layout::CornerT: {
            const int ls = rng.uniform_int(12, 20), arm = rng.uniform_int(10, 18), alcove = rng.uniform_int(1, 2);
            const int y0 = alcove + 1;
            Canvas cv(ls + w + 2, alcove + w + arm + 2);
            cv.carve(1, y0, ls, y0 + w - 1);                        // stem
            cv.carve(ls + 1, y0, ls + w, y0 + w - 1);               // junction
            cv.carve(ls + 1, y0 + w, ls + w, y0 + w + arm - 1);     // long arm
            cv.carve(ls + 1, 1, ls + w, y0 - 1);                    // short alcove
            Pose spawn{1.25, span_center(y0, y0 + w - 1), 0.0};
            TargetSpec tgt{TargetKind::TrueTarget, span_center(ls + 1, ls + w), last_cell_center(y0 + w + arm - 1)};
            return {std::move(cv), spawn, tgt};
        }
        case Layout::Loop: {
            const int nx = rng.uniform_int(std::max(14, 2 * w + 4), 22);
            const int ny = rng.uniform_int(std::max(12, 2 * w + 4), 18);
            Canvas cv(nx + 2, ny + 2);
            cv.carve(1, 1, nx, w);                   // bottom
            cv.carve(nx - w + 1, w + 1, nx, ny);     // right
            cv.carve(1, ny - w + 1, nx - w, ny);     // top
            cv.carve(1, w + 1, w, ny - w);           // left
            Pose spawn{std::floor(nx * 0.5) * kCellSize + 0.25, span_center(1, w), 0.0};
            TargetSpec tgt{TargetKind::TrueTarget, span_center(nx - w + 1, nx), last_cell_center(ny)};
            return {std::move(cv), spawn, tgt};
        }
    }
    throw DomainError("unknown layout");
}

bool touches_free(const Canvas& cv, int x, int y, int dx, int dy) {
    const int nx = x + dx, ny = y + dy;
    return nx >= 0 && ny >= 0 && nx < cv.width && ny < cv.height && cv.cells[static_cast<std::size_t>(ny) * cv.width + nx] == kFreeCell;
}

void paint_walls(Canvas& cv, const Theme& theme, Rng& rng) {
    for (int y = 0; y < cv.height; ++y)
        for (int x = 0; x < cv.width; ++x) {
            std::int8_t& c = cv.cells[static_cast<std::size_t>(y) * cv.width + x];
            if (c == kFreeCell) continue;
            c = static_cast<std::int8_t>(theme.primary_texture);
            const bool faces_free = touches_free(cv, x, y, 1, 0) || touches_free(cv, x, y, -1, 0) ||
                                    touches_free(cv, x, y, 0, 1) || touches_free(cv, x, y, 0, -1);
            if (!faces_free) continue;
            if (theme.side_texture >= 0 && touches_free(cv, x, y, 0, -1)) c = static_cast<std::int8_t>(theme.side_texture);
            else if (theme.accent_texture >= 0 && rng.uniform() < 0.12) c = static_cast<std::int8_t>(theme.accent_texture);
        }
}

void place_fakes(const Canvas& cv, const Pose& spawn, const TargetSpec& truth, Rng& rng, std::vector<TargetSpec>& out) {
    std::array<TargetKind, 4> kinds = {TargetKind::FakeBox, TargetKind::FakeULock, TargetKind::FakeBook,
                                       TargetKind::FakeBottle};
    for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[rng.below(i)]);
    const int count = rng.uniform_int(0, 3);

    std::vector<std::pair<double, double>> candidates;
    for (int y = 0; y < cv.height; ++y)
        for (int x = 0; x < cv.width; ++x) {
            if (cv.cells[static_cast<std::size_t>(y) * cv.width + x] != kFreeCell) continue;
            const bool edge = !touches_free(cv, x, y, 1, 0) || !touches_free(cv, x, y, -1, 0) ||
                              !touches_free(cv, x, y, 0, 1) || !touches_free(cv, x, y, 0, -1);
            if (!edge) continue;
            const double cx = (x + 0.5) * kCellSize, cy = (y + 0.5) * kCellSize;
            if (std::hypot(cx - truth.x, cy - truth.y) < 3.0) continue;
            if (std::hypot(cx - spawn.x, cy - spawn.y) < 1.5) continue;
            candidates.emplace_back(cx, cy);
        }
    for (int i = 0; i < count && !candidates.empty(); ++i) {
        const auto pick = candidates[rng.below(candidates.size())];
        out.push_back({kinds[static_cast<std::size_t>(i)], pick.first, pick.second});
        std::erase_if(candidates, [&](const auto& c) { return std::hypot(c.first - pick.first, c.second - pick.second) < 1.0; });
    }
}

void mirror_y(FloorPlan& p) {
    const double hm = p.height * kCellSize;
    std::vector<std::int8_t> cells(p.cells.size());
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            cells[static_cast<std::size_t>(p.height - 1 - y) * p.width + x] = p.cells[static_cast<std::size_t>(y) * p.width + x];
    p.cells = std::move(cells);
    for (TargetSpec& t : p.targets) t.y = hm - t.y;
    p.spawn.y = hm - p.spawn.y;
    p.spawn.heading_deg = wrap_degrees(-p.spawn.heading_deg);
}

// 90 degrees counter-clockwise: (x, y) -> (H - y, x).
void rotate_ccw(FloorPlan& p) {
    const double hm = p.height * kCellSize;
    const int nw = p.height, nh = p.width;
    std::vector<std::int8_t> cells(p.cells.size());
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            cells[static_cast<std::size_t>(x) * nw + (p.height - 1 - y)] = p.cells[static_cast<std::size_t>(y) * p.width + x];
    p.cells = std::move(cells);
    p.width = nw;
    p.height = nh;
    for (TargetSpec& t : p.targets) t = {t.kind, hm - t.y, t.x};
    p.spawn = {hm - p.spawn.y, p.spawn.x, wrap_degrees(p.spawn.heading_deg + 90.0)};
}

}  // namespace

FloorPlan generate_world(std::uint64_t seed, Layout layout, int theme_id) {
    const Theme& th = theme(theme_id);
    Rng rng(mix_seed(seed, 0x57A7E));
    Canonical c = build_canonical(layout, rng);
    paint_walls(c.canvas, th, rng);

    FloorPlan plan;
    plan.width = c.canvas.width;
    plan.height = c.canvas.height;
    plan.cells = c.canvas.cells;
    plan.theme = theme_id;
    plan.layout = layout;
    plan.seed = seed;
    plan.spawn = c.spawn;
    plan.targets.push_back(c.target);
    place_fakes(c.canvas, c.spawn, c.target, rng, plan.targets);

    if (rng.below(2) == 1) mirror_y(plan);
    const int turns = static_cast<int>(rng.below(4));
    for (int i = 0; i < turns; ++i) rotate_ccw(plan);
    return plan;
}

std::vector<std::string> validate_plan(const FloorPlan& plan) {
    std::vector<std::string> issues;
    if (plan.width <= 0 || plan.height <= 0 || plan.cells.size() != static_cast<std::size_t>(plan.width) * plan.height) {
        issues.push_back("grid dimensions inconsistent");
        return issues;
    }
    if (plan.theme < 0 || plan.theme >= kNumThemes) issues.push_back("theme out of range");
    if (!plan.is_free_point(plan.spawn.x, plan.spawn.y)) issues.push_back("spawn not in a free cell");
    int truths = 0;
    std::vector<int> signatures;
    for (const TargetSpec& t : plan.targets) {
        if (!plan.is_free_point(t.x, t.y)) issues.push_back("target " + std::string(target_kind_name(t.kind)) + " not in a free cell");
        truths += t.is_true() ? 1 : 0;
        signatures.push_back(t.visual_signature());
    }
    if (truths != 1) issues.push_back("expected exactly one true target, found " + std::to_string(truths));
    std::sort(signatures.begin(), signatures.end());
    if (std::adjacent_find(signatures.begin(), signatures.end()) != signatures.end())
        issues.push_back("duplicate target visual signatures");

    // 4-connected flood fill from the spawn cell must reach every free cell.
    std::size_t free_total = 0;
    for (auto c : plan.cells) free_total += c == kFreeCell ? 1 : 0;
    const int sx = cell_of(plan.spawn.x), sy = cell_of(plan.spawn.y);
    if (!plan.is_wall(sx, sy)) {
        std::vector<char> seen(plan.cells.size(), 0);
        std::deque<std::pair<int, int>> q{{sx, sy}};
        seen[static_cast<std::size_t>(sy) * plan.width + sx] = 1;
        std::size_t reached = 0;
        while (!q.empty()) {
            auto [x, y] = q.front();
            q.pop_front();
            ++reached;
            for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                const int nx = x + dx, ny = y + dy;
                if (plan.is_wall(nx, ny)) continue;
                char& s = seen[static_cast<std::size_t>(ny) * plan.width + nx];
                if (!s) {
                    s = 1;
                    q.emplace_back(nx, ny);
                }
            }
        }
        if (reached != free_total) issues.push_back("free space is not 4-connected");
    }
    return issues;
}

// ------------------------------------------------------------------ kinematics

bool body_overlaps_wall(const FloorPlan& plan, double x, double y, double radius) {
    const int x0 = cell_of(x - radius), x1 = cell_of(x + radius);
    const int y0 = cell_of(y - radius), y1 = cell_of(y + radius);
    for (int cy = y0; cy <= y1; ++cy)
        for (int cx = x0; cx <= x1; ++cx) {
            if (!plan.is_wall(cx, cy)) continue;
            const double nx = std::clamp(x, cx * kCellSize, (cx + 1) * kCellSize);
            const double ny = std::clamp(y, cy * kCellSize, (cy + 1) * kCellSize);
            if ((nx - x) * (nx - x) + (ny - y) * (ny - y) < radius * radius) return true;
        }
    return false;
}

std::optional<TargetSpec> target_in_cone(const FloorPlan& plan, const Pose& pose, double radius, double half_angle_deg) {
    std::optional<TargetSpec> best;
    double best_d = 0;
    for (const TargetSpec& t : plan.targets) {
        const double dx = t.x - pose.x, dy = t.y - pose.y;
        const double d = std::hypot(dx, dy);
        if (d > radius) continue;
        const double bearing = signed_degrees(std::atan2(dy, dx) * 180.0 / std::numbers::pi - pose.heading_deg);
        if (d > 1e-9 && std::abs(bearing) > half_angle_deg) continue;
        if (!best || d < best_d) {
            best = t;
            best_d = d;
        }
    }
    return best;
}

StepResult step(const FloorPlan& plan, const Pose& pose, FlightCommand command, const Kinematics& kin) {
    if (command == FlightCommand::Stop) throw DomainError("Stop is handled by the controller, not the simulator");
    StepResult r{pose, std::nullopt, std::nullopt};
    if (is_spin(command)) {
        const double delta = command == FlightCommand::SpinLeft ? kin.spin_deg : -kin.spin_deg;
        r.pose.heading_deg = wrap_degrees(pose.heading_deg + delta);
    } else {
        double offset = 0.0;
        if (command == FlightCommand::MoveLeft) offset = 90.0;
        if (command == FlightCommand::MoveRight) offset = -90.0;
        const double a = (pose.heading_deg + offset) * std::numbers::pi / 180.0;
        const double dx = kin.step_m * std::cos(a), dy = kin.step_m * std::sin(a);
        const int samples = std::max(1, static_cast<int>(std::ceil(kin.step_m / 0.01)));
        Pose last = pose;
        for (int i = 1; i <= samples; ++i) {
            const double f = static_cast<double>(i) / samples;
            const double x = pose.x + f * dx, y = pose.y + f * dy;
            if (body_overlaps_wall(plan, x, y, kin.body_radius)) {
                r.pose = last;
                r.collision = CollisionEvent{0, last};
                return r;
            }
            last.x = x;
            last.y = y;
        }
        r.pose = last;
    }
    r.reached = target_in_cone(plan, r.pose, kin.reach_radius, kin.reach_half_angle_deg);
    return r;
}

Episode::Episode(const FloorPlan& plan, Pose start, Kinematics kin) : plan_(&plan), kin_(kin), pose_(start) {
    if (!plan.is_free_point(start.x, start.y)) throw StateError("episode start pose is inside a wall");
}

StepResult Episode::step(FlightCommand command) {
    if (collision_) throw StateError("episode already ended in a collision");
    StepResult r = cpnav::step(*plan_, pose_, command, kin_);
    if (r.collision) {
        r.collision->step_index = steps_;
        collision_ = r.collision;
    }
    pose_ = r.pose;
    ++steps_;
    return r;
}

}  // namespace cpnav
