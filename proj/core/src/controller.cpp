#include "cpnav/controller.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "cpnav/error.hpp"
#include "cpnav/render.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/theme.hpp"

namespace cpnav {

std::string_view phase_name(Phase phase) noexcept {
    switch (phase) {
        case Phase::Initializing: return "initializing";
        case Phase::TakingOff: return "taking_off";
        case Phase::Flying: return "flying";
        case Phase::Hovering: return "hovering";
        case Phase::Landed: return "landed";
        case Phase::Failed: return "failed";
    }
    return "?";
}

bool is_terminal(Phase phase) noexcept { return phase == Phase::Landed || phase == Phase::Failed; }

Phase transition(Phase phase, ControlEvent event) {
    const bool airborne = phase == Phase::Flying || phase == Phase::Hovering;
    switch (event) {
        case ControlEvent::TakeOff:
            if (phase == Phase::Initializing) return Phase::TakingOff;
            break;
        case ControlEvent::TakeOffComplete:
            if (phase == Phase::TakingOff) return Phase::Flying;
            break;
        case ControlEvent::Hover:
            if (airborne) return Phase::Hovering;
            break;
        case ControlEvent::Execute:
            if (airborne) return Phase::Flying;
            break;
        case ControlEvent::Land:
            if (airborne) return Phase::Landed;
            break;
        case ControlEvent::Fail:
            if (airborne || phase == Phase::TakingOff) return Phase::Failed;
            break;
    }
    throw StateError("no transition from " + std::string(phase_name(phase)) + " on event " +
                     std::to_string(static_cast<int>(event)));
}

std::string_view action_name(ActionKind kind) noexcept {
    switch (kind) {
        case ActionKind::Hover: return "hover";
        case ActionKind::Execute: return "execute";
        case ActionKind::Land: return "land";
    }
    return "?";
}

ControllerState take_off(ControllerState state) {
    state.phase = transition(transition(state.phase, ControlEvent::TakeOff), ControlEvent::TakeOffComplete);
    return state;
}

ControlDecision control_step(const ControllerState& state, const Prediction& prediction, double threshold) {
    if (state.phase != Phase::Flying && state.phase != Phase::Hovering)
        throw StateError("control_step called in phase " + std::string(phase_name(state.phase)));
    ControlDecision d{{}, state};
    d.state.step_count += 1;
    if (prediction.confidence < threshold) {
        d.action = {ActionKind::Hover, prediction.command};
        d.state.phase = transition(state.phase, ControlEvent::Hover);
        d.state.hover_streak += 1;
    } else if (prediction.command == FlightCommand::Stop) {
        d.action = {ActionKind::Land, FlightCommand::Stop};
        d.state.phase = transition(state.phase, ControlEvent::Land);
        d.state.hover_streak = 0;
    } else {
        d.action = {ActionKind::Execute, prediction.command};
        d.state.phase = transition(state.phase, ControlEvent::Execute);
        d.state.hover_streak = 0;
    }
    return d;
}

ControlDecision control_step(const ControllerState& state, const Tensor& frame, const Network& network,
                             double threshold) {
    return control_step(state, predict(network, frame), threshold);
}

Prediction NetworkPolicy::decide(const Observation& obs) { return predict(*network_, obs.frame); }

Prediction ExpertPolicy::decide(const Observation& obs) { return one_hot_prediction(expert_.command(obs.pose)); }

Prediction one_hot_prediction(FlightCommand command, double confidence) {
    std::vector<double> dist(kNumCommands, (1.0 - confidence) / (kNumCommands - 1));
    dist[static_cast<std::size_t>(to_index(command))] = confidence;
    return {command, confidence, dist};
}

std::string_view outcome_name(Outcome outcome) noexcept {
    switch (outcome) {
        case Outcome::Success: return "success";
        case Outcome::Collision: return "collision";
        case Outcome::WrongTarget: return "wrong_target";
        case Outcome::Timeout: return "timeout";
        case Outcome::HoverStall: return "hover_stall";
        case Outcome::Aborted: return "aborted";
    }
    return "?";
}

// ------------------------------------------------------------------ trials

TrialRunner::TrialRunner(const FloorPlan& plan, Policy& policy, TrialConfig config)
    : plan_(&plan), policy_(&policy), config_(config), episode_(plan, plan.spawn, config.kinematics) {
    if (config_.max_steps < 1) throw DomainError("max_steps must be at least 1");
    if (config_.hover_stall < 1) throw DomainError("hover_stall must be at least 1");
    state_ = take_off(state_);
    trajectory_.push_back(episode_.pose());
}

void TrialRunner::fail(Outcome outcome) {
    state_.phase = transition(state_.phase, ControlEvent::Fail);
    outcome_ = outcome;
}

TrialRunner::StepInfo TrialRunner::advance(std::optional<FlightCommand> override_command) {
    if (finished()) throw StateError("trial already finished");
    const Pose pose = episode_.pose();
    const int step_index = state_.step_count;
    StepInfo info;
    const Tensor clean = render(*plan_, pose);
    info.frame = add_sensor_noise(clean, mix_seed(config_.sensor_noise_seed, static_cast<std::uint64_t>(step_index)),
                                  config_.sensor_sigma);
    info.prediction = policy_->decide({info.frame, *plan_, pose});

    ControlDecision d;
    CommandSource source = CommandSource::Controller;
    if (override_command) {
        d = control_step(state_, one_hot_prediction(*override_command), 0.0);
        source = CommandSource::Human;
    } else {
        d = control_step(state_, info.prediction, config_.threshold);
    }
    state_ = d.state;
    info.entry = {step_index, pose, d.action.command,
                  override_command ? 1.0 : info.prediction.confidence, d.action.kind, source};
    log_.push_back(info.entry);

    switch (d.action.kind) {
        case ActionKind::Hover:
            if (state_.hover_streak >= config_.hover_stall) fail(Outcome::HoverStall);
            break;
        case ActionKind::Land: {
            landed_at_ = target_in_cone(*plan_, pose, config_.landing_radius, config_.landing_half_angle_deg);
            outcome_ = (landed_at_ && landed_at_->is_true() && !episode_.collision()) ? Outcome::Success
                                                                                      : Outcome::WrongTarget;
            break;
        }
        case ActionKind::Execute: {
            const StepResult r = episode_.step(d.action.command);
            if (r.collision) fail(Outcome::Collision);
            break;
        }
    }
    trajectory_.push_back(episode_.pose());
    if (!finished() && state_.step_count >= config_.max_steps) fail(Outcome::Timeout);
    return info;
}

void TrialRunner::abort() {
    if (finished()) throw StateError("trial already finished");
    fail(Outcome::Aborted);
}

TrialResult TrialRunner::result() const {
    TrialResult r;
    r.outcome = finished() ? outcome_ : Outcome::Timeout;
    // A collision can never be reported as success, whatever happened later.
    if (episode_.collision() && r.outcome == Outcome::Success) r.outcome = Outcome::Collision;
    r.steps = state_.step_count;
    r.trajectory = trajectory_;
    r.log = log_;
    r.collision = episode_.collision();
    r.landed_at = landed_at_;
    return r;
}

TrialResult run_trial(const FloorPlan& plan, Policy& policy, const TrialConfig& config) {
    TrialRunner runner(plan, policy, config);
    while (!runner.finished()) runner.advance();
    return runner.result();
}

TrialResult run_trial(const FloorPlan& plan, const Network& network, const TrialConfig& config) {
    NetworkPolicy policy(network);
    return run_trial(plan, policy, config);
}

std::string trajectory_log_jsonl(const std::vector<LogEntry>& log) {
    std::string out;
    for (const LogEntry& e : log) {
        nlohmann::ordered_json j;
        j["step"] = e.step;
        j["pose"] = {{"x", e.pose.x}, {"y", e.pose.y}, {"heading_deg", e.pose.heading_deg}};
        j["command"] = command_name(e.command);
        j["confidence"] = e.confidence;
        j["action"] = action_name(e.action);
        j["source"] = e.source == CommandSource::Human ? "human" : "controller";
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ------------------------------------------------------------------ benchmark

std::uint64_t trial_world_seed(const SuiteSpec& suite, int i) { return mix_seed(suite.seed, static_cast<std::uint64_t>(i)); }
std::uint64_t trial_noise_seed(const SuiteSpec& suite, int i) {
    return mix_seed(suite.seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(i));
}

BenchmarkReport run_benchmark(const std::vector<SuiteSpec>& suites, const PolicyFactory& policy_factory,
                              const BenchmarkConfig& config) {
    if (suites.empty()) throw DomainError("benchmark needs at least one suite");
    struct Job {
        std::size_t suite;
        int trial;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < suites.size(); ++s)
        for (int i = 0; i < suites[s].trials; ++i) jobs.push_back({s, i});
    std::vector<TrialResult> results(jobs.size());

    auto run_job = [&](std::size_t j) {
        const SuiteSpec& suite = suites[jobs[j].suite];
        const FloorPlan plan = generate_world(trial_world_seed(suite, jobs[j].trial), suite.layout, suite.theme);
        TrialConfig tc = config.trial;
        tc.sensor_noise_seed = trial_noise_seed(suite, jobs[j].trial);
        auto policy = policy_factory(plan);
        results[j] = run_trial(plan, *policy, tc);
    };

    const int workers = std::max(1, config.workers);
    if (workers == 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    BenchmarkReport report;
    for (const SuiteSpec& s : suites) report.suites.push_back({s, 0, {}, {}});
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        SuiteResult& sr = report.suites[jobs[j].suite];
        sr.outcomes.push_back(results[j].outcome);
        sr.steps.push_back(results[j].steps);
        if (results[j].outcome == Outcome::Success) ++sr.successes;
    }
    return report;
}

BenchmarkReport run_benchmark(const std::vector<SuiteSpec>& suites, const Network& network,
                              const BenchmarkConfig& config) {
    return run_benchmark(
        suites, [&](const FloorPlan&) { return std::make_unique<NetworkPolicy>(network); }, config);
}

std::string BenchmarkReport::format_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %-10s %-16s %8s\n", "Suite", "Layout", "Theme", "Success");
    os << line;
    int total_s = 0, total_n = 0;
    for (const SuiteResult& r : suites) {
        const std::string rate = std::to_string(r.successes) + "/" + std::to_string(r.spec.trials);
        std::snprintf(line, sizeof line, "%-14s %-10s %-16s %8s\n", r.spec.name.c_str(),
                      std::string(layout_name(r.spec.layout)).c_str(), std::string(theme(r.spec.theme).name).c_str(),
                      rate.c_str());
        os << line;
        total_s += r.successes;
        total_n += r.spec.trials;
    }
    std::snprintf(line, sizeof line, "%-14s %-10s %-16s %8s\n", "all", "", "",
                  (std::to_string(total_s) + "/" + std::to_string(total_n)).c_str());
    os << line;
    return os.str();
}

SuiteFile parse_suite_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("suite file is not valid JSON: ") + e.what());
    }
    SuiteFile f;
    try {
        f.trial.threshold = j.value("threshold", 0.5);
        f.trial.max_steps = j.value("max_steps", 500);
        f.trial.hover_stall = j.value("hover_stall", 50);
        for (const auto& s : j.at("suites")) {
            SuiteSpec spec;
            spec.name = s.at("name").get<std::string>();
            auto lay = parse_layout(s.at("layout").get<std::string>());
            if (!lay) throw FormatError("unknown layout in suite " + spec.name);
            spec.layout = *lay;
            spec.theme = s.at("theme").get<int>();
            spec.trials = s.at("trials").get<int>();
            spec.seed = s.at("seed").get<std::uint64_t>();
            if (spec.trials < 1) throw FormatError("suite " + spec.name + " needs at least one trial");
            f.suites.push_back(spec);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed suite file: ") + e.what());
    }
    if (f.suites.empty()) throw FormatError("suite file lists no suites");
    return f;
}

std::vector<SuiteSpec> default_suites() {
    return {
        {"test_loc_1", Layout::Corridor, 0, 10, 7001},
        {"test_loc_2", Layout::CornerL, 1, 10, 7002},
        {"test_loc_3", Layout::CornerT, 4, 10, 7003},
        {"test_loc_4", Layout::Loop, 5, 10, 7004},
        {"test_loc_5", Layout::CornerL, 3, 5, 7005},
    };
}

}  // namespace cpnav
