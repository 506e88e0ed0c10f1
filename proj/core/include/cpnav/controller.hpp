#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpnav/expert.hpp"
#include "cpnav/network.hpp"
#include "cpnav/world.hpp"

namespace cpnav {

enum class Phase { Initializing, TakingOff, Flying, Hovering, Landed, Failed };
enum class ControlEvent { TakeOff, TakeOffComplete, Hover, Execute, Land, Fail };

std::string_view phase_name(Phase phase) noexcept;

// Explicit transition table. Undefined (phase, event) pairs throw StateError.
Phase transition(Phase phase, ControlEvent event);
bool is_terminal(Phase phase) noexcept;

struct ControllerState {
    Phase phase = Phase::Initializing;
    int step_count = 0;
    int hover_streak = 0;
    friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

enum class ActionKind { Hover, Execute, Land };
std::string_view action_name(ActionKind kind) noexcept;

struct Action {
    ActionKind kind = ActionKind::Hover;
    FlightCommand command = FlightCommand::Stop;  // meaningful for Execute
    friend bool operator==(const Action&, const Action&) = default;
};

struct ControlDecision {
    Action action;
    ControllerState state;
};

// Initializing -> TakingOff -> Flying.
ControllerState take_off(ControllerState state);

/// Confidence gate: below threshold -> Hover; Stop -> Land; else Execute.
ControlDecision control_step(const ControllerState& state, const Prediction& prediction, double threshold);
ControlDecision control_step(const ControllerState& state, const Tensor& frame, const Network& network,
                             double threshold);

// ------------------------------------------------------------------ policies

struct Observation {
    const Tensor& frame;   // what the camera delivered (with sensor noise)
    const FloorPlan& plan;
    const Pose& pose;      // ground truth, only for scripted policies
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual Prediction decide(const Observation& obs) = 0;
};

class NetworkPolicy final : public Policy {
public:
    explicit NetworkPolicy(const Network& network) : network_(&network) {}
    Prediction decide(const Observation& obs) override;

private:
    const Network* network_;
};

// Reads the world directly; always fully confident.
class ExpertPolicy final : public Policy {
public:
    ExpertPolicy(const FloorPlan& plan, OracleConfig config = {}) : expert_(plan, config) {}
    Prediction decide(const Observation& obs) override;

private:
    Expert expert_;
};

class FunctionPolicy final : public Policy {
public:
    explicit FunctionPolicy(std::function<Prediction(const Observation&)> fn) : fn_(std::move(fn)) {}
    Prediction decide(const Observation& obs) override { return fn_(obs); }

private:
    std::function<Prediction(const Observation&)> fn_;
};

Prediction one_hot_prediction(FlightCommand command, double confidence = 1.0);

// ------------------------------------------------------------------ trials

enum class Outcome { Success, Collision, WrongTarget, Timeout, HoverStall, Aborted };
std::string_view outcome_name(Outcome outcome) noexcept;

struct TrialConfig {
    double threshold = 0.5;
    int max_steps = 500;
    int hover_stall = 50;
    std::uint64_t sensor_noise_seed = 0;
    double sensor_sigma = 0.02;
    // Landing is judged by the target cone at the moment of Land.
    double landing_radius = 1.5;
    double landing_half_angle_deg = 45.0;
    Kinematics kinematics;
};

enum class CommandSource { Controller, Human };

struct LogEntry {
    int step = 0;
    Pose pose;  // pose when the frame was taken
    FlightCommand command = FlightCommand::Stop;
    double confidence = 0.0;
    ActionKind action = ActionKind::Hover;
    CommandSource source = CommandSource::Controller;
    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

struct TrialResult {
    Outcome outcome = Outcome::Timeout;
    int steps = 0;
    std::vector<Pose> trajectory;  // start pose, then pose after every step
    std::vector<LogEntry> log;
    std::optional<CollisionEvent> collision;
    std::optional<TargetSpec> landed_at;
};

/// Steps one trial a frame at a time. run_trial and the gateway's
/// autonomous sessions both drive this class.
class TrialRunner {
public:
    TrialRunner(const FloorPlan& plan, Policy& policy, TrialConfig config);

    struct StepInfo {
        LogEntry entry;
        Prediction prediction;
        Tensor frame;  // noisy frame the decision was made on
    };

    // One control step. `override_command` replaces the policy's decision for
    // this step and is logged as human-sourced. Throws StateError once finished.
    StepInfo advance(std::optional<FlightCommand> override_command = std::nullopt);
    void abort();

    bool finished() const noexcept { return is_terminal(state_.phase); }
    const ControllerState& state() const noexcept { return state_; }
    const Pose& pose() const noexcept { return episode_.pose(); }
    TrialResult result() const;

private:
    void fail(Outcome outcome);

    const FloorPlan* plan_;
    Policy* policy_;
    TrialConfig config_;
    Episode episode_;
    ControllerState state_;
    Outcome outcome_ = Outcome::Timeout;
    std::vector<Pose> trajectory_;
    std::vector<LogEntry> log_;
    std::optional<TargetSpec> landed_at_;
};

TrialResult run_trial(const FloorPlan& plan, Policy& policy, const TrialConfig& config = {});
TrialResult run_trial(const FloorPlan& plan, const Network& network, const TrialConfig& config = {});

// One JSON object per line: {step, pose:{x,y,heading_deg}, command, confidence, action, source}.
std::string trajectory_log_jsonl(const std::vector<LogEntry>& log);

// ------------------------------------------------------------------ benchmark

struct SuiteSpec {
    std::string name;
    Layout layout = Layout::Corridor;
    int theme = 0;
    int trials = 10;
    std::uint64_t seed = 0;
};

struct SuiteResult {
    SuiteSpec spec;
    int successes = 0;
    std::vector<Outcome> outcomes;
    std::vector<int> steps;
};

struct BenchmarkReport {
    std::vector<SuiteResult> suites;
    std::string format_table() const;
};

struct BenchmarkConfig {
    TrialConfig trial;
    int workers = 1;
};

// World seed and sensor seed of trial `i` of a suite.
std::uint64_t trial_world_seed(const SuiteSpec& suite, int i);
std::uint64_t trial_noise_seed(const SuiteSpec& suite, int i);

using PolicyFactory = std::function<std::unique_ptr<Policy>(const FloorPlan&)>;

BenchmarkReport run_benchmark(const std::vector<SuiteSpec>& suites, const PolicyFactory& policy_factory,
                              const BenchmarkConfig& config = {});
BenchmarkReport run_benchmark(const std::vector<SuiteSpec>& suites, const Network& network,
                              const BenchmarkConfig& config = {});

// suite.json: {"threshold":0.5,"max_steps":500,"suites":[{"name","layout","theme","trials","seed"}]}
struct SuiteFile {
    std::vector<SuiteSpec> suites;
    TrialConfig trial;
};
SuiteFile parse_suite_json(const std::string& text);
std::vector<SuiteSpec> default_suites();

}  // namespace cpnav
