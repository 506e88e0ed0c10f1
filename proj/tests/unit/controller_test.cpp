#include <gtest/gtest.h>

#include <sstream>

#include "cpnav/controller.hpp"
#include "cpnav/error.hpp"
#include "cpnav/render.hpp"
#include "cpnav/rng.hpp"
#include "json.hpp"

using namespace cpnav;

namespace {

constexpr Phase kPhases[] = {Phase::Initializing, Phase::TakingOff, Phase::Flying,
                             Phase::Hovering,     Phase::Landed,    Phase::Failed};
constexpr ControlEvent kEvents[] = {ControlEvent::TakeOff, ControlEvent::TakeOffComplete, ControlEvent::Hover,
                                    ControlEvent::Execute, ControlEvent::Land,            ControlEvent::Fail};

ControllerState flying() { return take_off({}); }

Prediction stub(FlightCommand c, double confidence) { return one_hot_prediction(c, confidence); }

Prediction random_prediction(Rng& rng) {
    std::vector<double> d(kNumCommands);
    double s = 0;
    for (double& v : d) s += (v = rng.uniform(0.01, 1.0));
    for (double& v : d) v /= s;
    return prediction_from_distribution(d);
}

}  // namespace

TEST(ControlStep, LowConfidenceHovers) {
    const ControlDecision d = control_step(flying(), stub(FlightCommand::MoveForward, 0.30), 0.5);
    EXPECT_EQ(d.action.kind, ActionKind::Hover);
    EXPECT_EQ(d.state.phase, Phase::Hovering);
    EXPECT_EQ(d.state.hover_streak, 1);
}

TEST(ControlStep, ConfidentStopLands) {
    const ControlDecision d = control_step(flying(), stub(FlightCommand::Stop, 0.95), 0.5);
    EXPECT_EQ(d.action.kind, ActionKind::Land);
    EXPECT_EQ(d.state.phase, Phase::Landed);
    EXPECT_TRUE(is_terminal(d.state.phase));
}

TEST(ControlStep, ConfidentCommandExecutes) {
    const ControlDecision d = control_step(flying(), stub(FlightCommand::SpinRight, 0.80), 0.5);
    EXPECT_EQ(d.action, (Action{ActionKind::Execute, FlightCommand::SpinRight}));
    EXPECT_EQ(d.state.phase, Phase::Flying);
}

TEST(ControlStep, HoverStreakResetsOnAction) {
    ControllerState s = flying();
    for (int i = 0; i < 3; ++i) s = control_step(s, stub(FlightCommand::MoveLeft, 0.2), 0.5).state;
    EXPECT_EQ(s.hover_streak, 3);
    EXPECT_EQ(s.phase, Phase::Hovering);
    s = control_step(s, stub(FlightCommand::MoveLeft, 0.9), 0.5).state;
    EXPECT_EQ(s.hover_streak, 0);
    EXPECT_EQ(s.phase, Phase::Flying);
}

TEST(ControlStep, ThresholdBoundaries) {
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        const Prediction p = random_prediction(rng);
        EXPECT_NE(control_step(flying(), p, 0.0).action.kind, ActionKind::Hover);
        EXPECT_EQ(control_step(flying(), p, 1.0 + 1e-9).action.kind, ActionKind::Hover);
    }
}

TEST(ControlStep, TerminalOrGroundedPhasesReject) {
    for (Phase ph : {Phase::Initializing, Phase::TakingOff, Phase::Landed, Phase::Failed}) {
        ControllerState s;
        s.phase = ph;
        EXPECT_THROW(control_step(s, stub(FlightCommand::MoveForward, 1.0), 0.5), StateError);
    }
}

TEST(ControlStep, NetworkOverloadMatchesPrediction) {
    const Network net = build_micronet({3, 64, 64}, 4);
    const FloorPlan p = generate_world(3, Layout::Corridor, 0);
    const Tensor frame = render(p, p.spawn);
    const Prediction pr = predict(net, frame);
    const ControlDecision a = control_step(flying(), frame, net, 0.0);
    EXPECT_EQ(a.action.command, pr.command);
}

TEST(StateMachine, TransitionTableIsTotal) {
    int defined = 0;
    for (Phase ph : kPhases)
        for (ControlEvent ev : kEvents) {
            try {
                const Phase next = transition(ph, ev);
                EXPECT_FALSE(is_terminal(ph));
                (void)next;
                ++defined;
            } catch (const StateError&) {
            }
        }
    EXPECT_GT(defined, 0);
    for (ControlEvent ev : kEvents) {
        EXPECT_THROW(transition(Phase::Landed, ev), StateError);
        EXPECT_THROW(transition(Phase::Failed, ev), StateError);
    }
    EXPECT_EQ(transition(Phase::Initializing, ControlEvent::TakeOff), Phase::TakingOff);
    EXPECT_EQ(transition(Phase::TakingOff, ControlEvent::TakeOffComplete), Phase::Flying);
    EXPECT_EQ(transition(Phase::Flying, ControlEvent::Land), Phase::Landed);
    EXPECT_EQ(transition(Phase::Hovering, ControlEvent::Execute), Phase::Flying);
    EXPECT_THROW(transition(Phase::Initializing, ControlEvent::Execute), StateError);
}

TEST(Trial, ExpertPolicySucceedsEverywhere) {
    for (int i = 0; i < 28; ++i) {
        const FloorPlan p = generate_world(static_cast<std::uint64_t>(300 + i), kAllLayouts[i % 4], i % kNumThemes);
        ExpertPolicy pol(p);
        TrialConfig tc;
        tc.sensor_noise_seed = static_cast<std::uint64_t>(i);
        const TrialResult r = run_trial(p, pol, tc);
        EXPECT_EQ(r.outcome, Outcome::Success) << "world " << i;
        EXPECT_FALSE(r.collision.has_value());
        EXPECT_EQ(r.trajectory.size(), r.log.size() + 1);
    }
}

TEST(Trial, AlwaysStopAtSpawnNeverSucceeds) {
    for (Layout l : kAllLayouts) {
        const FloorPlan p = generate_world(8, l, 0);
        FunctionPolicy pol([](const Observation&) { return one_hot_prediction(FlightCommand::Stop); });
        const TrialResult r = run_trial(p, pol);
        EXPECT_NE(r.outcome, Outcome::Success);
        EXPECT_EQ(r.outcome, Outcome::WrongTarget);
        EXPECT_EQ(r.steps, 1);
    }
}

TEST(Trial, LandingFacingFakeTargetIsWrongTarget) {
    FloorPlan p = generate_world(8, Layout::Corridor, 0);
    const double h = p.spawn.heading();
    p.targets.push_back({TargetKind::FakeBox, p.spawn.x + 0.8 * std::cos(h), p.spawn.y + 0.8 * std::sin(h)});
    FunctionPolicy pol([](const Observation&) { return one_hot_prediction(FlightCommand::Stop); });
    const TrialResult r = run_trial(p, pol);
    EXPECT_EQ(r.outcome, Outcome::WrongTarget);
    ASSERT_TRUE(r.landed_at.has_value());
    EXPECT_EQ(r.landed_at->kind, TargetKind::FakeBox);
}

TEST(Trial, CollisionEndsTrialAndNeverCountsAsSuccess) {
    const FloorPlan p = generate_world(5, Layout::CornerL, 1);
    int calls = 0;
    // fly straight into the corner wall, then claim the target
    FunctionPolicy pol([&](const Observation&) {
        ++calls;
        return one_hot_prediction(calls < 200 ? FlightCommand::MoveForward : FlightCommand::Stop);
    });
    const TrialResult r = run_trial(p, pol);
    EXPECT_EQ(r.outcome, Outcome::Collision);
    ASSERT_TRUE(r.collision.has_value());
    EXPECT_LT(calls, 200);

    TrialRunner runner(p, pol, {});
    while (!runner.finished()) runner.advance();
    EXPECT_THROW(runner.advance(), StateError);
}

TEST(Trial, HoverStallAndTimeout) {
    const FloorPlan p = generate_world(2, Layout::Loop, 2);
    FunctionPolicy unsure([](const Observation&) { return one_hot_prediction(FlightCommand::MoveForward, 0.2); });
    const TrialResult stall = run_trial(p, unsure);
    EXPECT_EQ(stall.outcome, Outcome::HoverStall);
    EXPECT_EQ(stall.steps, 50);

    FunctionPolicy spinner([](const Observation&) { return one_hot_prediction(FlightCommand::SpinLeft); });
    TrialConfig tc;
    tc.max_steps = 30;
    const TrialResult t = run_trial(p, spinner, tc);
    EXPECT_EQ(t.outcome, Outcome::Timeout);
    EXPECT_EQ(t.steps, 30);
}

TEST(Trial, OverrideIsLoggedAsHuman) {
    const FloorPlan p = generate_world(2, Layout::Corridor, 2);
    FunctionPolicy unsure([](const Observation&) { return one_hot_prediction(FlightCommand::SpinLeft, 0.2); });
    TrialRunner runner(p, unsure, {});
    const auto info = runner.advance(FlightCommand::MoveForward);
    EXPECT_EQ(info.entry.source, CommandSource::Human);
    EXPECT_EQ(info.entry.action, ActionKind::Execute);
    EXPECT_NE(runner.pose(), p.spawn);
    runner.abort();
    EXPECT_EQ(runner.result().outcome, Outcome::Aborted);
}

TEST(Trial, LogIsJsonLines) {
    const FloorPlan p = generate_world(6, Layout::Corridor, 0);
    ExpertPolicy pol(p);
    const TrialResult r = run_trial(p, pol);
    std::istringstream in(trajectory_log_jsonl(r.log));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* k : {"step", "pose", "command", "confidence", "action"}) EXPECT_TRUE(j.contains(k));
        EXPECT_EQ(j["step"].get<int>(), n);
        ++n;
    }
    EXPECT_EQ(n, static_cast<int>(r.log.size()));
}

TEST(Benchmark, DefaultSuitesHaveTableTwoDenominators) {
    const auto suites = default_suites();
    ASSERT_EQ(suites.size(), 5u);
    const int expected[] = {10, 10, 10, 10, 5};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(suites[i].trials, expected[i]);
}

TEST(Benchmark, OraclePolicyScoresFullMarks) {
    const auto report =
        run_benchmark(default_suites(), [](const FloorPlan& p) { return std::make_unique<ExpertPolicy>(p); });
    ASSERT_EQ(report.suites.size(), 5u);
    for (const auto& s : report.suites) {
        EXPECT_EQ(s.successes, s.spec.trials) << s.spec.name;
        EXPECT_EQ(static_cast<int>(s.outcomes.size()), s.spec.trials);
    }
    EXPECT_NE(report.format_table().find("45/45"), std::string::npos);
}

TEST(Benchmark, RepeatableAndIndependentOfWorkerCount) {
    const Network net = build_micronet({3, 64, 64}, 8);
    std::vector<SuiteSpec> suites = {{"a", Layout::Corridor, 0, 2, 11}, {"b", Layout::CornerT, 3, 2, 12}};
    BenchmarkConfig one, two;
    one.trial.max_steps = 40;
    two.trial.max_steps = 40;
    two.workers = 2;
    const auto r1 = run_benchmark(suites, net, one), r2 = run_benchmark(suites, net, one), r3 = run_benchmark(suites, net, two);
    for (std::size_t s = 0; s < suites.size(); ++s) {
        EXPECT_EQ(r1.suites[s].outcomes, r2.suites[s].outcomes);
        EXPECT_EQ(r1.suites[s].steps, r2.suites[s].steps);
        EXPECT_EQ(r1.suites[s].outcomes, r3.suites[s].outcomes);
        EXPECT_EQ(r1.suites[s].steps, r3.suites[s].steps);
    }
    EXPECT_EQ(r1.format_table(), r3.format_table());
    EXPECT_THROW(run_benchmark({}, net, one), DomainError);
}

TEST(Benchmark, SuiteFileParsing) {
    const SuiteFile f = parse_suite_json(
        R"({"threshold":0.6,"max_steps":300,"suites":[{"name":"x","layout":"loop","theme":5,"trials":3,"seed":9}]})");
    ASSERT_EQ(f.suites.size(), 1u);
    EXPECT_EQ(f.suites[0].layout, Layout::Loop);
    EXPECT_EQ(f.suites[0].trials, 3);
    EXPECT_DOUBLE_EQ(f.trial.threshold, 0.6);
    EXPECT_EQ(f.trial.max_steps, 300);
    EXPECT_THROW(parse_suite_json("{"), FormatError);
    EXPECT_THROW(parse_suite_json(R"({"suites":[]})"), FormatError);
    EXPECT_THROW(parse_suite_json(R"({"suites":[{"name":"x","layout":"maze","theme":0,"trials":1,"seed":1}]})"),
                 FormatError);
}
