#include "cpnav/gateway/session.hpp"

#include <algorithm>

#include "cpnav/error.hpp"
#include "cpnav/render.hpp"

namespace cpnav::gateway {

std::string_view mode_name(SessionMode mode) noexcept {
    return mode == SessionMode::Teleop ? "teleop" : "autonomous";
}

// ------------------------------------------------------------------ base

Session::Session(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan)
    : plan_(std::move(plan)), id_(std::move(id)), world_id_(std::move(world_id)) {
    if (!plan_) throw DomainError("session needs a world");
}

Session::~Session() { shutdown(); }

void Session::start() { worker_ = std::thread([this] { run(); }); }

void Session::subscribe(std::shared_ptr<Subscriber> subscriber) {
    {
        std::lock_guard lock(subs_mu_);
        subscribers_.push_back(subscriber);
    }
    std::lock_guard lock(mu_);
    inbox_.push_back({{}, subscriber, true});
    cv_.notify_one();
}

void Session::unsubscribe(const std::shared_ptr<Subscriber>& subscriber) {
    std::lock_guard lock(subs_mu_);
    auto it = std::find(subscribers_.begin(), subscribers_.end(), subscriber);
    if (it == subscribers_.end()) return;
    departed_dropped_ += (*it)->dropped();
    subscribers_.erase(it);
}

std::size_t Session::subscriber_count() const {
    std::lock_guard lock(subs_mu_);
    return subscribers_.size();
}

void Session::deliver(std::string text, std::shared_ptr<Subscriber> from) {
    std::lock_guard lock(mu_);
    if (stop_) {
        reply(from, error_message("session " + id_ + " is shut down"));
        return;
    }
    inbox_.push_back({std::move(text), from, false});
    cv_.notify_one();
}

void Session::shutdown() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
        cv_.notify_all();
    }
    if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id()) worker_.join();
    std::lock_guard lock(subs_mu_);
    for (auto& s : subscribers_) s->request_close();
}

bool Session::closed() const {
    std::lock_guard lock(status_mu_);
    return closed_;
}

Json Session::status() const {
    Json j = {{"id", id_}, {"mode", mode_name(mode())}, {"world_id", world_id_}};
    {
        std::lock_guard lock(status_mu_);
        for (const auto& [k, v] : status_.items()) j[k] = v;
        j["closed"] = closed_;
    }
    std::lock_guard lock(subs_mu_);
    std::uint64_t dropped = departed_dropped_;
    Json subs = Json::array();
    for (const auto& s : subscribers_) {
        dropped += s->dropped();
        subs.push_back({{"queued", s->size()}, {"delivered", s->delivered()}, {"dropped", s->dropped()}});
    }
    j["subscribers"] = subs;
    j["dropped"] = dropped;
    return j;
}

void Session::broadcast(const Json& message, bool droppable) {
    const std::string text = message.dump();
    std::lock_guard lock(subs_mu_);
    for (auto& s : subscribers_) s->push(text, droppable);
}

void Session::reply(const std::weak_ptr<Subscriber>& to, const Json& message) {
    if (auto s = to.lock()) s->push(message.dump(), false);
}

void Session::close_session() {
    {
        std::lock_guard lock(status_mu_);
        closed_ = true;
    }
    std::lock_guard lock(subs_mu_);
    for (auto& s : subscribers_) s->request_close();
}

void Session::set_status(Json fields) {
    std::lock_guard lock(status_mu_);
    status_ = std::move(fields);
}

void Session::run() {
    std::unique_lock lock(mu_);
    for (;;) {
        if (stop_) return;
        if (!inbox_.empty()) {
            Item item = std::move(inbox_.front());
            inbox_.pop_front();
            lock.unlock();
            process(item);
            lock.lock();
            continue;
        }
        const auto due = closed() ? std::nullopt : next_tick();
        if (!due) {
            cv_.wait(lock);
        } else if (Clock::now() >= *due) {
            lock.unlock();
            try {
                tick();
            } catch (const std::exception& e) {
                broadcast(error_message(e.what()), false);
                close_session();
            }
            lock.lock();
        } else {
            cv_.wait_until(lock, *due);
        }
    }
}

void Session::process(const Item& item) {
    if (item.hello) {
        auto s = item.from.lock();
        if (!s) return;
        s->push(snapshot().dump(), false);
        if (closed()) s->request_close();
        return;
    }
    if (closed()) {
        reply(item.from, error_message("session " + id_ + " is closed"));
        return;
    }
    try {
        handle(parse_inbound(item.text), item.from);
    } catch (const std::exception& e) {
        reply(item.from, error_message(e.what()));
    }
}

// ------------------------------------------------------------------ teleop

TeleopSession::TeleopSession(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan,
                             ManifestWriter* writer, TeleopOptions options)
    : Session(std::move(id), std::move(world_id), std::move(plan)),
      writer_(writer),
      options_(options),
      episode_(*plan_, plan_->spawn, options_.kinematics),
      frame_(render(*plan_, plan_->spawn)) {
    if (options_.record && !writer_) throw DomainError("recording is disabled: the service has no dataset directory");
    recording_ = options_.record;
    publish_status();
    start();
}

TeleopSession::~TeleopSession() { shutdown(); }

void TeleopSession::publish_status() {
    set_status({{"step", steps_}, {"pose", pose_json(episode_.pose())}, {"ended", ended_},
                {"recording", recording_}, {"recorded", recorded_}});
}

Json TeleopSession::frame_message(std::optional<TargetSpec> reached, bool collided) {
    Json j = message("frame");
    j["session"] = id();
    j["step"] = steps_;
    j["pose"] = pose_json(episode_.pose());
    j["frame"] = frame_payload(frame_);
    j["collision"] = collided;
    j["reached"] = reached ? Json(target_kind_name(reached->kind)) : Json(nullptr);
    j["stopped"] = stopped_;
    j["ended"] = ended_;
    j["recording"] = recording_;
    if (landed_at_)
        j["landed"] = {{"target", target_kind_name(landed_at_->kind)}, {"true_target", landed_at_->is_true()}};
    return j;
}

Json TeleopSession::snapshot() {
    Json j = frame_message(std::nullopt, episode_.collision().has_value());
    j["type"] = "snapshot";
    j["mode"] = "teleop";
    j["world_id"] = world_id();
    return j;
}

void TeleopSession::handle(const Inbound& in, const std::weak_ptr<Subscriber>& from) {
    switch (in.type) {
        case InboundType::Command: command(*in.command, from); break;
        case InboundType::Reset: reset(); break;
        case InboundType::Record: {
            if (in.on && !writer_) throw StateError("recording is disabled: the service has no dataset directory");
            if (recording_ != in.on) {
                recording_ = in.on;
                record_world_.reset();  // each recording stretch is its own world id
            }
            publish_status();
            Json j = message("recording");
            j["on"] = recording_;
            broadcast(j);
            break;
        }
        default: throw StateError("teleop sessions accept command, record and reset messages");
    }
}

void TeleopSession::command(FlightCommand c, const std::weak_ptr<Subscriber>& from) {
    if (ended_) {
        reply(from, error_message("episode has ended; send reset to start again"));
        return;
    }
    if (recording_) {
        // Written before the step: a failed write leaves the episode untouched.
        if (!record_world_) {
            record_world_ = writer_->reserve_world_id();
            recorded_ = 0;
        }
        SampleRecord r;
        r.label = c;
        r.source = SampleSource::Human;
        r.world_id = *record_world_;
        r.step_index = recorded_;
        r.theme = plan_->theme;
        writer_->append({{std::move(r), frame_, false}});
        ++recorded_;
    }
    ++steps_;
    std::optional<TargetSpec> reached;
    bool collided = false;
    if (c == FlightCommand::Stop) {
        ended_ = stopped_ = true;
        landed_at_ = target_in_cone(*plan_, episode_.pose(), options_.landing_radius, options_.landing_half_angle_deg);
        record_world_.reset();
    } else {
        const StepResult r = episode_.step(c);
        collided = r.collision.has_value();
        reached = r.reached;
        if (collided) {
            ended_ = true;
            record_world_.reset();
        }
        frame_ = render(*plan_, episode_.pose());
    }
    publish_status();
    broadcast(frame_message(reached, collided));
}

void TeleopSession::reset() {
    episode_ = Episode(*plan_, plan_->spawn, options_.kinematics);
    frame_ = render(*plan_, plan_->spawn);
    steps_ = 0;
    ended_ = stopped_ = false;
    landed_at_.reset();
    record_world_.reset();
    recorded_ = 0;
    publish_status();
    Json j = frame_message(std::nullopt, false);
    j["reset"] = true;
    broadcast(j);
}

Trajectory teleop_trajectory(const FloorPlan& plan, const std::vector<FlightCommand>& commands,
                             const Kinematics& kinematics) {
    Trajectory t;
    Episode episode(plan, plan.spawn, kinematics);
    for (FlightCommand c : commands) {
        if (t.stopped || episode.terminated()) break;
        TrajectoryStep s;
        s.frame = render(plan, episode.pose());
        s.command = c;
        s.pose = episode.pose();
        t.steps.push_back(std::move(s));
        if (c == FlightCommand::Stop)
            t.stopped = true;
        else
            episode.step(c);
    }
    return t;
}

// ------------------------------------------------------------------ autonomous

AutonomousSession::AutonomousSession(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan,
                                     std::string model_id, Network network, AutonomousOptions options)
    : Session(std::move(id), std::move(world_id), std::move(plan)),
      model_id_(std::move(model_id)),
      network_(std::move(network)),
      policy_(network_),
      options_(options),
      runner_(*plan_, policy_, options_.trial) {
    if (network_.num_classes() != kNumCommands)
        throw DomainError("model has " + std::to_string(network_.num_classes()) + " classes, flying needs " +
                          std::to_string(kNumCommands));
    if (options_.step_interval.count() < 0) throw DomainError("step interval must be non-negative");
    paused_ = !options_.autostart;
    next_step_at_ = Clock::now();
    publish_status();
    start();
}

AutonomousSession::~AutonomousSession() { shutdown(); }

Json AutonomousSession::state_json() const {
    const ControllerState& s = runner_.state();
    return {{"phase", phase_name(s.phase)}, {"step_count", s.step_count}, {"hover_streak", s.hover_streak},
            {"paused", paused_}, {"finished", runner_.finished()}};
}

void AutonomousSession::publish_status() {
    Json j = {{"model_id", model_id_}, {"step", runner_.state().step_count}, {"pose", pose_json(runner_.pose())},
              {"state", state_json()}};
    if (done_) j["outcome"] = result_["outcome"];
    set_status(std::move(j));
}

Json AutonomousSession::snapshot() {
    if (done_) return result_;
    Json j = message("snapshot");
    j["session"] = id();
    j["mode"] = "autonomous";
    j["world_id"] = world_id();
    j["model_id"] = model_id_;
    j["threshold"] = options_.trial.threshold;
    j["pose"] = pose_json(runner_.pose());
    j["state"] = state_json();
    return j;
}

void AutonomousSession::handle(const Inbound& in, const std::weak_ptr<Subscriber>&) {
    switch (in.type) {
        case InboundType::Pause: paused_ = true; break;
        case InboundType::Resume:
            paused_ = false;
            next_step_at_ = Clock::now();
            break;
        case InboundType::Step: ++single_steps_; break;
        case InboundType::Override: override_ = in.command; break;
        case InboundType::Abort:
            runner_.abort();
            finish();
            return;
        default: throw StateError("autonomous sessions accept pause, resume, step, override and abort messages");
    }
    publish_status();
    Json j = message("state");
    j["state"] = state_json();
    if (override_) j["override_pending"] = command_name(*override_);
    broadcast(j, false);
}

std::optional<Session::Clock::time_point> AutonomousSession::next_tick() {
    if (done_) return std::nullopt;
    if (single_steps_ > 0) return Clock::now();
    if (paused_) return std::nullopt;
    return next_step_at_;
}

void AutonomousSession::tick() {
    if (single_steps_ > 0) --single_steps_;
    const std::optional<FlightCommand> o = std::exchange(override_, std::nullopt);
    const TrialRunner::StepInfo info = runner_.advance(o);
    next_step_at_ = Clock::now() + options_.step_interval;

    Json j = message("step");
    j["session"] = id();
    j["step"] = info.entry.step;
    j["frame"] = frame_payload(info.frame);
    j["pose"] = pose_json(info.entry.pose);
    j["prediction"] = prediction_json(info.prediction);
    j["action"] = {{"kind", action_name(info.entry.action)}, {"command", command_name(info.entry.command)}};
    j["source"] = info.entry.source == CommandSource::Human ? "human" : "controller";
    j["pose_after"] = pose_json(runner_.pose());
    j["state"] = state_json();
    broadcast(j);
    if (runner_.finished())
        finish();
    else
        publish_status();
}

void AutonomousSession::finish() {
    done_ = true;
    result_ = message("result");
    result_["session"] = id();
    result_.update(trial_result_json(runner_.result()));
    publish_status();
    broadcast(result_, false);
    close_session();
}

Json trial_result_json(const TrialResult& r) {
    Json j;
    j["outcome"] = outcome_name(r.outcome);
    j["steps"] = r.steps;
    j["collision"] = r.collision ? Json{{"step", r.collision->step_index}, {"pose", pose_json(r.collision->pose_at_impact)}}
                                 : Json(nullptr);
    j["landed_at"] = r.landed_at ? Json{{"target", target_kind_name(r.landed_at->kind)},
                                        {"true_target", r.landed_at->is_true()}}
                                 : Json(nullptr);
    j["final_pose"] = r.trajectory.empty() ? Json(nullptr) : pose_json(r.trajectory.back());
    j["log"] = trajectory_log_jsonl(r.log);
    return j;
}

}  // namespace cpnav::gateway
