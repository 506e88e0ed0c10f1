#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cpnav/controller.hpp"
#include "cpnav/dataset.hpp"
#include "cpnav/gateway/protocol.hpp"
#include "cpnav/gateway/subscriber.hpp"
#include "cpnav/network.hpp"
#include "cpnav/world.hpp"

namespace cpnav::gateway {

enum class SessionMode { Teleop, Autonomous };
std::string_view mode_name(SessionMode mode) noexcept;

/// One episode plus its subscribers. Every inbound message and every
/// autonomous step runs on the session's own worker thread, in arrival
/// order; transports only enqueue. Outbound traffic goes through
/// Subscriber queues, so a slow client never stalls the worker.
class Session {
public:
    Session(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan);
    virtual ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const noexcept { return id_; }
    const std::string& world_id() const noexcept { return world_id_; }
    virtual SessionMode mode() const noexcept = 0;

    // The new subscriber first receives a snapshot of the current state.
    void subscribe(std::shared_ptr<Subscriber> subscriber);
    void unsubscribe(const std::shared_ptr<Subscriber>& subscriber);
    std::size_t subscriber_count() const;

    // Queues one inbound text message; replies to errors go to `from` only.
    void deliver(std::string text, std::shared_ptr<Subscriber> from = nullptr);

    // Stops the worker and asks every subscriber to close. Idempotent.
    void shutdown();
    bool closed() const;

    // Snapshot for the REST status endpoint.
    Json status() const;

protected:
    using Clock = std::chrono::steady_clock;

    // Must be the last thing a derived constructor does.
    void start();

    void broadcast(const Json& message, bool droppable = true);
    static void reply(const std::weak_ptr<Subscriber>& to, const Json& message);
    // Marks the session finished and closes subscribers after they drain.
    void close_session();
    void set_status(Json fields);

    // Worker-thread hooks.
    virtual void handle(const Inbound& message, const std::weak_ptr<Subscriber>& from) = 0;
    virtual Json snapshot() = 0;
    // When the worker should next call tick(); nullopt = only on messages.
    virtual std::optional<Clock::time_point> next_tick() { return std::nullopt; }
    virtual void tick() {}

    std::shared_ptr<const FloorPlan> plan_;

private:
    struct Item {
        std::string text;
        std::weak_ptr<Subscriber> from;
        bool hello = false;  // internal: send a snapshot to `from`
    };

    void run();
    void process(const Item& item);

    const std::string id_;
    const std::string world_id_;

    mutable std::mutex mu_;  // inbox, stop flag
    std::condition_variable cv_;
    std::deque<Item> inbox_;
    bool stop_ = false;
    std::thread worker_;

    mutable std::mutex subs_mu_;
    std::vector<std::shared_ptr<Subscriber>> subscribers_;
    std::uint64_t departed_dropped_ = 0;  // drops of subscribers already gone

    mutable std::mutex status_mu_;
    Json status_ = Json::object();
    bool closed_ = false;
};

struct TeleopOptions {
    bool record = false;
    Kinematics kinematics;
    // Landing cone reported on Stop.
    double landing_radius = 1.5;
    double landing_half_angle_deg = 45.0;
};

/// Human piloting. Each command message applies one world-sim step; with
/// recording on, the frame the pilot saw and the command land in the
/// dataset (source=human) before the step is applied.
class TeleopSession final : public Session {
public:
    // `writer` may be null, which disables recording.
    TeleopSession(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan,
                  ManifestWriter* writer, TeleopOptions options);
    ~TeleopSession() override;

    SessionMode mode() const noexcept override { return SessionMode::Teleop; }

private:
    void handle(const Inbound& message, const std::weak_ptr<Subscriber>& from) override;
    Json snapshot() override;

    void command(FlightCommand c, const std::weak_ptr<Subscriber>& from);
    void reset();
    void publish_status();
    Json frame_message(std::optional<TargetSpec> reached, bool collided);

    ManifestWriter* writer_;
    TeleopOptions options_;
    Episode episode_;
    Tensor frame_;  // clean render at the current pose
    int steps_ = 0;
    bool ended_ = false;
    bool stopped_ = false;
    bool recording_ = false;
    std::optional<std::int64_t> record_world_;
    int recorded_ = 0;
    std::optional<TargetSpec> landed_at_;
};

/// The frames and labels a teleop session records for `commands`: one step
/// per accepted command, with the clean frame rendered before it. Commands
/// after a Stop or a collision are refused by the session and skipped here.
Trajectory teleop_trajectory(const FloorPlan& plan, const std::vector<FlightCommand>& commands,
                             const Kinematics& kinematics = {});

struct AutonomousOptions {
    TrialConfig trial;
    std::chrono::milliseconds step_interval{0};
    bool autostart = false;
};

/// Drives a TrialRunner. Starts paused unless autostart is set; accepts
/// pause, resume, step (one step while paused), override and abort. The
/// final message carries the TrialResult and closes the session.
class AutonomousSession final : public Session {
public:
    AutonomousSession(std::string id, std::string world_id, std::shared_ptr<const FloorPlan> plan,
                      std::string model_id, Network network, AutonomousOptions options);
    ~AutonomousSession() override;

    SessionMode mode() const noexcept override { return SessionMode::Autonomous; }

private:
    void handle(const Inbound& message, const std::weak_ptr<Subscriber>& from) override;
    Json snapshot() override;
    std::optional<Clock::time_point> next_tick() override;
    void tick() override;

    void finish();
    Json state_json() const;
    void publish_status();

    std::string model_id_;
    Network network_;
    NetworkPolicy policy_;
    AutonomousOptions options_;
    TrialRunner runner_;
    bool paused_ = true;
    int single_steps_ = 0;
    std::optional<FlightCommand> override_;
    Clock::time_point next_step_at_{};
    bool done_ = false;
    Json result_;
};

Json trial_result_json(const TrialResult& result);

}  // namespace cpnav::gateway
