#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "cpnav/dataset.hpp"
#include "cpnav/gateway/registry.hpp"
#include "cpnav/gateway/session.hpp"

namespace cpnav::gateway {

std::string_view version() noexcept;

struct ServiceConfig {
    std::filesystem::path worlds_dir;
    std::filesystem::path models_dir;
    std::filesystem::path dataset_dir;  // teleop recordings; empty disables recording
    std::size_t queue_capacity = 64;    // per subscriber
    std::chrono::milliseconds step_interval{100};  // default autonomous pacing
};

struct HttpReply {
    int status = 200;
    std::string body;  // JSON
};

/// Transport-independent core: the REST routes plus the session table.
/// The WebSocket layer looks sessions up here and attaches subscribers.
class Service {
public:
    // Throws IoError when worlds_dir or models_dir is missing, and StateError
    // when another writer holds dataset_dir.
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpReply handle(std::string_view method, std::string_view target, std::string_view body);

    std::shared_ptr<Session> session(const std::string& id) const;  // null when unknown
    std::shared_ptr<Subscriber> make_subscriber() const;

    // Stops every session; later requests still answer but sessions are gone.
    void shutdown();

    const ServiceConfig& config() const noexcept { return config_; }

private:
    HttpReply create_world(const Json& body);
    HttpReply create_session(const Json& body);
    HttpReply list_worlds() const;
    HttpReply list_models() const;
    HttpReply list_sessions() const;
    HttpReply dataset_stats() const;

    ServiceConfig config_;
    WorldRegistry worlds_;
    ModelRegistry models_;
    std::unique_ptr<ManifestWriter> writer_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_session_ = 1;
};

}  // namespace cpnav::gateway
