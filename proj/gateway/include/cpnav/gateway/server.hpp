#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "cpnav/gateway/service.hpp"

namespace cpnav::gateway {

struct ServerConfig {
    std::string address = "127.0.0.1";  // localhost only unless asked otherwise
    unsigned short port = 8088;         // 0 picks a free port
    int threads = 1;
    std::chrono::milliseconds drain_timeout{2000};
};

/// HTTP + WebSocket front end for a Service. REST requests map onto
/// Service::handle; an upgrade on /ws/session/{id} subscribes the socket to
/// that session. Binding happens in the constructor, so a busy port fails
/// there with IoError.
class Server {
public:
    Server(Service& service, ServerConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const noexcept { return port_; }

    void start();  // serve on background threads
    // Stops accepting, shuts the sessions down, lets WebSockets drain their
    // queues for up to drain_timeout, then stops. Idempotent.
    void stop();
    // start() and block until SIGINT/SIGTERM or stop().
    void run();

    std::size_t open_websockets() const noexcept;

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
    unsigned short port_ = 0;
};

}  // namespace cpnav::gateway
