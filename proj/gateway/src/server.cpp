#include "cpnav/gateway/server.hpp"

#include <condition_variable>
#include <csignal>
#include <mutex>
#include <optional>

#include <boost/asio.hpp>
#include <boost/beast.hpp>

#include "cpnav/error.hpp"

namespace cpnav::gateway {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {
class WsConnection;
}

struct Server::Impl {
    Impl(Service& s, ServerConfig c)
        : service(s), config(std::move(c)), ioc(std::max(1, config.threads)), acceptor(ioc) {}

    void accept();
    void stop();

    Service& service;
    ServerConfig config;
    // Declared before ioc: handlers still queued when ioc dies release
    // connections, which decrement this.
    std::atomic<std::size_t> websockets{0};
    net::io_context ioc;
    tcp::acceptor acceptor;
    std::vector<std::thread> threads;

    std::mutex live_mu;
    std::vector<std::weak_ptr<WsConnection>> live;  // for the forced close after draining

    std::mutex stop_mu;
    std::condition_variable stop_cv;
    bool started = false;
    bool stopping = false;
    bool stopped = false;
};

namespace {

std::string server_name() { return "cpnav-gateway/" + std::string(version()); }

std::string_view sv(beast::string_view s) { return {s.data(), s.size()}; }

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(beast::tcp_stream&& stream, std::shared_ptr<Session> session, Server::Impl& server)
        : ws_(std::move(stream)), session_(std::move(session)), server_(server) {
        ++server_.websockets;
    }

    ~WsConnection() {
        detach();
        --server_.websockets;
    }

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.set_option(websocket::stream_base::decorator(
            [](websocket::response_type& res) { res.set(http::field::server, server_name()); }));
        ws_.read_message_max(64 * 1024);
        ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
    }

    // Drops the TCP connection without a close handshake.
    void force_close() {
        net::post(ws_.get_executor(), [self = shared_from_this()] {
            beast::error_code ec;
            beast::get_lowest_layer(self->ws_).socket().close(ec);
        });
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        {
            std::lock_guard lock(server_.live_mu);
            std::erase_if(server_.live, [](const auto& w) { return w.expired(); });
            server_.live.push_back(weak_from_this());
        }
        sub_ = server_.service.make_subscriber();
        std::weak_ptr<WsConnection> weak = shared_from_this();
        auto exec = ws_.get_executor();
        sub_->set_notify([weak, exec] {
            net::post(exec, [weak] {
                if (auto self = weak.lock()) self->pump();
            });
        });
        session_->subscribe(sub_);
        read();
    }

    void read() { ws_.async_read(in_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            detach();
            return;
        }
        session_->deliver(beast::buffers_to_string(in_.data()), sub_);
        in_.consume(in_.size());
        read();
    }

    void pump() {
        if (writing_ || closing_ || detached_) return;
        if (auto m = sub_->pop()) {
            writing_ = true;
            out_ = std::move(*m);
            ws_.text(true);
            ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                self->writing_ = false;
                if (ec) {
                    self->detach();
                    return;
                }
                self->pump();
            });
            return;
        }
        if (sub_->close_requested()) {
            closing_ = true;
            ws_.async_close(websocket::close_code::normal,
                            [self = shared_from_this()](beast::error_code) { self->detach(); });
        }
    }

    void detach() {
        if (!sub_ || detached_) return;
        detached_ = true;
        sub_->set_notify({});
        session_->unsubscribe(sub_);
    }

    websocket::stream<beast::tcp_stream> ws_;
    std::shared_ptr<Session> session_;
    Server::Impl& server_;
    std::shared_ptr<Subscriber> sub_;
    beast::flat_buffer in_;
    std::string out_;
    bool writing_ = false;
    bool closing_ = false;
    bool detached_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

    void run() { net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read, shared_from_this())); }

private:
    void read() {
        parser_.emplace();
        parser_->body_limit(1 << 20);
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec == http::error::end_of_stream) return close();
        if (ec) return;
        http::request<http::string_body> req = parser_->release();
        if (websocket::is_upgrade(req)) return upgrade(std::move(req));
        const HttpReply r = server_.service.handle(sv(req.method_string()), sv(req.target()), req.body());
        send(r, req.version(), req.keep_alive());
    }

    void upgrade(http::request<http::string_body> req) {
        constexpr std::string_view prefix = "/ws/session/";
        std::string_view target = sv(req.target());
        target = target.substr(0, target.find('?'));
        std::shared_ptr<Session> s;
        if (target.substr(0, prefix.size()) == prefix) s = server_.service.session(std::string(target.substr(prefix.size())));
        if (!s) {
            send({404, Json{{"error", "no session at " + std::string(target)}, {"status", 404}}.dump()}, req.version(), false);
            return;
        }
        stream_.expires_never();
        std::make_shared<WsConnection>(std::move(stream_), std::move(s), server_)->run(std::move(req));
    }

    void send(const HttpReply& r, unsigned version, bool keep_alive) {
        auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status), version);
        res->set(http::field::server, server_name());
        res->set(http::field::content_type, "application/json");
        res->keep_alive(keep_alive);
        res->body() = r.body;
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (!res->keep_alive()) return self->close();
            self->read();
        });
    }

    void close() {
        beast::error_code ec;
        stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    }

    beast::tcp_stream stream_;
    Server::Impl& server_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

void Server::Impl::accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (ec == net::error::operation_aborted || !acceptor.is_open()) return;
        } else {
            std::make_shared<HttpConnection>(std::move(socket), *this)->run();
        }
        accept();
    });
}

void Server::Impl::stop() {
    {
        std::lock_guard lock(stop_mu);
        if (stopping) return;
        stopping = true;
    }
    net::post(ioc, [this] {
        beast::error_code ec;
        acceptor.close(ec);
    });
    service.shutdown();
    const auto deadline = std::chrono::steady_clock::now() + config.drain_timeout;
    const auto wait_until = [this](std::chrono::steady_clock::time_point t) {
        while (websockets.load() > 0 && std::chrono::steady_clock::now() < t)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    };
    wait_until(deadline);
    if (websockets.load() > 0) {
        // Peers that never answered the close handshake.
        std::vector<std::weak_ptr<WsConnection>> remaining;
        {
            std::lock_guard lock(live_mu);
            remaining.swap(live);
        }
        for (auto& w : remaining)
            if (auto c = w.lock()) c->force_close();
        wait_until(std::chrono::steady_clock::now() + std::chrono::milliseconds(500));
    }
    ioc.stop();
    for (auto& t : threads)
        if (t.joinable()) t.join();
    std::lock_guard lock(stop_mu);
    stopped = true;
    stop_cv.notify_all();
}

Server::Server(Service& service, ServerConfig config) : impl_(std::make_unique<Impl>(service, std::move(config))) {
    beast::error_code ec;
    const auto address = net::ip::make_address(impl_->config.address, ec);
    if (ec) throw DomainError("bad listen address " + impl_->config.address + ": " + ec.message());
    const tcp::endpoint ep(address, impl_->config.port);
    auto& a = impl_->acceptor;
    const std::string where = impl_->config.address + ":" + std::to_string(impl_->config.port);
    if (a.open(ep.protocol(), ec); ec) throw IoError("cannot open socket for " + where + ": " + ec.message());
    a.set_option(net::socket_base::reuse_address(true), ec);
    if (a.bind(ep, ec); ec) throw IoError("cannot listen on " + where + ": " + ec.message());
    if (a.listen(net::socket_base::max_listen_connections, ec); ec)
        throw IoError("cannot listen on " + where + ": " + ec.message());
    port_ = a.local_endpoint().port();
}

Server::~Server() { stop(); }

void Server::start() {
    std::lock_guard lock(impl_->stop_mu);
    if (impl_->started) throw StateError("server already started");
    impl_->started = true;
    impl_->accept();
    for (int i = 0; i < std::max(1, impl_->config.threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop() {
    if (!impl_) return;
    impl_->stop();
}

void Server::run() {
    start();
    net::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
    bool signalled = false;
    signals.async_wait([this, &signalled](beast::error_code ec, int) {
        if (ec) return;
        std::lock_guard lock(impl_->stop_mu);
        signalled = true;
        impl_->stop_cv.notify_all();
    });
    {
        std::unique_lock lock(impl_->stop_mu);
        impl_->stop_cv.wait(lock, [&] { return signalled || impl_->stopping; });
    }
    stop();
    std::unique_lock lock(impl_->stop_mu);
    impl_->stop_cv.wait(lock, [&] { return impl_->stopped; });
}

std::size_t Server::open_websockets() const noexcept { return impl_->websockets.load(); }

}  // namespace cpnav::gateway
