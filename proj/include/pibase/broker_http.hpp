#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "pibase/broker.hpp"

namespace httplib {
class Server;
}

namespace pibase::broker {

/// HTTP front end over a Broker. Bearer-token auth on every route except
/// /auth/register and /auth/login; the subscribe stream also accepts
/// ?token= for clients that cannot set headers.
class HttpServer {
public:
    explicit HttpServer(Broker& broker);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds (port 0 picks a free one) and serves on a background thread.
    /// Returns the bound port. Throws Error when the bind fails.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Blocks until stop() is called from another thread or a signal.
    void wait();
    void stop();
    [[nodiscard]] int port() const { return port_; }

private:
    void routes();

    Broker& broker_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    int port_ = 0;
};

}  // namespace pibase::broker
