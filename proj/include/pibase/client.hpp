#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pibase/broker.hpp"

namespace pibase::broker {

/// What the device and the CLI need from a broker. Every call throws
/// AuthError on a rejected token and UnavailableError when the broker
/// cannot be reached; other failures use the broker's error classes.
class Client {
public:
    virtual ~Client() = default;

    virtual std::string storage_put(std::string_view folder, std::string_view name, const Bytes& bytes,
                                    std::string_view content_type) = 0;
    virtual Bytes storage_get(std::string_view url) = 0;
    virtual std::vector<std::string> storage_list(std::string_view folder) = 0;

    virtual std::string db_push(std::string_view path, const json& value) = 0;
    virtual void db_set(std::string_view path, const json& value) = 0;
    virtual json db_get(std::string_view path) = 0;
    virtual std::vector<QueryRow> db_query(std::string_view path, std::string_view order_by,
                                           const std::optional<std::string>& start,
                                           const std::optional<std::string>& end) = 0;

    /// Cheap authenticated round trip.
    virtual void ping() = 0;
};

/// In-process client with the same auth and path rules as the HTTP API.
/// set_online(false) makes every call throw UnavailableError.
class LocalClient : public Client {
public:
    LocalClient(Broker& broker, std::string token);

    void set_online(bool online) { online_ = online; }
    [[nodiscard]] std::size_t calls() const { return calls_; }

    std::string storage_put(std::string_view folder, std::string_view name, const Bytes& bytes,
                            std::string_view content_type) override;
    Bytes storage_get(std::string_view url) override;
    std::vector<std::string> storage_list(std::string_view folder) override;
    std::string db_push(std::string_view path, const json& value) override;
    void db_set(std::string_view path, const json& value) override;
    json db_get(std::string_view path) override;
    std::vector<QueryRow> db_query(std::string_view path, std::string_view order_by,
                                   const std::optional<std::string>& start,
                                   const std::optional<std::string>& end) override;
    void ping() override;

private:
    void enter();

    Broker& broker_;
    std::string token_;
    std::atomic<bool> online_{true};
    std::atomic<std::size_t> calls_{0};
};

class HttpClient : public Client {
public:
    /// base_url like "http://127.0.0.1:8080".
    HttpClient(std::string base_url, std::string token,
               std::chrono::milliseconds timeout = std::chrono::seconds(10));
    ~HttpClient() override;

    static std::string register_user(const std::string& base_url, std::string_view email,
                                     std::string_view password, std::string_view name);
    /// Returns the bearer token.
    static std::string login(const std::string& base_url, std::string_view email, std::string_view password);

    std::string storage_put(std::string_view folder, std::string_view name, const Bytes& bytes,
                            std::string_view content_type) override;
    Bytes storage_get(std::string_view url) override;
    std::vector<std::string> storage_list(std::string_view folder) override;
    std::string db_push(std::string_view path, const json& value) override;
    void db_set(std::string_view path, const json& value) override;
    json db_get(std::string_view path) override;
    std::vector<QueryRow> db_query(std::string_view path, std::string_view order_by,
                                   const std::optional<std::string>& start,
                                   const std::optional<std::string>& end) override;
    void ping() override;

    /// Publish (service-internal route). Returns the delivery count.
    std::size_t publish(std::string_view topic, const Message& message);

    /// Streams a topic until `on_delivery` returns false or the server
    /// closes the stream. `on_ready` runs once the subscription is live.
    void listen(std::string_view topic, const std::function<void()>& on_ready,
                const std::function<bool(const Delivery&)>& on_delivery);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pibase::broker
