#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pibase/codec.hpp"
#include "pibase/errors.hpp"
#include "pibase/timeutil.hpp"

namespace pibase::broker {

using nlohmann::json;

// ---------------------------------------------------------------- paths

/// Splits "/a/b/c" into segments. Empty segments from doubled or trailing
/// slashes are dropped; a segment containing . # $ [ ] or a control
/// character throws ArgumentError. "/" yields no segments.
std::vector<std::string> split_path(std::string_view path);
std::string join_path(const std::vector<std::string>& segments);

// ------------------------------------------------------------- push keys

/// 20-character keys: 8 chars of millisecond time then 12 random chars, in
/// an alphabet whose ASCII order matches digit order. Keys made within the
/// same millisecond increment the random tail, so a single generator emits
/// strictly increasing keys.
class PushKeyGenerator {
public:
    explicit PushKeyGenerator(WallClock clock = system_now, std::uint64_t seed = std::random_device{}());
    std::string next();
    /// Later keys sort after `key` if it is a push key from the past. Lets a
    /// reopened database keep ordering against keys made before the restart.
    void observe(std::string_view key);

    static constexpr std::string_view kAlphabet =
        "-0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ_abcdefghijklmnopqrstuvwxyz";

private:
    WallClock clock_;
    std::mt19937_64 rng_;
    std::mutex mu_;
    long long last_ms_ = -1;
    std::array<int, 12> tail_{};
};

/// Millisecond timestamp encoded in a push key's first 8 characters.
long long push_key_millis(std::string_view key);

// -------------------------------------------------------------- triggers

struct WriteEvent {
    std::string path;  // normalised, leading "/"
    std::map<std::string, std::string> params;  // wildcard captures
    json value;        // value written (null for deletes)
    TimePoint committed_at;
};

/// Path pattern such as "/Users/{pushId}"; matches whole paths only.
class PathPattern {
public:
    explicit PathPattern(std::string_view pattern);
    [[nodiscard]] std::optional<std::map<std::string, std::string>> match(
        const std::vector<std::string>& segments) const;
    [[nodiscard]] const std::string& text() const { return text_; }

private:
    std::string text_;
    std::vector<std::string> segments_;  // "{name}" marks a wildcard
};

using TriggerAction = std::function<void(const WriteEvent&)>;

// -------------------------------------------------------------- database

struct WriteResult {
    std::string path;
    std::optional<std::string> push_id;
    TimePoint committed_at;
};

struct QueryRow {
    std::string key;
    json value;
};

/// JSON tree with a single committer. Writes are appended to the log and
/// applied before any trigger runs; triggers run in commit order on the
/// writing thread with the commit lock still held, so a trigger's side
/// effects can never overtake the record they describe.
class Database {
public:
    /// In-memory when `dir` is empty. Otherwise loads dir/db.json, replays
    /// dir/db.log, and compacts both into a fresh snapshot.
    explicit Database(std::filesystem::path dir = {}, WallClock clock = system_now);
    ~Database();
    Database(const Database&) = delete;
    Database& operator=(const Database&) = delete;

    /// Null removes the node. The root itself cannot be written.
    WriteResult set(std::string_view path, const json& value);
    WriteResult push(std::string_view path, const json& value);

    /// Null when missing.
    [[nodiscard]] json get(std::string_view path) const;

    /// Children of `path` whose string field `order_by` lies in
    /// [start, end] (either bound optional), ascending by field then key.
    /// Children without the field, or with a non-string field, are skipped.
    [[nodiscard]] std::vector<QueryRow> query(std::string_view path, std::string_view order_by,
                                              const std::optional<std::string>& start,
                                              const std::optional<std::string>& end) const;

    /// Actions for matching writes fire after commit, in installation order.
    void install_trigger(std::string_view pattern, TriggerAction action);

    [[nodiscard]] std::uint64_t commit_count() const { return commits_.load(); }
    [[nodiscard]] std::uint64_t trigger_failures() const { return trigger_failures_.load(); }
    [[nodiscard]] std::uint64_t trigger_firings() const { return trigger_firings_.load(); }

private:
    WriteResult commit(std::vector<std::string> segments, const json& value, bool push);
    void apply(const std::vector<std::string>& segments, const json& value);
    void log_write(const std::vector<std::string>& segments, const json& value);

    std::filesystem::path dir_;
    WallClock clock_;
    PushKeyGenerator keys_;
    json root_ = json::object();
    mutable std::shared_mutex tree_mu_;
    std::mutex commit_mu_;
    std::FILE* log_ = nullptr;
    std::vector<std::pair<PathPattern, TriggerAction>> triggers_;
    std::atomic<std::uint64_t> commits_{0};
    std::atomic<std::uint64_t> trigger_failures_{0};
    std::atomic<std::uint64_t> trigger_firings_{0};
};

// ---------------------------------------------------------------- topics

inline constexpr std::size_t kMaxPayloadBytes = 4000;
inline constexpr std::size_t kSubscriberBuffer = 1024;

struct Notification {
    std::string title;
    std::string body;
    friend bool operator==(const Notification&, const Notification&) = default;
};

struct Message {
    std::optional<Notification> notification;
    std::map<std::string, std::string> data;
    friend bool operator==(const Message&, const Message&) = default;
};

/// Keys a data map may not use.
bool is_reserved_key(std::string_view key);

/// {"notification":{"title","body"},"data":{...}}; absent parts omitted.
json message_to_json(const Message& m);
/// Throws ArgumentError on shape errors and ReservedKeyError on reserved
/// data keys.
Message message_from_json(const json& j);
/// Compact serialisation; this is the form the payload limit applies to.
std::string wire_form(const Message& m);
/// Throws ArgumentError for an empty message, ReservedKeyError, or
/// PayloadTooLarge when the wire form exceeds kMaxPayloadBytes.
void validate_message(const Message& m);

struct Delivery {
    std::uint64_t seq = 0;  // per-topic publish sequence, from 1
    std::string topic;
    Message message;
};

class Subscription {
public:
    /// Waits up to `timeout`; nullopt on timeout or once closed and drained.
    std::optional<Delivery> next(std::chrono::milliseconds timeout);
    void close();
    [[nodiscard]] bool closed() const;
    [[nodiscard]] std::uint64_t dropped() const;
    [[nodiscard]] const std::string& topic() const { return topic_; }

private:
    friend class TopicHub;
    explicit Subscription(std::string topic) : topic_(std::move(topic)) {}
    void offer(const Delivery& d);

    std::string topic_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Delivery> queue_;
    bool closed_ = false;
    std::uint64_t dropped_ = 0;
};

/// Live fan-out: subscribers only receive messages published after they
/// joined. Each subscriber buffers up to kSubscriberBuffer messages and
/// drops the oldest beyond that.
class TopicHub {
public:
    /// Validates, then delivers to every open subscriber of `topic`.
    /// Returns the number of subscribers reached.
    std::size_t publish(std::string_view topic, const Message& message);
    std::shared_ptr<Subscription> subscribe(std::string_view topic);
    /// Closes every subscription (server shutdown).
    void close_all();

    [[nodiscard]] std::uint64_t published(std::string_view topic) const;
    [[nodiscard]] std::size_t subscriber_count(std::string_view topic) const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::weak_ptr<Subscription>>, std::less<>> subs_;
    std::map<std::string, std::uint64_t, std::less<>> seq_;
};

/// Topic names: 1-128 chars of [A-Za-z0-9_.~%-].
void validate_topic(std::string_view topic);

// --------------------------------------------------------------- storage

inline constexpr std::size_t kMaxObjectBytes = 10u * 1024u * 1024u;

struct StorageObject {
    std::string folder;
    std::string name;
    std::string content_type;
    Bytes bytes;
};

std::string storage_url(std::string_view folder, std::string_view name);
/// Throws NotFoundError for anything that is not "storage://{folder}/{name}".
std::pair<std::string, std::string> parse_storage_url(std::string_view url);
/// Folder and object names: non-empty, at most 128 bytes, no "/" or "\",
/// no control characters, not "." or "..". Throws ArgumentError.
void validate_storage_name(std::string_view name, const char* what);

/// Immutable objects in named folders. Listings keep insertion order.
class Storage {
public:
    explicit Storage(std::filesystem::path dir = {});

    /// Throws ConflictError if the name exists, PayloadTooLarge above
    /// kMaxObjectBytes.
    std::string put(std::string_view folder, std::string_view name, Bytes bytes,
                    std::string_view content_type);
    [[nodiscard]] StorageObject get(std::string_view url) const;
    [[nodiscard]] StorageObject get(std::string_view folder, std::string_view name) const;
    [[nodiscard]] bool exists(std::string_view folder, std::string_view name) const;
    /// Empty for unknown folders.
    [[nodiscard]] std::vector<std::string> list(std::string_view folder) const;
    [[nodiscard]] std::size_t object_count() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::string>, std::less<>> order_;
    std::map<std::pair<std::string, std::string>, StorageObject> objects_;
};

// ------------------------------------------------------------------ auth

struct AuthConfig {
    std::chrono::seconds token_ttl = std::chrono::hours(24);
    int pbkdf2_iterations = 60000;
    std::size_t min_password = 8;
};

struct Session {
    std::string token;
    std::string uid;
    TimePoint expires_at;
};

/// Accounts live under /Accounts/{uid} in the database; sessions are kept
/// in memory only.
class Auth {
public:
    Auth(Database& db, AuthConfig config = {}, WallClock clock = system_now);

    /// Throws ArgumentError for a malformed email or short password and
    /// ConflictError when the email (case-insensitive) is taken.
    std::string register_user(std::string_view email, std::string_view password, std::string_view name);
    /// Throws AuthError, identical for unknown email and wrong password.
    Session login(std::string_view email, std::string_view password);
    /// uid of a live session; throws AuthError otherwise.
    [[nodiscard]] std::string authenticate(std::string_view token) const;
    /// Session created without a password, for in-process service clients.
    Session issue_service_token(std::string_view uid);

private:
    Database& db_;
    AuthConfig config_;
    WallClock clock_;
    std::mutex mu_;  // serialises register
    mutable std::mutex sessions_mu_;
    std::map<std::string, Session, std::less<>> sessions_;
};

bool valid_email(std::string_view email);

// ---------------------------------------------------------------- broker

inline constexpr std::string_view kIntrusionTopic = "rpi_security";
inline constexpr std::string_view kIntrusionPattern = "/Users/{pushId}";
inline constexpr std::string_view kAccountsRoot = "Accounts";

/// Throws ForbiddenError for paths under /Accounts, which clients may not
/// touch directly.
void check_client_path(const std::vector<std::string>& segments);
/// Tree as clients see it: the root without the accounts subtree.
json client_view(const Database& db, std::string_view path);

/// The intrusion notification for a record {imageUrl, timestamp}. Throws
/// ArgumentError when either field is missing or the timestamp does not
/// parse.
Message intrusion_message(const json& record);

struct BrokerConfig {
    std::filesystem::path data_dir;  // empty: memory only
    AuthConfig auth;
    WallClock clock = system_now;
    bool install_intrusion_rule = true;
};

class Broker {
public:
    explicit Broker(BrokerConfig config = {});

    Database& db() { return db_; }
    Storage& storage() { return storage_; }
    TopicHub& topics() { return topics_; }
    Auth& auth() { return auth_; }
    [[nodiscard]] const BrokerConfig& config() const { return config_; }

private:
    BrokerConfig config_;
    Database db_;
    Storage storage_;
    TopicHub topics_;
    Auth auth_;
};

}  // namespace pibase::broker
