#include <httplib.h>

#include "pibase/client.hpp"

namespace pibase::broker {

// ------------------------------------------------------------ LocalClient

LocalClient::LocalClient(Broker& broker, std::string token) : broker_(broker), token_(std::move(token)) {}

void LocalClient::enter() {
    ++calls_;
    if (!online_) throw UnavailableError("broker offline");
    (void)broker_.auth().authenticate(token_);
}

std::string LocalClient::storage_put(std::string_view folder, std::string_view name, const Bytes& bytes,
                                     std::string_view content_type) {
    enter();
    return broker_.storage().put(folder, name, bytes, content_type);
}

Bytes LocalClient::storage_get(std::string_view url) {
    enter();
    return broker_.storage().get(url).bytes;
}

std::vector<std::string> LocalClient::storage_list(std::string_view folder) {
    enter();
    validate_storage_name(folder, "folder");
    return broker_.storage().list(folder);
}

std::string LocalClient::db_push(std::string_view path, const json& value) {
    enter();
    check_client_path(split_path(path));
    return *broker_.db().push(path, value).push_id;
}

void LocalClient::db_set(std::string_view path, const json& value) {
    enter();
    check_client_path(split_path(path));
    broker_.db().set(path, value);
}

json LocalClient::db_get(std::string_view path) {
    enter();
    return client_view(broker_.db(), path);
}

std::vector<QueryRow> LocalClient::db_query(std::string_view path, std::string_view order_by,
                                            const std::optional<std::string>& start,
                                            const std::optional<std::string>& end) {
    enter();
    check_client_path(split_path(path));
    return broker_.db().query(path, order_by, start, end);
}

void LocalClient::ping() { enter(); }

// ------------------------------------------------------------- HttpClient

namespace {

std::string encode(std::string_view s) {
    static const char* kHex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 15]);
        }
    }
    return out;
}

std::string encode_path(std::string_view path) {
    std::string out;
    for (const auto& seg : split_path(path)) out += "/" + encode(seg);
    return out;
}

std::string error_text(const httplib::Result& res) {
    try {
        auto j = json::parse(res->body);
        if (j.is_object() && j.contains("error")) return j["error"].get<std::string>();
    } catch (const std::exception&) {
    }
    return "HTTP " + std::to_string(res->status);
}

// Throws the error class matching a failed exchange.
void check(const httplib::Result& res, const std::string& what) {
    if (!res) throw UnavailableError(what + ": " + httplib::to_string(res.error()));
    const int s = res->status;
    if (s >= 200 && s < 300) return;
    const auto msg = what + ": " + error_text(res);
    switch (s) {
        case 400: throw ArgumentError(msg);
        case 401: throw AuthError(msg);
        case 403: throw ForbiddenError(msg);
        case 404: throw NotFoundError(msg);
        case 409: throw ConflictError(msg);
        case 413: throw PayloadTooLarge(msg);
        default: break;
    }
    if (s >= 500) throw UnavailableError(msg);
    throw Error(msg);
}

json body_json(const httplib::Result& res) {
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("broker sent invalid JSON: ") + e.what());
    }
}

std::unique_ptr<httplib::Client> make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
    auto cli = std::make_unique<httplib::Client>(base_url);
    if (!cli->is_valid()) throw ArgumentError("invalid broker url: " + base_url);
    cli->set_url_encode(false);
    cli->set_connection_timeout(timeout);
    cli->set_read_timeout(timeout);
    cli->set_write_timeout(timeout);
    return cli;
}

}  // namespace

struct HttpClient::Impl {
    std::string base_url;
    std::string token;
    std::chrono::milliseconds timeout;
    std::unique_ptr<httplib::Client> cli;
    std::mutex mu;  // httplib::Client is not safe for concurrent requests

    httplib::Headers headers() const { return {{"Authorization", "Bearer " + token}}; }
};

HttpClient::HttpClient(std::string base_url, std::string token, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
    impl_->base_url = std::move(base_url);
    impl_->token = std::move(token);
    impl_->timeout = timeout;
    impl_->cli = make_client(impl_->base_url, timeout);
}

HttpClient::~HttpClient() = default;

std::string HttpClient::register_user(const std::string& base_url, std::string_view email,
                                      std::string_view password, std::string_view name) {
    auto cli = make_client(base_url, std::chrono::seconds(10));
    const json body{{"email", email}, {"password", password}, {"name", name}};
    auto res = cli->Post("/auth/register", body.dump(), "application/json");
    check(res, "register");
    return body_json(res).at("uid").get<std::string>();
}

std::string HttpClient::login(const std::string& base_url, std::string_view email, std::string_view password) {
    auto cli = make_client(base_url, std::chrono::seconds(10));
    const json body{{"email", email}, {"password", password}};
    auto res = cli->Post("/auth/login", body.dump(), "application/json");
    check(res, "login");
    return body_json(res).at("token").get<std::string>();
}

std::string HttpClient::storage_put(std::string_view folder, std::string_view name, const Bytes& bytes,
                                    std::string_view content_type) {
    validate_storage_name(folder, "folder");
    validate_storage_name(name, "object name");
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Post("/storage/" + encode(folder) + "/" + encode(name), impl_->headers(),
                                reinterpret_cast<const char*>(bytes.data()), bytes.size(),
                                content_type.empty() ? "application/octet-stream" : std::string(content_type));
    check(res, "storage put");
    return body_json(res).at("url").get<std::string>();
}

Bytes HttpClient::storage_get(std::string_view url) {
    const auto [folder, name] = parse_storage_url(url);
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Get("/storage/" + encode(folder) + "/" + encode(name), impl_->headers());
    check(res, "storage get");
    return Bytes(res->body.begin(), res->body.end());
}

std::vector<std::string> HttpClient::storage_list(std::string_view folder) {
    validate_storage_name(folder, "folder");
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Get("/storage/" + encode(folder), impl_->headers());
    check(res, "storage list");
    return body_json(res).at("names").get<std::vector<std::string>>();
}

std::string HttpClient::db_push(std::string_view path, const json& value) {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Post("/db" + encode_path(path), impl_->headers(), value.dump(), "application/json");
    check(res, "db push");
    return body_json(res).at("name").get<std::string>();
}

void HttpClient::db_set(std::string_view path, const json& value) {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Put("/db" + encode_path(path), impl_->headers(), value.dump(), "application/json");
    check(res, "db set");
}

json HttpClient::db_get(std::string_view path) {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Get("/db" + encode_path(path), impl_->headers());
    check(res, "db get");
    return body_json(res);
}

std::vector<QueryRow> HttpClient::db_query(std::string_view path, std::string_view order_by,
                                           const std::optional<std::string>& start,
                                           const std::optional<std::string>& end) {
    std::string target = "/db" + encode_path(path) + "?orderBy=" + encode(order_by);
    if (start) target += "&start=" + encode(*start);
    if (end) target += "&end=" + encode(*end);
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Get(target, impl_->headers());
    check(res, "db query");
    std::vector<QueryRow> rows;
    for (auto& r : body_json(res)) rows.push_back({r.at("key").get<std::string>(), r.at("value")});
    return rows;
}

void HttpClient::ping() {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Get("/db/Enrollments?orderBy=timestamp&start=~", impl_->headers());
    check(res, "ping");
}

std::size_t HttpClient::publish(std::string_view topic, const Message& message) {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->cli->Post("/topics/" + encode(topic), impl_->headers(), wire_form(message),
                                "application/json");
    check(res, "publish");
    return body_json(res).at("delivered").get<std::size_t>();
}

void HttpClient::listen(std::string_view topic, const std::function<void()>& on_ready,
                        const std::function<bool(const Delivery&)>& on_delivery) {
    // Separate connection with no read timeout beyond keepalive spacing.
    auto cli = make_client(impl_->base_url, impl_->timeout);
    cli->set_read_timeout(std::chrono::seconds(60));
    std::string buffer;
    bool ready = false;
    bool stop = false;
    const std::string name(topic);
    auto res = cli->Get(
        "/topics/" + encode(topic) + "/subscribe", impl_->headers(),
        [&](const char* data, std::size_t len) {
            buffer.append(data, len);
            std::size_t end;
            while ((end = buffer.find("\n\n")) != std::string::npos) {
                const std::string event = buffer.substr(0, end);
                buffer.erase(0, end + 2);
                if (!ready) {
                    ready = true;
                    if (on_ready) on_ready();
                }
                Delivery d;
                d.topic = name;
                std::string payload;
                std::size_t pos = 0;
                while (pos < event.size()) {
                    auto nl = event.find('\n', pos);
                    if (nl == std::string::npos) nl = event.size();
                    const auto line = event.substr(pos, nl - pos);
                    pos = nl + 1;
                    if (line.rfind("id: ", 0) == 0) d.seq = std::stoull(line.substr(4));
                    if (line.rfind("data: ", 0) == 0) payload += line.substr(6);
                }
                if (payload.empty()) continue;
                d.message = message_from_json(json::parse(payload));
                if (!on_delivery(d)) {
                    stop = true;
                    return false;
                }
            }
            return true;
        });
    if (stop) return;
    check(res, "subscribe");
}

}  // namespace pibase::broker
