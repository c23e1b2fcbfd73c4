#include <httplib.h>

#include "pibase/broker_http.hpp"
#include "pibase/log.hpp"

namespace pibase::broker {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& what) {
    reply(res, status, {{"error", what}});
}

// Runs a handler and maps library errors onto status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const AuthError& e) {
        fail(res, 401, e.what());
    } catch (const ForbiddenError& e) {
        fail(res, 403, e.what());
    } catch (const NotFoundError& e) {
        fail(res, 404, e.what());
    } catch (const ConflictError& e) {
        fail(res, 409, e.what());
    } catch (const PayloadTooLarge& e) {
        fail(res, 413, e.what());
    } catch (const ArgumentError& e) {
        fail(res, 400, e.what());
    } catch (const FormatError& e) {
        fail(res, 400, e.what());
    } catch (const json::exception& e) {
        fail(res, 400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
        log().error("http: internal error: {}", e.what());
        fail(res, 500, e.what());
    }
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ArgumentError(std::string("body is not JSON: ") + e.what());
    }
}

std::string string_field(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
        throw ArgumentError(std::string("missing string field \"") + key + "\"");
    }
    return body.at(key).get<std::string>();
}

std::string bearer(const httplib::Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (header.size() > kPrefix.size() && std::string_view(header).substr(0, kPrefix.size()) == kPrefix) {
        return header.substr(kPrefix.size());
    }
    return {};
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
}

}  // namespace

HttpServer::HttpServer(Broker& broker) : broker_(broker), server_(std::make_unique<httplib::Server>()) {
    // Each open event stream pins a worker, so keep plenty.
    server_->new_task_queue = [] { return new httplib::ThreadPool(32); };
    // idle keep-alive connections hold stop() for this long
    server_->set_keep_alive_timeout(1);
    server_->set_payload_max_length(kMaxObjectBytes + 64 * 1024);
    routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::routes() {
    auto& svr = *server_;
    auto authed = [this](const httplib::Request& req) {
        auto token = bearer(req);
        if (token.empty() && req.has_param("token")) token = req.get_param_value("token");
        if (token.empty()) throw AuthError("missing bearer token");
        return broker_.auth().authenticate(token);
    };

    svr.Post("/auth/register", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto name = body.is_object() && body.contains("name") && body["name"].is_string()
                                  ? body["name"].get<std::string>()
                                  : std::string();
            const auto uid = broker_.auth().register_user(string_field(body, "email"),
                                                          string_field(body, "password"), name);
            reply(res, 201, {{"uid", uid}});
        });
    });

    svr.Post("/auth/login", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto s = broker_.auth().login(string_field(body, "email"), string_field(body, "password"));
            reply(res, 200, {{"token", s.token}, {"uid", s.uid}, {"expires_at", format_iso(s.expires_at)}});
        });
    });

    svr.Get(R"(/db(/.*)?)", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const std::string path = req.matches[1];
            check_client_path(split_path(path));
            if (const auto order_by = param(req, "orderBy")) {
                json rows = json::array();
                for (auto& r : broker_.db().query(path, *order_by, param(req, "start"), param(req, "end"))) {
                    rows.push_back({{"key", r.key}, {"value", std::move(r.value)}});
                }
                reply(res, 200, rows);
                return;
            }
            reply(res, 200, client_view(broker_.db(), path));
        });
    });

    svr.Put(R"(/db(/.*)?)", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const std::string path = req.matches[1];
            check_client_path(split_path(path));
            const auto r = broker_.db().set(path, parse_body(req));
            reply(res, 200, {{"path", r.path}, {"committed_at", format_iso(r.committed_at)}});
        });
    });

    svr.Post(R"(/db(/.*)?)", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const std::string path = req.matches[1];
            check_client_path(split_path(path));
            const auto r = broker_.db().push(path, parse_body(req));
            reply(res, 201, {{"name", *r.push_id}, {"path", r.path}, {"committed_at", format_iso(r.committed_at)}});
        });
    });

    svr.Post(R"(/storage/([^/]+)/([^/]+))", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            auto type = req.get_header_value("Content-Type");
            const auto url = broker_.storage().put(req.matches[1].str(), req.matches[2].str(),
                                                   Bytes(req.body.begin(), req.body.end()), type);
            reply(res, 201, {{"url", url}});
        });
    });

    svr.Get(R"(/storage/([^/]+)/([^/]+))", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const auto obj = broker_.storage().get(req.matches[1].str(), req.matches[2].str());
            res.status = 200;
            res.set_content(std::string(obj.bytes.begin(), obj.bytes.end()), obj.content_type);
        });
    });

    svr.Get(R"(/storage/([^/]+)/?)", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const std::string folder = req.matches[1];
            validate_storage_name(folder, "folder");
            reply(res, 200, {{"folder", folder}, {"names", broker_.storage().list(folder)}});
        });
    });

    svr.Post(R"(/topics/([^/]+))", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            const auto message = message_from_json(parse_body(req));
            const auto n = broker_.topics().publish(req.matches[1].str(), message);
            reply(res, 200, {{"delivered", n}});
        });
    });

    svr.Get(R"(/topics/([^/]+)/subscribe)", [this, authed](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            authed(req);
            auto sub = broker_.topics().subscribe(req.matches[1].str());
            res.set_header("Cache-Control", "no-cache");
            auto greeted = std::make_shared<bool>(false);
            auto idle = std::make_shared<int>(0);
            res.set_chunked_content_provider(
                "text/event-stream",
                [this, sub, greeted, idle](std::size_t, httplib::DataSink& sink) {
                    if (!*greeted) {
                        *greeted = true;
                        const std::string hello = ": subscribed\n\n";
                        return sink.write(hello.data(), hello.size());
                    }
                    if (stopping_) {
                        sink.done();
                        return true;
                    }
                    auto d = sub->next(std::chrono::milliseconds(250));
                    if (!d) {
                        if (sub->closed()) {
                            sink.done();
                            return true;
                        }
                        // Periodic comment so dead clients are noticed.
                        if (++*idle < 40) return true;
                        *idle = 0;
                        const std::string ping = ": keepalive\n\n";
                        return sink.write(ping.data(), ping.size());
                    }
                    *idle = 0;
                    const auto event = "id: " + std::to_string(d->seq) + "\nevent: message\ndata: " +
                                       wire_form(d->message) + "\n\n";
                    return sink.write(event.data(), event.size());
                },
                [sub](bool) { sub->close(); });
        });
    });
}

int HttpServer::start(const std::string& host, int port) {
    if (thread_.joinable()) throw StateError("server already started");
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        if (port_ < 0) throw Error("cannot bind " + host);
    } else {
        if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    log().info("broker listening on {}:{}", host, port_);
    return port_;
}

void HttpServer::wait() {
    if (thread_.joinable()) thread_.join();
}

void HttpServer::stop() {
    stopping_ = true;
    broker_.topics().close_all();
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace pibase::broker
