#include "pibase/broker.hpp"

namespace pibase::broker {

Message intrusion_message(const json& record) {
    if (!record.is_object()) throw ArgumentError("intrusion record is not an object");
    const auto url = record.find("imageUrl");
    const auto ts = record.find("timestamp");
    if (url == record.end() || !url->is_string()) throw ArgumentError("intrusion record lacks imageUrl");
    if (ts == record.end() || !ts->is_string()) throw ArgumentError("intrusion record lacks timestamp");
    const auto when = parse_iso(ts->get<std::string>());
    Message m;
    m.notification = Notification{
        "Intrusion Detected", "Detected intrusion on " + format_date(when) + " at " + format_time(when) + " GMT"};
    m.data["imageUrl"] = url->get<std::string>();
    return m;
}

void check_client_path(const std::vector<std::string>& segments) {
    if (!segments.empty() && segments.front() == kAccountsRoot) {
        throw ForbiddenError("the accounts subtree is not accessible");
    }
}

json client_view(const Database& db, std::string_view path) {
    const auto segments = split_path(path);
    check_client_path(segments);
    auto value = db.get(path);
    if (segments.empty() && value.is_object()) value.erase(std::string(kAccountsRoot));
    return value;
}

Broker::Broker(BrokerConfig config)
    : config_(std::move(config)),
      db_(config_.data_dir.empty() ? std::filesystem::path{} : config_.data_dir / "db", config_.clock),
      storage_(config_.data_dir.empty() ? std::filesystem::path{} : config_.data_dir / "storage"),
      auth_(db_, config_.auth, config_.clock) {
    if (config_.install_intrusion_rule) {
        db_.install_trigger(kIntrusionPattern, [this](const WriteEvent& ev) {
            topics_.publish(kIntrusionTopic, intrusion_message(ev.value));
        });
    }
}

}  // namespace pibase::broker
