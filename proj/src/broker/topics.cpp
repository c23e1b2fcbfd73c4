#include <algorithm>
#include <array>
#include <cctype>

#include "pibase/broker.hpp"

namespace pibase::broker {

bool is_reserved_key(std::string_view key) {
    static constexpr std::array<std::string_view, 6> kReserved = {
        "title", "body", "from", "notification", "message_type", "collapse_key"};
    if (std::find(kReserved.begin(), kReserved.end(), key) != kReserved.end()) return true;
    return key.starts_with("google.") || key.starts_with("gcm.");
}

json message_to_json(const Message& m) {
    json j = json::object();
    if (m.notification) j["notification"] = {{"title", m.notification->title}, {"body", m.notification->body}};
    if (!m.data.empty()) j["data"] = m.data;
    return j;
}

Message message_from_json(const json& j) {
    if (!j.is_object()) throw ArgumentError("message must be a JSON object");
    Message m;
    for (const auto& [key, value] : j.items()) {
        if (key == "notification") {
            if (!value.is_object()) throw ArgumentError("notification must be an object");
            Notification n;
            for (const auto& [nk, nv] : value.items()) {
                if (!nv.is_string()) throw ArgumentError("notification." + nk + " must be a string");
                if (nk == "title") {
                    n.title = nv.get<std::string>();
                } else if (nk == "body") {
                    n.body = nv.get<std::string>();
                } else {
                    throw ArgumentError("notification accepts only title and body, got \"" + nk + "\"");
                }
            }
            m.notification = std::move(n);
        } else if (key == "data") {
            if (!value.is_object()) throw ArgumentError("data must be an object");
            for (const auto& [dk, dv] : value.items()) {
                if (is_reserved_key(dk)) throw ReservedKeyError("data key \"" + dk + "\" is reserved");
                if (!dv.is_string()) throw ArgumentError("data." + dk + " must be a string");
                m.data[dk] = dv.get<std::string>();
            }
        } else {
            throw ArgumentError("unknown message field \"" + key + "\"");
        }
    }
    return m;
}

std::string wire_form(const Message& m) { return message_to_json(m).dump(); }

void validate_message(const Message& m) {
    if (!m.notification && m.data.empty()) throw ArgumentError("message has neither notification nor data");
    for (const auto& [k, v] : m.data) {
        if (k.empty()) throw ArgumentError("empty data key");
        if (is_reserved_key(k)) throw ReservedKeyError("data key \"" + k + "\" is reserved");
    }
    const auto size = wire_form(m).size();
    if (size > kMaxPayloadBytes) {
        throw PayloadTooLarge("payload of " + std::to_string(size) + " bytes exceeds " +
                              std::to_string(kMaxPayloadBytes));
    }
}

void validate_topic(std::string_view topic) {
    if (topic.empty() || topic.size() > 128) throw ArgumentError("topic name must be 1-128 characters");
    for (unsigned char c : topic) {
        if (!(std::isalnum(c) || c == '_' || c == '-' || c == '.' || c == '~' || c == '%')) {
            throw ArgumentError("invalid character in topic name");
        }
    }
}

std::optional<Delivery> Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    auto d = std::move(queue_.front());
    queue_.pop_front();
    return d;
}

void Subscription::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::uint64_t Subscription::dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
}

void Subscription::offer(const Delivery& d) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        if (queue_.size() >= kSubscriberBuffer) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(d);
    }
    cv_.notify_one();
}

std::size_t TopicHub::publish(std::string_view topic, const Message& message) {
    validate_topic(topic);
    validate_message(message);
    // One lock across sequencing and fan-out keeps every subscriber's view
    // of a topic in publish order.
    std::lock_guard lock(mu_);
    const auto seq = ++seq_[std::string(topic)];
    const Delivery d{seq, std::string(topic), message};
    std::size_t reached = 0;
    auto it = subs_.find(topic);
    if (it == subs_.end()) return 0;
    auto& list = it->second;
    for (auto sit = list.begin(); sit != list.end();) {
        auto sub = sit->lock();
        if (!sub || sub->closed()) {
            sit = list.erase(sit);
            continue;
        }
        sub->offer(d);
        ++reached;
        ++sit;
    }
    return reached;
}

std::shared_ptr<Subscription> TopicHub::subscribe(std::string_view topic) {
    validate_topic(topic);
    std::shared_ptr<Subscription> sub(new Subscription(std::string(topic)));
    std::lock_guard lock(mu_);
    subs_[std::string(topic)].push_back(sub);
    return sub;
}

void TopicHub::close_all() {
    std::lock_guard lock(mu_);
    for (auto& [topic, list] : subs_) {
        for (auto& w : list) {
            if (auto s = w.lock()) s->close();
        }
    }
    subs_.clear();
}

std::uint64_t TopicHub::published(std::string_view topic) const {
    std::lock_guard lock(mu_);
    const auto it = seq_.find(topic);
    return it == seq_.end() ? 0 : it->second;
}

std::size_t TopicHub::subscriber_count(std::string_view topic) const {
    std::lock_guard lock(mu_);
    const auto it = subs_.find(topic);
    if (it == subs_.end()) return 0;
    std::size_t n = 0;
    for (const auto& w : it->second) {
        if (auto s = w.lock(); s && !s->closed()) ++n;
    }
    return n;
}

}  // namespace pibase::broker
