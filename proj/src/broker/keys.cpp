#include <cctype>

#include "pibase/broker.hpp"

namespace pibase::broker {

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i <= path.size()) {
        const auto j = std::min(path.find('/', i), path.size());
        if (j > i) {
            std::string seg(path.substr(i, j - i));
            for (unsigned char c : seg) {
                if (c < 0x20 || c == 0x7f || c == '.' || c == '#' || c == '$' || c == '[' || c == ']') {
                    throw ArgumentError("invalid character in path segment \"" + seg + "\"");
                }
            }
            if (seg.size() > 768) throw ArgumentError("path segment too long");
            out.push_back(std::move(seg));
        }
        i = j + 1;
    }
    return out;
}

std::string join_path(const std::vector<std::string>& segments) {
    if (segments.empty()) return "/";
    std::string out;
    for (const auto& s : segments) out += "/" + s;
    return out;
}

PushKeyGenerator::PushKeyGenerator(WallClock clock, std::uint64_t seed)
    : clock_(std::move(clock)), rng_(seed) {}

std::string PushKeyGenerator::next() {
    std::lock_guard lock(mu_);
    long long now = std::chrono::duration_cast<std::chrono::milliseconds>(clock_().time_since_epoch()).count();
    if (now <= last_ms_) {
        // Same millisecond (or the clock stepped back): bump the tail.
        now = last_ms_;
        int i = 11;
        while (i >= 0 && tail_[i] == 63) tail_[i--] = 0;
        if (i < 0) {
            ++now;  // tail exhausted; borrow the next millisecond
        } else {
            ++tail_[i];
        }
    } else {
        std::uniform_int_distribution<int> digit(0, 63);
        for (auto& t : tail_) t = digit(rng_);
    }
    last_ms_ = now;
    std::string key(20, '-');
    long long t = now;
    for (int i = 7; i >= 0; --i) {
        key[i] = kAlphabet[static_cast<std::size_t>(t % 64)];
        t /= 64;
    }
    for (int i = 0; i < 12; ++i) key[8 + i] = kAlphabet[static_cast<std::size_t>(tail_[i])];
    return key;
}

void PushKeyGenerator::observe(std::string_view key) {
    if (key.size() != 20 || key.find_first_not_of(kAlphabet) != std::string_view::npos) return;
    const long long ms = push_key_millis(key);
    std::lock_guard lock(mu_);
    if (ms > std::chrono::duration_cast<std::chrono::milliseconds>(clock_().time_since_epoch()).count()) return;
    std::array<int, 12> tail{};
    for (int i = 0; i < 12; ++i) tail[i] = static_cast<int>(kAlphabet.find(key[8 + i]));
    if (ms > last_ms_ || (ms == last_ms_ && tail > tail_)) {
        last_ms_ = ms;
        tail_ = tail;
    }
}

long long push_key_millis(std::string_view key) {
    if (key.size() != 20) throw ArgumentError("push key must be 20 characters");
    long long t = 0;
    for (int i = 0; i < 8; ++i) {
        const auto pos = PushKeyGenerator::kAlphabet.find(key[i]);
        if (pos == std::string_view::npos) throw ArgumentError("invalid push key character");
        t = t * 64 + static_cast<long long>(pos);
    }
    return t;
}

PathPattern::PathPattern(std::string_view pattern) : text_(pattern) {
    std::size_t i = 0;
    while (i <= pattern.size()) {
        const auto j = std::min(pattern.find('/', i), pattern.size());
        if (j > i) {
            std::string seg(pattern.substr(i, j - i));
            const bool wildcard = seg.front() == '{' && seg.back() == '}';
            if (wildcard && seg.size() < 3) throw ArgumentError("empty wildcard in pattern " + text_);
            if (!wildcard) split_path(seg);  // validates characters
            segments_.push_back(std::move(seg));
        }
        i = j + 1;
    }
    if (segments_.empty()) throw ArgumentError("trigger pattern must not be the root");
}

std::optional<std::map<std::string, std::string>> PathPattern::match(
    const std::vector<std::string>& segments) const {
    if (segments.size() != segments_.size()) return std::nullopt;
    std::map<std::string, std::string> params;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& p = segments_[i];
        if (p.front() == '{' && p.back() == '}') {
            params[p.substr(1, p.size() - 2)] = segments[i];
        } else if (p != segments[i]) {
            return std::nullopt;
        }
    }
    return params;
}

}  // namespace pibase::broker
