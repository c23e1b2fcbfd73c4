#include <functional>
#include <fstream>
#include <string>

#include <unistd.h>

#include "pibase/broker.hpp"
#include "pibase/log.hpp"

namespace pibase::broker {

namespace {

// Nulls inside objects mean "absent"; empty objects vanish.
json prune(const json& v) {
    if (!v.is_object()) return v;
    json out = json::object();
    for (const auto& [k, child] : v.items()) {
        split_path(k);
        if (k.empty() || k.find('/') != std::string::npos) throw ArgumentError("invalid key \"" + k + "\"");
        auto p = prune(child);
        if (!p.is_null()) out[k] = std::move(p);
    }
    return out.empty() ? json(nullptr) : out;
}

}  // namespace

Database::Database(std::filesystem::path dir, WallClock clock)
    : dir_(std::move(dir)), clock_(clock), keys_(clock) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    const auto snapshot = dir_ / "db.json";
    const auto log_path = dir_ / "db.log";
    if (std::filesystem::exists(snapshot)) {
        std::ifstream in(snapshot);
        root_ = json::parse(in);
        if (!root_.is_object()) throw FormatError("database snapshot is not an object");
    }
    std::size_t replayed = 0;
    if (std::filesystem::exists(log_path)) {
        std::ifstream in(log_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json entry;
            try {
                entry = json::parse(line);
            } catch (const json::parse_error&) {
                // A torn final line from a crash mid-append.
                log().warn("db: ignoring unreadable log line {}", replayed + 1);
                continue;
            }
            apply(split_path(entry.at("p").get<std::string>()), entry.at("v"));
            ++replayed;
        }
    }
    // pushes after a restart must still sort after the stored ones
    std::function<void(const json&)> observe = [&](const json& node) {
        if (!node.is_object()) return;
        for (const auto& [k, v] : node.items()) {
            keys_.observe(k);
            observe(v);
        }
    };
    observe(root_);

    const auto text = root_.dump();
    write_file_atomic(snapshot.string(), to_bytes(text));
    log_ = std::fopen(log_path.c_str(), "w");
    if (!log_) throw Error("cannot open database log " + log_path.string());
    if (replayed > 0) log().info("db: compacted {} log entries", replayed);
}

Database::~Database() {
    if (log_) std::fclose(log_);
}

void Database::apply(const std::vector<std::string>& segments, const json& value) {
    const json pruned = prune(value);
    if (segments.empty()) {
        root_ = pruned.is_null() ? json::object() : pruned;
        return;
    }
    if (pruned.is_null()) {
        // Remove the leaf, then any parents left empty.
        std::vector<json*> chain{&root_};
        for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
            auto& node = *chain.back();
            if (!node.is_object() || !node.contains(segments[i])) return;
            chain.push_back(&node[segments[i]]);
        }
        if (!chain.back()->is_object()) return;
        chain.back()->erase(segments.back());
        for (std::size_t i = chain.size() - 1; i > 0; --i) {
            if (chain[i]->is_object() && chain[i]->empty()) chain[i - 1]->erase(segments[i - 1]);
        }
        return;
    }
    json* node = &root_;
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        auto& child = (*node)[segments[i]];
        if (!child.is_object()) child = json::object();
        node = &child;
    }
    (*node)[segments.back()] = pruned;
}

void Database::log_write(const std::vector<std::string>& segments, const json& value) {
    if (!log_) return;
    const auto line = json{{"p", join_path(segments)}, {"v", value}}.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0) {
        throw Error("database log write failed");
    }
    ::fsync(fileno(log_));
}

WriteResult Database::commit(std::vector<std::string> segments, const json& value, bool push) {
    std::lock_guard commit_lock(commit_mu_);
    // Keys are drawn under the commit lock so key order is commit order.
    std::optional<std::string> push_id;
    if (push) {
        push_id = keys_.next();
        segments.push_back(*push_id);
    }
    if (segments.empty()) throw ArgumentError("cannot write the database root");
    prune(value);  // validate keys before logging anything
    log_write(segments, value);
    {
        std::unique_lock tree_lock(tree_mu_);
        apply(segments, value);
    }
    ++commits_;
    WriteEvent event{join_path(segments), {}, value, clock_()};
    for (const auto& [pattern, action] : triggers_) {
        auto params = pattern.match(segments);
        if (!params) continue;
        event.params = std::move(*params);
        ++trigger_firings_;
        try {
            action(event);
        } catch (const std::exception& e) {
            ++trigger_failures_;
            log().error("trigger {} on {} failed: {}", pattern.text(), event.path, e.what());
        }
    }
    return {event.path, std::move(push_id), event.committed_at};
}

WriteResult Database::set(std::string_view path, const json& value) {
    return commit(split_path(path), value, false);
}

WriteResult Database::push(std::string_view path, const json& value) {
    if (value.is_null()) throw ArgumentError("cannot push a null value");
    return commit(split_path(path), value, true);
}

json Database::get(std::string_view path) const {
    const auto segments = split_path(path);
    std::shared_lock lock(tree_mu_);
    const json* node = &root_;
    for (const auto& s : segments) {
        if (!node->is_object()) return nullptr;
        const auto it = node->find(s);
        if (it == node->end()) return nullptr;
        node = &*it;
    }
    return *node;
}

std::vector<QueryRow> Database::query(std::string_view path, std::string_view order_by,
                                      const std::optional<std::string>& start,
                                      const std::optional<std::string>& end) const {
    const json node = get(path);
    std::vector<std::pair<std::string, QueryRow>> rows;
    if (!node.is_object()) return {};
    for (const auto& [key, value] : node.items()) {
        if (!value.is_object()) continue;
        const auto it = value.find(std::string(order_by));
        if (it == value.end() || !it->is_string()) continue;
        const auto& field = it->get_ref<const std::string&>();
        if (start && field < *start) continue;
        if (end && field > *end) continue;
        rows.push_back({field, {key, value}});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second.key < b.second.key;
    });
    std::vector<QueryRow> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
}

void Database::install_trigger(std::string_view pattern, TriggerAction action) {
    std::lock_guard lock(commit_mu_);
    triggers_.emplace_back(PathPattern(pattern), std::move(action));
}

}  // namespace pibase::broker
