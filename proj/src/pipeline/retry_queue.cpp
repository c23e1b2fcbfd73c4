#include <fstream>

#include "pibase/codec.hpp"
#include "pibase/log.hpp"
#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

RetryQueue::RetryQueue(std::filesystem::path journal) : journal_(std::move(journal)) {
    if (journal_.empty() || !std::filesystem::exists(journal_)) return;
    std::ifstream in(journal_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            log().warn("retry journal: skipping unreadable line {}", line_no);
            continue;
        }
        const auto op = j.value("op", "");
        const auto key = j.value("key", "");
        if (op == "enqueue" && !done_.contains(key)) {
            pending_.push_back({key, j.at("folder"), j.at("name"), base64_decode(j.at("image").get<std::string>()),
                                j.at("record")});
        } else if (op == "done") {
            done_.insert(key);
            std::erase_if(pending_, [&](const PendingUpload& p) { return p.key == key; });
        }
    }
}

bool RetryQueue::known(const std::string& key) const {
    if (done_.contains(key)) return true;
    return std::any_of(pending_.begin(), pending_.end(), [&](const PendingUpload& p) { return p.key == key; });
}

void RetryQueue::append(const json& line) {
    if (journal_.empty()) return;
    if (journal_.has_parent_path()) std::filesystem::create_directories(journal_.parent_path());
    std::ofstream out(journal_, std::ios::app);
    out << line.dump() << '\n';
    if (!out.flush()) throw Error("cannot append to retry journal " + journal_.string());
}

void RetryQueue::enqueue(PendingUpload item) {
    if (known(item.key)) return;
    append({{"op", "enqueue"},
            {"key", item.key},
            {"folder", item.folder},
            {"name", item.name},
            {"image", base64_encode(item.image)},
            {"record", item.record}});
    pending_.push_back(std::move(item));
}

std::vector<RetryQueue::Delivered> RetryQueue::flush(broker::Client& client, std::string_view db_path) {
    std::vector<Delivered> out;
    while (!pending_.empty()) {
        const auto& item = pending_.front();
        Delivered d{item.key, {}, {}};
        try {
            try {
                d.image_url = client.storage_put(item.folder, item.name, item.image, "image/x-portable-graymap");
            } catch (const ConflictError&) {
                // An earlier attempt got this far; accept only our own bytes.
                d.image_url = broker::storage_url(item.folder, item.name);
                if (client.storage_get(d.image_url) != item.image) {
                    throw StateError("storage object " + d.image_url + " holds different content");
                }
            }
            const auto existing = client.db_query(db_path, "event", item.key, item.key);
            if (!existing.empty()) {
                d.push_id = existing.front().key;
            } else {
                auto record = item.record;
                record["imageUrl"] = d.image_url;
                d.push_id = client.db_push(db_path, record);
            }
        } catch (const UnavailableError& e) {
            log().warn("broker unavailable, {} upload(s) stay queued: {}", pending_.size(), e.what());
            break;
        }
        append({{"op", "done"}, {"key", item.key}, {"push_id", d.push_id}});
        done_.insert(item.key);
        pending_.pop_front();
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace pibase::pipeline
