#include <fstream>

#include "pibase/broker.hpp"

namespace pibase::broker {

namespace {
constexpr std::string_view kScheme = "storage://";
}

void validate_storage_name(std::string_view name, const char* what) {
    if (name.empty() || name.size() > 128) throw ArgumentError(std::string(what) + " must be 1-128 bytes");
    if (name == "." || name == "..") throw ArgumentError(std::string(what) + " must not be . or ..");
    for (unsigned char c : name) {
        if (c < 0x20 || c == 0x7f || c == '/' || c == '\\') {
            throw ArgumentError(std::string(what) + " contains a path separator or control character");
        }
    }
}

std::string storage_url(std::string_view folder, std::string_view name) {
    return std::string(kScheme) + std::string(folder) + "/" + std::string(name);
}

std::pair<std::string, std::string> parse_storage_url(std::string_view url) {
    if (!url.starts_with(kScheme)) throw NotFoundError("not a storage url: " + std::string(url));
    const auto rest = url.substr(kScheme.size());
    const auto slash = rest.find('/');
    if (slash == std::string_view::npos) throw NotFoundError("storage url lacks an object name");
    std::string folder(rest.substr(0, slash));
    std::string name(rest.substr(slash + 1));
    try {
        validate_storage_name(folder, "folder");
        validate_storage_name(name, "object name");
    } catch (const ArgumentError& e) {
        throw NotFoundError(std::string("bad storage url: ") + e.what());
    }
    return {std::move(folder), std::move(name)};
}

Storage::Storage(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_ / "objects");
    std::ifstream index(dir_ / "index.jsonl");
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        json entry;
        try {
            entry = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // torn final line
        }
        StorageObject obj{entry.at("folder"), entry.at("name"), entry.at("content_type"), {}};
        const auto file = dir_ / "objects" / obj.folder / obj.name;
        if (!std::filesystem::exists(file)) continue;
        obj.bytes = read_file(file.string());
        order_[obj.folder].push_back(obj.name);
        auto key = std::make_pair(obj.folder, obj.name);
        objects_.emplace(std::move(key), std::move(obj));
    }
}

std::string Storage::put(std::string_view folder, std::string_view name, Bytes bytes,
                         std::string_view content_type) {
    validate_storage_name(folder, "folder");
    validate_storage_name(name, "object name");
    if (bytes.size() > kMaxObjectBytes) {
        throw PayloadTooLarge("object of " + std::to_string(bytes.size()) + " bytes exceeds the 10 MiB cap");
    }
    std::lock_guard lock(mu_);
    auto key = std::make_pair(std::string(folder), std::string(name));
    if (objects_.contains(key)) throw ConflictError("object exists: " + storage_url(folder, name));
    StorageObject obj{key.first, key.second,
                      content_type.empty() ? "application/octet-stream" : std::string(content_type),
                      std::move(bytes)};
    if (!dir_.empty()) {
        const auto folder_dir = dir_ / "objects" / obj.folder;
        std::filesystem::create_directories(folder_dir);
        write_file_atomic((folder_dir / obj.name).string(), obj.bytes);
        std::ofstream index(dir_ / "index.jsonl", std::ios::app);
        index << json{{"folder", obj.folder}, {"name", obj.name}, {"content_type", obj.content_type}}.dump()
              << '\n';
        if (!index.flush()) throw Error("storage index write failed");
    }
    order_[obj.folder].push_back(obj.name);
    objects_.emplace(std::move(key), std::move(obj));
    return storage_url(folder, name);
}

StorageObject Storage::get(std::string_view url) const {
    const auto [folder, name] = parse_storage_url(url);
    return get(folder, name);
}

StorageObject Storage::get(std::string_view folder, std::string_view name) const {
    std::lock_guard lock(mu_);
    const auto it = objects_.find({std::string(folder), std::string(name)});
    if (it == objects_.end()) throw NotFoundError("no such object: " + storage_url(folder, name));
    return it->second;
}

bool Storage::exists(std::string_view folder, std::string_view name) const {
    std::lock_guard lock(mu_);
    return objects_.contains({std::string(folder), std::string(name)});
}

std::vector<std::string> Storage::list(std::string_view folder) const {
    std::lock_guard lock(mu_);
    const auto it = order_.find(folder);
    return it == order_.end() ? std::vector<std::string>{} : it->second;
}

std::size_t Storage::object_count() const {
    std::lock_guard lock(mu_);
    return objects_.size();
}

}  // namespace pibase::broker
