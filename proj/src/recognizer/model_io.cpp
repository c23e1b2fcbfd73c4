#include <fstream>
#include <sstream>

#include "pibase/recognizer.hpp"

namespace pibase::recognizer {

using nlohmann::json;

json model_to_json(const RecognizerModel& model) {
    json labels = json::object();
    for (const auto& [id, name] : model.labels()) labels[std::to_string(id)] = name;
    json entries = json::array();
    for (const auto& e : model.entries()) entries.push_back({{"label", e.label}, {"hist", e.hist}});
    return {{"grid", {model.grid().x, model.grid().y}},
            {"face_size", {model.face_size().w, model.face_size().h}},
            {"labels", labels},
            {"entries", entries}};
}

namespace {

std::pair<int, int> int_pair(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number_integer() ||
        !j[key][1].is_number_integer()) {
        throw FormatError(std::string("model: \"") + key + "\" must be a pair of integers");
    }
    return {j[key][0].get<int>(), j[key][1].get<int>()};
}

}  // namespace

RecognizerModel model_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("model: top level must be an object");
    const auto [gx, gy] = int_pair(j, "grid");
    const auto [fw, fh] = int_pair(j, "face_size");
    if (!j.contains("labels") || !j["labels"].is_object()) throw FormatError("model: labels must be an object");
    std::map<int, std::string> labels;
    for (const auto& [key, value] : j["labels"].items()) {
        std::size_t used = 0;
        int id = 0;
        try {
            id = std::stoi(key, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != key.size() || id < 0) throw FormatError("model: label id \"" + key + "\" is not an integer");
        if (!value.is_string()) throw FormatError("model: label names must be strings");
        labels.emplace(id, value.get<std::string>());
    }
    if (!j.contains("entries") || !j["entries"].is_array()) throw FormatError("model: entries must be an array");
    std::vector<ModelEntry> entries;
    for (const auto& e : j["entries"]) {
        if (!e.is_object() || !e.contains("label") || !e["label"].is_number_integer() || !e.contains("hist") ||
            !e["hist"].is_array()) {
            throw FormatError("model: entries need an integer label and a hist array");
        }
        ModelEntry entry{e["label"].get<int>(), {}};
        entry.hist.reserve(e["hist"].size());
        for (const auto& v : e["hist"]) {
            if (!v.is_number()) throw FormatError("model: histogram values must be numbers");
            entry.hist.push_back(v.get<double>());
        }
        entries.push_back(std::move(entry));
    }
    return {GridSize{gx, gy}, FaceSize{fw, fh}, std::move(labels), std::move(entries)};
}

std::string save_model(const RecognizerModel& model) { return model_to_json(model).dump(); }

RecognizerModel load_model(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("model: invalid JSON: ") + e.what());
    }
    return model_from_json(j);
}

RecognizerModel read_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open model file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_model(buf.str());
}

void write_model_file(const std::string& path, const RecognizerModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write model file " + path);
    out << save_model(model) << '\n';
}

}  // namespace pibase::recognizer
