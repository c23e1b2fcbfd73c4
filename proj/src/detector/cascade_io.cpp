#include <cmath>
#include <fstream>
#include <sstream>

#include "pibase/detector.hpp"

namespace pibase::detector {

using nlohmann::json;

namespace {

double finite_number(const json& j, const char* what) {
    if (!j.is_number()) throw FormatError(std::string("cascade: ") + what + " must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw FormatError(std::string("cascade: ") + what + " is not finite");
    return v;
}

int integer(const json& j, const char* what) {
    if (!j.is_number_integer()) throw FormatError(std::string("cascade: ") + what + " must be an integer");
    return j.get<int>();
}

const json& field(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw FormatError(std::string("cascade: missing field \"") + key + "\"");
    }
    return obj.at(key);
}

HaarFeature feature_from_json(const json& j) {
    const auto& kind = field(j, "kind");
    if (!kind.is_string()) throw FormatError("cascade: feature kind must be a string");
    const auto parsed = parse_kind(kind.get<std::string>());
    if (!parsed) throw FormatError("cascade: unknown feature kind \"" + kind.get<std::string>() + "\"");
    HaarFeature f{*parsed, {}};
    const auto& rects = field(j, "rects");
    if (!rects.is_array() || rects.empty()) throw FormatError("cascade: feature needs rects");
    for (const auto& r : rects) {
        if (!r.is_array() || r.size() != 5) throw FormatError("cascade: rect must be [x,y,w,h,weight]");
        f.rects.push_back({Rect{integer(r[0], "rect x"), integer(r[1], "rect y"),
                                integer(r[2], "rect w"), integer(r[3], "rect h")},
                           integer(r[4], "rect weight")});
    }
    return f;
}

}  // namespace

json cascade_to_json(const CascadeModel& model) {
    json stages = json::array();
    for (const auto& stage : model.stages()) {
        json weak = json::array();
        for (const auto& w : stage.weak) {
            json rects = json::array();
            for (const auto& wr : w.feature.rects) {
                rects.push_back({wr.rect.x, wr.rect.y, wr.rect.w, wr.rect.h, wr.weight});
            }
            weak.push_back({{"feature", {{"kind", kind_name(w.feature.kind)}, {"rects", rects}}},
                            {"threshold", w.threshold},
                            {"polarity", w.polarity},
                            {"alpha", w.alpha}});
        }
        stages.push_back({{"threshold", stage.threshold}, {"weak", weak}});
    }
    return {{"base_window", {model.base_window().w, model.base_window().h}},
            {"stages", stages},
            {"metadata", model.metadata()}};
}

CascadeModel cascade_from_json(const json& j) {
    const auto& base = field(j, "base_window");
    if (!base.is_array() || base.size() != 2) throw FormatError("cascade: base_window must be [w,h]");
    const WindowSize window{integer(base[0], "base width"), integer(base[1], "base height")};

    const auto& stages_json = field(j, "stages");
    if (!stages_json.is_array() || stages_json.empty()) throw FormatError("cascade: no stages");
    std::vector<CascadeStage> stages;
    for (const auto& s : stages_json) {
        CascadeStage stage;
        stage.threshold = finite_number(field(s, "threshold"), "stage threshold");
        const auto& weak = field(s, "weak");
        if (!weak.is_array() || weak.empty()) throw FormatError("cascade: stage with no weak classifiers");
        for (const auto& w : weak) {
            WeakClassifier wc;
            wc.feature = feature_from_json(field(w, "feature"));
            wc.threshold = finite_number(field(w, "threshold"), "weak threshold");
            wc.polarity = integer(field(w, "polarity"), "polarity");
            wc.alpha = finite_number(field(w, "alpha"), "alpha");
            if (wc.polarity != 1 && wc.polarity != -1) throw FormatError("cascade: polarity must be +1 or -1");
            if (wc.alpha < 0) throw FormatError("cascade: negative alpha");
            stage.weak.push_back(std::move(wc));
        }
        stages.push_back(std::move(stage));
    }
    json metadata = j.contains("metadata") ? j.at("metadata") : json::object();
    try {
        return {window, std::move(stages), std::move(metadata)};
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("cascade: ") + e.what());
    }
}

std::string save_cascade(const CascadeModel& model) { return cascade_to_json(model).dump(); }

CascadeModel load_cascade(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("cascade: invalid JSON: ") + e.what());
    }
    return cascade_from_json(j);
}

CascadeModel read_cascade_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open cascade file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_cascade(buf.str());
}

void write_cascade_file(const std::string& path, const CascadeModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write cascade file " + path);
    out << save_cascade(model) << '\n';
}

}  // namespace pibase::detector
