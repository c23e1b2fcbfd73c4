#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

Metrics compute_metrics(const std::vector<TrialOutcome>& outcomes) {
    Metrics m;
    for (const auto& t : outcomes) {
        if (t.face_present && t.detected) {
            ++m.tp;
            if (t.recognized_as == t.identity) ++m.recognized;
        } else if (t.face_present) {
            ++m.fn;
        } else if (t.detected) {
            ++m.fp;
        } else {
            ++m.tn;
        }
    }
    const auto ratio = [](std::size_t num, std::size_t den, bool& degenerate) {
        degenerate = den == 0;
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(m.tp, m.tp + m.fp, m.precision_degenerate);
    m.recall = ratio(m.tp, m.tp + m.fn, m.recall_degenerate);
    return m;
}

json trial_to_json(const TrialOutcome& t) {
    return {{"trial", t.trial_id},
            {"face_present", t.face_present},
            {"identity", t.identity},
            {"detected", t.detected},
            {"recognized_as", t.recognized_as}};
}

TrialOutcome trial_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("trial outcome must be a JSON object");
    TrialOutcome t;
    const auto flag = [&](const char* key) {
        const auto it = j.find(key);
        if (it == j.end() || !it->is_boolean()) throw FormatError(std::string("missing boolean \"") + key + "\"");
        return it->get<bool>();
    };
    const auto text = [&](const char* key) -> std::string {
        const auto it = j.find(key);
        if (it == j.end() || it->is_null()) return {};
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number_integer()) return std::to_string(it->get<long long>());
        throw FormatError(std::string("\"") + key + "\" must be a string");
    };
    t.trial_id = text("trial");
    t.face_present = flag("face_present");
    t.detected = flag("detected");
    t.identity = text("identity");
    t.recognized_as = text("recognized_as");
    if (t.recognized_as == "UNKNOWN") t.recognized_as.clear();
    if (t.identity == "UNKNOWN") t.identity.clear();
    return t;
}

}  // namespace pibase::pipeline
