#include <algorithm>
#include <cmath>

#include "pibase/log.hpp"
#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

namespace {

std::string object_name(const MotionEvent& e) {
    auto stamp = format_iso(e.timestamp);
    std::replace(stamp.begin(), stamp.end(), ':', '-');
    return stamp + "_" + e.source_id + ".pgm";
}

}  // namespace

json report_to_json(const EventReport& r) {
    json j{{"event", r.event},
           {"outcome", r.outcome},
           {"timestamp", format_iso(r.motion.timestamp)},
           {"source", r.motion.source_id},
           {"frames", r.frames},
           {"faces", r.faces},
           {"unknown_faces", r.unknown_faces},
           {"model_version", r.model_version}};
    if (r.partial_burst) j["partial_burst"] = true;
    if (r.confidence && std::isfinite(*r.confidence)) j["confidence"] = *r.confidence;
    if (!r.push_id.empty()) j["push_id"] = r.push_id;
    if (!r.image_url.empty()) j["image_url"] = r.image_url;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

json sync_to_json(const SyncReport& r) {
    json j{{"ok", r.ok},
           {"records", r.records},
           {"folders", r.folders},
           {"images", r.images},
           {"entries_before", r.entries_before},
           {"entries_after", r.entries_after},
           {"retrained", r.retrained},
           {"model_version", r.version}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

Pipeline::Pipeline(detector::CascadeModel cascade, recognizer::RecognizerModel model, FrameSource& camera,
                   broker::Client& client, PipelineConfig config, Timing timing)
    : cascade_(std::move(cascade)),
      camera_(camera),
      client_(client),
      config_(std::move(config)),
      timing_(std::move(timing)),
      queue_(config_.queue_path),
      model_(std::make_shared<const recognizer::RecognizerModel>(std::move(model))) {
    if (!timing_.now) timing_.now = system_now;
    if (config_.burst_count < 1) throw ArgumentError("burst count must be at least 1");
}

ModelSnapshot Pipeline::model() const {
    std::lock_guard lock(model_mu_);
    return {model_, version_};
}

std::uint64_t Pipeline::swap_model(recognizer::RecognizerModel model) {
    auto next = std::make_shared<const recognizer::RecognizerModel>(std::move(model));
    std::lock_guard lock(model_mu_);
    model_ = std::move(next);
    return ++version_;
}

std::size_t Pipeline::flush_queue() { return queue_.flush(client_, config_.intrusion_path).size(); }

EventReport Pipeline::handle_motion(const MotionEvent& event) {
    EventReport report;
    report.event = ++events_seen_;
    report.motion = event;
    const auto key = event_key(event);
    if (queue_.known(key)) {
        report.outcome = "duplicate";
        return report;
    }
    if (busy_until_ && event.timestamp < *busy_until_) {
        report.outcome = "coalesced";
        return report;
    }
    busy_until_ = event.timestamp + config_.burst_interval * (config_.burst_count - 1);
    // Older uploads go first so the retry queue keeps event order.
    if (queue_.pending() > 0) {
        try {
            queue_.flush(client_, config_.intrusion_path);
        } catch (const std::exception& e) {
            log().warn("retry flush failed: {}", e.what());
        }
    }

    const auto burst = run_burst(camera_, config_.burst_count, config_.burst_interval, timing_);
    const auto snapshot = model();
    report.model_version = snapshot.version;
    report.frames = burst.frames.size();
    report.partial_burst = burst.partial;
    if (burst.partial) log().warn("event {}: partial burst ({})", report.event, burst.failure);

    const auto decision = process_burst(burst, cascade_, *snapshot.model, config_.process);
    report.faces = decision.faces.size();
    report.unknown_faces = static_cast<std::size_t>(std::count_if(
        decision.faces.begin(), decision.faces.end(), [](const auto& f) { return !f.result.known(); }));
    if (!decision.intrusion) {
        report.outcome = "no_intrusion";
        return report;
    }
    report.confidence = decision.confidence;

    // Record time: the event time shifted by the chosen frame's offset
    // within the burst.
    const auto offset = burst.frames[decision.frame].timestamp - burst.frames.front().timestamp;
    const auto when = event.timestamp + std::chrono::duration_cast<std::chrono::milliseconds>(offset);
    json record{{"timestamp", format_iso(when)},
                {"event", key},
                {"source", event.source_id},
                {"faces", report.unknown_faces}};
    if (std::isfinite(decision.confidence)) record["confidence"] = decision.confidence;
    queue_.enqueue({key, config_.intrusion_folder, object_name(event),
                    imaging::save_pgm(burst.frames[decision.frame].image), record});
    try {
        for (const auto& d : queue_.flush(client_, config_.intrusion_path)) {
            if (d.key == key) {
                report.push_id = d.push_id;
                report.image_url = d.image_url;
            }
        }
        report.outcome = report.push_id.empty() ? "queued" : "intrusion";
    } catch (const std::exception& e) {
        report.outcome = "error";
        report.error = e.what();
    }
    return report;
}

SyncReport Pipeline::sync_enrollments(std::chrono::seconds since) {
    SyncReport report;
    const auto current = model();
    report.entries_before = current.model->entries().size();
    report.entries_after = report.entries_before;
    report.version = current.version;
    try {
        const auto now = timing_.now();
        const auto rows = client_.db_query(config_.enrollment_path, "timestamp", format_iso(now - since),
                                           format_iso(now));
        report.records = rows.size();
        for (const auto& row : rows) {
            const auto folder = row.value.value("folder", "");
            if (folder.empty()) throw FormatError("enrollment record " + row.key + " has no folder");
            if (std::find(report.folders.begin(), report.folders.end(), folder) == report.folders.end()) {
                report.folders.push_back(folder);
            }
        }
        if (report.folders.empty()) return report;

        std::vector<recognizer::LabeledFace> samples;
        const auto size = current.model->face_size();
        for (const auto& folder : report.folders) {
            const auto names = client_.storage_list(folder);
            if (names.empty()) throw NotFoundError("enrollment folder \"" + folder + "\" is missing from storage");
            for (const auto& name : names) {
                const auto bytes = client_.storage_get(broker::storage_url(folder, name));
                const auto img = imaging::load_pgm(bytes);
                samples.push_back({folder, enrollment_face(cascade_, img, config_.process, size)});
            }
        }
        report.images = samples.size();
        auto next = current.model->empty()
                        ? recognizer::train(samples, current.model->grid(), current.model->face_size())
                        : recognizer::retrain(*current.model, samples);
        report.entries_after = next.entries().size();
        report.version = swap_model(std::move(next));
        report.retrained = true;
    } catch (const std::exception& e) {
        report.ok = false;
        report.error = e.what();
        report.entries_after = report.entries_before;
        report.retrained = false;
        report.version = current.version;
    }
    return report;
}

}  // namespace pibase::pipeline
