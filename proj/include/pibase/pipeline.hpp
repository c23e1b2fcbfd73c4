#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pibase/client.hpp"
#include "pibase/detector.hpp"
#include "pibase/image.hpp"
#include "pibase/recognizer.hpp"
#include "pibase/timeutil.hpp"

namespace pibase::pipeline {

using imaging::GrayImage;
using imaging::Rect;
using nlohmann::json;
using Millis = std::chrono::milliseconds;

// ------------------------------------------------------------------ time

/// Wall clock plus a sleep primitive, so bursts can run against a manual
/// clock in tests.
struct Timing {
    WallClock now = system_now;
    std::function<void(Millis)> sleep;  // default: std::this_thread::sleep_for
};

/// Clock that only moves when slept on or advanced.
class ManualClock {
public:
    explicit ManualClock(TimePoint start) : now_(start) {}
    [[nodiscard]] TimePoint now() const;
    void advance(Millis d);
    /// Timing bound to this clock; the clock must outlive it.
    Timing timing();

private:
    mutable std::mutex mu_;
    TimePoint now_;
};

// ----------------------------------------------------------------- motion

struct MotionEvent {
    TimePoint timestamp;
    std::string source_id = "pir0";
};

/// One event per line: "<ISO 8601 UTC timestamp> [source_id]". Blank lines
/// and text after "#" are ignored. Throws FormatError naming the line for
/// bad timestamps and for timestamps that go backwards within a source.
std::vector<MotionEvent> parse_motion_file(std::string_view text);
std::vector<MotionEvent> read_motion_file(const std::string& path);

// ----------------------------------------------------------------- frames

/// Camera stand-in. read() returns nullopt once exhausted and throws Error
/// on a camera fault. reads() counts every call, for gating checks.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    std::optional<GrayImage> read();
    [[nodiscard]] std::size_t reads() const { return reads_; }

protected:
    virtual std::optional<GrayImage> next_frame() = 0;

private:
    std::size_t reads_ = 0;
};

/// Lexicographically ordered *.pgm files of a directory, consumed in order.
class DirectorySource : public FrameSource {
public:
    explicit DirectorySource(const std::filesystem::path& dir);
    [[nodiscard]] std::size_t remaining() const { return files_.size() - pos_; }

protected:
    std::optional<GrayImage> next_frame() override;

private:
    std::vector<std::filesystem::path> files_;
    std::size_t pos_ = 0;
};

class VectorSource : public FrameSource {
public:
    explicit VectorSource(std::vector<GrayImage> frames) : frames_(std::move(frames)) {}

protected:
    std::optional<GrayImage> next_frame() override;

private:
    std::vector<GrayImage> frames_;
    std::size_t pos_ = 0;
};

struct Frame {
    GrayImage image;
    TimePoint timestamp;
};

struct CaptureBurst {
    std::vector<Frame> frames;
    int requested = 0;
    bool partial = false;  // camera failed or ran dry before `requested`
    std::string failure;
};

/// `count` frames spaced by `interval`; no sleep before the first frame.
CaptureBurst run_burst(FrameSource& camera, int count, Millis interval, const Timing& timing = {});

// ---------------------------------------------------------------- process

struct ProcessParams {
    detector::DetectParams detect;
    double threshold = recognizer::kDefaultThreshold;
    double crop_expand = 0.10;  // box grown by this fraction of its size
    double nested_overlap = 0.8;  // see distinct_faces
};

/// Drops boxes that lie mostly (>= max_inside of their own area) inside a
/// larger box: a face part, not a second person. Order is kept.
std::vector<detector::DetectionBox> distinct_faces(std::vector<detector::DetectionBox> boxes,
                                                   double max_inside);

/// Detection box grown by `fraction` of its width/height (half per side),
/// clipped to the image.
Rect expand_box(const Rect& box, double fraction, int image_w, int image_h);

/// Frame region that recognizes a detection, resized to the model's face size.
GrayImage face_crop(const GrayImage& frame, const Rect& box, double fraction,
                    recognizer::FaceSize size);

struct FaceObservation {
    std::size_t frame = 0;
    detector::DetectionBox box;
    recognizer::RecognitionResult result;
    std::string name;  // empty when UNKNOWN
};

struct BurstDecision {
    bool intrusion = false;
    std::size_t frame = 0;  // frame holding the largest UNKNOWN face
    Rect face{};
    double confidence = 0.0;
    std::vector<FaceObservation> faces;
};

/// Face sample for (re)training: the crop of the largest detection when
/// the cascade finds one, otherwise the whole image.
GrayImage enrollment_face(const detector::CascadeModel& cascade, const GrayImage& img,
                          const ProcessParams& params, recognizer::FaceSize size);

/// An empty model recognizes nobody: every face is UNKNOWN with infinite
/// confidence.
BurstDecision process_burst(const CaptureBurst& burst, const detector::CascadeModel& cascade,
                            const recognizer::RecognizerModel& model, const ProcessParams& params);

// --------------------------------------------------------------- metrics

struct TrialOutcome {
    std::string trial_id;
    bool face_present = false;
    std::string identity;  // expected label, empty for an intruder
    bool detected = false;
    std::string recognized_as;  // empty when UNKNOWN or not detected
};

struct Metrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 1.0;
    double recall = 1.0;
    bool precision_degenerate = false;  // 0/0, reported as 1.0
    bool recall_degenerate = false;
    std::size_t recognized = 0;  // true positives whose label matched
};

/// A trial with a face counts as TP when detected, FN otherwise; a trial
/// without a face counts as FP when something was detected.
Metrics compute_metrics(const std::vector<TrialOutcome>& outcomes);
json trial_to_json(const TrialOutcome& t);
/// Throws FormatError.
TrialOutcome trial_from_json(const json& j);

// ------------------------------------------------------------ retry queue

struct PendingUpload {
    std::string key;     // idempotency key of the event
    std::string folder;  // storage folder
    std::string name;    // storage object name
    Bytes image;
    json record;  // DB record without imageUrl
};

/// Append-only JSON-lines journal of uploads not yet acknowledged by the
/// broker. Lines: {"op":"enqueue",...} and {"op":"done","key":...}.
/// Memory-only when constructed with an empty path.
class RetryQueue {
public:
    explicit RetryQueue(std::filesystem::path journal = {});

    /// Ignored when `key` is already pending or delivered.
    void enqueue(PendingUpload item);
    [[nodiscard]] std::size_t pending() const { return pending_.size(); }
    [[nodiscard]] bool delivered(const std::string& key) const { return done_.contains(key); }
    [[nodiscard]] bool known(const std::string& key) const;

    struct Delivered {
        std::string key;
        std::string push_id;
        std::string image_url;
    };
    /// Delivers in enqueue order, stopping at the first UnavailableError
    /// (which leaves that item and everything after it pending). An upload
    /// whose storage object or DB record already exists is not repeated.
    std::vector<Delivered> flush(broker::Client& client, std::string_view db_path);

private:
    void append(const json& line);

    std::filesystem::path journal_;
    std::deque<PendingUpload> pending_;
    std::set<std::string> done_;
};

// --------------------------------------------------------------- pipeline

struct PipelineConfig {
    int burst_count = 10;
    Millis burst_interval = std::chrono::seconds(2);
    ProcessParams process;
    std::filesystem::path queue_path;  // empty: memory-only retry queue
    std::string intrusion_path = "/Users";
    std::string intrusion_folder = "intrusions";
    std::string enrollment_path = "/Enrollments";
};

struct EventReport {
    std::size_t event = 0;  // 1-based position in the stream
    std::string outcome;    // intrusion | no_intrusion | queued | coalesced | duplicate | error
    MotionEvent motion;
    std::size_t frames = 0;
    bool partial_burst = false;
    std::size_t faces = 0;
    std::size_t unknown_faces = 0;
    std::optional<double> confidence;
    std::string push_id;
    std::string image_url;
    std::string error;
    std::uint64_t model_version = 0;
};

json report_to_json(const EventReport& r);

struct SyncReport {
    bool ok = true;
    std::size_t records = 0;
    std::vector<std::string> folders;
    std::size_t images = 0;
    std::size_t entries_before = 0;
    std::size_t entries_after = 0;
    bool retrained = false;
    std::uint64_t version = 0;
    std::string error;
};

json sync_to_json(const SyncReport& r);

struct ModelSnapshot {
    std::shared_ptr<const recognizer::RecognizerModel> model;
    std::uint64_t version = 0;
};

/// Idempotency key for a motion event.
std::string event_key(const MotionEvent& e);

/// The device loop. Events are handled one at a time; the frame source is
/// only read inside a burst.
class Pipeline {
public:
    Pipeline(detector::CascadeModel cascade, recognizer::RecognizerModel model, FrameSource& camera,
             broker::Client& client, PipelineConfig config = {}, Timing timing = {});

    EventReport handle_motion(const MotionEvent& event);

    /// Enrollment records with timestamps in [now - since, now] are pulled,
    /// their folders downloaded, and the model retrained and swapped in.
    /// Any failure leaves the current model untouched.
    SyncReport sync_enrollments(std::chrono::seconds since = std::chrono::hours(24));

    /// Retries queued uploads; returns how many were delivered.
    std::size_t flush_queue();

    [[nodiscard]] ModelSnapshot model() const;
    /// Atomic replacement; bumps the version.
    std::uint64_t swap_model(recognizer::RecognizerModel model);

    [[nodiscard]] const RetryQueue& queue() const { return queue_; }
    [[nodiscard]] const detector::CascadeModel& cascade() const { return cascade_; }
    [[nodiscard]] const PipelineConfig& config() const { return config_; }

private:
    detector::CascadeModel cascade_;
    FrameSource& camera_;
    broker::Client& client_;
    PipelineConfig config_;
    Timing timing_;
    RetryQueue queue_;

    mutable std::mutex model_mu_;
    std::shared_ptr<const recognizer::RecognizerModel> model_;
    std::uint64_t version_ = 1;

    std::size_t events_seen_ = 0;
    std::optional<TimePoint> busy_until_;  // end of the last burst, event time
};

}  // namespace pibase::pipeline
