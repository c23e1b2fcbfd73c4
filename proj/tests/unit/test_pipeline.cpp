#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <thread>

#include "helpers.hpp"
#include "pibase/pipeline.hpp"
#include "pibase/replay.hpp"

using namespace pibase;
using namespace pibase::pipeline;
using namespace std::chrono_literals;
using synth::EventKind;

namespace {

const detector::CascadeModel& cascade() {
    static const auto m = detector::read_cascade_file(PIBASE_SOURCE_DIR "/models/toy_cascade.json");
    return m;
}

const synth::ReplayFixture& replay() {
    static const auto fx = synth::make_replay({EventKind::Empty, EventKind::Known, EventKind::Stranger});
    return fx;
}

const recognizer::RecognizerModel& enrolled() {
    static const auto model = [] {
        std::vector<recognizer::LabeledFace> samples;
        for (const auto& [name, img] : replay().enrollment)
            samples.push_back({name, enrollment_face(cascade(), img, {}, {})});
        return recognizer::train(samples);
    }();
    return model;
}

recognizer::RecognizerModel empty_model() { return recognizer::RecognizerModel({8, 8}, {100, 100}, {}, {}); }

CaptureBurst burst_of(std::size_t event) {
    CaptureBurst b;
    const auto& fx = replay();
    b.requested = fx.burst_count;
    for (int i = 0; i < fx.burst_count; ++i)
        b.frames.push_back({fx.frames[event * fx.burst_count + i], fx.times[event] + std::chrono::seconds(2 * i)});
    return b;
}

class FailingSource : public FrameSource {
public:
    explicit FailingSource(int ok) : ok_(ok) {}

protected:
    std::optional<GrayImage> next_frame() override {
        if (ok_-- <= 0) throw Error("camera fault");
        return GrayImage(32, 32, 9);
    }

private:
    int ok_;
};

struct Rig {
    broker::Broker broker{config()};
    std::string token = broker.auth().issue_service_token("device").token;
    broker::LocalClient client{broker, token};
    std::shared_ptr<broker::Subscription> sub = broker.topics().subscribe(broker::kIntrusionTopic);

    static broker::BrokerConfig config() {
        broker::BrokerConfig c;
        c.auth.pbkdf2_iterations = 1000;
        return c;
    }
    std::size_t records() { return broker.db().query("/Users", "timestamp", std::nullopt, std::nullopt).size(); }
    std::size_t messages() {
        std::size_t n = 0;
        while (sub->next(50ms)) ++n;
        return n;
    }
};

PipelineConfig fast_config(int burst = 3) {
    PipelineConfig c;
    c.burst_count = burst;
    c.burst_interval = 2000ms;
    return c;
}

MotionEvent motion(std::size_t event) { return {replay().times[event], "pir0"}; }

}  // namespace

TEST_CASE("motion file parsing") {
    const auto ev = parse_motion_file(
        "# header\n2026-03-14T09:00:00Z pir0\n\n2026-03-14T09:01:00Z   # no source\n"
        "2026-03-14T08:00:00Z door\n2026-03-14T10:02:00.500+01:00 pir0\n");
    REQUIRE(ev.size() == 4);
    CHECK(ev[0].source_id == "pir0");
    CHECK(ev[1].source_id == "pir0");
    CHECK(ev[2].source_id == "door");
    CHECK(format_iso(ev[3].timestamp) == "2026-03-14T09:02:00.500Z");
    CHECK(parse_motion_file("").empty());
    bool threw = false;
    try {
        parse_motion_file("2026-03-14T09:00:00Z\nnot-a-time\n");
    } catch (const FormatError& e) {
        threw = std::string(e.what()).find("line 2") != std::string::npos;
    }
    CHECK(threw);
    CHECK_THROWS_AS(parse_motion_file("2026-03-14T09:00:00Z a\n2026-03-14T08:00:00Z a\n"), FormatError);
    CHECK_THROWS_AS(parse_motion_file("2026-03-14T09:00:00Z bad/source\n"), FormatError);
    CHECK_THROWS_AS(read_motion_file("/nonexistent/motion.txt"), Error);
    CHECK(event_key(ev[0]) == "pir0@2026-03-14T09:00:00.000Z");
}

TEST_CASE("run_burst spacing on a manual clock") {
    ManualClock clock(parse_iso("2026-03-14T09:00:00Z"));
    VectorSource cam(std::vector<GrayImage>(5, GrayImage(8, 8, 1)));
    const auto b = run_burst(cam, 4, 2000ms, clock.timing());
    REQUIRE(b.frames.size() == 4);
    CHECK_FALSE(b.partial);
    for (int i = 0; i < 4; ++i) CHECK(b.frames[i].timestamp == parse_iso("2026-03-14T09:00:00Z") + std::chrono::seconds(2 * i));
    CHECK(cam.reads() == 4);

    const auto rest = run_burst(cam, 3, 2000ms, clock.timing());
    CHECK(rest.frames.size() == 1);
    CHECK(rest.partial);
    CHECK(rest.requested == 3);
    CHECK(rest.failure == "frame source exhausted");

    FailingSource faulty(2);
    const auto f = run_burst(faulty, 5, 0ms, clock.timing());
    CHECK(f.frames.size() == 2);
    CHECK(f.partial);
    CHECK(f.failure == "camera fault");
    CHECK_THROWS_AS(run_burst(cam, 0, 0ms), ArgumentError);
    CHECK_THROWS_AS(run_burst(cam, 1, -1ms), ArgumentError);
}

TEST_CASE("directory source reads frames in name order") {
    testing::TempDir dir;
    for (int v : {3, 1, 2}) imaging::write_pgm_file(dir / ("f" + std::to_string(v) + ".pgm"), GrayImage(4, 4, static_cast<std::uint8_t>(v)));
    std::ofstream(dir / "notes.txt") << "x";
    DirectorySource src(dir.path());
    CHECK(src.remaining() == 3);
    for (int v : {1, 2, 3}) CHECK(src.read()->at(0, 0) == v);
    CHECK_FALSE(src.read());
    CHECK_THROWS_AS(DirectorySource(dir / "missing"), Error);
}

TEST_CASE("box helpers and nested faces") {
    CHECK(expand_box({10, 10, 20, 20}, 0.1, 100, 100) == imaging::Rect{9, 9, 22, 22});
    CHECK(expand_box({0, 0, 20, 20}, 0.5, 25, 25) == imaging::Rect{0, 0, 25, 25});
    std::vector<detector::DetectionBox> boxes{{{0, 0, 100, 100}, 1, 5}, {{10, 10, 30, 30}, 1, 4}, {{90, 90, 30, 30}, 1, 3}};
    const auto kept = distinct_faces(boxes, 0.8);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].rect == boxes[0].rect);
    CHECK(kept[1].rect == boxes[2].rect);
    CHECK(distinct_faces(boxes, 1.01).size() == 3);
}

TEST_CASE("process_burst: blank, known, stranger, largest unknown") {
    const auto& fx = replay();
    const auto blank = process_burst(burst_of(0), cascade(), enrolled(), {});
    CHECK_FALSE(blank.intrusion);
    CHECK(blank.faces.empty());

    const auto known = process_burst(burst_of(1), cascade(), enrolled(), {});
    CHECK_FALSE(known.intrusion);
    CHECK(known.faces.size() >= 2);
    for (const auto& f : known.faces) {
        CHECK(f.result.known());
        CHECK(std::find(fx.names.begin(), fx.names.end(), f.name) != fx.names.end());
    }

    const auto stranger = process_burst(burst_of(2), cascade(), enrolled(), {});
    CHECK(stranger.intrusion);
    CHECK(imaging::iou(stranger.face, fx.faces[2 * fx.burst_count + stranger.frame]) >= 0.5);
    CHECK(stranger.confidence > recognizer::kDefaultThreshold);

    // Two unknown faces: the larger one is reported.
    synth::Rng rng(31);
    for (int t = 0; t < 4; ++t) {
        const auto scene = synth::make_scene(320, 240, 2, 45, 110, rng);
        CaptureBurst b;
        b.frames.push_back({scene.frame, TimePoint{}});
        const auto d = process_burst(b, cascade(), empty_model(), {});
        if (!d.intrusion) continue;
        long long largest = 0;
        for (const auto& f : d.faces) {
            CHECK_FALSE(f.result.known());
            largest = std::max(largest, f.box.rect.area());
        }
        CHECK(d.face.area() == largest);
        CHECK(std::isinf(d.confidence));
    }
    // Threshold above every distance: everyone is known.
    ProcessParams lax;
    lax.threshold = 1e9;
    CHECK_FALSE(process_burst(burst_of(2), cascade(), enrolled(), lax).intrusion);
}

TEST_CASE("handle_motion: one upload per intrusion, camera gated by events") {
    Rig rig;
    const auto& fx = replay();
    VectorSource cam(fx.frames);
    ManualClock clock(fx.times[0]);
    Pipeline p(cascade(), enrolled(), cam, rig.client, fast_config(), clock.timing());
    CHECK(cam.reads() == 0);
    const auto r0 = p.handle_motion(motion(0));
    CHECK(r0.outcome == "no_intrusion");
    CHECK(cam.reads() == 3);
    const auto r1 = p.handle_motion(motion(1));
    CHECK(r1.outcome == "no_intrusion");
    CHECK(cam.reads() == 6);
    const auto r2 = p.handle_motion(motion(2));
    CHECK(r2.outcome == "intrusion");
    CHECK(cam.reads() == 9);
    CHECK(r2.event == 3);
    CHECK(r2.frames == 3);
    CHECK(r2.model_version == 1);
    REQUIRE_FALSE(r2.push_id.empty());
    CHECK(rig.records() == 1);
    CHECK(rig.broker.storage().list("intrusions").size() == 1);
    CHECK(rig.messages() == 1);

    const auto rec = rig.broker.db().get("/Users/" + r2.push_id);
    CHECK(rec["imageUrl"] == r2.image_url);
    CHECK(rec["event"] == event_key(motion(2)));
    CHECK(rec["source"] == "pir0");
    CHECK(parse_iso(rec["timestamp"].get<std::string>()) >= fx.times[2]);
    const auto stored = imaging::load_pgm(rig.client.storage_get(r2.image_url));
    CHECK(stored.width() == 320);

    // Replayed event: nothing new, camera untouched.
    CHECK(p.handle_motion(motion(2)).outcome == "duplicate");
    CHECK(cam.reads() == 9);
    CHECK(rig.records() == 1);
    CHECK(rig.messages() == 0);
    const auto j = report_to_json(r2);
    CHECK(j["outcome"] == "intrusion");
    CHECK(j["push_id"] == r2.push_id);
}

TEST_CASE("handle_motion: events inside a running burst are coalesced") {
    Rig rig;
    const auto& fx = replay();
    VectorSource cam(fx.frames);
    ManualClock clock(fx.times[0]);
    Pipeline p(cascade(), enrolled(), cam, rig.client, fast_config(), clock.timing());
    CHECK(p.handle_motion({fx.times[0], "pir0"}).outcome == "no_intrusion");
    CHECK(p.handle_motion({fx.times[0] + 3s, "pir0"}).outcome == "coalesced");
    CHECK(p.handle_motion({fx.times[0] + 3s, "door"}).outcome == "coalesced");
    CHECK(cam.reads() == 3);
    CHECK(p.handle_motion({fx.times[0] + 4s, "pir0"}).outcome == "no_intrusion");
    CHECK(cam.reads() == 6);
}

TEST_CASE("handle_motion offline: queued, then delivered once") {
    Rig rig;
    testing::TempDir dir;
    const auto& fx = replay();
    // Frames 6..8 are the stranger burst; play it twice under two events.
    std::vector<GrayImage> frames(fx.frames.begin() + 6, fx.frames.end());
    frames.insert(frames.end(), fx.frames.begin() + 6, fx.frames.end());
    VectorSource cam(frames);
    auto cfg = fast_config();
    cfg.queue_path = dir / "queue.jsonl";
    ManualClock clock(fx.times[2]);
    {
        Pipeline p(cascade(), enrolled(), cam, rig.client, cfg, clock.timing());
        rig.client.set_online(false);
        const auto r = p.handle_motion(motion(2));
        CHECK(r.outcome == "queued");
        CHECK(p.queue().pending() == 1);
        CHECK(p.flush_queue() == 0);
        CHECK(rig.records() == 0);
    }
    // A restart keeps the queued upload.
    rig.client.set_online(true);
    Pipeline p(cascade(), enrolled(), cam, rig.client, cfg, clock.timing());
    CHECK(p.queue().pending() == 1);
    CHECK(p.handle_motion(motion(2)).outcome == "duplicate");
    const auto later = p.handle_motion({fx.times[2] + 60s, "pir0"});
    CHECK(later.outcome == "intrusion");
    CHECK(p.queue().pending() == 0);
    CHECK(rig.records() == 2);
    CHECK(rig.messages() == 2);
    // Queued event went out first.
    const auto rows = rig.broker.db().query("/Users", "timestamp", std::nullopt, std::nullopt);
    CHECK(rows[0].value["event"] == event_key(motion(2)));
    CHECK(rows[0].key < rows[1].key);
    CHECK(p.flush_queue() == 0);
    CHECK(rig.records() == 2);
}

TEST_CASE("retry queue journal: order, restart, no duplicates") {
    Rig rig;
    testing::TempDir dir;
    const auto journal = dir / "q.jsonl";
    auto item = [](int i) {
        return PendingUpload{"k" + std::to_string(i), "intrusions", "n" + std::to_string(i) + ".pgm",
                             imaging::save_pgm(GrayImage(4, 4, static_cast<std::uint8_t>(i))),
                             json{{"timestamp", "2026-03-14T09:00:0" + std::to_string(i) + "Z"}, {"event", "k" + std::to_string(i)}}};
    };
    {
        RetryQueue q(journal);
        for (int i = 0; i < 3; ++i) q.enqueue(item(i));
        q.enqueue(item(1));
        CHECK(q.pending() == 3);
    }
    {
        RetryQueue q(journal);
        CHECK(q.pending() == 3);
        CHECK(q.known("k2"));
        // Simulate a crash after the first upload's storage write.
        rig.client.storage_put("intrusions", "n0.pgm", item(0).image, "image/x-portable-graymap");
        const auto d = q.flush(rig.client, "/Users");
        REQUIRE(d.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(d[i].key == "k" + std::to_string(i));
        CHECK(q.delivered("k0"));
    }
    RetryQueue q(journal);
    CHECK(q.pending() == 0);
    CHECK(q.delivered("k1"));
    q.enqueue(item(1));
    CHECK(q.pending() == 0);
    CHECK(rig.records() == 3);
    CHECK(rig.broker.storage().list("intrusions") == std::vector<std::string>{"n0.pgm", "n1.pgm", "n2.pgm"});

    // A record already in the DB is not pushed again.
    RetryQueue fresh;
    fresh.enqueue(item(2));
    const auto again = fresh.flush(rig.client, "/Users");
    REQUIRE(again.size() == 1);
    CHECK(rig.records() == 3);
    // Different bytes under the same name are refused.
    RetryQueue clash;
    auto bad = item(5);
    bad.name = "n0.pgm";
    clash.enqueue(bad);
    CHECK_THROWS_AS(clash.flush(rig.client, "/Users"), StateError);
}

TEST_CASE("sync_enrollments: nothing, growth, failure keeps the model") {
    Rig rig;
    const auto& fx = replay();
    VectorSource cam({});
    ManualClock clock(fx.times[0]);
    Pipeline p(cascade(), empty_model(), cam, rig.client, fast_config(), clock.timing());
    auto none = p.sync_enrollments();
    CHECK(none.ok);
    CHECK_FALSE(none.retrained);
    CHECK(none.records == 0);
    CHECK(p.model().version == 1);

    auto enroll = [&](const std::string& name, int count, const std::string& when) {
        int n = 0;
        for (const auto& [who, img] : fx.enrollment) {
            if (who != name || n == count) continue;
            rig.client.storage_put(name, std::to_string(n++) + ".pgm", imaging::save_pgm(img), "image/x-portable-graymap");
        }
        rig.client.db_push("/Enrollments", json{{"folder", name}, {"timestamp", when}, {"count", count}});
    };
    enroll(fx.names[0], 3, format_iso(fx.times[0] - 90min));
    const auto first = p.sync_enrollments();
    CHECK(first.ok);
    CHECK(first.retrained);
    CHECK(first.entries_before == 0);
    CHECK(first.entries_after == 3);
    CHECK(first.version == 2);
    CHECK(p.model().model->label_of(fx.names[0]) == 0);

    enroll(fx.names[1], 3, format_iso(fx.times[0] - 30min));
    const auto second = p.sync_enrollments();
    CHECK(second.entries_after == 6);
    CHECK(second.folders.size() == 2);
    CHECK(p.model().model->label_of(fx.names[1]) == 1);

    // Records outside the window are ignored.
    rig.client.db_push("/Enrollments", json{{"folder", "ghost"}, {"timestamp", format_iso(fx.times[0] - 48h)}});
    CHECK(p.sync_enrollments(1h).folders == std::vector<std::string>{fx.names[1]});

    rig.client.db_push("/Enrollments", json{{"folder", "ghost"}, {"timestamp", format_iso(fx.times[0] - 1min)}});
    const auto before = p.model();
    const auto bad = p.sync_enrollments();
    CHECK_FALSE(bad.ok);
    CHECK(bad.error.find("ghost") != std::string::npos);
    CHECK(p.model().version == before.version);
    CHECK(p.model().model == before.model);
    rig.client.set_online(false);
    CHECK_FALSE(p.sync_enrollments().ok);
    CHECK(p.model().model == before.model);
    CHECK(sync_to_json(bad)["ok"] == false);
}

TEST_CASE("model swaps are atomic for concurrent readers") {
    Rig rig;
    VectorSource cam({});
    auto versioned = [](std::uint64_t v) {
        std::vector<recognizer::ModelEntry> e{{0, std::vector<double>(256, 1.0 / 256)}};
        return recognizer::RecognizerModel({1, 1}, {3, 3}, {{0, "v" + std::to_string(v)}}, e);
    };
    Pipeline p(cascade(), versioned(1), cam, rig.client);
    std::atomic<bool> done{false};
    std::atomic<int> torn{0}, reads{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t) {
        readers.emplace_back([&] {
            const GrayImage face(3, 3, 5);
            while (!done) {
                const auto snap = p.model();
                if (snap.model->name_of(0) != "v" + std::to_string(snap.version)) ++torn;
                (void)recognizer::predict(*snap.model, face);
                ++reads;
            }
        });
    }
    // single-core hosts: let the readers get going first
    while (reads < 4) std::this_thread::yield();
    for (std::uint64_t v = 2; v <= 300; ++v) {
        CHECK(p.swap_model(versioned(v)) == v);
        std::this_thread::yield();
    }
    done = true;
    for (auto& r : readers) r.join();
    CHECK(torn == 0);
    CHECK(reads > 0);
    CHECK(p.model().version == 300);
}

TEST_CASE("metrics") {
    std::vector<TrialOutcome> trials;
    for (int i = 0; i < 106; ++i) trials.push_back({"t", true, "a", true, "a"});
    for (int i = 0; i < 6; ++i) trials.push_back({"t", true, "a", false, ""});
    for (int i = 0; i < 4; ++i) trials.push_back({"t", false, "", false, ""});
    auto m = compute_metrics(trials);
    CHECK(m.tp == 106);
    CHECK(m.fp == 0);
    CHECK(m.fn == 6);
    CHECK(m.tn == 4);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == doctest::Approx(106.0 / 112.0));
    CHECK(std::abs(m.recall - 0.9464) < 0.00005);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        std::shuffle(trials.begin(), trials.end(), rng);
        const auto s = compute_metrics(trials);
        CHECK(s.precision == m.precision);
        CHECK(s.recall == m.recall);
    }
    const auto empty = compute_metrics({});
    CHECK(empty.precision_degenerate);
    CHECK(empty.recall_degenerate);
    CHECK(empty.precision == 1.0);
    const auto one = compute_metrics({{"a", true, "x", true, "x"}, {"b", false, "", true, ""}, {"c", true, "y", false, ""}});
    CHECK(one.tp == 1);
    CHECK(one.fp == 1);
    CHECK(one.fn == 1);
    CHECK(one.precision == 0.5);
    CHECK(one.recall == 0.5);
    CHECK(one.recognized == 1);

    const auto back = trial_from_json(trial_to_json(trials[0]));
    CHECK(back.face_present == trials[0].face_present);
    CHECK(trial_from_json(json{{"face_present", true}, {"detected", true}, {"recognized_as", "UNKNOWN"}}).recognized_as.empty());
    CHECK_THROWS_AS(trial_from_json(json{{"face_present", true}}), FormatError);
    CHECK_THROWS_AS(trial_from_json(json::array()), FormatError);
    CHECK_THROWS_AS(trial_from_json(json{{"face_present", 1}, {"detected", true}}), FormatError);
}
