#include <cstdio>
#include <map>

#include "pibase/codec.hpp"
#include "pibase/errors.hpp"
#include "pibase/replay.hpp"

namespace pibase::synth {

namespace {

GrayImage framed(const Identity& id, const ReplayOptions& o, Rng& rng, imaging::Rect& where) {
    const int size = std::uniform_int_distribution<int>(o.min_face, o.max_face)(rng);
    auto frame = noise_patch(o.width, o.height, rng);
    const int x = std::uniform_int_distribution<int>(0, o.width - size)(rng);
    const int y = std::uniform_int_distribution<int>(0, o.height - size)(rng);
    imaging::paste(frame, render_face(id, size, rng), x, y);
    where = {x, y, size, size};
    return frame;
}

}  // namespace

EventKind parse_event_kind(std::string_view text) {
    if (text == "empty") return EventKind::Empty;
    if (text == "known") return EventKind::Known;
    if (text == "stranger") return EventKind::Stranger;
    throw ArgumentError("unknown event kind: " + std::string(text));
}

std::string ReplayFixture::motion_text() const {
    std::string out;
    for (const auto& t : times) out += format_iso(t) + " pir0\n";
    return out;
}

ReplayFixture make_replay(const std::vector<EventKind>& kinds, const ReplayOptions& o) {
    if (o.people < 1 || o.enroll_images < 1 || o.burst_count < 1) throw ArgumentError("replay needs people, photos and frames");
    if (o.max_face > std::min(o.width, o.height) || o.min_face > o.max_face) throw ArgumentError("bad face size range");
    Rng rng(o.seed);
    ReplayFixture fx;
    fx.kinds = kinds;
    fx.burst_count = o.burst_count;
    for (int p = 0; p < o.people; ++p) {
        fx.names.push_back("person" + std::to_string(p));
        fx.people.push_back(make_identity(o.seed * 1000 + static_cast<std::uint64_t>(p)));
    }
    for (int p = 0; p < o.people; ++p) {
        for (int k = 0; k < o.enroll_images; ++k) {
            imaging::Rect r;
            fx.enrollment.emplace_back(fx.names[p], framed(fx.people[p], o, rng, r));
        }
    }
    const auto start = parse_iso(o.start);
    std::uint64_t strangers = 0;
    for (std::size_t e = 0; e < kinds.size(); ++e) {
        fx.times.push_back(start + std::chrono::seconds(static_cast<long long>(e) * o.event_gap_s));
        const Identity* who = nullptr;
        Identity stranger;
        if (kinds[e] == EventKind::Known) {
            who = &fx.people[std::uniform_int_distribution<int>(0, o.people - 1)(rng)];
        } else if (kinds[e] == EventKind::Stranger) {
            stranger = make_identity(o.seed * 1000 + 500 + strangers++);
            who = &stranger;
        }
        for (int f = 0; f < o.burst_count; ++f) {
            imaging::Rect r{0, 0, 0, 0};
            fx.frames.push_back(who ? framed(*who, o, rng, r) : noise_patch(o.width, o.height, rng));
            fx.faces.push_back(r);
        }
    }
    return fx;
}

void write_replay(const ReplayFixture& fx, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "frames");
    std::map<std::string, int> counts;
    char name[32];
    for (const auto& [who, img] : fx.enrollment) {
        fs::create_directories(dir / "faces" / who);
        std::snprintf(name, sizeof name, "%02d.pgm", counts[who]++);
        imaging::write_pgm_file(dir / "faces" / who / name, img);
    }
    for (std::size_t i = 0; i < fx.frames.size(); ++i) {
        std::snprintf(name, sizeof name, "%05zu.pgm", i);
        imaging::write_pgm_file(dir / "frames" / name, fx.frames[i]);
    }
    write_file_atomic((dir / "motion.txt").string(), to_bytes(fx.motion_text()));
}

}  // namespace pibase::synth
