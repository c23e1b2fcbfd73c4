#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pibase/synth.hpp"
#include "pibase/timeutil.hpp"

// Replay fixtures for the device loop: enrollment photos of a few synthetic
// people, then one burst of frames per motion event.
namespace pibase::synth {

enum class EventKind { Empty, Known, Stranger };

struct ReplayOptions {
    int width = 320;
    int height = 240;
    int min_face = 50;
    int max_face = 110;
    int people = 2;
    int enroll_images = 10;
    int burst_count = 3;
    std::uint64_t seed = 7;
    std::string start = "2026-03-14T09:00:00Z";
    int event_gap_s = 60;
};

struct ReplayFixture {
    std::vector<std::string> names;
    std::vector<Identity> people;
    std::vector<std::pair<std::string, GrayImage>> enrollment;  // (name, photo)
    std::vector<EventKind> kinds;
    std::vector<TimePoint> times;      // one per event
    std::vector<GrayImage> frames;     // burst_count per event, in event order
    std::vector<imaging::Rect> faces;  // per frame; empty rect when no face
    int burst_count = 0;

    [[nodiscard]] std::string motion_text() const;
};

/// Known events show a random enrolled person; strangers are identities
/// never enrolled. Every face is placed in a noise frame at a random size.
ReplayFixture make_replay(const std::vector<EventKind>& kinds, const ReplayOptions& options = {});

/// Writes faces/<name>/NN.pgm, frames/NNNNN.pgm, and motion.txt under dir.
void write_replay(const ReplayFixture& fx, const std::filesystem::path& dir);

/// "empty", "known" or "stranger"; throws ArgumentError otherwise.
EventKind parse_event_kind(std::string_view text);

}  // namespace pibase::synth
