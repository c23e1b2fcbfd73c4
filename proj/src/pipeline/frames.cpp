#include <algorithm>
#include <thread>

#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

TimePoint ManualClock::now() const {
    std::lock_guard lock(mu_);
    return now_;
}

void ManualClock::advance(Millis d) {
    std::lock_guard lock(mu_);
    now_ += d;
}

Timing ManualClock::timing() {
    return {[this] { return now(); }, [this](Millis d) { advance(d); }};
}

std::optional<GrayImage> FrameSource::read() {
    ++reads_;
    return next_frame();
}

DirectorySource::DirectorySource(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("frame directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
}

std::optional<GrayImage> DirectorySource::next_frame() {
    if (pos_ >= files_.size()) return std::nullopt;
    return imaging::read_pgm_file(files_[pos_++].string());
}

std::optional<GrayImage> VectorSource::next_frame() {
    if (pos_ >= frames_.size()) return std::nullopt;
    return frames_[pos_++];
}

CaptureBurst run_burst(FrameSource& camera, int count, Millis interval, const Timing& timing) {
    if (count < 1) throw ArgumentError("burst count must be at least 1");
    if (interval.count() < 0) throw ArgumentError("burst interval must be non-negative");
    const auto now = timing.now ? timing.now : WallClock(system_now);
    const auto sleep = timing.sleep ? timing.sleep : [](Millis d) { std::this_thread::sleep_for(d); };
    CaptureBurst burst;
    burst.requested = count;
    for (int i = 0; i < count; ++i) {
        if (i > 0 && interval.count() > 0) sleep(interval);
        try {
            auto img = camera.read();
            if (!img) {
                burst.partial = true;
                burst.failure = "frame source exhausted";
                break;
            }
            burst.frames.push_back({std::move(*img), now()});
        } catch (const std::exception& e) {
            burst.partial = true;
            burst.failure = e.what();
            break;
        }
    }
    return burst;
}

}  // namespace pibase::pipeline
