#pragma once

#include <cstdint>
#include <vector>

#include "pibase/detector.hpp"
#include "pibase/synth.hpp"

// Desk-scale training recipe on the synthetic face generator.
namespace pibase::synth {

struct ToySamples {
    std::vector<GrayImage> positives;  // random_face at the base window size
    std::vector<GrayImage> negatives;  // noise patches
};

ToySamples toy_samples(std::size_t positives, std::size_t negatives, std::uint64_t seed, int size = 24);

/// Miner that scans fresh noise scenes with pasted faces and returns the
/// cascade's false positives (windows overlapping a face by IoU >= 0.2 are
/// not counted), evenly sampled, at most `per_frame` per scene.
detector::NegativeMiner scene_miner(std::uint64_t seed, int scene_w = 240, int scene_h = 180,
                                    int max_frames = 40, std::size_t per_frame = 100);

struct ToyCascadeOptions {
    std::size_t positives = 500;
    std::size_t negatives = 2000;
    std::size_t pool = 4000;
    std::uint64_t seed = 1;
    detector::CascadeTargets targets{0.995, 0.5, 0.01, 20, 200, 20};
    bool mine = true;
};

detector::CascadeResult train_toy_cascade(const ToyCascadeOptions& options);

}  // namespace pibase::synth
