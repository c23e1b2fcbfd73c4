#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "pibase/image.hpp"

// Reproducible synthetic faces and clutter for training and replay fixtures.
// A face is two dark eye blocks above a bright cheek band and a darker mouth
// bar, overlaid with an identity-specific sinusoidal texture, rendered at any
// size from normalised coordinates.
namespace pibase::synth {

using imaging::GrayImage;
using Rng = std::mt19937_64;

struct Identity {
    std::uint64_t seed = 0;
    double skin = 150.0;
    double eye_spacing = 0.42;  // centre-to-centre, fraction of face width
    double eye_y = 0.34;
    double eye_half_w = 0.10;
    double eye_half_h = 0.065;
    double eye_level = 40.0;
    double band_level = 215.0;
    double mouth_level = 85.0;
    double mouth_half_w = 0.2;
    struct Wave {
        double amplitude;
        double frequency;  // cycles per face width
        double angle;
        double phase;
    };
    std::array<Wave, 4> texture{};
};

Identity make_identity(std::uint64_t seed);

struct RenderOptions {
    double noise_sigma = 5.0;
    double max_shift = 0.0;        // uniform jitter of the layout, fraction of size
    double max_scale_jitter = 0.0; // uniform relative jitter of the layout scale
    double max_gain_jitter = 0.0;  // uniform relative contrast jitter
};

/// Face of the given identity rendered into a size x size patch.
GrayImage render_face(const Identity& id, int size, Rng& rng, const RenderOptions& opts = {});

/// Face of a fresh random identity with detector-training jitter applied.
GrayImage random_face(int size, Rng& rng);

/// I.i.d. uniform [0, 255] pixels.
GrayImage noise_patch(int width, int height, Rng& rng);

struct Scene {
    GrayImage frame;
    std::vector<imaging::Rect> faces;
};

/// Noise frame holding `face_count` non-overlapping random faces with sides
/// in [min_face, max_face].
Scene make_scene(int width, int height, int face_count, int min_face, int max_face, Rng& rng);

}  // namespace pibase::synth
