#include <algorithm>
#include <cmath>
#include <numbers>

#include "pibase/synth.hpp"

namespace pibase::synth {

namespace {

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool inside(double u, double v, double cu, double cv, double hu, double hv) {
    return std::abs(u - cu) <= hu && std::abs(v - cv) <= hv;
}

}  // namespace

Identity make_identity(std::uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
    Identity id;
    id.seed = seed;
    id.skin = uniform(rng, 135, 165);
    id.eye_spacing = uniform(rng, 0.38, 0.46);
    id.eye_y = uniform(rng, 0.31, 0.37);
    id.eye_half_w = uniform(rng, 0.085, 0.115);
    id.eye_half_h = uniform(rng, 0.055, 0.075);
    id.eye_level = uniform(rng, 30, 55);
    id.band_level = uniform(rng, 205, 230);
    id.mouth_level = uniform(rng, 70, 100);
    id.mouth_half_w = uniform(rng, 0.16, 0.24);
    for (auto& w : id.texture) {
        w = {uniform(rng, 10, 22), uniform(rng, 2.5, 7.0), uniform(rng, 0, std::numbers::pi),
             uniform(rng, 0, 2 * std::numbers::pi)};
    }
    return id;
}

GrayImage render_face(const Identity& id, int size, Rng& rng, const RenderOptions& opts) {
    const double shift_u = uniform(rng, -opts.max_shift, opts.max_shift + 1e-12);
    const double shift_v = uniform(rng, -opts.max_shift, opts.max_shift + 1e-12);
    const double zoom = 1.0 + uniform(rng, -opts.max_scale_jitter, opts.max_scale_jitter + 1e-12);
    const double gain = 1.0 + uniform(rng, -opts.max_gain_jitter, opts.max_gain_jitter + 1e-12);
    std::normal_distribution<double> noise(0.0, opts.noise_sigma);

    GrayImage out(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            // Layout coordinates after jitter, about the patch centre.
            const double u = ((x + 0.5) / size - 0.5) / zoom + 0.5 - shift_u;
            const double v = ((y + 0.5) / size - 0.5) / zoom + 0.5 - shift_v;
            double value = id.skin;
            const double band_top = id.eye_y + id.eye_half_h + 0.04;
            if (v >= band_top && v <= band_top + 0.13 && std::abs(u - 0.5) <= 0.40) {
                value = id.band_level;
            }
            if (inside(u, v, 0.5 - id.eye_spacing / 2, id.eye_y, id.eye_half_w, id.eye_half_h) ||
                inside(u, v, 0.5 + id.eye_spacing / 2, id.eye_y, id.eye_half_w, id.eye_half_h)) {
                value = id.eye_level;
            }
            if (inside(u, v, 0.5, 0.74, id.mouth_half_w, 0.04)) value = id.mouth_level;
            for (const auto& w : id.texture) {
                const double t = u * std::cos(w.angle) + v * std::sin(w.angle);
                value += w.amplitude * std::sin(2 * std::numbers::pi * w.frequency * t + w.phase);
            }
            value = 128.0 + (value - 128.0) * gain + noise(rng);
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
        }
    }
    return out;
}

GrayImage random_face(int size, Rng& rng) {
    const auto id = make_identity(rng());
    return render_face(id, size, rng, RenderOptions{6.0, 0.03, 0.06, 0.15});
}

GrayImage noise_patch(int width, int height, Rng& rng) {
    GrayImage out(width, height);
    std::uniform_int_distribution<int> dist(0, 255);
    for (auto& p : out.pixels()) p = static_cast<std::uint8_t>(dist(rng));
    return out;
}

Scene make_scene(int width, int height, int face_count, int min_face, int max_face, Rng& rng) {
    Scene scene{noise_patch(width, height, rng), {}};
    std::uniform_int_distribution<int> side(min_face, max_face);
    for (int placed = 0, attempts = 0; placed < face_count && attempts < 1000; ++attempts) {
        const int s = side(rng);
        if (s > width || s > height) continue;
        const imaging::Rect r{std::uniform_int_distribution<int>(0, width - s)(rng),
                              std::uniform_int_distribution<int>(0, height - s)(rng), s, s};
        bool clear = true;
        for (const auto& f : scene.faces) clear = clear && imaging::iou(f, r) == 0.0;
        if (!clear) continue;
        imaging::paste(scene.frame, render_face(make_identity(rng()), s, rng, {5.0}), r.x, r.y);
        scene.faces.push_back(r);
        ++placed;
    }
    return scene;
}

}  // namespace pibase::synth
