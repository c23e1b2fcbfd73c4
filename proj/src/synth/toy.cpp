#include <memory>

#include "pibase/toy.hpp"

namespace pibase::synth {

ToySamples toy_samples(std::size_t positives, std::size_t negatives, std::uint64_t seed, int size) {
    Rng rng(seed);
    ToySamples out;
    out.positives.reserve(positives);
    out.negatives.reserve(negatives);
    for (std::size_t i = 0; i < positives; ++i) out.positives.push_back(random_face(size, rng));
    for (std::size_t i = 0; i < negatives; ++i) out.negatives.push_back(noise_patch(size, size, rng));
    return out;
}

detector::NegativeMiner scene_miner(std::uint64_t seed, int scene_w, int scene_h, int max_frames,
                                    std::size_t per_frame) {
    auto rng = std::make_shared<Rng>(seed);
    return [=](const detector::CascadeModel& model, std::size_t wanted) {
        std::vector<GrayImage> out;
        const int base = model.base_window().w;
        for (int f = 0; f < max_frames && out.size() < wanted; ++f) {
            const auto scene = make_scene(scene_w, scene_h, 2, base, std::min(scene_w, scene_h) / 2, *rng);
            const auto take = std::min(per_frame, wanted - out.size());
            for (auto& w : detector::collect_false_positives(model, scene.frame, scene.faces, 0.2, take)) {
                out.push_back(std::move(w));
            }
        }
        return out;
    };
}

detector::CascadeResult train_toy_cascade(const ToyCascadeOptions& options) {
    const auto samples = toy_samples(options.positives, options.negatives, options.seed);
    const auto all = detector::generate_features(24, 24);
    const auto pool = detector::sample_pool(all, options.pool, options.seed);
    auto result = detector::train_cascade(samples.positives, samples.negatives, pool, options.targets,
                                          options.mine ? scene_miner(options.seed ^ 0x9e3779b97f4a7c15ULL)
                                                       : detector::NegativeMiner{});
    auto& meta = result.model.metadata();
    meta["seed"] = options.seed;
    meta["negative_mining"] = options.mine;
    meta["data"] = "synthetic toy faces / uniform noise";
    return result;
}

}  // namespace pibase::synth
