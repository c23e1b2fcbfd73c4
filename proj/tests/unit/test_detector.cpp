#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "pibase/detector.hpp"
#include "pibase/synth.hpp"
#include "pibase/toy.hpp"

using namespace pibase;
using namespace pibase::detector;
using imaging::GrayImage;

namespace {

const CascadeModel& toy_model() {
    static const CascadeModel m = read_cascade_file(PIBASE_SOURCE_DIR "/models/toy_cascade.json");
    return m;
}

// Independent enumeration: for each kind, every (cell size, position) that fits.
std::size_t count_oracle(int W, int H) {
    const int shapes[5][2] = {{2, 1}, {1, 2}, {3, 1}, {1, 3}, {2, 2}};
    std::size_t n = 0;
    for (const auto& s : shapes) {
        for (int cw = 1; cw <= W; ++cw)
            for (int ch = 1; ch <= H; ++ch)
                for (int x = 0; x < W; ++x)
                    for (int y = 0; y < H; ++y)
                        if (x + s[0] * cw <= W && y + s[1] * ch <= H) ++n;
    }
    return n;
}

double naive_feature(const HaarFeature& f, const GrayImage& img) {
    double total = 0;
    for (const auto& wr : f.rects) {
        long long s = 0;
        for (int y = wr.rect.y; y < wr.rect.y + wr.rect.h; ++y)
            for (int x = wr.rect.x; x < wr.rect.x + wr.rect.w; ++x) s += img.at(x, y);
        total += wr.weight * static_cast<double>(s);
    }
    return total;
}

GrayImage half_patch(int size, bool bright_top, std::mt19937_64& rng) {
    GrayImage img(size, size);
    std::uniform_int_distribution<int> noise(-20, 20);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool top = y < size / 2;
            const int base = (top == bright_top) ? 200 : 50;
            img.at(x, y) = static_cast<std::uint8_t>(base + noise(rng));
        }
    return img;
}

// Minimum weighted error of any (feature, threshold, polarity) by brute force.
double brute_min_error(std::span<const HaarFeature> pool, const std::vector<GrayImage>& pos,
                       const std::vector<GrayImage>& neg) {
    const double wp = 0.5 / pos.size(), wn = 0.5 / neg.size();
    double best = 1.0;
    for (const auto& f : pool) {
        std::vector<std::pair<double, bool>> vals;
        for (const auto& p : pos) {
            WindowTables t(p);
            vals.push_back({eval_feature(f, t.sum(), {0, 0}, 1.0,
                                         window_inv_norm(std::max(1.0, t.variance({0, 0, p.width(), p.height()})), 1.0)),
                            true});
        }
        for (const auto& q : neg) {
            WindowTables t(q);
            vals.push_back({eval_feature(f, t.sum(), {0, 0}, 1.0,
                                         window_inv_norm(std::max(1.0, t.variance({0, 0, q.width(), q.height()})), 1.0)),
                            false});
        }
        std::vector<double> cuts{-1e300, 1e300};
        for (const auto& v : vals) cuts.push_back(v.first + 1e-9);
        for (double c : cuts) {
            for (int pol : {1, -1}) {
                double err = 0;
                for (const auto& [v, is_pos] : vals) {
                    const bool vote = pol * v < pol * c;
                    if (vote != is_pos) err += is_pos ? wp : wn;
                }
                best = std::min(best, err);
            }
        }
    }
    return best;
}

}  // namespace

TEST_CASE("feature enumeration count") {
    const auto f24 = generate_features(24, 24);
    CHECK(f24.size() == 162336);
    CHECK(f24.size() >= 160000);
    CHECK(f24.size() <= 200000);
    for (int w = 4; w <= 9; ++w)
        for (int h = 4; h <= 7; ++h) CHECK(generate_features(w, h).size() == count_oracle(w, h));
    CHECK_THROWS_AS(generate_features(3, 8), ArgumentError);
}

TEST_CASE("features are balanced, inside the window, and unique") {
    const auto feats = generate_features(12, 10);
    std::set<std::vector<std::tuple<int, int, int, int, int>>> seen;
    for (int c : {0, 1, 97, 255}) {
        const GrayImage flat(12, 10, static_cast<std::uint8_t>(c));
        const auto ii = imaging::integral(flat);
        for (const auto& f : feats) REQUIRE(eval_feature(f, ii, {0, 0}, 1.0, 1.0) == 0.0);
    }
    for (const auto& f : feats) {
        int weight_sum = 0;
        long long area = -1;
        std::vector<std::tuple<int, int, int, int, int>> key;
        for (const auto& wr : f.rects) {
            REQUIRE(wr.rect.x >= 0);
            REQUIRE(wr.rect.y >= 0);
            REQUIRE(wr.rect.x + wr.rect.w <= 12);
            REQUIRE(wr.rect.y + wr.rect.h <= 10);
            if (area < 0) area = wr.rect.area();
            REQUIRE(wr.rect.area() == area);
            weight_sum += wr.weight;
            key.emplace_back(wr.rect.x, wr.rect.y, wr.rect.w, wr.rect.h, wr.weight);
        }
        REQUIRE(weight_sum == 0);
        REQUIRE(seen.insert(key).second);
    }
    CHECK(generate_features(12, 10) == feats);
}

TEST_CASE("eval_feature matches naive sums and reads bright-over-dark as positive") {
    std::mt19937_64 rng(2);
    const auto img = testing::random_image(24, 24, rng);
    const auto ii = imaging::integral(img);
    const auto feats = generate_features(24, 24);
    for (std::size_t i = 0; i < feats.size(); i += 97) {
        REQUIRE(eval_feature(feats[i], ii, {0, 0}, 1.0, 1.0) == naive_feature(feats[i], img));
    }
    GrayImage split(8, 8, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) split.at(x, y) = 255;
    const auto sii = imaging::integral(split);
    const HaarFeature vertical{FeatureKind::TwoRectVertical, {{{0, 0, 8, 4}, 1}, {{0, 4, 8, 4}, -1}}};
    CHECK(eval_feature(vertical, sii, {0, 0}, 1.0, 1.0) > 0.0);
    CHECK(eval_feature(vertical, sii, {0, 0}, 1.0, 1.0) == 255.0 * 32);
    CHECK_THROWS_AS(eval_feature(vertical, sii, {4, 4}, 1.0, 1.0), BoundsError);
}

TEST_CASE("scaled rects keep equal areas and stay inside the scaled window") {
    const auto feats = generate_features(24, 24);
    for (double s : {1.0, 1.25, 1.5625, 2.44, 3.8}) {
        const int win = static_cast<int>(std::lround(24 * s));
        for (std::size_t i = 0; i < feats.size(); i += 13) {
            long long area = -1;
            for (const auto& wr : feats[i].rects) {
                const auto r = scale_rect(wr.rect, {5, 7}, s);
                REQUIRE(r.x >= 5);
                REQUIRE(r.y >= 7);
                REQUIRE(r.x + r.w <= 5 + win);
                REQUIRE(r.y + r.h <= 7 + win);
                if (area < 0) area = r.area();
                REQUIRE(r.area() == area);
            }
        }
    }
}

TEST_CASE("variance normalisation makes features affine invariant") {
    std::mt19937_64 rng(3);
    const auto feats = generate_features(24, 24);
    for (int t = 0; t < 20; ++t) {
        const auto w = testing::random_image(24, 24, rng, 0, 100);
        const int a = 1 + static_cast<int>(rng() % 2);
        const int b = static_cast<int>(rng() % 50);
        GrayImage w2 = w;
        for (auto& p : w2.pixels()) p = static_cast<std::uint8_t>(a * p + b);
        const WindowTables t1(w), t2(w2);
        const double n1 = window_inv_norm(t1.variance({0, 0, 24, 24}), 1.0);
        const double n2 = window_inv_norm(t2.variance({0, 0, 24, 24}), 1.0);
        for (std::size_t i = t; i < feats.size(); i += 211) {
            const double v1 = eval_feature(feats[i], t1.sum(), {0, 0}, 1.0, n1);
            const double v2 = eval_feature(feats[i], t2.sum(), {0, 0}, 1.0, n2);
            REQUIRE(std::abs(v1 - v2) <= 1e-9 * std::max(1.0, std::abs(v1)));
        }
    }
}

TEST_CASE("cascade construction rejects empty models") {
    CHECK_THROWS_AS(CascadeModel({24, 24}, {}), ArgumentError);
    CHECK_THROWS_AS(CascadeModel({24, 24}, {CascadeStage{}}), ArgumentError);
}

TEST_CASE("early exit and prefix monotonicity on the toy cascade") {
    const auto& model = toy_model();
    REQUIRE(model.stages().size() >= 2);
    synth::Rng rng(4);
    std::vector<GrayImage> windows;
    for (int i = 0; i < 200; ++i) windows.push_back(synth::random_face(24, rng));
    for (int i = 0; i < 300; ++i) windows.push_back(synth::noise_patch(24, 24, rng));
    for (const auto& w : windows) {
        const WindowTables t(w);
        const auto v = run_cascade(model, t, {0, 0}, 1.0);
        if (v.accepted) {
            REQUIRE(v.stages_evaluated == static_cast<int>(model.stages().size()));
            REQUIRE(v.rejected_stage == -1);
            for (std::size_t k = 1; k <= model.stages().size(); ++k) {
                REQUIRE(run_cascade(model.prefix(k), t, {0, 0}, 1.0).accepted);
            }
        } else if (!v.low_variance) {
            REQUIRE(v.stages_evaluated == v.rejected_stage + 1);
            // Stages before the failing one all pass.
            if (v.rejected_stage > 0) {
                REQUIRE(run_cascade(model.prefix(v.rejected_stage), t, {0, 0}, 1.0).accepted);
            }
        }
    }
    const GrayImage black(24, 24, 0);
    const auto v = run_cascade(model, WindowTables(black), {0, 0}, 1.0);
    CHECK_FALSE(v.accepted);
    CHECK(v.low_variance);
    CHECK(v.stages_evaluated == 0);
}

TEST_CASE("detect: blank frames, one face, neighbour threshold, determinism") {
    const auto& model = toy_model();
    CHECK(detect(model, GrayImage(320, 240, 0)).empty());
    CHECK(detect(model, GrayImage(320, 240, 128)).empty());
    CHECK(detect(model, GrayImage(20, 20, 128)).empty());
    synth::Rng rng(5);
    int exact = 0;
    for (int t = 0; t < 10; ++t) {
        const auto scene = synth::make_scene(320, 240, 1, 40, 100, rng);
        const auto boxes = detect(model, scene.frame);
        const auto hits = std::count_if(boxes.begin(), boxes.end(),
                                        [&](const auto& b) { return imaging::iou(b.rect, scene.faces[0]) >= 0.5; });
        exact += (hits == 1) ? 1 : 0;
        for (const auto& b : boxes) {
            CHECK(b.neighbor_count >= 3);
            CHECK(scene.frame.contains(b.rect));
        }
        CHECK(boxes == detect(model, scene.frame));
        CHECK(std::is_sorted(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) {
            return std::tie(a.rect.y, a.rect.x, a.rect.w, a.rect.h) < std::tie(b.rect.y, b.rect.x, b.rect.w, b.rect.h);
        }));
        if (!boxes.empty()) {
            const int most = std::max_element(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) {
                                 return a.neighbor_count < b.neighbor_count;
                             })->neighbor_count;
            DetectParams strict;
            strict.min_neighbors = static_cast<int>(detect_raw(model, scene.frame).size()) + 1;
            CHECK(detect(model, scene.frame, strict).empty());
            CHECK(most <= strict.min_neighbors);
        }
    }
    CHECK(exact >= 9);
    DetectParams bad;
    bad.scale_factor = 1.0;
    CHECK_THROWS_AS(detect(model, GrayImage(64, 64, 5), bad), ArgumentError);
}

TEST_CASE("detection is roughly scale equivariant") {
    const auto& model = toy_model();
    synth::Rng rng(6);
    int checked = 0;
    for (int t = 0; t < 6; ++t) {
        const auto scene = synth::make_scene(160, 120, 1, 30, 50, rng);
        const auto small = detect(model, scene.frame);
        const auto big_img = imaging::resize_nearest(scene.frame, 320, 240);
        DetectParams p;
        p.min_size = 48;
        const auto big = detect(model, big_img, p);
        for (const auto& b : small) {
            if (imaging::iou(b.rect, scene.faces[0]) < 0.5) continue;
            const imaging::Rect doubled{2 * b.rect.x, 2 * b.rect.y, 2 * b.rect.w, 2 * b.rect.h};
            const auto match = std::max_element(big.begin(), big.end(), [&](const auto& x, const auto& y) {
                return imaging::iou(x.rect, doubled) < imaging::iou(y.rect, doubled);
            });
            REQUIRE(match != big.end());
            // Window positions and sizes are quantised by the step and the
            // scale ladder; allow a few pixels per unit of scale.
            const double tol = 2.0 * match->scale + 4.0;
            CHECK(std::abs(match->rect.x - doubled.x) <= tol);
            CHECK(std::abs(match->rect.y - doubled.y) <= tol);
            CHECK(std::abs(match->rect.w - doubled.w) <= 2 * tol);
            ++checked;
        }
    }
    CHECK(checked >= 4);
}

TEST_CASE("train_stage on a separable set: one learner, zero error, brute-force optimum") {
    std::mt19937_64 rng(7);
    std::vector<GrayImage> pos, neg;
    for (int i = 0; i < 10; ++i) pos.push_back(half_patch(8, true, rng));
    for (int i = 0; i < 10; ++i) neg.push_back(half_patch(8, false, rng));
    const auto pool = generate_features(8, 8);
    const auto r = train_stage(pos, neg, pool, {0.995, 0.5, 50, 1});
    CHECK(r.stage.weak.size() == 1);
    CHECK(r.trace.at(0).error == 0.0);
    CHECK(r.stage.weak[0].alpha == kAlphaCap);
    CHECK(r.tpr == 1.0);
    CHECK(r.fpr == 0.0);
    CHECK(r.reached_target);
    CHECK(brute_min_error(pool, pos, neg) == 0.0);
}

TEST_CASE("train_stage: first-round learner matches a brute-force search") {
    std::mt19937_64 rng(8);
    synth::Rng srng(8);
    std::vector<GrayImage> pos, neg;
    for (int i = 0; i < 30; ++i) pos.push_back(synth::random_face(8, srng));
    for (int i = 0; i < 30; ++i) neg.push_back(testing::random_image(8, 8, rng));
    const auto all = generate_features(8, 8);
    const auto pool = sample_pool(all, 300, 1);
    const auto r = train_stage(pos, neg, pool, {0.995, 0.3, 30, 1});
    CHECK(r.trace.at(0).error == doctest::Approx(brute_min_error(pool, pos, neg)).epsilon(1e-6));
}

TEST_CASE("AdaBoost round invariants") {
    const auto samples = synth::toy_samples(120, 240, 9);
    const auto pool = sample_pool(generate_features(24, 24), 800, 9);
    for (double tpr : {0.995, 1.0}) {
        const auto r = train_stage(samples.positives, samples.negatives, pool, {tpr, 0.05, 40, 1});
        REQUIRE_FALSE(r.trace.empty());
        for (const auto& t : r.trace) {
            CHECK(t.error < 0.5);
            CHECK(t.weight_sum == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(t.strong_error <= t.error_bound + 1e-12);
            CHECK(std::isfinite(t.alpha));
            CHECK(t.alpha >= 0.0);
        }
        if (tpr == 1.0) CHECK(r.tpr == 1.0);
        // every positive passes when the target is 1
        const CascadeModel m({24, 24}, {r.stage});
        if (tpr == 1.0) {
            for (const auto& p : samples.positives) {
                const WindowTables t(p);
                if (t.variance({0, 0, 24, 24}) >= kMinWindowVariance) REQUIRE(run_cascade(m, t, {0, 0}, 1.0).accepted);
            }
        }
    }
}

TEST_CASE("train_stage failures") {
    const auto samples = synth::toy_samples(10, 10, 10);
    const auto pool = sample_pool(generate_features(24, 24), 50, 1);
    CHECK_THROWS_AS(train_stage({}, samples.negatives, pool, {}), ArgumentError);
    CHECK_THROWS_AS(train_stage(samples.positives, samples.negatives, {}, {}), ArgumentError);
    // Identical classes: nothing beats chance.
    CHECK_THROWS_AS(train_stage(samples.positives, samples.positives, pool, {}), TrainingError);
}

TEST_CASE("train_cascade: product bound, single stage, partial model on failure") {
    const auto samples = synth::toy_samples(150, 600, 11);
    const auto pool = sample_pool(generate_features(24, 24), 600, 11);
    CascadeTargets t{0.99, 0.5, 1e-9, 3, 60, 1};
    const auto r = train_cascade(samples.positives, samples.negatives, pool, t);
    CHECK(r.model.stages().size() <= 3);
    double product = 1.0;
    for (const auto& s : r.stages) {
        CHECK(s.fpr <= 0.5);
        product *= s.fpr;
    }
    CHECK(r.cumulative_fpr == doctest::Approx(product));
    CHECK(r.cumulative_fpr <= std::pow(0.5, static_cast<double>(r.stages.size())) + 1e-12);
    if (r.stages.size() == 3) CHECK(r.cumulative_fpr <= 0.125);
    CHECK(r.model.metadata().at("enumerated_feature_count") == 162336);

    CascadeTargets one{0.99, 0.5, 1e-9, 1, 60, 1};
    const auto single = train_cascade(samples.positives, samples.negatives, pool, one);
    const auto stage = train_stage(samples.positives, samples.negatives, pool, {0.99, 0.5, 60, 1});
    REQUIRE(single.model.stages().size() == 1);
    CHECK(single.model.stages()[0] == stage.stage);

    // Noise is easy to reject, the face-like half of the negatives is not:
    // stage 2 cannot reach its rate within three rounds.
    auto mixed = synth::toy_samples(0, 300, 12).negatives;
    synth::Rng frng(13);
    for (int i = 0; i < 300; ++i) mixed.push_back(synth::random_face(24, frng));
    CascadeTargets tight{0.995, 0.6, 1e-9, 5, 3, 1};
    try {
        train_cascade(samples.positives, mixed, pool, tight);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        REQUIRE(e.partial().has_value());
        CHECK(e.partial()->stages().size() >= 1);
        CHECK(e.partial()->metadata().at("stages").size() == e.partial()->stages().size());
    }
    // Failing in the first stage leaves nothing to keep.
    try {
        train_cascade(samples.positives, samples.positives, pool, tight);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK_FALSE(e.partial().has_value());
    }
}

TEST_CASE("toy recipe is deterministic for a seed and reproduces the committed cascade") {
    synth::ToyCascadeOptions o;
    o.seed = 1;
    const auto a = synth::train_toy_cascade(o);
    CHECK(a.model == toy_model());
    CHECK(save_cascade(a.model) == save_cascade(toy_model()));
    CHECK(a.model.metadata().at("seed") == 1);
}

TEST_CASE("complexity ordering is reported") {
    CHECK(toy_model().complexity_ordered());
    const auto& st = toy_model().stages();
    const CascadeModel reversed({24, 24}, {st.back(), st.front()});
    CHECK(reversed.complexity_ordered() == (st.back().weak.size() <= st.front().weak.size()));
}

TEST_CASE("cascade JSON round trip and schema errors") {
    const auto text = save_cascade(toy_model());
    CHECK(load_cascade(text) == toy_model());
    auto j = nlohmann::json::parse(text);
    auto empty_stage = j;
    empty_stage["stages"][0]["weak"] = nlohmann::json::array();
    CHECK_THROWS_AS(cascade_from_json(empty_stage), FormatError);
    auto nan_alpha = j;
    nan_alpha["stages"][0]["weak"][0]["alpha"] = "NaN";
    CHECK_THROWS_AS(cascade_from_json(nan_alpha), FormatError);
    auto bad_kind = j;
    bad_kind["stages"][0]["weak"][0]["feature"]["kind"] = "five-rect";
    CHECK_THROWS_AS(cascade_from_json(bad_kind), FormatError);
    CHECK_THROWS_AS(load_cascade("{not json"), FormatError);
    CHECK_THROWS_AS(load_cascade(R"({"base_window":[24,24],"stages":[]})"), FormatError);
}

TEST_CASE("false-positive collection excludes faces and respects the limit") {
    const auto& model = toy_model();
    synth::Rng rng(12);
    for (int t = 0; t < 5; ++t) {
        const auto scene = synth::make_scene(160, 120, 2, 24, 60, rng);
        const auto fps = collect_false_positives(model, scene.frame, scene.faces, 0.2, 7);
        CHECK(fps.size() <= 7);
        for (const auto& w : fps) {
            CHECK(w.width() == 24);
            CHECK(w.height() == 24);
        }
    }
}
