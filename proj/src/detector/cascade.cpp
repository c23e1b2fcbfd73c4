#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "pibase/detector.hpp"

namespace pibase::detector {

CascadeModel::CascadeModel(WindowSize base, std::vector<CascadeStage> stages, nlohmann::json metadata)
    : base_(base), stages_(std::move(stages)), metadata_(std::move(metadata)) {
    if (base_.w < 4 || base_.h < 4) throw ArgumentError("cascade base window must be at least 4x4");
    if (stages_.empty()) throw ArgumentError("cascade needs at least one stage");
    for (const auto& stage : stages_) {
        if (stage.weak.empty()) throw ArgumentError("cascade stage without weak classifiers");
        for (const auto& weak : stage.weak) {
            if (weak.polarity != 1 && weak.polarity != -1) {
                throw ArgumentError("weak classifier polarity must be +1 or -1");
            }
            if (!std::isfinite(weak.alpha) || weak.alpha < 0 || !std::isfinite(weak.threshold)) {
                throw ArgumentError("weak classifier with non-finite or negative weight");
            }
            for (const auto& wr : weak.feature.rects) {
                const auto& r = wr.rect;
                if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x + r.w > base_.w ||
                    r.y + r.h > base_.h) {
                    throw ArgumentError("feature rect outside the base window");
                }
            }
        }
        if (!std::isfinite(stage.threshold)) throw ArgumentError("non-finite stage threshold");
    }
    if (metadata_.is_null()) metadata_ = nlohmann::json::object();
}

CascadeModel CascadeModel::prefix(std::size_t count) const {
    count = std::clamp<std::size_t>(count, 1, stages_.size());
    return {base_, {stages_.begin(), stages_.begin() + static_cast<std::ptrdiff_t>(count)}, metadata_};
}

bool CascadeModel::complexity_ordered() const {
    for (std::size_t i = 1; i < stages_.size(); ++i) {
        if (stages_[i].weak.size() < stages_[i - 1].weak.size()) return false;
    }
    return true;
}

double WindowTables::variance(const Rect& r) const {
    const double n = static_cast<double>(r.area());
    const double mean = static_cast<double>(imaging::rect_sum(sum_, r)) / n;
    const double sq = static_cast<double>(imaging::rect_sum(squares_, r)) / n;
    return std::max(0.0, sq - mean * mean);
}

double window_inv_norm(double variance, double scale) {
    return 1.0 / (std::sqrt(variance) * scale * scale);
}

double stage_score(const CascadeStage& stage, const IntegralImage& ii, Point origin, double scale,
                   double inv_norm) {
    double score = 0.0;
    for (const auto& weak : stage.weak) {
        if (weak.vote(eval_feature(weak.feature, ii, origin, scale, inv_norm))) score += weak.alpha;
    }
    return score;
}

namespace {

Rect window_rect(WindowSize base, Point origin, double scale) {
    return {origin.x, origin.y, static_cast<int>(std::lround(base.w * scale)),
            static_cast<int>(std::lround(base.h * scale))};
}

}  // namespace

CascadeVerdict run_cascade(const CascadeModel& model, const WindowTables& tables, Point origin,
                           double scale) {
    const Rect window = window_rect(model.base_window(), origin, scale);
    const double variance = tables.variance(window);
    CascadeVerdict verdict;
    if (variance < kMinWindowVariance) {
        verdict.rejected_stage = 0;
        verdict.low_variance = true;
        return verdict;
    }
    const double inv_norm = window_inv_norm(variance, scale);
    const auto& stages = model.stages();
    for (std::size_t i = 0; i < stages.size(); ++i) {
        ++verdict.stages_evaluated;
        if (stage_score(stages[i], tables.sum(), origin, scale, inv_norm) < stages[i].threshold) {
            verdict.rejected_stage = static_cast<int>(i);
            return verdict;
        }
    }
    verdict.accepted = true;
    return verdict;
}

std::vector<DetectionBox> detect_raw(const CascadeModel& model, const GrayImage& img,
                                     const DetectParams& params) {
    if (!(params.scale_factor > 1.0)) throw ArgumentError("scale_factor must exceed 1");
    if (params.step < 0) throw ArgumentError("step must be positive");
    std::vector<DetectionBox> hits;
    const auto base = model.base_window();
    if (img.width() < base.w || img.height() < base.h) return hits;

    const WindowTables tables(img);
    double scale = 1.0;
    if (params.min_size > 0) {
        scale = std::max(1.0, static_cast<double>(params.min_size) / std::min(base.w, base.h));
    }
    for (;; scale *= params.scale_factor) {
        const Rect probe = window_rect(base, {0, 0}, scale);
        if (probe.w > img.width() || probe.h > img.height()) break;
        const int step =
            params.step > 0 ? params.step : std::max(1, static_cast<int>(std::lround(scale)));
        for (int y = 0; y + probe.h <= img.height(); y += step) {
            for (int x = 0; x + probe.w <= img.width(); x += step) {
                if (run_cascade(model, tables, {x, y}, scale).accepted) {
                    hits.push_back({Rect{x, y, probe.w, probe.h}, scale, 1});
                }
            }
        }
    }
    return hits;
}

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<DetectionBox> group_detections(std::span<const DetectionBox> raw,
                                           const DetectParams& params) {
    DisjointSets sets(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (std::size_t j = i + 1; j < raw.size(); ++j) {
            if (imaging::iou(raw[i].rect, raw[j].rect) >= params.group_iou) sets.unite(i, j);
        }
    }
    struct Accum {
        double x = 0, y = 0, w = 0, h = 0, scale = 0;
        int right = 0, bottom = 0;
        int count = 0;
    };
    std::vector<Accum> groups(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto& g = groups[sets.find(i)];
        const auto& r = raw[i].rect;
        g.x += r.x;
        g.y += r.y;
        g.w += r.w;
        g.h += r.h;
        g.right = std::max(g.right, r.x + r.w);
        g.bottom = std::max(g.bottom, r.y + r.h);
        g.scale += raw[i].scale;
        g.count += 1;
    }
    std::vector<DetectionBox> out;
    for (const auto& g : groups) {
        if (g.count == 0 || g.count < params.min_neighbors) continue;
        const double n = g.count;
        Rect r{static_cast<int>(std::lround(g.x / n)), static_cast<int>(std::lround(g.y / n)),
               static_cast<int>(std::lround(g.w / n)), static_cast<int>(std::lround(g.h / n))};
        // Keep the averaged box inside the members' extent.
        r.w = std::min(r.w, g.right - r.x);
        r.h = std::min(r.h, g.bottom - r.y);
        out.push_back({r, g.scale / n, g.count});
    }
    std::sort(out.begin(), out.end(), [](const DetectionBox& a, const DetectionBox& b) {
        return std::tie(a.rect.y, a.rect.x, a.rect.w, a.rect.h) <
               std::tie(b.rect.y, b.rect.x, b.rect.w, b.rect.h);
    });
    return out;
}

std::vector<GrayImage> collect_false_positives(const CascadeModel& model, const GrayImage& frame,
                                               std::span<const Rect> exclude, double max_iou,
                                               std::size_t limit, const DetectParams& params) {
    std::vector<Rect> candidates;
    for (const auto& hit : detect_raw(model, frame, params)) {
        bool overlaps = false;
        for (const auto& r : exclude) overlaps = overlaps || imaging::iou(hit.rect, r) >= max_iou;
        if (!overlaps) candidates.push_back(hit.rect);
    }
    // Evenly spaced subset so every scale and region is represented.
    std::vector<GrayImage> out;
    const auto base = model.base_window();
    const double stride =
        candidates.size() > limit ? static_cast<double>(candidates.size()) / static_cast<double>(limit) : 1.0;
    for (double pos = 0; out.size() < limit && pos < static_cast<double>(candidates.size()); pos += stride) {
        auto window = imaging::crop(frame, candidates[static_cast<std::size_t>(pos)]);
        out.push_back(window.width() == base.w && window.height() == base.h
                          ? std::move(window)
                          : imaging::resize_bilinear(window, base.w, base.h));
    }
    return out;
}

std::vector<DetectionBox> detect(const CascadeModel& model, const GrayImage& img,
                                 const DetectParams& params) {
    const auto raw = detect_raw(model, img, params);
    return group_detections(raw, params);
}

}  // namespace pibase::detector
