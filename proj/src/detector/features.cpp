#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "pibase/detector.hpp"

namespace pibase::detector {

namespace {

struct Layout {
    FeatureKind kind;
    int cells_x;
    int cells_y;
    // Row-major cell weights.
    std::array<int, 4> weights;
};

constexpr std::array<Layout, 5> kLayouts{{
    {FeatureKind::TwoRectHorizontal, 2, 1, {1, -1, 0, 0}},
    {FeatureKind::TwoRectVertical, 1, 2, {1, -1, 0, 0}},
    {FeatureKind::ThreeRectHorizontal, 3, 1, {1, -2, 1, 0}},
    {FeatureKind::ThreeRectVertical, 1, 3, {1, -2, 1, 0}},
    {FeatureKind::FourRectChecker, 2, 2, {1, -1, -1, 1}},
}};

constexpr std::array<std::string_view, 5> kKindNames{
    "two-rect-horizontal", "two-rect-vertical", "three-rect-horizontal", "three-rect-vertical",
    "four-rect-checker"};

}  // namespace

std::string_view kind_name(FeatureKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<FeatureKind> parse_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<FeatureKind>(i);
    }
    return std::nullopt;
}

std::vector<HaarFeature> generate_features(int base_w, int base_h) {
    if (base_w < 4 || base_h < 4) throw ArgumentError("base window must be at least 4x4");
    std::vector<HaarFeature> out;
    for (const auto& layout : kLayouts) {
        for (int ch = 1; ch * layout.cells_y <= base_h; ++ch) {
            for (int cw = 1; cw * layout.cells_x <= base_w; ++cw) {
                const int fw = cw * layout.cells_x;
                const int fh = ch * layout.cells_y;
                for (int y = 0; y + fh <= base_h; ++y) {
                    for (int x = 0; x + fw <= base_w; ++x) {
                        HaarFeature f{layout.kind, {}};
                        for (int cy = 0; cy < layout.cells_y; ++cy) {
                            for (int cx = 0; cx < layout.cells_x; ++cx) {
                                f.rects.push_back(
                                    {Rect{x + cx * cw, y + cy * ch, cw, ch},
                                     layout.weights[static_cast<std::size_t>(cy * layout.cells_x + cx)]});
                            }
                        }
                        out.push_back(std::move(f));
                    }
                }
            }
        }
    }
    return out;
}

std::vector<HaarFeature> sample_pool(std::span<const HaarFeature> all, std::size_t count,
                                     std::uint64_t seed) {
    if (count >= all.size()) return {all.begin(), all.end()};
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    // Keep enumeration order so index tie-breaks follow the canonical order.
    std::sort(idx.begin(), idx.end());
    std::vector<HaarFeature> out;
    out.reserve(count);
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

Rect scale_rect(const Rect& r, Point origin, double scale) {
    if (scale == 1.0) return {origin.x + r.x, origin.y + r.y, r.w, r.h};
    const auto offset = [scale](int v) { return static_cast<int>(std::floor(v * scale + 0.5)); };
    const auto extent = [scale](int v) {
        return std::max(1, static_cast<int>(std::floor(v * scale + 1e-9)));
    };
    return {origin.x + offset(r.x), origin.y + offset(r.y), extent(r.w), extent(r.h)};
}

double eval_feature(const HaarFeature& f, const IntegralImage& ii, Point origin, double scale,
                    double inv_norm) {
    std::int64_t total = 0;
    for (const auto& wr : f.rects) {
        total += wr.weight * imaging::rect_sum(ii, scale_rect(wr.rect, origin, scale));
    }
    return static_cast<double>(total) * inv_norm;
}

}  // namespace pibase::detector
