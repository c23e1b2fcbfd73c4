#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pibase/errors.hpp"
#include "pibase/image.hpp"

namespace pibase::detector {

using imaging::GrayImage;
using imaging::IntegralImage;
using imaging::Rect;

enum class FeatureKind {
    TwoRectHorizontal,    // left | right
    TwoRectVertical,      // top / bottom
    ThreeRectHorizontal,  // left | centre | right
    ThreeRectVertical,    // top / centre / bottom
    FourRectChecker,      // 2x2 diagonal pairs
};

std::string_view kind_name(FeatureKind kind);
std::optional<FeatureKind> parse_kind(std::string_view name);

struct WeightedRect {
    Rect rect;
    int weight = 0;
    friend bool operator==(const WeightedRect&, const WeightedRect&) = default;
};

/// Signed rectangle sum in base-window coordinates. The brighter-expected
/// region is listed first with a positive weight; sub-rectangles of one
/// feature have equal area and weights that sum to zero, so every feature
/// reads 0 on a constant window.
struct HaarFeature {
    FeatureKind kind = FeatureKind::TwoRectHorizontal;
    std::vector<WeightedRect> rects;
    friend bool operator==(const HaarFeature&, const HaarFeature&) = default;
};

/// Exhaustive enumeration of all five kinds at every position and size in a
/// base_w x base_h window. Order: kind, then cell height, cell width, y, x.
std::vector<HaarFeature> generate_features(int base_w, int base_h);

struct Point {
    int x = 0;
    int y = 0;
};

/// Rect scaled about the window origin: offsets are rounded, extents
/// floored. Extents depend only on the source extent, so equal-area
/// partitions stay equal-area, and a rect inside the base window stays
/// inside the round(base * scale) scaled window.
Rect scale_rect(const Rect& r, Point origin, double scale);

/// Sum of weight * rect_sum over the scaled rectangles, times inv_norm.
/// Throws BoundsError when a scaled rect leaves the image.
double eval_feature(const HaarFeature& f, const IntegralImage& ii, Point origin, double scale,
                    double inv_norm);

struct WeakClassifier {
    HaarFeature feature;
    double threshold = 0.0;
    int polarity = 1;
    double alpha = 0.0;

    /// h(x) = 1 iff polarity * value < polarity * threshold.
    [[nodiscard]] bool vote(double value) const { return polarity * value < polarity * threshold; }
    friend bool operator==(const WeakClassifier&, const WeakClassifier&) = default;
};

struct CascadeStage {
    std::vector<WeakClassifier> weak;
    double threshold = 0.0;
    friend bool operator==(const CascadeStage&, const CascadeStage&) = default;
};

struct WindowSize {
    int w = 24;
    int h = 24;
    friend bool operator==(const WindowSize&, const WindowSize&) = default;
};

class CascadeModel {
public:
    /// Throws ArgumentError on an empty stage list or an empty stage.
    CascadeModel(WindowSize base, std::vector<CascadeStage> stages,
                 nlohmann::json metadata = nlohmann::json::object());

    [[nodiscard]] WindowSize base_window() const { return base_; }
    [[nodiscard]] const std::vector<CascadeStage>& stages() const { return stages_; }
    [[nodiscard]] const nlohmann::json& metadata() const { return metadata_; }
    nlohmann::json& metadata() { return metadata_; }

    /// Cascade restricted to its first `count` stages.
    [[nodiscard]] CascadeModel prefix(std::size_t count) const;
    /// True when weak-classifier counts never decrease along the cascade.
    [[nodiscard]] bool complexity_ordered() const;

    friend bool operator==(const CascadeModel&, const CascadeModel&) = default;

private:
    WindowSize base_;
    std::vector<CascadeStage> stages_;
    nlohmann::json metadata_;
};

/// Sum and squared-sum tables of one image, shared by every window scan.
class WindowTables {
public:
    explicit WindowTables(const GrayImage& img)
        : sum_(imaging::integral(img)), squares_(imaging::squared_integral(img)) {}
    [[nodiscard]] const IntegralImage& sum() const { return sum_; }
    [[nodiscard]] const IntegralImage& squares() const { return squares_; }
    [[nodiscard]] int width() const { return sum_.width(); }
    [[nodiscard]] int height() const { return sum_.height(); }

    /// Population variance of the pixels in r.
    [[nodiscard]] double variance(const Rect& r) const;

private:
    IntegralImage sum_;
    IntegralImage squares_;
};

/// Windows whose pixel variance falls below this are rejected before any
/// stage runs.
inline constexpr double kMinWindowVariance = 1.0;

/// Normaliser for a window of the given variance at the given scale: the
/// feature value is divided by the window deviation and the area growth.
double window_inv_norm(double variance, double scale);

struct CascadeVerdict {
    bool accepted = false;
    int rejected_stage = -1;  // -1 when accepted
    int stages_evaluated = 0;
    bool low_variance = false;
};

double stage_score(const CascadeStage& stage, const IntegralImage& ii, Point origin, double scale,
                   double inv_norm);

/// Runs stages in order with early exit. A low-variance window is reported
/// as rejected at stage 0 with zero stages evaluated.
CascadeVerdict run_cascade(const CascadeModel& model, const WindowTables& tables, Point origin,
                           double scale);

struct DetectParams {
    double scale_factor = 1.25;
    int step = 0;  // 0 selects max(1, round(scale)) per scale
    int min_neighbors = 3;
    int min_size = 0;  // 0 selects the base window
    double group_iou = 0.3;
};

struct DetectionBox {
    Rect rect;
    double scale = 1.0;
    int neighbor_count = 0;
    friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

/// Every accepted window over all scales, before grouping.
std::vector<DetectionBox> detect_raw(const CascadeModel& model, const GrayImage& img,
                                     const DetectParams& params = {});
/// Union-find grouping of raw hits (IoU >= params.group_iou), averaged per
/// group, groups smaller than min_neighbors dropped, sorted by (y, x, w, h).
std::vector<DetectionBox> group_detections(std::span<const DetectionBox> raw,
                                           const DetectParams& params);
std::vector<DetectionBox> detect(const CascadeModel& model, const GrayImage& img,
                                 const DetectParams& params = {});

// ---------------------------------------------------------------------------
// Training

struct StageTargets {
    double min_tpr = 0.995;
    double max_fpr = 0.5;
    int max_rounds = 200;
    int min_rounds = 1;
};

/// Per-round AdaBoost bookkeeping.
struct RoundTrace {
    std::size_t feature_index = 0;  // index into the feature pool
    double error = 0.0;             // weighted error of the selected learner
    double alpha = 0.0;
    double weight_sum = 0.0;        // after normalisation, before the update
    double strong_error = 0.0;      // initial-weight error at 0.5*sum(alpha)
    double error_bound = 0.0;       // prod 2*sqrt(e(1-e)) bound on strong_error
    double stage_tpr = 0.0;
    double stage_fpr = 0.0;
};

struct StageResult {
    CascadeStage stage;
    std::vector<RoundTrace> trace;
    double tpr = 0.0;
    double fpr = 0.0;
    bool reached_target = false;
};

/// Vote weight used when a learner separates the training set perfectly.
inline constexpr double kAlphaCap = 30.0;

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::optional<CascadeModel> partial = std::nullopt)
        : Error(what), partial_(std::move(partial)) {}
    [[nodiscard]] const std::optional<CascadeModel>& partial() const { return partial_; }

private:
    std::optional<CascadeModel> partial_;
};

/// One AdaBoost stage over base-window samples (each the size of the base
/// window). Throws TrainingError when no feature beats chance.
StageResult train_stage(std::span<const GrayImage> positives, std::span<const GrayImage> negatives,
                        std::span<const HaarFeature> pool, const StageTargets& targets);

struct CascadeTargets {
    double per_stage_tpr = 0.995;
    double per_stage_fpr = 0.5;
    double overall_fpr = 0.01;
    int max_stages = 20;
    int max_rounds = 200;
    std::size_t min_negatives = 1;  // stop once fewer negatives remain
};

struct StageReport {
    std::size_t weak_count = 0;
    std::size_t negatives_used = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    double cumulative_fpr = 0.0;  // product of stage rates so far
};

struct CascadeResult {
    CascadeModel model;
    std::vector<StageReport> stages;
    double cumulative_fpr = 1.0;  // product of stage rates
    double held_fpr = 1.0;        // fraction of the initial negatives still accepted
};

/// Supplies up to `wanted` fresh negatives that `current` accepts. Used to
/// top the working negative set back up between stages.
using NegativeMiner =
    std::function<std::vector<GrayImage>(const CascadeModel& current, std::size_t wanted)>;

/// Appends stages until the cumulative false-positive rate reaches
/// targets.overall_fpr, the negatives are exhausted, or max_stages. Each
/// stage trains only on negatives the current cascade still accepts. With a
/// miner the working set is refilled to its initial size after every stage
/// and training stops only when fewer than min_negatives are left (or max_stages).
CascadeResult train_cascade(std::span<const GrayImage> positives,
                            std::span<const GrayImage> negatives, std::span<const HaarFeature> pool,
                            const CascadeTargets& targets, const NegativeMiner& miner = {});

/// Accepted windows of `frame` whose IoU with every rect in `exclude` is
/// below max_iou, cropped and resized to the base window; at most `limit`.
std::vector<GrayImage> collect_false_positives(const CascadeModel& model, const GrayImage& frame,
                                               std::span<const Rect> exclude, double max_iou,
                                               std::size_t limit, const DetectParams& params = {});

/// Deterministic subset of the full enumeration, `count` features spread by
/// a seeded shuffle. Returns the whole enumeration when count >= its size.
std::vector<HaarFeature> sample_pool(std::span<const HaarFeature> all, std::size_t count,
                                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json cascade_to_json(const CascadeModel& model);
CascadeModel cascade_from_json(const nlohmann::json& j);
std::string save_cascade(const CascadeModel& model);
CascadeModel load_cascade(std::string_view text);
CascadeModel read_cascade_file(const std::string& path);
void write_cascade_file(const std::string& path, const CascadeModel& model);

}  // namespace pibase::detector
