#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pibase/errors.hpp"
#include "pibase/image.hpp"

namespace pibase::recognizer {

using imaging::GrayImage;

/// 8-bit LBP codes of the interior pixels: (width-2) x (height-2).
class LbpImage {
public:
    LbpImage(int width, int height, std::vector<std::uint8_t> codes);

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] std::uint8_t at(int x, int y) const {
        return codes_[static_cast<std::size_t>(y) * width_ + x];
    }
    [[nodiscard]] std::span<const std::uint8_t> codes() const { return codes_; }

    friend bool operator==(const LbpImage&, const LbpImage&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> codes_;
};

/// Code of interior pixel (x, y). Neighbours are read clockwise from the
/// top-left one, which lands in the most significant bit; a bit is set when
/// the neighbour is >= the centre.
std::uint8_t lbp_code(const GrayImage& img, int x, int y);
LbpImage lbp_image(const GrayImage& img);

struct GridSize {
    int x = 8;
    int y = 8;
    friend bool operator==(const GridSize&, const GridSize&) = default;
};

struct FaceSize {
    int w = 100;
    int h = 100;
    friend bool operator==(const FaceSize&, const FaceSize&) = default;
};

inline constexpr int kBins = 256;

using FeatureVector = std::vector<double>;

/// Row-major concatenation of one normalised 256-bin histogram per cell.
/// The last cell on each axis absorbs the remainder pixels.
FeatureVector grid_histograms(const LbpImage& lbp, GridSize grid);

enum class Metric { ChiSquare, Euclidean };

double hist_distance(std::span<const double> a, std::span<const double> b,
                     Metric metric = Metric::ChiSquare);

inline constexpr int kUnknown = -1;

/// UNKNOWN cut-off on chi-square confidence (sum over all 64 cells of the
/// default grid, so the range is [0, 128]), calibrated on synthetic
/// identities: enrolled faces land at 23-48, strangers at 50 and above.
inline constexpr double kDefaultThreshold = 46.0;

struct LabeledFace {
    std::string name;
    GrayImage face;
};

struct ModelEntry {
    int label = 0;
    FeatureVector hist;
    friend bool operator==(const ModelEntry&, const ModelEntry&) = default;
};

struct RecognitionResult {
    int label = kUnknown;
    double confidence = 0.0;  // best-match distance; lower is better
    std::size_t entry = 0;    // index of the best-matching entry

    [[nodiscard]] bool known() const { return label != kUnknown; }
};

class RecognizerModel {
public:
    /// Validates vector lengths, non-negative entries and label coverage;
    /// throws FormatError on violation.
    RecognizerModel(GridSize grid, FaceSize face_size, std::map<int, std::string> labels,
                    std::vector<ModelEntry> entries);

    [[nodiscard]] GridSize grid() const { return grid_; }
    [[nodiscard]] FaceSize face_size() const { return face_size_; }
    [[nodiscard]] const std::map<int, std::string>& labels() const { return labels_; }
    [[nodiscard]] const std::vector<ModelEntry>& entries() const { return entries_; }
    [[nodiscard]] bool empty() const { return entries_.empty(); }

    /// Label id for a person name, or kUnknown.
    [[nodiscard]] int label_of(std::string_view name) const;
    [[nodiscard]] std::string name_of(int label) const;

    /// Feature vector for a face crop: bilinear resize to face_size, LBP,
    /// grid histograms.
    [[nodiscard]] FeatureVector describe(const GrayImage& face) const;

    friend bool operator==(const RecognizerModel&, const RecognizerModel&) = default;

private:
    GridSize grid_;
    FaceSize face_size_;
    std::map<int, std::string> labels_;
    std::vector<ModelEntry> entries_;
};

/// One entry per sample image. Label ids follow first appearance of names.
RecognizerModel train(std::span<const LabeledFace> samples, GridSize grid = {},
                      FaceSize face_size = {});

/// New model holding the entries of `base` minus those of any person present
/// in `samples`, followed by one entry per sample. Existing names keep their
/// ids; new names get the next free ids in first-appearance order.
RecognizerModel retrain(const RecognizerModel& base, std::span<const LabeledFace> samples);

/// Nearest entry by distance (ties to the lowest index). The label is kept
/// only when the confidence is <= threshold. Throws StateError on an empty
/// model, ArgumentError on a negative threshold.
RecognitionResult predict(const RecognizerModel& model, const GrayImage& face,
                          double threshold = kDefaultThreshold, Metric metric = Metric::ChiSquare);
RecognitionResult predict_vector(const RecognizerModel& model, std::span<const double> hist,
                                 double threshold = kDefaultThreshold,
                                 Metric metric = Metric::ChiSquare);

nlohmann::json model_to_json(const RecognizerModel& model);
RecognizerModel model_from_json(const nlohmann::json& j);
std::string save_model(const RecognizerModel& model);
RecognizerModel load_model(std::string_view text);
RecognizerModel read_model_file(const std::string& path);
void write_model_file(const std::string& path, const RecognizerModel& model);

}  // namespace pibase::recognizer
