#include <cmath>
#include <limits>

#include "pibase/recognizer.hpp"

namespace pibase::recognizer {

LbpImage::LbpImage(int width, int height, std::vector<std::uint8_t> codes)
    : width_(width), height_(height), codes_(std::move(codes)) {
    if (width < 1 || height < 1 || codes_.size() != static_cast<std::size_t>(width) * height) {
        throw SizeError("LBP image dimensions do not match code count");
    }
}

std::uint8_t lbp_code(const GrayImage& img, int x, int y) {
    if (x < 1 || y < 1 || x > img.width() - 2 || y > img.height() - 2) {
        throw BoundsError("LBP code requested for a border pixel");
    }
    const auto c = img.at(x, y);
    // Clockwise from top-left: TL, T, TR, R, BR, B, BL, L.
    const int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
    const int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    unsigned code = 0;
    for (int k = 0; k < 8; ++k) {
        code = (code << 1) | (img.at(x + dx[k], y + dy[k]) >= c ? 1u : 0u);
    }
    return static_cast<std::uint8_t>(code);
}

LbpImage lbp_image(const GrayImage& img) {
    if (img.width() < 3 || img.height() < 3) throw SizeError("LBP needs at least a 3x3 image");
    const int w = img.width() - 2;
    const int h = img.height() - 2;
    std::vector<std::uint8_t> codes(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) codes[static_cast<std::size_t>(y) * w + x] = lbp_code(img, x + 1, y + 1);
    }
    return {w, h, std::move(codes)};
}

FeatureVector grid_histograms(const LbpImage& lbp, GridSize grid) {
    if (grid.x < 1 || grid.y < 1 || grid.x > lbp.width() || grid.y > lbp.height()) {
        throw SizeError("grid larger than the LBP image");
    }
    const int cell_w = lbp.width() / grid.x;
    const int cell_h = lbp.height() / grid.y;
    FeatureVector out(static_cast<std::size_t>(grid.x) * grid.y * kBins, 0.0);
    for (int gy = 0; gy < grid.y; ++gy) {
        const int y0 = gy * cell_h;
        const int y1 = gy == grid.y - 1 ? lbp.height() : y0 + cell_h;
        for (int gx = 0; gx < grid.x; ++gx) {
            const int x0 = gx * cell_w;
            const int x1 = gx == grid.x - 1 ? lbp.width() : x0 + cell_w;
            double* hist = out.data() + (static_cast<std::size_t>(gy) * grid.x + gx) * kBins;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) hist[lbp.at(x, y)] += 1.0;
            }
            const double count = static_cast<double>(x1 - x0) * (y1 - y0);
            for (int b = 0; b < kBins; ++b) hist[b] /= count;
        }
    }
    return out;
}

double hist_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    if (a.size() != b.size()) throw SizeError("histogram length mismatch");
    double total = 0.0;
    if (metric == Metric::ChiSquare) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double s = a[i] + b[i];
            if (s > 0) {
                const double d = a[i] - b[i];
                total += d * d / s;
            }
        }
        return total;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        total += d * d;
    }
    return std::sqrt(total);
}

RecognizerModel::RecognizerModel(GridSize grid, FaceSize face_size, std::map<int, std::string> labels,
                                 std::vector<ModelEntry> entries)
    : grid_(grid), face_size_(face_size), labels_(std::move(labels)), entries_(std::move(entries)) {
    if (grid_.x < 1 || grid_.y < 1) throw FormatError("recognizer grid must be positive");
    if (face_size_.w < 3 || face_size_.h < 3) throw FormatError("recognizer face size must be at least 3x3");
    if (grid_.x > face_size_.w - 2 || grid_.y > face_size_.h - 2) {
        throw FormatError("recognizer grid larger than the LBP image of the face size");
    }
    const std::size_t length = static_cast<std::size_t>(grid_.x) * grid_.y * kBins;
    for (const auto& e : entries_) {
        if (e.hist.size() != length) {
            throw FormatError("entry histogram length " + std::to_string(e.hist.size()) +
                              " inconsistent with grid (expected " + std::to_string(length) + ")");
        }
        for (double v : e.hist) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw FormatError("negative or non-finite histogram value");
        }
        if (!labels_.contains(e.label)) {
            throw FormatError("label " + std::to_string(e.label) + " missing from the label map");
        }
    }
}

int RecognizerModel::label_of(std::string_view name) const {
    for (const auto& [id, n] : labels_) {
        if (n == name) return id;
    }
    return kUnknown;
}

std::string RecognizerModel::name_of(int label) const {
    const auto it = labels_.find(label);
    return it == labels_.end() ? std::string() : it->second;
}

FeatureVector RecognizerModel::describe(const GrayImage& face) const {
    const auto& sized = (face.width() == face_size_.w && face.height() == face_size_.h)
                            ? face
                            : imaging::resize_bilinear(face, face_size_.w, face_size_.h);
    return grid_histograms(lbp_image(sized), grid_);
}

namespace {

void append_samples(std::map<int, std::string>& labels, std::vector<ModelEntry>& entries,
                    const RecognizerModel& shape, std::span<const LabeledFace> samples) {
    for (const auto& s : samples) {
        if (s.name.empty()) throw ArgumentError("sample without a person name");
        int label = kUnknown;
        for (const auto& [id, n] : labels) {
            if (n == s.name) label = id;
        }
        if (label == kUnknown) {
            label = labels.empty() ? 0 : labels.rbegin()->first + 1;
            labels.emplace(label, s.name);
        }
        entries.push_back({label, shape.describe(s.face)});
    }
}

}  // namespace

RecognizerModel train(std::span<const LabeledFace> samples, GridSize grid, FaceSize face_size) {
    if (samples.empty()) throw ArgumentError("train needs at least one sample");
    const RecognizerModel shape(grid, face_size, {}, {});
    std::map<int, std::string> labels;
    std::vector<ModelEntry> entries;
    append_samples(labels, entries, shape, samples);
    return {grid, face_size, std::move(labels), std::move(entries)};
}

RecognizerModel retrain(const RecognizerModel& base, std::span<const LabeledFace> samples) {
    std::map<int, std::string> labels = base.labels();
    std::vector<ModelEntry> entries;
    for (const auto& e : base.entries()) {
        const auto& name = base.name_of(e.label);
        bool replaced = false;
        for (const auto& s : samples) replaced = replaced || s.name == name;
        if (!replaced) entries.push_back(e);
    }
    append_samples(labels, entries, base, samples);
    return {base.grid(), base.face_size(), std::move(labels), std::move(entries)};
}

RecognitionResult predict_vector(const RecognizerModel& model, std::span<const double> hist,
                                 double threshold, Metric metric) {
    if (model.empty()) throw StateError("predict on an empty recognizer model");
    if (!(threshold >= 0.0)) throw ArgumentError("recognition threshold must be non-negative");
    RecognitionResult best;
    best.confidence = std::numeric_limits<double>::infinity();
    const auto& entries = model.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double d = hist_distance(entries[i].hist, hist, metric);
        if (d < best.confidence) {
            best.confidence = d;
            best.entry = i;
        }
    }
    best.label = best.confidence <= threshold ? entries[best.entry].label : kUnknown;
    return best;
}

RecognitionResult predict(const RecognizerModel& model, const GrayImage& face, double threshold,
                          Metric metric) {
    if (model.empty()) throw StateError("predict on an empty recognizer model");
    return predict_vector(model, model.describe(face), threshold, metric);
}

}  // namespace pibase::recognizer
