#include <algorithm>
#include <cmath>
#include <limits>

#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

Rect expand_box(const Rect& box, double fraction, int image_w, int image_h) {
    const int grow_w = static_cast<int>(std::lround(box.w * fraction / 2.0));
    const int grow_h = static_cast<int>(std::lround(box.h * fraction / 2.0));
    const int x0 = std::max(0, box.x - grow_w);
    const int y0 = std::max(0, box.y - grow_h);
    const int x1 = std::min(image_w, box.x + box.w + grow_w);
    const int y1 = std::min(image_h, box.y + box.h + grow_h);
    return {x0, y0, std::max(1, x1 - x0), std::max(1, y1 - y0)};
}

GrayImage face_crop(const GrayImage& frame, const Rect& box, double fraction, recognizer::FaceSize size) {
    const auto region = imaging::crop(frame, expand_box(box, fraction, frame.width(), frame.height()));
    return imaging::resize_bilinear(region, size.w, size.h);
}

std::vector<detector::DetectionBox> distinct_faces(std::vector<detector::DetectionBox> boxes, double max_inside) {
    std::vector<detector::DetectionBox> out;
    for (const auto& b : boxes) {
        const bool nested = std::any_of(boxes.begin(), boxes.end(), [&](const auto& o) {
            if (o.rect.area() <= b.rect.area()) return false;
            const int x0 = std::max(b.rect.x, o.rect.x), y0 = std::max(b.rect.y, o.rect.y);
            const int x1 = std::min(b.rect.x + b.rect.w, o.rect.x + o.rect.w);
            const int y1 = std::min(b.rect.y + b.rect.h, o.rect.y + o.rect.h);
            const long long inter = static_cast<long long>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
            return static_cast<double>(inter) >= max_inside * static_cast<double>(b.rect.area());
        });
        if (!nested) out.push_back(b);
    }
    return out;
}

GrayImage enrollment_face(const detector::CascadeModel& cascade, const GrayImage& img,
                          const ProcessParams& params, recognizer::FaceSize size) {
    const auto boxes = detector::detect(cascade, img, params.detect);
    if (boxes.empty()) return imaging::resize_bilinear(img, size.w, size.h);
    const auto largest = std::max_element(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) {
        return a.rect.area() < b.rect.area();
    });
    return face_crop(img, largest->rect, params.crop_expand, size);
}

BurstDecision process_burst(const CaptureBurst& burst, const detector::CascadeModel& cascade,
                            const recognizer::RecognizerModel& model, const ProcessParams& params) {
    BurstDecision decision;
    long long best_area = -1;
    for (std::size_t i = 0; i < burst.frames.size(); ++i) {
        const auto& frame = burst.frames[i].image;
        for (const auto& box : distinct_faces(detector::detect(cascade, frame, params.detect), params.nested_overlap)) {
            FaceObservation obs{i, box, {}, {}};
            if (model.empty()) {
                obs.result.confidence = std::numeric_limits<double>::infinity();
            } else {
                obs.result = recognizer::predict(
                    model, face_crop(frame, box.rect, params.crop_expand, model.face_size()), params.threshold);
                if (obs.result.known()) obs.name = model.name_of(obs.result.label);
            }
            // Strictly larger wins, so ties keep the earliest face.
            if (!obs.result.known() && box.rect.area() > best_area) {
                best_area = box.rect.area();
                decision.intrusion = true;
                decision.frame = i;
                decision.face = box.rect;
                decision.confidence = obs.result.confidence;
            }
            decision.faces.push_back(std::move(obs));
        }
    }
    return decision;
}

}  // namespace pibase::pipeline
