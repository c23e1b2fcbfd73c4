#include "pibase/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pibase/errors.hpp"

namespace pibase::imaging {

double iou(const Rect& a, const Rect& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    const double inter = static_cast<double>(x1 - x0) * (y1 - y0);
    const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

GrayImage::GrayImage(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw SizeError("image dimensions must be positive");
    }
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) {
        throw SizeError("image dimensions must be positive");
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * height) {
        throw SizeError("pixel count " + std::to_string(pixels_.size()) + " does not match " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
}

bool GrayImage::contains(const Rect& r) const {
    return r.w >= 1 && r.h >= 1 && r.x >= 0 && r.y >= 0 && r.x + r.w <= width_ &&
           r.y + r.h <= height_;
}

namespace {

template <typename Op>
std::vector<std::int64_t> prefix_table(const GrayImage& img, Op op) {
    const int w = img.width();
    const int h = img.height();
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    std::vector<std::int64_t> table(stride * (static_cast<std::size_t>(h) + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int64_t row = 0;
        for (int x = 0; x < w; ++x) {
            row += op(img.at(x, y));
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    return table;
}

}  // namespace

IntegralImage integral(const GrayImage& img) {
    return {img.width(), img.height(),
            prefix_table(img, [](std::uint8_t v) { return static_cast<std::int64_t>(v); })};
}

IntegralImage squared_integral(const GrayImage& img) {
    return {img.width(), img.height(), prefix_table(img, [](std::uint8_t v) {
                return static_cast<std::int64_t>(v) * v;
            })};
}

std::int64_t rect_sum(const IntegralImage& ii, const Rect& r) {
    if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x + r.w > ii.width() ||
        r.y + r.h > ii.height()) {
        throw BoundsError("rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                          std::to_string(r.w) + "," + std::to_string(r.h) +
                          ") outside integral table");
    }
    return ii.at(r.x + r.w, r.y + r.h) - ii.at(r.x + r.w, r.y) - ii.at(r.x, r.y + r.h) +
           ii.at(r.x, r.y);
}

GrayImage to_gray(std::span<const std::uint8_t> rgb, int width, int height) {
    if (rgb.size() % 3 != 0) {
        throw FormatError("RGB buffer length is not a multiple of 3");
    }
    if (width < 1 || height < 1 || rgb.size() / 3 != static_cast<std::size_t>(width) * height) {
        throw FormatError("RGB buffer does not match image dimensions");
    }
    std::vector<std::uint8_t> out(rgb.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Integer BT.601: round(0.299R + 0.587G + 0.114B), half up.
        const unsigned luma = (299u * rgb[3 * i] + 587u * rgb[3 * i + 1] + 114u * rgb[3 * i + 2] +
                               500u) / 1000u;
        out[i] = static_cast<std::uint8_t>(std::min(luma, 255u));
    }
    return {width, height, std::move(out)};
}

GrayImage crop(const GrayImage& img, const Rect& r) {
    if (!img.contains(r)) {
        throw BoundsError("crop rect outside image");
    }
    GrayImage out(r.w, r.h);
    for (int y = 0; y < r.h; ++y) {
        for (int x = 0; x < r.w; ++x) out.at(x, y) = img.at(r.x + x, r.y + y);
    }
    return out;
}

void paste(GrayImage& dst, const GrayImage& src, int x, int y) {
    for (int sy = 0; sy < src.height(); ++sy) {
        const int dy = y + sy;
        if (dy < 0 || dy >= dst.height()) continue;
        for (int sx = 0; sx < src.width(); ++sx) {
            const int dx = x + sx;
            if (dx < 0 || dx >= dst.width()) continue;
            dst.at(dx, dy) = src.at(sx, sy);
        }
    }
}

GrayImage resize_nearest(const GrayImage& img, int width, int height) {
    GrayImage out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(img.height() - 1,
                                static_cast<int>(static_cast<long long>(y) * img.height() / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(img.width() - 1,
                                    static_cast<int>(static_cast<long long>(x) * img.width() / width));
            out.at(x, y) = img.at(sx, sy);
        }
    }
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
    GrayImage out(width, height);
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    for (int y = 0; y < height; ++y) {
        // Pixel-center alignment, clamped at the borders.
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double tx = fx - x0;
            const double top = img.at(x0, y0) * (1 - tx) + img.at(x1, y0) * tx;
            const double bottom = img.at(x0, y1) * (1 - tx) + img.at(x1, y1) * tx;
            const double v = top * (1 - ty) + bottom * ty;
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

}  // namespace pibase::imaging
