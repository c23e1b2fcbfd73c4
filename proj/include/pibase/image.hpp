#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pibase::imaging {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] long long area() const { return static_cast<long long>(w) * h; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Intersection-over-union of two rectangles; 0 when either is empty.
double iou(const Rect& a, const Rect& b);

/// 8-bit luminance raster, row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 0);
    GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] bool empty() const { return pixels_.empty(); }

    [[nodiscard]] std::uint8_t at(int x, int y) const {
        return pixels_[static_cast<std::size_t>(y) * width_ + x];
    }
    std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    [[nodiscard]] std::span<const std::uint8_t> pixels() const { return pixels_; }
    [[nodiscard]] std::span<std::uint8_t> pixels() { return pixels_; }

    [[nodiscard]] bool contains(const Rect& r) const;

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Zero-bordered (width+1) x (height+1) prefix-sum table. Entry (x, y) holds
/// the sum over [0, x) x [0, y) of the source values.
class IntegralImage {
public:
    IntegralImage() = default;

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] std::int64_t at(int x, int y) const {
        return table_[static_cast<std::size_t>(y) * (width_ + 1) + x];
    }

private:
    friend IntegralImage integral(const GrayImage&);
    friend IntegralImage squared_integral(const GrayImage&);

    IntegralImage(int width, int height, std::vector<std::int64_t> table)
        : width_(width), height_(height), table_(std::move(table)) {}

    int width_ = 0;
    int height_ = 0;
    std::vector<std::int64_t> table_;
};

IntegralImage integral(const GrayImage& img);
/// Same layout as integral() but over squared pixel values; used for
/// window variance.
IntegralImage squared_integral(const GrayImage& img);

/// Exact sum over r with four lookups. Throws BoundsError when r is empty or
/// leaves the table.
std::int64_t rect_sum(const IntegralImage& ii, const Rect& r);

/// Binary PGM (P5). Comments are accepted anywhere in the header.
GrayImage load_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_pgm(const GrayImage& img);
GrayImage read_pgm_file(const std::filesystem::path& path);
void write_pgm_file(const std::filesystem::path& path, const GrayImage& img);

/// Interleaved 8-bit RGB to luma with BT.601 weights, rounded half up.
GrayImage to_gray(std::span<const std::uint8_t> rgb, int width, int height);

GrayImage crop(const GrayImage& img, const Rect& r);
/// Copies src into dst with its top-left at (x, y); pixels falling outside
/// dst are dropped.
void paste(GrayImage& dst, const GrayImage& src, int x, int y);
GrayImage resize_nearest(const GrayImage& img, int width, int height);
GrayImage resize_bilinear(const GrayImage& img, int width, int height);

}  // namespace pibase::imaging
