#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "pibase/image.hpp"

namespace testing {

using pibase::imaging::GrayImage;

inline GrayImage random_image(int w, int h, std::mt19937_64& rng, int lo = 0, int hi = 255) {
    GrayImage img(w, h);
    std::uniform_int_distribution<int> d(lo, hi);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(d(rng));
    return img;
}

// Removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> n{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pibase-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
