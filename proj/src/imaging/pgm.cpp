#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "pibase/errors.hpp"
#include "pibase/image.hpp"

namespace pibase::imaging {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long long number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
            throw FormatError(std::string("PGM header: expected ") + what);
        }
        long long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (1LL << 31)) throw FormatError(std::string("PGM header: ") + what + " too large");
            ++pos_;
        }
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance() { ++pos_; }
    bool at_space() const { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError("not a binary PGM (missing P5 magic)");
    }
    HeaderReader reader(bytes.subspan(2));
    const auto width = reader.number("width");
    const auto height = reader.number("height");
    const auto maxval = reader.number("maxval");
    if (width < 1 || height < 1) throw FormatError("PGM header: zero dimension");
    if (maxval < 1 || maxval > 255) throw FormatError("PGM maxval must be in [1,255]");
    // Exactly one whitespace byte separates the header from the raster.
    if (!reader.at_space()) throw FormatError("PGM header: missing separator before raster");
    reader.advance();

    const std::size_t offset = 2 + reader.pos();
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - offset < count) {
        throw FormatError("PGM payload truncated: need " + std::to_string(count) + " bytes, have " +
                          std::to_string(bytes.size() - offset));
    }
    std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(offset + count));
    for (auto v : pixels) {
        if (v > maxval) throw FormatError("PGM sample exceeds maxval");
    }
    return {static_cast<int>(width), static_cast<int>(height), std::move(pixels)};
}

std::vector<std::uint8_t> save_pgm(const GrayImage& img) {
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

GrayImage read_pgm_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_pgm(bytes);
}

void write_pgm_file(const std::filesystem::path& path, const GrayImage& img) {
    const auto bytes = save_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace pibase::imaging
