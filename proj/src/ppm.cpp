#include "captnet/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "captnet/checkpoint.hpp"

namespace captnet {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        std::size_t value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            ++pos_;
            if (++digits > 9) {
                throw PpmError(std::string("ppm: ") + what + " too large");
            }
        }
        if (digits == 0) {
            throw PpmError(std::string("ppm: malformed header, expected ") + what);
        }
        return value;
    }

    std::size_t& pos() { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_ppm(const Image& image) {
    const std::string header = "P6\n" + std::to_string(image.width) + " " +
                               std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.data.size());
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                out.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
            }
        }
    }
    return out;
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw PpmError("ppm: only binary P6 images are supported");
    }
    HeaderReader r(bytes);
    r.pos() = 2;
    const std::size_t width = r.number("width");
    const std::size_t height = r.number("height");
    const std::size_t maxval = r.number("maxval");
    if (width == 0 || height == 0) {
        throw PpmError("ppm: zero image dimension");
    }
    if (maxval != 255) {
        throw PpmError("ppm: maxval must be 255, got " + std::to_string(maxval));
    }
    if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()])) {
        throw PpmError("ppm: malformed header, missing separator before pixel data");
    }
    ++r.pos();
    const std::size_t expected = width * height * Image::kChannels;
    const std::size_t available = bytes.size() - r.pos();
    if (available < expected) {
        throw PpmError("ppm: truncated pixel data (" + std::to_string(available) + " of " +
                       std::to_string(expected) + " bytes)");
    }
    if (available > expected) {
        throw PpmError("ppm: size mismatch, " + std::to_string(available - expected) +
                       " unexpected trailing bytes");
    }
    Image img(height, width);
    const std::uint8_t* p = bytes.data() + r.pos();
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                img.at(c, y, x) = static_cast<double>(*p++) / 255.0;
            }
        }
    }
    return img;
}

void write_ppm(const std::string& path, const Image& image) {
    write_file_bytes(path, encode_ppm(image));
}

Image read_ppm(const std::string& path) { return decode_ppm(read_file_bytes(path)); }

} // namespace captnet
