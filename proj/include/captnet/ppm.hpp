#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "captnet/image.hpp"

namespace captnet {

class PpmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary P6 with maxval 255. Values map to bytes by round-half-up of
/// v*255 after clamping to [0,1]; bytes decode as b/255.
std::vector<std::uint8_t> encode_ppm(const Image& image);
Image decode_ppm(std::span<const std::uint8_t> bytes);

void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

} // namespace captnet
