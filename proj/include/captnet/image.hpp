#pragma once

#include <cstddef>
#include <vector>

#include "captnet/tensor.hpp"

namespace captnet {

/// Planar RGB image, channel-major [3][H][W], values nominally in [0,1].
struct Image {
    static constexpr std::size_t kChannels = 3;

    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0)
        : height(h), width(w), data(kChannels * h * w, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    std::size_t plane() const { return height * width; }

    bool operator==(const Image&) const = default;
};

void clip01(Image& img);

/// Stacks equally sized images into an [N,3,H,W] tensor.
Tensor to_batch(const std::vector<const Image*>& images, Precision precision = Precision::F32);
Tensor to_batch(const Image& image, Precision precision = Precision::F32);
/// Sample `index` of an [N,3,H,W] tensor.
Image from_batch(const Tensor& batch, std::size_t index = 0);

} // namespace captnet
