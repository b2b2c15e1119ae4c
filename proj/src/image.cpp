#include "captnet/image.hpp"

#include <algorithm>

namespace captnet {

void clip01(Image& img) {
    for (double& v : img.data) {
        v = std::clamp(v, 0.0, 1.0);
    }
}

Tensor to_batch(const std::vector<const Image*>& images, Precision precision) {
    if (images.empty()) {
        throw ShapeError("to_batch: no images");
    }
    const std::size_t h = images.front()->height, w = images.front()->width;
    std::vector<double> data;
    data.reserve(images.size() * Image::kChannels * h * w);
    for (const Image* img : images) {
        if (img->height != h || img->width != w) {
            throw ShapeError("to_batch: images differ in size");
        }
        data.insert(data.end(), img->data.begin(), img->data.end());
    }
    return Tensor::from_data({images.size(), Image::kChannels, h, w}, std::move(data), precision);
}

Tensor to_batch(const Image& image, Precision precision) {
    return to_batch(std::vector<const Image*>{&image}, precision);
}

Image from_batch(const Tensor& batch, std::size_t index) {
    if (batch.rank() != 4 || batch.dim(1) != Image::kChannels || index >= batch.dim(0)) {
        throw ShapeError("from_batch: bad batch " + shape_str(batch.shape()));
    }
    Image img(batch.dim(2), batch.dim(3));
    const std::size_t n = img.data.size();
    const auto src = batch.data().subspan(index * n, n);
    std::copy(src.begin(), src.end(), img.data.begin());
    return img;
}

} // namespace captnet
