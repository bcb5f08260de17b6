#include "rotstar/image.hpp"

#include <algorithm>
#include <numeric>

#include "rotstar/error.hpp"

namespace rotstar {

ImageF::ImageF(int width, int height, double fill)
    : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw ShapeError("image dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

double ImageF::clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

ImageF ImageF::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width_ || y0 + h > height_) {
        throw ShapeError("crop rectangle outside image");
    }
    ImageF out(w, h);
    for (int y = 0; y < h; ++y) {
        auto src = row(y0 + y).subspan(static_cast<std::size_t>(x0), static_cast<std::size_t>(w));
        std::copy(src.begin(), src.end(), out.row(y).begin());
    }
    return out;
}

double ImageF::mean() const {
    if (data_.empty()) return 0.0;
    return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

Mask::Mask(int width, int height, bool fill)
    : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw ShapeError("mask dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

}  // namespace rotstar
