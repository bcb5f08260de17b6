#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace rotstar {

using Point2 = Eigen::Vector2d;

// Row-major grid of real intensities. Pixel (x, y) is centred on the continuous
// coordinate (x, y) and covers [x - 0.5, x + 0.5) x [y - 0.5, y + 0.5).
class ImageF {
public:
    ImageF() = default;
    ImageF(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    // Replicate-edge access.
    double clamped(int x, int y) const;

    std::span<double> pixels() { return data_; }
    std::span<const double> pixels() const { return data_; }
    std::span<double> row(int y) { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
    std::span<const double> row(int y) const { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }

    bool same_shape(const ImageF& other) const { return width_ == other.width_ && height_ == other.height_; }

    ImageF crop(int x0, int y0, int w, int h) const;
    double mean() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

// Boolean raster; 1 = foreground.
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, bool fill = false);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }

    bool at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) { data_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    // Out-of-range reads return false.
    bool get(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_ && at(x, y); }

    std::size_t count() const;
    bool operator==(const Mask& other) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Integer pixel rectangle, half-open.
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool contains(int px, int py) const { return px >= x && py >= y && px < x + width && py < y + height; }
};

}  // namespace rotstar
