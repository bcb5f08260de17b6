#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rotstar/image.hpp"

namespace rotstar {

enum class PatternKind { checkerboard, star, rotating_star, phase_shift };

std::string to_string(PatternKind kind);
PatternKind pattern_kind_from_string(const std::string& name);

// Geometry of a displayed target. grid_rows x grid_cols checkerboard cells give a
// (grid_rows - 1) x (grid_cols - 1) lattice of interior corners. The star and
// rotating-star layouts place one element on each interior corner: the square of
// side cell_size centred on that corner (its Voronoi cell in the corner lattice).
struct PatternSpec {
    PatternKind kind = PatternKind::rotating_star;
    int grid_rows = 10;
    int grid_cols = 10;
    double cell_size = 1.0;
    int star_segments = 16;
    int n_frames = 8;
    // Boundary band inside each element edge. Unset means cell_size / 10.
    std::optional<double> stripe_width;
    double phase_period = 1.0;

    double effective_stripe_width() const { return stripe_width.value_or(cell_size / 10.0); }
    double board_width() const { return grid_cols * cell_size; }
    double board_height() const { return grid_rows * cell_size; }
    int element_rows() const { return grid_rows - 1; }
    int element_cols() const { return grid_cols - 1; }
    // Per-frame rotation of the rotating-star elements, pi / (2 n_frames).
    double rotation_step() const;

    // Throws ConfigError naming the violated invariant.
    void validate() const;
};

// Pure analytic pattern. Values are intensities in [0, 1] over continuous board
// coordinates (u, v); everything outside [0, W] x [0, H] is black.
class PatternFunction {
public:
    explicit PatternFunction(PatternSpec spec);

    const PatternSpec& spec() const { return spec_; }
    int n_frames() const { return spec_.n_frames; }

    double operator()(double u, double v, int frame) const;

private:
    double checkerboard(double u, double v) const;
    double element_value(double u, double v, int frame) const;

    PatternSpec spec_;
    double stripe_ = 0.0;
    std::vector<Point2> frame_rotation_;  // (cos, sin) of -frame * rotation_step
};

PatternFunction make_pattern(const PatternSpec& spec);

// Box-filtered raster of one frame: every pixel is the mean of supersample^2
// stratified point evaluations over its footprint. Pixel x covers board
// u in [x / ppu, (x + 1) / ppu).
ImageF rasterize(const PatternFunction& pattern, int frame_index, double pixels_per_unit, int supersample);

struct LatticeCorner {
    int i = 0;  // row index
    int j = 0;  // column index
    double u = 0.0;
    double v = 0.0;
};

// Interior corners in row-major order; (u, v) = ((j + 1) cell, (i + 1) cell).
std::vector<LatticeCorner> corner_world_coords(const PatternSpec& spec);

}  // namespace rotstar
