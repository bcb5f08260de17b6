#include "rotstar/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rotstar/error.hpp"

namespace rotstar {

namespace {

bool odd(int v) { return (v & 1) != 0; }

}  // namespace

std::string to_string(PatternKind kind) {
    switch (kind) {
        case PatternKind::checkerboard: return "checkerboard";
        case PatternKind::star: return "star";
        case PatternKind::rotating_star: return "rotating_star";
        case PatternKind::phase_shift: return "phase_shift";
    }
    return "unknown";
}

PatternKind pattern_kind_from_string(const std::string& name) {
    if (name == "checkerboard") return PatternKind::checkerboard;
    if (name == "star") return PatternKind::star;
    if (name == "rotating_star") return PatternKind::rotating_star;
    if (name == "phase_shift") return PatternKind::phase_shift;
    throw ConfigError("kind: unknown pattern kind '" + name + "'");
}

double PatternSpec::rotation_step() const {
    return std::numbers::pi / (2.0 * n_frames);
}

void PatternSpec::validate() const {
    if (grid_rows < 2 || grid_cols < 2) {
        throw ConfigError("grid_rows/grid_cols: need at least 2x2 cells");
    }
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw ConfigError("cell_size: must be positive");
    }
    const double w = effective_stripe_width();
    if (!(w >= 0.0) || !(w < cell_size / 2.0)) {
        throw ConfigError("stripe_width: must satisfy 0 <= stripe_width < cell_size / 2");
    }
    switch (kind) {
        case PatternKind::checkerboard:
            if (n_frames < 1) throw ConfigError("n_frames: must be >= 1");
            break;
        case PatternKind::star:
            if (star_segments < 4 || odd(star_segments)) {
                throw ConfigError("star_segments: must be even and >= 4");
            }
            if (n_frames < 1) throw ConfigError("n_frames: must be >= 1");
            break;
        case PatternKind::rotating_star:
            if (n_frames < 1) throw ConfigError("n_frames: must be >= 1");
            break;
        case PatternKind::phase_shift:
            if (n_frames != 8) throw ConfigError("n_frames: phase_shift sequences have exactly 8 frames");
            if (!(phase_period > 0.0)) throw ConfigError("phase_period: must be positive");
            break;
    }
}

PatternFunction::PatternFunction(PatternSpec spec)
    : spec_(std::move(spec)) {
    spec_.validate();
    stripe_ = spec_.effective_stripe_width();
    for (int k = 0; k < spec_.n_frames; ++k) {
        const double a = -k * spec_.rotation_step();
        frame_rotation_.emplace_back(std::cos(a), std::sin(a));
    }
}

PatternFunction make_pattern(const PatternSpec& spec) { return PatternFunction(spec); }

double PatternFunction::checkerboard(double u, double v) const {
    const int col = static_cast<int>(std::floor(u / spec_.cell_size));
    const int row = static_cast<int>(std::floor(v / spec_.cell_size));
    return odd(row + col) ? 1.0 : 0.0;
}

// Element layout shared by star and rotating_star.
double PatternFunction::element_value(double u, double v, int frame) const {
    const double cell = spec_.cell_size;
    const int j = std::clamp(static_cast<int>(std::lround(u / cell)) - 1, 0, spec_.grid_cols - 2);
    const int i = std::clamp(static_cast<int>(std::lround(v / cell)) - 1, 0, spec_.grid_rows - 2);
    const double du = u - (j + 1) * cell;
    const double dv = v - (i + 1) * cell;
    const double half = cell / 2.0;
    if (std::abs(du) > half || std::abs(dv) > half) {
        return 0.0;  // margin outside the outermost elements
    }

    if (spec_.kind == PatternKind::star) {
        const double seg = 2.0 * std::numbers::pi / spec_.star_segments;
        double ang = std::atan2(dv, du);
        if (ang < 0.0) ang += 2.0 * std::numbers::pi;
        const int s = std::min(static_cast<int>(ang / seg), spec_.star_segments - 1);
        return odd(s + i + j) ? 1.0 : 0.0;
    }

    if (std::max(std::abs(du), std::abs(dv)) > half - stripe_) {
        return odd(frame) ? 1.0 : 0.0;
    }
    const double c = frame_rotation_[static_cast<std::size_t>(frame)].x();
    const double s = frame_rotation_[static_cast<std::size_t>(frame)].y();
    const double ru = c * du - s * dv;
    const double rv = s * du + c * dv;
    const int row = i + (rv > 0.0 ? 1 : 0);
    const int col = j + (ru > 0.0 ? 1 : 0);
    return odd(row + col) ? 1.0 : 0.0;
}

double PatternFunction::operator()(double u, double v, int frame) const {
    if (frame < 0 || frame >= spec_.n_frames) {
        throw RangeError("frame " + std::to_string(frame) + " outside sequence of " + std::to_string(spec_.n_frames) +
                         " frames");
    }
    if (u < 0.0 || v < 0.0 || u >= spec_.board_width() || v >= spec_.board_height()) {
        return 0.0;
    }
    switch (spec_.kind) {
        case PatternKind::checkerboard:
            return checkerboard(u, v);
        case PatternKind::star:
        case PatternKind::rotating_star:
            return element_value(u, v, frame);
        case PatternKind::phase_shift: {
            const double shift = (frame % 4) * std::numbers::pi / 2.0;
            const double coord = frame < 4 ? u : v;
            return 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * coord / spec_.phase_period + shift);
        }
    }
    return 0.0;
}

ImageF rasterize(const PatternFunction& pattern, int frame_index, double pixels_per_unit, int supersample) {
    if (!(pixels_per_unit > 0.0)) throw ConfigError("pixels_per_unit: must be positive");
    if (supersample < 1) throw ConfigError("supersample: must be >= 1");
    if (frame_index < 0 || frame_index >= pattern.n_frames()) {
        throw RangeError("frame_index " + std::to_string(frame_index) + " outside sequence of " +
                         std::to_string(pattern.n_frames()) + " frames");
    }
    const auto& spec = pattern.spec();
    const int w = static_cast<int>(std::ceil(spec.board_width() * pixels_per_unit - 1e-9));
    const int h = static_cast<int>(std::ceil(spec.board_height() * pixels_per_unit - 1e-9));
    ImageF out(w, h);
    const double inv = 1.0 / (pixels_per_unit * supersample);
    const double norm = 1.0 / (static_cast<double>(supersample) * supersample);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < supersample; ++sy) {
                const double v = (y * supersample + sy + 0.5) * inv;
                for (int sx = 0; sx < supersample; ++sx) {
                    const double u = (x * supersample + sx + 0.5) * inv;
                    acc += pattern(u, v, frame_index);
                }
            }
            out.at(x, y) = acc * norm;
        }
    }
    return out;
}

std::vector<LatticeCorner> corner_world_coords(const PatternSpec& spec) {
    std::vector<LatticeCorner> corners;
    corners.reserve(static_cast<std::size_t>(spec.element_rows()) * spec.element_cols());
    for (int i = 0; i + 1 < spec.grid_rows; ++i) {
        for (int j = 0; j + 1 < spec.grid_cols; ++j) {
            corners.push_back({i, j, (j + 1) * spec.cell_size, (i + 1) * spec.cell_size});
        }
    }
    return corners;
}

}  // namespace rotstar
