#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "rotstar/error.hpp"
#include "rotstar/refine.hpp"

namespace rotstar {

double wrap_phase(double phi) {
    constexpr double pi = std::numbers::pi;
    double w = std::remainder(phi, 2.0 * pi);  // [-pi, pi]
    if (w <= -pi) w += 2.0 * pi;
    return w;
}

WrappedPhase decode_phase(std::span<const ImageF> frames4) {
    if (frames4.size() != 4) throw InputError("decode_phase: exactly 4 frames required");
    for (const ImageF& f : frames4) {
        if (!f.same_shape(frames4[0])) throw ShapeError("decode_phase: frame dimensions differ");
    }
    const int w = frames4[0].width();
    const int h = frames4[0].height();
    WrappedPhase out{ImageF(w, h), ImageF(w, h)};
    auto i0 = frames4[0].pixels();
    auto i1 = frames4[1].pixels();
    auto i2 = frames4[2].pixels();
    auto i3 = frames4[3].pixels();
    auto ph = out.phase.pixels();
    auto mod = out.modulation.pixels();
    for (std::size_t k = 0; k < ph.size(); ++k) {
        const double s = i3[k] - i1[k];
        const double c = i0[k] - i2[k];
        double phi = std::atan2(s, c);
        if (phi <= -std::numbers::pi) phi = std::numbers::pi;  // atan2(-0, -c) = -pi
        ph[k] = phi;
        mod[k] = 0.5 * std::sqrt(s * s + c * c);
    }
    return out;
}

PhaseMaps decode_phase_maps(std::span<const ImageF> frames8) {
    if (frames8.size() != 8) throw InputError("decode_phase_maps: exactly 8 frames required");
    WrappedPhase px = decode_phase(frames8.subspan(0, 4));
    WrappedPhase py = decode_phase(frames8.subspan(4, 4));
    PhaseMaps maps{std::move(px.phase), std::move(py.phase), std::move(px.modulation)};
    auto m = maps.modulation.pixels();
    auto my = py.modulation.pixels();
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::min(m[k], my[k]);
    return maps;
}

CornerEstimate refine_phase(const PhaseMaps& maps, const Point2& target_phase, const Point2& q0, int half_window) {
    if (half_window < 1) throw ConfigError("half_window: must be >= 1");
    if (!maps.phase_x.same_shape(maps.phase_y)) throw ShapeError("refine_phase: phase maps differ in size");
    CornerEstimate est{q0, RefineStatus::converged, 1, 0.0, RefineMethod::phase};
    const int cx = static_cast<int>(std::lround(q0.x()));
    const int cy = static_cast<int>(std::lround(q0.y()));
    const int hw = half_window;
    if (cx - hw < 0 || cy - hw < 0 || cx + hw >= maps.phase_x.width() || cy + hw >= maps.phase_x.height()) {
        est.status = RefineStatus::out_of_bounds;
        return est;
    }

    const int side = 2 * hw + 1;
    Eigen::MatrixXd design(side * side, 3);
    Eigen::VectorXd zx(side * side);
    Eigen::VectorXd zy(side * side);
    const double refx = maps.phase_x.at(cx, cy);
    const double refy = maps.phase_y.at(cx, cy);
    int row = 0;
    for (int dy = -hw; dy <= hw; ++dy) {
        for (int dx = -hw; dx <= hw; ++dx, ++row) {
            design.row(row) << 1.0, dx, dy;
            zx(row) = refx + wrap_phase(maps.phase_x.at(cx + dx, cy + dy) - refx);
            zy(row) = refy + wrap_phase(maps.phase_y.at(cx + dx, cy + dy) - refy);
        }
    }
    const Eigen::Matrix3d ata = design.transpose() * design;
    const Eigen::Vector3d px = ata.ldlt().solve(design.transpose() * zx);
    const Eigen::Vector3d py = ata.ldlt().solve(design.transpose() * zy);
    est.final_cost = (design * px - zx).squaredNorm() + (design * py - zy).squaredNorm();

    Eigen::Matrix2d a;
    a << px(1), px(2), py(1), py(2);
    const Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(1);
    if (!(smin > 0.0) || smax / smin > 1e6) {
        est.status = RefineStatus::singular;
        return est;
    }
    const double tx = refx + wrap_phase(target_phase.x() - refx);
    const double ty = refy + wrap_phase(target_phase.y() - refy);
    const Eigen::Vector2d offset = a.inverse() * Eigen::Vector2d(tx - px(0), ty - py(0));
    est.position = Point2(cx + offset.x(), cy + offset.y());
    if (std::abs(offset.x()) > hw || std::abs(offset.y()) > hw) est.status = RefineStatus::extrapolated;
    return est;
}

}  // namespace rotstar
