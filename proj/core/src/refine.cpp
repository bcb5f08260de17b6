#include "rotstar/refine.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "rotstar/error.hpp"

namespace rotstar {

namespace {

bool inside(const ImageF& img, double x, double y) {
    return x >= 1.0 && y >= 1.0 && x <= img.width() - 2.0 && y <= img.height() - 2.0;
}

struct Bilinear {
    int x0;
    int y0;
    double fx;
    double fy;
};

Bilinear locate(double x, double y) {
    const double xf = std::floor(x);
    const double yf = std::floor(y);
    return {static_cast<int>(xf), static_cast<int>(yf), x - xf, y - yf};
}

double interp(const ImageF& img, const Bilinear& b) {
    // x0 + 1 may equal width - 1 only when fx == 0; clamp keeps the read in range.
    const int x1 = std::min(b.x0 + 1, img.width() - 1);
    const int y1 = std::min(b.y0 + 1, img.height() - 1);
    const double top = img.at(b.x0, b.y0) * (1.0 - b.fx) + img.at(x1, b.y0) * b.fx;
    const double bot = img.at(b.x0, y1) * (1.0 - b.fx) + img.at(x1, y1) * b.fx;
    return top * (1.0 - b.fy) + bot * b.fy;
}

// Exact derivative of the bilinear interpolant inside its cell.
Eigen::Vector2d interp_slope(const ImageF& img, const Bilinear& b) {
    const int x1 = std::min(b.x0 + 1, img.width() - 1);
    const int y1 = std::min(b.y0 + 1, img.height() - 1);
    const double i00 = img.at(b.x0, b.y0), i10 = img.at(x1, b.y0);
    const double i01 = img.at(b.x0, y1), i11 = img.at(x1, y1);
    return {(i10 - i00) * (1.0 - b.fy) + (i11 - i01) * b.fy, (i01 - i00) * (1.0 - b.fx) + (i11 - i10) * b.fx};
}

void require_inside(const ImageF& img, double x, double y) {
    if (!inside(img, x, y)) {
        throw SamplingError("bilinear lookup at (" + std::to_string(x) + ", " + std::to_string(y) +
                            ") closer than 1 px to the border");
    }
}

void check_frames(std::span<const ImageF> frames) {
    if (frames.empty()) throw InputError("refine: no frames");
    for (const ImageF& f : frames) {
        if (!f.same_shape(frames[0])) throw ShapeError("refine: frame dimensions differ");
    }
}

// Residuals r_ik = I_k(q + d_i) - I_k(q - d_i) with Jacobian rows grad(q + d) - grad(q - d),
// the gradient being that of the bilinear interpolant.
struct SymmetrySystem {
    double cost = 0.0;
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
};

bool samples_inside(const ImageF& img, const Point2& q, std::span<const Point2> offsets) {
    for (const Point2& d : offsets) {
        if (!inside(img, q.x() + d.x(), q.y() + d.y()) || !inside(img, q.x() - d.x(), q.y() - d.y())) {
            return false;
        }
    }
    return true;
}

SymmetrySystem evaluate_symmetry(std::span<const ImageF> frames, const Point2& q, std::span<const Point2> offsets, bool with_jacobian) {
    SymmetrySystem sys;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        for (const Point2& d : offsets) {
            const Bilinear bp = locate(q.x() + d.x(), q.y() + d.y());
            const Bilinear bm = locate(q.x() - d.x(), q.y() - d.y());
            const double r = interp(frames[k], bp) - interp(frames[k], bm);
            sys.cost += r * r;
            if (with_jacobian) {
                const Eigen::Vector2d j = interp_slope(frames[k], bp) - interp_slope(frames[k], bm);
                sys.jtj += j * j.transpose();
                sys.jtr += j * r;
            }
        }
    }
    return sys;
}

}  // namespace

std::string to_string(RefineMethod method) {
    switch (method) {
        case RefineMethod::symmetry: return "symmetry";
        case RefineMethod::forstner: return "forstner";
        case RefineMethod::saddle: return "saddle";
        case RefineMethod::phase: return "phase";
    }
    return "unknown";
}

RefineMethod refine_method_from_string(const std::string& name) {
    if (name == "symmetry") return RefineMethod::symmetry;
    if (name == "forstner") return RefineMethod::forstner;
    if (name == "saddle") return RefineMethod::saddle;
    if (name == "phase") return RefineMethod::phase;
    throw ConfigError("method: unknown refiner '" + name + "'");
}

std::string to_string(RefineStatus status) {
    switch (status) {
        case RefineStatus::converged: return "converged";
        case RefineStatus::max_iterations: return "max_iterations";
        case RefineStatus::singular: return "singular";
        case RefineStatus::out_of_bounds: return "out_of_bounds";
        case RefineStatus::runaway: return "runaway";
        case RefineStatus::not_saddle: return "not_saddle";
        case RefineStatus::extrapolated: return "extrapolated";
    }
    return "unknown";
}

void RefineConfig::validate() const {
    if (half_window < 2) throw ConfigError("half_window: must be >= 2");
    if (n_samples < 16) throw ConfigError("n_samples: must be >= 16");
    if (max_iterations < 1) throw ConfigError("max_iterations: must be >= 1");
    if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol: must be positive");
    if (!(lm_lambda0 > 0.0) || !(lm_lambda_up > 1.0) || !(lm_lambda_down > 0.0 && lm_lambda_down < 1.0)) {
        throw ConfigError("lm_lambda*: need lambda0 > 0, lambda_up > 1, 0 < lambda_down < 1");
    }
}

GradientField GradientField::of(const ImageF& img) {
    GradientField g{ImageF(img.width(), img.height()), ImageF(img.width(), img.height())};
    const int w = img.width();
    const int h = img.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int xl = std::max(x - 1, 0);
            const int xr = std::min(x + 1, w - 1);
            const int yu = std::max(y - 1, 0);
            const int yd = std::min(y + 1, h - 1);
            g.gx.at(x, y) = xr > xl ? (img.at(xr, y) - img.at(xl, y)) / (xr - xl) : 0.0;
            g.gy.at(x, y) = yd > yu ? (img.at(x, yd) - img.at(x, yu)) / (yd - yu) : 0.0;
        }
    }
    return g;
}

double bilinear_sample(const ImageF& img, double x, double y) {
    require_inside(img, x, y);
    return interp(img, locate(x, y));
}

Point2 bilinear_gradient(const GradientField& grad, double x, double y) {
    require_inside(grad.gx, x, y);
    const Bilinear b = locate(x, y);
    return {interp(grad.gx, b), interp(grad.gy, b)};
}

Point2 bilinear_gradient(const ImageF& img, double x, double y) {
    require_inside(img, x, y);
    const Bilinear b = locate(x, y);
    // Central differences at the four surrounding pixels only.
    auto gx = [&](int px, int py) { return (img.at(px + 1, py) - img.at(px - 1, py)) * 0.5; };
    auto gy = [&](int px, int py) { return (img.at(px, py + 1) - img.at(px, py - 1)) * 0.5; };
    const int x1 = std::min(b.x0 + 1, img.width() - 2);
    const int y1 = std::min(b.y0 + 1, img.height() - 2);
    const double gxt = gx(b.x0, b.y0) * (1.0 - b.fx) + gx(x1, b.y0) * b.fx;
    const double gxb = gx(b.x0, y1) * (1.0 - b.fx) + gx(x1, y1) * b.fx;
    const double gyt = gy(b.x0, b.y0) * (1.0 - b.fx) + gy(x1, b.y0) * b.fx;
    const double gyb = gy(b.x0, y1) * (1.0 - b.fx) + gy(x1, y1) * b.fx;
    return {gxt * (1.0 - b.fy) + gxb * b.fy, gyt * (1.0 - b.fy) + gyb * b.fy};
}

std::vector<Point2> sample_disc_offsets(int n, double radius, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Point2> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double r = radius * std::sqrt(unit(rng));
        const double t = 2.0 * std::numbers::pi * unit(rng);
        out.emplace_back(r * std::cos(t), r * std::sin(t));
    }
    return out;
}

SymmetryCost symmetry_cost(std::span<const ImageF> frames, const Point2& q, std::span<const Point2> offsets) {
    check_frames(frames);
    if (!samples_inside(frames[0], q, offsets)) throw SamplingError("symmetry_cost: samples leave the image");
    const SymmetrySystem sys = evaluate_symmetry(frames, q, offsets, true);
    return {sys.cost, 2.0 * sys.jtr};
}

CornerEstimate refine_symmetry(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg) {
    cfg.validate();
    check_frames(frames);
    CornerEstimate est{q0, RefineStatus::max_iterations, 0, 0.0, RefineMethod::symmetry};

    const std::vector<Point2> offsets = sample_disc_offsets(cfg.n_samples, cfg.half_window, cfg.rng_seed);
    if (!samples_inside(frames[0], q0, offsets)) {
        est.status = RefineStatus::out_of_bounds;
        return est;
    }
    Point2 q = q0;
    SymmetrySystem sys = evaluate_symmetry(frames, q, offsets, true);
    double lambda = cfg.lm_lambda0;
    const double max_drift = cfg.half_window + 2.0;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        est.iterations = it;
        Eigen::Matrix2d a = sys.jtj;
        a(0, 0) += lambda * std::max(sys.jtj(0, 0), 1e-12);
        a(1, 1) += lambda * std::max(sys.jtj(1, 1), 1e-12);
        const double det = a.determinant();
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
            lambda *= cfg.lm_lambda_up;
            continue;
        }
        const Eigen::Vector2d step = -a.inverse() * sys.jtr;
        if (step.norm() < cfg.convergence_tol) {
            est.status = RefineStatus::converged;
            break;
        }
        const Point2 candidate = q + step;
        if (!samples_inside(frames[0], candidate, offsets)) {
            lambda *= cfg.lm_lambda_up;
            continue;
        }
        const SymmetrySystem trial = evaluate_symmetry(frames, candidate, offsets, false);
        if (trial.cost < sys.cost) {
            q = candidate;
            sys = evaluate_symmetry(frames, q, offsets, true);
            lambda = std::max(lambda * cfg.lm_lambda_down, 1e-12);
            if ((q - q0).norm() > max_drift) {
                est.status = RefineStatus::runaway;
                break;
            }
        } else {
            lambda *= cfg.lm_lambda_up;
        }
    }
    est.position = q;
    est.final_cost = sys.cost;
    return est;
}

CornerEstimate refine_forstner(const ImageF& img, const Point2& q0, const RefineConfig& cfg) {
    return refine_forstner(std::span<const ImageF>(&img, 1), q0, cfg);
}

CornerEstimate refine_forstner(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg) {
    cfg.validate();
    check_frames(frames);
    CornerEstimate est{q0, RefineStatus::max_iterations, 0, 0.0, RefineMethod::forstner};
    std::vector<GradientField> grads;
    grads.reserve(frames.size());
    for (const ImageF& f : frames) grads.push_back(GradientField::of(f));

    const int hw = cfg.half_window;
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>((2 * hw + 1) * (2 * hw + 1)));
    for (int dy = -hw; dy <= hw; ++dy) {
        for (int dx = -hw; dx <= hw; ++dx) {
            const double ex = static_cast<double>(dx) / hw;
            const double ey = static_cast<double>(dy) / hw;
            weights.push_back(std::exp(-(ex * ex + ey * ey)));
        }
    }

    Point2 q = q0;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        est.iterations = it;
        if (!inside(frames[0], q.x() - hw, q.y() - hw) || !inside(frames[0], q.x() + hw, q.y() + hw)) {
            est.status = RefineStatus::out_of_bounds;
            break;
        }
        Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        for (const GradientField& g : grads) {
            std::size_t wi = 0;
            for (int dy = -hw; dy <= hw; ++dy) {
                for (int dx = -hw; dx <= hw; ++dx, ++wi) {
                    const Point2 p(q.x() + dx, q.y() + dy);
                    const Bilinear loc = locate(p.x(), p.y());
                    const Eigen::Vector2d gv(interp(g.gx, loc), interp(g.gy, loc));
                    const Eigen::Matrix2d ggt = weights[wi] * gv * gv.transpose();
                    a += ggt;
                    b += ggt * p;
                }
            }
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(a);
        const double lmax = eig.eigenvalues()(1);
        const double lmin = eig.eigenvalues()(0);
        if (!(lmax > 0.0) || lmin <= 1e-10 * lmax) {
            est.status = RefineStatus::singular;
            break;
        }
        const Point2 next = a.ldlt().solve(b);
        const double move = (next - q).norm();
        q = next;
        if ((q - q0).norm() > hw + 2.0) {
            est.status = RefineStatus::runaway;
            break;
        }
        if (move < cfg.convergence_tol) {
            est.status = RefineStatus::converged;
            break;
        }
    }
    est.position = q;
    return est;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
    if (!(sigma > 0.0)) return img;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + r)];
    }
    for (double& v : k) v /= sum;

    ImageF tmp(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * img.clamped(x - i, y);
            tmp.at(x, y) = acc;
        }
    }
    ImageF out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.clamped(x, y - i);
            out.at(x, y) = acc;
        }
    }
    return out;
}

CornerEstimate refine_saddle(const ImageF& img, const Point2& q0, const RefineConfig& cfg,
                             const SaddleOptions& options) {
    return refine_saddle(std::span<const ImageF>(&img, 1), q0, cfg, options);
}

CornerEstimate refine_saddle(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg,
                             const SaddleOptions& options) {
    cfg.validate();
    check_frames(frames);
    CornerEstimate est{q0, RefineStatus::max_iterations, 0, 0.0, RefineMethod::saddle};

    std::vector<ImageF> smoothed;
    smoothed.reserve(frames.size());
    for (const ImageF& f : frames) smoothed.push_back(gaussian_blur(f, options.prefilter_sigma));

    // The design matrix depends only on the window offsets: precompute its pseudo-inverse.
    const int hw = cfg.half_window;
    const int side = 2 * hw + 1;
    Eigen::MatrixXd design(side * side, 6);
    {
        int row = 0;
        for (int dy = -hw; dy <= hw; ++dy) {
            for (int dx = -hw; dx <= hw; ++dx, ++row) {
                design.row(row) << dx * dx, dx * dy, dy * dy, dx, dy, 1.0;
            }
        }
    }
    const Eigen::MatrixXd pinv = (design.transpose() * design).ldlt().solve(design.transpose());

    // The window is resampled about the continuous estimate, so at the fixed point
    // it is exactly centred on the corner.
    Point2 estimate = q0;
    Eigen::VectorXd z(side * side);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        est.iterations = it;
        if (!inside(frames[0], estimate.x() - hw, estimate.y() - hw) ||
            !inside(frames[0], estimate.x() + hw, estimate.y() + hw)) {
            est.status = RefineStatus::out_of_bounds;
            break;
        }
        const Bilinear base = locate(estimate.x() - hw, estimate.y() - hw);
        Point2 acc = Point2::Zero();
        int valid = 0;
        double residual = 0.0;
        for (const ImageF& s : smoothed) {
            int row = 0;
            for (int dy = 0; dy < side; ++dy) {
                for (int dx = 0; dx < side; ++dx, ++row) {
                    z(row) = interp(s, Bilinear{base.x0 + dx, base.y0 + dy, base.fx, base.fy});
                }
            }
            const Eigen::Matrix<double, 6, 1> c = pinv * z;
            residual += (design * c - z).squaredNorm();
            const double det = 4.0 * c(0) * c(2) - c(1) * c(1);
            if (!(det < 0.0)) continue;  // b^2 - 4ac <= 0: no saddle
            Eigen::Matrix2d hess;
            hess << 2.0 * c(0), c(1), c(1), 2.0 * c(2);
            acc += hess.inverse() * Eigen::Vector2d(-c(3), -c(4));
            ++valid;
        }
        est.final_cost = residual;
        if (valid == 0) {
            est.status = RefineStatus::not_saddle;
            break;
        }
        const Point2 next = estimate + acc / valid;
        const double move = (next - estimate).norm();
        if ((next - q0).norm() > hw + 2.0) {
            est.status = RefineStatus::runaway;
            break;
        }
        estimate = next;
        if (move < cfg.convergence_tol) {
            est.status = RefineStatus::converged;
            break;
        }
    }
    est.position = estimate;
    return est;
}

}  // namespace rotstar
