#include "rotstar/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "fft.hpp"
#include "rotstar/error.hpp"

namespace rotstar {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void check_kernel(const ImageF& img, const ImageF& kernel) {
    if (kernel.empty() || kernel.width() % 2 == 0 || kernel.height() % 2 == 0) {
        throw ShapeError("kernel dimensions must be odd");
    }
    if (kernel.width() > img.width() || kernel.height() > img.height()) {
        throw ShapeError("kernel " + std::to_string(kernel.width()) + "x" + std::to_string(kernel.height()) +
                         " larger than image " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
    }
}

}  // namespace

bool AberrationCoeffs::finite() const {
    return std::isfinite(w_tilt) && std::isfinite(w_focus) && std::isfinite(w_ast) && std::isfinite(w_coma) &&
           std::isfinite(w_sph);
}

bool AberrationCoeffs::is_zero() const {
    return w_tilt == 0.0 && w_focus == 0.0 && w_ast == 0.0 && w_coma == 0.0 && w_sph == 0.0;
}

double seidel_wavefront(const AberrationCoeffs& c, double rho, double theta) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw DomainError("rho must lie in [0, 1], got " + std::to_string(rho));
    }
    const double ct = std::cos(theta);
    const double r2 = rho * rho;
    return c.w_tilt * rho * ct + c.w_focus * r2 + c.w_ast * r2 * r2 + c.w_coma * r2 * rho * ct +
           c.w_sph * r2 * ct * ct;
}

PsfKernel psf_from_wavefront(const AberrationCoeffs& coeffs, const PsfOptions& options) {
    return psf_from_wavefront(coeffs, options.pupil_grid, options.out_size, options.pad_factor);
}

PsfKernel psf_from_wavefront(const AberrationCoeffs& coeffs, int pupil_grid, int out_size, int pad_factor) {
    if (!coeffs.finite()) throw ConfigError("aberration: coefficients must be finite");
    if (pupil_grid < 64) throw ConfigError("pupil_grid: must be >= 64");
    if (pad_factor < 2) throw ConfigError("pad_factor: must be >= 2");
    if (out_size % 2 == 0) throw ConfigError("out_size: must be odd");
    if (out_size < 1 || out_size > pupil_grid) throw ConfigError("out_size: must be in [1, pupil_grid]");

    const int n = pupil_grid * pad_factor;
    const double radius = pupil_grid / 2.0;
    detail::FftwArray<fftw_complex> field(static_cast<std::size_t>(n) * n);
    detail::FftwArray<fftw_complex> spectrum(static_cast<std::size_t>(n) * n);
    std::fill_n(&field[0][0], 2 * field.size(), 0.0);

    // Pupil sampled on integer offsets around index 0 (wrapped), so an even
    // wavefront gives an exactly even pupil array.
    const int reach = static_cast<int>(std::ceil(radius));
    for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
            const double rho = std::hypot(dx, dy) / radius;
            if (rho > 1.0) continue;
            const double w = seidel_wavefront(coeffs, rho, std::atan2(dy, dx));
            const std::size_t idx = static_cast<std::size_t>((dy + n) % n) * n + (dx + n) % n;
            field[idx][0] = std::cos(kTwoPi * w);
            field[idx][1] = std::sin(kTwoPi * w);
        }
    }
    fftw_execute_dft(detail::c2c_forward_plan(n, n), field.data(), spectrum.data());

    double total = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        total += spectrum[i][0] * spectrum[i][0] + spectrum[i][1] * spectrum[i][1];
    }

    const int r = out_size / 2;
    PsfKernel psf{ImageF(out_size, out_size), 1.0};
    double kept = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const std::size_t idx = static_cast<std::size_t>((y + n) % n) * n + (x + n) % n;
            const double p = spectrum[idx][0] * spectrum[idx][0] + spectrum[idx][1] * spectrum[idx][1];
            psf.kernel.at(x + r, y + r) = p;
            kept += p;
        }
    }
    for (double& v : psf.kernel.pixels()) v /= kept;
    psf.energy_captured = kept / total;
    if (psf.energy_captured < 0.999) {
        spdlog::warn("PSF crop {}x{} keeps only {:.4f} of the energy; increase out_size", out_size, out_size,
                     psf.energy_captured);
    }
    return psf;
}

PsfKernel delta_psf() { return PsfKernel{ImageF(1, 1, 1.0), 1.0}; }

Eigen::Matrix3d Intrinsics::matrix() const {
    Eigen::Matrix3d k;
    k << focal_px, 0.0, cx, 0.0, focal_px, cy, 0.0, 0.0, 1.0;
    return k;
}

Eigen::Matrix3d BoardPose::rotation() const {
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(deg2rad(phi_deg), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(deg2rad(alpha_deg), Eigen::Vector3d::UnitX()).toRotationMatrix();
    return rx * rz;
}

Eigen::Vector3d BoardPose::translation() const {
    const Eigen::Matrix3d r = rotation();
    return Eigen::Vector3d(0.0, 0.0, standoff) - r.col(0) * pivot_u - r.col(1) * pivot_v;
}

Eigen::Matrix3d BoardPose::homography() const {
    const Eigen::Matrix3d r = rotation();
    Eigen::Matrix3d rt;
    rt.col(0) = r.col(0);
    rt.col(1) = r.col(1);
    rt.col(2) = translation();
    return intrinsics.matrix() * rt;
}

void BoardPose::validate(double board_width, double board_height) const {
    if (!(standoff > 0.0) || !(intrinsics.focal_px > 0.0)) {
        throw PoseError("pose: standoff and focal length must be positive");
    }
    const Eigen::Matrix3d r = rotation();
    const double plane_distance = std::abs(r.col(2).dot(Eigen::Vector3d(0.0, 0.0, standoff)));
    if (plane_distance < 1e-9 * standoff) {
        throw PoseError("pose: board plane passes through the camera centre (phi=" + std::to_string(phi_deg) +
                        ", alpha=" + std::to_string(alpha_deg) + ")");
    }
    const Eigen::Vector3d t = translation();
    for (double u : {0.0, board_width}) {
        for (double v : {0.0, board_height}) {
            const Eigen::Vector3d p = r.col(0) * u + r.col(1) * v + t;
            if (!(p.z() > 1e-9 * standoff)) {
                throw PoseError("pose: board corner behind the camera");
            }
        }
    }
}

Point2 BoardPose::project(double u, double v) const {
    const Eigen::Vector3d h = homography() * Eigen::Vector3d(u, v, 1.0);
    return {h.x() / h.z(), h.y() / h.z()};
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t v : stream) s = splitmix64(s ^ splitmix64(v + 0x632be59bd9b4e019ULL));
    return s;
}

ImageF project_board_supersampled(const PatternFunction& pattern, int frame, const BoardPose& pose,
                                  const PixelRect& roi, int supersample, int margin) {
    if (supersample < 1) throw ConfigError("supersample: must be >= 1");
    if (frame < 0 || frame >= pattern.n_frames()) {
        throw RangeError("frame " + std::to_string(frame) + " outside pattern sequence");
    }
    if (roi.width <= 0 || roi.height <= 0 || margin < 0) throw ShapeError("empty projection rectangle");
    pose.validate(pattern.spec().board_width(), pattern.spec().board_height());

    const Eigen::Matrix3d hinv = pose.homography().inverse();
    const int w = (roi.width + 2 * margin) * supersample;
    const int h = (roi.height + 2 * margin) * supersample;
    ImageF out(w, h);
    const double step = 1.0 / supersample;
    const double x0 = roi.x - margin - 0.5 + 0.5 * step;
    const double y0 = roi.y - margin - 0.5 + 0.5 * step;
    for (int sy = 0; sy < h; ++sy) {
        const double py = y0 + sy * step;
        auto dst = out.row(sy);
        for (int sx = 0; sx < w; ++sx) {
            const double px = x0 + sx * step;
            const double bu = hinv(0, 0) * px + hinv(0, 1) * py + hinv(0, 2);
            const double bv = hinv(1, 0) * px + hinv(1, 1) * py + hinv(1, 2);
            const double bw = hinv(2, 0) * px + hinv(2, 1) * py + hinv(2, 2);
            // bw = 1 / depth; non-positive means the ray meets the plane behind the camera.
            dst[sx] = bw > 0.0 ? pattern(bu / bw, bv / bw, frame) : 0.0;
        }
    }
    return out;
}

ImageF project_board(const PatternFunction& pattern, int frame, const BoardPose& pose, ImageSize image_size,
                     int supersample, std::optional<PixelRect> roi) {
    const PixelRect rect = roi.value_or(PixelRect{0, 0, image_size.width, image_size.height});
    return block_mean(project_board_supersampled(pattern, frame, pose, rect, supersample), supersample);
}

ImageF render_capture(const PatternFunction& pattern, int frame, const BoardPose& pose, const PsfKernel& psf,
                      ImageSize image_size, int supersample, const NoiseSpec& noise, std::optional<PixelRect> roi) {
    if (noise.sigma_n < 0.0) throw ConfigError("noise.sigma_n: must be >= 0");
    const PixelRect rect = roi.value_or(PixelRect{0, 0, image_size.width, image_size.height});
    const int margin = (psf.radius() + supersample - 1) / supersample;
    ImageF scene = project_board_supersampled(pattern, frame, pose, rect, supersample, margin);
    if (psf.size() > 1) scene = convolve(scene, psf);
    ImageF sensor = block_mean(scene, supersample);
    if (margin > 0) sensor = sensor.crop(margin, margin, rect.width, rect.height);
    add_gaussian_noise(sensor, noise);
    return sensor;
}

ImageF average_frames(std::span<const ImageF> frames) {
    if (frames.empty()) throw InputError("average_frames: no frames");
    ImageF out(frames[0].width(), frames[0].height());
    for (const ImageF& f : frames) {
        if (!f.same_shape(frames[0])) throw ShapeError("average_frames: frame dimensions differ");
        auto src = f.pixels();
        auto dst = out.pixels();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (double& v : out.pixels()) v *= inv;
    return out;
}

ImageF convolve_direct(const ImageF& img, const ImageF& kernel) {
    check_kernel(img, kernel);
    const int rx = kernel.width() / 2;
    const int ry = kernel.height() / 2;
    ImageF out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            double acc = 0.0;
            for (int b = -ry; b <= ry; ++b) {
                for (int a = -rx; a <= rx; ++a) {
                    acc += kernel.at(a + rx, b + ry) * img.clamped(x - a, y - b);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Point2 PsfKernel::centroid() const {
    Point2 m = Point2::Zero();
    double total = 0.0;
    for (int y = 0; y < kernel.height(); ++y) {
        for (int x = 0; x < kernel.width(); ++x) {
            const double w = kernel.at(x, y);
            m += w * Point2(x - center(), y - center());
            total += w;
        }
    }
    return total > 0.0 ? Point2(m / total) : Point2::Zero();
}

struct Convolver::Impl {
    int width = 0;
    int height = 0;
    int rx = 0;
    int ry = 0;
    int rows = 0;  // transform size
    int cols = 0;
    EdgeMode edge = EdgeMode::replicate;
    std::vector<std::complex<double>> kernel_spectrum;
};

Convolver::Convolver(const ImageF& kernel, int image_width, int image_height, EdgeMode edge)
    : impl_(std::make_unique<Impl>()) {
    check_kernel(ImageF(image_width, image_height), kernel);
    Impl& s = *impl_;
    s.width = image_width;
    s.height = image_height;
    s.rx = kernel.width() / 2;
    s.ry = kernel.height() / 2;
    s.edge = edge;
    const int pad = edge == EdgeMode::replicate ? 4 : 0;
    s.cols = detail::next_fast_size(image_width + pad * s.rx);
    s.rows = detail::next_fast_size(image_height + pad * s.ry);

    const std::size_t nreal = static_cast<std::size_t>(s.rows) * s.cols;
    const std::size_t nhalf = static_cast<std::size_t>(s.rows) * (s.cols / 2 + 1);
    detail::FftwArray<double> buf(nreal);
    detail::FftwArray<fftw_complex> spec(nhalf);
    std::fill_n(buf.data(), nreal, 0.0);
    for (int y = 0; y < kernel.height(); ++y) {
        for (int x = 0; x < kernel.width(); ++x) {
            buf[static_cast<std::size_t>(y) * s.cols + x] = kernel.at(x, y);
        }
    }
    fftw_execute_dft_r2c(detail::r2c_plan(s.rows, s.cols), buf.data(), spec.data());
    s.kernel_spectrum.resize(nhalf);
    const double scale = 1.0 / static_cast<double>(nreal);
    for (std::size_t i = 0; i < nhalf; ++i) s.kernel_spectrum[i] = {spec[i][0] * scale, spec[i][1] * scale};
}

Convolver::~Convolver() = default;

ImageF Convolver::apply(const ImageF& img) const {
    const Impl& s = *impl_;
    if (img.width() != s.width || img.height() != s.height) {
        throw ShapeError("Convolver: image size differs from the planned size");
    }
    const std::size_t nreal = static_cast<std::size_t>(s.rows) * s.cols;
    const std::size_t nhalf = static_cast<std::size_t>(s.rows) * (s.cols / 2 + 1);
    detail::FftwArray<double> buf(nreal);
    detail::FftwArray<fftw_complex> spec(nhalf);
    std::fill_n(buf.data(), nreal, 0.0);

    const bool valid = s.edge == EdgeMode::valid;
    if (valid) {
        for (int y = 0; y < s.height; ++y) {
            const auto src = img.row(y);
            std::copy(src.begin(), src.end(), buf.data() + static_cast<std::size_t>(y) * s.cols);
        }
    } else {
        // Replicate-padded image occupies [0, w + 2r) in the transform buffer.
        const int pw = s.width + 2 * s.rx;
        const int ph = s.height + 2 * s.ry;
        for (int y = 0; y < ph; ++y) {
            const int sy = std::clamp(y - s.ry, 0, s.height - 1);
            double* dst = buf.data() + static_cast<std::size_t>(y) * s.cols;
            for (int x = 0; x < pw; ++x) dst[x] = img.at(std::clamp(x - s.rx, 0, s.width - 1), sy);
        }
    }
    fftw_execute_dft_r2c(detail::r2c_plan(s.rows, s.cols), buf.data(), spec.data());
    for (std::size_t i = 0; i < nhalf; ++i) {
        const std::complex<double> a(spec[i][0], spec[i][1]);
        const std::complex<double> p = a * s.kernel_spectrum[i];
        spec[i][0] = p.real();
        spec[i][1] = p.imag();
    }
    fftw_execute_dft_c2r(detail::c2r_plan(s.rows, s.cols), spec.data(), buf.data());

    ImageF out(s.width, s.height);
    for (int y = 0; y < s.height; ++y) {
        if (valid) {
            const double* src = buf.data() + static_cast<std::size_t>((y + s.ry) % s.rows) * s.cols;
            auto dst = out.row(y);
            for (int x = 0; x < s.width; ++x) dst[x] = src[(x + s.rx) % s.cols];
            continue;
        }
        const double* src = buf.data() + static_cast<std::size_t>(y + 2 * s.ry) * s.cols + 2 * s.rx;
        std::copy(src, src + s.width, out.row(y).begin());
    }
    return out;
}

ImageF convolve(const ImageF& img, const ImageF& kernel) {
    check_kernel(img, kernel);
    // Direct summation wins for tiny kernels.
    if (static_cast<long>(kernel.width()) * kernel.height() <= 25) return convolve_direct(img, kernel);
    return Convolver(kernel, img.width(), img.height()).apply(img);
}

ImageF convolve(const ImageF& img, const PsfKernel& kernel) { return convolve(img, kernel.kernel); }

ImageF block_mean(const ImageF& img, int factor) {
    if (factor < 1) throw ConfigError("block factor must be >= 1");
    if (factor == 1) return img;
    if (img.width() % factor != 0 || img.height() % factor != 0) {
        throw ShapeError("block_mean: image size not divisible by block factor");
    }
    const int w = img.width() / factor;
    const int h = img.height() / factor;
    ImageF out(w, h);
    const double norm = 1.0 / (static_cast<double>(factor) * factor);
    for (int y = 0; y < h; ++y) {
        for (int by = 0; by < factor; ++by) {
            auto src = img.row(y * factor + by);
            auto dst = out.row(y);
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int bx = 0; bx < factor; ++bx) acc += src[static_cast<std::size_t>(x) * factor + bx];
                dst[x] += acc;
            }
        }
        for (double& v : out.row(y)) v *= norm;
    }
    return out;
}

void add_gaussian_noise(ImageF& img, const NoiseSpec& noise) {
    if (noise.sigma_n < 0.0) throw ConfigError("noise.sigma_n: must be >= 0");
    if (noise.sigma_n == 0.0) return;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> dist(0.0, noise.sigma_n);
    for (double& v : img.pixels()) v += dist(rng);
}

}  // namespace rotstar
