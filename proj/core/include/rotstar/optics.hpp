#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rotstar/image.hpp"
#include "rotstar/patterns.hpp"

namespace rotstar {

// Primary aberration coefficients in waves. Each coefficient multiplies the basis
// term printed next to it in seidel_wavefront(); note that w_ast multiplies rho^4
// and w_sph multiplies rho^2 cos^2(theta), the reverse of the usual Seidel naming.
struct AberrationCoeffs {
    double w_tilt = 0.0;   // rho cos(theta)
    double w_focus = 0.0;  // rho^2
    double w_ast = 0.0;    // rho^4
    double w_coma = 0.0;   // rho^3 cos(theta)
    double w_sph = 0.0;    // rho^2 cos^2(theta)

    bool finite() const;
    bool is_zero() const;
};

double seidel_wavefront(const AberrationCoeffs& coeffs, double rho, double theta);

struct PsfOptions {
    int pupil_grid = 256;  // samples across the pupil diameter
    int pad_factor = 2;    // transform size = pad_factor * pupil_grid
    int out_size = 129;    // odd crop size, in supersampled pixels
};

struct PsfKernel {
    ImageF kernel;  // unit sum, non-negative, odd square
    double energy_captured = 1.0;  // fraction of the uncropped PSF inside the crop

    int size() const { return kernel.width(); }
    int radius() const { return kernel.width() / 2; }
    int center() const { return kernel.width() / 2; }
    // Intensity-weighted mean offset from the centre pixel, in kernel pixels.
    Point2 centroid() const;
};

// |F(P)|^2 of the masked pupil P = exp(2 pi i W), centre-cropped and normalised to
// unit sum. Kernel x follows pupil theta = 0. Logs a warning when the crop keeps less
// than 99.9% of the energy.
PsfKernel psf_from_wavefront(const AberrationCoeffs& coeffs, int pupil_grid, int out_size, int pad_factor = 2);
PsfKernel psf_from_wavefront(const AberrationCoeffs& coeffs, const PsfOptions& options);

// Single-sample kernel.
PsfKernel delta_psf();

struct Intrinsics {
    double focal_px = 1000.0;
    double cx = 320.0;
    double cy = 240.0;

    Eigen::Matrix3d matrix() const;
};

struct ImageSize {
    int width = 640;
    int height = 480;
};

// Board placement: the board rotates about the pivot (board coordinates) by phi
// degrees about the world Z axis, then alpha degrees about the world X axis. At
// phi = alpha = 0 the board plane is fronto-parallel and the pivot sits on the
// optical axis at distance `standoff` (board units).
struct BoardPose {
    double phi_deg = 0.0;
    double alpha_deg = 0.0;
    double standoff = 20.0;
    double pivot_u = 0.0;
    double pivot_v = 0.0;
    Intrinsics intrinsics;

    Eigen::Matrix3d rotation() const;
    // Camera-frame position of the board origin.
    Eigen::Vector3d translation() const;
    // Board (u, v, 1) -> homogeneous pixel.
    Eigen::Matrix3d homography() const;

    // Throws PoseError when the camera centre lies in the board plane or any board
    // corner is not in front of the camera.
    void validate(double board_width, double board_height) const;

    Point2 project(double u, double v) const;
    // Board-units-to-pixels scale at the fronto-parallel pose.
    double fronto_scale() const { return intrinsics.focal_px / standoff; }
};

struct NoiseSpec {
    double sigma_n = 0.0;
    std::uint64_t seed = 0;
};

// Mixes a base seed with stream indices; order-independent job seeding.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

// Raster at supersample resolution of the pixel rectangle `roi` grown by `margin`
// sensor pixels on every side. Sample (s) of pixel x sits at x - 0.5 + (s + 0.5) / S.
ImageF project_board_supersampled(const PatternFunction& pattern, int frame, const BoardPose& pose,
                                  const PixelRect& roi, int supersample, int margin = 0);

// Aberration-free capture: supersampled projection averaged back to sensor pixels.
ImageF project_board(const PatternFunction& pattern, int frame, const BoardPose& pose, ImageSize image_size,
                     int supersample, std::optional<PixelRect> roi = std::nullopt);

// project (supersampled) -> convolve with psf -> block mean -> additive Gaussian noise.
// With an roi only that rectangle is produced; the scene is rendered far enough
// outside it that the result equals the matching crop of the full-frame render.
ImageF render_capture(const PatternFunction& pattern, int frame, const BoardPose& pose, const PsfKernel& psf,
                      ImageSize image_size, int supersample, const NoiseSpec& noise,
                      std::optional<PixelRect> roi = std::nullopt);

ImageF average_frames(std::span<const ImageF> frames);

// Linear convolution, replicate-edge boundary, kernel centred at its middle sample.
ImageF convolve(const ImageF& img, const ImageF& kernel);
ImageF convolve(const ImageF& img, const PsfKernel& kernel);
ImageF convolve_direct(const ImageF& img, const ImageF& kernel);

// Transform-domain convolution for repeated use of one kernel at one image size.
// EdgeMode::valid skips border padding: only pixels at least one kernel radius
// from the border are meaningful, the rest hold wrapped sums.
enum class EdgeMode { replicate, valid };

class Convolver {
public:
    Convolver(const ImageF& kernel, int image_width, int image_height, EdgeMode edge = EdgeMode::replicate);
    ~Convolver();
    Convolver(const Convolver&) = delete;
    Convolver& operator=(const Convolver&) = delete;

    ImageF apply(const ImageF& img) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Mean over factor x factor blocks; dimensions must divide evenly.
ImageF block_mean(const ImageF& img, int factor);

void add_gaussian_noise(ImageF& img, const NoiseSpec& noise);

}  // namespace rotstar
