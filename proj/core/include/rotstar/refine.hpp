#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rotstar/image.hpp"

namespace rotstar {

enum class RefineMethod { symmetry, forstner, saddle, phase };

std::string to_string(RefineMethod method);
RefineMethod refine_method_from_string(const std::string& name);

struct RefineConfig {
    int half_window = 10;
    int n_samples = 256;
    int max_iterations = 50;
    double lm_lambda0 = 1e-3;
    double lm_lambda_up = 10.0;
    double lm_lambda_down = 0.1;
    double convergence_tol = 1e-5;  // pixels
    std::uint64_t rng_seed = 0;

    void validate() const;
};

enum class RefineStatus {
    converged,
    max_iterations,  // ran out of iterations while still moving
    singular,        // flat or rank-deficient normal equations
    out_of_bounds,   // window or sample set would leave the image
    runaway,         // drifted beyond half_window + 2 from the start
    not_saddle,      // fitted quadric has no saddle point
    extrapolated,    // phase solution lies outside the fitting window
};

std::string to_string(RefineStatus status);

struct CornerEstimate {
    Point2 position = Point2::Zero();
    RefineStatus status = RefineStatus::converged;
    int iterations = 0;
    double final_cost = 0.0;
    RefineMethod method = RefineMethod::symmetry;

    bool converged() const { return status == RefineStatus::converged; }
};

// Central-difference gradient of an image (one-sided on the border).
struct GradientField {
    ImageF gx;
    ImageF gy;

    static GradientField of(const ImageF& img);
};

// Bilinear lookups; (x, y) must lie in [1, width - 2] x [1, height - 2].
double bilinear_sample(const ImageF& img, double x, double y);
Point2 bilinear_gradient(const ImageF& img, double x, double y);
Point2 bilinear_gradient(const GradientField& grad, double x, double y);

// Offsets drawn uniformly over the disc of the given radius.
std::vector<Point2> sample_disc_offsets(int n, double radius, std::uint64_t seed);

struct SymmetryCost {
    double cost = 0.0;
    Point2 gradient = Point2::Zero();  // d cost / d q of the bilinear-interpolated cost
};

// sum_k sum_i [I_k(q + d_i) - I_k(q - d_i)]^2 and its analytic gradient.
SymmetryCost symmetry_cost(std::span<const ImageF> frames, const Point2& q, std::span<const Point2> offsets);

// Point-symmetry refinement with Levenberg-Marquardt over all frames jointly.
CornerEstimate refine_symmetry(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg);

// Gradient-orthogonality (Foerstner) refinement; multiple frames add their
// normal equations.
CornerEstimate refine_forstner(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg);
CornerEstimate refine_forstner(const ImageF& img, const Point2& q0, const RefineConfig& cfg);

struct SaddleOptions {
    double prefilter_sigma = 1.0;  // 0 disables smoothing
};

// Quadric fit z = ax^2 + bxy + cy^2 + dx + ey + f over a window resampled about
// the current estimate, re-centred until the step falls below convergence_tol. With several frames the per-frame
// stationary points are averaged at each step.
CornerEstimate refine_saddle(std::span<const ImageF> frames, const Point2& q0, const RefineConfig& cfg,
                             const SaddleOptions& options = {});
CornerEstimate refine_saddle(const ImageF& img, const Point2& q0, const RefineConfig& cfg,
                             const SaddleOptions& options = {});

ImageF gaussian_blur(const ImageF& img, double sigma);

struct WrappedPhase {
    ImageF phase;       // (-pi, pi]
    ImageF modulation;  // >= 0
};

// Four frames shifted by k pi / 2: phase = atan2(I3 - I1, I0 - I2).
WrappedPhase decode_phase(std::span<const ImageF> frames4);

struct PhaseMaps {
    ImageF phase_x;
    ImageF phase_y;
    ImageF modulation;  // min of the two modulation maps
};

// Eight frames: four x shifts then four y shifts.
PhaseMaps decode_phase_maps(std::span<const ImageF> frames8);

double wrap_phase(double phi);

// Fits planes to both locally unwrapped phase maps over the (2h+1)^2 window at
// round(q0) and intersects them with the target phases.
CornerEstimate refine_phase(const PhaseMaps& maps, const Point2& target_phase, const Point2& q0,
                            int half_window = 3);

}  // namespace rotstar
