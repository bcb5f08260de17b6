#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rotstar/detect.hpp"
#include "rotstar/optics.hpp"
#include "rotstar/patterns.hpp"
#include "rotstar/refine.hpp"

namespace rotstar {

// Board point seen at `pixel` under the pose (inverse of BoardPose::project).
Point2 backproject_to_board(const Point2& pixel, const BoardPose& pose);

// Largest pairwise Euclidean distance; 0 for a single point.
double pairwise_distance_range(std::span<const Point2> points);

enum class Aggregation { mean, max };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& name);

// Frame in which per-pose estimates of one corner are compared. board: back-projected
// to the board plane and scaled by cell_px. image: the sensor-pixel error vector
// estimate - truth, so a pose-independent image shift cancels.
enum class RangeFrame { board, image };

std::string to_string(RangeFrame f);
RangeFrame range_frame_from_string(const std::string& name);

struct AberrationCase {
    std::string name;
    AberrationCoeffs coeffs;
};

// Synthetic rig. The board is grid_rows x grid_cols cells of unit size; the camera
// sees one cell as cell_px pixels at the fronto-parallel pose.
struct RigGeometry {
    int grid_rows = 6;
    int grid_cols = 6;
    double cell_px = 120.0;
    double stripe_fraction = 0.05;  // stripe width / cell size
    int star_segments = 16;
    double standoff = 50.0;  // board units
    int supersample = 8;
    PsfOptions psf;

    void validate() const;
    PatternSpec pattern_spec(PatternKind kind) const;
    // Pose with the pivot at the board centre, projected to the image centre.
    BoardPose pose(double phi_deg, double alpha_deg) const;
    ImageSize image_size() const;
};

struct SweepConfig {
    std::vector<double> phi_list;
    std::vector<double> alpha_list;
    std::vector<AberrationCase> aberrations;
    std::vector<double> noise_levels;
    int trials = 50;
    std::vector<RefineMethod> methods;
    std::vector<PatternKind> patterns;
    RigGeometry geometry;
    RefineConfig refine;
    int phase_half_window = 3;
    double perturbation_px = 1.0;  // half-width of the uniform start offset per axis
    Aggregation aggregation = Aggregation::mean;
    RangeFrame frame = RangeFrame::image;
    std::uint64_t seed = 1;
    int jobs = 1;
    bool keep_image_errors = false;

    void validate() const;

    // Reduced desk-scale profile and the complete one.
    static SweepConfig ci();
    static SweepConfig full();
};

// Whether a refiner is run on a pattern arm (phase only pairs with phase_shift).
bool method_applies(RefineMethod method, PatternKind pattern);

struct PoseStat {
    double phi_deg = 0.0;
    double alpha_deg = 0.0;
    bool feasible = true;
    std::size_t estimates = 0;
    std::size_t failures = 0;
    double mean_offset_px = 0.0;  // mean offset length in the comparison frame, pixels
};

struct StabilityRecord {
    std::string aberration;
    AberrationCoeffs coeffs;
    double sigma_n = 0.0;
    RefineMethod method = RefineMethod::symmetry;
    PatternKind pattern = PatternKind::rotating_star;
    double range_px = 0.0;      // trial mean of the corner-aggregated range
    double range_std_px = 0.0;  // spread over trials
    std::vector<double> trial_ranges;
    std::size_t estimates = 0;
    std::size_t failures = 0;
    std::size_t expected = 0;  // feasible poses x trials x corners
    std::vector<PoseStat> poses;
    std::vector<float> image_errors;  // per estimate, sensor pixels; kept on request
};

struct SweepResult {
    std::vector<StabilityRecord> records;
    std::vector<std::pair<double, double>> skipped_poses;  // (phi, alpha) rejected by the pose check
    int corners = 0;
    int trials = 0;
};

SweepResult run_sweep(const SweepConfig& cfg);

// Writes sweep.csv (one row per cell and pose), summary.csv (one row per cell) and
// one range-vs-noise SVG per aberration case into `dir`. Returns the files written.
std::vector<std::filesystem::path> write_report(const SweepResult& result, const std::filesystem::path& dir);

std::string sweep_csv(const SweepResult& result);
std::string summary_csv(const SweepResult& result);
std::string range_plot_svg(const SweepResult& result, const std::string& aberration);

// Symmetries of a rows x cols index grid: all 8 for square grids, else the 4 that
// keep the shape. Each maps (i, j) to a new (i, j).
std::vector<std::array<int, 4>> grid_symmetries(int rows, int cols);
std::pair<int, int> apply_symmetry(const std::array<int, 4>& sym, int rows, int cols, int i, int j);

struct AssignmentCheck {
    bool complete = false;        // every corner detected
    int mislabeled = 0;           // under the best symmetry
    double max_rough_error = 0.0; // pixels
};

// Compares a detected grid with the ground-truth projection of the pose.
AssignmentCheck check_assignment(const CornerGrid& grid, const PatternSpec& spec, const BoardPose& pose,
                                 const Point2& pixel_offset = Point2::Zero());

}  // namespace rotstar
