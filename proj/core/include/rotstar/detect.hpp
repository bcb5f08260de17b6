#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rotstar/image.hpp"
#include "rotstar/patterns.hpp"

namespace rotstar {

// ---- response map -----------------------------------------------------------

// How pixels of the intensity estimate below floor_fraction * max are treated.
enum class FloorMode {
    clamp,   // raised to the floor value
    invert,  // replaced by (max - value)
};

enum class ThresholdMode {
    iterative_mean,  // intermeans iteration started at the global mean
    global_mean,     // single global mean
};

struct ResponseOptions {
    double floor_fraction = 1.0 / 20.0;
    FloorMode floor_mode = FloorMode::clamp;
    ThresholdMode threshold_mode = ThresholdMode::iterative_mean;
};

struct ResponseMap {
    ImageF accum_diff;     // sum_k |f_{k+1} - f_k|
    ImageF intensity_est;  // per-pixel max, floor adjusted
    ImageF response;       // accum_diff / intensity_est
    Mask binary;           // response > threshold
    double threshold = 0.0;
};

ResponseMap build_response_map(std::span<const ImageF> frames, const ResponseOptions& options = {});

// ---- contours ----------------------------------------------------------------

using PixelPoint = Eigen::Vector2i;

struct ElementContour {
    std::vector<PixelPoint> chain;  // closed boundary, Moore order
    Point2 centroid = Point2::Zero();
    PixelRect bbox;
    std::array<Point2, 4> min_rect{};  // minimum-area enclosing rectangle, cyclic vertices
    double area = 0.0;                 // region pixel count
    bool hole = false;                 // boundary of a background region enclosed by foreground
};

// Outer boundaries of 8-connected foreground components and of enclosed
// 4-connected background components (holes).
std::vector<ElementContour> trace_contours(const Mask& binary);

struct ContourSet {
    bool ok = false;
    std::string diagnostic;
    ElementContour outer;                  // longest contour
    std::vector<ElementContour> enclosed;  // contours whose centroid lies inside `outer`
};

ContourSet extract_element_contours(const Mask& binary);

bool point_in_polygon(const Point2& p, std::span<const PixelPoint> polygon);
std::vector<Point2> convex_hull(std::vector<Point2> points);
std::array<Point2, 4> min_area_rect(std::span<const Point2> points);
// Four hull vertices approximating a convex quadrilateral: the two ends of the
// diameter plus the farthest point on either side of it, in cyclic order.
std::array<Point2, 4> hull_quad(std::span<const Point2> points);

// ---- rough corners -------------------------------------------------------------

struct RansacConfig {
    int iterations = 200;
    double inlier_threshold = 1.0;  // px
    double min_inlier_ratio = 0.4;  // of half the edge points, per line group
    std::uint64_t seed = 0;
};

// t = a s^2 + b s + c in the frame (origin, direction, normal) of the seeding line.
struct QuadraticCurve {
    Point2 origin = Point2::Zero();
    Point2 direction = Point2::UnitX();
    Eigen::Vector3d coeffs = Eigen::Vector3d::Zero();  // a, b, c

    Point2 at(double s) const;
    // Closest curve point to p (Newton on the arc parameter).
    Point2 closest_point(const Point2& p, Point2* normal = nullptr) const;
};

struct EdgePoint {
    Point2 position;
    Point2 normal;  // unit gradient direction
};

// Gradient-magnitude ridge points inside the rectangle, sub-pixel along the gradient.
std::vector<EdgePoint> extract_edge_points(const ImageF& img, const PixelRect& rect, double relative_threshold = 0.2);

struct CurvePair {
    QuadraticCurve first;
    QuadraticCurve second;
};

// Two RANSAC line groups, each refit as a quadratic. nullopt when a group is too small.
std::optional<CurvePair> fit_curve_pair(std::span<const Point2> points, const RansacConfig& ransac);

// Point minimising the summed squared distance to all curves (Gauss-Newton on the
// linearised distances), started at `start`.
Point2 closest_point_to_curves(std::span<const QuadraticCurve> curves, const Point2& start, int iterations = 20);

struct RoughCorner {
    bool ok = false;
    Point2 position = Point2::Zero();
    std::string diagnostic;
    std::vector<QuadraticCurve> curves;
};

RoughCorner rough_corner(const ElementContour& contour, std::span<const ImageF> frames, const RansacConfig& ransac);

// ---- grid assignment ---------------------------------------------------------

// Element outline used for adjacency. quad follows the projected element shape;
// the rectangles overestimate strongly sheared elements.
enum class RectKind { quad, min_area, axis_aligned };

struct ElementNode {
    std::array<Point2, 4> rect{};
    Point2 rough = Point2::Zero();
    int contour_index = -1;
};

using Graph = std::vector<std::vector<int>>;

Graph build_adjacency(std::span<const ElementNode> nodes);

std::array<Point2, 4> node_rect(const ElementContour& contour, RectKind kind);

struct GridEntry {
    Point2 pixel = Point2::Zero();
    double u = 0.0;
    double v = 0.0;
    bool valid = false;
    int node = -1;
};

struct CornerGrid {
    int rows = 0;
    int cols = 0;
    std::vector<GridEntry> entries;  // row-major

    GridEntry& at(int i, int j) { return entries[static_cast<std::size_t>(i) * cols + j]; }
    const GridEntry& at(int i, int j) const { return entries[static_cast<std::size_t>(i) * cols + j]; }
};

struct GridResult {
    bool ok = false;
    std::string diagnostic;
    CornerGrid grid;
};

// Orders a king-move (8-neighbour) element graph into a rows x cols grid. Index
// (0, 0) goes to the boundary corner node with the smallest (y, x); j runs along
// the clockwise boundary from it. Expected dimensions of 0 are inferred.
GridResult order_grid(const Graph& graph, std::span<const ElementNode> nodes, int expected_rows = 0,
                      int expected_cols = 0, double cell_size = 1.0);

// Signed areas of all 2x2 cells share one sign.
bool grid_has_consistent_orientation(const CornerGrid& grid);

// ---- pipeline ----------------------------------------------------------------

struct DetectOptions {
    ResponseOptions response;
    RansacConfig ransac;
    RectKind rect_kind = RectKind::quad;
    double min_element_area = 25.0;
};

struct DetectionResult {
    bool ok = false;
    std::string diagnostic;
    CornerGrid grid;
    ResponseMap response;
    ContourSet contours;
    std::vector<ElementNode> nodes;
};

// Full initialisation on a rotating-star capture sequence.
DetectionResult detect_corners(std::span<const ImageF> frames, const PatternSpec& spec,
                               const DetectOptions& options = {});

}  // namespace rotstar
