#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rotstar/detect.hpp"
#include "rotstar/error.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/optics.hpp"

using namespace rotstar;

namespace {

RigGeometry small_rig() {
    RigGeometry g;
    g.grid_rows = 4;
    g.grid_cols = 4;
    g.cell_px = 64.0;
    g.stripe_fraction = 0.1;
    g.supersample = 2;
    return g;
}

std::vector<ImageF> render_sequence(const RigGeometry& g, const BoardPose& pose, double sigma, std::uint64_t seed) {
    const PatternFunction pattern(g.pattern_spec(PatternKind::rotating_star));
    const PsfKernel psf = psf_from_wavefront({}, 64, 9, 2);
    std::vector<ImageF> frames;
    for (int k = 0; k < pattern.n_frames(); ++k) {
        frames.push_back(render_capture(pattern, k, pose, psf, g.image_size(), g.supersample,
                                        {sigma, derive_seed(seed, {static_cast<std::uint64_t>(k)})}));
    }
    return frames;
}

// Unit squares on a lattice, touching along edges and at corners.
std::vector<ElementNode> square_nodes(int rows, int cols) {
    std::vector<ElementNode> nodes;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            ElementNode n;
            n.rect = {Point2(c, r), Point2(c + 1, r), Point2(c + 1, r + 1), Point2(c, r + 1)};
            n.rough = Point2(c + 0.5, r + 0.5);
            n.contour_index = static_cast<int>(nodes.size());
            nodes.push_back(n);
        }
    }
    return nodes;
}

int edge_count(const Graph& g) {
    int e = 0;
    for (const auto& n : g) e += static_cast<int>(n.size());
    return e / 2;
}

}  // namespace

TEST(ResponseMap, IdenticalFramesGiveEmptyMask) {
    const std::vector<ImageF> frames(3, ImageF(12, 10, 0.6));
    const ResponseMap r = build_response_map(frames);
    for (double v : r.accum_diff.pixels()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.binary.count(), 0u);
}

TEST(ResponseMap, AlternatingRegionIsSelected) {
    std::vector<ImageF> frames(4, ImageF(20, 16, 0.8));
    for (int k = 0; k < 4; ++k) {
        for (int y = 4; y < 9; ++y) {
            for (int x = 6; x < 15; ++x) frames[k].at(x, y) = k % 2 == 0 ? 0.0 : 1.0;
        }
    }
    const ResponseMap r = build_response_map(frames);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 20; ++x) EXPECT_EQ(r.binary.at(x, y), x >= 6 && x < 15 && y >= 4 && y < 9);
    }
}

TEST(ResponseMap, FloorKeepsResponseFinite) {
    std::vector<ImageF> frames{ImageF(8, 8, 0.0), ImageF(8, 8, 0.0)};
    frames[1].at(3, 3) = 1.0;
    const ResponseMap r = build_response_map(frames);
    for (double v : r.response.pixels()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(r.intensity_est.at(0, 0), 1.0 / 20.0);
}

TEST(ResponseMap, RejectsSingleFrame) {
    const std::vector<ImageF> one(1, ImageF(4, 4));
    EXPECT_THROW(build_response_map(one), InputError);
}

TEST(ResponseMap, RenderedSequenceHasOneHolePerElement) {
    const RigGeometry g = small_rig();
    const auto frames = render_sequence(g, g.pose(10.0, 20.0), 0.01, 4);
    const ResponseMap r = build_response_map(frames);
    const ContourSet set = extract_element_contours(r.binary);
    ASSERT_TRUE(set.ok);
    int elements = 0;
    for (const auto& c : set.enclosed) elements += c.hole && c.area >= 25.0 ? 1 : 0;
    EXPECT_EQ(elements, 9);
}

TEST(ResponseMap, InvariantToGlobalScale) {
    const RigGeometry g = small_rig();
    const auto frames = render_sequence(g, g.pose(30.0, 45.0), 0.0, 0);
    const Mask ref = build_response_map(frames).binary;
    for (double s : {0.2, 0.35, 0.5, 0.8}) {
        std::vector<ImageF> scaled = frames;
        for (auto& f : scaled) {
            for (double& v : f.pixels()) v *= s;
        }
        EXPECT_TRUE(build_response_map(scaled).binary == ref) << "scale " << s;
    }
}

TEST(EdgePoints, StepEdgeRidge) {
    ImageF img(30, 30);
    for (int y = 0; y < 30; ++y) {
        for (int x = 0; x < 30; ++x) img.at(x, y) = std::clamp(x + 0.5 - 14.3, 0.0, 1.0);
    }
    const auto pts = extract_edge_points(img, {4, 4, 22, 22});
    ASSERT_FALSE(pts.empty());
    for (const auto& p : pts) {
        EXPECT_NEAR(p.position.x(), 14.3, 0.25);
        EXPECT_NEAR(std::abs(p.normal.x()), 1.0, 1e-9);
    }
}

TEST(CurvePair, RecoversParabolaCrossing) {
    // y = 2 + 0.02 (x - 10)^2 + 0.1 (x - 10) and x = 10 - 0.03 (y - 2)^2 cross at (10, 2).
    std::vector<Point2> pts;
    for (double t = -8.0; t <= 8.0; t += 0.25) {
        pts.emplace_back(10.0 + t, 2.0 + 0.02 * t * t + 0.1 * t);
        pts.emplace_back(10.0 - 0.03 * t * t, 2.0 + t);
    }
    RansacConfig cfg;
    cfg.seed = 5;
    const auto pair = fit_curve_pair(pts, cfg);
    ASSERT_TRUE(pair.has_value());
    const std::vector<QuadraticCurve> curves{pair->first, pair->second};
    const Point2 p = closest_point_to_curves(curves, {11.0, 3.0});
    EXPECT_LT((p - Point2(10.0, 2.0)).norm(), 0.2);
}

TEST(CurvePair, TooFewPoints) {
    const std::vector<Point2> pts{{0, 0}, {1, 1}, {2, 2}};
    EXPECT_FALSE(fit_curve_pair(pts, RansacConfig{}).has_value());
}

TEST(QuadraticCurve, ClosestPointOnParabola) {
    QuadraticCurve c;
    c.origin = Point2(1.0, -1.0);
    c.coeffs = {0.5, 0.1, 0.0};  // y + 1 = (x - 1)^2 / 2 + 0.1 (x - 1)
    const Point2 target(1.5, 2.0);
    Point2 n;
    const Point2 q = c.closest_point(target, &n);
    double best_s = 0.0, best_d = 1e18;
    for (double t = -5.0; t <= 5.0; t += 1e-5) {
        const double d = (c.at(t) - target).squaredNorm();
        if (d < best_d) best_d = d, best_s = t;
    }
    EXPECT_LT((q - c.at(best_s)).norm(), 1e-4);
    EXPECT_NEAR(std::abs(n.dot((target - q).normalized())), 1.0, 1e-9);
}

TEST(RoughCorner, PerpendicularEdges) {
    const Point2 p(30.4, 29.7);
    ImageF img(60, 60);
    for (int y = 0; y < 60; ++y) {
        for (int x = 0; x < 60; ++x) {
            const double a = std::clamp(x + 0.5 - p.x(), 0.0, 1.0);
            const double b = std::clamp(y + 0.5 - p.y(), 0.0, 1.0);
            img.at(x, y) = a * (1 - b) + (1 - a) * b;
        }
    }
    Mask region(60, 60);
    for (int y = 8; y < 52; ++y) {
        for (int x = 8; x < 52; ++x) region.set(x, y, true);
    }
    const auto contours = trace_contours(region);
    ASSERT_EQ(contours.size(), 1u);
    const std::vector<ImageF> frames{img};
    const RoughCorner rc = rough_corner(contours[0], frames, RansacConfig{});
    ASSERT_TRUE(rc.ok) << rc.diagnostic;
    EXPECT_LT((rc.position - p).norm(), 0.5);
}

TEST(RoughCorner, SmallElementRejected) {
    Mask region(20, 20);
    for (int y = 8; y < 12; ++y) {
        for (int x = 8; x < 12; ++x) region.set(x, y, true);
    }
    const auto contours = trace_contours(region);
    const std::vector<ImageF> frames{ImageF(20, 20)};
    EXPECT_FALSE(rough_corner(contours[0], frames, RansacConfig{}).ok);
}

TEST(Adjacency, SharedCornerAndDistantSquares) {
    std::vector<ElementNode> nodes(2);
    nodes[0].rect = {Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)};
    nodes[1].rect = {Point2(1, 1), Point2(2, 1), Point2(2, 2), Point2(1, 2)};
    EXPECT_EQ(edge_count(build_adjacency(nodes)), 1);
    nodes[1].rect = {Point2(6, 0), Point2(7, 0), Point2(7, 1), Point2(6, 1)};
    EXPECT_EQ(edge_count(build_adjacency(nodes)), 0);
}

TEST(Adjacency, KingGraphOnSquareLattice) {
    const auto nodes = square_nodes(4, 5);
    const Graph g = build_adjacency(nodes);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 5; ++c) {
            const int v = r * 5 + c;
            const bool er = r == 0 || r == 3, ec = c == 0 || c == 4;
            const std::size_t expect = er && ec ? 3u : (er || ec ? 5u : 8u);
            EXPECT_EQ(g[static_cast<std::size_t>(v)].size(), expect) << r << "," << c;
            for (int u : g[static_cast<std::size_t>(v)]) {
                EXPECT_NE(u, v);
                const auto& back = g[static_cast<std::size_t>(u)];
                EXPECT_NE(std::find(back.begin(), back.end(), v), back.end());
            }
        }
    }
}

TEST(Adjacency, ShearedLatticeKeepsKingGraph) {
    auto nodes = square_nodes(3, 3);
    Eigen::Matrix2d a;
    a << 1.0, 0.9, 0.0, 0.35;  // strong shear and foreshortening
    for (auto& n : nodes) {
        for (auto& p : n.rect) p = a * p;
    }
    const Graph g = build_adjacency(nodes);
    EXPECT_EQ(edge_count(g), 20);
    EXPECT_EQ(g[4].size(), 8u);
}

TEST(OrderGrid, TwoByTwo) {
    const auto nodes = square_nodes(2, 2);
    const GridResult r = order_grid(build_adjacency(nodes), nodes);
    ASSERT_TRUE(r.ok) << r.diagnostic;
    EXPECT_EQ(r.grid.rows, 2);
    EXPECT_EQ(r.grid.cols, 2);
    EXPECT_EQ(r.grid.at(0, 0).node, 0);
}

TEST(OrderGrid, LatticeIndicesMatchLayout) {
    const auto nodes = square_nodes(4, 5);
    const GridResult r = order_grid(build_adjacency(nodes), nodes, 4, 5, 2.0);
    ASSERT_TRUE(r.ok) << r.diagnostic;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 5; ++j) {
            const GridEntry& e = r.grid.at(i, j);
            EXPECT_EQ(e.node, i * 5 + j);
            EXPECT_DOUBLE_EQ(e.u, (j + 1) * 2.0);
            EXPECT_DOUBLE_EQ(e.v, (i + 1) * 2.0);
            EXPECT_TRUE(e.valid);
        }
    }
    EXPECT_TRUE(grid_has_consistent_orientation(r.grid));
}

TEST(OrderGrid, PermutationEquivariant) {
    const auto nodes = square_nodes(4, 4);
    const GridResult ref = order_grid(build_adjacency(nodes), nodes);
    ASSERT_TRUE(ref.ok);
    std::vector<int> perm(nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(7);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ElementNode> shuffled;
    for (int p : perm) shuffled.push_back(nodes[static_cast<std::size_t>(p)]);
    const GridResult r = order_grid(build_adjacency(shuffled), shuffled);
    ASSERT_TRUE(r.ok);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) EXPECT_EQ(perm[static_cast<std::size_t>(r.grid.at(i, j).node)], ref.grid.at(i, j).node);
    }
}

TEST(OrderGrid, MissingElementIsReported) {
    auto nodes = square_nodes(3, 4);
    nodes.erase(nodes.begin() + 5);
    const GridResult r = order_grid(build_adjacency(nodes), nodes, 3, 4);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.diagnostic.empty());
    const GridResult inferred = order_grid(build_adjacency(nodes), nodes);
    EXPECT_FALSE(inferred.ok);
}

TEST(OrderGrid, FoldOverDetected) {
    CornerGrid g;
    g.rows = 2;
    g.cols = 3;
    g.entries.resize(6);
    const Point2 px[6] = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {2, 1}};
    for (int k = 0; k < 6; ++k) g.entries[static_cast<std::size_t>(k)] = {px[k], 0, 0, true, k};
    EXPECT_TRUE(grid_has_consistent_orientation(g));
    std::swap(g.entries[2].pixel, g.entries[5].pixel);
    EXPECT_FALSE(grid_has_consistent_orientation(g));
}

TEST(DetectCorners, EndToEndOnRenderedPoses) {
    const RigGeometry g = small_rig();
    const PatternSpec spec = g.pattern_spec(PatternKind::rotating_star);
    for (auto [phi, alpha] : {std::pair{0.0, 0.0}, std::pair{30.0, 45.0}, std::pair{60.0, 120.0}}) {
        const BoardPose pose = g.pose(phi, alpha);
        const auto frames = render_sequence(g, pose, 0.0, 0);
        const DetectionResult det = detect_corners(frames, spec);
        ASSERT_TRUE(det.ok) << phi << "/" << alpha << ": " << det.diagnostic;
        const AssignmentCheck chk = check_assignment(det.grid, spec, pose);
        EXPECT_TRUE(chk.complete);
        EXPECT_EQ(chk.mislabeled, 0);
        EXPECT_LT(chk.max_rough_error, 2.0) << phi << "/" << alpha;
    }
}

TEST(DetectCorners, BlankSequenceFails) {
    const RigGeometry g = small_rig();
    const std::vector<ImageF> frames(8, ImageF(64, 64, 0.3));
    const DetectionResult det = detect_corners(frames, g.pattern_spec(PatternKind::rotating_star));
    EXPECT_FALSE(det.ok);
    EXPECT_FALSE(det.diagnostic.empty());
}
