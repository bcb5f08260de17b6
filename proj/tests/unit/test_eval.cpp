#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "rotstar/error.hpp"
#include "rotstar/eval.hpp"

using namespace rotstar;

namespace {

double brute_range(const std::vector<Point2>& pts) {
    double best = 0.0;
    for (const auto& a : pts) {
        for (const auto& b : pts) best = std::max(best, (a - b).norm());
    }
    return best;
}

SweepConfig tiny_sweep() {
    SweepConfig c;
    c.phi_list = {10.0, 40.0};
    c.alpha_list = {0.0, 45.0};
    c.aberrations = {{"none", {}}};
    c.noise_levels = {0.0};
    c.trials = 1;
    c.methods = {RefineMethod::symmetry};
    c.patterns = {PatternKind::rotating_star};
    c.geometry.grid_rows = 3;
    c.geometry.grid_cols = 3;
    c.geometry.supersample = 4;
    c.seed = 11;
    return c;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Backproject, RoundTripUnderPoses) {
    RigGeometry g;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 6.0);
    for (double phi : {0.0, 30.0, 60.0}) {
        for (double alpha : {0.0, 45.0, 75.0, 150.0}) {
            const BoardPose pose = g.pose(phi, alpha);
            for (int n = 0; n < 20; ++n) {
                const Point2 b(u(rng), u(rng));
                EXPECT_LT((backproject_to_board(pose.project(b.x(), b.y()), pose) - b).norm(), 1e-9);
            }
        }
    }
}

TEST(Backproject, FrontoParallelIsAffine) {
    const RigGeometry g;
    const BoardPose pose = g.pose(0.0, 0.0);
    const double s = g.cell_px;
    const Point2 b = backproject_to_board({pose.intrinsics.cx + 2.5 * s, pose.intrinsics.cy - 0.5 * s}, pose);
    EXPECT_NEAR(b.x(), 3.0 + 2.5, 1e-12);
    EXPECT_NEAR(b.y(), 3.0 - 0.5, 1e-12);
}

TEST(Backproject, MatchesHomographyInverse) {
    BoardPose p;
    p.phi_deg = 30.0;
    p.alpha_deg = 45.0;
    p.standoff = 20.0;
    p.intrinsics = {800.0, 320.0, 240.0};
    const Eigen::Matrix3d hinv = p.homography().inverse();
    for (Point2 px : {Point2(100.0, 80.0), Point2(320.0, 240.0), Point2(500.5, 301.25)}) {
        const Eigen::Vector3d b = hinv * Eigen::Vector3d(px.x(), px.y(), 1.0);
        EXPECT_LT((backproject_to_board(px, p) - b.head<2>() / b.z()).norm(), 1e-6);
    }
}

TEST(PairwiseRange, Examples) {
    const std::vector<Point2> one{{2.0, 3.0}};
    EXPECT_EQ(pairwise_distance_range(one), 0.0);
    const std::vector<Point2> two{{0.0, 0.0}, {3.0, 4.0}};
    EXPECT_DOUBLE_EQ(pairwise_distance_range(two), 5.0);
    EXPECT_THROW(pairwise_distance_range(std::span<const Point2>{}), InputError);
}

TEST(PairwiseRange, MatchesDoubleLoop) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int size : {5, 63, 64, 100, 400}) {
        std::vector<Point2> pts;
        for (int i = 0; i < size; ++i) pts.emplace_back(n(rng), n(rng));
        EXPECT_EQ(pairwise_distance_range(pts), brute_range(pts)) << size;
    }
}

TEST(PairwiseRange, InvariantsUnderPermutationTranslationAndScale) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Point2> pts;
    for (int i = 0; i < 80; ++i) pts.emplace_back(u(rng), u(rng));
    const double r = pairwise_distance_range(pts);
    std::shuffle(pts.begin(), pts.end(), rng);
    EXPECT_DOUBLE_EQ(pairwise_distance_range(pts), r);
    for (auto& p : pts) p += Point2(10.0, -4.0);
    EXPECT_NEAR(pairwise_distance_range(pts), r, 1e-12);
    for (auto& p : pts) p *= 3.0;
    EXPECT_NEAR(pairwise_distance_range(pts), 3.0 * r, 1e-12);
}

TEST(GridSymmetries, CountsAndBijection) {
    EXPECT_EQ(grid_symmetries(4, 4).size(), 8u);
    EXPECT_EQ(grid_symmetries(3, 5).size(), 4u);
    for (const auto& s : grid_symmetries(3, 3)) {
        std::vector<bool> hit(9, false);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const auto [a, b] = apply_symmetry(s, 3, 3, i, j);
                ASSERT_TRUE(a >= 0 && a < 3 && b >= 0 && b < 3);
                hit[static_cast<std::size_t>(a * 3 + b)] = true;
            }
        }
        EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](bool h) { return h; }));
    }
}

TEST(CheckAssignment, ExactTransposedAndSwapped) {
    const RigGeometry g;
    const PatternSpec spec = g.pattern_spec(PatternKind::rotating_star);
    const BoardPose pose = g.pose(20.0, 30.0);
    const auto corners = corner_world_coords(spec);
    const int n = spec.grid_rows - 1;
    CornerGrid grid;
    grid.rows = n;
    grid.cols = n;
    grid.entries.resize(corners.size());
    for (const auto& c : corners) grid.at(c.i, c.j) = {pose.project(c.u, c.v) + Point2(0.3, -0.2), c.u, c.v, true, 0};
    AssignmentCheck chk = check_assignment(grid, spec, pose);
    EXPECT_TRUE(chk.complete);
    EXPECT_EQ(chk.mislabeled, 0);
    EXPECT_NEAR(chk.max_rough_error, std::hypot(0.3, 0.2), 1e-9);

    CornerGrid t = grid;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) t.at(i, j).pixel = grid.at(j, i).pixel;
    }
    EXPECT_EQ(check_assignment(t, spec, pose).mislabeled, 0);

    std::swap(grid.at(0, 1).pixel, grid.at(2, 3).pixel);
    chk = check_assignment(grid, spec, pose);
    EXPECT_EQ(chk.mislabeled, 2);

    grid.at(1, 1).valid = false;
    EXPECT_FALSE(check_assignment(grid, spec, pose).complete);
}

TEST(SweepConfig, ProfilesValidate) {
    EXPECT_NO_THROW(SweepConfig::ci().validate());
    EXPECT_NO_THROW(SweepConfig::full().validate());
    SweepConfig c = SweepConfig::ci();
    c.trials = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SweepConfig::ci();
    c.phi_list.clear();
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(SweepConfig::ci().phi_list.size(), 6u);
    EXPECT_EQ(SweepConfig::ci().alpha_list.size(), 12u);
    EXPECT_TRUE(method_applies(RefineMethod::phase, PatternKind::phase_shift));
    EXPECT_FALSE(method_applies(RefineMethod::phase, PatternKind::checkerboard));
    EXPECT_FALSE(method_applies(RefineMethod::saddle, PatternKind::phase_shift));
}

TEST(RunSweep, NoiselessSymmetricRecovery) {
    const SweepResult r = run_sweep(tiny_sweep());
    ASSERT_EQ(r.records.size(), 1u);
    const StabilityRecord& rec = r.records[0];
    EXPECT_EQ(r.corners, 4);
    EXPECT_EQ(rec.failures, 0u);
    EXPECT_EQ(rec.estimates + rec.failures, rec.expected);
    EXPECT_EQ(rec.expected, 4u * 4u);
    // Bilinear resampling leaves a ~0.01 px bias per pose.
    for (const auto& p : rec.poses) EXPECT_LT(p.mean_offset_px, 0.02);
    EXPECT_LT(rec.range_px, 0.03);
}

// Noiseless trials differ only in start perturbation and, for symmetry, the disc sample set.
TEST(RunSweep, NoiselessTrialsAgree) {
    SweepConfig c = tiny_sweep();
    c.alpha_list = {30.0};
    c.methods = {RefineMethod::symmetry, RefineMethod::saddle};
    c.patterns = {PatternKind::rotating_star, PatternKind::checkerboard};
    const SweepResult one = run_sweep(c);
    c.trials = 3;
    const SweepResult three = run_sweep(c);
    ASSERT_EQ(one.records.size(), three.records.size());
    for (std::size_t k = 0; k < one.records.size(); ++k) {
        const StabilityRecord& rec = three.records[k];
        ASSERT_EQ(rec.method, one.records[k].method);
        for (double t : rec.trial_ranges) {
            if (rec.method == RefineMethod::saddle) {
                EXPECT_NEAR(t, one.records[k].trial_ranges[0], 1e-3);
            } else {
                EXPECT_LT(t, 0.03);
            }
        }
    }
}

TEST(RunSweep, AccountingAndSkippedPoses) {
    SweepConfig c = tiny_sweep();
    c.alpha_list = {45.0, 90.0};
    c.noise_levels = {0.0, 0.05};
    c.trials = 2;
    c.methods = {RefineMethod::symmetry, RefineMethod::forstner, RefineMethod::saddle};
    c.patterns = {PatternKind::rotating_star, PatternKind::checkerboard};
    const SweepResult r = run_sweep(c);
    EXPECT_EQ(r.records.size(), 2u * 3u * 2u);
    EXPECT_EQ(r.skipped_poses.size(), 2u);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.expected, 2u * 2u * 4u);  // feasible poses x trials x corners
        EXPECT_EQ(rec.estimates + rec.failures, rec.expected);
        EXPECT_EQ(rec.trial_ranges.size(), 2u);
        EXPECT_GE(rec.range_px, 0.0);
    }
    const std::string csv = sweep_csv(r);
    EXPECT_EQ(count_lines(csv), 1u + r.records.size() * 4u);
    EXPECT_EQ(count_lines(summary_csv(r)), 1u + r.records.size());
}

TEST(RunSweep, DeterministicAcrossJobCounts) {
    SweepConfig c = tiny_sweep();
    c.noise_levels = {0.02};
    c.trials = 2;
    c.methods = {RefineMethod::symmetry, RefineMethod::saddle};
    const std::string a = sweep_csv(run_sweep(c));
    const std::string b = sweep_csv(run_sweep(c));
    c.jobs = 3;
    const std::string d = sweep_csv(run_sweep(c));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, d);
    c.seed = 12;
    c.jobs = 1;
    EXPECT_NE(a, sweep_csv(run_sweep(c)));
}

TEST(Report, EmptyAndSingleRecord) {
    EXPECT_THROW(sweep_csv(SweepResult{}), InputError);
    SweepResult r;
    StabilityRecord rec;
    rec.aberration = "none";
    rec.range_px = 0.125;
    rec.trial_ranges = {0.125};
    rec.poses.push_back({10.0, 0.0, true, 4, 0, 0.01});
    r.records.push_back(rec);
    const std::string csv = sweep_csv(r);
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
    EXPECT_EQ(row.substr(0, 5), "none,");
    EXPECT_NE(row.find("symmetry,rotating_star,10,0,ok,4,0"), std::string::npos) << row;
    const std::string svg = range_plot_svg(r, "none");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_THROW(range_plot_svg(r, "coma"), InputError);
}
