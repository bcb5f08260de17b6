#include "rotstar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "rotstar/error.hpp"
#include "rotstar/parallel.hpp"

namespace rotstar {

Point2 backproject_to_board(const Point2& pixel, const BoardPose& pose) {
    const Eigen::Matrix3d h = pose.homography();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(h);
    if (!lu.isInvertible()) throw PoseError("backproject_to_board: degenerate pose");
    const Eigen::Vector3d b = lu.solve(Eigen::Vector3d(pixel.x(), pixel.y(), 1.0));
    if (std::abs(b.z()) < 1e-15) throw PoseError("backproject_to_board: ray parallel to the board plane");
    return b.head<2>() / b.z();
}

double pairwise_distance_range(std::span<const Point2> points) {
    if (points.empty()) throw InputError("pairwise_distance_range: empty point list");
    if (points.size() < 64) {
        double best = 0.0;
        for (std::size_t a = 0; a < points.size(); ++a) {
            for (std::size_t b = a + 1; b < points.size(); ++b) best = std::max(best, (points[a] - points[b]).squaredNorm());
        }
        return std::sqrt(best);
    }
    // The farthest pair lies on the convex hull.
    const auto hull = convex_hull(std::vector<Point2>(points.begin(), points.end()));
    double best = 0.0;
    for (std::size_t a = 0; a < hull.size(); ++a) {
        for (std::size_t b = a + 1; b < hull.size(); ++b) best = std::max(best, (hull[a] - hull[b]).squaredNorm());
    }
    return std::sqrt(best);
}

std::string to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "max"; }

Aggregation aggregation_from_string(const std::string& name) {
    if (name == "mean") return Aggregation::mean;
    if (name == "max") return Aggregation::max;
    throw ConfigError("aggregation: unknown value '" + name + "' (expected mean or max)");
}

std::string to_string(RangeFrame f) { return f == RangeFrame::board ? "board" : "image"; }

RangeFrame range_frame_from_string(const std::string& name) {
    if (name == "board") return RangeFrame::board;
    if (name == "image") return RangeFrame::image;
    throw ConfigError("frame: unknown value '" + name + "' (expected board or image)");
}

// ---- rig ---------------------------------------------------------------------------

void RigGeometry::validate() const {
    if (!(cell_px > 0.0)) throw ConfigError("geometry.cell_px: must be > 0");
    if (!(standoff > 0.0)) throw ConfigError("geometry.standoff: must be > 0");
    if (supersample < 1) throw ConfigError("geometry.supersample: must be >= 1");
    if (!(stripe_fraction >= 0.0 && stripe_fraction < 0.5)) {
        throw ConfigError("geometry.stripe_fraction: must lie in [0, 0.5)");
    }
    pattern_spec(PatternKind::rotating_star).validate();
}

PatternSpec RigGeometry::pattern_spec(PatternKind kind) const {
    PatternSpec s;
    s.kind = kind;
    s.grid_rows = grid_rows;
    s.grid_cols = grid_cols;
    s.cell_size = 1.0;
    s.star_segments = star_segments;
    s.stripe_width = stripe_fraction;
    s.phase_period = 1.0;
    switch (kind) {
        case PatternKind::checkerboard:
        case PatternKind::star: s.n_frames = 1; break;
        case PatternKind::rotating_star:
        case PatternKind::phase_shift: s.n_frames = 8; break;
    }
    return s;
}

ImageSize RigGeometry::image_size() const {
    // Large enough for the board at any in-plane rotation.
    const double diag = std::hypot(grid_rows, grid_cols) * cell_px;
    const int side = static_cast<int>(std::ceil(diag)) + 64;
    return {side + (side % 2), side + (side % 2)};
}

BoardPose RigGeometry::pose(double phi_deg, double alpha_deg) const {
    const ImageSize size = image_size();
    BoardPose p;
    p.phi_deg = phi_deg;
    p.alpha_deg = alpha_deg;
    p.standoff = standoff;
    p.pivot_u = grid_cols / 2.0;
    p.pivot_v = grid_rows / 2.0;
    p.intrinsics.focal_px = cell_px * standoff;
    p.intrinsics.cx = size.width / 2.0;
    p.intrinsics.cy = size.height / 2.0;
    return p;
}

// ---- configuration -------------------------------------------------------------------

bool method_applies(RefineMethod method, PatternKind pattern) {
    return (method == RefineMethod::phase) == (pattern == PatternKind::phase_shift);
}

void SweepConfig::validate() const {
    if (phi_list.empty()) throw ConfigError("phi_list: must not be empty");
    if (alpha_list.empty()) throw ConfigError("alpha_list: must not be empty");
    if (aberrations.empty()) throw ConfigError("aberrations: must not be empty");
    if (noise_levels.empty()) throw ConfigError("noise_levels: must not be empty");
    if (methods.empty()) throw ConfigError("methods: must not be empty");
    if (patterns.empty()) throw ConfigError("patterns: must not be empty");
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    if (jobs < 1) throw ConfigError("jobs: must be >= 1");
    if (!(perturbation_px >= 0.0)) throw ConfigError("perturbation_px: must be >= 0");
    if (phase_half_window < 1) throw ConfigError("phase_half_window: must be >= 1");
    for (double s : noise_levels) {
        if (!(s >= 0.0)) throw ConfigError("noise_levels: sigma must be >= 0");
    }
    for (const auto& a : aberrations) {
        if (!a.coeffs.finite()) throw ConfigError("aberrations." + a.name + ": coefficients must be finite");
    }
    bool any = false;
    for (auto m : methods) {
        for (auto p : patterns) any = any || method_applies(m, p);
    }
    if (!any) throw ConfigError("methods/patterns: no method applies to any pattern");
    geometry.validate();
    refine.validate();
}

namespace {

std::vector<double> range_list(double first, double last, double step) {
    std::vector<double> out;
    for (double v = first; v <= last + 1e-9; v += step) out.push_back(v);
    return out;
}

}  // namespace

SweepConfig SweepConfig::ci() {
    SweepConfig c;
    c.phi_list = range_list(10, 60, 10);
    c.alpha_list = range_list(0, 165, 15);
    AberrationCoeffs sph;
    sph.w_sph = 4.0;
    AberrationCoeffs coma;
    coma.w_coma = 4.0;
    c.aberrations = {{"sph4", sph}, {"coma4", coma}};
    c.noise_levels = {0.0, 0.02, 0.05};
    c.trials = 50;
    c.methods = {RefineMethod::symmetry, RefineMethod::forstner, RefineMethod::saddle};
    c.patterns = {PatternKind::checkerboard, PatternKind::rotating_star};
    return c;
}

SweepConfig SweepConfig::full() {
    SweepConfig c = ci();
    c.geometry.grid_rows = 10;
    c.geometry.grid_cols = 10;
    c.noise_levels = {0.0, 0.01, 0.02, 0.05};
    c.methods.push_back(RefineMethod::phase);
    c.patterns = {PatternKind::checkerboard, PatternKind::rotating_star, PatternKind::star, PatternKind::phase_shift};
    return c;
}

// ---- sweep ---------------------------------------------------------------------------

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kPerturbStream = 2;
constexpr std::uint64_t kSampleStream = 3;

// Noise-free sensor patches through a shared transform-domain convolver.
class PatchRenderer {
public:
    PatchRenderer(const PsfKernel& psf, int supersample, int patch_size)
        : psf_(psf), ss_(supersample), size_(patch_size), margin_((psf.radius() + supersample - 1) / supersample) {
        const int scene = (patch_size + 2 * margin_) * supersample;
        if (psf.size() > 1) conv_ = std::make_unique<Convolver>(psf.kernel, scene, scene, EdgeMode::valid);
    }

    ImageF render(const PatternFunction& pattern, int frame, const BoardPose& pose, int x0, int y0) const {
        const PixelRect roi{x0, y0, size_, size_};
        ImageF scene = project_board_supersampled(pattern, frame, pose, roi, ss_, margin_);
        if (conv_) scene = conv_->apply(scene);
        return block_mean(scene, ss_).crop(margin_, margin_, size_, size_);
    }

private:
    const PsfKernel& psf_;
    int ss_;
    int size_;
    int margin_;
    std::unique_ptr<Convolver> conv_;
};

struct Cell {
    std::size_t aberration;
    std::size_t noise;
    RefineMethod method;
    PatternKind pattern;
    std::size_t pattern_slot;
};

enum class Slot : std::uint8_t { infeasible, ok, failed };

struct Estimate {
    float du = 0.0f;  // board-unit offset from the true corner
    float dv = 0.0f;
    float image_error = 0.0f;
    Slot slot = Slot::infeasible;
};

bool accepted(const CornerEstimate& e) {
    return e.status == RefineStatus::converged || e.status == RefineStatus::max_iterations;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const RigGeometry& geo = cfg.geometry;

    std::vector<PatternFunction> patterns;
    for (auto kind : cfg.patterns) patterns.emplace_back(geo.pattern_spec(kind));
    const auto corners = corner_world_coords(patterns.front().spec());
    const std::size_t n_corners = corners.size();

    struct PoseEntry {
        double phi, alpha;
        BoardPose pose;
        bool feasible;
    };
    std::vector<PoseEntry> poses;
    SweepResult result;
    const PatternSpec board = patterns.front().spec();
    for (double phi : cfg.phi_list) {
        for (double alpha : cfg.alpha_list) {
            PoseEntry e{phi, alpha, geo.pose(phi, alpha), true};
            try {
                e.pose.validate(board.board_width(), board.board_height());
            } catch (const PoseError&) {
                e.feasible = false;
                result.skipped_poses.emplace_back(phi, alpha);
            }
            poses.push_back(e);
        }
    }
    const std::size_t n_poses = poses.size();

    std::vector<Cell> cells;
    for (std::size_t a = 0; a < cfg.aberrations.size(); ++a) {
        for (std::size_t s = 0; s < cfg.noise_levels.size(); ++s) {
            for (auto m : cfg.methods) {
                for (std::size_t p = 0; p < cfg.patterns.size(); ++p) {
                    if (method_applies(m, cfg.patterns[p])) cells.push_back({a, s, m, cfg.patterns[p], p});
                }
            }
        }
    }
    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    auto slot_index = [&](std::size_t cell, std::size_t trial, std::size_t corner, std::size_t pose) {
        return ((cell * trials + trial) * n_corners + corner) * n_poses + pose;
    };
    std::vector<Estimate> table(cells.size() * trials * n_corners * n_poses);

    const int hw = std::max(cfg.refine.half_window, cfg.phase_half_window);
    const double px_per_unit = cfg.frame == RangeFrame::board ? geo.cell_px : 1.0;

    for (std::size_t a = 0; a < cfg.aberrations.size(); ++a) {
        const PsfKernel psf = psf_from_wavefront(cfg.aberrations[a].coeffs, geo.psf);
        // Asymmetric kernels drag every estimate along their centroid offset.
        const double drift = psf.centroid().norm() / geo.supersample;
        const int half = hw + 6 + static_cast<int>(std::ceil(cfg.perturbation_px + drift));
        const int patch = 2 * half + 1;
        const PatchRenderer renderer(psf, geo.supersample, patch);

        parallel_for(n_poses, cfg.jobs, [&](std::size_t pi) {
            const PoseEntry& pe = poses[pi];
            if (!pe.feasible) return;
            for (std::size_t c = 0; c < n_corners; ++c) {
                const Point2 truth = pe.pose.project(corners[c].u, corners[c].v);
                const int x0 = static_cast<int>(std::lround(truth.x())) - half;
                const int y0 = static_cast<int>(std::lround(truth.y())) - half;
                const Point2 origin(x0, y0);
                const Point2 local_truth = truth - origin;

                std::vector<std::vector<ImageF>> clean(patterns.size());
                for (std::size_t p = 0; p < patterns.size(); ++p) {
                    for (int f = 0; f < patterns[p].n_frames(); ++f) {
                        clean[p].push_back(renderer.render(patterns[p], f, pe.pose, x0, y0));
                    }
                }

                for (std::size_t s = 0; s < cfg.noise_levels.size(); ++s) {
                    const double sigma = cfg.noise_levels[s];
                    for (std::size_t t = 0; t < trials; ++t) {
                        std::mt19937_64 prng(derive_seed(cfg.seed, {kPerturbStream, pi, c, t}));
                        std::uniform_real_distribution<double> offset(-cfg.perturbation_px, cfg.perturbation_px);
                        const double ox = offset(prng);
                        const double oy = offset(prng);
                        const Point2 q0 = local_truth + Point2(ox, oy);

                        for (std::size_t p = 0; p < patterns.size(); ++p) {
                            const PatternKind kind = cfg.patterns[p];
                            auto noise_seed = [&](std::uint64_t frame) {
                                return derive_seed(cfg.seed, {kNoiseStream, a, s, static_cast<std::uint64_t>(kind), pi,
                                                              c, t, frame});
                            };
                            std::vector<ImageF> frames;
                            if (patterns[p].n_frames() == 1) {
                                // Single-frame arms average 8 independent noisy copies.
                                std::vector<ImageF> copies;
                                for (std::uint64_t k = 0; k < 8; ++k) {
                                    ImageF img = clean[p][0];
                                    if (sigma > 0.0) add_gaussian_noise(img, {sigma, noise_seed(k)});
                                    copies.push_back(std::move(img));
                                }
                                frames.push_back(sigma > 0.0 ? average_frames(copies) : clean[p][0]);
                            } else {
                                for (std::size_t f = 0; f < clean[p].size(); ++f) {
                                    ImageF img = clean[p][f];
                                    if (sigma > 0.0) add_gaussian_noise(img, {sigma, noise_seed(f)});
                                    frames.push_back(std::move(img));
                                }
                            }
                            std::optional<PhaseMaps> maps;

                            for (std::size_t ci = 0; ci < cells.size(); ++ci) {
                                const Cell& cell = cells[ci];
                                if (cell.aberration != a || cell.noise != s || cell.pattern_slot != p) continue;
                                RefineConfig rc = cfg.refine;
                                rc.rng_seed = derive_seed(cfg.seed, {kSampleStream, pi, c, t});
                                CornerEstimate est;
                                try {
                                    switch (cell.method) {
                                        case RefineMethod::symmetry: est = refine_symmetry(frames, q0, rc); break;
                                        case RefineMethod::forstner: est = refine_forstner(frames, q0, rc); break;
                                        case RefineMethod::saddle: est = refine_saddle(frames, q0, rc); break;
                                        case RefineMethod::phase:
                                            if (!maps) maps = decode_phase_maps(frames);
                                            est = refine_phase(*maps, Point2::Zero(), q0, cfg.phase_half_window);
                                            break;
                                    }
                                } catch (const Error&) {
                                    est.status = RefineStatus::out_of_bounds;
                                }
                                Estimate& slot = table[slot_index(ci, t, c, pi)];
                                if (!accepted(est) || !est.position.allFinite()) {
                                    slot.slot = Slot::failed;
                                    continue;
                                }
                                const Point2 global = est.position + origin;
                                const Point2 d = cfg.frame == RangeFrame::board
                                                     ? Point2(backproject_to_board(global, pe.pose) -
                                                              Point2(corners[c].u, corners[c].v))
                                                     : Point2(global - truth);
                                slot.du = static_cast<float>(d.x());
                                slot.dv = static_cast<float>(d.y());
                                slot.image_error = static_cast<float>((global - truth).norm());
                                slot.slot = Slot::ok;
                            }
                        }
                    }
                }
            }
        });
    }

    // Deterministic aggregation by cell key.
    result.corners = static_cast<int>(n_corners);
    result.trials = cfg.trials;
    std::size_t feasible_poses = 0;
    for (const auto& pe : poses) feasible_poses += pe.feasible ? 1 : 0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Cell& cell = cells[ci];
        StabilityRecord rec;
        rec.aberration = cfg.aberrations[cell.aberration].name;
        rec.coeffs = cfg.aberrations[cell.aberration].coeffs;
        rec.sigma_n = cfg.noise_levels[cell.noise];
        rec.method = cell.method;
        rec.pattern = cell.pattern;
        rec.expected = feasible_poses * trials * n_corners;
        for (std::size_t pi = 0; pi < n_poses; ++pi) {
            PoseStat ps;
            ps.phi_deg = poses[pi].phi;
            ps.alpha_deg = poses[pi].alpha;
            ps.feasible = poses[pi].feasible;
            double sum = 0.0;
            for (std::size_t t = 0; t < trials; ++t) {
                for (std::size_t c = 0; c < n_corners; ++c) {
                    const Estimate& e = table[slot_index(ci, t, c, pi)];
                    if (e.slot == Slot::ok) {
                        ++ps.estimates;
                        sum += std::hypot(static_cast<double>(e.du), static_cast<double>(e.dv)) * px_per_unit;
                        if (cfg.keep_image_errors) rec.image_errors.push_back(e.image_error);
                    } else if (e.slot == Slot::failed) {
                        ++ps.failures;
                    }
                }
            }
            ps.mean_offset_px = ps.estimates > 0 ? sum / static_cast<double>(ps.estimates) : 0.0;
            rec.estimates += ps.estimates;
            rec.failures += ps.failures;
            rec.poses.push_back(ps);
        }
        std::vector<Point2> pts;
        for (std::size_t t = 0; t < trials; ++t) {
            double agg = 0.0;
            std::size_t used = 0;
            for (std::size_t c = 0; c < n_corners; ++c) {
                pts.clear();
                for (std::size_t pi = 0; pi < n_poses; ++pi) {
                    const Estimate& e = table[slot_index(ci, t, c, pi)];
                    if (e.slot == Slot::ok) pts.emplace_back(e.du, e.dv);
                }
                if (pts.empty()) continue;
                const double r = pairwise_distance_range(pts) * px_per_unit;
                agg = cfg.aggregation == Aggregation::mean ? agg + r : std::max(agg, r);
                ++used;
            }
            if (used == 0) continue;
            if (cfg.aggregation == Aggregation::mean) agg /= static_cast<double>(used);
            rec.trial_ranges.push_back(agg);
        }
        if (!rec.trial_ranges.empty()) {
            double sum = 0.0;
            for (double r : rec.trial_ranges) sum += r;
            rec.range_px = sum / static_cast<double>(rec.trial_ranges.size());
            double var = 0.0;
            for (double r : rec.trial_ranges) var += (r - rec.range_px) * (r - rec.range_px);
            rec.range_std_px = std::sqrt(var / static_cast<double>(rec.trial_ranges.size()));
        } else {
            rec.range_px = std::numeric_limits<double>::quiet_NaN();
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ---- grid symmetry and detection checks -------------------------------------------------

std::vector<std::array<int, 4>> grid_symmetries(int rows, int cols) {
    std::vector<std::array<int, 4>> out;
    for (int transpose = 0; transpose < (rows == cols ? 2 : 1); ++transpose) {
        for (int fi = 0; fi < 2; ++fi) {
            for (int fj = 0; fj < 2; ++fj) out.push_back({transpose, fi, fj, 0});
        }
    }
    return out;
}

std::pair<int, int> apply_symmetry(const std::array<int, 4>& sym, int rows, int cols, int i, int j) {
    if (sym[1] != 0) i = rows - 1 - i;
    if (sym[2] != 0) j = cols - 1 - j;
    if (sym[0] != 0) std::swap(i, j);
    return {i, j};
}

AssignmentCheck check_assignment(const CornerGrid& grid, const PatternSpec& spec, const BoardPose& pose,
                                 const Point2& pixel_offset) {
    AssignmentCheck out;
    const int rows = spec.element_rows(), cols = spec.element_cols();
    std::vector<Point2> truth(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            truth[static_cast<std::size_t>(i) * cols + j] =
                pose.project((j + 1) * spec.cell_size, (i + 1) * spec.cell_size) - pixel_offset;
        }
    }
    out.complete = grid.rows == rows && grid.cols == cols;
    if (!out.complete) {
        out.mislabeled = rows * cols;
        return out;
    }
    int valid = 0;
    std::vector<int> nearest(grid.entries.size(), -1);
    for (std::size_t k = 0; k < grid.entries.size(); ++k) {
        const auto& e = grid.entries[k];
        if (!e.valid) continue;
        ++valid;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < truth.size(); ++t) {
            const double d = (e.pixel - truth[t]).norm();
            if (d < best) {
                best = d;
                nearest[k] = static_cast<int>(t);
            }
        }
        out.max_rough_error = std::max(out.max_rough_error, best);
    }
    out.complete = valid == rows * cols;
    int best_mis = std::numeric_limits<int>::max();
    for (const auto& sym : grid_symmetries(rows, cols)) {
        int mis = 0;
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * cols + j;
                if (!grid.entries[k].valid) continue;
                const auto [ti, tj] = apply_symmetry(sym, rows, cols, i, j);
                if (nearest[k] != ti * cols + tj) ++mis;
            }
        }
        best_mis = std::min(best_mis, mis);
    }
    out.mislabeled = best_mis;
    return out;
}

}  // namespace rotstar
