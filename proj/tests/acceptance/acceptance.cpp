#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rotstar/detect.hpp"
#include "rotstar/error.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/optics.hpp"
#include "rotstar/patterns.hpp"
#include "rotstar/refine.hpp"

using namespace rotstar;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Options {
    int jobs = 1;
    int supersample = 4;
    std::set<int> only;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double kernel_asymmetry(const PsfKernel& psf) {
    const int s = psf.size();
    double worst = 0.0, peak = 0.0;
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            worst = std::max(worst, std::abs(psf.kernel.at(x, y) - psf.kernel.at(s - 1 - x, s - 1 - y)));
            peak = std::max(peak, psf.kernel.at(x, y));
        }
    }
    return worst / peak;
}

double kernel_sum(const PsfKernel& psf) {
    double s = 0.0;
    for (double v : psf.kernel.pixels()) s += v;
    return s;
}

Outcome psf_properties() {
    const auto t0 = std::chrono::steady_clock::now();
    const PsfOptions opt = RigGeometry{}.psf;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    double worst_even = 0.0, worst_sum = 0.0;
    for (int n = 0; n < 20; ++n) {
        AberrationCoeffs c;
        c.w_focus = u(rng);
        c.w_ast = u(rng);
        c.w_sph = u(rng);
        const PsfKernel psf = psf_from_wavefront(c, opt);
        worst_even = std::max(worst_even, kernel_asymmetry(psf));
        worst_sum = std::max(worst_sum, std::abs(kernel_sum(psf) - 1.0));
    }
    AberrationCoeffs coma;
    coma.w_coma = 4.0;
    const PsfKernel cpsf = psf_from_wavefront(coma, opt);
    const double coma_ratio = kernel_asymmetry(cpsf);
    worst_sum = std::max(worst_sum, std::abs(kernel_sum(cpsf) - 1.0));
    const double dt = seconds_since(t0);
    return {worst_even < 1e-4 && coma_ratio > 1e-2 && worst_sum <= 1e-9 && dt < 10.0,
            fmt("even max asym %.2e (< 1e-4), coma4 asym %.3f (> 1e-2), |sum-1| %.1e, %.1f s (< 10 s)", worst_even,
                coma_ratio, worst_sum, dt)};
}

SweepConfig base_sweep(const Options& opt, const std::string& aberration) {
    SweepConfig c = SweepConfig::ci();
    std::erase_if(c.aberrations, [&](const AberrationCase& a) { return a.name != aberration; });
    if (c.aberrations.empty()) throw ConfigError("ci profile lacks aberration " + aberration);
    c.jobs = opt.jobs;
    return c;
}

std::string pattern_name(PatternKind k) { return to_string(k); }

Outcome refinement_exactness(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepConfig c = base_sweep(opt, "sph4");
    c.noise_levels = {0.0};
    // Noiseless trials differ only in start perturbation and disc samples.
    c.trials = 1;
    c.methods = {RefineMethod::symmetry};
    c.keep_image_errors = true;
    const SweepResult r = run_sweep(c);
    const double dt = seconds_since(t0);
    bool pass = dt < 300.0;
    std::string detail;
    for (const auto& rec : r.records) {
        const auto within = std::count_if(rec.image_errors.begin(), rec.image_errors.end(), [](float e) { return e <= 0.02f; });
        const double frac = rec.expected ? static_cast<double>(within) / static_cast<double>(rec.expected) : 0.0;
        pass = pass && frac >= 0.99;
        detail += fmt("%s %.2f%% (%zu/%zu) ", pattern_name(rec.pattern).c_str(), 100.0 * frac, static_cast<std::size_t>(within),
                      rec.expected);
    }
    return {pass && !r.records.empty(), detail + fmt("within 0.02 px (>= 99%%), %.0f s (< 300 s)", dt)};
}

std::map<std::tuple<double, RefineMethod, PatternKind>, double> ranges(const SweepResult& r) {
    std::map<std::tuple<double, RefineMethod, PatternKind>, double> out;
    for (const auto& rec : r.records) out[{rec.sigma_n, rec.method, rec.pattern}] = rec.range_px;
    return out;
}

Outcome asymmetric_ordering(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepConfig c = base_sweep(opt, "coma4");
    c.noise_levels = {0.0, 0.02};
    c.trials = 50;
    c.methods = {RefineMethod::symmetry, RefineMethod::forstner, RefineMethod::saddle};
    c.patterns = {PatternKind::checkerboard, PatternKind::rotating_star};
    const auto m = ranges(run_sweep(c));
    bool pass = true;
    std::string detail;
    for (double s : c.noise_levels) {
        for (RefineMethod meth : c.methods) {
            const double star = m.at({s, meth, PatternKind::rotating_star});
            const double chk = m.at({s, meth, PatternKind::checkerboard});
            pass = pass && star < chk;
            detail += fmt("s%.2f %s %.3f<%.3f%s ", s, to_string(meth).c_str(), star, chk, star < chk ? "" : "!");
        }
    }
    return {pass, detail + fmt("(star < checker, %.0f s)", seconds_since(t0))};
}

Outcome noise_ordering(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepConfig c = base_sweep(opt, "sph4");
    c.noise_levels = {0.05};
    c.trials = 50;
    c.methods = {RefineMethod::symmetry, RefineMethod::forstner, RefineMethod::saddle};
    c.patterns = {PatternKind::checkerboard, PatternKind::rotating_star};
    const auto m = ranges(run_sweep(c));
    bool pass = true;
    std::string detail;
    for (PatternKind p : c.patterns) {
        const double sym = m.at({0.05, RefineMethod::symmetry, p});
        const double fo = m.at({0.05, RefineMethod::forstner, p});
        const double sa = m.at({0.05, RefineMethod::saddle, p});
        const bool ok = sa < fo && sym <= sa && sym <= fo;
        pass = pass && ok;
        detail += fmt("%s sym %.3f saddle %.3f forstner %.3f%s; ", pattern_name(p).c_str(), sym, sa, fo, ok ? "" : " !");
    }
    return {pass, detail + fmt("(saddle < forstner, symmetry <= both, %.0f s)", seconds_since(t0))};
}

PixelRect board_roi(const RigGeometry& g, const BoardPose& pose, int margin) {
    double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
    for (double u : {0.0, static_cast<double>(g.grid_cols)}) {
        for (double v : {0.0, static_cast<double>(g.grid_rows)}) {
            const Point2 p = pose.project(u, v);
            x0 = std::min(x0, p.x());
            y0 = std::min(y0, p.y());
            x1 = std::max(x1, p.x());
            y1 = std::max(y1, p.y());
        }
    }
    const ImageSize is = g.image_size();
    const int ax = std::max(0, static_cast<int>(std::floor(x0)) - margin);
    const int ay = std::max(0, static_cast<int>(std::floor(y0)) - margin);
    const int bx = std::min(is.width, static_cast<int>(std::ceil(x1)) + margin);
    const int by = std::min(is.height, static_cast<int>(std::ceil(y1)) + margin);
    return {ax, ay, bx - ax, by - ay};
}

std::vector<ImageF> render_sequence(const PatternFunction& pat, const BoardPose& pose, const PsfKernel& psf,
                                    const RigGeometry& g, int supersample, const PixelRect& roi) {
    std::vector<ImageF> frames;
    for (int f = 0; f < pat.spec().n_frames; ++f) {
        frames.push_back(render_capture(pat, f, pose, psf, g.image_size(), supersample, NoiseSpec{}, roi));
    }
    return frames;
}

Outcome detection(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const RigGeometry g;
    const SweepConfig full = SweepConfig::full();
    const PatternFunction pat(g.pattern_spec(PatternKind::rotating_star));
    const PsfKernel psf = psf_from_wavefront(AberrationCoeffs{}, g.psf);
    int poses = 0, good = 0, detected = 0, expected = 0, mislabeled = 0;
    double worst = 0.0;
    for (double phi : full.phi_list) {
        for (double alpha : full.alpha_list) {
            const BoardPose pose = g.pose(phi, alpha);
            try {
                pose.validate(pat.spec().board_width(), pat.spec().board_height());
            } catch (const PoseError&) {
                continue;
            }
            ++poses;
            const PixelRect roi = board_roi(g, pose, 24);
            const auto frames = render_sequence(pat, pose, psf, g, opt.supersample, roi);
            const DetectionResult det = detect_corners(frames, pat.spec());
            const int n = (g.grid_rows - 1) * (g.grid_cols - 1);
            expected += n;
            if (!det.ok) {
                std::fprintf(stderr, "  detection failed at phi %.0f alpha %.0f: %s\n", phi, alpha, det.diagnostic.c_str());
                continue;
            }
            const AssignmentCheck chk = check_assignment(det.grid, pat.spec(), pose, Point2(roi.x, roi.y));
            for (const auto& e : det.grid.entries) detected += e.valid ? 1 : 0;
            mislabeled += chk.mislabeled;
            worst = std::max(worst, chk.max_rough_error);
            if (chk.complete && chk.mislabeled == 0 && chk.max_rough_error <= 2.0) ++good;
        }
    }
    const bool pass = poses > 0 && good == poses && detected == expected && mislabeled == 0 && worst <= 2.0;
    return {pass, fmt("%d/%d poses ok, %d/%d corners, %d mislabeled, worst rough %.3f px (<= 2), ss %d, %.0f s", good, poses,
                      detected, expected, mislabeled, worst, opt.supersample, seconds_since(t0))};
}

ImageF random_image(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ImageF img(w, h);
    for (double& v : img.pixels()) v = u(rng);
    return img;
}

double brute_convolve_error() {
    std::mt19937_64 rng(6);
    const ImageF img = random_image(16, 16, rng);
    const ImageF k = random_image(5, 5, rng);
    const ImageF out = convolve(img, k);
    double worst = 0.0;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            double s = 0.0;
            for (int j = 0; j < 5; ++j) {
                for (int i = 0; i < 5; ++i) {
                    const int sx = std::clamp(x - (i - 2), 0, 15);
                    const int sy = std::clamp(y - (j - 2), 0, 15);
                    s += k.at(i, j) * img.at(sx, sy);
                }
            }
            worst = std::max(worst, std::abs(out.at(x, y) - s));
        }
    }
    return worst;
}

bool range_matches_double_loop() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 10.0);
    for (int size : {2, 17, 64, 500}) {
        std::vector<Point2> pts;
        for (int i = 0; i < size; ++i) pts.emplace_back(n(rng), n(rng));
        double best = 0.0;
        for (const auto& a : pts) {
            for (const auto& b : pts) best = std::max(best, (a - b).norm());
        }
        if (pairwise_distance_range(pts) != best) return false;
    }
    return true;
}

double round_trip_error() {
    const RigGeometry g;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, g.grid_cols);
    double worst = 0.0;
    for (double phi : SweepConfig::ci().phi_list) {
        for (double alpha : SweepConfig::ci().alpha_list) {
            if (alpha == 90.0) continue;
            const BoardPose pose = g.pose(phi, alpha);
            for (int k = 0; k < 10; ++k) {
                const Point2 b(u(rng), u(rng));
                worst = std::max(worst, (backproject_to_board(pose.project(b.x(), b.y()), pose) - b).norm());
            }
        }
    }
    return worst;
}

double jacobian_error() {
    // Smooth non-symmetric test frames.
    std::vector<ImageF> frames;
    for (int f = 0; f < 3; ++f) {
        ImageF img(48, 48);
        for (int y = 0; y < 48; ++y) {
            for (int x = 0; x < 48; ++x) {
                const double dx = x - 23.3, dy = y - 24.1;
                img.at(x, y) = std::tanh((dx * std::cos(0.3 * f) + dy * std::sin(0.3 * f)) / 2.0) *
                                   std::tanh((dy - 0.2 * dx) / 3.0) +
                               0.05 * f * std::sin(0.3 * x + 0.2 * y);
            }
        }
        frames.push_back(std::move(img));
    }
    const auto offsets = sample_disc_offsets(200, 8.0, 9);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    const double h = 1e-4;
    double worst = 0.0;
    for (int n = 0; n < 20; ++n) {
        const Point2 q(23.3 + u(rng), 24.1 + u(rng));
        const Point2 g = symmetry_cost(frames, q, offsets).gradient;
        Point2 fd;
        for (int a = 0; a < 2; ++a) {
            Point2 e = Point2::Zero();
            e[a] = h;
            fd[a] = (symmetry_cost(frames, q + e, offsets).cost - symmetry_cost(frames, q - e, offsets).cost) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
    }
    return worst;
}

double phase_error() {
    const double a = 0.5, b = 0.3;
    double worst = 0.0;
    std::vector<ImageF> frames(4, ImageF(32, 32));
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const double phi = 0.37 * x - 0.21 * y + 0.1;
            for (int k = 0; k < 4; ++k) frames[k].at(x, y) = a + b * std::cos(phi + k * M_PI / 2.0);
        }
    }
    const WrappedPhase w = decode_phase(frames);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const double phi = wrap_phase(0.37 * x - 0.21 * y + 0.1);
            worst = std::max(worst, std::abs(wrap_phase(w.phase.at(x, y) - phi)));
        }
    }
    return worst;
}

Outcome oracles() {
    const double conv = brute_convolve_error();
    const bool range = range_matches_double_loop();
    const double rt = round_trip_error();
    const double jac = jacobian_error();
    const double ph = phase_error();
    return {conv <= 1e-10 && range && rt <= 1e-9 && jac <= 1e-3 && ph <= 1e-9,
            fmt("convolve %.1e (<= 1e-10), range %s, round trip %.1e (<= 1e-9), jacobian rel %.1e (<= 1e-3), phase %.1e "
                "(<= 1e-9)",
                conv, range ? "exact" : "MISMATCH", rt, jac, ph)};
}

Outcome determinism() {
    SweepConfig c = SweepConfig::ci();
    c.phi_list = {20.0, 50.0};
    c.alpha_list = {15.0, 120.0};
    c.noise_levels = {0.02};
    c.trials = 3;
    c.geometry.grid_rows = 4;
    c.geometry.grid_cols = 4;
    c.geometry.supersample = 4;
    c.jobs = 1;
    const std::string a = sweep_csv(run_sweep(c));
    const std::string b = sweep_csv(run_sweep(c));
    c.jobs = 8;
    const std::string d = sweep_csv(run_sweep(c));
    return {a == b && a == d, fmt("%zu-byte CSV, repeat %s, jobs 8 %s", a.size(), a == b ? "identical" : "DIFFERS",
                                  a == d ? "identical" : "DIFFERS")};
}

Outcome binarization(const Options& opt) {
    const RigGeometry g;
    const PatternFunction pat(g.pattern_spec(PatternKind::rotating_star));
    const PsfKernel psf = psf_from_wavefront(AberrationCoeffs{}, g.psf);
    const BoardPose pose = g.pose(30.0, 45.0);
    const PixelRect roi = board_roi(g, pose, 24);
    const auto frames = render_sequence(pat, pose, psf, g, opt.supersample, roi);
    const Mask ref = build_response_map(frames).binary;
    int differing = 0;
    std::string scales;
    for (double s : {0.2, 0.35, 0.5, 0.65, 0.8, 1.0}) {
        std::vector<ImageF> scaled = frames;
        for (auto& f : scaled) {
            for (double& v : f.pixels()) v *= s;
        }
        const Mask m = build_response_map(scaled).binary;
        int diff = 0;
        for (int y = 0; y < m.height(); ++y) {
            for (int x = 0; x < m.width(); ++x) diff += m.at(x, y) != ref.at(x, y) ? 1 : 0;
        }
        differing += diff;
        scales += fmt("%.2f:%d ", s, diff);
    }
    return {differing == 0, fmt("differing mask pixels per scale %s(%dx%d mask)", scales.c_str(), ref.width(), ref.height())};
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"rotstar acceptance checks"};
    app.add_option("--jobs", opt.jobs, "worker threads for the sweeps")->check(CLI::PositiveNumber);
    app.add_option("--supersample", opt.supersample, "render supersampling for detection checks")->check(CLI::Range(4, 16));
    app.add_option("--only", opt.only, "criterion numbers to run")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"psf-properties", [] { return psf_properties(); }},
        {"refinement-exactness", [&] { return refinement_exactness(opt); }},
        {"asymmetric-psf-ordering", [&] { return asymmetric_ordering(opt); }},
        {"noise-robustness-ordering", [&] { return noise_ordering(opt); }},
        {"detection-pipeline", [&] { return detection(opt); }},
        {"oracle-equivalences", [] { return oracles(); }},
        {"determinism", [] { return determinism(); }},
        {"binarization-robustness", [&] { return binarization(opt); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!opt.only.empty() && opt.only.count(id) == 0) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
