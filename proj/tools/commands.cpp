#include "commands.hpp"

#include <cstdio>
#include <iostream>
#include <set>

#include <spdlog/spdlog.h>

#include "rotstar/config.hpp"
#include "rotstar/detect.hpp"
#include "rotstar/error.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/io.hpp"
#include "rotstar/optics.hpp"
#include "rotstar/parallel.hpp"
#include "rotstar/patterns.hpp"
#include "rotstar/refine.hpp"

namespace rotstar::cli {
namespace fs = std::filesystem;

namespace {

Json load_config(const Options& opt) {
    if (opt.config.empty()) throw ConfigError("--config: a config file is required");
    if (!fs::exists(opt.config)) throw ConfigError("--config: file not found: " + opt.config.string());
    Json j = load_json(opt.config);
    if (!j.is_object()) throw ConfigError(opt.config.string() + ": top level must be an object");
    return j;
}

void check_keys(const Json& j, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) throw ConfigError(key + ": unknown key");
    }
}

const Json& require(const Json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string(key) + ": missing");
    return j.at(key);
}

template <typename T>
T number_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
    } else {
        if (!v.is_number()) throw ConfigError(std::string(key) + ": expected a number");
    }
    return v.get<T>();
}

std::string image_extension(const Json& j) {
    std::string format = "png";
    if (j.contains("format")) {
        if (!j.at("format").is_string()) throw ConfigError("format: expected a string");
        format = j.at("format").get<std::string>();
    }
    if (format != "png" && format != "pgm") throw ConfigError("format: expected png or pgm");
    return "." + format;
}

int bits_of(const Json& j, int fallback) {
    const int bits = number_or(j, "bits", fallback);
    if (bits != 8 && bits != 16) throw ConfigError("bits: expected 8 or 16");
    return bits;
}

std::string frame_name(int k, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%02d", k);
    return buf + ext;
}

std::vector<fs::path> frame_paths(const Json& j, const char* key, const fs::path& base) {
    const Json& list = require(j, key);
    if (!list.is_array() || list.empty()) throw ConfigError(std::string(key) + ": expected a non-empty array of paths");
    std::vector<fs::path> out;
    for (const auto& e : list) {
        if (!e.is_string()) throw ConfigError(std::string(key) + ": expected a non-empty array of paths");
        fs::path p = e.get<std::string>();
        out.push_back(p.is_absolute() ? p : base / p);
    }
    return out;
}

std::vector<ImageF> load_frames(const std::vector<fs::path>& paths) {
    std::vector<ImageF> frames;
    for (const auto& p : paths) frames.push_back(read_image(p));
    return frames;
}

}  // namespace

int gen_pattern(const Options& opt) {
    const Json cfg = load_config(opt);
    check_keys(cfg, {"pattern", "pixels_per_unit", "supersample", "bits", "format"});
    const PatternSpec spec = pattern_spec_from_json(require(cfg, "pattern"));
    const double ppu = number_or(cfg, "pixels_per_unit", 100.0);
    const int ss = number_or(cfg, "supersample", 4);
    if (!(ppu > 0.0)) throw ConfigError("pixels_per_unit: must be > 0");
    if (ss < 1) throw ConfigError("supersample: must be >= 1");
    const int bits = bits_of(cfg, 8);
    const std::string ext = image_extension(cfg);

    ensure_directory(opt.out);
    const PatternFunction pattern(spec);
    for (int k = 0; k < spec.n_frames; ++k) write_image(opt.out / frame_name(k, ext), rasterize(pattern, k, ppu, ss), bits);
    save_json(opt.out / "pattern.json", to_json(spec));
    std::cout << "gen-pattern: wrote " << spec.n_frames << " " << to_string(spec.kind) << " frame(s) to "
              << opt.out.string() << "\n";
    return kOk;
}

int render(const Options& opt) {
    const Json cfg = load_config(opt);
    check_keys(cfg, {"pattern", "pose", "image", "supersample", "aberration", "psf", "noise", "bits", "format"});
    const PatternSpec spec = pattern_spec_from_json(require(cfg, "pattern"));
    const BoardPose pose = cfg.contains("pose") ? pose_from_json(cfg.at("pose")) : BoardPose{};
    ImageSize size;
    if (cfg.contains("image")) {
        const Json& im = cfg.at("image");
        if (!im.is_object()) throw ConfigError("image: expected an object");
        check_keys(im, {"width", "height"});
        size.width = number_or(im, "width", size.width);
        size.height = number_or(im, "height", size.height);
        if (size.width < 1 || size.height < 1) throw ConfigError("image: width and height must be >= 1");
    }
    const int ss = number_or(cfg, "supersample", 8);
    if (ss < 1) throw ConfigError("supersample: must be >= 1");
    const AberrationCoeffs coeffs = cfg.contains("aberration") ? aberration_from_json(cfg.at("aberration")) : AberrationCoeffs{};
    const PsfOptions psf_opt = cfg.contains("psf") ? psf_options_from_json(cfg.at("psf")) : PsfOptions{};
    NoiseSpec noise = cfg.contains("noise") ? noise_from_json(cfg.at("noise")) : NoiseSpec{};
    if (opt.seed) noise.seed = *opt.seed;
    const int bits = bits_of(cfg, 16);
    const std::string ext = image_extension(cfg);
    try {
        pose.validate(spec.board_width(), spec.board_height());
    } catch (const PoseError& e) {
        throw ConfigError(std::string("pose: ") + e.what());
    }

    ensure_directory(opt.out);
    const PatternFunction pattern(spec);
    const PsfKernel psf = psf_from_wavefront(coeffs, psf_opt);
    std::vector<std::string> names(static_cast<std::size_t>(spec.n_frames));
    parallel_for(names.size(), opt.jobs, [&](std::size_t k) {
        const NoiseSpec frame_noise{noise.sigma_n, derive_seed(noise.seed, {k})};
        const ImageF img = render_capture(pattern, static_cast<int>(k), pose, psf, size, ss, frame_noise);
        names[k] = frame_name(static_cast<int>(k), ext);
        write_image(opt.out / names[k], img, bits);
    });

    Json truth = Json::array();
    for (const auto& c : corner_world_coords(spec)) {
        const Point2 p = pose.project(c.u, c.v);
        truth.push_back({{"i", c.i}, {"j", c.j}, {"u", c.u}, {"v", c.v}, {"x_px", p.x()}, {"y_px", p.y()}});
    }
    Json manifest{{"pattern", to_json(spec)},
                  {"pose", to_json(pose)},
                  {"image", {{"width", size.width}, {"height", size.height}}},
                  {"supersample", ss},
                  {"aberration", to_json(coeffs)},
                  {"psf", to_json(psf_opt)},
                  {"noise", to_json(noise)},
                  {"bits", bits},
                  {"frames", names},
                  {"truth", truth}};
    save_json(opt.out / "manifest.json", manifest);
    std::cout << "render: wrote " << names.size() << " frame(s) and manifest.json to " << opt.out.string() << "\n";
    return kOk;
}

int detect(const Options& opt) {
    const Json cfg = load_config(opt);
    const fs::path base = opt.config.parent_path();
    const PatternSpec spec = pattern_spec_from_json(require(cfg, "pattern"));
    const auto paths = frame_paths(cfg, "frames", base);
    DetectOptions dopt = cfg.contains("detect") ? detect_options_from_json(cfg.at("detect")) : DetectOptions{};
    if (opt.seed) dopt.ransac.seed = *opt.seed;
    const auto frames = load_frames(paths);
    if (frames.size() < 2) throw ConfigError("frames: detection needs at least 2 frames");

    const DetectionResult res = detect_corners(frames, spec, dopt);

    if (!opt.debug_dir.empty()) {
        ensure_directory(opt.debug_dir);
        write_normalized_pgm(opt.debug_dir / "accum_diff.pgm", res.response.accum_diff);
        write_normalized_pgm(opt.debug_dir / "intensity_est.pgm", res.response.intensity_est);
        write_normalized_pgm(opt.debug_dir / "response.pgm", res.response.response);
        write_mask_pgm(opt.debug_dir / "binary.pgm", res.response.binary);
        Json elements = Json::array();
        for (const auto& c : res.contours.enclosed) {
            Json rect = Json::array();
            for (const auto& v : c.min_rect) rect.push_back({v.x(), v.y()});
            elements.push_back({{"centroid", {c.centroid.x(), c.centroid.y()}},
                                {"area", c.area},
                                {"hole", c.hole},
                                {"chain_length", c.chain.size()},
                                {"bbox", {c.bbox.x, c.bbox.y, c.bbox.width, c.bbox.height}},
                                {"min_rect", rect}});
        }
        Json nodes = Json::array();
        const Graph graph = build_adjacency(res.nodes);
        for (std::size_t k = 0; k < res.nodes.size(); ++k) {
            nodes.push_back({{"rough", {res.nodes[k].rough.x(), res.nodes[k].rough.y()}},
                             {"contour", res.nodes[k].contour_index},
                             {"neighbors", graph[k]}});
        }
        save_json(opt.debug_dir / "contours.json",
                  Json{{"threshold", res.response.threshold}, {"elements", elements}, {"nodes", nodes}});
    }

    ensure_directory(opt.out);
    Json abs_paths = Json::array();
    for (const auto& p : paths) abs_paths.push_back(fs::absolute(p).lexically_normal().string());
    Json out{{"ok", res.ok},
             {"diagnostic", res.diagnostic},
             {"pattern", to_json(spec)},
             {"frames", abs_paths},
             {"grid", to_json(res.grid)}};
    save_json(opt.out / "corners.json", out);
    if (!res.ok) {
        std::cout << "detect: failed: " << res.diagnostic << "\n";
        return kFailure;
    }
    std::cout << "detect: " << res.grid.rows * res.grid.cols << " corners (" << res.grid.rows << "x" << res.grid.cols
              << ") written to " << (opt.out / "corners.json").string() << "\n";
    return kOk;
}

int refine(const Options& opt) {
    const Json cfg = load_config(opt);
    const fs::path base = opt.config.parent_path();
    RefineMethod method;
    try {
        method = refine_method_from_string(opt.method);
    } catch (const ConfigError&) {
        throw ConfigError("--method: expected symmetry, forstner, saddle or phase, got '" + opt.method + "'");
    }
    if (cfg.contains("ok") && cfg.at("ok").is_boolean() && !cfg.at("ok").get<bool>()) {
        std::cout << "refine: input detection failed, nothing to refine\n";
        return kFailure;
    }
    const PatternSpec spec = pattern_spec_from_json(require(cfg, "pattern"));
    CornerGrid grid = corner_grid_from_json(require(cfg, "grid"));
    RefineConfig rc = cfg.contains("refine") ? refine_config_from_json(cfg.at("refine")) : RefineConfig{};
    if (opt.seed) rc.rng_seed = *opt.seed;

    std::vector<ImageF> frames;
    std::optional<PhaseMaps> maps;
    if (method == RefineMethod::phase) {
        const auto phase = load_frames(frame_paths(cfg, "phase_frames", base));
        if (phase.size() != 8) throw ConfigError("phase_frames: expected 8 frames");
        maps = decode_phase_maps(phase);
    } else {
        frames = load_frames(frame_paths(cfg, "frames", base));
    }

    Json details = Json::array();
    std::vector<CornerEstimate> estimates(grid.entries.size());
    parallel_for(grid.entries.size(), opt.jobs, [&](std::size_t k) {
        const GridEntry& e = grid.entries[k];
        if (!e.valid) return;
        RefineConfig local = rc;
        local.rng_seed = derive_seed(rc.rng_seed, {k});
        CornerEstimate est;
        try {
            switch (method) {
                case RefineMethod::symmetry: est = refine_symmetry(frames, e.pixel, local); break;
                case RefineMethod::forstner: est = refine_forstner(frames, e.pixel, local); break;
                case RefineMethod::saddle: est = refine_saddle(frames, e.pixel, local); break;
                case RefineMethod::phase: {
                    const double p = spec.phase_period;
                    const Point2 target(wrap_phase(2.0 * std::numbers::pi * e.u / p), wrap_phase(2.0 * std::numbers::pi * e.v / p));
                    est = refine_phase(*maps, target, e.pixel);
                    break;
                }
            }
        } catch (const Error&) {
            est.position = e.pixel;
            est.status = RefineStatus::out_of_bounds;
        }
        estimates[k] = est;
    });
    int failed = 0;
    for (std::size_t k = 0; k < grid.entries.size(); ++k) {
        GridEntry& e = grid.entries[k];
        if (!e.valid) continue;
        const CornerEstimate& est = estimates[k];
        const bool ok = est.status == RefineStatus::converged || est.status == RefineStatus::max_iterations;
        details.push_back({{"i", static_cast<int>(k) / grid.cols},
                           {"j", static_cast<int>(k) % grid.cols},
                           {"status", to_string(est.status)},
                           {"iterations", est.iterations},
                           {"final_cost", est.final_cost},
                           {"initial_x_px", e.pixel.x()},
                           {"initial_y_px", e.pixel.y()}});
        if (ok) {
            e.pixel = est.position;
        } else {
            e.valid = false;
            ++failed;
        }
    }
    ensure_directory(opt.out);
    Json out = cfg;
    out["grid"] = to_json(grid);
    out["method"] = to_string(method);
    out["refine"] = to_json(rc);
    out["details"] = details;
    save_json(opt.out / "refined.json", out);
    std::cout << "refine: " << to_string(method) << ", " << grid.entries.size() - static_cast<std::size_t>(failed)
              << " refined, " << failed << " failed, written to " << (opt.out / "refined.json").string() << "\n";
    return kOk;
}

int sweep(const Options& opt) {
    SweepConfig cfg;
    if (!opt.config.empty()) {
        Json j = load_config(opt);
        if (opt.full && !j.contains("profile")) j["profile"] = "full";
        cfg = sweep_config_from_json(j);
    } else {
        cfg = opt.full ? SweepConfig::full() : SweepConfig::ci();
    }
    if (opt.seed) cfg.seed = *opt.seed;
    cfg.jobs = opt.jobs;
    cfg.validate();

    const SweepResult result = run_sweep(cfg);
    ensure_directory(opt.out);
    const auto files = write_report(result, opt.out);
    save_json(opt.out / "sweep_config.json", to_json(cfg));
    save_json(opt.out / "sweep_result.json", to_json(result));
    int aborted = 0;
    for (const auto& r : result.records) aborted += std::isfinite(r.range_px) ? 0 : 1;
    std::cout << "sweep: " << result.records.size() << " cells, " << result.skipped_poses.size()
              << " pose(s) skipped, " << aborted << " aborted; report in " << opt.out.string() << "\n";
    return aborted > 0 ? kFailure : kOk;
}

int report(const Options& opt) {
    const Json j = load_config(opt);
    const SweepResult result = sweep_result_from_json(j);
    const auto files = write_report(result, opt.out);
    std::cout << "report: wrote " << files.size() << " file(s) to " << opt.out.string() << "\n";
    return kOk;
}

}  // namespace rotstar::cli
