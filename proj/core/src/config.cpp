#include "rotstar/config.hpp"

#include <cmath>
#include <set>

#include "rotstar/error.hpp"
#include "rotstar/io.hpp"

namespace rotstar {
namespace {

// Field reader that names offending keys and rejects unknown ones.
class Reader {
public:
    Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const char* key) {
        known_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    std::string path(const char* key) const { return where_ + "." + key; }
    const Json& raw(const char* key) const { return j_.at(key); }

    void get(const char* key, int& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
        out = v.get<int>();
    }
    void get(const char* key, double& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        out = v.get<double>();
    }
    void get(const char* key, std::uint64_t& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError(path(key) + ": expected a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }
    void get(const char* key, bool& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        out = v.get<bool>();
    }
    void get(const char* key, std::string& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        out = v.get<std::string>();
    }
    void get(const char* key, std::vector<double>& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of numbers");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(path(key) + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
    }
    std::vector<std::string> strings(const char* key) {
        const Json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError(path(key) + ": expected an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    // Call after all get() calls.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (known_.count(key) == 0) throw ConfigError(where_ + "." + key + ": unknown key");
        }
    }

private:
    const Json& j_;
    std::string where_;
    std::set<std::string> known_;
};

template <typename F>
auto rethrow_named(const std::string& where, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace

Json load_json(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
}

void save_json(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

PatternSpec pattern_spec_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    PatternSpec s;
    if (r.has("kind")) {
        std::string kind;
        r.get("kind", kind);
        s.kind = rethrow_named(where, [&] { return pattern_kind_from_string(kind); });
    }
    r.get("grid_rows", s.grid_rows);
    r.get("grid_cols", s.grid_cols);
    r.get("cell_size", s.cell_size);
    r.get("star_segments", s.star_segments);
    r.get("n_frames", s.n_frames);
    if (r.has("stripe_width")) {
        double w = 0.0;
        r.get("stripe_width", w);
        s.stripe_width = w;
    }
    r.get("phase_period", s.phase_period);
    r.finish();
    rethrow_named(where, [&] { s.validate(); });
    return s;
}

Json to_json(const PatternSpec& s) {
    return Json{{"kind", to_string(s.kind)},
                {"grid_rows", s.grid_rows},
                {"grid_cols", s.grid_cols},
                {"cell_size", s.cell_size},
                {"star_segments", s.star_segments},
                {"n_frames", s.n_frames},
                {"stripe_width", s.effective_stripe_width()},
                {"phase_period", s.phase_period}};
}

AberrationCoeffs aberration_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    AberrationCoeffs c;
    r.get("w_tilt", c.w_tilt);
    r.get("w_focus", c.w_focus);
    r.get("w_ast", c.w_ast);
    r.get("w_coma", c.w_coma);
    r.get("w_sph", c.w_sph);
    r.finish();
    if (!c.finite()) throw ConfigError(where + ": coefficients must be finite");
    return c;
}

Json to_json(const AberrationCoeffs& c) {
    return Json{{"w_tilt", c.w_tilt}, {"w_focus", c.w_focus}, {"w_ast", c.w_ast}, {"w_coma", c.w_coma}, {"w_sph", c.w_sph}};
}

PsfOptions psf_options_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    PsfOptions o;
    r.get("pupil_grid", o.pupil_grid);
    r.get("pad_factor", o.pad_factor);
    r.get("out_size", o.out_size);
    r.finish();
    if (o.pupil_grid < 64) throw ConfigError(where + ".pupil_grid: must be >= 64");
    if (o.pad_factor < 2) throw ConfigError(where + ".pad_factor: must be >= 2");
    if (o.out_size < 1 || o.out_size % 2 == 0) throw ConfigError(where + ".out_size: must be odd");
    if (o.out_size > o.pupil_grid) throw ConfigError(where + ".out_size: must not exceed pupil_grid");
    return o;
}

Json to_json(const PsfOptions& o) {
    return Json{{"pupil_grid", o.pupil_grid}, {"pad_factor", o.pad_factor}, {"out_size", o.out_size}};
}

BoardPose pose_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    BoardPose p;
    r.get("phi_deg", p.phi_deg);
    r.get("alpha_deg", p.alpha_deg);
    r.get("standoff", p.standoff);
    r.get("pivot_u", p.pivot_u);
    r.get("pivot_v", p.pivot_v);
    if (r.has("intrinsics")) {
        Reader k(r.raw("intrinsics"), r.path("intrinsics"));
        k.get("focal_px", p.intrinsics.focal_px);
        k.get("cx", p.intrinsics.cx);
        k.get("cy", p.intrinsics.cy);
        k.finish();
    }
    r.finish();
    if (!(p.standoff > 0.0)) throw ConfigError(where + ".standoff: must be > 0");
    if (!(p.intrinsics.focal_px > 0.0)) throw ConfigError(where + ".intrinsics.focal_px: must be > 0");
    return p;
}

Json to_json(const BoardPose& p) {
    return Json{{"phi_deg", p.phi_deg},
                {"alpha_deg", p.alpha_deg},
                {"standoff", p.standoff},
                {"pivot_u", p.pivot_u},
                {"pivot_v", p.pivot_v},
                {"intrinsics", {{"focal_px", p.intrinsics.focal_px}, {"cx", p.intrinsics.cx}, {"cy", p.intrinsics.cy}}}};
}

NoiseSpec noise_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    NoiseSpec n;
    r.get("sigma_n", n.sigma_n);
    r.get("seed", n.seed);
    r.finish();
    if (!(n.sigma_n >= 0.0)) throw ConfigError(where + ".sigma_n: must be >= 0");
    return n;
}

Json to_json(const NoiseSpec& n) { return Json{{"sigma_n", n.sigma_n}, {"seed", n.seed}}; }

RefineConfig refine_config_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    RefineConfig c;
    r.get("half_window", c.half_window);
    r.get("n_samples", c.n_samples);
    r.get("max_iterations", c.max_iterations);
    r.get("lm_lambda0", c.lm_lambda0);
    r.get("lm_lambda_up", c.lm_lambda_up);
    r.get("lm_lambda_down", c.lm_lambda_down);
    r.get("convergence_tol", c.convergence_tol);
    r.get("rng_seed", c.rng_seed);
    r.finish();
    rethrow_named(where, [&] { c.validate(); });
    return c;
}

Json to_json(const RefineConfig& c) {
    return Json{{"half_window", c.half_window},       {"n_samples", c.n_samples},
                {"max_iterations", c.max_iterations}, {"lm_lambda0", c.lm_lambda0},
                {"lm_lambda_up", c.lm_lambda_up},     {"lm_lambda_down", c.lm_lambda_down},
                {"convergence_tol", c.convergence_tol}, {"rng_seed", c.rng_seed}};
}

DetectOptions detect_options_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    DetectOptions o;
    r.get("floor_fraction", o.response.floor_fraction);
    if (r.has("floor_mode")) {
        std::string m;
        r.get("floor_mode", m);
        if (m == "clamp") o.response.floor_mode = FloorMode::clamp;
        else if (m == "invert") o.response.floor_mode = FloorMode::invert;
        else throw ConfigError(r.path("floor_mode") + ": expected clamp or invert");
    }
    if (r.has("threshold")) {
        std::string m;
        r.get("threshold", m);
        if (m == "iterative_mean") o.response.threshold_mode = ThresholdMode::iterative_mean;
        else if (m == "global_mean") o.response.threshold_mode = ThresholdMode::global_mean;
        else throw ConfigError(r.path("threshold") + ": expected iterative_mean or global_mean");
    }
    if (r.has("rect")) {
        std::string m;
        r.get("rect", m);
        if (m == "quad") o.rect_kind = RectKind::quad;
        else if (m == "min_area") o.rect_kind = RectKind::min_area;
        else if (m == "axis_aligned") o.rect_kind = RectKind::axis_aligned;
        else throw ConfigError(r.path("rect") + ": expected quad, min_area or axis_aligned");
    }
    r.get("min_element_area", o.min_element_area);
    if (r.has("ransac")) {
        Reader k(r.raw("ransac"), r.path("ransac"));
        k.get("iterations", o.ransac.iterations);
        k.get("inlier_threshold", o.ransac.inlier_threshold);
        k.get("min_inlier_ratio", o.ransac.min_inlier_ratio);
        k.get("seed", o.ransac.seed);
        k.finish();
    }
    r.finish();
    if (!(o.response.floor_fraction > 0.0 && o.response.floor_fraction < 1.0)) {
        throw ConfigError(where + ".floor_fraction: must lie in (0, 1)");
    }
    if (o.ransac.iterations < 1) throw ConfigError(where + ".ransac.iterations: must be >= 1");
    if (!(o.ransac.inlier_threshold > 0.0)) throw ConfigError(where + ".ransac.inlier_threshold: must be > 0");
    return o;
}

Json to_json(const DetectOptions& o) {
    return Json{{"floor_fraction", o.response.floor_fraction},
                {"floor_mode", o.response.floor_mode == FloorMode::clamp ? "clamp" : "invert"},
                {"threshold", o.response.threshold_mode == ThresholdMode::iterative_mean ? "iterative_mean" : "global_mean"},
                {"rect", o.rect_kind == RectKind::quad       ? "quad"
                         : o.rect_kind == RectKind::min_area ? "min_area"
                                                             : "axis_aligned"},
                {"min_element_area", o.min_element_area},
                {"ransac",
                 {{"iterations", o.ransac.iterations},
                  {"inlier_threshold", o.ransac.inlier_threshold},
                  {"min_inlier_ratio", o.ransac.min_inlier_ratio},
                  {"seed", o.ransac.seed}}}};
}

RigGeometry geometry_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    RigGeometry g;
    r.get("grid_rows", g.grid_rows);
    r.get("grid_cols", g.grid_cols);
    r.get("cell_px", g.cell_px);
    r.get("stripe_fraction", g.stripe_fraction);
    r.get("star_segments", g.star_segments);
    r.get("standoff", g.standoff);
    r.get("supersample", g.supersample);
    if (r.has("psf")) g.psf = psf_options_from_json(r.raw("psf"), r.path("psf"));
    r.finish();
    rethrow_named(where, [&] { g.validate(); });
    return g;
}

Json to_json(const RigGeometry& g) {
    return Json{{"grid_rows", g.grid_rows},         {"grid_cols", g.grid_cols},   {"cell_px", g.cell_px},
                {"stripe_fraction", g.stripe_fraction}, {"star_segments", g.star_segments},
                {"standoff", g.standoff},           {"supersample", g.supersample}, {"psf", to_json(g.psf)}};
}

SweepConfig sweep_config_from_json(const Json& j, const std::string& where) {
    Reader r(j, where);
    std::string profile = "ci";
    r.get("profile", profile);
    SweepConfig c;
    if (profile == "ci") c = SweepConfig::ci();
    else if (profile == "full") c = SweepConfig::full();
    else throw ConfigError(r.path("profile") + ": expected ci or full");
    r.get("phi_list", c.phi_list);
    r.get("alpha_list", c.alpha_list);
    if (r.has("aberrations")) {
        const Json& a = r.raw("aberrations");
        if (!a.is_array()) throw ConfigError(r.path("aberrations") + ": expected an array");
        c.aberrations.clear();
        for (std::size_t k = 0; k < a.size(); ++k) {
            const std::string at = r.path("aberrations") + "[" + std::to_string(k) + "]";
            if (!a[k].is_object()) throw ConfigError(at + ": expected an object");
            AberrationCase ac;
            Json coeffs = a[k];
            if (!coeffs.contains("name") || !coeffs["name"].is_string()) throw ConfigError(at + ".name: expected a string");
            ac.name = coeffs["name"].get<std::string>();
            coeffs.erase("name");
            ac.coeffs = aberration_from_json(coeffs, at);
            c.aberrations.push_back(ac);
        }
    }
    r.get("noise_levels", c.noise_levels);
    r.get("trials", c.trials);
    if (r.has("methods")) {
        c.methods.clear();
        for (const auto& m : r.strings("methods")) {
            c.methods.push_back(rethrow_named(r.path("methods"), [&] { return refine_method_from_string(m); }));
        }
    }
    if (r.has("patterns")) {
        c.patterns.clear();
        for (const auto& p : r.strings("patterns")) {
            c.patterns.push_back(rethrow_named(r.path("patterns"), [&] { return pattern_kind_from_string(p); }));
        }
    }
    if (r.has("geometry")) {
        // Overrides apply on top of the profile geometry.
        Json g = to_json(c.geometry);
        for (const auto& [k, v] : r.raw("geometry").items()) g[k] = v;
        if (!r.raw("geometry").is_object()) throw ConfigError(r.path("geometry") + ": expected an object");
        c.geometry = geometry_from_json(g, r.path("geometry"));
    }
    if (r.has("refine")) c.refine = refine_config_from_json(r.raw("refine"), r.path("refine"));
    r.get("phase_half_window", c.phase_half_window);
    r.get("perturbation_px", c.perturbation_px);
    if (r.has("aggregation")) {
        std::string a;
        r.get("aggregation", a);
        c.aggregation = rethrow_named(r.path("aggregation"), [&] { return aggregation_from_string(a); });
    }
    if (r.has("frame")) {
        std::string f;
        r.get("frame", f);
        c.frame = rethrow_named(r.path("frame"), [&] { return range_frame_from_string(f); });
    }
    r.get("seed", c.seed);
    r.get("jobs", c.jobs);
    r.finish();
    rethrow_named(where, [&] { c.validate(); });
    return c;
}

Json to_json(const SweepConfig& c) {
    Json ab = Json::array();
    for (const auto& a : c.aberrations) {
        Json e = to_json(a.coeffs);
        e["name"] = a.name;
        ab.push_back(e);
    }
    Json methods = Json::array(), patterns = Json::array();
    for (auto m : c.methods) methods.push_back(to_string(m));
    for (auto p : c.patterns) patterns.push_back(to_string(p));
    return Json{{"phi_list", c.phi_list},
                {"alpha_list", c.alpha_list},
                {"aberrations", ab},
                {"noise_levels", c.noise_levels},
                {"trials", c.trials},
                {"methods", methods},
                {"patterns", patterns},
                {"geometry", to_json(c.geometry)},
                {"refine", to_json(c.refine)},
                {"phase_half_window", c.phase_half_window},
                {"perturbation_px", c.perturbation_px},
                {"aggregation", to_string(c.aggregation)},
                {"frame", to_string(c.frame)},
                {"seed", c.seed},
                {"jobs", c.jobs}};
}

Json to_json(const SweepResult& r) {
    Json recs = Json::array();
    for (const auto& rec : r.records) {
        Json poses = Json::array();
        for (const auto& p : rec.poses) {
            poses.push_back({{"phi_deg", p.phi_deg},
                             {"alpha_deg", p.alpha_deg},
                             {"feasible", p.feasible},
                             {"estimates", p.estimates},
                             {"failures", p.failures},
                             {"mean_offset_px", p.mean_offset_px}});
        }
        recs.push_back({{"aberration", rec.aberration},
                        {"coeffs", to_json(rec.coeffs)},
                        {"sigma_n", rec.sigma_n},
                        {"method", to_string(rec.method)},
                        {"pattern", to_string(rec.pattern)},
                        {"range_px", std::isfinite(rec.range_px) ? Json(rec.range_px) : Json(nullptr)},
                        {"range_std_px", rec.range_std_px},
                        {"trial_ranges", rec.trial_ranges},
                        {"estimates", rec.estimates},
                        {"failures", rec.failures},
                        {"expected", rec.expected},
                        {"poses", poses}});
    }
    Json skipped = Json::array();
    for (const auto& [phi, alpha] : r.skipped_poses) skipped.push_back({{"phi_deg", phi}, {"alpha_deg", alpha}});
    return Json{{"corners", r.corners}, {"trials", r.trials}, {"skipped_poses", skipped}, {"records", recs}};
}

SweepResult sweep_result_from_json(const Json& j) {
    SweepResult r;
    try {
        r.corners = j.at("corners").get<int>();
        r.trials = j.at("trials").get<int>();
        for (const auto& s : j.at("skipped_poses")) {
            r.skipped_poses.emplace_back(s.at("phi_deg").get<double>(), s.at("alpha_deg").get<double>());
        }
        for (const auto& e : j.at("records")) {
            StabilityRecord rec;
            rec.aberration = e.at("aberration").get<std::string>();
            rec.coeffs = aberration_from_json(e.at("coeffs"), "records.coeffs");
            rec.sigma_n = e.at("sigma_n").get<double>();
            rec.method = refine_method_from_string(e.at("method").get<std::string>());
            rec.pattern = pattern_kind_from_string(e.at("pattern").get<std::string>());
            rec.range_px = e.at("range_px").is_null() ? std::nan("") : e.at("range_px").get<double>();
            rec.range_std_px = e.at("range_std_px").get<double>();
            rec.trial_ranges = e.at("trial_ranges").get<std::vector<double>>();
            rec.estimates = e.at("estimates").get<std::size_t>();
            rec.failures = e.at("failures").get<std::size_t>();
            rec.expected = e.at("expected").get<std::size_t>();
            for (const auto& p : e.at("poses")) {
                PoseStat ps;
                ps.phi_deg = p.at("phi_deg").get<double>();
                ps.alpha_deg = p.at("alpha_deg").get<double>();
                ps.feasible = p.at("feasible").get<bool>();
                ps.estimates = p.at("estimates").get<std::size_t>();
                ps.failures = p.at("failures").get<std::size_t>();
                ps.mean_offset_px = p.at("mean_offset_px").get<double>();
                rec.poses.push_back(ps);
            }
            r.records.push_back(std::move(rec));
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("sweep result: ") + e.what());
    }
    return r;
}

Json to_json(const CornerGrid& g) {
    Json corners = Json::array();
    for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) {
            const auto& e = g.at(i, j);
            corners.push_back({{"i", i}, {"j", j}, {"x_px", e.pixel.x()}, {"y_px", e.pixel.y()},
                               {"u", e.u}, {"v", e.v}, {"valid", e.valid}});
        }
    }
    return Json{{"rows", g.rows}, {"cols", g.cols}, {"corners", corners}};
}

CornerGrid corner_grid_from_json(const Json& j, const std::string& where) {
    CornerGrid g;
    try {
        g.rows = j.at("rows").get<int>();
        g.cols = j.at("cols").get<int>();
        if (g.rows < 1 || g.cols < 1) throw ConfigError(where + ": rows and cols must be >= 1");
        g.entries.resize(static_cast<std::size_t>(g.rows) * g.cols);
        for (const auto& c : j.at("corners")) {
            const int i = c.at("i").get<int>(), jj = c.at("j").get<int>();
            if (i < 0 || jj < 0 || i >= g.rows || jj >= g.cols) throw ConfigError(where + ".corners: index out of range");
            auto& e = g.at(i, jj);
            e.pixel = Point2(c.at("x_px").get<double>(), c.at("y_px").get<double>());
            e.u = c.at("u").get<double>();
            e.v = c.at("v").get<double>();
            e.valid = c.at("valid").get<bool>();
        }
    } catch (const Json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return g;
}

}  // namespace rotstar
