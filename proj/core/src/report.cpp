#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "rotstar/error.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/io.hpp"

namespace rotstar {
namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void require_records(const SweepResult& result) {
    if (result.records.empty()) throw InputError("write_report: no records");
}

}  // namespace

std::string sweep_csv(const SweepResult& result) {
    require_records(result);
    std::ostringstream out;
    out << "aberration,w_tilt,w_focus,w_ast,w_coma,w_sph,sigma_n,method,pattern,phi_deg,alpha_deg,pose_status,"
           "estimates,failures,mean_offset_px,cell_range_px\n";
    for (const auto& r : result.records) {
        for (const auto& p : r.poses) {
            out << r.aberration << ',' << num(r.coeffs.w_tilt) << ',' << num(r.coeffs.w_focus) << ','
                << num(r.coeffs.w_ast) << ',' << num(r.coeffs.w_coma) << ',' << num(r.coeffs.w_sph) << ','
                << num(r.sigma_n) << ',' << to_string(r.method) << ',' << to_string(r.pattern) << ','
                << num(p.phi_deg) << ',' << num(p.alpha_deg) << ',' << (p.feasible ? "ok" : "skipped") << ','
                << p.estimates << ',' << p.failures << ',' << num(p.mean_offset_px) << ',' << num(r.range_px) << '\n';
        }
    }
    return out.str();
}

std::string summary_csv(const SweepResult& result) {
    require_records(result);
    std::ostringstream out;
    out << "aberration,sigma_n,method,pattern,range_px,range_std_px,trials,estimates,failures,expected\n";
    for (const auto& r : result.records) {
        out << r.aberration << ',' << num(r.sigma_n) << ',' << to_string(r.method) << ',' << to_string(r.pattern)
            << ',' << num(r.range_px) << ',' << num(r.range_std_px) << ',' << r.trial_ranges.size() << ','
            << r.estimates << ',' << r.failures << ',' << r.expected << '\n';
    }
    return out.str();
}

std::string range_plot_svg(const SweepResult& result, const std::string& aberration) {
    require_records(result);
    std::vector<const StabilityRecord*> recs;
    std::set<double> sigmas;
    double ymax = 0.0;
    for (const auto& r : result.records) {
        if (r.aberration != aberration) continue;
        recs.push_back(&r);
        sigmas.insert(r.sigma_n);
        if (std::isfinite(r.range_px)) ymax = std::max(ymax, r.range_px);
    }
    if (recs.empty()) throw InputError("range_plot_svg: no records for aberration '" + aberration + "'");
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;
    const std::vector<double> xs(sigmas.begin(), sigmas.end());
    const double xmin = xs.front(), xmax = xs.size() > 1 ? xs.back() : xs.front() + 1.0;

    const double w = 640, h = 420, left = 70, right = 190, top = 40, bottom = 60;
    const double pw = w - left - right, ph = h - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + ph - y / ymax * ph; };

    const std::map<RefineMethod, std::string> colors{{RefineMethod::symmetry, "#d62728"},
                                                     {RefineMethod::forstner, "#1f77b4"},
                                                     {RefineMethod::saddle, "#2ca02c"},
                                                     {RefineMethod::phase, "#9467bd"}};
    const std::map<PatternKind, std::string> dashes{{PatternKind::rotating_star, ""},
                                                    {PatternKind::checkerboard, "6,4"},
                                                    {PatternKind::star, "2,3"},
                                                    {PatternKind::phase_shift, "10,3,2,3"}};

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">Pairwise-distance range, " << aberration << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
    for (double x : xs) {
        s << "<text x=\"" << num(sx(x)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double y = ymax * k / 4.0;
        s << "<text x=\"" << left - 6 << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << num(std::round(y * 1e4) / 1e4) << "</text>\n";
        s << "<line x1=\"" << left << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << left + pw << "\" y2=\"" << num(sy(y)) << "\" stroke=\"#dddddd\"/>\n";
    }
    s << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 20 << "\" text-anchor=\"middle\">noise sigma</text>\n";
    s << "<text x=\"18\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 18 " << top + ph / 2 << ")\" text-anchor=\"middle\">range (px)</text>\n";

    std::map<std::pair<RefineMethod, PatternKind>, std::vector<std::pair<double, double>>> series;
    for (const auto* r : recs) {
        if (std::isfinite(r->range_px)) series[{r->method, r->pattern}].emplace_back(r->sigma_n, r->range_px);
    }
    int legend = 0;
    for (auto& [key, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const auto& color = colors.at(key.first);
        const auto& dash = dashes.at(key.second);
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
        if (!dash.empty()) s << " stroke-dasharray=\"" << dash << "\"";
        s << " points=\"";
        for (const auto& [x, y] : pts) s << num(sx(x)) << ',' << num(sy(y)) << ' ';
        s << "\"/>\n";
        for (const auto& [x, y] : pts) {
            s << "<circle cx=\"" << num(sx(x)) << "\" cy=\"" << num(sy(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        const double ly = top + 10 + 18 * legend++;
        s << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 45 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"";
        if (!dash.empty()) s << " stroke-dasharray=\"" << dash << "\"";
        s << "/>\n";
        s << "<text x=\"" << left + pw + 50 << "\" y=\"" << ly + 4 << "\">" << to_string(key.first) << " / "
          << to_string(key.second) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::vector<std::filesystem::path> write_report(const SweepResult& result, const std::filesystem::path& dir) {
    require_records(result);
    ensure_directory(dir);
    std::vector<std::filesystem::path> written;
    const auto sweep_path = dir / "sweep.csv";
    write_text_file(sweep_path, sweep_csv(result));
    written.push_back(sweep_path);
    const auto summary_path = dir / "summary.csv";
    write_text_file(summary_path, summary_csv(result));
    written.push_back(summary_path);
    std::vector<std::string> names;
    for (const auto& r : result.records) {
        if (std::find(names.begin(), names.end(), r.aberration) == names.end()) names.push_back(r.aberration);
    }
    for (const auto& name : names) {
        const auto path = dir / ("range_" + name + ".svg");
        write_text_file(path, range_plot_svg(result, name));
        written.push_back(path);
    }
    return written;
}

}  // namespace rotstar
