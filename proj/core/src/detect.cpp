#include "rotstar/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "rotstar/error.hpp"
#include "rotstar/optics.hpp"

namespace rotstar {

// ---- response map -------------------------------------------------------------

namespace {

double iterative_mean_threshold(std::span<const double> values, double start) {
    double t = start;
    for (int iter = 0; iter < 200; ++iter) {
        double hi_sum = 0.0, lo_sum = 0.0;
        std::size_t hi_n = 0, lo_n = 0;
        for (double v : values) {
            if (v > t) {
                hi_sum += v;
                ++hi_n;
            } else {
                lo_sum += v;
                ++lo_n;
            }
        }
        if (hi_n == 0 || lo_n == 0) return t;
        const double next = 0.5 * (hi_sum / static_cast<double>(hi_n) + lo_sum / static_cast<double>(lo_n));
        if (next == t) break;
        t = next;
    }
    return t;
}

}  // namespace

ResponseMap build_response_map(std::span<const ImageF> frames, const ResponseOptions& options) {
    if (frames.size() < 2) throw InputError("build_response_map: at least 2 frames are required");
    for (const auto& f : frames) {
        if (!f.same_shape(frames[0])) throw ShapeError("build_response_map: frame dimensions differ");
    }
    if (!(options.floor_fraction > 0.0 && options.floor_fraction < 1.0)) {
        throw ConfigError("floor_fraction: must lie in (0, 1)");
    }
    const int w = frames[0].width(), h = frames[0].height();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    ResponseMap out{ImageF(w, h), ImageF(w, h), ImageF(w, h), Mask(w, h), 0.0};
    auto acc = out.accum_diff.pixels();
    auto est = out.intensity_est.pixels();
    std::copy(frames[0].pixels().begin(), frames[0].pixels().end(), est.begin());
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const auto& prev = frames[k - 1].pixels();
        const auto& cur = frames[k].pixels();
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] += std::abs(cur[i] - prev[i]);
            est[i] = std::max(est[i], cur[i]);
        }
    }
    const double global_max = *std::max_element(est.begin(), est.end());
    const double floor_value = options.floor_fraction * global_max;
    if (!(floor_value > 0.0)) {
        // Blank sequence: nothing responds.
        std::fill(est.begin(), est.end(), 1.0);
        return out;
    }
    for (auto& v : est) {
        if (v < floor_value) v = options.floor_mode == FloorMode::clamp ? floor_value : std::max(global_max - v, floor_value);
    }
    auto resp = out.response.pixels();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        resp[i] = acc[i] / est[i];
        sum += resp[i];
    }
    const double mean = sum / static_cast<double>(n);
    out.threshold =
        options.threshold_mode == ThresholdMode::global_mean ? mean : iterative_mean_threshold(resp, mean);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out.binary.set(x, y, out.response.at(x, y) > out.threshold);
    }
    return out;
}

// ---- rough corners --------------------------------------------------------------

Point2 QuadraticCurve::at(double s) const {
    const Point2 normal(-direction.y(), direction.x());
    return origin + s * direction + (coeffs[0] * s * s + coeffs[1] * s + coeffs[2]) * normal;
}

Point2 QuadraticCurve::closest_point(const Point2& p, Point2* normal_out) const {
    const Point2 n(-direction.y(), direction.x());
    double s = (p - origin).dot(direction);
    for (int iter = 0; iter < 30; ++iter) {
        const Point2 diff = at(s) - p;
        const Point2 d1 = direction + (2.0 * coeffs[0] * s + coeffs[1]) * n;
        const Point2 d2 = 2.0 * coeffs[0] * n;
        const double g = diff.dot(d1);
        double hess = d1.squaredNorm() + diff.dot(d2);
        if (hess < 0.5 * d1.squaredNorm()) hess = d1.squaredNorm();  // keep the step a descent step
        const double step = g / hess;
        s -= step;
        if (std::abs(step) < 1e-12) break;
    }
    if (normal_out != nullptr) {
        const Point2 tangent = (direction + (2.0 * coeffs[0] * s + coeffs[1]) * n).normalized();
        *normal_out = Point2(-tangent.y(), tangent.x());
    }
    return at(s);
}

std::vector<EdgePoint> extract_edge_points(const ImageF& img, const PixelRect& rect, double relative_threshold) {
    std::vector<EdgePoint> out;
    const int x0 = std::max(rect.x, 2), y0 = std::max(rect.y, 2);
    const int x1 = std::min(rect.x + rect.width, img.width() - 2);
    const int y1 = std::min(rect.y + rect.height, img.height() - 2);
    if (x1 <= x0 || y1 <= y0) return out;
    // Sobel gradients on the rectangle grown by one pixel, for the non-maximum test.
    const int gx0 = x0 - 1, gy0 = y0 - 1, gw = x1 - x0 + 2, gh = y1 - y0 + 2;
    std::vector<Point2> grad(static_cast<std::size_t>(gw) * gh);
    std::vector<double> mag(grad.size());
    double max_mag = 0.0;
    for (int yy = 0; yy < gh; ++yy) {
        for (int xx = 0; xx < gw; ++xx) {
            const int x = gx0 + xx, y = gy0 + yy;
            const double gx = (img.at(x + 1, y - 1) + 2.0 * img.at(x + 1, y) + img.at(x + 1, y + 1) -
                               img.at(x - 1, y - 1) - 2.0 * img.at(x - 1, y) - img.at(x - 1, y + 1)) /
                              8.0;
            const double gy = (img.at(x - 1, y + 1) + 2.0 * img.at(x, y + 1) + img.at(x + 1, y + 1) -
                               img.at(x - 1, y - 1) - 2.0 * img.at(x, y - 1) - img.at(x + 1, y - 1)) /
                              8.0;
            const std::size_t i = static_cast<std::size_t>(yy) * gw + xx;
            grad[i] = Point2(gx, gy);
            mag[i] = std::hypot(gx, gy);
            if (x >= x0 && x < x1 && y >= y0 && y < y1) max_mag = std::max(max_mag, mag[i]);
        }
    }
    if (max_mag <= 0.0) return out;
    auto mag_at = [&](double x, double y) {
        // Bilinear lookup in local coordinates, clamped to the computed field.
        const double lx = std::clamp(x - gx0, 0.0, gw - 1.0), ly = std::clamp(y - gy0, 0.0, gh - 1.0);
        const int ix = std::min(static_cast<int>(lx), gw - 2), iy = std::min(static_cast<int>(ly), gh - 2);
        const double fx = lx - ix, fy = ly - iy;
        auto m = [&](int a, int b) { return mag[static_cast<std::size_t>(b) * gw + a]; };
        return (1 - fy) * ((1 - fx) * m(ix, iy) + fx * m(ix + 1, iy)) + fy * ((1 - fx) * m(ix, iy + 1) + fx * m(ix + 1, iy + 1));
    };
    const double tau = relative_threshold * max_mag;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const std::size_t i = static_cast<std::size_t>(y - gy0) * gw + (x - gx0);
            const double m0 = mag[i];
            if (m0 < tau) continue;
            const Point2 dir = grad[i] / m0;
            const double mp = mag_at(x + dir.x(), y + dir.y());
            const double mm = mag_at(x - dir.x(), y - dir.y());
            if (m0 < mp || m0 <= mm) continue;
            const double denom = mm - 2.0 * m0 + mp;
            double offset = denom < 0.0 ? 0.5 * (mm - mp) / denom : 0.0;
            offset = std::clamp(offset, -0.5, 0.5);
            out.push_back({Point2(x, y) + offset * dir, dir});
        }
    }
    return out;
}

namespace {

struct Line {
    Point2 point;
    Point2 direction;
    double distance(const Point2& p) const {
        const Point2 d = p - point;
        return std::abs(d.x() * direction.y() - d.y() * direction.x());
    }
};

std::optional<Line> fit_line_tls(std::span<const Point2> points) {
    if (points.size() < 2) return std::nullopt;
    Point2 mean = Point2::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    return Line{mean, es.eigenvectors().col(1)};
}

std::vector<std::size_t> inliers_of(const Line& line, std::span<const Point2> points, double thr) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (line.distance(points[i]) < thr) idx.push_back(i);
    }
    return idx;
}

std::optional<std::vector<std::size_t>> ransac_line(std::span<const Point2> points, const RansacConfig& cfg,
                                                    std::mt19937_64& rng) {
    if (points.size() < 2) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    std::vector<std::size_t> best;
    for (int it = 0; it < cfg.iterations; ++it) {
        const std::size_t a = pick(rng), b = pick(rng);
        const Point2 d = points[b] - points[a];
        if (a == b || d.norm() < 1e-9) continue;
        auto idx = inliers_of(Line{points[a], d.normalized()}, points, cfg.inlier_threshold);
        if (idx.size() > best.size()) best = std::move(idx);
    }
    if (best.size() < 2) return std::nullopt;
    // Polish: total-least-squares refit on the consensus set.
    for (int round = 0; round < 2; ++round) {
        std::vector<Point2> sel;
        for (auto i : best) sel.push_back(points[i]);
        auto line = fit_line_tls(sel);
        if (!line) break;
        auto idx = inliers_of(*line, points, cfg.inlier_threshold);
        if (idx.size() < 2) break;
        best = std::move(idx);
    }
    return best;
}

std::optional<QuadraticCurve> fit_quadratic(std::span<const Point2> points) {
    auto line = fit_line_tls(points);
    if (!line) return std::nullopt;
    QuadraticCurve c;
    c.origin = line->point;
    c.direction = line->direction;
    const Point2 n(-c.direction.y(), c.direction.x());
    Eigen::MatrixXd a(points.size(), 3);
    Eigen::VectorXd b(points.size());
    double smin = std::numeric_limits<double>::infinity(), smax = -smin;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point2 d = points[i] - c.origin;
        const double s = d.dot(c.direction);
        smin = std::min(smin, s);
        smax = std::max(smax, s);
        a.row(static_cast<Eigen::Index>(i)) << s * s, s, 1.0;
        b[static_cast<Eigen::Index>(i)] = d.dot(n);
    }
    if (smax - smin < 2.0) return std::nullopt;
    c.coeffs = a.colPivHouseholderQr().solve(b);
    if (!c.coeffs.allFinite()) return std::nullopt;
    return c;
}

std::optional<Point2> line_intersection(const QuadraticCurve& a, const QuadraticCurve& b) {
    Eigen::Matrix2d m;
    m.col(0) = a.direction;
    m.col(1) = -b.direction;
    if (std::abs(m.determinant()) < 1e-9) return std::nullopt;
    const Eigen::Vector2d st = m.inverse() * (b.origin - a.origin);
    return Point2(a.origin + st[0] * a.direction);
}

}  // namespace

std::optional<CurvePair> fit_curve_pair(std::span<const Point2> points, const RansacConfig& ransac) {
    const std::size_t n = points.size();
    if (n < 10) return std::nullopt;
    const double min_group = ransac.min_inlier_ratio * 0.5 * static_cast<double>(n);
    std::mt19937_64 rng(ransac.seed);
    auto first = ransac_line(points, ransac, rng);
    if (!first || static_cast<double>(first->size()) < min_group) return std::nullopt;
    std::vector<bool> used(n, false);
    for (auto i : *first) used[i] = true;
    std::vector<Point2> rest;
    for (std::size_t i = 0; i < n; ++i) {
        if (!used[i]) rest.push_back(points[i]);
    }
    auto second = ransac_line(rest, ransac, rng);
    if (!second || static_cast<double>(second->size()) < min_group) return std::nullopt;

    std::vector<Point2> g1, g2;
    for (auto i : *first) g1.push_back(points[i]);
    for (auto i : *second) g2.push_back(rest[i]);
    auto c1 = fit_quadratic(g1);
    auto c2 = fit_quadratic(g2);
    if (!c1 || !c2) return std::nullopt;
    // Nearly parallel groups do not define a crossing.
    if (std::abs(c1->direction.x() * c2->direction.y() - c1->direction.y() * c2->direction.x()) <
        std::sin(5.0 * std::numbers::pi / 180.0)) {
        return std::nullopt;
    }
    return CurvePair{*c1, *c2};
}

Point2 closest_point_to_curves(std::span<const QuadraticCurve> curves, const Point2& start, int iterations) {
    Point2 q = start;
    for (int it = 0; it < iterations; ++it) {
        Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        for (const auto& c : curves) {
            Point2 normal;
            const Point2 foot = c.closest_point(q, &normal);
            const Eigen::Matrix2d nn = normal * normal.transpose();
            a += nn;
            b += nn * foot;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a);
        if (es.eigenvalues()[0] <= 1e-9 * std::max(1.0, es.eigenvalues()[1])) break;
        const Point2 next = a.ldlt().solve(b);
        const double move = (next - q).norm();
        q = next;
        if (move < 1e-10) break;
    }
    return q;
}

RoughCorner rough_corner(const ElementContour& contour, std::span<const ImageF> frames, const RansacConfig& ransac) {
    RoughCorner out;
    if (frames.empty()) throw InputError("rough_corner: no frames");
    if (contour.area < 25.0) {
        out.diagnostic = "element area below 25 px^2";
        return out;
    }
    // Region mask over the bounding box (chain pixels count as inside).
    const PixelRect bb = contour.bbox;
    Mask region(bb.width, bb.height);
    for (const auto& p : contour.chain) {
        if (bb.contains(p.x(), p.y())) region.set(p.x() - bb.x, p.y() - bb.y, true);
    }
    for (int y = 0; y < bb.height; ++y) {
        for (int x = 0; x < bb.width; ++x) {
            if (!region.at(x, y) && point_in_polygon(Point2(bb.x + x, bb.y + y), contour.chain)) region.set(x, y, true);
        }
    }
    const int cx = static_cast<int>(std::lround(contour.centroid.x()));
    const int cy = static_cast<int>(std::lround(contour.centroid.y()));
    auto square_inside = [&](int half) {
        for (int y = cy - half; y <= cy + half; ++y) {
            for (int x = cx - half; x <= cx + half; ++x) {
                if (!region.get(x - bb.x, y - bb.y)) return false;
            }
        }
        return true;
    };
    int half = 0;
    if (!square_inside(0)) {
        out.diagnostic = "element centroid outside its region";
        return out;
    }
    while (square_inside(half + 1)) ++half;
    // Stay clear of the blurred stripe edges along the region border.
    const int edge_half = static_cast<int>(std::floor(0.75 * half));
    if (edge_half < 3) {
        out.diagnostic = "inscribed square too small";
        return out;
    }
    const PixelRect square{cx - edge_half, cy - edge_half, 2 * edge_half + 1, 2 * edge_half + 1};

    std::vector<Point2> starts;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto edges = extract_edge_points(frames[k], square);
        std::vector<Point2> pts;
        pts.reserve(edges.size());
        for (const auto& e : edges) pts.push_back(e.position);
        RansacConfig cfg = ransac;
        cfg.seed = derive_seed(ransac.seed, {static_cast<std::uint64_t>(k)});
        auto pair = fit_curve_pair(pts, cfg);
        if (!pair) continue;
        out.curves.push_back(pair->first);
        out.curves.push_back(pair->second);
        if (auto x = line_intersection(pair->first, pair->second)) starts.push_back(*x);
    }
    if (out.curves.empty()) {
        out.diagnostic = "no frame produced two edge groups";
        return out;
    }
    Point2 start = contour.centroid;
    if (!starts.empty()) {
        start = Point2::Zero();
        for (const auto& s : starts) start += s;
        start /= static_cast<double>(starts.size());
    }
    out.position = closest_point_to_curves(out.curves, start);
    if (!out.position.allFinite() || !bb.contains(static_cast<int>(std::lround(out.position.x())),
                                                  static_cast<int>(std::lround(out.position.y())))) {
        out.diagnostic = "corner estimate left the element";
        return out;
    }
    out.ok = true;
    return out;
}

// ---- adjacency ----------------------------------------------------------------

std::array<Point2, 4> node_rect(const ElementContour& contour, RectKind kind) {
    if (kind == RectKind::min_area) return contour.min_rect;
    if (kind == RectKind::quad) {
        std::vector<Point2> pts;
        pts.reserve(contour.chain.size());
        for (const auto& q : contour.chain) pts.push_back(q.cast<double>());
        return hull_quad(pts);
    }
    const double x0 = contour.bbox.x, y0 = contour.bbox.y;
    const double x1 = contour.bbox.x + contour.bbox.width - 1, y1 = contour.bbox.y + contour.bbox.height - 1;
    return {Point2(x0, y0), Point2(x1, y0), Point2(x1, y1), Point2(x0, y1)};
}

namespace {

double shortest_side(const std::array<Point2, 4>& r) {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) s = std::min(s, (r[(i + 1) % 4] - r[i]).norm());
    return s;
}

}  // namespace

Graph build_adjacency(std::span<const ElementNode> nodes) {
    // Vertex distances are measured in each outline's own affine frame, where the
    // outline is the unit square; the half-side limit then holds under shear.
    struct Frame {
        Point2 origin;
        Eigen::Matrix2d inverse;
        bool ok;
    };
    std::vector<Frame> frames;
    frames.reserve(nodes.size());
    for (const auto& n : nodes) {
        Eigen::Matrix2d basis;
        basis.col(0) = n.rect[1] - n.rect[0];
        basis.col(1) = n.rect[3] - n.rect[0];
        const double det = basis.determinant();
        const bool ok = std::abs(det) > 1e-9 * basis.squaredNorm();
        frames.push_back({n.rect[0], ok ? Eigen::Matrix2d(basis.inverse()) : Eigen::Matrix2d::Zero(), ok});
    }
    auto frame_distance = [&](std::size_t f, std::size_t other) {
        const Frame& fr = frames[f];
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& va : nodes[f].rect) {
            const Point2 a = fr.inverse * (va - fr.origin);
            for (const auto& vb : nodes[other].rect) dmin = std::min(dmin, (fr.inverse * (vb - fr.origin) - a).norm());
        }
        return dmin;
    };

    Graph g(nodes.size());
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        for (std::size_t b = a + 1; b < nodes.size(); ++b) {
            bool linked = false;
            if (frames[a].ok && frames[b].ok) {
                linked = std::max(frame_distance(a, b), frame_distance(b, a)) < 0.5;
            } else {
                double dmin = std::numeric_limits<double>::infinity();
                for (const auto& va : nodes[a].rect) {
                    for (const auto& vb : nodes[b].rect) dmin = std::min(dmin, (va - vb).norm());
                }
                linked = dmin < 0.5 * std::min(shortest_side(nodes[a].rect), shortest_side(nodes[b].rect));
            }
            if (linked) {
                g[a].push_back(static_cast<int>(b));
                g[b].push_back(static_cast<int>(a));
            }
        }
    }
    return g;
}

// ---- grid ordering ---------------------------------------------------------------

namespace {

struct Ordering {
    const Graph& graph;
    std::span<const ElementNode> nodes;
    std::vector<int> row, col;  // per node, -1 unassigned
    std::string error;

    bool adjacent(int a, int b) const {
        const auto& n = graph[static_cast<std::size_t>(a)];
        return std::find(n.begin(), n.end(), b) != n.end();
    }

    int sub_degree(int v, const std::vector<bool>& in_set) const {
        int d = 0;
        for (int u : graph[static_cast<std::size_t>(v)]) d += in_set[static_cast<std::size_t>(u)] ? 1 : 0;
        return d;
    }

    bool assign(int v, int i, int j) {
        if (row[static_cast<std::size_t>(v)] >= 0) {
            error = "node reached twice during ordering";
            return false;
        }
        row[static_cast<std::size_t>(v)] = i;
        col[static_cast<std::size_t>(v)] = j;
        return true;
    }
};

// Cyclic boundary sequence of the node set, sorted by angle about its centroid.
std::vector<int> angular_cycle(const std::vector<int>& boundary, std::span<const ElementNode> nodes) {
    Point2 c = Point2::Zero();
    for (int v : boundary) c += nodes[static_cast<std::size_t>(v)].rough;
    c /= static_cast<double>(boundary.size());
    std::vector<std::pair<double, int>> keyed;
    for (int v : boundary) {
        const Point2 d = nodes[static_cast<std::size_t>(v)].rough - c;
        keyed.emplace_back(std::atan2(d.y(), d.x()), v);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<int> out;
    for (const auto& kv : keyed) out.push_back(kv.second);
    return out;
}

bool smaller_yx(const Point2& a, const Point2& b) {
    return a.y() < b.y() || (a.y() == b.y() && a.x() < b.x());
}

// Assigns the layer made of `members` to rows [i0, i0+rows) x cols [j0, j0+cols).
// `anchor` is the node at (i0-1, j0-1) (or -1 for the outermost layer).
// `direction` is +1 (clockwise) or -1; 0 means choose on the outermost layer.
bool assign_layer(Ordering& ord, const std::vector<int>& members, int i0, int j0, int rows, int cols, int anchor,
                  int& direction) {
    const std::size_t n_all = ord.graph.size();
    std::vector<bool> in_set(n_all, false);
    for (int v : members) in_set[static_cast<std::size_t>(v)] = true;
    if (static_cast<int>(members.size()) != rows * cols) {
        ord.error = "layer has " + std::to_string(members.size()) + " nodes, expected " +
                    std::to_string(rows * cols);
        return false;
    }
    if (rows == 0 || cols == 0) return true;

    auto start_near_anchor = [&](const std::vector<int>& candidates) {
        int found = -1;
        for (int v : candidates) {
            if (ord.adjacent(v, anchor)) {
                if (found >= 0) return -2;
                found = v;
            }
        }
        return found;
    };

    if (rows == 1 || cols == 1) {
        // Path layer.
        std::vector<int> ends;
        for (int v : members) {
            const int d = ord.sub_degree(v, in_set);
            if (members.size() == 1) break;
            if (d == 1) ends.push_back(v);
            else if (d != 2) {
                ord.error = "inner path layer has a node of degree " + std::to_string(d);
                return false;
            }
        }
        int v = members.size() == 1 ? members[0] : start_near_anchor(ends);
        if (v < 0) {
            ord.error = "cannot anchor inner path layer";
            return false;
        }
        int prev = -1;
        for (int k = 0; k < static_cast<int>(members.size()); ++k) {
            if (!ord.assign(v, rows == 1 ? i0 : i0 + k, rows == 1 ? j0 + k : j0)) return false;
            int next = -1;
            for (int u : ord.graph[static_cast<std::size_t>(v)]) {
                if (in_set[static_cast<std::size_t>(u)] && u != prev && ord.row[static_cast<std::size_t>(u)] < 0) {
                    next = u;
                    break;
                }
            }
            prev = v;
            v = next;
            if (v < 0 && k + 1 < static_cast<int>(members.size())) {
                ord.error = "inner path layer is broken";
                return false;
            }
        }
        return true;
    }

    const int interior_degree = 8;
    std::vector<int> boundary, corners, interior;
    for (int v : members) {
        const int d = ord.sub_degree(v, in_set);
        if (d == 3) corners.push_back(v);
        const bool is_boundary = d < interior_degree;
        if (d != 3 && d != 5 && d != 8) {
            ord.error = "node with " + std::to_string(d) + " neighbours does not fit a grid";
            return false;
        }
        (is_boundary ? boundary : interior).push_back(v);
    }
    const int expected_boundary = 2 * (rows + cols) - 4;
    if (corners.size() != 4 || static_cast<int>(boundary.size()) != expected_boundary) {
        ord.error = "found " + std::to_string(corners.size()) + " corner nodes and " +
                    std::to_string(boundary.size()) + " boundary nodes, expected 4 and " +
                    std::to_string(expected_boundary);
        return false;
    }
    const auto cycle = angular_cycle(boundary, ord.nodes);
    const int m = static_cast<int>(cycle.size());
    for (int k = 0; k < m; ++k) {
        if (!ord.adjacent(cycle[static_cast<std::size_t>(k)], cycle[static_cast<std::size_t>((k + 1) % m)])) {
            ord.error = "boundary walk is not connected";
            return false;
        }
    }
    int start = -1;
    if (anchor < 0) {
        for (int v : corners) {
            if (start < 0 || smaller_yx(ord.nodes[static_cast<std::size_t>(v)].rough,
                                        ord.nodes[static_cast<std::size_t>(start)].rough)) {
                start = v;
            }
        }
    } else {
        start = start_near_anchor(corners);
        if (start < 0) {
            ord.error = "cannot anchor inner layer";
            return false;
        }
    }
    const int start_pos = static_cast<int>(std::find(cycle.begin(), cycle.end(), start) - cycle.begin());
    auto at = [&](int dir, int steps) {
        return cycle[static_cast<std::size_t>(((start_pos + dir * steps) % m + m) % m)];
    };
    auto is_corner = [&](int v) { return std::find(corners.begin(), corners.end(), v) != corners.end(); };
    auto side_ok = [&](int dir, int r, int c) {
        return is_corner(at(dir, c - 1)) && is_corner(at(dir, c - 1 + r - 1)) &&
               is_corner(at(dir, 2 * (c - 1) + r - 1));
    };
    if (direction == 0) {
        if (side_ok(+1, rows, cols)) direction = +1;
        else if (side_ok(-1, rows, cols)) direction = -1;
    } else if (!side_ok(direction, rows, cols)) {
        direction = 0;
    }
    if (direction == 0) {
        ord.error = "boundary side lengths do not match a " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " grid";
        return false;
    }
    int k = 0;
    for (int j = 0; j < cols - 1; ++j) {
        if (!ord.assign(at(direction, k++), i0, j0 + j)) return false;
    }
    for (int i = 0; i < rows - 1; ++i) {
        if (!ord.assign(at(direction, k++), i0 + i, j0 + cols - 1)) return false;
    }
    for (int j = cols - 1; j > 0; --j) {
        if (!ord.assign(at(direction, k++), i0 + rows - 1, j0 + j)) return false;
    }
    for (int i = rows - 1; i > 0; --i) {
        if (!ord.assign(at(direction, k++), i0 + i, j0)) return false;
    }
    if (interior.empty()) return true;
    return assign_layer(ord, interior, i0 + 1, j0 + 1, rows - 2, cols - 2, start, direction);
}

// Infers grid dimensions from corner spacing along the clockwise boundary.
bool infer_dims(const Graph& graph, std::span<const ElementNode> nodes, int& rows, int& cols, std::string& error) {
    const int n = static_cast<int>(nodes.size());
    std::vector<int> boundary;
    std::vector<bool> corner(nodes.size(), false);
    for (int v = 0; v < n; ++v) {
        const int d = static_cast<int>(graph[static_cast<std::size_t>(v)].size());
        if (d < 8) boundary.push_back(v);
        if (d == 3) corner[static_cast<std::size_t>(v)] = true;
    }
    if (boundary.empty()) {
        error = "no boundary nodes";
        return false;
    }
    const auto cycle = angular_cycle(boundary, nodes);
    std::vector<int> pos;
    for (int k = 0; k < static_cast<int>(cycle.size()); ++k) {
        if (corner[static_cast<std::size_t>(cycle[static_cast<std::size_t>(k)])]) pos.push_back(k);
    }
    if (pos.size() != 4) {
        error = "found " + std::to_string(pos.size()) + " corner nodes, expected 4";
        return false;
    }
    const int l1 = pos[1] - pos[0], l2 = pos[2] - pos[1];
    rows = l2 + 1;
    cols = l1 + 1;
    if (rows * cols != n) {
        error = "boundary implies a " + std::to_string(rows) + "x" + std::to_string(cols) + " grid but " +
                std::to_string(n) + " nodes were found";
        return false;
    }
    return true;
}

}  // namespace

bool grid_has_consistent_orientation(const CornerGrid& grid) {
    int sign = 0;
    for (int i = 0; i + 1 < grid.rows; ++i) {
        for (int j = 0; j + 1 < grid.cols; ++j) {
            const auto& a = grid.at(i, j);
            const auto& b = grid.at(i, j + 1);
            const auto& c = grid.at(i + 1, j + 1);
            const auto& d = grid.at(i + 1, j);
            if (!(a.valid && b.valid && c.valid && d.valid)) continue;
            const std::array<Point2, 4> q{a.pixel, b.pixel, c.pixel, d.pixel};
            // Every corner turn of a convex, non-folded cell has the same sign.
            for (int k = 0; k < 4; ++k) {
                const Point2 e1 = q[static_cast<std::size_t>((k + 1) % 4)] - q[static_cast<std::size_t>(k)];
                const Point2 e2 = q[static_cast<std::size_t>((k + 2) % 4)] - q[static_cast<std::size_t>((k + 1) % 4)];
                const double cr = e1.x() * e2.y() - e1.y() * e2.x();
                const int s = cr > 0 ? 1 : (cr < 0 ? -1 : 0);
                if (s == 0) return false;
                if (sign == 0) sign = s;
                if (s != sign) return false;
            }
        }
    }
    return true;
}

GridResult order_grid(const Graph& graph, std::span<const ElementNode> nodes, int expected_rows, int expected_cols,
                      double cell_size) {
    GridResult result;
    const int n = static_cast<int>(nodes.size());
    if (static_cast<int>(graph.size()) != n) throw InputError("order_grid: graph and node counts differ");
    if (n < 4) {
        result.diagnostic = "fewer than 4 elements";
        return result;
    }
    for (int v = 0; v < n; ++v) {
        for (int u : graph[static_cast<std::size_t>(v)]) {
            const auto& back = graph[static_cast<std::size_t>(u)];
            if (u == v || std::find(back.begin(), back.end(), v) == back.end()) {
                result.diagnostic = "adjacency is not symmetric";
                return result;
            }
        }
    }
    int rows = expected_rows, cols = expected_cols;
    if (rows <= 0 || cols <= 0) {
        if (!infer_dims(graph, nodes, rows, cols, result.diagnostic)) return result;
    }
    if (rows < 2 || cols < 2) {
        result.diagnostic = "grids need at least 2x2 elements";
        return result;
    }
    if (rows * cols != n) {
        result.diagnostic = "found " + std::to_string(n) + " elements, expected " + std::to_string(rows * cols);
        return result;
    }
    Ordering ord{graph, nodes, std::vector<int>(static_cast<std::size_t>(n), -1),
                 std::vector<int>(static_cast<std::size_t>(n), -1), {}};
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    int direction = 0;
    if (!assign_layer(ord, all, 0, 0, rows, cols, -1, direction)) {
        result.diagnostic = ord.error;
        return result;
    }
    CornerGrid grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.entries.resize(static_cast<std::size_t>(rows) * cols);
    for (int v = 0; v < n; ++v) {
        auto& e = grid.at(ord.row[static_cast<std::size_t>(v)], ord.col[static_cast<std::size_t>(v)]);
        if (e.node >= 0) {
            result.diagnostic = "grid index assigned twice";
            return result;
        }
        e.node = v;
        e.pixel = nodes[static_cast<std::size_t>(v)].rough;
        e.u = (ord.col[static_cast<std::size_t>(v)] + 1) * cell_size;
        e.v = (ord.row[static_cast<std::size_t>(v)] + 1) * cell_size;
        e.valid = true;
    }
    if (!grid_has_consistent_orientation(grid)) {
        result.diagnostic = "grid cells fold over";
        return result;
    }
    result.grid = std::move(grid);
    result.ok = true;
    return result;
}

// ---- pipeline ------------------------------------------------------------------

DetectionResult detect_corners(std::span<const ImageF> frames, const PatternSpec& spec, const DetectOptions& options) {
    spec.validate();
    DetectionResult out;
    out.response = build_response_map(frames, options.response);
    out.contours = extract_element_contours(out.response.binary);
    if (!out.contours.ok) {
        out.diagnostic = out.contours.diagnostic;
        return out;
    }
    std::vector<const ElementContour*> elements;
    for (const auto& c : out.contours.enclosed) {
        if (c.hole && c.area >= options.min_element_area) elements.push_back(&c);
    }
    const int expected = spec.element_rows() * spec.element_cols();
    if (static_cast<int>(elements.size()) != expected) {
        out.diagnostic = "found " + std::to_string(elements.size()) + " elements, expected " + std::to_string(expected);
        return out;
    }
    for (std::size_t k = 0; k < elements.size(); ++k) {
        RansacConfig cfg = options.ransac;
        cfg.seed = derive_seed(options.ransac.seed, {static_cast<std::uint64_t>(k)});
        const auto rc = rough_corner(*elements[k], frames, cfg);
        if (!rc.ok) {
            out.diagnostic = "element " + std::to_string(k) + ": " + rc.diagnostic;
            return out;
        }
        out.nodes.push_back({node_rect(*elements[k], options.rect_kind), rc.position, static_cast<int>(k)});
    }
    const Graph graph = build_adjacency(out.nodes);
    auto ordered = order_grid(graph, out.nodes, spec.element_rows(), spec.element_cols(), spec.cell_size);
    if (!ordered.ok) {
        out.diagnostic = ordered.diagnostic;
        return out;
    }
    out.grid = std::move(ordered.grid);
    out.ok = true;
    return out;
}

}  // namespace rotstar
