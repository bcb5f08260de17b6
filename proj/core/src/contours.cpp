#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>

#include "rotstar/detect.hpp"

namespace rotstar {
namespace {

// Moore neighbourhood in clockwise order (image y down), starting west.
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_of(int dx, int dy) {
    for (int d = 0; d < 8; ++d) {
        if (kDx[d] == dx && kDy[d] == dy) return d;
    }
    return -1;
}

// Boundary of the 8-connected region of `label` in `labels` that contains `start`,
// where `start` is the first region pixel in raster order (so its west neighbour
// is outside the region).
std::vector<PixelPoint> moore_trace(const std::vector<int>& labels, int width, int height, int label,
                                    PixelPoint start) {
    auto inside = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < width && y < height &&
               labels[static_cast<std::size_t>(y) * width + x] == label;
    };
    std::vector<PixelPoint> chain{start};
    // Backtrack pixel: the west neighbour, known to be outside.
    PixelPoint current = start;
    int back_dir = 0;  // direction from current to its backtrack pixel
    const int start_back = back_dir;
    const std::size_t guard = static_cast<std::size_t>(width) * height * 4 + 16;
    while (chain.size() < guard) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (back_dir + k) % 8;
            if (inside(current.x() + kDx[d], current.y() + kDy[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) return chain;  // isolated pixel
        const PixelPoint next(current.x() + kDx[found], current.y() + kDy[found]);
        // New backtrack: the neighbour examined just before `found`, seen from `next`.
        const int prev_d = (found + 7) % 8;
        const PixelPoint back(current.x() + kDx[prev_d], current.y() + kDy[prev_d]);
        const int nb = direction_of(back.x() - next.x(), back.y() - next.y());
        // Jacob's criterion: stop on re-entering the start pixel the same way as initially.
        if (next == start && nb == start_back) break;
        current = next;
        back_dir = nb;
        chain.push_back(current);
    }
    return chain;
}

ElementContour make_contour(std::vector<PixelPoint> chain, const std::vector<PixelPoint>& region, bool hole) {
    ElementContour c;
    c.chain = std::move(chain);
    c.hole = hole;
    c.area = static_cast<double>(region.size());
    Point2 sum = Point2::Zero();
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = std::numeric_limits<int>::min(), y1 = x1;
    for (const auto& p : region) {
        sum += p.cast<double>();
        x0 = std::min(x0, p.x());
        y0 = std::min(y0, p.y());
        x1 = std::max(x1, p.x());
        y1 = std::max(y1, p.y());
    }
    c.centroid = sum / std::max<double>(1.0, static_cast<double>(region.size()));
    c.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    std::vector<Point2> pts;
    pts.reserve(c.chain.size());
    for (const auto& p : c.chain) pts.push_back(p.cast<double>());
    c.min_rect = min_area_rect(pts);
    return c;
}

struct Labeling {
    std::vector<int> labels;  // -1 for unlabeled
    std::vector<std::vector<PixelPoint>> regions;
    std::vector<bool> touches_border;
};

Labeling label_components(const Mask& mask, bool value, bool eight_connected) {
    const int w = mask.width(), h = mask.height();
    Labeling out;
    out.labels.assign(static_cast<std::size_t>(w) * h, -1);
    std::deque<PixelPoint> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (mask.get(x, y) != value || out.labels[idx] >= 0) continue;
            const int label = static_cast<int>(out.regions.size());
            out.regions.emplace_back();
            out.touches_border.push_back(false);
            out.labels[idx] = label;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const PixelPoint p = queue.front();
                queue.pop_front();
                out.regions.back().push_back(p);
                if (p.x() == 0 || p.y() == 0 || p.x() == w - 1 || p.y() == h - 1) out.touches_border.back() = true;
                for (int d = 0; d < 8; ++d) {
                    if (!eight_connected && (d % 2 == 1)) continue;
                    const int nx = p.x() + kDx[d], ny = p.y() + kDy[d];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (mask.get(nx, ny) != value || out.labels[nidx] >= 0) continue;
                    out.labels[nidx] = label;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    return out;
}

void trace_all(const Labeling& lab, int w, int h, bool holes, std::vector<ElementContour>& out) {
    for (std::size_t r = 0; r < lab.regions.size(); ++r) {
        if (holes && lab.touches_border[r]) continue;
        const auto& region = lab.regions[r];
        // Regions are filled in BFS order from their first raster pixel.
        const PixelPoint start = region.front();
        auto chain = moore_trace(lab.labels, w, h, static_cast<int>(r), start);
        out.push_back(make_contour(std::move(chain), region, holes));
    }
}

double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

std::vector<ElementContour> trace_contours(const Mask& binary) {
    std::vector<ElementContour> out;
    const auto fg = label_components(binary, true, true);
    trace_all(fg, binary.width(), binary.height(), false, out);
    const auto bg = label_components(binary, false, false);
    trace_all(bg, binary.width(), binary.height(), true, out);
    return out;
}

ContourSet extract_element_contours(const Mask& binary) {
    ContourSet set;
    auto contours = trace_contours(binary);
    if (contours.empty()) {
        set.diagnostic = "no contour found";
        return set;
    }
    std::size_t longest = 0;
    for (std::size_t i = 1; i < contours.size(); ++i) {
        if (contours[i].chain.size() > contours[longest].chain.size()) longest = i;
    }
    set.outer = contours[longest];
    for (std::size_t i = 0; i < contours.size(); ++i) {
        if (i == longest) continue;
        if (point_in_polygon(contours[i].centroid, set.outer.chain)) set.enclosed.push_back(std::move(contours[i]));
    }
    set.ok = true;
    return set;
}

bool point_in_polygon(const Point2& p, std::span<const PixelPoint> polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = polygon[i].x(), yi = polygon[i].y();
        const double xj = polygon[j].x(), yj = polygon[j].y();
        if ((yi > p.y()) != (yj > p.y())) {
            const double x_cross = xj + (p.y() - yj) * (xi - xj) / (yi - yj);
            if (p.x() < x_cross) inside = !inside;
        }
    }
    return inside;
}

std::vector<Point2> convex_hull(std::vector<Point2> points) {
    std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.size() < 3) return points;
    std::vector<Point2> hull(2 * points.size());
    std::size_t k = 0;
    for (const auto& p : points) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
        const auto& p = points[i];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    return hull;
}

std::array<Point2, 4> min_area_rect(std::span<const Point2> points) {
    std::array<Point2, 4> best{};
    if (points.empty()) return best;
    const auto hull = convex_hull(std::vector<Point2>(points.begin(), points.end()));
    if (hull.size() == 1) {
        best.fill(hull[0]);
        return best;
    }
    double best_area = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point2 edge = hull[(i + 1) % hull.size()] - hull[i];
        const double len = edge.norm();
        if (len == 0.0) continue;
        const Point2 d = edge / len;
        const Point2 n(-d.y(), d.x());
        double s0 = std::numeric_limits<double>::infinity(), s1 = -s0, t0 = s0, t1 = -s0;
        for (const auto& p : hull) {
            const double s = p.dot(d), t = p.dot(n);
            s0 = std::min(s0, s);
            s1 = std::max(s1, s);
            t0 = std::min(t0, t);
            t1 = std::max(t1, t);
        }
        const double area = (s1 - s0) * (t1 - t0);
        if (area < best_area) {
            best_area = area;
            best = {s0 * d + t0 * n, s1 * d + t0 * n, s1 * d + t1 * n, s0 * d + t1 * n};
        }
    }
    return best;
}

std::array<Point2, 4> hull_quad(std::span<const Point2> points) {
    std::array<Point2, 4> quad{};
    if (points.empty()) return quad;
    const auto hull = convex_hull(std::vector<Point2>(points.begin(), points.end()));
    quad.fill(hull[0]);
    if (hull.size() < 3) {
        if (hull.size() == 2) quad[2] = quad[3] = hull[1];
        return quad;
    }
    std::size_t ia = 0, ic = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        for (std::size_t j = i + 1; j < hull.size(); ++j) {
            const double d = (hull[i] - hull[j]).squaredNorm();
            if (d > best) {
                best = d;
                ia = i;
                ic = j;
            }
        }
    }
    const Point2 a = hull[ia], c = hull[ic];
    const Point2 axis = c - a;
    Point2 b = a, d = c;
    double left = 0.0, right = 0.0;
    for (const auto& p : hull) {
        const Point2 r = p - a;
        const double side = axis.x() * r.y() - axis.y() * r.x();
        if (side > left) {
            left = side;
            b = p;
        } else if (side < right) {
            right = side;
            d = p;
        }
    }
    return {a, d, c, b};
}

}  // namespace rotstar
