#include "tripletree/viz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

namespace tripletree {
namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::pair<double, double> axis_range(const TripleTree& tree, std::size_t f) {
    if (f >= tree.dims()) return {0.0, 1.0};
    return tree.meta().ranges[f];
}

std::vector<double> edges(double lo, double hi, std::size_t n) {
    std::vector<double> out(n + 1);
    for (std::size_t i = 0; i <= n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
    out[n] = hi;
    return out;
}

Grid empty_grid(const TripleTree& tree, std::size_t fx, std::size_t fy, std::size_t nx, std::size_t ny) {
    if (nx == 0 || ny == 0) throw ParameterError("grid resolution must be positive");
    Grid g;
    g.fx = fx;
    g.fy = fy;
    const auto [x0, x1] = axis_range(tree, fx);
    const auto [y0, y1] = axis_range(tree, fy);
    g.x_edges = edges(x0, x1, nx);
    g.y_edges = edges(y0, y1, ny);
    g.values.assign(ny, std::vector<double>(nx, kNaN));
    return g;
}

double centre(const std::vector<double>& e, std::size_t i) { return 0.5 * (e[i] + e[i + 1]); }

void check_plane(const TripleTree& tree, const PlaneSpec& plane) {
    const std::size_t d = tree.dims();
    if (plane.fx >= d || plane.fy >= d) throw ParameterError("plane feature out of range");
    if (plane.fx == plane.fy) throw ParameterError("plane needs two different features");
}

std::vector<double> slice_values(const TripleTree& tree, const PlaneSpec& plane) {
    auto fixed = plane.fixed.empty() ? tree.meta().medians : plane.fixed;
    if (fixed.size() != tree.dims()) throw ParameterError("fixed values need one entry per feature");
    for (std::size_t f = 0; f < fixed.size(); ++f) {
        if (f == plane.fx || f == plane.fy) continue;
        const auto [lo, hi] = tree.meta().ranges[f];
        if (!(fixed[f] >= lo && fixed[f] <= hi)) {
            throw ParameterError("fixed value for '" + tree.meta().feature_names[f] + "' is outside its range");
        }
    }
    return fixed;
}

bool in_slice(const Box& box, const std::vector<double>& fixed, const PlaneSpec& plane) {
    for (std::size_t f = 0; f < fixed.size(); ++f) {
        if (f == plane.fx || f == plane.fy) continue;
        if (!(box.lower[f] <= fixed[f] && fixed[f] < box.upper[f])) return false;
    }
    return true;
}

Rect leaf_rect(const TripleTree& tree, int id, std::size_t fx, std::size_t fy, double value) {
    const Box b = tree.leaf(id).box.clipped(tree.meta().ranges);
    Rect r;
    r.x0 = b.lower[fx];
    r.x1 = b.upper[fx];
    if (fy < tree.dims()) {
        r.y0 = b.lower[fy];
        r.y1 = b.upper[fy];
    } else {
        r.y0 = 0.0;
        r.y1 = 1.0;
    }
    r.value = value;
    r.leaf = id;
    return r;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Viridis control points.
constexpr std::array<std::array<double, 3>, 9> kViridis{{{0.267, 0.005, 0.329},
                                                         {0.279, 0.175, 0.483},
                                                         {0.230, 0.322, 0.546},
                                                         {0.173, 0.449, 0.558},
                                                         {0.128, 0.567, 0.551},
                                                         {0.153, 0.680, 0.504},
                                                         {0.361, 0.786, 0.388},
                                                         {0.667, 0.862, 0.196},
                                                         {0.993, 0.906, 0.144}}};

constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string hex(double r, double g, double b) {
    char buf[8];
    auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c(r), c(g), c(b));
    return buf;
}

std::string colour(double t) {
    if (!std::isfinite(t)) return "#ffffff";
    t = std::clamp(t, 0.0, 1.0) * (kViridis.size() - 1);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), kViridis.size() - 2);
    const double u = t - static_cast<double>(i);
    const auto& a = kViridis[i];
    const auto& b = kViridis[i + 1];
    return hex(a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2]));
}

std::string f2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string g3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string to_string(Attribute a) {
    switch (a) {
        case Attribute::action_pred: return "action_pred";
        case Attribute::value_pred: return "value_pred";
        case Attribute::deriv_pred: return "deriv_pred";
        case Attribute::action_impurity: return "action_impurity";
        case Attribute::value_impurity: return "value_impurity";
        case Attribute::deriv_impurity: return "deriv_impurity";
        case Attribute::density: return "density";
    }
    return "?";
}

Attribute attribute_from_string(const std::string& name) {
    for (auto a : {Attribute::action_pred, Attribute::value_pred, Attribute::deriv_pred, Attribute::action_impurity,
                   Attribute::value_impurity, Attribute::deriv_impurity, Attribute::density}) {
        if (to_string(a) == name) return a;
    }
    throw ParameterError("unknown attribute '" + name + "'");
}

double leaf_attribute(const TripleTree& tree, int leaf, Attribute attribute) {
    const Leaf& l = tree.leaf(leaf);
    switch (attribute) {
        case Attribute::action_pred:
            if (tree.discrete()) return l.prediction.action.label;
            if (tree.meta().action_kind == ActionKind::continuous_scalar) return l.prediction.action.value.at(0);
            throw ParameterError("action_pred needs a discrete or scalar action");
        case Attribute::value_pred: return l.prediction.value;
        case Attribute::deriv_pred: throw ParameterError("deriv_pred is a vector attribute; use quiver");
        case Attribute::action_impurity: return l.impurity.action;
        case Attribute::value_impurity: return l.impurity.value;
        case Attribute::deriv_impurity: return l.impurity.derivative;
        case Attribute::density: return l.density;
    }
    return kNaN;
}

RectMap direct_map(const TripleTree& tree, Attribute attribute) {
    if (tree.dims() > 2) throw ParameterError("direct maps need at most two features; use a projection or a slice");
    RectMap map;
    map.fx = 0;
    map.fy = 1;
    for (int id : tree.leaf_ids()) map.rects.push_back(leaf_rect(tree, id, 0, 1, leaf_attribute(tree, id, attribute)));
    return map;
}

Grid rasterise(const TripleTree& tree, const RectMap& map, std::size_t nx, std::size_t ny) {
    Grid g = empty_grid(tree, map.fx, map.fy, nx, ny);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double cy = centre(g.y_edges, iy);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double cx = centre(g.x_edges, ix);
            for (const auto& r : map.rects) {
                if (r.x0 <= cx && cx < r.x1 && r.y0 <= cy && cy < r.y1) {
                    g.values[iy][ix] = r.value;
                    break;
                }
            }
        }
    }
    return g;
}

Grid pdp_projection(const TripleTree& tree, const PlaneSpec& plane, Attribute attribute) {
    check_plane(tree, plane);
    Grid g = empty_grid(tree, plane.fx, plane.fy, plane.nx, plane.ny);
    std::vector<std::vector<double>> weight(plane.ny, std::vector<double>(plane.nx, 0.0));
    std::vector<double> cx(plane.nx), cy(plane.ny);
    for (std::size_t i = 0; i < plane.nx; ++i) cx[i] = centre(g.x_edges, i);
    for (std::size_t i = 0; i < plane.ny; ++i) cy[i] = centre(g.y_edges, i);

    const auto ids = tree.leaf_ids();
    bool any_population = false;
    for (int id : ids) any_population = any_population || tree.leaf(id).count() > 0;
    for (int id : ids) {
        const Leaf& l = tree.leaf(id);
        const double w = any_population ? static_cast<double>(l.count()) : 1.0;
        if (!(w > 0.0)) continue;
        const double v = leaf_attribute(tree, id, attribute);
        const auto xb = std::lower_bound(cx.begin(), cx.end(), l.box.lower[plane.fx]) - cx.begin();
        const auto xe = std::lower_bound(cx.begin(), cx.end(), l.box.upper[plane.fx]) - cx.begin();
        const auto yb = std::lower_bound(cy.begin(), cy.end(), l.box.lower[plane.fy]) - cy.begin();
        const auto ye = std::lower_bound(cy.begin(), cy.end(), l.box.upper[plane.fy]) - cy.begin();
        for (auto iy = yb; iy < ye; ++iy) {
            for (auto ix = xb; ix < xe; ++ix) {
                // Running weighted mean; a single contributor keeps its exact value.
                double& W = weight[iy][ix];
                double& m = g.values[iy][ix];
                W += w;
                m = std::isnan(m) ? v : m + (w / W) * (v - m);
            }
        }
    }
    return g;
}

RectMap ice_slice(const TripleTree& tree, const PlaneSpec& plane, Attribute attribute) {
    check_plane(tree, plane);
    const auto fixed = slice_values(tree, plane);
    RectMap map;
    map.fx = plane.fx;
    map.fy = plane.fy;
    for (int id : tree.leaf_ids()) {
        if (!in_slice(tree.leaf(id).box, fixed, plane)) continue;
        map.rects.push_back(leaf_rect(tree, id, plane.fx, plane.fy, leaf_attribute(tree, id, attribute)));
    }
    return map;
}

std::vector<Arrow> quiver(const TripleTree& tree, const PlaneSpec& plane, QuiverMode mode) {
    const bool one_d = tree.dims() == 1;
    if (!one_d) check_plane(tree, plane);
    std::vector<double> fixed;
    if (mode == QuiverMode::slice && !one_d) fixed = slice_values(tree, plane);
    std::vector<Arrow> out;
    for (int id : tree.leaf_ids()) {
        const Leaf& l = tree.leaf(id);
        if (l.prediction.derivative.size() != tree.dims()) continue;
        if (!fixed.empty() && !in_slice(l.box, fixed, plane)) continue;
        const auto c = l.box.center(tree.meta().ranges);
        Arrow a;
        a.leaf = id;
        a.x = c[plane.fx];
        a.dx = l.prediction.derivative[plane.fx];
        if (one_d) {
            a.y = 0.5;
        } else {
            a.y = c[plane.fy];
            a.dy = l.prediction.derivative[plane.fy];
        }
        out.push_back(a);
    }
    return out;
}

std::string rects_to_json(const RectMap& map) {
    json rects = json::array();
    for (const auto& r : map.rects) {
        rects.push_back({{"x0", r.x0}, {"x1", r.x1}, {"y0", r.y0}, {"y1", r.y1}, {"value", number_or_null(r.value)},
                         {"leaf", r.leaf}});
    }
    return json{{"plane", {map.fx, map.fy}}, {"rects", rects}}.dump(1);
}

std::string grid_to_json(const Grid& grid) {
    json values = json::array();
    for (const auto& row : grid.values) {
        json jr = json::array();
        for (double v : row) jr.push_back(number_or_null(v));
        values.push_back(jr);
    }
    return json{{"plane", {grid.fx, grid.fy}}, {"x_edges", grid.x_edges}, {"y_edges", grid.y_edges}, {"values", values}}
        .dump(1);
}

std::string arrows_to_json(const std::vector<Arrow>& arrows) {
    json arr = json::array();
    for (const auto& a : arrows) arr.push_back({{"x", a.x}, {"y", a.y}, {"dx", a.dx}, {"dy", a.dy}, {"leaf", a.leaf}});
    return json{{"arrows", arr}}.dump(1);
}

SvgScene scene_for(const TripleTree& tree, std::size_t fx, std::size_t fy) {
    SvgScene s;
    const auto [x0, x1] = axis_range(tree, fx);
    const auto [y0, y1] = axis_range(tree, fy);
    s.x_min = x0;
    s.x_max = x1;
    s.y_min = y0;
    s.y_max = y1;
    s.x_label = fx < tree.dims() ? tree.meta().feature_names[fx] : "";
    s.y_label = fy < tree.dims() ? tree.meta().feature_names[fy] : "";
    return s;
}

std::string render_svg(const SvgScene& scene) {
    constexpr double W = 720, H = 540, L = 70, T = 40, PW = 520, PH = 440;
    const double xs = scene.x_max > scene.x_min ? PW / (scene.x_max - scene.x_min) : 1.0;
    const double ys = scene.y_max > scene.y_min ? PH / (scene.y_max - scene.y_min) : 1.0;
    auto px = [&](double x) { return L + (x - scene.x_min) * xs; };
    auto py = [&](double y) { return T + PH - (y - scene.y_min) * ys; };

    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -vmin;
    auto extend = [&](double v) {
        if (!std::isfinite(v)) return;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    };
    if (scene.rects) {
        for (const auto& r : scene.rects->rects) extend(r.value);
    }
    if (scene.grid) {
        for (const auto& row : scene.grid->values) {
            for (double v : row) extend(v);
        }
    }
    const bool has_scale = vmin <= vmax;
    const bool categorical = !scene.categories.empty();
    auto fill = [&](double v) {
        if (!std::isfinite(v)) return std::string("#ffffff");
        if (categorical) return std::string(kPalette[static_cast<std::size_t>(std::max(0.0, v)) % kPalette.size()]);
        return colour(vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.5);
    };

    std::string o;
    o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + f2(W) + "\" height=\"" + f2(H) +
         "\" viewBox=\"0 0 " + f2(W) + " " + f2(H) + "\">\n";
    o += "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">"
         "<path d=\"M0,0 L6,3 L0,6 z\" fill=\"#000000\"/></marker></defs>\n";
    o += "<rect x=\"0\" y=\"0\" width=\"" + f2(W) + "\" height=\"" + f2(H) + "\" fill=\"#ffffff\"/>\n";
    if (!scene.title.empty()) {
        o += "<text x=\"" + f2(L + PW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"14\">" + escape(scene.title) + "</text>\n";
    }

    if (scene.grid) {
        const auto& g = *scene.grid;
        o += "<g shape-rendering=\"crispEdges\">\n";
        for (std::size_t iy = 0; iy < g.values.size(); ++iy) {
            for (std::size_t ix = 0; ix < g.values[iy].size(); ++ix) {
                const double x = px(g.x_edges[ix]);
                const double y = py(g.y_edges[iy + 1]);
                o += "<rect x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" width=\"" + f2(px(g.x_edges[ix + 1]) - x) +
                     "\" height=\"" + f2(py(g.y_edges[iy]) - y) + "\" fill=\"" + fill(g.values[iy][ix]) + "\"/>\n";
            }
        }
        o += "</g>\n";
    }
    if (scene.rects) {
        o += "<g stroke=\"#ffffff\" stroke-width=\"0.5\">\n";
        for (const auto& r : scene.rects->rects) {
            const double x = px(r.x0);
            const double y = py(r.y1);
            o += "<rect x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" width=\"" + f2(px(r.x1) - x) + "\" height=\"" +
                 f2(py(r.y0) - y) + "\" fill=\"" + fill(r.value) + "\"/>\n";
        }
        o += "</g>\n";
    }
    if (scene.arrows && !scene.arrows->empty()) {
        double longest = 0.0;
        for (const auto& a : *scene.arrows) longest = std::max(longest, std::hypot(a.dx * xs, a.dy * ys));
        const double k = longest > 0.0 ? 30.0 / longest : 0.0;
        o += "<g stroke=\"#000000\" stroke-width=\"1\">\n";
        for (const auto& a : *scene.arrows) {
            const double x = px(a.x);
            const double y = py(a.y);
            o += "<line x1=\"" + f2(x) + "\" y1=\"" + f2(y) + "\" x2=\"" + f2(x + k * a.dx * xs) + "\" y2=\"" +
                 f2(y - k * a.dy * ys) + "\" marker-end=\"url(#head)\"/>\n";
        }
        o += "</g>\n";
    }
    if (!scene.polylines.empty()) {
        double pmax = 0.0;
        for (double p : scene.polyline_probability) pmax = std::max(pmax, p);
        o += "<g fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\">\n";
        for (std::size_t i = 0; i < scene.polylines.size(); ++i) {
            const double p = i < scene.polyline_probability.size() ? scene.polyline_probability[i] : 1.0;
            const double alpha = pmax > 0.0 ? p / pmax : 1.0;
            std::string pts;
            for (const auto& q : scene.polylines[i]) {
                if (!pts.empty()) pts += ' ';
                pts += f2(px(q[0])) + "," + f2(py(q.size() > 1 ? q[1] : 0.5));
            }
            o += "<polyline points=\"" + pts + "\" stroke-opacity=\"" + f2(alpha) + "\"/>\n";
        }
        o += "</g>\n";
    }
    for (const auto& m : scene.markers) {
        const double x = px(m.xy[0]);
        const double y = py(m.xy.size() > 1 ? m.xy[1] : 0.5);
        o += "<circle cx=\"" + f2(x) + "\" cy=\"" + f2(y) + "\" r=\"4\" fill=\"#ffffff\" stroke=\"#000000\"/>\n";
        if (!m.label.empty()) {
            o += "<text x=\"" + f2(x + 6) + "\" y=\"" + f2(y - 6) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
                 escape(m.label) + "</text>\n";
        }
    }

    // Axes and ticks.
    o += "<rect x=\"" + f2(L) + "\" y=\"" + f2(T) + "\" width=\"" + f2(PW) + "\" height=\"" + f2(PH) +
         "\" fill=\"none\" stroke=\"#000000\"/>\n";
    o += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = scene.x_min + (scene.x_max - scene.x_min) * i / 4.0;
        const double yv = scene.y_min + (scene.y_max - scene.y_min) * i / 4.0;
        o += "<text x=\"" + f2(px(xv)) + "\" y=\"" + f2(T + PH + 16) + "\" text-anchor=\"middle\">" + g3(xv) +
             "</text>\n";
        o += "<text x=\"" + f2(L - 6) + "\" y=\"" + f2(py(yv) + 4) + "\" text-anchor=\"end\">" + g3(yv) + "</text>\n";
    }
    o += "<text x=\"" + f2(L + PW / 2) + "\" y=\"" + f2(T + PH + 34) + "\" text-anchor=\"middle\">" +
         escape(scene.x_label) + "</text>\n";
    o += "<text x=\"16\" y=\"" + f2(T + PH / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         f2(T + PH / 2) + ")\">" + escape(scene.y_label) + "</text>\n";

    const double bx = L + PW + 30;
    if (categorical) {
        for (std::size_t i = 0; i < scene.categories.size(); ++i) {
            const double y = T + 20.0 * static_cast<double>(i);
            o += "<rect x=\"" + f2(bx) + "\" y=\"" + f2(y) + "\" width=\"14\" height=\"14\" fill=\"" +
                 kPalette[i % kPalette.size()] + "\"/>\n";
            o += "<text x=\"" + f2(bx + 20) + "\" y=\"" + f2(y + 11) + "\">" + escape(scene.categories[i]) +
                 "</text>\n";
        }
    } else if (has_scale) {
        constexpr int kSteps = 32;
        for (int i = 0; i < kSteps; ++i) {
            const double y = T + PH - PH * (i + 1) / kSteps;
            o += "<rect x=\"" + f2(bx) + "\" y=\"" + f2(y) + "\" width=\"20\" height=\"" + f2(PH / kSteps) +
                 "\" fill=\"" + colour((i + 0.5) / kSteps) + "\"/>\n";
        }
        o += "<text x=\"" + f2(bx + 24) + "\" y=\"" + f2(T + PH) + "\">" + g3(vmin) + "</text>\n";
        o += "<text x=\"" + f2(bx + 24) + "\" y=\"" + f2(T + 10) + "\">" + g3(vmax) + "</text>\n";
    }
    o += "</g>\n</svg>\n";
    return o;
}

}  // namespace tripletree
