#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tripletree/trajectory.hpp"
#include "tripletree/tree.hpp"

namespace tripletree {

enum class Attribute {
    action_pred,
    value_pred,
    deriv_pred,
    action_impurity,
    value_impurity,
    deriv_impurity,
    density,
};

std::string to_string(Attribute a);
Attribute attribute_from_string(const std::string& name);

/// Scalar colouring value of a leaf. Discrete actions map to their label
/// index. Throws ParameterError for deriv_pred and vector actions.
double leaf_attribute(const TripleTree& tree, int leaf, Attribute attribute);

struct PlaneSpec {
    std::size_t fx = 0;
    std::size_t fy = 1;
    std::size_t nx = 200;
    std::size_t ny = 200;
    // Full state vector; entries on the plane axes are ignored. Empty means
    // the tree's per-feature medians.
    std::vector<double> fixed;
};

struct Rect {
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    double value = 0;
    int leaf = -1;
};

struct RectMap {
    std::size_t fx = 0;
    std::size_t fy = 1;
    std::vector<Rect> rects;
};

struct Grid {
    std::size_t fx = 0;
    std::size_t fy = 1;
    std::vector<double> x_edges;
    std::vector<double> y_edges;
    std::vector<std::vector<double>> values;  // [iy][ix]
};

struct Arrow {
    double x = 0, y = 0, dx = 0, dy = 0;
    int leaf = -1;
};

/// One range-clipped rectangle per leaf. Needs d <= 2; one-feature trees
/// get a unit-height y axis.
RectMap direct_map(const TripleTree& tree, Attribute attribute);

/// Cell-centre sample of a rectangle map on an nx by ny grid over the ranges.
Grid rasterise(const TripleTree& tree, const RectMap& map, std::size_t nx, std::size_t ny);

/// Partial dependence on the (fx, fy) plane: each cell is the sample-count
/// weighted mean over leaves whose projection covers the cell centre.
Grid pdp_projection(const TripleTree& tree, const PlaneSpec& plane, Attribute attribute);

/// Leaves cut by the axis-aligned plane through the fixed values.
RectMap ice_slice(const TripleTree& tree, const PlaneSpec& plane, Attribute attribute);

enum class QuiverMode { direct, slice };

/// One arrow per leaf (or per sliced leaf) at its clipped-box centre.
std::vector<Arrow> quiver(const TripleTree& tree, const PlaneSpec& plane, QuiverMode mode);

std::string rects_to_json(const RectMap& map);
std::string grid_to_json(const Grid& grid);
std::string arrows_to_json(const std::vector<Arrow>& arrows);

struct Marker {
    std::vector<double> xy;  // plane coordinates
    std::string label;
};

struct SvgScene {
    std::string title;
    std::string x_label;
    std::string y_label;
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    const RectMap* rects = nullptr;
    const Grid* grid = nullptr;
    const std::vector<Arrow>* arrows = nullptr;
    // Trajectory overlays: plane polylines with opacity proportional to probability.
    std::vector<std::vector<std::vector<double>>> polylines;
    std::vector<double> polyline_probability;
    std::vector<Marker> markers;
    // Discrete colouring uses a categorical palette and a legend.
    std::vector<std::string> categories;
};

SvgScene scene_for(const TripleTree& tree, std::size_t fx, std::size_t fy);

/// Deterministic SVG 1.1 document with a colour bar (or legend).
std::string render_svg(const SvgScene& scene);

}  // namespace tripletree
