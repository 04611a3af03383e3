#include "tripletree/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include <json.hpp>

namespace tripletree {
namespace {

const std::vector<Edge> kNoEdges;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Angle between x and d, and the gradient of angle^2 with respect to x.
// Degenerate vectors contribute nothing.
double angle_term(const std::vector<double>& x, const std::vector<double>& d, std::vector<double>* grad) {
    if (grad) grad->assign(x.size(), 0.0);
    const double nx = std::sqrt(dot(x, x));
    const double nd = std::sqrt(dot(d, d));
    if (!(nx > 0.0) || !(nd > 0.0)) return 0.0;
    std::vector<double> perp(x.size());
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] / nx) * (d[i] / nd);
    for (std::size_t i = 0; i < x.size(); ++i) perp[i] = d[i] / nd - c * x[i] / nx;
    const double s = std::sqrt(dot(perp, perp));
    const double theta = std::atan2(s, c);
    if (grad && s > 0.0) {
        const double k = -2.0 * theta / (s * nx);
        for (std::size_t i = 0; i < x.size(); ++i) (*grad)[i] = k * perp[i];
    }
    return theta * theta;
}

std::vector<double> clamp_to(const std::vector<double>& p, const Face& f) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::min(std::max(p[i], f.lower[i]), f.upper[i]);
    return out;
}

struct Geometry {
    std::vector<int> leaves;  // without a trailing sink
    std::vector<double> scale;
    std::vector<std::vector<double>> derivs;  // scaled, per segment
};

Geometry geometry(const TripleTree& tree, const std::vector<int>& leaves) {
    Geometry g;
    g.leaves = leaves;
    while (!g.leaves.empty() && g.leaves.back() == kSink) g.leaves.pop_back();
    if (g.leaves.empty()) throw ParameterError("path has no leaves");
    const std::size_t d = tree.dims();
    g.scale.resize(d);
    for (std::size_t f = 0; f < d; ++f) {
        const double s = tree.meta().sigma[f];
        g.scale[f] = s > 0.0 ? s : 1.0;
    }
    for (int id : g.leaves) {
        const auto& pred = tree.leaf(id).prediction.derivative;
        std::vector<double> v(d, 0.0);
        if (pred.size() == d) {
            for (std::size_t f = 0; f < d; ++f) v[f] = pred[f] / g.scale[f];
        }
        g.derivs.push_back(std::move(v));
    }
    return g;
}

double objective_scaled(const Geometry& g, const std::vector<std::vector<double>>& y) {
    double total = 0.0;
    std::vector<double> x(g.scale.size());
    for (std::size_t j = 0; j + 1 < y.size(); ++j) {
        for (std::size_t f = 0; f < x.size(); ++f) x[f] = y[j + 1][f] - y[j][f];
        total += angle_term(x, g.derivs[j], nullptr);
    }
    return total;
}

// Face of `from` crossed by the ray from its centre towards `target`, and the crossing point.
std::pair<Face, std::vector<double>> exit_face(const Box& from, const std::vector<double>& origin,
                                               const std::vector<double>& target) {
    const std::size_t d = origin.size();
    double t_best = std::numeric_limits<double>::infinity();
    std::size_t f_best = 0;
    double bound_best = origin[0];
    for (std::size_t f = 0; f < d; ++f) {
        const double dir = target[f] - origin[f];
        if (dir == 0.0) continue;
        const double bound = dir > 0.0 ? from.upper[f] : from.lower[f];
        const double t = (bound - origin[f]) / dir;
        if (t < t_best) {
            t_best = t;
            f_best = f;
            bound_best = bound;
        }
    }
    Face face{from.lower, from.upper};
    if (!std::isfinite(t_best)) return {face, origin};
    face.lower[f_best] = face.upper[f_best] = bound_best;
    std::vector<double> p(d);
    for (std::size_t f = 0; f < d; ++f) p[f] = origin[f] + t_best * (target[f] - origin[f]);
    p[f_best] = bound_best;
    return {face, clamp_to(p, face)};
}

std::pair<Face, std::vector<double>> face_and_start(const Box& from, const Box& to, const FeatureRanges& ranges) {
    const Box a = from.clipped(ranges);
    const Box b = to.clipped(ranges);
    Face face{std::vector<double>(a.dims()), std::vector<double>(a.dims())};
    bool touching = true;
    for (std::size_t f = 0; f < a.dims(); ++f) {
        face.lower[f] = std::max(a.lower[f], b.lower[f]);
        face.upper[f] = std::min(a.upper[f], b.upper[f]);
        if (face.lower[f] > face.upper[f]) touching = false;
    }
    if (touching) {
        std::vector<double> c(a.dims());
        for (std::size_t f = 0; f < a.dims(); ++f) c[f] = 0.5 * (face.lower[f] + face.upper[f]);
        return {face, c};
    }
    return exit_face(a, from.center(ranges), to.center(ranges));
}

void fill_transition_stats(const TripleTree& tree, TrajectoryPath& path) {
    path.probability = 1.0;
    path.expected_duration = 0.0;
    for (std::size_t j = 0; j + 1 < path.leaves.size(); ++j) {
        const auto& trans = tree.leaf(path.leaves[j]).transitions;
        const auto it = trans.find(path.leaves[j + 1]);
        if (it == trans.end()) {
            path.probability = 0.0;
            continue;
        }
        path.probability *= it->second.probability;
        path.expected_duration += it->second.mean_duration;
    }
}

}  // namespace

LeafGraph::LeafGraph(std::vector<int> nodes, std::vector<Edge> edges) : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (int n : nodes_) out_[n];
    for (const auto& e : edges_) {
        if (!out_.count(e.from)) throw ParameterError("edge from unknown node " + std::to_string(e.from));
        if (e.to != kSink && !out_.count(e.to)) throw ParameterError("edge to unknown node " + std::to_string(e.to));
        out_[e.from].push_back(e);
    }
}

const std::vector<Edge>& LeafGraph::out_edges(int node) const {
    const auto it = out_.find(node);
    return it == out_.end() ? kNoEdges : it->second;
}

LeafGraph build_leaf_graph(const TripleTree& tree) {
    std::vector<Edge> edges;
    const auto ids = tree.leaf_ids();
    for (int id : ids) {
        for (const auto& [dest, t] : tree.leaf(id).transitions) {
            if (!(t.probability > 0.0)) continue;
            edges.push_back({id, dest, t.probability, t.mean_duration, -std::log(t.probability)});
        }
    }
    return LeafGraph(ids, std::move(edges));
}

std::optional<TrajectoryPath> most_probable_path(const LeafGraph& graph, int start, int end) {
    if (start == kSink || !graph.has_node(start)) throw ParameterError("start leaf " + std::to_string(start) + " not in graph");
    if (!graph.has_node(end)) throw ParameterError("end leaf " + std::to_string(end) + " not in graph");

    struct Best {
        double cost;
        int prev;
        const Edge* via;
    };
    std::map<int, Best> best;
    std::map<int, bool> done;
    using Item = std::tuple<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    best[start] = {0.0, start, nullptr};
    queue.emplace(0.0, start);
    while (!queue.empty()) {
        const auto [cost, node] = queue.top();
        queue.pop();
        if (done[node]) continue;
        done[node] = true;
        if (node == end) break;
        for (const auto& e : graph.out_edges(node)) {
            const double c = cost + e.cost;
            const auto it = best.find(e.to);
            if (it == best.end() || c < it->second.cost) {
                best[e.to] = {c, node, &e};
                queue.emplace(c, e.to);
            }
        }
    }
    if (!done[end]) return std::nullopt;

    TrajectoryPath path;
    std::vector<const Edge*> via;
    int n = end;
    path.leaves.push_back(n);
    while (n != start) {
        via.push_back(best[n].via);
        n = best[n].prev;
        path.leaves.push_back(n);
    }
    std::reverse(path.leaves.begin(), path.leaves.end());
    path.probability = 1.0;
    for (const Edge* e : via) {
        path.probability *= e->probability;
        path.expected_duration += e->duration;
    }
    return path;
}

Face transition_face(const Box& from, const Box& to, const FeatureRanges& ranges) {
    return face_and_start(from, to, ranges).first;
}

double alignment_objective(const TripleTree& tree, const std::vector<int>& leaves,
                           const std::vector<std::vector<double>>& nodes) {
    const Geometry g = geometry(tree, leaves);
    if (nodes.size() != g.leaves.size() + 1) throw ParameterError("path needs one more node than leaves");
    auto y = nodes;
    for (auto& p : y) {
        for (std::size_t f = 0; f < p.size(); ++f) p[f] /= g.scale[f];
    }
    return objective_scaled(g, y);
}

TrajectoryPath align_path(const TripleTree& tree, const std::vector<int>& leaves, const AlignOptions& options,
                          const std::optional<std::vector<double>>& start, const std::optional<std::vector<double>>& end) {
    const Geometry g = geometry(tree, leaves);
    const auto& ranges = tree.meta().ranges;
    const std::size_t d = tree.dims();
    const std::size_t k = g.leaves.size();
    if (options.step_size <= 0.0) throw ParameterError("step size must be positive");
    for (const auto* p : {&start, &end}) {
        if (*p && (*p)->size() != d) throw ParameterError("path endpoint has the wrong dimension");
    }

    // Original-coordinate faces and nodes.
    std::vector<Face> faces(k + 1);
    std::vector<std::vector<double>> x(k + 1);
    x[0] = start ? *start : tree.leaf(g.leaves.front()).box.center(ranges);
    x[k] = end ? *end : tree.leaf(g.leaves.back()).box.center(ranges);
    for (std::size_t j = 1; j < k; ++j) {
        auto [face, p] = face_and_start(tree.leaf(g.leaves[j - 1]).box, tree.leaf(g.leaves[j]).box, ranges);
        faces[j] = std::move(face);
        x[j] = std::move(p);
    }

    auto to_scaled = [&](const std::vector<double>& p) {
        std::vector<double> out(d);
        for (std::size_t f = 0; f < d; ++f) out[f] = p[f] / g.scale[f];
        return out;
    };
    std::vector<Face> sfaces(k + 1);
    std::vector<std::vector<double>> y(k + 1);
    for (std::size_t j = 0; j <= k; ++j) {
        y[j] = to_scaled(x[j]);
        if (j > 0 && j < k) sfaces[j] = {to_scaled(faces[j].lower), to_scaled(faces[j].upper)};
    }

    // Incoming direction along each pinned coordinate must keep its sign.
    std::vector<std::vector<double>> entry_sign(k + 1, std::vector<double>(d, 0.0));
    for (std::size_t j = 1; j < k; ++j) {
        for (std::size_t f = 0; f < d; ++f) {
            if (faces[j].lower[f] != faces[j].upper[f]) continue;
            const double delta = y[j][f] - y[j - 1][f];
            entry_sign[j][f] = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
        }
    }
    auto visible = [&](const std::vector<std::vector<double>>& cand) {
        for (std::size_t j = 1; j < k; ++j) {
            for (std::size_t f = 0; f < d; ++f) {
                if (entry_sign[j][f] != 0.0 && (cand[j][f] - cand[j - 1][f]) * entry_sign[j][f] < 0.0) return false;
            }
        }
        return true;
    };

    TrajectoryPath path;
    path.leaves = leaves;
    double obj = objective_scaled(g, y);
    path.objective_history.push_back(obj);
    double step = options.step_size;
    std::size_t iter = 0;
    std::vector<double> seg(d), g_in;
    std::vector<std::vector<double>> grad(k + 1, std::vector<double>(d, 0.0));
    while (k > 1 && iter < options.max_iters && obj > 0.0) {
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t f = 0; f < d; ++f) seg[f] = y[j + 1][f] - y[j][f];
            angle_term(seg, g.derivs[j], &g_in);
            // Segment j runs from node j to node j + 1.
            for (std::size_t f = 0; f < d; ++f) {
                if (j + 1 < k) grad[j + 1][f] += g_in[f];
                if (j > 0) grad[j][f] -= g_in[f];
            }
        }
        bool accepted = false;
        while (!accepted && step > 1e-18) {
            auto cand = y;
            for (std::size_t j = 1; j < k; ++j) {
                for (std::size_t f = 0; f < d; ++f) cand[j][f] -= step * grad[j][f];
                cand[j] = clamp_to(cand[j], sfaces[j]);
            }
            const double next = objective_scaled(g, cand);
            if (next <= obj && visible(cand)) {
                accepted = true;
                y = std::move(cand);
                const double change = obj - next;
                obj = next;
                path.objective_history.push_back(obj);
                if (change < options.tol) iter = options.max_iters;
                step = std::min(2.0 * step, options.step_size);
            } else {
                step *= 0.5;
            }
        }
        for (auto& gj : grad) std::fill(gj.begin(), gj.end(), 0.0);
        if (!accepted) break;
        ++iter;
    }

    path.nodes.resize(k + 1);
    for (std::size_t j = 0; j <= k; ++j) {
        path.nodes[j].resize(d);
        for (std::size_t f = 0; f < d; ++f) path.nodes[j][f] = y[j][f] * g.scale[f];
        if (j > 0 && j < k) path.nodes[j] = clamp_to(path.nodes[j], faces[j]);
    }
    path.objective = obj;
    fill_transition_stats(tree, path);
    return path;
}

std::vector<TrajectoryPath> zone_paths(const TripleTree& tree, const LeafGraph& graph, const Box& start_zone,
                                       const Box& end_zone, double min_probability) {
    auto overlapping = [&](const Box& zone) {
        std::vector<int> out;
        if (zone.dims() != tree.dims()) throw ParameterError("zone has the wrong dimension");
        for (int id : tree.leaf_ids()) {
            const Box& b = tree.leaf(id).box;
            bool hit = true;
            for (std::size_t f = 0; f < b.dims() && hit; ++f) {
                if (zone.lower[f] > zone.upper[f]) {
                    hit = false;
                } else if (zone.lower[f] == zone.upper[f]) {
                    hit = b.lower[f] <= zone.lower[f] && zone.lower[f] < b.upper[f];
                } else {
                    hit = b.lower[f] < zone.upper[f] && b.upper[f] > zone.lower[f];
                }
            }
            if (hit) out.push_back(id);
        }
        return out;
    };
    std::vector<TrajectoryPath> out;
    const auto ends = overlapping(end_zone);
    for (int s : overlapping(start_zone)) {
        for (int e : ends) {
            auto p = most_probable_path(graph, s, e);
            if (p && p->probability >= min_probability) out.push_back(std::move(*p));
        }
    }
    return out;
}

namespace {

nlohmann::json path_json(const TrajectoryPath& path) {
    using nlohmann::json;
    json leaves = json::array();
    for (int l : path.leaves) leaves.push_back(l == kSink ? json(nullptr) : json(l));
    return {{"leaves", leaves},
            {"probability", path.probability},
            {"expected_duration", path.expected_duration},
            {"nodes", path.nodes},
            {"objective", path.objective}};
}

}  // namespace

std::string path_to_json(const TrajectoryPath& path) { return path_json(path).dump(1); }

std::string paths_to_json(const std::vector<TrajectoryPath>& paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) arr.push_back(path_json(p));
    return nlohmann::json{{"paths", arr}}.dump(1);
}

TrajectoryPath path_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        TrajectoryPath p;
        for (const auto& l : j.at("leaves")) p.leaves.push_back(l.is_null() ? kSink : l.get<int>());
        p.probability = j.at("probability").get<double>();
        p.expected_duration = j.at("expected_duration").get<double>();
        p.nodes = j.at("nodes").get<std::vector<std::vector<double>>>();
        p.objective = j.at("objective").get<double>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad path file: ") + e.what());
    }
}

}  // namespace tripletree
