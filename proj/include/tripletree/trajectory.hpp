#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tripletree/tree.hpp"

namespace tripletree {

struct Edge {
    int from = 0;
    int to = 0;  // leaf id or kSink
    double probability = 0.0;
    double duration = 0.0;
    double cost = 0.0;  // -ln probability
};

/// Leaves as states of a probabilistic finite state machine.
class LeafGraph {
public:
    LeafGraph() = default;
    /// Nodes must include every edge endpoint except kSink, which is implicit.
    LeafGraph(std::vector<int> nodes, std::vector<Edge> edges);

    const std::vector<int>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Edge>& out_edges(int node) const;
    bool has_node(int node) const { return node == kSink || out_.count(node) > 0; }

private:
    std::vector<int> nodes_;
    std::vector<Edge> edges_;
    std::map<int, std::vector<Edge>> out_;
};

LeafGraph build_leaf_graph(const TripleTree& tree);

struct TrajectoryPath {
    std::vector<int> leaves;
    double probability = 0.0;
    double expected_duration = 0.0;
    std::vector<std::vector<double>> nodes;
    double objective = 0.0;
    std::vector<double> objective_history;
};

/// Highest-probability leaf sequence from start to end (Dijkstra on -ln P).
/// Nothing when end is unreachable; the path is always its own leaf when
/// start == end.
std::optional<TrajectoryPath> most_probable_path(const LeafGraph& graph, int start, int end);

struct AlignOptions {
    std::size_t max_iters = 1000;
    double step_size = 0.05;
    double tol = 1e-8;
};

/// Closed axis-aligned rectangle a path node must stay on; pinned
/// coordinates have lower == upper.
struct Face {
    std::vector<double> lower;
    std::vector<double> upper;
};

/// Face shared by the closures of two range-clipped boxes, or, when they do
/// not touch, the face of `from` crossed by the segment between the centres.
Face transition_face(const Box& from, const Box& to, const FeatureRanges& ranges);

/// Sum over segments of the squared angle between the segment and the
/// leaf's derivative prediction, both divided elementwise by sigma.
double alignment_objective(const TripleTree& tree, const std::vector<int>& leaves,
                           const std::vector<std::vector<double>>& nodes);

/// Places a polyline through the leaf sequence and moves its interior nodes
/// along their faces to reduce the alignment objective. Endpoints default to
/// the centres of the first and last (range-clipped) leaf boxes.
TrajectoryPath align_path(const TripleTree& tree, const std::vector<int>& leaves, const AlignOptions& options = {},
                          const std::optional<std::vector<double>>& start = std::nullopt,
                          const std::optional<std::vector<double>>& end = std::nullopt);

/// Most probable path for every pair of leaves overlapping the start and end
/// zones, kept when its probability is at least min_probability. Paths carry
/// leaf sequences only; run align_path for geometry.
std::vector<TrajectoryPath> zone_paths(const TripleTree& tree, const LeafGraph& graph, const Box& start_zone,
                                       const Box& end_zone, double min_probability);

std::string path_to_json(const TrajectoryPath& path);
std::string paths_to_json(const std::vector<TrajectoryPath>& paths);
TrajectoryPath path_from_json(const std::string& text);

}  // namespace tripletree
