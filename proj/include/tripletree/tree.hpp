#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tripletree/dataset.hpp"
#include "tripletree/impurity.hpp"

namespace tripletree {

using FeatureRanges = std::vector<std::pair<double, double>>;

/// Axis-aligned hyperrectangle [lower, upper); infinite entries are unconstrained.
struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    static Box unbounded(std::size_t d);

    std::size_t dims() const { return lower.size(); }
    bool contains(std::span<const double> point) const;
    /// Sides clipped to the given ranges (closed).
    Box clipped(const FeatureRanges& ranges) const;
    /// Centre of the range-clipped box.
    std::vector<double> center(const FeatureRanges& ranges) const;
    bool operator==(const Box&) const = default;
};

// Destination id for episode termination.
inline constexpr int kSink = -1;

struct Transition {
    double probability = 0.0;
    double mean_duration = 0.0;
    std::size_t count = 0;
    bool operator==(const Transition&) const = default;
};

struct Prediction {
    Action action;
    double value = 0.0;
    std::vector<double> derivative;
    // Set when no member had a derivative; the derivative is then inherited
    // from the nearest ancestor that had one.
    bool derivative_low_confidence = false;
    bool operator==(const Prediction&) const = default;
};

struct Leaf {
    Box box;
    std::vector<std::size_t> members;
    Prediction prediction;
    ImpurityTriple impurity;
    std::map<int, Transition> transitions;
    std::size_t sequence_starts = 0;
    double density = 0.0;

    std::size_t count() const { return members.size(); }
    bool operator==(const Leaf&) const = default;
};

struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int parent = -1;
    std::optional<Leaf> leaf;

    bool is_leaf() const { return leaf.has_value(); }
    bool operator==(const Node&) const = default;
};

struct TreeMeta {
    std::vector<std::string> feature_names;
    ActionKind action_kind = ActionKind::discrete;
    std::vector<std::string> action_labels;
    std::vector<std::string> action_names;
    Theta theta;
    double gamma = 0.0;
    std::vector<double> sigma;
    std::vector<double> action_sigma;
    FeatureRanges ranges;
    // Per-feature sample medians; default fixed values for slices.
    std::vector<double> medians;
    ImpurityTriple root_impurity;
    std::size_t min_leaf = 1;
    std::size_t num_samples = 0;
    bool operator==(const TreeMeta&) const = default;
};

class TripleTree {
public:
    TripleTree() = default;
    TripleTree(TreeMeta meta, std::vector<Node> nodes);

    const TreeMeta& meta() const { return meta_; }
    std::size_t dims() const { return meta_.feature_names.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }

    /// Leaf node ids in creation order.
    std::vector<int> leaf_ids() const;
    std::size_t num_leaves() const;
    const Leaf& leaf(int id) const;
    Leaf& leaf(int id);

    /// Descends from the root: feature < threshold goes left, otherwise right.
    int leaf_of(std::span<const double> state) const;
    const Prediction& predict(std::span<const double> state) const;

    std::string action_to_string(const Action& action) const;
    Action parse_action(const std::string& text) const;
    bool discrete() const { return meta_.action_kind == ActionKind::discrete; }

    bool operator==(const TripleTree&) const = default;

private:
    friend class TreeGrower;
    friend void compute_transitions(TripleTree&, const AugmentedDataset&);
    friend void compute_densities(TripleTree&);

    TreeMeta meta_;
    std::vector<Node> nodes_;
};

/// Best-first priority: population times theta-weighted, root-normalised impurity.
double leaf_priority(std::size_t count, const ImpurityTriple& impurity, const Theta& theta,
                     const ImpurityTriple& root);

struct LeafSummary {
    int id = 0;
    std::size_t count = 0;
    ImpurityTriple impurity;
    bool splittable = true;
};

/// Highest-priority splittable leaf; ties go to the earlier entry.
std::optional<int> select_best_leaf(std::span<const LeafSummary> leaves, const Theta& theta,
                                    const ImpurityTriple& root);

struct SplitRecord {
    int node = 0;
    std::size_t feature = 0;
    double threshold = 0.0;
    double hybrid_quality = 0.0;
    int left = 0;
    int right = 0;
    bool operator==(const SplitRecord&) const = default;
};

/// Best-first growth. Each step() splits the highest-priority leaf that
/// admits a positive-quality split; leaves that do not are marked final.
class TreeGrower {
public:
    TreeGrower(const AugmentedDataset& data, const Theta& theta, std::size_t min_leaf = 1);

    bool step();
    std::size_t grow_to(std::size_t max_leaves);

    const TripleTree& tree() const { return tree_; }
    const std::vector<SplitRecord>& history() const { return history_; }

    /// Copy of the current tree with transitions and densities filled in.
    TripleTree snapshot() const;

private:
    Leaf make_leaf(Box box, std::vector<std::size_t> members, const Prediction* fallback) const;

    const AugmentedDataset& data_;
    TripleTree tree_;
    std::vector<char> splittable_;
    std::vector<SplitRecord> history_;
};

/// Grows a tree to at most max_leaves leaves and fills in transition
/// statistics and densities from the same data.
TripleTree grow(const AugmentedDataset& data, const Theta& theta, std::size_t max_leaves,
                std::size_t min_leaf = 1);

/// Sequence-level leaf-to-leaf transition probabilities and mean durations.
/// Sequences never span episodes; truncated episode ends record nothing.
void compute_transitions(TripleTree& tree, const AugmentedDataset& data);

/// Leaf population over range-normalised, range-clipped box volume.
void compute_densities(TripleTree& tree);

struct Losses {
    double action = 0.0;
    double value = 0.0;
    double derivative = 0.0;
};

/// Misclassification rate (or RMS for continuous actions), RMS value error,
/// and sum over features of derivative RMS error / sigma.
Losses evaluate_losses(const TripleTree& tree, const AugmentedDataset& data);

struct LossCurvePoint {
    std::size_t leaves = 0;
    Losses train;
    std::optional<Losses> validation;
};

/// Losses after every split of a single best-first growth run.
std::vector<LossCurvePoint> loss_curve(const AugmentedDataset& train, const AugmentedDataset* validation,
                                       const Theta& theta, std::size_t max_leaves, std::size_t min_leaf = 1);

inline constexpr int kTreeFormatVersion = 1;

std::string serialize(const TripleTree& tree);
TripleTree deserialize(const std::string& text);
void save_tree(const TripleTree& tree, const std::filesystem::path& path);
TripleTree load_tree(const std::filesystem::path& path);

}  // namespace tripletree
