#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tripletree/tree.hpp"

namespace tripletree {

enum class ExplanationKind { factual, counterfactual_action, counterfactual_value, temporal };

std::string to_string(ExplanationKind kind);

enum class Relation { less, greater_equal };

struct Bound {
    std::size_t feature = 0;
    Relation relation = Relation::less;
    double threshold = 0.0;
    bool operator==(const Bound&) const = default;
};

struct ValueCondition {
    enum class Op { at_most, at_least };
    Op op = Op::at_most;
    double threshold = 0.0;

    bool satisfied_by(double v) const { return op == Op::at_most ? v <= threshold : v >= threshold; }
    bool operator==(const ValueCondition&) const = default;
};

struct Explanation {
    ExplanationKind kind = ExplanationKind::factual;
    std::vector<double> state;
    // Action predicted at the query state.
    Action fact;
    std::vector<Bound> bounds;
    std::optional<Action> foil_action;
    std::optional<ValueCondition> foil_value;
    int target_leaf = -1;
    std::optional<std::vector<double>> foil_point;
    std::vector<std::size_t> changed_features;
    // False when no leaf satisfies the foil.
    bool reachable = true;
    // False for a temporal explanation that fell back to an unconstrained counterfactual.
    bool minimal = true;
};

/// Bounds of the leaf containing the state, without unconstrained sides.
Explanation factual(const TripleTree& tree, std::span<const double> state);

/// Closest point of the closed box to the state (per-feature clamp).
std::vector<double> project_onto_box(std::span<const double> state, const Box& box);

/// Projection onto a leaf box that lands inside the leaf: points clamped onto
/// an open upper side are moved inward by 1e-9 of the feature range.
std::vector<double> project_into_leaf(std::span<const double> state, const Box& box, const FeatureRanges& ranges);

/// Leaf candidate ranked by (changed feature count, range-normalised distance, leaf id).
struct FoilCandidate {
    int leaf = -1;
    std::vector<double> point;
    std::size_t l0 = 0;
    double l2 = 0.0;
};

FoilCandidate make_candidate(const TripleTree& tree, std::span<const double> state, int leaf);
bool candidate_less(const FoilCandidate& a, const FoilCandidate& b);

/// Minimal change of state that makes the tree predict the foil action.
/// Throws ParameterError when the foil is already the predicted action.
Explanation counterfactual_action(const TripleTree& tree, std::span<const double> state, const Action& foil);

/// Minimal change of state after which the predicted value meets the condition.
Explanation counterfactual_value(const TripleTree& tree, std::span<const double> state, ValueCondition condition);

/// True when every leaf overlapping the bounding box of a and b predicts the action.
bool mbb_pure(const TripleTree& tree, std::span<const double> a, std::span<const double> b, const Action& action);

/// Why the action changed between s_t and s_next: the minimal perturbation
/// s'' of s_t onto a leaf with the new action whose bounding box with s_next
/// only touches leaves with that action. Throws ParameterError when the
/// predicted actions are equal.
Explanation temporal(const TripleTree& tree, std::span<const double> s_t, std::span<const double> s_next);

std::string render_text(const TripleTree& tree, const Explanation& e);
std::string render_json(const TripleTree& tree, const Explanation& e);

}  // namespace tripletree
