#include "tripletree/explain.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include <json.hpp>

namespace tripletree {
namespace {

double range_width(const TreeMeta& meta, std::size_t f) {
    const double w = meta.ranges[f].second - meta.ranges[f].first;
    return w > 0.0 ? w : 1.0;
}

void check_state(const TripleTree& tree, std::span<const double> state) {
    if (state.size() != tree.dims()) {
        throw ParameterError("state has " + std::to_string(state.size()) + " features, tree expects " +
                             std::to_string(tree.dims()));
    }
    for (double v : state) {
        if (!std::isfinite(v)) throw ParameterError("state contains a non-finite value");
    }
}

std::vector<Bound> leaf_bounds(const Box& box, std::span<const std::size_t> features) {
    std::vector<Bound> out;
    for (std::size_t f : features) {
        if (std::isfinite(box.lower[f])) out.push_back({f, Relation::greater_equal, box.lower[f]});
        if (std::isfinite(box.upper[f])) out.push_back({f, Relation::less, box.upper[f]});
    }
    return out;
}

std::vector<std::size_t> all_features(std::size_t d) {
    std::vector<std::size_t> out(d);
    for (std::size_t f = 0; f < d; ++f) out[f] = f;
    return out;
}

template <class Eligible>
Explanation nearest_eligible(const TripleTree& tree, std::span<const double> state, Eligible eligible) {
    Explanation e;
    e.state.assign(state.begin(), state.end());
    e.fact = tree.predict(state).action;
    std::optional<FoilCandidate> best;
    for (int id : tree.leaf_ids()) {
        if (!eligible(tree.leaf(id))) continue;
        auto c = make_candidate(tree, state, id);
        if (!best || candidate_less(c, *best)) best = std::move(c);
    }
    if (!best) {
        e.reachable = false;
        return e;
    }
    e.target_leaf = best->leaf;
    for (std::size_t f = 0; f < tree.dims(); ++f) {
        if (best->point[f] != state[f]) e.changed_features.push_back(f);
    }
    e.bounds = leaf_bounds(tree.leaf(best->leaf).box, e.changed_features);
    e.foil_point = std::move(best->point);
    return e;
}

std::string num(double v, int digits = 3) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Narrow intervals get more digits until their ends print differently.
std::pair<std::string, std::string> interval(double lo, double hi) {
    int digits = 3;
    while (digits < 17 && num(lo, digits) == num(hi, digits)) ++digits;
    return {num(lo, digits), num(hi, digits)};
}

// "pos ∈ [1.1, 1.32] and speed ≥ 0.021"
std::string conditions(const TripleTree& tree, const std::vector<Bound>& bounds) {
    std::string out;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (!out.empty()) out += " and ";
        const auto& b = bounds[i];
        const auto& name = tree.meta().feature_names[b.feature];
        if (b.relation == Relation::greater_equal && i + 1 < bounds.size() && bounds[i + 1].feature == b.feature &&
            bounds[i + 1].relation == Relation::less) {
            const auto [lo, hi] = interval(b.threshold, bounds[i + 1].threshold);
            out += name + " ∈ [" + lo + ", " + hi + "]";
            ++i;
        } else {
            out += name + (b.relation == Relation::less ? " < " : " ≥ ") + num(b.threshold);
        }
    }
    return out;
}

std::string condition_text(const ValueCondition& c) {
    return std::string(c.op == ValueCondition::Op::at_most ? "≤ " : "≥ ") + num(c.threshold);
}

}  // namespace

std::string to_string(ExplanationKind kind) {
    switch (kind) {
        case ExplanationKind::factual: return "factual";
        case ExplanationKind::counterfactual_action: return "counterfactual_action";
        case ExplanationKind::counterfactual_value: return "counterfactual_value";
        case ExplanationKind::temporal: return "temporal";
    }
    return "?";
}

Explanation factual(const TripleTree& tree, std::span<const double> state) {
    check_state(tree, state);
    Explanation e;
    e.kind = ExplanationKind::factual;
    e.state.assign(state.begin(), state.end());
    e.target_leaf = tree.leaf_of(state);
    e.fact = tree.leaf(e.target_leaf).prediction.action;
    e.bounds = leaf_bounds(tree.leaf(e.target_leaf).box, all_features(tree.dims()));
    return e;
}

std::vector<double> project_onto_box(std::span<const double> state, const Box& box) {
    std::vector<double> out(state.begin(), state.end());
    for (std::size_t f = 0; f < out.size(); ++f) out[f] = std::min(std::max(out[f], box.lower[f]), box.upper[f]);
    return out;
}

std::vector<double> project_into_leaf(std::span<const double> state, const Box& box, const FeatureRanges& ranges) {
    auto out = project_onto_box(state, box);
    for (std::size_t f = 0; f < out.size(); ++f) {
        if (out[f] < box.upper[f]) continue;
        const double w = ranges[f].second - ranges[f].first;
        const double nudged = box.upper[f] - 1e-9 * (w > 0.0 ? w : 1.0);
        out[f] = nudged >= box.lower[f] ? nudged : 0.5 * (box.lower[f] + box.upper[f]);
    }
    return out;
}

FoilCandidate make_candidate(const TripleTree& tree, std::span<const double> state, int leaf) {
    FoilCandidate c;
    c.leaf = leaf;
    c.point = project_into_leaf(state, tree.leaf(leaf).box, tree.meta().ranges);
    double sq = 0.0;
    for (std::size_t f = 0; f < state.size(); ++f) {
        if (c.point[f] == state[f]) continue;
        ++c.l0;
        const double z = (c.point[f] - state[f]) / range_width(tree.meta(), f);
        sq += z * z;
    }
    c.l2 = std::sqrt(sq);
    return c;
}

bool candidate_less(const FoilCandidate& a, const FoilCandidate& b) {
    if (a.l0 != b.l0) return a.l0 < b.l0;
    if (a.l2 != b.l2) return a.l2 < b.l2;
    return a.leaf < b.leaf;
}

Explanation counterfactual_action(const TripleTree& tree, std::span<const double> state, const Action& foil) {
    check_state(tree, state);
    if (tree.predict(state).action == foil) {
        throw ParameterError("foil action '" + tree.action_to_string(foil) + "' is already predicted at this state");
    }
    auto e = nearest_eligible(tree, state, [&](const Leaf& l) { return l.prediction.action == foil; });
    e.kind = ExplanationKind::counterfactual_action;
    e.foil_action = foil;
    return e;
}

Explanation counterfactual_value(const TripleTree& tree, std::span<const double> state, ValueCondition condition) {
    check_state(tree, state);
    auto e = nearest_eligible(tree, state, [&](const Leaf& l) { return condition.satisfied_by(l.prediction.value); });
    e.kind = ExplanationKind::counterfactual_value;
    e.foil_value = condition;
    return e;
}

bool mbb_pure(const TripleTree& tree, std::span<const double> a, std::span<const double> b, const Action& action) {
    for (int id : tree.leaf_ids()) {
        const Leaf& l = tree.leaf(id);
        bool overlaps = true;
        for (std::size_t f = 0; f < a.size() && overlaps; ++f) {
            const double lo = std::min(a[f], b[f]);
            const double hi = std::max(a[f], b[f]);
            overlaps = lo < l.box.upper[f] && hi >= l.box.lower[f];
        }
        if (overlaps && !(l.prediction.action == action)) return false;
    }
    return true;
}

Explanation temporal(const TripleTree& tree, std::span<const double> s_t, std::span<const double> s_next) {
    check_state(tree, s_t);
    check_state(tree, s_next);
    const Action before = tree.predict(s_t).action;
    const Action after = tree.predict(s_next).action;
    if (before == after) throw ParameterError("predicted action is the same at both states");

    std::optional<FoilCandidate> best;
    for (int id : tree.leaf_ids()) {
        if (!(tree.leaf(id).prediction.action == after)) continue;
        auto c = make_candidate(tree, s_t, id);
        if (best && !candidate_less(c, *best)) continue;
        if (mbb_pure(tree, c.point, s_next, after)) best = std::move(c);
    }

    Explanation e;
    if (!best) {
        e = counterfactual_action(tree, s_t, after);
        e.minimal = false;
    } else {
        e.state.assign(s_t.begin(), s_t.end());
        e.fact = before;
        e.target_leaf = best->leaf;
        for (std::size_t f = 0; f < tree.dims(); ++f) {
            if (best->point[f] != s_t[f]) e.changed_features.push_back(f);
        }
        e.bounds = leaf_bounds(tree.leaf(best->leaf).box, e.changed_features);
        e.foil_point = std::move(best->point);
    }
    e.kind = ExplanationKind::temporal;
    e.foil_action = after;
    return e;
}

std::string render_text(const TripleTree& tree, const Explanation& e) {
    const std::string because = conditions(tree, e.bounds);
    switch (e.kind) {
        case ExplanationKind::factual:
            return "Action = " + tree.action_to_string(e.fact) +
                   (because.empty() ? " always." : " because " + because + ".");
        case ExplanationKind::counterfactual_action: {
            const auto foil = tree.action_to_string(*e.foil_action);
            if (!e.reachable) return "Action would never = " + foil + " (foil unreachable).";
            return "Action would = " + foil + " if " + because + ".";
        }
        case ExplanationKind::counterfactual_value: {
            const auto cond = condition_text(*e.foil_value);
            if (!e.reachable) return "Value would never " + cond + " (foil unreachable).";
            if (e.changed_features.empty()) return "Value " + cond + " already.";
            return "Value would " + cond + " if " + because + ".";
        }
        case ExplanationKind::temporal: {
            std::string s = "Action changed " + tree.action_to_string(e.fact) + " → " +
                            tree.action_to_string(*e.foil_action) + " because " + because + ".";
            if (!e.minimal) s += " (non-minimal: unconstrained)";
            return s;
        }
    }
    return {};
}

std::string render_json(const TripleTree& tree, const Explanation& e) {
    using nlohmann::json;
    json j;
    j["kind"] = to_string(e.kind);
    j["state"] = e.state;
    j["fact"] = tree.action_to_string(e.fact);
    json bounds = json::array();
    for (const auto& b : e.bounds) {
        bounds.push_back({{"feature", b.feature},
                          {"name", tree.meta().feature_names[b.feature]},
                          {"relation", b.relation == Relation::less ? "<" : ">="},
                          {"threshold", b.threshold}});
    }
    j["bounds"] = bounds;
    if (e.foil_action) j["foil"] = {{"action", tree.action_to_string(*e.foil_action)}};
    if (e.foil_value) {
        j["foil"] = {{"value", {{"op", e.foil_value->op == ValueCondition::Op::at_most ? "<=" : ">="},
                                {"threshold", e.foil_value->threshold}}}};
    }
    j["target_leaf"] = e.target_leaf < 0 ? json(nullptr) : json(e.target_leaf);
    j["foil_point"] = e.foil_point ? json(*e.foil_point) : json(nullptr);
    j["changed_features"] = e.changed_features;
    j["reachable"] = e.reachable;
    j["minimal"] = e.minimal;
    j["text"] = render_text(tree, e);
    return j.dump(1);
}

}  // namespace tripletree
