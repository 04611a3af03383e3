#include "tripletree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tripletree {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Maps each data label index to the tree's label index (-1 when unknown).
std::vector<int> label_map(const TripleTree& tree, const AugmentedDataset& data) {
    std::vector<int> out(data.num_actions(), -1);
    const auto& labels = tree.meta().action_labels;
    for (std::size_t k = 0; k < data.num_actions(); ++k) {
        const auto it = std::find(labels.begin(), labels.end(), data.base.action_labels[k]);
        if (it != labels.end()) out[k] = static_cast<int>(it - labels.begin());
    }
    return out;
}

void check_compatible(const TripleTree& tree, const AugmentedDataset& data) {
    if (data.d != tree.dims()) throw ParameterError("dataset state dimension does not match the tree");
    if (data.discrete() != tree.discrete()) throw ParameterError("dataset action kind does not match the tree");
}

std::vector<double> feature_medians(const AugmentedDataset& data) {
    std::vector<double> out(data.d, 0.0);
    if (data.n == 0) return out;
    std::vector<double> column(data.n);
    for (std::size_t f = 0; f < data.d; ++f) {
        for (std::size_t i = 0; i < data.n; ++i) column[i] = data.feature(i, f);
        std::sort(column.begin(), column.end());
        const std::size_t h = data.n / 2;
        out[f] = data.n % 2 ? column[h] : 0.5 * (column[h - 1] + column[h]);
    }
    return out;
}

}  // namespace

Box Box::unbounded(std::size_t d) {
    return Box{std::vector<double>(d, -kInf), std::vector<double>(d, kInf)};
}

bool Box::contains(std::span<const double> point) const {
    for (std::size_t f = 0; f < lower.size(); ++f) {
        if (!(point[f] >= lower[f] && point[f] < upper[f])) return false;
    }
    return true;
}

Box Box::clipped(const FeatureRanges& ranges) const {
    Box out = *this;
    for (std::size_t f = 0; f < lower.size(); ++f) {
        out.lower[f] = std::clamp(lower[f], ranges[f].first, ranges[f].second);
        out.upper[f] = std::clamp(upper[f], ranges[f].first, ranges[f].second);
    }
    return out;
}

std::vector<double> Box::center(const FeatureRanges& ranges) const {
    const Box c = clipped(ranges);
    std::vector<double> out(lower.size());
    for (std::size_t f = 0; f < lower.size(); ++f) out[f] = 0.5 * (c.lower[f] + c.upper[f]);
    return out;
}

TripleTree::TripleTree(TreeMeta meta, std::vector<Node> nodes) : meta_(std::move(meta)), nodes_(std::move(nodes)) {}

std::vector<int> TripleTree::leaf_ids() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].is_leaf()) ids.push_back(static_cast<int>(i));
    }
    return ids;
}

std::size_t TripleTree::num_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

const Leaf& TripleTree::leaf(int id) const {
    const auto& node = nodes_.at(static_cast<std::size_t>(id));
    if (!node.is_leaf()) throw ParameterError("node " + std::to_string(id) + " is not a leaf");
    return *node.leaf;
}

Leaf& TripleTree::leaf(int id) {
    auto& node = nodes_.at(static_cast<std::size_t>(id));
    if (!node.is_leaf()) throw ParameterError("node " + std::to_string(id) + " is not a leaf");
    return *node.leaf;
}

int TripleTree::leaf_of(std::span<const double> state) const {
    if (nodes_.empty()) throw ParameterError("empty tree");
    if (state.size() != dims()) throw ParameterError("state has wrong dimension");
    int id = 0;
    while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        id = state[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return id;
}

const Prediction& TripleTree::predict(std::span<const double> state) const {
    return leaf(leaf_of(state)).prediction;
}

std::string TripleTree::action_to_string(const Action& action) const {
    TraceDataset shim;
    shim.action_kind = meta_.action_kind;
    shim.action_labels = meta_.action_labels;
    return shim.action_to_string(action);
}

Action TripleTree::parse_action(const std::string& text) const {
    TraceDataset shim;
    shim.action_kind = meta_.action_kind;
    shim.action_labels = meta_.action_labels;
    shim.action_names = meta_.action_names;
    if (!discrete()) shim.action_names.resize(meta_.action_sigma.size());
    return shim.parse_action(text);
}

double leaf_priority(std::size_t count, const ImpurityTriple& impurity, const Theta& theta,
                     const ImpurityTriple& root) {
    double weighted = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        if (root[c] > 0.0 && theta[c] > 0.0) weighted += theta[c] * impurity[c] / root[c];
    }
    return static_cast<double>(count) * weighted;
}

std::optional<int> select_best_leaf(std::span<const LeafSummary> leaves, const Theta& theta,
                                    const ImpurityTriple& root) {
    std::optional<int> best;
    double best_priority = 0.0;
    for (const auto& l : leaves) {
        if (!l.splittable) continue;
        const double p = leaf_priority(l.count, l.impurity, theta, root);
        if (!best || p > best_priority) {
            best = l.id;
            best_priority = p;
        }
    }
    return best;
}

TreeGrower::TreeGrower(const AugmentedDataset& data, const Theta& theta, std::size_t min_leaf) : data_(data) {
    if (data.n == 0) throw ParameterError("cannot grow a tree on an empty dataset");
    TreeMeta meta;
    meta.feature_names = data.base.feature_names;
    meta.action_kind = data.base.action_kind;
    meta.action_labels = data.base.action_labels;
    meta.action_names = data.base.action_names;
    meta.theta = theta;
    meta.gamma = data.gamma;
    meta.sigma = data.sigma;
    meta.action_sigma = data.action_sigma;
    meta.ranges = data.feature_range;
    meta.medians = feature_medians(data);
    meta.min_leaf = std::max<std::size_t>(min_leaf, 1);
    meta.num_samples = data.n;

    std::vector<std::size_t> all(data.n);
    for (std::size_t i = 0; i < data.n; ++i) all[i] = i;
    meta.root_impurity = node_impurity(data, all);

    tree_.meta_ = std::move(meta);
    Node root;
    root.leaf = make_leaf(Box::unbounded(data.d), std::move(all), nullptr);
    tree_.nodes_.push_back(std::move(root));
    splittable_.push_back(1);
}

Leaf TreeGrower::make_leaf(Box box, std::vector<std::size_t> members, const Prediction* fallback) const {
    const auto& data = data_;
    Leaf leaf;
    leaf.box = std::move(box);
    leaf.impurity = node_impurity(data, members);

    Prediction& pred = leaf.prediction;
    const double n = static_cast<double>(members.size());
    if (data.discrete()) {
        std::vector<std::size_t> counts(data.num_actions(), 0);
        for (std::size_t i : members) ++counts[static_cast<std::size_t>(data.action_labels[i])];
        // max_element returns the first maximum, i.e. the lowest label.
        pred.action.label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    } else {
        pred.action.value.assign(data.m, 0.0);
        for (std::size_t i : members) {
            for (std::size_t j = 0; j < data.m; ++j) pred.action.value[j] += data.action_values[i * data.m + j];
        }
        for (auto& v : pred.action.value) v /= n;
    }
    for (std::size_t i : members) pred.value += data.values[i];
    pred.value /= n;

    pred.derivative.assign(data.d, 0.0);
    std::size_t nd = 0;
    for (std::size_t i : members) {
        if (!data.has_deriv[i]) continue;
        ++nd;
        for (std::size_t f = 0; f < data.d; ++f) pred.derivative[f] += data.derivs[i * data.d + f];
    }
    if (nd > 0) {
        for (auto& v : pred.derivative) v /= static_cast<double>(nd);
    } else {
        pred.derivative_low_confidence = true;
        if (fallback) pred.derivative = fallback->derivative;
    }
    leaf.members = std::move(members);
    return leaf;
}

bool TreeGrower::step() {
    auto& nodes = tree_.nodes_;
    const auto& meta = tree_.meta_;
    while (true) {
        std::vector<LeafSummary> summaries;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (!nodes[i].is_leaf() || !splittable_[i]) continue;
            const Leaf& l = *nodes[i].leaf;
            LeafSummary s{static_cast<int>(i), l.count(), l.impurity, true};
            if (l.count() < 2 * meta.min_leaf ||
                !(leaf_priority(s.count, s.impurity, meta.theta, meta.root_impurity) > 0.0)) {
                splittable_[i] = 0;
                continue;
            }
            summaries.push_back(s);
        }
        const auto chosen = select_best_leaf(summaries, meta.theta, meta.root_impurity);
        if (!chosen) return false;

        const std::size_t id = static_cast<std::size_t>(*chosen);
        const Leaf& parent = *nodes[id].leaf;
        const auto split = best_split(data_, parent.members, meta.root_impurity, meta.theta, meta.min_leaf);
        if (!split) {
            splittable_[id] = 0;
            continue;
        }

        std::vector<std::size_t> left_members;
        std::vector<std::size_t> right_members;
        for (std::size_t i : parent.members) {
            (data_.feature(i, split->feature) < split->threshold ? left_members : right_members).push_back(i);
        }
        Box left_box = parent.box;
        Box right_box = parent.box;
        left_box.upper[split->feature] = split->threshold;
        right_box.lower[split->feature] = split->threshold;

        const Prediction parent_pred = parent.prediction;
        Node left;
        Node right;
        left.parent = right.parent = static_cast<int>(id);
        left.leaf = make_leaf(std::move(left_box), std::move(left_members), &parent_pred);
        right.leaf = make_leaf(std::move(right_box), std::move(right_members), &parent_pred);

        const int left_id = static_cast<int>(nodes.size());
        const int right_id = left_id + 1;
        nodes[id].leaf.reset();
        nodes[id].feature = static_cast<int>(split->feature);
        nodes[id].threshold = split->threshold;
        nodes[id].left = left_id;
        nodes[id].right = right_id;
        nodes.push_back(std::move(left));
        nodes.push_back(std::move(right));
        splittable_.push_back(1);
        splittable_.push_back(1);
        history_.push_back({static_cast<int>(id), split->feature, split->threshold, split->hybrid_quality, left_id, right_id});
        return true;
    }
}

std::size_t TreeGrower::grow_to(std::size_t max_leaves) {
    if (max_leaves < 1) throw ParameterError("max_leaves must be at least 1");
    while (tree_.num_leaves() < max_leaves && step()) {
    }
    return tree_.num_leaves();
}

TripleTree TreeGrower::snapshot() const {
    TripleTree out = tree_;
    compute_transitions(out, data_);
    compute_densities(out);
    return out;
}

TripleTree grow(const AugmentedDataset& data, const Theta& theta, std::size_t max_leaves, std::size_t min_leaf) {
    TreeGrower grower(data, theta, min_leaf);
    grower.grow_to(max_leaves);
    return grower.snapshot();
}

void compute_transitions(TripleTree& tree, const AugmentedDataset& data) {
    if (data.d != tree.dims()) throw ParameterError("dataset state dimension does not match the tree");
    std::map<int, std::map<int, std::pair<std::size_t, double>>> acc;  // source -> dest -> (count, total length)
    std::vector<int> leaf_seq;
    for (std::size_t e = 0; e < data.num_episodes(); ++e) {
        const std::size_t b = data.episode_begin[e];
        const std::size_t end = data.episode_begin[e + 1];
        leaf_seq.clear();
        for (std::size_t i = b; i < end; ++i) leaf_seq.push_back(tree.leaf_of(data.state(i)));
        std::size_t run = 0;
        while (run < leaf_seq.size()) {
            std::size_t next = run;
            while (next < leaf_seq.size() && leaf_seq[next] == leaf_seq[run]) ++next;
            const double length = static_cast<double>(next - run);
            int dest = kSink;
            bool record = true;
            if (next < leaf_seq.size()) {
                dest = leaf_seq[next];
            } else if (!data.episode_terminal[e]) {
                record = false;
            }
            if (record) {
                auto& slot = acc[leaf_seq[run]][dest];
                ++slot.first;
                slot.second += length;
            }
            run = next;
        }
    }
    for (int id : tree.leaf_ids()) {
        Leaf& l = tree.leaf(id);
        l.transitions.clear();
        l.sequence_starts = 0;
        const auto it = acc.find(id);
        if (it == acc.end()) continue;
        for (const auto& [dest, slot] : it->second) l.sequence_starts += slot.first;
        for (const auto& [dest, slot] : it->second) {
            Transition t;
            t.count = slot.first;
            t.probability = static_cast<double>(slot.first) / static_cast<double>(l.sequence_starts);
            t.mean_duration = slot.second / static_cast<double>(slot.first);
            l.transitions[dest] = t;
        }
    }
}

void compute_densities(TripleTree& tree) {
    const auto& ranges = tree.meta().ranges;
    for (int id : tree.leaf_ids()) {
        Leaf& l = tree.leaf(id);
        const Box c = l.box.clipped(ranges);
        double volume = 1.0;
        for (std::size_t f = 0; f < c.dims(); ++f) {
            const double width = ranges[f].second - ranges[f].first;
            if (width > 0.0) volume *= (c.upper[f] - c.lower[f]) / width;
        }
        l.density = volume > 0.0 ? static_cast<double>(l.count()) / volume : 0.0;
    }
}

Losses evaluate_losses(const TripleTree& tree, const AugmentedDataset& data) {
    check_compatible(tree, data);
    Losses out;
    if (data.n == 0) return out;
    const auto labels = tree.discrete() ? label_map(tree, data) : std::vector<int>{};
    const std::size_t d = data.d;
    double wrong = 0.0;
    double action_sq = 0.0;
    double value_sq = 0.0;
    std::vector<double> deriv_sq(d, 0.0);
    std::size_t nd = 0;
    for (std::size_t i = 0; i < data.n; ++i) {
        const Prediction& p = tree.predict(data.state(i));
        if (tree.discrete()) {
            if (labels[static_cast<std::size_t>(data.action_labels[i])] != p.action.label) wrong += 1.0;
        } else {
            for (std::size_t j = 0; j < data.m; ++j) {
                const double e = p.action.value[j] - data.action_values[i * data.m + j];
                action_sq += e * e;
            }
        }
        const double ev = p.value - data.values[i];
        value_sq += ev * ev;
        if (data.has_deriv[i]) {
            ++nd;
            for (std::size_t f = 0; f < d; ++f) {
                const double e = p.derivative[f] - data.derivs[i * d + f];
                deriv_sq[f] += e * e;
            }
        }
    }
    const double n = static_cast<double>(data.n);
    out.action = tree.discrete() ? wrong / n : std::sqrt(action_sq / n);
    out.value = std::sqrt(value_sq / n);
    if (nd > 0) {
        const auto& sigma = tree.meta().sigma;
        for (std::size_t f = 0; f < d; ++f) {
            if (sigma[f] > 0.0) out.derivative += std::sqrt(deriv_sq[f] / static_cast<double>(nd)) / sigma[f];
        }
    }
    return out;
}

std::vector<LossCurvePoint> loss_curve(const AugmentedDataset& train, const AugmentedDataset* validation,
                                       const Theta& theta, std::size_t max_leaves, std::size_t min_leaf) {
    if (max_leaves < 1) throw ParameterError("max_leaves must be at least 1");
    TreeGrower grower(train, theta, min_leaf);
    std::vector<LossCurvePoint> out;
    const auto record = [&] {
        LossCurvePoint p;
        p.leaves = grower.tree().num_leaves();
        p.train = evaluate_losses(grower.tree(), train);
        if (validation) p.validation = evaluate_losses(grower.tree(), *validation);
        out.push_back(p);
    };
    record();
    while (grower.tree().num_leaves() < max_leaves && grower.step()) record();
    return out;
}

}  // namespace tripletree
