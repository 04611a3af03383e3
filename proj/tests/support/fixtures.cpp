#include "fixtures.hpp"

#include <algorithm>
#include <cmath>

namespace tt_test {

using namespace tripletree;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int randint(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

namespace {

std::vector<Episode> walk(Rng& rng, std::size_t n_samples, std::size_t d, std::size_t max_len) {
    std::vector<Episode> eps;
    std::normal_distribution<double> noise(0.0, 0.06);
    std::size_t total = 0;
    while (total < n_samples) {
        Episode ep;
        const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(randint(rng, 1, static_cast<int>(max_len))),
                                                      n_samples - total);
        std::vector<double> s(d);
        for (auto& v : s) v = uniform(rng, 0.0, 1.0);
        std::vector<double> drift(d);
        for (auto& v : drift) v = uniform(rng, -0.05, 0.05);
        for (std::size_t t = 0; t < len; ++t) {
            Step st;
            st.state = s;
            ep.steps.push_back(st);
            for (std::size_t f = 0; f < d; ++f) s[f] = std::clamp(s[f] + drift[f] + noise(rng), 0.0, 1.0);
        }
        ep.terminal = uniform(rng, 0.0, 1.0) < 0.5;
        total += len;
        eps.push_back(std::move(ep));
    }
    return eps;
}

}  // namespace

TraceDataset random_trace(Rng& rng, std::size_t n_samples, std::size_t d, std::size_t n_actions,
                          std::size_t max_episode_len, double label_noise) {
    TraceDataset data;
    for (std::size_t f = 0; f < d; ++f) data.feature_names.push_back("x" + std::to_string(f));
    data.action_names = {"a"};
    data.action_kind = ActionKind::discrete;
    for (std::size_t k = 0; k < n_actions; ++k) data.action_labels.push_back("a" + std::to_string(k));
    data.episodes = walk(rng, n_samples, d, max_episode_len);
    for (auto& ep : data.episodes) {
        for (auto& st : ep.steps) {
            int rule = static_cast<int>(std::floor(st.state[0] * 3.0));
            if (d > 1) rule += static_cast<int>(std::floor(st.state[1] * 2.0));
            int label = rule % static_cast<int>(n_actions);
            if (uniform(rng, 0.0, 1.0) < label_noise) label = randint(rng, 0, static_cast<int>(n_actions) - 1);
            st.action.label = label;
            st.reward = st.state[0] - (d > 1 ? 0.5 * st.state[1] : 0.0) + uniform(rng, -0.1, 0.1);
        }
    }
    data.validate();
    return data;
}

TraceDataset random_trace_continuous(Rng& rng, std::size_t n_samples, std::size_t d, std::size_t m) {
    TraceDataset data;
    for (std::size_t f = 0; f < d; ++f) data.feature_names.push_back("x" + std::to_string(f));
    if (m == 1) {
        data.action_names = {"a"};
        data.action_kind = ActionKind::continuous_scalar;
    } else {
        for (std::size_t j = 0; j < m; ++j) data.action_names.push_back("a" + std::to_string(j + 1));
        data.action_kind = ActionKind::continuous_vector;
    }
    data.episodes = walk(rng, n_samples, d, 20);
    for (auto& ep : data.episodes) {
        for (auto& st : ep.steps) {
            st.action.value.resize(m);
            for (std::size_t j = 0; j < m; ++j) st.action.value[j] = st.state[j % d] * (j + 1.0) + uniform(rng, -0.05, 0.05);
            st.reward = st.state[0];
        }
    }
    data.validate();
    return data;
}

TreeBuilder::TreeBuilder(std::vector<std::string> features, FeatureRanges ranges, std::vector<std::string> labels,
                         std::vector<double> sigma) {
    const std::size_t d = features.size();
    meta_.feature_names = std::move(features);
    meta_.ranges = std::move(ranges);
    meta_.action_kind = ActionKind::discrete;
    meta_.action_labels = std::move(labels);
    meta_.action_names = {"a"};
    meta_.theta = Theta(1, 1, 1);
    meta_.gamma = 0.9;
    meta_.sigma = sigma.empty() ? std::vector<double>(d, 1.0) : std::move(sigma);
    meta_.medians.resize(d);
    for (std::size_t f = 0; f < d; ++f) meta_.medians[f] = 0.5 * (meta_.ranges[f].first + meta_.ranges[f].second);
    meta_.root_impurity = {1.0, 1.0, 1.0};
    Node root;
    root.leaf = Leaf{};
    root.leaf->box = Box::unbounded(d);
    root.leaf->prediction.action.label = 0;
    root.leaf->prediction.derivative.assign(d, 0.0);
    root.leaf->members = {0};
    nodes_.push_back(std::move(root));
}

std::pair<int, int> TreeBuilder::split(int leaf, std::size_t feature, double threshold) {
    Node& parent = nodes_.at(static_cast<std::size_t>(leaf));
    const Leaf base = *parent.leaf;
    Node left, right;
    left.parent = right.parent = leaf;
    left.leaf = base;
    right.leaf = base;
    left.leaf->box.upper[feature] = threshold;
    right.leaf->box.lower[feature] = threshold;
    const int l = static_cast<int>(nodes_.size());
    parent.leaf.reset();
    parent.feature = static_cast<int>(feature);
    parent.threshold = threshold;
    parent.left = l;
    parent.right = l + 1;
    nodes_.push_back(std::move(left));
    nodes_.push_back(std::move(right));
    return {l, l + 1};
}

TreeBuilder& TreeBuilder::set(int leaf, const std::string& action, double value, std::vector<double> derivative,
                              std::size_t count) {
    Leaf& l = *nodes_.at(static_cast<std::size_t>(leaf)).leaf;
    const auto it = std::find(meta_.action_labels.begin(), meta_.action_labels.end(), action);
    l.prediction.action.label = static_cast<int>(it - meta_.action_labels.begin());
    l.prediction.value = value;
    if (!derivative.empty()) l.prediction.derivative = std::move(derivative);
    l.members.assign(count, 0);
    return *this;
}

TreeBuilder& TreeBuilder::transition(int from, int to, double probability, double duration, std::size_t count) {
    Leaf& l = *nodes_.at(static_cast<std::size_t>(from)).leaf;
    l.transitions[to] = {probability, duration, count};
    l.sequence_starts += count;
    return *this;
}

TripleTree TreeBuilder::build() const {
    TreeMeta meta = meta_;
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.is_leaf() ? node.leaf->members.size() : 0;
    meta.num_samples = n;
    TripleTree tree(meta, nodes_);
    compute_densities(tree);
    return tree;
}

TripleTree random_tree(Rng& rng, std::size_t d, std::size_t max_leaves, std::size_t n_actions) {
    const auto data = augment(random_trace(rng, 400, d, n_actions, 15, 0.2), 0.9);
    const Theta theta(uniform(rng, 0.1, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0));
    return grow(data, theta, max_leaves);
}

std::vector<double> random_state(Rng& rng, const TripleTree& tree) {
    std::vector<double> s(tree.dims());
    for (std::size_t f = 0; f < s.size(); ++f) s[f] = uniform(rng, tree.meta().ranges[f].first, tree.meta().ranges[f].second);
    return s;
}

}  // namespace tt_test
