#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oracle {

namespace {

double gini_of(const std::vector<int>& members, const std::vector<int>& y, int n_classes) {
    if (members.empty()) return 0.0;
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (int i : members) ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
    const double t = static_cast<double>(members.size());
    double s = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / t;
        s += p * p;
    }
    return std::max(0.0, 1.0 - s);
}

}  // namespace

std::vector<Split> greedy_cart(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int n_classes,
                               std::size_t max_leaves) {
    struct Open {
        int id;
        std::vector<int> members;
        bool splittable;
    };
    std::vector<int> all(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) all[i] = static_cast<int>(i);
    const double root = gini_of(all, y, n_classes);
    std::vector<Open> leaves{{0, all, true}};
    int next_id = 1;
    std::vector<Split> out;
    if (!(root > 0.0)) return out;
    const std::size_t d = x.empty() ? 0 : x[0].size();

    while (leaves.size() < max_leaves) {
        int pick = -1;
        double pick_priority = 0.0;
        for (std::size_t k = 0; k < leaves.size(); ++k) {
            auto& l = leaves[k];
            if (!l.splittable) continue;
            const double pr = static_cast<double>(l.members.size()) * (1.0 * gini_of(l.members, y, n_classes) / root);
            if (l.members.size() < 2 || !(pr > 0.0)) {
                l.splittable = false;
                continue;
            }
            if (pick < 0 || pr > pick_priority) {
                pick = static_cast<int>(k);
                pick_priority = pr;
            }
        }
        if (pick < 0) break;
        // Ids are assigned in creation order, so leaves stay sorted by id.
        Open& node = leaves[static_cast<std::size_t>(pick)];
        const double parent = gini_of(node.members, y, n_classes);

        bool found = false;
        double best_q = 0.0;
        std::size_t best_f = 0;
        double best_tau = 0.0;
        for (std::size_t f = 0; f < d; ++f) {
            std::set<double> values;
            for (int i : node.members) values.insert(x[static_cast<std::size_t>(i)][f]);
            std::vector<double> v(values.begin(), values.end());
            for (std::size_t k = 0; k + 1 < v.size(); ++k) {
                double tau = 0.5 * (v[k] + v[k + 1]);
                if (!(tau > v[k])) tau = v[k + 1];
                std::vector<int> left, right;
                for (int i : node.members) (x[static_cast<std::size_t>(i)][f] < tau ? left : right).push_back(i);
                const double nl = static_cast<double>(left.size());
                const double nr = static_cast<double>(right.size());
                const double q =
                    1.0 * (parent - (gini_of(left, y, n_classes) * nl + gini_of(right, y, n_classes) * nr) / (nl + nr)) / root;
                if (!found || q > best_q + 1e-12) {
                    found = true;
                    best_q = q;
                    best_f = f;
                    best_tau = tau;
                }
            }
        }
        if (!found || !(best_q > 1e-12)) {
            node.splittable = false;
            continue;
        }
        Open left{next_id, {}, true};
        Open right{next_id + 1, {}, true};
        for (int i : node.members) (x[static_cast<std::size_t>(i)][best_f] < best_tau ? left.members : right.members).push_back(i);
        out.push_back({node.id, best_f, best_tau});
        next_id += 2;
        leaves.erase(leaves.begin() + pick);
        leaves.push_back(std::move(left));
        leaves.push_back(std::move(right));
    }
    return out;
}

double pairwise_variance(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double a : x) {
        for (double b : x) s += (a - b) * (a - b);
    }
    const double n = static_cast<double>(x.size());
    return s / (2.0 * n * n);
}

double pairwise_derivative_impurity(const std::vector<std::vector<double>>& rows, std::span<const double> sigma) {
    double total = 0.0;
    for (std::size_t f = 0; f < sigma.size(); ++f) {
        if (!(sigma[f] > 0.0)) continue;
        std::vector<double> col;
        for (const auto& r : rows) col.push_back(r[f]);
        total += pairwise_variance(col) / sigma[f];
    }
    return total;
}

TransitionCounts scan_transitions(const std::vector<std::vector<int>>& sequences, const std::vector<bool>& terminal) {
    TransitionCounts out;
    for (std::size_t e = 0; e < sequences.size(); ++e) {
        const auto& s = sequences[e];
        std::size_t start = 0;
        for (std::size_t t = 1; t <= s.size(); ++t) {
            const bool boundary = t == s.size() || s[t] != s[t - 1];
            if (!boundary) continue;
            const int from = s[start];
            const double len = static_cast<double>(t - start);
            if (t < s.size()) {
                ++out.count[from][s[t]];
                out.total_length[from][s[t]] += len;
            } else if (terminal[e]) {
                ++out.count[from][tripletree::kSink];
                out.total_length[from][tripletree::kSink] += len;
            }
            start = t;
        }
    }
    return out;
}

std::optional<std::pair<std::vector<int>, double>> best_simple_path(const std::vector<GraphEdge>& edges, int start,
                                                                     int end) {
    std::optional<std::pair<std::vector<int>, double>> best;
    std::vector<int> path{start};
    std::set<int> seen{start};
    std::function<void(int, double)> dfs = [&](int node, double p) {
        if (node == end) {
            if (!best || p > best->second) best = std::make_pair(path, p);
            return;
        }
        for (const auto& e : edges) {
            if (e.from != node || seen.count(e.to)) continue;
            seen.insert(e.to);
            path.push_back(e.to);
            dfs(e.to, p * e.probability);
            path.pop_back();
            seen.erase(e.to);
        }
    };
    dfs(start, 1.0);
    return best;
}

std::vector<double> clamp_into(const tripletree::TripleTree& tree, std::span<const double> state, int leaf) {
    const auto& box = tree.leaf(leaf).box;
    std::vector<double> p(state.begin(), state.end());
    for (std::size_t f = 0; f < p.size(); ++f) {
        if (p[f] < box.lower[f]) p[f] = box.lower[f];
        if (p[f] >= box.upper[f]) {
            const auto [lo, hi] = tree.meta().ranges[f];
            p[f] = box.upper[f] - 1e-9 * (hi > lo ? hi - lo : 1.0);
        }
    }
    return p;
}

std::optional<Foil> exhaustive_foil(const tripletree::TripleTree& tree, std::span<const double> state,
                                    const std::function<bool(int)>& eligible) {
    std::optional<Foil> best;
    std::size_t best_l0 = 0;
    double best_l2 = 0.0;
    for (int id : tree.leaf_ids()) {
        if (!eligible(id)) continue;
        const auto p = clamp_into(tree, state, id);
        std::size_t l0 = 0;
        double sq = 0.0;
        for (std::size_t f = 0; f < p.size(); ++f) {
            if (p[f] == state[f]) continue;
            ++l0;
            const auto [lo, hi] = tree.meta().ranges[f];
            const double z = (p[f] - state[f]) / (hi > lo ? hi - lo : 1.0);
            sq += z * z;
        }
        const double l2 = std::sqrt(sq);
        const bool better = !best || l0 < best_l0 || (l0 == best_l0 && (l2 < best_l2 || (l2 == best_l2 && id < best->leaf)));
        if (better) {
            best = Foil{id, p};
            best_l0 = l0;
            best_l2 = l2;
        }
    }
    return best;
}

bool mbb_violated(const tripletree::TripleTree& tree, std::span<const double> a, std::span<const double> b,
                  const tripletree::Action& action) {
    for (int id : tree.leaf_ids()) {
        const auto& box = tree.leaf(id).box;
        bool disjoint = false;
        for (std::size_t f = 0; f < a.size(); ++f) {
            const double lo = a[f] < b[f] ? a[f] : b[f];
            const double hi = a[f] < b[f] ? b[f] : a[f];
            if (hi < box.lower[f] || lo >= box.upper[f]) disjoint = true;
        }
        if (!disjoint && !(tree.leaf(id).prediction.action == action)) return true;
    }
    return false;
}

double minimise_1d(const std::function<double(double)>& f, double lo, double hi, std::size_t grid) {
    double best_x = lo;
    double best_v = f(lo);
    const double h = (hi - lo) / static_cast<double>(grid);
    for (std::size_t i = 1; i <= grid; ++i) {
        const double x = lo + h * static_cast<double>(i);
        const double v = f(x);
        if (v < best_v) {
            best_v = v;
            best_x = x;
        }
    }
    double a = std::max(lo, best_x - h);
    double b = std::min(hi, best_x + h);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
        if (f(c) < f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return 0.5 * (a + b);
}

double angle(double ax, double ay, double bx, double by) {
    const double c = (ax * bx + ay * by) / (std::hypot(ax, ay) * std::hypot(bx, by));
    return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace oracle
