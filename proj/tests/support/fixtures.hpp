#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tripletree/dataset.hpp"
#include "tripletree/tree.hpp"

namespace tt_test {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
int randint(Rng& rng, int lo, int hi);  // inclusive

/// Random-walk episodes in [0,1]^d. Discrete labels "a0".."a{k-1}" follow a
/// state rule with some label noise; rewards depend on the state.
tripletree::TraceDataset random_trace(Rng& rng, std::size_t n_samples, std::size_t d, std::size_t n_actions,
                                      std::size_t max_episode_len = 20, double label_noise = 0.1);

/// Same walk with a continuous action of dimension m (m == 1 gives a scalar).
tripletree::TraceDataset random_trace_continuous(Rng& rng, std::size_t n_samples, std::size_t d, std::size_t m);

/// Builds trees by hand. Leaves are node ids; split() turns a leaf into an
/// internal node and returns its (left, right) children.
class TreeBuilder {
public:
    TreeBuilder(std::vector<std::string> features, tripletree::FeatureRanges ranges, std::vector<std::string> labels,
                std::vector<double> sigma = {});

    std::pair<int, int> split(int leaf, std::size_t feature, double threshold);
    TreeBuilder& set(int leaf, const std::string& action, double value, std::vector<double> derivative = {},
                     std::size_t count = 1);
    TreeBuilder& transition(int from, int to, double probability, double duration = 1.0, std::size_t count = 1);
    tripletree::TripleTree build() const;

private:
    tripletree::TreeMeta meta_;
    std::vector<tripletree::Node> nodes_;
};

/// Tree grown on a random trace; every leaf has transitions and densities.
tripletree::TripleTree random_tree(Rng& rng, std::size_t d, std::size_t max_leaves, std::size_t n_actions);

/// Uniform random state inside the tree's feature ranges.
std::vector<double> random_state(Rng& rng, const tripletree::TripleTree& tree);

}  // namespace tt_test
