#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tripletree/dataset.hpp"
#include "tripletree/impurity.hpp"
#include "tripletree/tree.hpp"

namespace tripletree::road {

/// Straight road with walls at both ends. State is (pos, speed); the agent
/// picks a small acceleration each step.
struct RoadConfig {
    double r_left = -100.0;
    double r_right = -100.0;
    double r_speed = 1.0;
    double gamma = 0.99;
    std::size_t n_pos = 30;
    std::size_t n_speed = 30;
    double pos_min = 0.0;
    double pos_max = 3.0;
    double speed_min = -0.1;
    double speed_max = 0.1;
    std::vector<double> actions{-0.001, 0.001};

    void validate() const;
    bool operator==(const RoadConfig&) const = default;
};

/// Named reward variants: "oscillate", "right-goal", "left-soft", "speed-only".
RoadConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string config_to_json(const RoadConfig& config);
RoadConfig config_from_json(const std::string& text);
RoadConfig load_config(const std::filesystem::path& path);

struct RoadState {
    double pos = 0.0;
    double speed = 0.0;
};

struct StepResult {
    RoadState next;
    double reward = 0.0;
    bool terminal = false;
};

/// Speed is updated (and clamped) first, then position; crossing a wall
/// terminates with that wall's reward instead of the speed reward.
StepResult step(const RoadConfig& config, RoadState state, double acc);

/// Value function and greedy actions on the (pos, speed) grid.
struct GridPolicy {
    RoadConfig config;
    std::vector<double> values;      // n_pos * n_speed, pos-major
    std::vector<int> cell_actions;   // greedy action index per grid node
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;

    double grid_pos(std::size_t i) const;
    double grid_speed(std::size_t j) const;
    double value(std::size_t i, std::size_t j) const { return values[i * config.n_speed + j]; }

    /// Bilinear interpolation of the grid values.
    double value_at(RoadState s) const;
    /// One-step lookahead over the interpolated values; ties go to the first action.
    std::size_t action_index(RoadState s) const;
    double action(RoadState s) const { return config.actions[action_index(s)]; }
};

/// Value iteration until the largest value change drops below tolerance.
/// Throws std::runtime_error with the residual when max_iterations is hit.
GridPolicy dp_solve(const RoadConfig& config, double tolerance = 1e-8, std::size_t max_iterations = 200000);

std::string policy_to_json(const GridPolicy& policy);
GridPolicy policy_from_json(const std::string& text);

/// Episodes from uniform random starts under the greedy policy, concatenated
/// until n_samples; each is cut at episode_len steps. Deterministic per seed.
TraceDataset generate_dataset(const RoadConfig& config, const GridPolicy& policy, std::size_t n_samples,
                              std::size_t episode_len, std::uint64_t seed);

struct SweepRow {
    Theta theta;
    Losses losses;
    Losses normalised;
    double worst_normalised = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::size_t best = 0;
    // Loss of each channel under exclusive weighting on that channel.
    Losses exclusive;
    // Losses of the single-leaf tree.
    Losses trivial;
};

// Normalising denominators are at least this fraction of the single-leaf loss.
inline constexpr double kSweepLossFloor = 0.01;

/// Points of the 3-simplex whose coordinates are multiples of step.
std::vector<Theta> simplex_grid(double step);

/// Grows one tree per theta, normalises every loss by the loss of the
/// matching exclusive weighting (floored at kSweepLossFloor times the
/// single-leaf loss), and picks the smallest worst-case loss.
SweepResult theta_sweep(const AugmentedDataset& data, const std::vector<Theta>& grid, std::size_t max_leaves,
                        std::size_t min_leaf = 1);

}  // namespace tripletree::road
