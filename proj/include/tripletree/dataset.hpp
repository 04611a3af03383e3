#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tripletree {

/// Raised when an input file does not match the expected trace/tree/config layout.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a caller-supplied parameter is out of its valid domain.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ActionKind { discrete, continuous_scalar, continuous_vector };

std::string to_string(ActionKind kind);
ActionKind action_kind_from_string(const std::string& name);

/// An observed action. Discrete actions carry an index into the dataset's
/// label set; continuous actions carry their real components.
struct Action {
    int label = -1;
    std::vector<double> value;

    bool operator==(const Action&) const = default;
};

struct Step {
    std::vector<double> state;
    Action action;
    double reward = 0.0;
};

struct Episode {
    std::vector<Step> steps;
    // True when the last step ended the MDP; false when the recording was cut.
    bool terminal = false;
};

struct TraceDataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> action_names;
    ActionKind action_kind = ActionKind::discrete;
    // Discrete label set, in canonical order (numeric labels sorted by value).
    std::vector<std::string> action_labels;
    std::vector<Episode> episodes;

    std::size_t num_features() const { return feature_names.size(); }
    std::size_t action_dim() const;
    std::size_t num_samples() const;

    // Throws FormatError when any structural invariant is violated.
    void validate() const;

    std::string action_to_string(const Action& action) const;
    // Parses a discrete label or comma-separated continuous action.
    Action parse_action(const std::string& text) const;
};

enum class TraceFormat { csv, json };

struct LoadOptions {
    // When unset, the kind is inferred: non-numeric or low-cardinality scalar
    // actions are discrete, several action columns are a continuous vector.
    std::optional<ActionKind> action_kind;
};

TraceDataset load_trace(std::istream& source, TraceFormat format, const LoadOptions& options = {});
TraceDataset load_trace_file(const std::filesystem::path& path, const LoadOptions& options = {});

void write_trace_csv(std::ostream& out, const TraceDataset& data);
void write_trace_json(std::ostream& out, const TraceDataset& data);

/// Canonical text for a numeric discrete label (shortest round-trip form).
std::string canonical_number(double value);

/// Trace data flattened into per-sample arrays, with value estimates,
/// state derivatives and normalisation statistics.
struct AugmentedDataset {
    TraceDataset base;
    double gamma = 0.0;

    std::size_t n = 0;  // samples
    std::size_t d = 0;  // state features
    std::size_t m = 0;  // continuous action dimension (0 when discrete)

    std::vector<double> states;         // n*d, row-major
    std::vector<int> action_labels;     // n (discrete only)
    std::vector<double> action_values;  // n*m (continuous only)
    std::vector<double> rewards;
    std::vector<double> values;         // discounted return within the episode
    std::vector<double> derivs;         // n*d, zero where undefined
    std::vector<char> has_deriv;

    std::vector<std::size_t> episode_begin;  // episode e spans [begin[e], begin[e+1])
    std::vector<char> episode_terminal;

    std::vector<double> sigma;         // per-feature std of derivatives
    std::vector<double> action_sigma;  // per-dimension std of continuous actions
    std::vector<std::pair<double, double>> feature_range;

    std::size_t num_episodes() const { return episode_terminal.size(); }
    std::size_t num_actions() const { return base.action_labels.size(); }
    bool discrete() const { return base.action_kind == ActionKind::discrete; }

    std::span<const double> state(std::size_t i) const { return {states.data() + i * d, d}; }
    std::span<const double> deriv(std::size_t i) const { return {derivs.data() + i * d, d}; }
    std::span<const double> action_value(std::size_t i) const { return {action_values.data() + i * m, m}; }
    double feature(std::size_t i, std::size_t f) const { return states[i * d + f]; }
};

/// Computes value estimates, derivatives, sigma and feature ranges.
/// Throws ParameterError when gamma is outside [0, 1].
AugmentedDataset augment(TraceDataset data, double gamma);

}  // namespace tripletree
