#include "tripletree/road.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace tripletree::road {
namespace {

using nlohmann::json;

// splitmix64; uniform doubles are built from the top 53 bits so the stream
// is identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31u);
    }
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

private:
    std::uint64_t state_;
};

struct Corner {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
};

// Bilinear stencil of a point inside the grid.
Corner stencil(const RoadConfig& c, RoadState s) {
    const auto axis = [](double v, double lo, double hi, std::size_t n, std::size_t& i0, double& t) {
        const double x = (v - lo) / (hi - lo) * static_cast<double>(n - 1);
        const double fl = std::floor(x);
        i0 = static_cast<std::size_t>(std::clamp(fl, 0.0, static_cast<double>(n - 2)));
        t = std::clamp(x - static_cast<double>(i0), 0.0, 1.0);
    };
    std::size_t i0 = 0;
    std::size_t j0 = 0;
    double tp = 0.0;
    double ts = 0.0;
    axis(s.pos, c.pos_min, c.pos_max, c.n_pos, i0, tp);
    axis(s.speed, c.speed_min, c.speed_max, c.n_speed, j0, ts);
    Corner out;
    const std::size_t ns = c.n_speed;
    out.index = {i0 * ns + j0, i0 * ns + j0 + 1, (i0 + 1) * ns + j0, (i0 + 1) * ns + j0 + 1};
    out.weight = {(1 - tp) * (1 - ts), (1 - tp) * ts, tp * (1 - ts), tp * ts};
    return out;
}

double interpolate(const std::vector<double>& values, const Corner& k) {
    double v = 0.0;
    for (std::size_t q = 0; q < 4; ++q) v += k.weight[q] * values[k.index[q]];
    return v;
}

double lookahead(const RoadConfig& c, const std::vector<double>& values, RoadState s, double acc) {
    const StepResult r = step(c, s, acc);
    if (r.terminal) return r.reward;
    return r.reward + c.gamma * interpolate(values, stencil(c, r.next));
}

json config_json(const RoadConfig& c) {
    return {{"r_left", c.r_left},
            {"r_right", c.r_right},
            {"r_speed", c.r_speed},
            {"gamma", c.gamma},
            {"grid", {c.n_pos, c.n_speed}},
            {"pos_range", {c.pos_min, c.pos_max}},
            {"speed_range", {c.speed_min, c.speed_max}},
            {"actions", c.actions}};
}

RoadConfig config_of(const json& j) {
    RoadConfig c;
    if (j.contains("preset")) c = preset(j["preset"].get<std::string>());
    c.r_left = j.value("r_left", c.r_left);
    c.r_right = j.value("r_right", c.r_right);
    c.r_speed = j.value("r_speed", c.r_speed);
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("grid")) {
        c.n_pos = j["grid"].at(0).get<std::size_t>();
        c.n_speed = j["grid"].at(1).get<std::size_t>();
    }
    if (j.contains("pos_range")) {
        c.pos_min = j["pos_range"].at(0).get<double>();
        c.pos_max = j["pos_range"].at(1).get<double>();
    }
    if (j.contains("speed_range")) {
        c.speed_min = j["speed_range"].at(0).get<double>();
        c.speed_max = j["speed_range"].at(1).get<double>();
    }
    if (j.contains("actions")) c.actions = j["actions"].get<std::vector<double>>();
    c.validate();
    return c;
}

}  // namespace

void RoadConfig::validate() const {
    if (n_pos < 2 || n_speed < 2) throw ParameterError("road grid must be at least 2x2");
    if (!(pos_max > pos_min) || !(speed_max > speed_min)) throw ParameterError("road ranges must be non-empty");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in [0, 1]");
    if (actions.empty()) throw ParameterError("road needs at least one action");
    for (double v : {r_left, r_right, r_speed}) {
        if (!std::isfinite(v)) throw ParameterError("rewards must be finite");
    }
}

RoadConfig preset(const std::string& name) {
    RoadConfig c;
    if (name == "oscillate") {
        c.r_left = -100.0;
        c.r_right = -100.0;
        c.r_speed = 1.0;
    } else if (name == "right-goal") {
        c.r_left = -100.0;
        c.r_right = 100.0;
        c.r_speed = 0.0;
    } else if (name == "left-soft") {
        c.r_left = -10.0;
        c.r_right = -100.0;
        c.r_speed = 1.0;
    } else if (name == "speed-only") {
        c.r_left = 0.0;
        c.r_right = 0.0;
        c.r_speed = 1.0;
    } else {
        throw ParameterError("unknown road preset '" + name + "'");
    }
    return c;
}

std::vector<std::string> preset_names() { return {"oscillate", "right-goal", "left-soft", "speed-only"}; }

std::string config_to_json(const RoadConfig& config) { return config_json(config).dump(1); }

RoadConfig config_from_json(const std::string& text) {
    try {
        return config_of(json::parse(text));
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid road config: ") + e.what());
    }
}

RoadConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open road config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

StepResult step(const RoadConfig& config, RoadState state, double acc) {
    StepResult r;
    r.next.speed = std::clamp(state.speed + acc, config.speed_min, config.speed_max);
    r.next.pos = state.pos + r.next.speed;
    if (r.next.pos < config.pos_min) {
        r.terminal = true;
        r.reward = config.r_left;
    } else if (r.next.pos > config.pos_max) {
        r.terminal = true;
        r.reward = config.r_right;
    } else {
        r.reward = config.r_speed * std::abs(r.next.speed);
    }
    return r;
}

double GridPolicy::grid_pos(std::size_t i) const {
    return config.pos_min + (config.pos_max - config.pos_min) * static_cast<double>(i) /
                                static_cast<double>(config.n_pos - 1);
}

double GridPolicy::grid_speed(std::size_t j) const {
    return config.speed_min + (config.speed_max - config.speed_min) * static_cast<double>(j) /
                                  static_cast<double>(config.n_speed - 1);
}

double GridPolicy::value_at(RoadState s) const { return interpolate(values, stencil(config, s)); }

std::size_t GridPolicy::action_index(RoadState s) const {
    std::size_t best = 0;
    double best_q = lookahead(config, values, s, config.actions[0]);
    for (std::size_t a = 1; a < config.actions.size(); ++a) {
        const double q = lookahead(config, values, s, config.actions[a]);
        if (q > best_q) {
            best_q = q;
            best = a;
        }
    }
    return best;
}

GridPolicy dp_solve(const RoadConfig& config, double tolerance, std::size_t max_iterations) {
    config.validate();
    if (!(tolerance > 0.0)) throw ParameterError("tolerance must be positive");
    GridPolicy policy;
    policy.config = config;
    const std::size_t cells = config.n_pos * config.n_speed;
    const std::size_t na = config.actions.size();

    // Per (cell, action): immediate reward, terminal flag and successor stencil.
    std::vector<double> reward(cells * na);
    std::vector<char> terminal(cells * na);
    std::vector<Corner> next(cells * na);
    for (std::size_t i = 0; i < config.n_pos; ++i) {
        for (std::size_t j = 0; j < config.n_speed; ++j) {
            const RoadState s{policy.grid_pos(i), policy.grid_speed(j)};
            for (std::size_t a = 0; a < na; ++a) {
                const std::size_t k = (i * config.n_speed + j) * na + a;
                const StepResult r = step(config, s, config.actions[a]);
                reward[k] = r.reward;
                terminal[k] = r.terminal ? 1 : 0;
                if (!r.terminal) next[k] = stencil(config, r.next);
            }
        }
    }

    std::vector<double> v(cells, 0.0);
    std::vector<double> v_new(cells, 0.0);
    double residual = 0.0;
    std::size_t it = 0;
    for (; it < max_iterations; ++it) {
        residual = 0.0;
        for (std::size_t c = 0; c < cells; ++c) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < na; ++a) {
                const std::size_t k = c * na + a;
                const double q = terminal[k] ? reward[k] : reward[k] + config.gamma * interpolate(v, next[k]);
                best = std::max(best, q);
            }
            v_new[c] = best;
            residual = std::max(residual, std::abs(best - v[c]));
        }
        v.swap(v_new);
        policy.residual_history.push_back(residual);
        if (residual < tolerance) {
            ++it;
            break;
        }
    }
    if (!(residual < tolerance)) {
        std::ostringstream os;
        os << "value iteration did not converge within " << max_iterations << " iterations (residual " << residual
           << ")";
        throw std::runtime_error(os.str());
    }
    policy.values = std::move(v);
    policy.iterations = it;
    policy.residual = residual;
    policy.cell_actions.resize(cells);
    for (std::size_t i = 0; i < config.n_pos; ++i) {
        for (std::size_t j = 0; j < config.n_speed; ++j) {
            policy.cell_actions[i * config.n_speed + j] =
                static_cast<int>(policy.action_index({policy.grid_pos(i), policy.grid_speed(j)}));
        }
    }
    return policy;
}

std::string policy_to_json(const GridPolicy& policy) {
    json doc;
    doc["config"] = config_json(policy.config);
    doc["values"] = policy.values;
    doc["cell_actions"] = policy.cell_actions;
    doc["iterations"] = policy.iterations;
    doc["residual"] = policy.residual;
    return doc.dump(1);
}

GridPolicy policy_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        GridPolicy p;
        p.config = config_of(doc.at("config"));
        p.values = doc.at("values").get<std::vector<double>>();
        p.cell_actions = doc.at("cell_actions").get<std::vector<int>>();
        p.iterations = doc.at("iterations").get<std::size_t>();
        p.residual = doc.at("residual").get<double>();
        if (p.values.size() != p.config.n_pos * p.config.n_speed || p.cell_actions.size() != p.values.size()) {
            throw FormatError("policy grid size does not match its config");
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid policy file: ") + e.what());
    }
}

TraceDataset generate_dataset(const RoadConfig& config, const GridPolicy& policy, std::size_t n_samples,
                              std::size_t episode_len, std::uint64_t seed) {
    config.validate();
    if (n_samples == 0 || episode_len == 0) throw ParameterError("n_samples and episode_len must be positive");
    TraceDataset data;
    data.feature_names = {"pos", "speed"};
    data.action_names = {"a"};
    data.action_kind = ActionKind::discrete;
    for (double a : config.actions) data.action_labels.push_back(canonical_number(a));
    // Canonical order sorts numeric labels by value.
    std::vector<std::size_t> order(config.actions.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return config.actions[a] < config.actions[b]; });
    std::vector<int> label_of(config.actions.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        data.action_labels[k] = canonical_number(config.actions[order[k]]);
        label_of[order[k]] = static_cast<int>(k);
    }

    Rng rng(seed);
    std::size_t total = 0;
    while (total < n_samples) {
        Episode ep;
        RoadState s{rng.uniform(config.pos_min, config.pos_max), rng.uniform(config.speed_min, config.speed_max)};
        for (std::size_t t = 0; t < episode_len && total < n_samples; ++t) {
            const std::size_t a = policy.action_index(s);
            const StepResult r = step(config, s, config.actions[a]);
            Step st;
            st.state = {s.pos, s.speed};
            st.action.label = label_of[a];
            st.reward = r.reward;
            ep.steps.push_back(std::move(st));
            ++total;
            if (r.terminal) {
                ep.terminal = true;
                break;
            }
            s = r.next;
        }
        data.episodes.push_back(std::move(ep));
    }
    data.validate();
    return data;
}

std::vector<Theta> simplex_grid(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw ParameterError("simplex step must lie in (0, 1]");
    const int k = static_cast<int>(std::lround(1.0 / step));
    if (k < 1 || std::abs(k * step - 1.0) > 1e-9) throw ParameterError("simplex step must divide 1");
    std::vector<Theta> out;
    for (int i = 0; i <= k; ++i) {
        for (int j = 0; j <= k - i; ++j) {
            out.emplace_back(static_cast<double>(i) / k, static_cast<double>(j) / k, static_cast<double>(k - i - j) / k);
        }
    }
    return out;
}

SweepResult theta_sweep(const AugmentedDataset& data, const std::vector<Theta>& grid, std::size_t max_leaves,
                        std::size_t min_leaf) {
    if (grid.empty()) throw ParameterError("theta grid is empty");
    const std::array<Theta, 3> exclusive{Theta(1, 0, 0), Theta(0, 1, 0), Theta(0, 0, 1)};
    std::vector<Theta> all = grid;
    for (const auto& t : exclusive) {
        if (std::find(all.begin(), all.end(), t) == all.end()) all.push_back(t);
    }

    const auto fit = [&](const Theta& theta) { return evaluate_losses(grow(data, theta, max_leaves, min_leaf), data); };
    std::vector<Losses> losses(all.size());
    const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    for (std::size_t b = 0; b < all.size(); b += workers) {
        std::vector<std::future<Losses>> jobs;
        for (std::size_t k = b; k < std::min(all.size(), b + workers); ++k) {
            jobs.push_back(std::async(std::launch::async, fit, all[k]));
        }
        for (std::size_t k = 0; k < jobs.size(); ++k) losses[b + k] = jobs[k].get();
    }

    SweepResult result;
    const auto loss_of = [&](const Theta& t) {
        return losses[static_cast<std::size_t>(std::find(all.begin(), all.end(), t) - all.begin())];
    };
    result.exclusive = {loss_of(exclusive[0]).action, loss_of(exclusive[1]).value, loss_of(exclusive[2]).derivative};
    result.trivial = evaluate_losses(grow(data, exclusive[0], 1, min_leaf), data);
    // An exclusive optimum of zero (e.g. a perfectly separated action) would
    // make any nonzero loss infinitely bad, so denominators are floored.
    const auto denom = [&](double best, double trivial) {
        const double d = std::max(best, kSweepLossFloor * trivial);
        return d > 0.0 ? d : 1.0;
    };
    const Losses den{denom(result.exclusive.action, result.trivial.action),
                     denom(result.exclusive.value, result.trivial.value),
                     denom(result.exclusive.derivative, result.trivial.derivative)};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        SweepRow row;
        row.theta = grid[k];
        row.losses = losses[k];
        row.normalised = {row.losses.action / den.action, row.losses.value / den.value,
                          row.losses.derivative / den.derivative};
        row.worst_normalised = std::max({row.normalised.action, row.normalised.value, row.normalised.derivative});
        if (result.rows.empty() || row.worst_normalised < result.rows[result.best].worst_normalised) {
            result.best = result.rows.size();
        }
        result.rows.push_back(row);
    }
    return result;
}

}  // namespace tripletree::road
