#include "tripletree/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tripletree {
namespace {

using nlohmann::json;

// Scalar numeric actions with at most this many distinct values are read as
// discrete labels unless the caller says otherwise.
constexpr std::size_t kMaxInferredDiscreteLabels = 16;

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

std::optional<double> parse_number(std::string_view text) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

bool is_action_column(const std::string& name) {
    if (name == "a") return true;
    if (name.size() < 2 || name[0] != 'a') return false;
    return std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// Raw action text collected during parsing, resolved once the kind is known.
struct RawAction {
    std::vector<std::string> text;
    std::string where;
};

struct RawStep {
    std::vector<double> state;
    RawAction action;
    double reward = 0.0;
};

struct RawEpisode {
    std::vector<RawStep> steps;
    bool terminal = false;
};

ActionKind infer_kind(const std::vector<RawEpisode>& episodes, std::size_t columns,
                      const std::optional<ActionKind>& hint) {
    std::set<std::string> distinct;
    std::optional<bool> numeric;
    for (const auto& ep : episodes) {
        for (const auto& st : ep.steps) {
            for (const auto& tok : st.action.text) {
                const bool is_num = parse_number(tok).has_value();
                if (numeric && *numeric != is_num && hint != ActionKind::discrete) {
                    throw FormatError(st.action.where + ": action '" + tok +
                                      "' mixes non-numeric labels with numeric actions");
                }
                numeric = numeric.value_or(true) && is_num;
                if (distinct.size() <= kMaxInferredDiscreteLabels) distinct.insert(tok);
            }
        }
    }
    const bool all_numeric = numeric.value_or(true);
    if (hint) {
        if (*hint != ActionKind::discrete && !all_numeric) {
            throw FormatError("continuous action kind requested but actions are non-numeric labels");
        }
        if (*hint == ActionKind::discrete && columns > 1) {
            throw FormatError("discrete action kind requested but the trace has several action columns");
        }
        if (*hint == ActionKind::continuous_scalar && columns > 1) {
            throw FormatError("continuous-scalar action kind requested but the trace has several action columns");
        }
        return *hint;
    }
    if (columns > 1) {
        if (!all_numeric) throw FormatError("vector actions must be numeric");
        return ActionKind::continuous_vector;
    }
    if (!all_numeric) return ActionKind::discrete;
    return distinct.size() <= kMaxInferredDiscreteLabels ? ActionKind::discrete : ActionKind::continuous_scalar;
}

TraceDataset resolve(std::vector<RawEpisode> raw, std::vector<std::string> feature_names,
                     std::vector<std::string> action_names, std::size_t action_columns,
                     const LoadOptions& options, bool vector_hint = false) {
    TraceDataset data;
    data.feature_names = std::move(feature_names);
    data.action_names = std::move(action_names);
    std::optional<ActionKind> hint = options.action_kind;
    if (!hint && vector_hint) hint = ActionKind::continuous_vector;
    data.action_kind = infer_kind(raw, action_columns, hint);

    std::map<std::string, int> label_index;
    if (data.action_kind == ActionKind::discrete) {
        std::set<std::string> labels;
        bool all_numeric = true;
        for (const auto& ep : raw) {
            for (const auto& st : ep.steps) {
                const auto& tok = st.action.text.at(0);
                if (auto v = parse_number(tok)) {
                    labels.insert(canonical_number(*v));
                } else {
                    all_numeric = false;
                    labels.insert(tok);
                }
            }
        }
        data.action_labels.assign(labels.begin(), labels.end());
        if (all_numeric) {
            std::sort(data.action_labels.begin(), data.action_labels.end(),
                      [](const std::string& a, const std::string& b) { return *parse_number(a) < *parse_number(b); });
        }
        for (std::size_t i = 0; i < data.action_labels.size(); ++i) {
            label_index[data.action_labels[i]] = static_cast<int>(i);
        }
    }

    for (auto& rep : raw) {
        Episode ep;
        ep.terminal = rep.terminal;
        ep.steps.reserve(rep.steps.size());
        for (auto& rst : rep.steps) {
            Step st;
            st.state = std::move(rst.state);
            st.reward = rst.reward;
            if (data.action_kind == ActionKind::discrete) {
                const auto& tok = rst.action.text.at(0);
                const auto v = parse_number(tok);
                st.action.label = label_index.at(v ? canonical_number(*v) : tok);
            } else {
                for (const auto& tok : rst.action.text) {
                    const auto v = parse_number(tok);
                    if (!v || !std::isfinite(*v)) {
                        throw FormatError(rst.action.where + ": non-finite or non-numeric action '" + tok + "'");
                    }
                    st.action.value.push_back(*v);
                }
            }
            ep.steps.push_back(std::move(st));
        }
        data.episodes.push_back(std::move(ep));
    }
    data.validate();
    return data;
}

TraceDataset load_csv(std::istream& in, const LoadOptions& options) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw FormatError("empty trace: missing header");
    const auto header = split_fields(line);
    if (header.size() < 6 || header[0] != "episode" || header[1] != "t" || header[2] != "terminal" ||
        header.back() != "r") {
        throw FormatError("line " + std::to_string(line_no) +
                          ": header must be 'episode,t,terminal,<features>,<a or a1..am>,r'");
    }
    std::size_t first_action = header.size() - 1;
    while (first_action > 3 && is_action_column(header[first_action - 1])) --first_action;
    const std::size_t action_columns = header.size() - 1 - first_action;
    if (action_columns == 0) throw FormatError("header has no action column ('a' or 'a1..am')");
    if (first_action <= 3) throw FormatError("header has no state feature columns");
    std::vector<std::string> features(header.begin() + 3, header.begin() + static_cast<long>(first_action));
    std::vector<std::string> actions(header.begin() + static_cast<long>(first_action), header.end() - 1);

    std::vector<RawEpisode> raw;
    std::set<std::string> finished_ids;
    std::string current_id;
    long last_t = 0;
    bool last_terminal = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        }
        const std::string& id = fields[0];
        long t = 0;
        {
            const auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), t);
            if (ec != std::errc() || ptr != fields[1].data() + fields[1].size()) {
                throw FormatError(where + ": timestep '" + fields[1] + "' is not an integer");
            }
        }
        if (fields[2] != "0" && fields[2] != "1") throw FormatError(where + ": terminal flag must be 0 or 1");
        const bool terminal = fields[2] == "1";

        if (raw.empty() || id != current_id) {
            if (finished_ids.count(id)) throw FormatError(where + ": episode '" + id + "' is not contiguous");
            if (!raw.empty()) finished_ids.insert(current_id);
            raw.emplace_back();
            current_id = id;
        } else {
            if (last_terminal) throw FormatError(where + ": row follows a terminal row in episode '" + id + "'");
            if (t <= last_t) throw FormatError(where + ": timesteps not increasing within episode '" + id + "'");
        }
        last_t = t;
        last_terminal = terminal;

        RawStep st;
        st.state.reserve(features.size());
        for (std::size_t f = 3; f < first_action; ++f) {
            const auto v = parse_number(fields[f]);
            if (!v || !std::isfinite(*v)) {
                throw FormatError(where + ": feature '" + header[f] + "' value '" + fields[f] + "' is not a finite number");
            }
            st.state.push_back(*v);
        }
        st.action.text.assign(fields.begin() + static_cast<long>(first_action), fields.end() - 1);
        st.action.where = where;
        const auto r = parse_number(fields.back());
        if (!r || !std::isfinite(*r)) throw FormatError(where + ": reward '" + fields.back() + "' is not a finite number");
        st.reward = *r;
        raw.back().steps.push_back(std::move(st));
        raw.back().terminal = terminal;
    }
    if (raw.empty()) throw FormatError("trace has no rows");
    return resolve(std::move(raw), std::move(features), std::move(actions), action_columns, options);
}

TraceDataset load_json(std::istream& in, const LoadOptions& options) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid JSON trace: ") + e.what());
    }
    json episodes = doc;
    std::vector<std::string> feature_names;
    std::vector<std::string> action_names;
    LoadOptions opts = options;
    if (doc.is_object()) {
        if (!doc.contains("episodes")) throw FormatError("JSON trace object lacks 'episodes'");
        episodes = doc["episodes"];
        if (doc.contains("feature_names")) feature_names = doc["feature_names"].get<std::vector<std::string>>();
        if (doc.contains("action_names")) action_names = doc["action_names"].get<std::vector<std::string>>();
        if (!opts.action_kind && doc.contains("action_kind")) {
            opts.action_kind = action_kind_from_string(doc["action_kind"].get<std::string>());
        }
    }
    if (!episodes.is_array() || episodes.empty()) throw FormatError("JSON trace must be a non-empty array of episodes");

    std::vector<RawEpisode> raw;
    std::optional<std::size_t> d;
    std::optional<std::size_t> columns;
    bool vector_actions = false;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& ep = episodes[e];
        const std::string ep_where = "episode " + std::to_string(e);
        if (!ep.is_object() || !ep.contains("steps") || !ep["steps"].is_array()) {
            throw FormatError(ep_where + ": expected {terminal, steps:[...]}");
        }
        RawEpisode rep;
        rep.terminal = ep.value("terminal", false);
        for (std::size_t t = 0; t < ep["steps"].size(); ++t) {
            const auto& js = ep["steps"][t];
            const std::string where = ep_where + " step " + std::to_string(t);
            if (!js.is_object() || !js.contains("s") || !js.contains("a") || !js.contains("r")) {
                throw FormatError(where + ": expected {s, a, r}");
            }
            RawStep st;
            if (!js["s"].is_array()) throw FormatError(where + ": 's' must be an array");
            for (const auto& v : js["s"]) {
                if (!v.is_number() || !std::isfinite(v.get<double>())) {
                    throw FormatError(where + ": state entries must be finite numbers");
                }
                st.state.push_back(v.get<double>());
            }
            if (!d) d = st.state.size();
            if (st.state.size() != *d) {
                throw FormatError(where + ": state has " + std::to_string(st.state.size()) + " features, expected " +
                                  std::to_string(*d));
            }
            const auto& ja = js["a"];
            const auto token = [&](const json& v) -> std::string {
                if (v.is_string()) return v.get<std::string>();
                if (v.is_number()) return canonical_number(v.get<double>());
                throw FormatError(where + ": action must be a label, number or numeric array");
            };
            if (ja.is_array()) {
                vector_actions = true;
                for (const auto& v : ja) st.action.text.push_back(token(v));
            } else {
                st.action.text.push_back(token(ja));
            }
            if (!columns) columns = st.action.text.size();
            if (st.action.text.size() != *columns) throw FormatError(where + ": action dimension changed");
            st.action.where = where;
            if (!js["r"].is_number() || !std::isfinite(js["r"].get<double>())) {
                throw FormatError(where + ": reward must be a finite number");
            }
            st.reward = js["r"].get<double>();
            rep.steps.push_back(std::move(st));
        }
        if (rep.steps.empty()) throw FormatError(ep_where + ": episode has no steps");
        raw.push_back(std::move(rep));
    }
    if (feature_names.empty()) {
        for (std::size_t f = 0; f < *d; ++f) feature_names.push_back("f" + std::to_string(f));
    }
    if (feature_names.size() != *d) throw FormatError("feature_names length does not match state dimension");
    if (action_names.empty()) {
        if (*columns == 1) {
            action_names.push_back("a");
        } else {
            for (std::size_t j = 0; j < *columns; ++j) action_names.push_back("a" + std::to_string(j + 1));
        }
    }
    return resolve(std::move(raw), std::move(feature_names), std::move(action_names), *columns, opts, vector_actions);
}

}  // namespace

std::string to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::discrete: return "discrete";
        case ActionKind::continuous_scalar: return "continuous-scalar";
        case ActionKind::continuous_vector: return "continuous-vector";
    }
    return "discrete";
}

ActionKind action_kind_from_string(const std::string& name) {
    if (name == "discrete") return ActionKind::discrete;
    if (name == "continuous-scalar" || name == "continuous") return ActionKind::continuous_scalar;
    if (name == "continuous-vector") return ActionKind::continuous_vector;
    throw ParameterError("unknown action kind '" + name + "'");
}

std::string canonical_number(double value) {
    if (value == 0.0) value = 0.0;  // drop the sign of -0
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::size_t TraceDataset::action_dim() const {
    if (action_kind == ActionKind::discrete) return 1;
    for (const auto& ep : episodes) {
        if (!ep.steps.empty()) return ep.steps.front().action.value.size();
    }
    return action_names.size();
}

std::size_t TraceDataset::num_samples() const {
    std::size_t n = 0;
    for (const auto& ep : episodes) n += ep.steps.size();
    return n;
}

void TraceDataset::validate() const {
    const std::size_t d = feature_names.size();
    if (d == 0) throw FormatError("dataset has no state features");
    if (episodes.empty()) throw FormatError("dataset has no episodes");
    const std::size_t m = action_dim();
    std::size_t row = 0;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        if (episodes[e].steps.empty()) throw FormatError("episode " + std::to_string(e) + " is empty");
        for (const auto& st : episodes[e].steps) {
            const std::string where = "sample " + std::to_string(row);
            if (st.state.size() != d) {
                throw FormatError(where + ": state has " + std::to_string(st.state.size()) + " features, expected " +
                                  std::to_string(d));
            }
            for (double v : st.state) {
                if (!std::isfinite(v)) throw FormatError(where + ": non-finite state entry");
            }
            if (!std::isfinite(st.reward)) throw FormatError(where + ": non-finite reward");
            if (action_kind == ActionKind::discrete) {
                if (st.action.label < 0 || static_cast<std::size_t>(st.action.label) >= action_labels.size()) {
                    throw FormatError(where + ": action label index out of range");
                }
            } else {
                if (st.action.value.size() != m || m == 0) throw FormatError(where + ": action dimension mismatch");
                for (double v : st.action.value) {
                    if (!std::isfinite(v)) throw FormatError(where + ": non-finite action");
                }
            }
            ++row;
        }
    }
}

std::string TraceDataset::action_to_string(const Action& action) const {
    if (action_kind == ActionKind::discrete) {
        if (action.label < 0 || static_cast<std::size_t>(action.label) >= action_labels.size()) return "?";
        return action_labels[static_cast<std::size_t>(action.label)];
    }
    std::string out;
    for (std::size_t j = 0; j < action.value.size(); ++j) {
        if (j) out += ",";
        out += canonical_number(action.value[j]);
    }
    return action.value.size() > 1 ? "(" + out + ")" : out;
}

Action TraceDataset::parse_action(const std::string& text) const {
    Action a;
    if (action_kind == ActionKind::discrete) {
        const auto v = parse_number(trim(text));
        const std::string key = v ? canonical_number(*v) : trim(text);
        const auto it = std::find(action_labels.begin(), action_labels.end(), key);
        if (it == action_labels.end()) throw ParameterError("unknown action label '" + text + "'");
        a.label = static_cast<int>(it - action_labels.begin());
        return a;
    }
    for (const auto& tok : split_fields(text)) {
        const auto v = parse_number(tok);
        if (!v) throw ParameterError("action component '" + tok + "' is not a number");
        a.value.push_back(*v);
    }
    if (a.value.size() != action_dim()) throw ParameterError("action has wrong dimension");
    return a;
}

TraceDataset load_trace(std::istream& source, TraceFormat format, const LoadOptions& options) {
    return format == TraceFormat::csv ? load_csv(source, options) : load_json(source, options);
}

TraceDataset load_trace_file(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open trace file '" + path.string() + "'");
    const auto ext = path.extension().string();
    return load_trace(in, ext == ".json" ? TraceFormat::json : TraceFormat::csv, options);
}

void write_trace_csv(std::ostream& out, const TraceDataset& data) {
    out << "episode,t,terminal";
    for (const auto& f : data.feature_names) out << ',' << f;
    for (const auto& a : data.action_names) out << ',' << a;
    out << ",r\n";
    for (std::size_t e = 0; e < data.episodes.size(); ++e) {
        const auto& ep = data.episodes[e];
        for (std::size_t t = 0; t < ep.steps.size(); ++t) {
            const auto& st = ep.steps[t];
            const bool last = t + 1 == ep.steps.size();
            out << e << ',' << t << ',' << (last && ep.terminal ? 1 : 0);
            for (double v : st.state) out << ',' << canonical_number(v);
            if (data.action_kind == ActionKind::discrete) {
                out << ',' << data.action_labels[static_cast<std::size_t>(st.action.label)];
            } else {
                for (double v : st.action.value) out << ',' << canonical_number(v);
            }
            out << ',' << canonical_number(st.reward) << '\n';
        }
    }
}

void write_trace_json(std::ostream& out, const TraceDataset& data) {
    json doc;
    doc["feature_names"] = data.feature_names;
    doc["action_names"] = data.action_names;
    doc["action_kind"] = to_string(data.action_kind);
    json episodes = json::array();
    for (const auto& ep : data.episodes) {
        json steps = json::array();
        for (const auto& st : ep.steps) {
            json js;
            js["s"] = st.state;
            if (data.action_kind == ActionKind::discrete) {
                js["a"] = data.action_labels[static_cast<std::size_t>(st.action.label)];
            } else if (data.action_kind == ActionKind::continuous_scalar) {
                js["a"] = st.action.value.at(0);
            } else {
                js["a"] = st.action.value;
            }
            js["r"] = st.reward;
            steps.push_back(std::move(js));
        }
        episodes.push_back({{"terminal", ep.terminal}, {"steps", std::move(steps)}});
    }
    doc["episodes"] = std::move(episodes);
    out << doc.dump(1) << '\n';
}

AugmentedDataset augment(TraceDataset data, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in [0, 1]");
    data.validate();

    AugmentedDataset aug;
    aug.gamma = gamma;
    aug.d = data.num_features();
    aug.n = data.num_samples();
    aug.m = data.action_kind == ActionKind::discrete ? 0 : data.action_dim();
    const std::size_t n = aug.n;
    const std::size_t d = aug.d;
    const std::size_t m = aug.m;

    aug.states.reserve(n * d);
    aug.rewards.reserve(n);
    aug.values.assign(n, 0.0);
    aug.derivs.assign(n * d, 0.0);
    aug.has_deriv.assign(n, 0);
    if (m == 0) {
        aug.action_labels.reserve(n);
    } else {
        aug.action_values.reserve(n * m);
    }

    for (const auto& ep : data.episodes) {
        aug.episode_begin.push_back(aug.rewards.size());
        aug.episode_terminal.push_back(ep.terminal ? 1 : 0);
        for (const auto& st : ep.steps) {
            aug.states.insert(aug.states.end(), st.state.begin(), st.state.end());
            if (m == 0) {
                aug.action_labels.push_back(st.action.label);
            } else {
                aug.action_values.insert(aug.action_values.end(), st.action.value.begin(), st.action.value.end());
            }
            aug.rewards.push_back(st.reward);
        }
    }
    aug.episode_begin.push_back(n);

    for (std::size_t e = 0; e < aug.num_episodes(); ++e) {
        const std::size_t b = aug.episode_begin[e];
        const std::size_t end = aug.episode_begin[e + 1];
        double future = 0.0;
        for (std::size_t i = end; i-- > b;) {
            future = aug.rewards[i] + gamma * future;
            aug.values[i] = future;
        }
        for (std::size_t i = b; i + 1 < end; ++i) {
            aug.has_deriv[i] = 1;
            for (std::size_t f = 0; f < d; ++f) {
                aug.derivs[i * d + f] = aug.states[(i + 1) * d + f] - aug.states[i * d + f];
            }
        }
    }

    // Two-pass population standard deviations.
    aug.sigma.assign(d, 0.0);
    std::size_t n_deriv = 0;
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!aug.has_deriv[i]) continue;
        ++n_deriv;
        for (std::size_t f = 0; f < d; ++f) mean[f] += aug.derivs[i * d + f];
    }
    if (n_deriv > 0) {
        for (auto& v : mean) v /= static_cast<double>(n_deriv);
        for (std::size_t i = 0; i < n; ++i) {
            if (!aug.has_deriv[i]) continue;
            for (std::size_t f = 0; f < d; ++f) {
                const double dv = aug.derivs[i * d + f] - mean[f];
                aug.sigma[f] += dv * dv;
            }
        }
        for (auto& s : aug.sigma) s = std::sqrt(s / static_cast<double>(n_deriv));
    }

    aug.action_sigma.assign(m, 0.0);
    if (m > 0) {
        std::vector<double> am(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) am[j] += aug.action_values[i * m + j];
        }
        for (auto& v : am) v /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double dv = aug.action_values[i * m + j] - am[j];
                aug.action_sigma[j] += dv * dv;
            }
        }
        for (auto& s : aug.action_sigma) s = std::sqrt(s / static_cast<double>(n));
    }

    aug.feature_range.assign(d, {0.0, 0.0});
    for (std::size_t f = 0; f < d; ++f) {
        double lo = aug.states[f];
        double hi = aug.states[f];
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, aug.states[i * d + f]);
            hi = std::max(hi, aug.states[i * d + f]);
        }
        aug.feature_range[f] = {lo, hi};
    }

    aug.base = std::move(data);
    return aug;
}

}  // namespace tripletree
