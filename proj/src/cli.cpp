#include "tripletree/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tripletree/explain.hpp"
#include "tripletree/road.hpp"
#include "tripletree/trajectory.hpp"
#include "tripletree/tree.hpp"
#include "tripletree/viz.hpp"

namespace tripletree {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::string& path) {
    std::filesystem::path p(path);
    const char* dir = std::getenv("TRIPLETREE_OUT_DIR");
    if (p.is_relative() && dir && *dir) p = std::filesystem::path(dir) / p;
    return p;
}

// Writes to the file, or to `out` when no path was given.
void emit(const std::string& path, const std::string& content, std::ostream& out, std::ostream& err) {
    if (path.empty()) {
        out << content;
        return;
    }
    const auto p = resolve(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot write '" + p.string() + "'");
    f << content;
    err << "wrote " << p.string() << '\n';
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> parse_vector(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ParameterError(what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw ParameterError(what + " is empty");
    return out;
}

// "lo:hi,lo:hi"; an empty side is unbounded.
Box parse_zone(const std::string& text, std::size_t d) {
    Box b = Box::unbounded(d);
    std::stringstream ss(text);
    std::string item;
    std::size_t f = 0;
    while (std::getline(ss, item, ',')) {
        if (f >= d) throw ParameterError("zone has more than " + std::to_string(d) + " intervals");
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ParameterError("zone interval '" + item + "' needs lo:hi");
        const auto lo = item.substr(0, colon);
        const auto hi = item.substr(colon + 1);
        if (!lo.empty()) b.lower[f] = parse_vector(lo, "zone bound")[0];
        if (!hi.empty()) b.upper[f] = parse_vector(hi, "zone bound")[0];
        ++f;
    }
    if (f != d) throw ParameterError("zone needs " + std::to_string(d) + " intervals");
    return b;
}

std::size_t feature_index(const TripleTree& tree, const std::string& name) {
    const auto& names = tree.meta().feature_names;
    for (std::size_t f = 0; f < names.size(); ++f) {
        if (names[f] == name) return f;
    }
    try {
        std::size_t used = 0;
        const auto idx = std::stoul(name, &used);
        if (used == name.size() && idx < names.size()) return idx;
    } catch (const std::exception&) {
    }
    throw ParameterError("unknown feature '" + name + "'");
}

std::string num(double v) { return canonical_number(v); }

std::string losses_csv_row(const Losses& l) { return num(l.action) + "," + num(l.value) + "," + num(l.derivative); }

json losses_json(const Losses& l) {
    return {{"action", l.action}, {"value", l.value}, {"derivative", l.derivative}};
}

road::RoadConfig road_config(const std::string& preset, const std::string& config) {
    return config.empty() ? road::preset(preset) : road::load_config(config);
}

TraceDataset load_data(const std::string& path, const std::string& kind) {
    LoadOptions opts;
    if (!kind.empty()) opts.action_kind = action_kind_from_string(kind);
    return load_trace_file(path, opts);
}

struct Options {
    std::uint64_t seed = 1;
    std::string format;

    std::string preset = "oscillate";
    std::string config;
    std::string policy;
    std::size_t samples = 10000;
    std::size_t episode_len = 100;
    double tol = 1e-8;
    std::size_t max_iter = 200000;

    std::string data;
    std::string validation;
    std::string action_kind;
    double gamma = -1.0;
    std::string theta = "1,1,1";
    std::size_t max_leaves = 200;
    std::size_t min_leaf = 1;
    std::string tree;
    bool tree_series = false;
    std::string out;

    std::string state;
    std::string next;
    std::string foil;
    std::optional<double> value_le;
    std::optional<double> value_ge;

    std::string from, to, start_zone, end_zone, svg;
    int from_leaf = -2, to_leaf = -2;
    bool to_sink = false;
    double min_prob = 0.0;
    bool no_align = false;
    std::size_t align_iters = 1000;
    double align_step = 0.05;
    double align_tol = 1e-8;

    std::string attribute = "action_pred";
    std::string mode = "direct";
    std::string x_feature, y_feature;
    std::size_t resolution = 200;
    std::string fixed;
    std::string paths;

    double sweep_step = 0.1;
};

std::string format_or(const Options& o, const std::string& fallback) {
    if (o.format.empty()) return fallback;
    return o.format;
}

int cmd_gen_road(const Options& o, std::ostream& out, std::ostream& err) {
    const auto cfg = road_config(o.preset, o.config);
    const auto policy = o.policy.empty() ? road::dp_solve(cfg, o.tol, o.max_iter) : road::policy_from_json(read_file(o.policy));
    if (!(policy.config == cfg) && !o.config.empty()) err << "note: policy was solved for a different config\n";
    const auto data = road::generate_dataset(policy.config, policy, o.samples, o.episode_len, o.seed);
    std::ostringstream ss;
    const bool as_json = format_or(o, o.out.size() > 5 && o.out.ends_with(".json") ? "json" : "csv") == "json";
    if (as_json) {
        write_trace_json(ss, data);
    } else {
        write_trace_csv(ss, data);
    }
    emit(o.out, ss.str(), out, err);
    return kExitOk;
}

int cmd_dp_solve(const Options& o, std::ostream& out, std::ostream& err) {
    const auto policy = road::dp_solve(road_config(o.preset, o.config), o.tol, o.max_iter);
    err << "converged in " << policy.iterations << " iterations, residual " << policy.residual << '\n';
    emit(o.out, road::policy_to_json(policy) + "\n", out, err);
    return kExitOk;
}

double require_gamma(const Options& o) {
    if (o.gamma < 0.0) throw ParameterError("--gamma is required");
    return o.gamma;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
    const Theta theta = Theta::parse(o.theta);
    auto data = augment(load_data(o.data, o.action_kind), require_gamma(o));
    const auto tree = grow(data, theta, o.max_leaves, o.min_leaf);
    err << "grew " << tree.num_leaves() << " leaves from " << data.n << " samples\n";
    emit(o.out, serialize(tree) + "\n", out, err);
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
    const bool as_json = format_or(o, "csv") == "json";
    if (o.tree_series) {
        const Theta theta = Theta::parse(o.theta);
        const auto train = augment(load_data(o.data, o.action_kind), require_gamma(o));
        std::optional<AugmentedDataset> val;
        if (!o.validation.empty()) val = augment(load_data(o.validation, o.action_kind), o.gamma);
        const auto curve = loss_curve(train, val ? &*val : nullptr, theta, o.max_leaves, o.min_leaf);
        std::string text;
        if (as_json) {
            json arr = json::array();
            for (const auto& p : curve) {
                json row{{"leaves", p.leaves}, {"train", losses_json(p.train)}};
                if (p.validation) row["validation"] = losses_json(*p.validation);
                arr.push_back(row);
            }
            text = arr.dump(1) + "\n";
        } else {
            text = "leaves,action,value,derivative";
            if (val) text += ",val_action,val_value,val_derivative";
            text += "\n";
            for (const auto& p : curve) {
                text += std::to_string(p.leaves) + "," + losses_csv_row(p.train);
                if (p.validation) text += "," + losses_csv_row(*p.validation);
                text += "\n";
            }
        }
        emit(o.out, text, out, err);
        return kExitOk;
    }
    if (o.tree.empty()) throw ParameterError("eval needs --tree or --tree-series");
    const auto tree = load_tree(o.tree);
    LoadOptions opts;
    opts.action_kind = tree.meta().action_kind;
    const auto data = augment(load_trace_file(o.data, opts), o.gamma < 0.0 ? tree.meta().gamma : o.gamma);
    const auto l = evaluate_losses(tree, data);
    emit(o.out, as_json ? losses_json(l).dump(1) + "\n" : "action,value,derivative\n" + losses_csv_row(l) + "\n", out, err);
    return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
    const auto tree = load_tree(o.tree);
    std::vector<std::vector<double>> states;
    if (!o.state.empty()) states.push_back(parse_vector(o.state, "--state"));
    if (!o.data.empty()) {
        LoadOptions opts;
        opts.action_kind = tree.meta().action_kind;
        const auto data = load_trace_file(o.data, opts);
        for (const auto& ep : data.episodes) {
            for (const auto& s : ep.steps) states.push_back(s.state);
        }
    }
    if (states.empty()) throw ParameterError("predict needs --state or --data");
    const bool as_json = format_or(o, "csv") == "json";
    const auto& names = tree.meta().feature_names;
    std::string text;
    json arr = json::array();
    if (!as_json) {
        for (const auto& n : names) text += n + ",";
        text += "leaf,action,value";
        for (const auto& n : names) text += ",d_" + n;
        text += "\n";
    }
    for (const auto& s : states) {
        if (s.size() != tree.dims()) throw ParameterError("state has the wrong number of features");
        const int leaf = tree.leaf_of(s);
        const auto& p = tree.leaf(leaf).prediction;
        if (as_json) {
            arr.push_back({{"state", s},
                           {"leaf", leaf},
                           {"action", tree.action_to_string(p.action)},
                           {"value", p.value},
                           {"derivative", p.derivative}});
            continue;
        }
        for (double v : s) text += num(v) + ",";
        text += std::to_string(leaf) + ",\"" + tree.action_to_string(p.action) + "\"," + num(p.value);
        for (double v : p.derivative) text += "," + num(v);
        text += "\n";
    }
    emit(o.out, as_json ? arr.dump(1) + "\n" : text, out, err);
    return kExitOk;
}

int cmd_explain(const Options& o, std::ostream& out, std::ostream& err) {
    const auto tree = load_tree(o.tree);
    if (o.state.empty()) throw ParameterError("explain needs --state");
    const auto s = parse_vector(o.state, "--state");
    const int modes = !o.foil.empty() + o.value_le.has_value() + o.value_ge.has_value() + !o.next.empty();
    if (modes > 1) throw ParameterError("choose one of --foil, --value-le, --value-ge, --next");
    Explanation e;
    if (!o.foil.empty()) {
        e = counterfactual_action(tree, s, tree.parse_action(o.foil));
    } else if (o.value_le) {
        e = counterfactual_value(tree, s, {ValueCondition::Op::at_most, *o.value_le});
    } else if (o.value_ge) {
        e = counterfactual_value(tree, s, {ValueCondition::Op::at_least, *o.value_ge});
    } else if (!o.next.empty()) {
        e = temporal(tree, s, parse_vector(o.next, "--next"));
    } else {
        e = factual(tree, s);
    }
    out << render_text(tree, e) << '\n';
    const auto j = render_json(tree, e) + "\n";
    if (o.out.empty()) {
        out << j;
    } else {
        emit(o.out, j, out, err);
    }
    return kExitOk;
}

std::pair<std::size_t, std::size_t> plane_axes(const TripleTree& tree, const Options& o) {
    const std::size_t fx = o.x_feature.empty() ? 0 : feature_index(tree, o.x_feature);
    std::size_t fy = o.y_feature.empty() ? (fx == 0 ? 1 : 0) : feature_index(tree, o.y_feature);
    if (tree.dims() == 1) fy = 1;
    return {fx, fy};
}

SvgScene overlay_scene(const TripleTree& tree, std::size_t fx, std::size_t fy, const RectMap* background,
                       const std::vector<TrajectoryPath>& paths) {
    SvgScene scene = scene_for(tree, fx, fy);
    scene.rects = background;
    for (const auto& p : paths) {
        std::vector<std::vector<double>> line;
        for (const auto& n : p.nodes) line.push_back({n[fx], fy < n.size() ? n[fy] : 0.5});
        scene.polylines.push_back(std::move(line));
        scene.polyline_probability.push_back(p.probability);
    }
    return scene;
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
    const auto tree = load_tree(o.tree);
    const auto graph = build_leaf_graph(tree);
    const AlignOptions align{o.align_iters, o.align_step, o.align_tol};
    std::vector<TrajectoryPath> paths;
    std::optional<std::vector<double>> from_state, to_state;

    if (!o.start_zone.empty() || !o.end_zone.empty()) {
        if (o.start_zone.empty() || o.end_zone.empty()) throw ParameterError("zones need both --start-zone and --end-zone");
        paths = zone_paths(tree, graph, parse_zone(o.start_zone, tree.dims()), parse_zone(o.end_zone, tree.dims()),
                           o.min_prob);
    } else {
        int start = o.from_leaf;
        if (!o.from.empty()) {
            from_state = parse_vector(o.from, "--from");
            if (from_state->size() != tree.dims()) throw ParameterError("--from has the wrong number of features");
            start = tree.leaf_of(*from_state);
        }
        int end = o.to_sink ? kSink : o.to_leaf;
        if (!o.to.empty()) {
            to_state = parse_vector(o.to, "--to");
            if (to_state->size() != tree.dims()) throw ParameterError("--to has the wrong number of features");
            end = tree.leaf_of(*to_state);
        }
        if (start == -2 || end == -2) throw ParameterError("simulate needs a start (--from/--from-leaf) and an end (--to/--to-leaf/--to-sink)");
        auto p = most_probable_path(graph, start, end);
        if (!p) {
            err << "no path from leaf " << start << " to " << (end == kSink ? std::string("termination") : std::to_string(end))
                << '\n';
        } else {
            paths.push_back(std::move(*p));
        }
    }
    if (!o.no_align) {
        for (auto& p : paths) {
            const bool single = paths.size() == 1;
            const auto& last = p.leaves.back() == kSink ? std::optional<std::vector<double>>() : to_state;
            auto aligned = align_path(tree, p.leaves, align, single ? from_state : std::nullopt, single ? last : std::nullopt);
            aligned.probability = p.probability;
            aligned.expected_duration = p.expected_duration;
            p = std::move(aligned);
        }
    }
    const std::string text = (paths.size() == 1 && o.start_zone.empty() ? path_to_json(paths[0]) : paths_to_json(paths)) + "\n";
    emit(o.out, text, out, err);
    if (!o.svg.empty()) {
        const auto [fx, fy] = plane_axes(tree, o);
        PlaneSpec plane{fx, fy, o.resolution, o.resolution, {}};
        const RectMap bg = tree.dims() <= 2 ? direct_map(tree, Attribute::value_pred)
                                            : ice_slice(tree, plane, Attribute::value_pred);
        auto scene = overlay_scene(tree, fx, fy, &bg, paths);
        scene.title = "most probable paths";
        emit(o.svg, render_svg(scene), out, err);
    }
    return kExitOk;
}

int cmd_viz(const Options& o, std::ostream& out, std::ostream& err) {
    const auto tree = load_tree(o.tree);
    const auto [fx, fy] = plane_axes(tree, o);
    const Attribute attr = attribute_from_string(o.attribute);
    PlaneSpec plane{fx, fy, o.resolution, o.resolution, {}};
    if (!o.fixed.empty()) plane.fixed = parse_vector(o.fixed, "--fixed");

    std::optional<RectMap> rects;
    std::optional<Grid> grid;
    std::optional<std::vector<Arrow>> arrows;
    std::string text;
    if (attr == Attribute::deriv_pred || o.mode == "quiver") {
        const bool slice = o.mode == "slice" || (o.mode != "direct" && tree.dims() > 2);
        arrows = quiver(tree, plane, slice ? QuiverMode::slice : QuiverMode::direct);
        text = arrows_to_json(*arrows);
    } else if (o.mode == "direct") {
        rects = direct_map(tree, attr);
        text = rects_to_json(*rects);
    } else if (o.mode == "pdp") {
        grid = pdp_projection(tree, plane, attr);
        text = grid_to_json(*grid);
    } else if (o.mode == "slice") {
        rects = ice_slice(tree, plane, attr);
        text = rects_to_json(*rects);
    } else {
        throw ParameterError("unknown viz mode '" + o.mode + "'");
    }
    emit(o.out, text + "\n", out, err);

    if (!o.svg.empty()) {
        std::vector<TrajectoryPath> paths;
        if (!o.paths.empty()) {
            const auto j = json::parse(read_file(o.paths), nullptr, false);
            if (j.is_discarded()) throw FormatError("cannot parse path file '" + o.paths + "'");
            if (j.contains("paths")) {
                for (const auto& p : j.at("paths")) paths.push_back(path_from_json(p.dump()));
            } else {
                paths.push_back(path_from_json(j.dump()));
            }
        }
        SvgScene scene = overlay_scene(tree, fx, fy, rects ? &*rects : nullptr, paths);
        scene.grid = grid ? &*grid : nullptr;
        scene.arrows = arrows ? &*arrows : nullptr;
        scene.title = to_string(attr) + " (" + o.mode + ")";
        if (attr == Attribute::action_pred && tree.discrete()) scene.categories = tree.meta().action_labels;
        emit(o.svg, render_svg(scene), out, err);
    }
    return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
    const auto data = augment(load_data(o.data, o.action_kind), require_gamma(o));
    const auto result = road::theta_sweep(data, road::simplex_grid(o.sweep_step), o.max_leaves, o.min_leaf);
    std::string text;
    if (format_or(o, "csv") == "json") {
        json rows = json::array();
        for (const auto& r : result.rows) {
            rows.push_back({{"theta", r.theta.weights()},
                            {"losses", losses_json(r.losses)},
                            {"normalised", losses_json(r.normalised)},
                            {"worst_normalised", r.worst_normalised}});
        }
        text = json{{"rows", rows}, {"best", result.best}, {"exclusive", losses_json(result.exclusive)}}.dump(1) + "\n";
    } else {
        text = "theta_action,theta_value,theta_derivative,action,value,derivative,norm_action,norm_value,norm_derivative,worst\n";
        for (const auto& r : result.rows) {
            const auto& w = r.theta.weights();
            text += num(w[0]) + "," + num(w[1]) + "," + num(w[2]) + "," + losses_csv_row(r.losses) + "," +
                    losses_csv_row(r.normalised) + "," + num(r.worst_normalised) + "\n";
        }
    }
    emit(o.out, text, out, err);
    err << "best theta " << result.rows[result.best].theta.to_string() << " (worst normalised loss "
        << result.rows[result.best].worst_normalised << ")\n";
    return kExitOk;
}

int cmd_inspect(const Options& o, std::ostream& out, std::ostream& err) {
    json j;
    if (!o.tree.empty()) {
        const auto tree = load_tree(o.tree);
        const auto& m = tree.meta();
        std::size_t depth = 0;
        for (int id : tree.leaf_ids()) {
            std::size_t k = 0;
            for (int n = id; tree.nodes()[n].parent >= 0; n = tree.nodes()[n].parent) ++k;
            depth = std::max(depth, k);
        }
        j["tree"] = {{"leaves", tree.num_leaves()},
                     {"depth", depth},
                     {"features", m.feature_names},
                     {"action_kind", to_string(m.action_kind)},
                     {"actions", m.action_labels},
                     {"theta", m.theta.weights()},
                     {"gamma", m.gamma},
                     {"samples", m.num_samples}};
    }
    if (!o.data.empty()) {
        const auto data = load_data(o.data, o.action_kind);
        std::size_t terminal = 0;
        for (const auto& ep : data.episodes) terminal += ep.terminal;
        j["data"] = {{"samples", data.num_samples()},
                     {"episodes", data.episodes.size()},
                     {"terminal_episodes", terminal},
                     {"features", data.feature_names},
                     {"action_kind", to_string(data.action_kind)},
                     {"actions", data.action_labels}};
    }
    if (!o.policy.empty()) {
        const auto p = road::policy_from_json(read_file(o.policy));
        j["policy"] = {{"grid", {p.config.n_pos, p.config.n_speed}}, {"iterations", p.iterations}, {"residual", p.residual}};
    }
    if (j.is_null()) throw ParameterError("inspect needs --tree, --data or --policy");
    emit(o.out, j.dump(1) + "\n", out, err);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Interpretable tree models of agent behaviour from trace data", "tripletree"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
    app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));

    auto* gen = app.add_subcommand("gen-road", "Generate road trace data from the DP policy");
    gen->add_option("--preset", o.preset, "Reward variant")->check(CLI::IsMember(road::preset_names()))->capture_default_str();
    gen->add_option("--config", o.config, "Road config JSON (overrides --preset)");
    gen->add_option("--policy", o.policy, "Precomputed policy JSON");
    gen->add_option("--samples", o.samples, "Number of samples")->capture_default_str();
    gen->add_option("--episode-len", o.episode_len, "Steps per episode")->capture_default_str();
    gen->add_option("--tol", o.tol, "Value iteration tolerance")->capture_default_str();
    gen->add_option("--out", o.out, "Output trace file");

    auto* dp = app.add_subcommand("dp-solve", "Solve the road MDP by value iteration");
    dp->add_option("--preset", o.preset, "Reward variant")->check(CLI::IsMember(road::preset_names()))->capture_default_str();
    dp->add_option("--config", o.config, "Road config JSON (overrides --preset)");
    dp->add_option("--tol", o.tol, "Convergence tolerance")->capture_default_str();
    dp->add_option("--max-iter", o.max_iter, "Iteration cap")->capture_default_str();
    dp->add_option("--out", o.out, "Output policy JSON");

    auto* fit = app.add_subcommand("fit", "Grow a tree on trace data");
    fit->add_option("--data", o.data, "Trace file (CSV or JSON)")->required();
    fit->add_option("--gamma", o.gamma, "Discount factor")->required();
    fit->add_option("--theta", o.theta, "Channel weights a,v,d")->capture_default_str();
    fit->add_option("--max-leaves", o.max_leaves, "Leaf budget")->capture_default_str();
    fit->add_option("--min-leaf", o.min_leaf, "Minimum samples per leaf")->capture_default_str();
    fit->add_option("--action-kind", o.action_kind, "discrete, continuous_scalar or continuous_vector");
    fit->add_option("--out", o.out, "Output tree JSON");

    auto* eval = app.add_subcommand("eval", "Evaluate losses of a tree, or a loss curve over leaf counts");
    eval->add_option("--data", o.data, "Trace file")->required();
    eval->add_option("--tree", o.tree, "Tree JSON");
    eval->add_flag("--tree-series", o.tree_series, "Loss after every split of one growth run");
    eval->add_option("--validation", o.validation, "Held-out trace file for --tree-series");
    eval->add_option("--gamma", o.gamma, "Discount factor");
    eval->add_option("--theta", o.theta, "Channel weights a,v,d")->capture_default_str();
    eval->add_option("--max-leaves", o.max_leaves, "Leaf budget")->capture_default_str();
    eval->add_option("--min-leaf", o.min_leaf, "Minimum samples per leaf")->capture_default_str();
    eval->add_option("--action-kind", o.action_kind, "Action kind override");
    eval->add_option("--out", o.out, "Output file");

    auto* predict = app.add_subcommand("predict", "Leaf predictions for states");
    predict->add_option("--tree", o.tree, "Tree JSON")->required();
    predict->add_option("--state", o.state, "Comma-separated state");
    predict->add_option("--data", o.data, "Trace file whose states are predicted");
    predict->add_option("--out", o.out, "Output file");

    auto* explain = app.add_subcommand("explain", "Factual, counterfactual or temporal explanation");
    explain->add_option("--tree", o.tree, "Tree JSON")->required();
    explain->add_option("--state", o.state, "Comma-separated state")->required();
    explain->add_option("--foil", o.foil, "Alternative action");
    explain->add_option("--value-le", o.value_le, "Explain how value could be at most this");
    explain->add_option("--value-ge", o.value_ge, "Explain how value could be at least this");
    explain->add_option("--next", o.next, "Successor state for a temporal explanation");
    explain->add_option("--out", o.out, "Output JSON");

    auto* sim = app.add_subcommand("simulate", "Most probable leaf paths and aligned trajectories");
    sim->add_option("--tree", o.tree, "Tree JSON")->required();
    sim->add_option("--from", o.from, "Start state");
    sim->add_option("--from-leaf", o.from_leaf, "Start leaf id");
    sim->add_option("--to", o.to, "End state");
    sim->add_option("--to-leaf", o.to_leaf, "End leaf id");
    sim->add_flag("--to-sink", o.to_sink, "End at episode termination");
    sim->add_option("--start-zone", o.start_zone, "Start zone lo:hi,lo:hi,...");
    sim->add_option("--end-zone", o.end_zone, "End zone lo:hi,lo:hi,...");
    sim->add_option("--min-prob", o.min_prob, "Drop zone paths below this probability")->capture_default_str();
    sim->add_flag("--no-align", o.no_align, "Skip trajectory alignment");
    sim->add_option("--max-iters", o.align_iters, "Alignment iterations")->capture_default_str();
    sim->add_option("--step", o.align_step, "Alignment step size")->capture_default_str();
    sim->add_option("--align-tol", o.align_tol, "Alignment tolerance")->capture_default_str();
    sim->add_option("--x", o.x_feature, "SVG x feature");
    sim->add_option("--y", o.y_feature, "SVG y feature");
    sim->add_option("--out", o.out, "Output path JSON");
    sim->add_option("--svg", o.svg, "Output SVG");

    auto* viz = app.add_subcommand("viz", "Maps, projections, slices and quiver plots");
    viz->add_option("--tree", o.tree, "Tree JSON")->required();
    viz->add_option("--attribute", o.attribute, "Colouring attribute")->capture_default_str();
    viz->add_option("--mode", o.mode, "direct, pdp, slice or quiver")
        ->check(CLI::IsMember({"direct", "pdp", "slice", "quiver"}))
        ->capture_default_str();
    viz->add_option("--x", o.x_feature, "Plane x feature (name or index)");
    viz->add_option("--y", o.y_feature, "Plane y feature (name or index)");
    viz->add_option("--resolution", o.resolution, "Grid cells per axis")->capture_default_str();
    viz->add_option("--fixed", o.fixed, "Slice values for all features");
    viz->add_option("--paths", o.paths, "Path JSON to overlay");
    viz->add_option("--out", o.out, "Output JSON");
    viz->add_option("--svg", o.svg, "Output SVG");

    auto* sweep = app.add_subcommand("sweep-theta", "Worst-normalised-loss sweep over the theta simplex");
    sweep->add_option("--data", o.data, "Trace file")->required();
    sweep->add_option("--gamma", o.gamma, "Discount factor")->required();
    sweep->add_option("--step", o.sweep_step, "Simplex grid spacing")->capture_default_str();
    sweep->add_option("--max-leaves", o.max_leaves, "Leaf budget")->capture_default_str();
    sweep->add_option("--min-leaf", o.min_leaf, "Minimum samples per leaf")->capture_default_str();
    sweep->add_option("--action-kind", o.action_kind, "Action kind override");
    sweep->add_option("--out", o.out, "Output file");

    auto* inspect = app.add_subcommand("inspect", "Summaries of tree, trace and policy files");
    inspect->add_option("--tree", o.tree, "Tree JSON");
    inspect->add_option("--data", o.data, "Trace file");
    inspect->add_option("--policy", o.policy, "Policy JSON");
    inspect->add_option("--action-kind", o.action_kind, "Action kind override");
    inspect->add_option("--out", o.out, "Output file");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (app.got_subcommand(gen)) return cmd_gen_road(o, out, err);
        if (app.got_subcommand(dp)) return cmd_dp_solve(o, out, err);
        if (app.got_subcommand(fit)) return cmd_fit(o, out, err);
        if (app.got_subcommand(eval)) return cmd_eval(o, out, err);
        if (app.got_subcommand(predict)) return cmd_predict(o, out, err);
        if (app.got_subcommand(explain)) return cmd_explain(o, out, err);
        if (app.got_subcommand(sim)) return cmd_simulate(o, out, err);
        if (app.got_subcommand(viz)) return cmd_viz(o, out, err);
        if (app.got_subcommand(sweep)) return cmd_sweep(o, out, err);
        if (app.got_subcommand(inspect)) return cmd_inspect(o, out, err);
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataError;
    }
    return kExitUsage;
}

}  // namespace tripletree
