#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tripletree/tree.hpp"

namespace tripletree {
namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

// JSON has no infinities: unbounded box sides are written as null.
json bound_to_json(const std::vector<double>& values) {
    json out = json::array();
    for (double v : values) out.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    return out;
}

std::vector<double> bound_from_json(const json& j, double missing) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.is_null() ? missing : v.get<double>());
    return out;
}

json impurity_to_json(const ImpurityTriple& t) {
    return {{"action", t.action}, {"value", t.value}, {"derivative", t.derivative}};
}

ImpurityTriple impurity_from_json(const json& j) {
    return {j.at("action").get<double>(), j.at("value").get<double>(), j.at("derivative").get<double>()};
}

json action_to_json(const TreeMeta& meta, const Action& a) {
    if (meta.action_kind == ActionKind::discrete) return meta.action_labels.at(static_cast<std::size_t>(a.label));
    return a.value;
}

Action action_from_json(const TreeMeta& meta, const json& j) {
    Action a;
    if (meta.action_kind == ActionKind::discrete) {
        const auto label = j.get<std::string>();
        const auto it = std::find(meta.action_labels.begin(), meta.action_labels.end(), label);
        if (it == meta.action_labels.end()) throw FormatError("leaf action '" + label + "' not in label set");
        a.label = static_cast<int>(it - meta.action_labels.begin());
    } else {
        a.value = j.get<std::vector<double>>();
    }
    return a;
}

}  // namespace

std::string serialize(const TripleTree& tree) {
    const auto& meta = tree.meta();
    json jm;
    jm["d"] = meta.feature_names.size();
    jm["feature_names"] = meta.feature_names;
    jm["action_kind"] = to_string(meta.action_kind);
    jm["action_labels"] = meta.action_labels;
    jm["action_names"] = meta.action_names;
    jm["theta"] = meta.theta.weights();
    jm["gamma"] = meta.gamma;
    jm["sigma"] = meta.sigma;
    jm["action_sigma"] = meta.action_sigma;
    json ranges = json::array();
    for (const auto& [lo, hi] : meta.ranges) ranges.push_back({lo, hi});
    jm["ranges"] = ranges;
    jm["medians"] = meta.medians;
    jm["root_impurity"] = impurity_to_json(meta.root_impurity);
    jm["min_leaf"] = meta.min_leaf;
    jm["num_samples"] = meta.num_samples;

    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
        json jn;
        jn["parent"] = n.parent;
        if (!n.is_leaf()) {
            jn["f"] = n.feature;
            jn["tau"] = n.threshold;
            jn["left"] = n.left;
            jn["right"] = n.right;
        } else {
            const Leaf& l = *n.leaf;
            json jl;
            jl["box"] = {{"lower", bound_to_json(l.box.lower)}, {"upper", bound_to_json(l.box.upper)}};
            jl["preds"] = {{"action", action_to_json(meta, l.prediction.action)},
                           {"value", l.prediction.value},
                           {"derivative", l.prediction.derivative},
                           {"derivative_low_confidence", l.prediction.derivative_low_confidence}};
            jl["impurity"] = impurity_to_json(l.impurity);
            jl["members"] = l.members;
            jl["sequence_starts"] = l.sequence_starts;
            json trans = json::array();
            for (const auto& [dest, t] : l.transitions) {
                trans.push_back({{"to", dest == kSink ? json(nullptr) : json(dest)},
                                 {"p", t.probability},
                                 {"t", t.mean_duration},
                                 {"count", t.count}});
            }
            jl["transitions"] = trans;
            jl["density"] = l.density;
            jn["leaf"] = jl;
        }
        nodes.push_back(jn);
    }
    json doc;
    doc["format"] = "tripletree";
    doc["version"] = kTreeFormatVersion;
    doc["meta"] = jm;
    doc["nodes"] = nodes;
    return doc.dump(1);
}

TripleTree deserialize(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt tree payload: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "tripletree") throw FormatError("not a tree file");
    if (doc.value("version", -1) != kTreeFormatVersion) {
        throw FormatError("unsupported tree format version " + doc.value("version", json(-1)).dump());
    }
    try {
        const auto& jm = doc.at("meta");
        TreeMeta meta;
        meta.feature_names = jm.at("feature_names").get<std::vector<std::string>>();
        if (jm.at("d").get<std::size_t>() != meta.feature_names.size()) throw FormatError("meta.d mismatch");
        meta.action_kind = action_kind_from_string(jm.at("action_kind").get<std::string>());
        meta.action_labels = jm.at("action_labels").get<std::vector<std::string>>();
        meta.action_names = jm.at("action_names").get<std::vector<std::string>>();
        const auto th = jm.at("theta").get<std::vector<double>>();
        if (th.size() != 3) throw FormatError("theta must have three entries");
        meta.theta = Theta(th[0], th[1], th[2]);
        meta.gamma = jm.at("gamma").get<double>();
        meta.sigma = jm.at("sigma").get<std::vector<double>>();
        meta.action_sigma = jm.at("action_sigma").get<std::vector<double>>();
        for (const auto& r : jm.at("ranges")) meta.ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
        meta.medians = jm.at("medians").get<std::vector<double>>();
        meta.root_impurity = impurity_from_json(jm.at("root_impurity"));
        meta.min_leaf = jm.at("min_leaf").get<std::size_t>();
        meta.num_samples = jm.at("num_samples").get<std::size_t>();
        const std::size_t d = meta.feature_names.size();
        if (meta.sigma.size() != d || meta.ranges.size() != d || meta.medians.size() != d) throw FormatError("meta vectors disagree with d");

        std::vector<Node> nodes;
        const auto& jnodes = doc.at("nodes");
        const int count = static_cast<int>(jnodes.size());
        for (const auto& jn : jnodes) {
            Node n;
            n.parent = jn.at("parent").get<int>();
            if (jn.contains("leaf")) {
                const auto& jl = jn.at("leaf");
                Leaf l;
                l.box.lower = bound_from_json(jl.at("box").at("lower"), -kInf);
                l.box.upper = bound_from_json(jl.at("box").at("upper"), kInf);
                if (l.box.lower.size() != d || l.box.upper.size() != d) throw FormatError("leaf box dimension");
                const auto& jp = jl.at("preds");
                l.prediction.action = action_from_json(meta, jp.at("action"));
                l.prediction.value = jp.at("value").get<double>();
                l.prediction.derivative = jp.at("derivative").get<std::vector<double>>();
                l.prediction.derivative_low_confidence = jp.at("derivative_low_confidence").get<bool>();
                l.impurity = impurity_from_json(jl.at("impurity"));
                l.members = jl.at("members").get<std::vector<std::size_t>>();
                l.sequence_starts = jl.at("sequence_starts").get<std::size_t>();
                for (const auto& jt : jl.at("transitions")) {
                    const int dest = jt.at("to").is_null() ? kSink : jt.at("to").get<int>();
                    if (dest != kSink && (dest < 0 || dest >= count)) throw FormatError("transition to unknown node");
                    l.transitions[dest] = {jt.at("p").get<double>(), jt.at("t").get<double>(),
                                           jt.at("count").get<std::size_t>()};
                }
                l.density = jl.at("density").get<double>();
                n.leaf = std::move(l);
            } else {
                n.feature = jn.at("f").get<int>();
                n.threshold = jn.at("tau").get<double>();
                n.left = jn.at("left").get<int>();
                n.right = jn.at("right").get<int>();
                if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= d) throw FormatError("split feature out of range");
                if (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count) {
                    throw FormatError("child index out of range");
                }
            }
            nodes.push_back(std::move(n));
        }
        if (nodes.empty()) throw FormatError("tree has no nodes");
        return TripleTree(std::move(meta), std::move(nodes));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt tree payload: ") + e.what());
    } catch (const ParameterError& e) {
        throw FormatError(std::string("corrupt tree payload: ") + e.what());
    }
}

void save_tree(const TripleTree& tree, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write tree file '" + path.string() + "'");
    out << serialize(tree) << '\n';
}

TripleTree load_tree(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open tree file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace tripletree
