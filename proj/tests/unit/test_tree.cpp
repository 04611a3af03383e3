#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "tripletree/tree.hpp"

using namespace tripletree;

namespace {

AugmentedDataset csv_data(const std::string& text, double gamma) {
    std::istringstream in(text);
    return augment(load_trace(in, TraceFormat::csv), gamma);
}

std::vector<std::vector<double>> rows_of(const AugmentedDataset& data) {
    std::vector<std::vector<double>> x;
    for (std::size_t i = 0; i < data.n; ++i) x.emplace_back(data.state(i).begin(), data.state(i).end());
    return x;
}

std::vector<int> containing_leaves(const TripleTree& tree, std::span<const double> s) {
    std::vector<int> out;
    for (int id : tree.leaf_ids())
        if (tree.leaf(id).box.contains(s)) out.push_back(id);
    return out;
}

double weighted_total(const TripleTree& tree) {
    double total = 0.0;
    for (int id : tree.leaf_ids()) {
        const auto& l = tree.leaf(id);
        total += leaf_priority(l.count(), l.impurity, tree.meta().theta, tree.meta().root_impurity);
    }
    return total;
}

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("single leaf predicts global summaries") {
    const auto data = csv_data(
        "episode,t,terminal,x,a,r\n"
        "0,0,0,0,b,1\n"
        "0,1,0,1,a,1\n"
        "0,2,1,3,b,1\n",
        0.5);
    const auto tree = grow(data, Theta(1, 1, 1), 1);
    REQUIRE(tree.num_leaves() == 1);
    const auto& p = tree.leaf(0).prediction;
    CHECK(tree.action_to_string(p.action) == "b");
    CHECK(p.value == doctest::Approx((1.75 + 1.5 + 1.0) / 3.0));
    CHECK(p.derivative[0] == doctest::Approx(1.5));
    CHECK_FALSE(p.derivative_low_confidence);
}

TEST_CASE("modal ties go to the first label") {
    const auto data = csv_data("episode,t,terminal,x,a,r\n0,0,0,0,b,0\n0,1,0,1,a,0\n", 0.5);
    const auto tree = grow(data, Theta(1, 1, 1), 1);
    CHECK(tree.action_to_string(tree.leaf(0).prediction.action) == "a");
}

TEST_CASE("empty dataset and zero budget are rejected") {
    AugmentedDataset empty;
    CHECK_THROWS_AS(grow(empty, Theta(1, 1, 1), 5), ParameterError);
    tt_test::Rng rng(1);
    const auto data = augment(tt_test::random_trace(rng, 50, 2, 2), 0.9);
    CHECK_THROWS_AS(grow(data, Theta(1, 1, 1), 0), ParameterError);
}

TEST_CASE("action-only growth matches a reference greedy CART") {
    tt_test::Rng rng(21);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t d = static_cast<std::size_t>(tt_test::randint(rng, 1, 3));
        const auto data = augment(tt_test::random_trace(rng, 150, d, 3, 20, 0.2), 0.9);
        TreeGrower grower(data, Theta(1, 0, 0));
        grower.grow_to(25);
        const auto ref = oracle::greedy_cart(rows_of(data), data.action_labels, static_cast<int>(data.num_actions()), 25);
        REQUIRE(grower.history().size() == ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) {
            CHECK(grower.history()[k].node == ref[k].node);
            CHECK(grower.history()[k].feature == ref[k].feature);
            CHECK(grower.history()[k].threshold == ref[k].threshold);
        }
    }
}

TEST_CASE("select_best_leaf") {
    const ImpurityTriple root{0.5, 1.0, 1.0};
    const Theta theta(1, 1, 1);
    SUBCASE("one impure leaf among pure leaves") {
        const std::vector<LeafSummary> leaves{{1, 10, {0, 0, 0}, true}, {2, 10, {0.3, 0, 0}, true}, {3, 10, {0, 0, 0}, true}};
        CHECK(select_best_leaf(leaves, theta, root) == 2);
    }
    SUBCASE("identical leaves resolve to the earlier one") {
        const std::vector<LeafSummary> leaves{{4, 5, {0.2, 0.1, 0.1}, true}, {7, 5, {0.2, 0.1, 0.1}, true}};
        CHECK(select_best_leaf(leaves, theta, root) == 4);
    }
    SUBCASE("unsplittable leaves are skipped") {
        const std::vector<LeafSummary> leaves{{1, 50, {0.4, 0.5, 0.5}, false}, {2, 5, {0.1, 0, 0}, true}};
        CHECK(select_best_leaf(leaves, theta, root) == 2);
        const std::vector<LeafSummary> none{{1, 50, {0.4, 0.5, 0.5}, false}};
        CHECK_FALSE(select_best_leaf(none, theta, root));
    }
    SUBCASE("random leaf sets against direct evaluation") {
        tt_test::Rng rng(3);
        for (int rep = 0; rep < 200; ++rep) {
            const Theta th(tt_test::uniform(rng, 0, 1), tt_test::uniform(rng, 0, 1), tt_test::uniform(rng, 0.01, 1));
            const ImpurityTriple r{tt_test::uniform(rng, 0.1, 1), tt_test::uniform(rng, 0.1, 5), tt_test::uniform(rng, 0.1, 5)};
            std::vector<LeafSummary> leaves;
            const int k = tt_test::randint(rng, 1, 12);
            for (int i = 0; i < k; ++i) {
                leaves.push_back({i, static_cast<std::size_t>(tt_test::randint(rng, 1, 40)),
                                  {tt_test::uniform(rng, 0, 0.5), tt_test::uniform(rng, 0, 2), tt_test::uniform(rng, 0, 2)},
                                  tt_test::uniform(rng, 0, 1) < 0.8});
            }
            int expect = -1;
            double best = -1.0;
            for (const auto& l : leaves) {
                if (!l.splittable) continue;
                const double p = static_cast<double>(l.count) *
                                 (th[0] * l.impurity.action / r.action + th[1] * l.impurity.value / r.value +
                                  th[2] * l.impurity.derivative / r.derivative);
                if (p > best) {
                    best = p;
                    expect = l.id;
                }
            }
            const auto got = select_best_leaf(leaves, th, r);
            if (expect < 0) {
                CHECK_FALSE(got);
            } else {
                CHECK(got == expect);
            }
        }
    }
}

TEST_CASE("leaf_of sends threshold states right") {
    tt_test::TreeBuilder b({"x"}, {{0.0, 1.0}}, {"a", "b"});
    const auto [l, r] = b.split(0, 0, 0.5);
    b.set(l, "a", 0).set(r, "b", 1);
    const auto tree = b.build();
    const std::vector<double> at{0.5}, below{std::nextafter(0.5, 0.0)};
    CHECK(tree.leaf_of(at) == r);
    CHECK(tree.leaf_of(below) == l);
    CHECK(tree.predict(at).value == 1.0);
}

TEST_CASE("leaf boxes tile the space") {
    tt_test::Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const auto tree = tt_test::random_tree(rng, static_cast<std::size_t>(tt_test::randint(rng, 1, 4)), 40, 3);
        for (int q = 0; q < 300; ++q) {
            auto s = tt_test::random_state(rng, tree);
            // Also probe beyond the data range and exactly on thresholds.
            if (q % 3 == 0) s[0] = tt_test::uniform(rng, -5.0, 5.0);
            if (q % 5 == 0) {
                for (const auto& n : tree.nodes())
                    if (!n.is_leaf() && n.feature >= 0) {
                        s[static_cast<std::size_t>(n.feature)] = n.threshold;
                        break;
                    }
            }
            const auto hits = containing_leaves(tree, s);
            REQUIRE(hits.size() == 1);
            CHECK(hits[0] == tree.leaf_of(s));
        }
    }
}

TEST_CASE("training samples reach their member leaf") {
    tt_test::Rng rng(6);
    const auto data = augment(tt_test::random_trace(rng, 500, 3, 4), 0.9);
    const auto tree = grow(data, Theta(0.3, 0.3, 0.4), 60);
    std::vector<int> owner(data.n, -1);
    for (int id : tree.leaf_ids())
        for (std::size_t i : tree.leaf(id).members) {
            CHECK(owner[i] == -1);
            owner[i] = id;
        }
    for (std::size_t i = 0; i < data.n; ++i) CHECK(tree.leaf_of(data.state(i)) == owner[i]);
}

TEST_CASE("transitions of a hand-traced episode") {
    tt_test::TreeBuilder b({"x"}, {{0.0, 1.0}}, {"a"});
    const auto [l1, l2] = b.split(0, 0, 0.5);
    auto tree = b.build();
    const auto data = csv_data("episode,t,terminal,x,a,r\n0,0,0,0.1,a,0\n0,1,0,0.2,a,0\n0,2,1,0.8,a,0\n", 0.9);
    compute_transitions(tree, data);
    const auto& t1 = tree.leaf(l1).transitions;
    const auto& t2 = tree.leaf(l2).transitions;
    REQUIRE(t1.size() == 1);
    CHECK(t1.at(l2).probability == 1.0);
    CHECK(t1.at(l2).mean_duration == 2.0);
    REQUIRE(t2.size() == 1);
    CHECK(t2.at(kSink).probability == 1.0);
    CHECK(t2.at(kSink).mean_duration == 1.0);
}

TEST_CASE("episode within one leaf") {
    tt_test::TreeBuilder b({"x"}, {{0.0, 1.0}}, {"a"});
    auto tree = b.build();
    SUBCASE("terminal ends in the sink") {
        compute_transitions(tree, csv_data("episode,t,terminal,x,a,r\n0,0,0,0.1,a,0\n0,1,1,0.2,a,0\n", 0.9));
        REQUIRE(tree.leaf(0).transitions.size() == 1);
        CHECK(tree.leaf(0).transitions.at(kSink).probability == 1.0);
        CHECK(tree.leaf(0).transitions.at(kSink).mean_duration == 2.0);
    }
    SUBCASE("truncated records nothing") {
        compute_transitions(tree, csv_data("episode,t,terminal,x,a,r\n0,0,0,0.1,a,0\n0,1,0,0.2,a,0\n", 0.9));
        CHECK(tree.leaf(0).transitions.empty());
        CHECK(tree.leaf(0).sequence_starts == 0);
    }
}

TEST_CASE("sequences do not cross episodes") {
    tt_test::TreeBuilder b({"x"}, {{0.0, 1.0}}, {"a"});
    const auto [l1, l2] = b.split(0, 0, 0.5);
    auto tree = b.build();
    compute_transitions(tree, csv_data("episode,t,terminal,x,a,r\n0,0,1,0.1,a,0\n1,0,1,0.9,a,0\n", 0.9));
    CHECK(tree.leaf(l1).transitions.size() == 1);
    CHECK(tree.leaf(l1).transitions.count(kSink) == 1);
    CHECK(tree.leaf(l1).transitions.count(l2) == 0);
}

TEST_CASE("transitions match a brute-force sequence scanner") {
    tt_test::Rng rng(8);
    for (int rep = 0; rep < 15; ++rep) {
        const auto data = augment(tt_test::random_trace(rng, 400, 2, 3), 0.9);
        const auto tree = grow(data, Theta(1, 1, 1), static_cast<std::size_t>(tt_test::randint(rng, 1, 50)));
        std::vector<std::vector<int>> seqs;
        std::vector<bool> terminal;
        for (const auto& ep : data.base.episodes) {
            std::vector<int> s;
            for (const auto& st : ep.steps) s.push_back(tree.leaf_of(st.state));
            seqs.push_back(s);
            terminal.push_back(ep.terminal);
        }
        const auto ref = oracle::scan_transitions(seqs, terminal);
        for (int id : tree.leaf_ids()) {
            const auto& tr = tree.leaf(id).transitions;
            const auto it = ref.count.find(id);
            if (it == ref.count.end()) {
                CHECK(tr.empty());
                continue;
            }
            REQUIRE(tr.size() == it->second.size());
            std::size_t starts = 0;
            for (const auto& [to, c] : it->second) starts += c;
            CHECK(tree.leaf(id).sequence_starts == starts);
            double sum = 0.0;
            for (const auto& [to, c] : it->second) {
                REQUIRE(tr.count(to) == 1);
                CHECK(tr.at(to).count == c);
                CHECK(tr.at(to).probability == doctest::Approx(static_cast<double>(c) / static_cast<double>(starts)));
                CHECK(tr.at(to).mean_duration == doctest::Approx(ref.total_length.at(id).at(to) / static_cast<double>(c)));
                CHECK(tr.at(to).mean_duration >= 1.0);
                sum += tr.at(to).probability;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("loss examples") {
    SUBCASE("single leaf value loss is the RMS deviation") {
        const auto data = csv_data("episode,t,terminal,x,a,r\n0,0,1,0,a,0\n1,0,1,1,a,2\n", 0.9);
        const auto tree = grow(data, Theta(1, 1, 1), 1);
        CHECK(evaluate_losses(tree, data).value == doctest::Approx(1.0));
    }
    SUBCASE("memorising tree has zero loss") {
        // Distinct states only: the clamped random walk repeats boundary states.
        tt_test::Rng rng(9);
        auto trace = tt_test::random_trace(rng, 150, 2, 3);
        for (auto& ep : trace.episodes)
            for (auto& st : ep.steps) st.state = {tt_test::uniform(rng, 0, 1), tt_test::uniform(rng, 0, 1)};
        const auto data = augment(trace, 0.9);
        const auto tree = grow(data, Theta(1, 1, 1), data.n);
        const auto l = evaluate_losses(tree, data);
        CHECK(l.action == 0.0);
        CHECK(l.value == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(l.derivative == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("continuous actions use RMS error") {
        tt_test::Rng rng(10);
        const auto data = augment(tt_test::random_trace_continuous(rng, 100, 2, 1), 0.9);
        const auto tree = grow(data, Theta(1, 0, 0), 1);
        double mean = 0.0;
        for (double v : data.action_values) mean += v;
        mean /= static_cast<double>(data.n);
        double sq = 0.0;
        for (double v : data.action_values) sq += (v - mean) * (v - mean);
        CHECK(evaluate_losses(tree, data).action == doctest::Approx(std::sqrt(sq / static_cast<double>(data.n))));
    }
}

TEST_CASE("training losses fall as leaves are added") {
    tt_test::Rng rng(11);
    const auto data = augment(tt_test::random_trace(rng, 600, 2, 3), 0.9);
    const auto curve = loss_curve(data, nullptr, Theta(1.0 / 3, 1.0 / 3, 1.0 / 3), 80);
    REQUIRE(curve.size() >= 10);
    CHECK(curve.front().leaves == 1);
    const auto& first = curve[9].train;
    const auto& last = curve.back().train;
    CHECK(last.action < first.action);
    CHECK(last.value < first.value);
    CHECK(last.derivative < first.derivative);
}

TEST_CASE("weighted impurity never increases during growth") {
    tt_test::Rng rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        const auto data = augment(tt_test::random_trace(rng, 300, 3, 3), 0.9);
        const Theta theta(tt_test::uniform(rng, 0, 1), tt_test::uniform(rng, 0, 1), tt_test::uniform(rng, 0.01, 1));
        TreeGrower grower(data, theta);
        double prev = weighted_total(grower.tree());
        while (grower.tree().num_leaves() < 60 && grower.step()) {
            const double now = weighted_total(grower.tree());
            CHECK(now <= prev + 1e-9);
            prev = now;
        }
    }
}

TEST_CASE("growth is prefix-consistent") {
    tt_test::Rng rng(13);
    const auto data = augment(tt_test::random_trace(rng, 400, 3, 3), 0.9);
    const Theta theta(0.2, 0.6, 0.2);
    TreeGrower grower(data, theta);
    grower.grow_to(15);
    grower.grow_to(45);
    CHECK(grower.snapshot() == grow(data, theta, 45));
}

TEST_CASE("growth stops early when nothing is worth splitting") {
    const auto data = csv_data("episode,t,terminal,x,a,r\n0,0,1,0,a,1\n1,0,1,1,a,1\n2,0,1,2,a,1\n", 0.9);
    CHECK(grow(data, Theta(1, 1, 1), 10).num_leaves() == 1);
}

TEST_CASE("min_leaf bounds leaf populations") {
    tt_test::Rng rng(14);
    const auto data = augment(tt_test::random_trace(rng, 300, 2, 3), 0.9);
    const auto tree = grow(data, Theta(1, 1, 1), 100, 7);
    for (int id : tree.leaf_ids()) CHECK(tree.leaf(id).count() >= 7);
}

TEST_CASE("leaves without derivatives inherit from the parent") {
    // Leaf x >= 5 holds only the final sample of a terminating episode.
    const auto data = csv_data(
        "episode,t,terminal,x,a,r\n"
        "0,0,0,0,a,0\n"
        "0,1,0,1,a,0\n"
        "0,2,1,10,b,0\n",
        0.9);
    const auto tree = grow(data, Theta(1, 0, 0), 2);
    REQUIRE(tree.num_leaves() == 2);
    const std::vector<double> far{10};
    const auto& p = tree.predict(far);
    CHECK(p.derivative_low_confidence);
    CHECK(p.derivative[0] == doctest::Approx(5.0));
}

TEST_CASE("density is population over normalised clipped volume") {
    tt_test::TreeBuilder b({"x", "y"}, {{0.0, 4.0}, {0.0, 2.0}}, {"a"});
    const auto [l, r] = b.split(0, 0, 1.0);
    b.set(l, "a", 0, {}, 10).set(r, "a", 0, {}, 6);
    const auto tree = b.build();
    CHECK(tree.leaf(l).density == doctest::Approx(10.0 / 0.25));
    CHECK(tree.leaf(r).density == doctest::Approx(6.0 / 0.75));
}

TEST_CASE("serialisation round-trips") {
    tt_test::Rng rng(15);
    for (std::size_t leaves : {1u, 12u, 90u}) {
        const auto tree = tt_test::random_tree(rng, 3, leaves, 4);
        const auto text = serialize(tree);
        const auto back = deserialize(text);
        CHECK(back == tree);
        CHECK(serialize(back) == text);
    }
    const auto data = augment(tt_test::random_trace_continuous(rng, 200, 2, 2), 0.9);
    const auto cont = grow(data, Theta(1, 1, 1), 20);
    CHECK(deserialize(serialize(cont)) == cont);
}

TEST_CASE("corrupt tree files are rejected") {
    tt_test::Rng rng(16);
    const auto text = serialize(tt_test::random_tree(rng, 2, 5, 2));
    CHECK_THROWS_AS(deserialize("{not json"), FormatError);
    CHECK_THROWS_AS(deserialize("{}"), FormatError);
    auto doc = nlohmann::json::parse(text);
    doc["version"] = 99;
    const auto bumped = doc.dump();
    CHECK_THROWS_AS(deserialize(bumped), FormatError);
}

}  // TEST_SUITE
