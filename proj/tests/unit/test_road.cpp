#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "tripletree/road.hpp"
#include "tripletree/trajectory.hpp"

using namespace tripletree;
using namespace tripletree::road;

namespace {

const GridPolicy& oscillate_policy() {
    static const GridPolicy p = dp_solve(preset("oscillate"));
    return p;
}

const AugmentedDataset& oscillate_data() {
    static const AugmentedDataset d =
        augment(generate_dataset(preset("oscillate"), oscillate_policy(), 10000, 100, 1), preset("oscillate").gamma);
    return d;
}

double mirror_gap(const GridPolicy& p) {
    const auto& c = p.config;
    double worst = 0.0;
    for (std::size_t i = 0; i < c.n_pos; ++i)
        for (std::size_t j = 0; j < c.n_speed; ++j)
            worst = std::max(worst, std::abs(p.value(i, j) - p.value(c.n_pos - 1 - i, c.n_speed - 1 - j)));
    return worst;
}

double seg_angle(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& d,
                 const std::vector<double>& sigma) {
    double xx = 0, dd = 0, xd = 0;
    for (std::size_t f = 0; f < a.size(); ++f) {
        const double x = (b[f] - a[f]) / sigma[f];
        const double y = d[f] / sigma[f];
        xx += x * x;
        dd += y * y;
        xd += x * y;
    }
    if (xx == 0.0 || dd == 0.0) return 0.0;
    return std::acos(std::clamp(xd / std::sqrt(xx * dd), -1.0, 1.0));
}

}  // namespace

TEST_SUITE("road") {

TEST_CASE("dynamics examples") {
    const auto c = preset("oscillate");
    auto r = step(c, {1.0, 0.05}, 0.001);
    CHECK(r.next.speed == doctest::Approx(0.051).epsilon(1e-12));
    CHECK(r.next.pos == doctest::Approx(1.051).epsilon(1e-12));
    CHECK_FALSE(r.terminal);
    CHECK(r.reward == doctest::Approx(c.r_speed * 0.051).epsilon(1e-12));

    r = step(c, {2.99, 0.099}, 0.001);
    CHECK(r.terminal);
    CHECK(r.reward == c.r_right);

    r = step(c, {1.0, 0.1}, 0.001);
    CHECK(r.next.speed == 0.1);

    r = step(c, {0.01, -0.05}, -0.001);
    CHECK(r.terminal);
    CHECK(r.reward == c.r_left);
}

TEST_CASE("presets and config files") {
    CHECK(preset_names().size() == 4);
    for (const auto& name : preset_names()) {
        const auto c = preset(name);
        CHECK_NOTHROW(c.validate());
        CHECK(config_from_json(config_to_json(c)) == c);
    }
    const auto osc = preset("oscillate");
    CHECK(osc.r_left == -100.0);
    CHECK(osc.r_right == -100.0);
    CHECK(osc.r_speed > 0.0);
    CHECK(osc.gamma == 0.99);
    CHECK(osc.n_pos == 30);
    CHECK(osc.n_speed == 30);
    CHECK(osc.actions == std::vector<double>{-0.001, 0.001});
    CHECK_THROWS_AS(preset("lunar"), ParameterError);
    CHECK_THROWS_AS(config_from_json("{\"grid\": [1, 30]}"), ParameterError);
    CHECK_THROWS_AS(config_from_json("[1,2"), FormatError);
}

TEST_CASE("2x2 grid matches the hand-solved fixed point") {
    RoadConfig c;
    c.r_left = -1.0;
    c.r_right = -1.0;
    c.r_speed = 1.0;
    c.gamma = 0.5;
    c.n_pos = 2;
    c.n_speed = 2;
    c.actions = {-0.1, 0.1};
    const auto p = dp_solve(c, 1e-13);
    // Nodes (0,-v) and (3,v) are worth 3/46; (0,v) and (3,-v) are worth 9/46.
    CHECK(p.value(0, 0) == doctest::Approx(3.0 / 46.0).epsilon(1e-10));
    CHECK(p.value(0, 1) == doctest::Approx(9.0 / 46.0).epsilon(1e-10));
    CHECK(p.value(1, 0) == doctest::Approx(9.0 / 46.0).epsilon(1e-10));
    CHECK(p.value(1, 1) == doctest::Approx(3.0 / 46.0).epsilon(1e-10));
    CHECK(p.cell_actions[0] == 1);
    CHECK(p.cell_actions[1] == 1);
    CHECK(p.cell_actions[2] == 0);
    CHECK(p.cell_actions[3] == 0);
}

TEST_CASE("symmetric rewards give mirror-symmetric values") {
    for (double r_speed : {0.0, 1.0}) {
        RoadConfig c;
        c.r_left = c.r_right = -50.0;
        c.r_speed = r_speed;
        c.gamma = 0.9;
        const double tol = 1e-9;
        const auto p = dp_solve(c, tol);
        CHECK(mirror_gap(p) <= tol / (1.0 - c.gamma));
    }
    CHECK(mirror_gap(oscillate_policy()) <= 1e-8 / (1.0 - 0.99));
}

TEST_CASE("residuals shrink and the policy is greedy") {
    const auto& p = oscillate_policy();
    CHECK(p.residual < 1e-8);
    for (std::size_t k = 1; k < p.residual_history.size(); ++k)
        CHECK(p.residual_history[k] <= p.residual_history[k - 1] * (1.0 + 1e-12));
    const auto& c = p.config;
    for (std::size_t i = 0; i < c.n_pos; ++i) {
        for (std::size_t j = 0; j < c.n_speed; ++j) {
            const RoadState s{p.grid_pos(i), p.grid_speed(j)};
            double best = -INFINITY;
            for (double a : c.actions) {
                const auto r = step(c, s, a);
                best = std::max(best, r.terminal ? r.reward : r.reward + c.gamma * p.value_at(r.next));
            }
            CHECK(p.value(i, j) == doctest::Approx(best).epsilon(1e-7));
        }
    }
}

TEST_CASE("non-convergence reports the residual") {
    try {
        dp_solve(preset("oscillate"), 1e-12, 3);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("oscillating policy stays on the road") {
    const auto& p = oscillate_policy();
    RoadState s{1.5, 0.0};
    std::size_t alive = 0;
    for (; alive < 500; ++alive) {
        const auto r = step(p.config, s, p.action(s));
        if (r.terminal) break;
        s = r.next;
    }
    CHECK(alive == 500);
}

TEST_CASE("policy json round-trips") {
    RoadConfig c;
    c.n_pos = c.n_speed = 5;
    const auto p = dp_solve(c, 1e-6);
    const auto back = policy_from_json(policy_to_json(p));
    CHECK(back.config == p.config);
    CHECK(back.values == p.values);
    CHECK(back.cell_actions == p.cell_actions);
}

TEST_CASE("generated datasets") {
    const auto c = preset("oscillate");
    const auto& p = oscillate_policy();
    const auto a = generate_dataset(c, p, 10000, 100, 7);
    const auto b = generate_dataset(c, p, 10000, 100, 7);
    std::ostringstream sa, sb;
    write_trace_csv(sa, a);
    write_trace_csv(sb, b);
    CHECK(sa.str() == sb.str());
    std::ostringstream sc;
    write_trace_csv(sc, generate_dataset(c, p, 10000, 100, 8));
    CHECK(sc.str() != sa.str());

    CHECK(a.num_samples() == 10000);
    CHECK(a.episodes.size() >= 100);
    CHECK(a.episodes.size() <= 10000);
    for (const auto& ep : a.episodes) {
        CHECK(ep.steps.size() <= 100);
        if (ep.steps.size() < 100 && &ep != &a.episodes.back()) CHECK(ep.terminal);
        for (const auto& st : ep.steps) {
            CHECK(st.state[0] >= c.pos_min);
            CHECK(st.state[0] <= c.pos_max);
            CHECK(st.state[1] >= c.speed_min);
            CHECK(st.state[1] <= c.speed_max);
        }
    }
    CHECK(a.action_labels == std::vector<std::string>{"-0.001", "0.001"});
    CHECK_THROWS_AS(generate_dataset(c, p, 0, 100, 1), ParameterError);
}

TEST_CASE("simplex grid") {
    const auto g = simplex_grid(0.5);
    CHECK(g.size() == 6);
    for (const auto& t : g) CHECK(t[0] + t[1] + t[2] == doctest::Approx(1.0));
    CHECK(simplex_grid(0.1).size() == 66);
    CHECK_THROWS_AS(simplex_grid(0.3), ParameterError);
    CHECK_THROWS_AS(simplex_grid(0.0), ParameterError);
}

TEST_CASE("sweep with a single weighting returns it") {
    const auto r = theta_sweep(oscillate_data(), {Theta(1, 0, 0)}, 20);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.best == 0);
    CHECK(r.rows[0].theta == Theta(1, 0, 0));
}

TEST_CASE("exclusive vertices win their own loss columns") {
    const auto r = theta_sweep(oscillate_data(),
                               {Theta(1, 0, 0), Theta(0, 1, 0), Theta(0, 0, 1), Theta(1.0 / 3, 1.0 / 3, 1.0 / 3)}, 200);
    REQUIRE(r.rows.size() == 4);
    for (const auto& row : r.rows) {
        CHECK(r.rows[0].losses.action <= row.losses.action);
        CHECK(r.rows[1].losses.value <= row.losses.value);
        CHECK(r.rows[2].losses.derivative <= row.losses.derivative);
    }
}

TEST_CASE("sweep normalisation and selection") {
    const auto r = theta_sweep(oscillate_data(), simplex_grid(0.5), 200);
    const auto column = [&](const Theta& t) {
        for (const auto& row : r.rows)
            if (row.theta == t) return row.losses;
        FAIL("missing theta");
        return Losses{};
    };
    const auto a = column(Theta(1, 0, 0));
    const auto v = column(Theta(0, 1, 0));
    const auto d = column(Theta(0, 0, 1));
    CHECK(r.exclusive.action == a.action);
    CHECK(r.exclusive.value == v.value);
    CHECK(r.exclusive.derivative == d.derivative);
    // Exclusive action and value weightings win their columns on this grid.
    // Derivative-only growth does not: greedy splits on [0.5, 0, 0.5] reach a lower derivative loss.
    for (const auto& row : r.rows) {
        CHECK(a.action <= row.losses.action);
        CHECK(v.value <= row.losses.value);
    }

    const auto trivial = evaluate_losses(grow(oscillate_data(), Theta(1, 1, 1), 1), oscillate_data());
    CHECK(r.trivial.action == trivial.action);
    CHECK(r.trivial.value == trivial.value);
    CHECK(r.trivial.derivative == trivial.derivative);
    const auto norm = [](double loss, double exclusive, double single) {
        return loss / std::max(exclusive, kSweepLossFloor * single);
    };
    std::size_t best = 0;
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        const auto& row = r.rows[k];
        const double na = norm(row.losses.action, a.action, trivial.action);
        const double nv = norm(row.losses.value, v.value, trivial.value);
        const double nd = norm(row.losses.derivative, d.derivative, trivial.derivative);
        CHECK(row.normalised.action == doctest::Approx(na).epsilon(1e-12));
        CHECK(row.normalised.value == doctest::Approx(nv).epsilon(1e-12));
        CHECK(row.normalised.derivative == doctest::Approx(nd).epsilon(1e-12));
        CHECK(row.worst_normalised == doctest::Approx(std::max({na, nv, nd})).epsilon(1e-12));
        if (row.worst_normalised < r.rows[best].worst_normalised) best = k;
    }
    CHECK(r.best == best);
}

TEST_CASE("sweep winner leans on the value channel") {
    const auto r = theta_sweep(oscillate_data(), simplex_grid(0.1), 200);
    const auto& w = r.rows[r.best].theta;
    MESSAGE("winner " << w.to_string());
    CHECK(w[1] > w[0]);
    CHECK(w[1] > w[2]);
    for (const auto& row : r.rows) CHECK(r.rows[r.best].worst_normalised <= row.worst_normalised);
}

TEST_CASE("alignment brings road paths closer to the derivative field") {
    const auto tree = grow(oscillate_data(), Theta(0.2, 0.6, 0.2), 200);
    const auto graph = build_leaf_graph(tree);
    const auto& sigma = tree.meta().sigma;
    tt_test::Rng rng(3);
    int checked = 0;
    double before_total = 0.0, after_total = 0.0;
    for (int attempt = 0; attempt < 200 && checked < 20; ++attempt) {
        const auto ids = tree.leaf_ids();
        const int s = ids[static_cast<std::size_t>(tt_test::randint(rng, 0, static_cast<int>(ids.size()) - 1))];
        const int e = ids[static_cast<std::size_t>(tt_test::randint(rng, 0, static_cast<int>(ids.size()) - 1))];
        const auto path = most_probable_path(graph, s, e);
        if (!path || path->leaves.size() < 3) continue;
        AlignOptions none;
        none.max_iters = 0;
        const auto raw = align_path(tree, path->leaves, none);
        const auto aligned = align_path(tree, path->leaves);
        CHECK(aligned.objective <= raw.objective);
        for (std::size_t j = 0; j + 1 < raw.nodes.size(); ++j) {
            const auto& d = tree.leaf(path->leaves[j]).prediction.derivative;
            before_total += seg_angle(raw.nodes[j], raw.nodes[j + 1], d, sigma);
            after_total += seg_angle(aligned.nodes[j], aligned.nodes[j + 1], d, sigma);
        }
        ++checked;
    }
    CHECK(checked == 20);
    MESSAGE("mean segment angle before " << before_total << ", after " << after_total);
    CHECK(after_total < before_total);
}

}  // TEST_SUITE
