#include "tripletree/impurity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tripletree {
namespace {

// Sufficient statistics of all three channels for a sample subset.
struct ChannelStats {
    std::vector<std::size_t> counts;   // discrete actions
    std::vector<Moments> action;       // continuous actions
    Moments value;
    std::vector<Moments> deriv;
    std::size_t n = 0;

    ChannelStats(const AugmentedDataset& data, const std::vector<double>& action_shift, double value_shift,
                 const std::vector<double>& deriv_shift)
        : counts(data.discrete() ? data.num_actions() : 0), value(value_shift) {
        action.reserve(action_shift.size());
        for (double s : action_shift) action.emplace_back(s);
        deriv.reserve(deriv_shift.size());
        for (double s : deriv_shift) deriv.emplace_back(s);
    }

    void add(const AugmentedDataset& data, std::size_t i) {
        ++n;
        if (data.discrete()) {
            ++counts[static_cast<std::size_t>(data.action_labels[i])];
        } else {
            for (std::size_t j = 0; j < data.m; ++j) action[j].add(data.action_values[i * data.m + j]);
        }
        value.add(data.values[i]);
        if (data.has_deriv[i]) {
            for (std::size_t f = 0; f < data.d; ++f) deriv[f].add(data.derivs[i * data.d + f]);
        }
    }

    ChannelStats minus(const ChannelStats& o) const {
        ChannelStats r = *this;
        r.n = n - o.n;
        for (std::size_t k = 0; k < counts.size(); ++k) r.counts[k] = counts[k] - o.counts[k];
        for (std::size_t j = 0; j < action.size(); ++j) r.action[j] = action[j] - o.action[j];
        r.value = value - o.value;
        for (std::size_t f = 0; f < deriv.size(); ++f) r.deriv[f] = deriv[f] - o.deriv[f];
        return r;
    }

    ImpurityTriple impurity(const AugmentedDataset& data) const {
        ImpurityTriple out;
        if (n == 0) return out;
        if (data.discrete()) {
            out.action = gini(counts);
        } else if (data.base.action_kind == ActionKind::continuous_scalar) {
            out.action = action[0].variance();
        } else {
            for (std::size_t j = 0; j < action.size(); ++j) {
                if (data.action_sigma[j] > 0.0) out.action += action[j].variance() / data.action_sigma[j];
            }
        }
        out.value = value.variance();
        for (std::size_t f = 0; f < deriv.size(); ++f) {
            if (data.sigma[f] > 0.0 && deriv[f].count() > 0) out.derivative += deriv[f].variance() / data.sigma[f];
        }
        return out;
    }
};

// Means used as moment shifts, so that variances of offset data stay accurate.
ChannelStats make_stats(const AugmentedDataset& data, std::span<const std::size_t> samples) {
    std::vector<double> action_shift(data.m, 0.0);
    std::vector<double> deriv_shift(data.d, 0.0);
    double value_shift = 0.0;
    std::size_t nd = 0;
    for (std::size_t i : samples) {
        value_shift += data.values[i];
        for (std::size_t j = 0; j < data.m; ++j) action_shift[j] += data.action_values[i * data.m + j];
        if (data.has_deriv[i]) {
            ++nd;
            for (std::size_t f = 0; f < data.d; ++f) deriv_shift[f] += data.derivs[i * data.d + f];
        }
    }
    if (!samples.empty()) {
        const double inv = 1.0 / static_cast<double>(samples.size());
        value_shift *= inv;
        for (auto& v : action_shift) v *= inv;
    }
    if (nd > 0) {
        for (auto& v : deriv_shift) v /= static_cast<double>(nd);
    }
    return ChannelStats(data, action_shift, value_shift, deriv_shift);
}

}  // namespace

Theta::Theta(double action, double value, double derivative) : w_{action, value, derivative} {
    for (double w : w_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("theta entries must be finite and non-negative");
    }
    if (!(w_[0] + w_[1] + w_[2] > 0.0)) throw ParameterError("theta must have a positive sum");
}

Theta Theta::parse(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(tok, &used));
            if (tok.find_first_not_of(" \t", used) != std::string::npos) throw ParameterError("");
        } catch (const std::exception&) {
            throw ParameterError("theta component '" + tok + "' is not a number");
        }
    }
    if (parts.size() != 3) throw ParameterError("theta must have three comma-separated components");
    return Theta(parts[0], parts[1], parts[2]);
}

std::string Theta::to_string() const {
    return canonical_number(w_[0]) + ',' + canonical_number(w_[1]) + ',' + canonical_number(w_[2]);
}

double gini(std::span<const std::size_t> counts) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) return 0.0;
    const double t = static_cast<double>(total);
    double sum_sq = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / t;
        sum_sq += p * p;
    }
    return std::max(0.0, 1.0 - sum_sq);
}

double Moments::variance() const {
    if (n_ <= 0.0) return 0.0;
    const double mean = s1_ / n_;
    return std::max(0.0, s2_ / n_ - mean * mean);
}

double variance(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double shift = 0.0;
    for (double v : values) shift += v;
    Moments mo(shift / static_cast<double>(values.size()));
    for (double v : values) mo.add(v);
    return mo.variance();
}

double derivative_impurity(std::span<const double> derivs, std::span<const double> sigma) {
    const std::size_t d = sigma.size();
    if (d == 0 || derivs.empty()) return 0.0;
    const std::size_t n = derivs.size() / d;
    double total = 0.0;
    std::vector<double> column(n);
    for (std::size_t f = 0; f < d; ++f) {
        if (!(sigma[f] > 0.0)) continue;
        for (std::size_t i = 0; i < n; ++i) column[i] = derivs[i * d + f];
        total += variance(column) / sigma[f];
    }
    return total;
}

double partition_quality(double parent_impurity, ChannelSide left, ChannelSide right) {
    const double n = left.count + right.count;
    if (n <= 0.0) return 0.0;
    return parent_impurity - (left.impurity * left.count + right.impurity * right.count) / n;
}

double hybrid_quality(const ImpurityTriple& quality, const ImpurityTriple& root, const Theta& theta) {
    double q = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        if (root[c] > 0.0 && theta[c] > 0.0) q += theta[c] * quality[c] / root[c];
    }
    return q;
}

ImpurityTriple node_impurity(const AugmentedDataset& data, std::span<const std::size_t> samples) {
    auto stats = make_stats(data, samples);
    for (std::size_t i : samples) stats.add(data, i);
    return stats.impurity(data);
}

std::optional<SplitCandidate> best_split(const AugmentedDataset& data, std::span<const std::size_t> samples,
                                         const ImpurityTriple& root, const Theta& theta, std::size_t min_leaf) {
    const std::size_t n = samples.size();
    min_leaf = std::max<std::size_t>(min_leaf, 1);
    if (n < 2 * min_leaf) return std::nullopt;

    ChannelStats total = make_stats(data, samples);
    const ChannelStats empty = total;
    for (std::size_t i : samples) total.add(data, i);
    const ImpurityTriple parent = total.impurity(data);

    std::optional<SplitCandidate> best;
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t f = 0; f < data.d; ++f) {
        for (std::size_t k = 0; k < n; ++k) order[k] = {data.feature(samples[k], f), samples[k]};
        std::sort(order.begin(), order.end());
        if (order.front().first == order.back().first) continue;

        ChannelStats left = empty;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            left.add(data, order[k].second);
            const double x0 = order[k].first;
            const double x1 = order[k + 1].first;
            if (x0 == x1) continue;
            const std::size_t nl = k + 1;
            const std::size_t nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;

            const ChannelStats right = total.minus(left);
            const ImpurityTriple il = left.impurity(data);
            const ImpurityTriple ir = right.impurity(data);
            ImpurityTriple q;
            for (std::size_t c = 0; c < 3; ++c) {
                q[c] = partition_quality(parent[c], {il[c], static_cast<double>(nl)}, {ir[c], static_cast<double>(nr)});
            }
            const double hq = hybrid_quality(q, root, theta);
            if (!best || hq > best->hybrid_quality + kGainTolerance) {
                double tau = 0.5 * (x0 + x1);
                if (!(tau > x0)) tau = x1;
                best = SplitCandidate{f, tau, q, hq, nl, nr};
            }
        }
    }
    if (!best || !(best->hybrid_quality > kGainTolerance)) return std::nullopt;
    return best;
}

}  // namespace tripletree
