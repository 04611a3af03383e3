#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tripletree/dataset.hpp"

namespace tripletree {

/// Per-channel impurity: action, value, derivative.
struct ImpurityTriple {
    double action = 0.0;
    double value = 0.0;
    double derivative = 0.0;

    double operator[](std::size_t c) const { return c == 0 ? action : (c == 1 ? value : derivative); }
    double& operator[](std::size_t c) { return c == 0 ? action : (c == 1 ? value : derivative); }
    bool operator==(const ImpurityTriple&) const = default;
};

/// Non-negative channel weights with a positive sum.
class Theta {
public:
    Theta() = default;
    Theta(double action, double value, double derivative);

    /// Parses "a,v,d".
    static Theta parse(const std::string& text);

    double operator[](std::size_t c) const { return w_[c]; }
    const std::array<double, 3>& weights() const { return w_; }
    std::string to_string() const;
    bool operator==(const Theta&) const = default;

private:
    std::array<double, 3> w_{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

// Gains at or below this are treated as no improvement.
inline constexpr double kGainTolerance = 1e-12;

/// Gini impurity 1 - sum p^2 of a label histogram; 0 for an empty set.
double gini(std::span<const std::size_t> counts);

/// Population variance, computed from shifted running moments.
double variance(std::span<const double> values);

/// Sum over features of the per-feature derivative variance divided by sigma.
/// `derivs` is row-major with sigma.size() columns. Zero-sigma features are skipped.
double derivative_impurity(std::span<const double> derivs, std::span<const double> sigma);

struct ChannelSide {
    double impurity = 0.0;
    double count = 0.0;
};

/// I_parent - (I_left n_left + I_right n_right) / (n_left + n_right).
double partition_quality(double parent_impurity, ChannelSide left, ChannelSide right);

/// Root-normalised, theta-weighted combination of per-channel qualities.
double hybrid_quality(const ImpurityTriple& quality, const ImpurityTriple& root, const Theta& theta);

/// Running moments of a scalar, shifted by a reference value for stability.
class Moments {
public:
    explicit Moments(double shift = 0.0) : shift_(shift) {}

    void add(double x) {
        const double y = x - shift_;
        ++n_;
        s1_ += y;
        s2_ += y * y;
    }
    void remove(double x) {
        const double y = x - shift_;
        --n_;
        s1_ -= y;
        s2_ -= y * y;
    }
    double count() const { return n_; }
    double variance() const;
    Moments operator-(const Moments& o) const {
        Moments r(shift_);
        r.n_ = n_ - o.n_;
        r.s1_ = s1_ - o.s1_;
        r.s2_ = s2_ - o.s2_;
        return r;
    }

private:
    double shift_;
    double n_ = 0.0;
    double s1_ = 0.0;
    double s2_ = 0.0;
};

/// Impurity of every channel over a subset of samples.
ImpurityTriple node_impurity(const AugmentedDataset& data, std::span<const std::size_t> samples);

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    ImpurityTriple quality;
    double hybrid_quality = 0.0;
    std::size_t left_count = 0;
    std::size_t right_count = 0;
};

/// Exhaustive axis-aligned split search over midpoints of consecutive
/// distinct feature values. Returns nothing when no split has positive
/// hybrid quality. Ties go to the lowest feature, then the lowest threshold.
std::optional<SplitCandidate> best_split(const AugmentedDataset& data, std::span<const std::size_t> samples,
                                         const ImpurityTriple& root, const Theta& theta, std::size_t min_leaf = 1);

}  // namespace tripletree
