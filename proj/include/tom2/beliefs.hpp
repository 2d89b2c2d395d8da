// beliefs.hpp -- finite distributions, Bayesian updates and information measures.
//
// Everything here is exact enumeration over small index spaces. All sums run in
// index order so results are bit-reproducible regardless of who calls them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tom2/error.hpp"

namespace tom2 {

/// Probabilities below this after normalization are set to exactly zero, so an
/// eliminated hypothesis can never come back through rounding.
inline constexpr double kProbabilityFloor = 1e-15;

/// Normalization tolerance promised by every Distribution.
inline constexpr double kNormTolerance = 1e-9;

class Distribution {
public:
    Distribution() = default;

    static Distribution uniform(std::size_t n)
    {
        if (n == 0) throw std::invalid_argument("distribution support must be non-empty");
        return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static Distribution point_mass(std::size_t n, std::size_t at)
    {
        if (at >= n) throw std::invalid_argument("point mass index out of range");
        std::vector<double> w(n, 0.0);
        w[at] = 1.0;
        return Distribution(std::move(w));
    }

    /// Normalizes non-negative weights. Throws ZeroEvidence when they sum to zero.
    static Distribution normalize(std::vector<double> weights)
    {
        if (weights.empty()) throw std::invalid_argument("distribution support must be non-empty");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and non-negative");
            total += w;
        }
        if (!(total > 0.0)) throw Error(ErrorCode::ZeroEvidence, "all hypotheses have zero weight");
        bool clamped = false;
        for (double& w : weights) {
            w /= total;
            if (w > 0.0 && w < kProbabilityFloor) {
                w = 0.0;
                clamped = true;
            }
        }
        if (clamped) {
            total = 0.0;
            for (double w : weights) total += w;
            for (double& w : weights) w /= total;
        }
        return Distribution(std::move(weights));
    }

    /// Adopts already-normalized probabilities (e.g. read back from a log).
    static Distribution from_probabilities(std::vector<double> p)
    {
        if (p.empty()) throw std::invalid_argument("distribution support must be non-empty");
        double total = 0.0;
        for (double w : p) {
            if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
            total += w;
        }
        if (std::abs(total - 1.0) > kNormTolerance) throw std::invalid_argument("probabilities do not sum to 1");
        return Distribution(std::move(p));
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    auto begin() const noexcept { return weights_.begin(); }
    auto end() const noexcept { return weights_.end(); }

    /// First index of maximal probability.
    std::size_t argmax() const noexcept
    {
        return static_cast<std::size_t>(std::max_element(weights_.begin(), weights_.end()) - weights_.begin());
    }

    double max() const noexcept { return weights_.empty() ? 0.0 : weights_[argmax()]; }

    friend bool operator==(const Distribution&, const Distribution&) = default;

private:
    explicit Distribution(std::vector<double> w) : weights_(std::move(w)) {}

    std::vector<double> weights_;
};

/// Boltzmann temperature. Small beta is near-rational, large beta near-uniform.
struct SoftmaxParams {
    double beta = 1.0;

    explicit SoftmaxParams(double b) : beta(b)
    {
        if (!(b > 0.0) || !std::isfinite(b))
            throw Error(ErrorCode::InvalidConfig, "temperature must be finite and positive", "beta");
    }
};

/// Row-major [outcome x hypothesis] table of P(outcome | hypothesis).
struct LikelihoodMatrix {
    std::size_t outcomes = 0;
    std::size_t hypotheses = 0;
    std::vector<double> values;

    LikelihoodMatrix(std::size_t rows, std::size_t cols) : outcomes(rows), hypotheses(cols), values(rows * cols, 0.0) {}

    double& at(std::size_t o, std::size_t h) { return values[o * hypotheses + h]; }
    double at(std::size_t o, std::size_t h) const { return values[o * hypotheses + h]; }
    std::span<const double> row(std::size_t o) const { return {values.data() + o * hypotheses, hypotheses}; }
};

inline Distribution bayes_update(const Distribution& prior, std::span<const double> likelihood)
{
    if (likelihood.size() != prior.size()) throw std::invalid_argument("likelihood length differs from prior");
    std::vector<double> w(prior.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = prior[i] * likelihood[i];
    return Distribution::normalize(std::move(w));
}

/// Shannon entropy in bits.
inline double entropy(const Distribution& d)
{
    double h = 0.0;
    for (double p : d)
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

/// Mutual information between the hypothesis and one observed outcome, in bits.
/// Outcomes with zero marginal probability contribute nothing.
inline double expected_info_gain(const Distribution& prior, const LikelihoodMatrix& outcome_likelihoods)
{
    if (outcome_likelihoods.hypotheses != prior.size())
        throw std::invalid_argument("likelihood matrix width differs from prior");
    double expected_posterior_entropy = 0.0;
    for (std::size_t o = 0; o < outcome_likelihoods.outcomes; ++o) {
        const auto row = outcome_likelihoods.row(o);
        double marginal = 0.0;
        for (std::size_t h = 0; h < row.size(); ++h) marginal += prior[h] * row[h];
        if (!(marginal > 0.0)) continue;
        double h_post = 0.0;
        for (std::size_t h = 0; h < row.size(); ++h) {
            const double q = prior[h] * row[h] / marginal;
            if (q > 0.0) h_post -= q * std::log2(q);
        }
        expected_posterior_entropy += marginal * h_post;
    }
    return entropy(prior) - expected_posterior_entropy;
}

/// p_i proportional to exp(score_i / beta), shifted by the max score before exponentiating.
inline Distribution softmax_policy(std::span<const double> scores, SoftmaxParams params)
{
    if (scores.empty()) throw std::invalid_argument("softmax needs at least one score");
    double top = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("softmax scores must be finite");
        top = std::max(top, s);
    }
    std::vector<double> w(scores.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp((scores[i] - top) / params.beta);
    return Distribution::normalize(std::move(w));
}

/// KL(p || q) in bits. Throws DivergentSupport if p has mass where q has none.
inline double kl_divergence(const Distribution& p, const Distribution& q)
{
    if (p.size() != q.size()) throw std::invalid_argument("distributions differ in support size");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0)
            throw Error(ErrorCode::DivergentSupport, "p has mass at index " + std::to_string(i) + " where q has none");
        d += p[i] * std::log2(p[i] / q[i]);
    }
    return d;
}

} // namespace tom2
