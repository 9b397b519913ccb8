#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "plf/errors.hpp"
#include "plf/rng.hpp"
#include "plf/tensor.hpp"

namespace plf {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Gaussian-mixture output layer configuration. psi is the ELU
/// negative-branch scale, eps_floor the additive variance offset.
struct HeadConfig {
    std::size_t n_k = 3;
    double psi = 0.2;
    double eps_floor = 1e-8;
};

/// Per-input mixture parameterization: simplex weights, means and positive
/// scales, one entry per component.
struct MixtureParams {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> scales;

    std::size_t n_components() const { return weights.size(); }
};

/// 1 + ELU_psi(z) + eps_floor; strictly positive since psi < 1.
inline double elu_plus_one(double z, double psi, double eps_floor) {
    return z >= 0.0 ? 1.0 + z + eps_floor : 1.0 + psi * std::expm1(z) + eps_floor;
}

/// Max-shifted softmax over logits.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ContractError("softmax: empty logits");
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        s += out[i];
    }
    for (double& v : out) v /= s;
    return out;
}

/// Max-shifted log-sum-exp over a vector of log terms.
inline double logsumexp(const std::vector<double>& xs) {
    if (xs.empty()) throw ContractError("logsumexp: empty input");
    double mx = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

/// Partition a raw head vector [means | weight-logits | scale-logits] into
/// constrained mixture parameters.
inline MixtureParams split_head(const Tensor& h, const HeadConfig& cfg) {
    if (h.numel() != 3 * cfg.n_k)
        throw DimensionError("split_head: expected length " + std::to_string(3 * cfg.n_k) +
                             ", got " + h.shape_str());
    std::size_t k = cfg.n_k;
    MixtureParams p;
    p.means.assign(h.data.begin(), h.data.begin() + k);
    p.weights = softmax({h.data.begin() + k, h.data.begin() + 2 * k});
    p.scales.resize(k);
    for (std::size_t i = 0; i < k; ++i)
        p.scales[i] = elu_plus_one(h.data[2 * k + i], cfg.psi, cfg.eps_floor);
    return p;
}

inline double normal_log_density(double y, double mu, double sigma) {
    double z = (y - mu) / sigma;
    return -0.5 * std::log(kTwoPi) - std::log(sigma) - 0.5 * z * z;
}

/// log sum_k alpha_k phi_k(y), evaluated via log-sum-exp.
inline double mixture_log_density(const MixtureParams& p, double y) {
    std::vector<double> terms(p.n_components());
    for (std::size_t k = 0; k < terms.size(); ++k)
        terms[k] = std::log(p.weights[k]) + normal_log_density(y, p.means[k], p.scales[k]);
    return logsumexp(terms);
}

/// Categorical pick by inverse CDF on cumulative weights, ties toward the
/// lower index.
inline std::size_t sample_component(const MixtureParams& p, Rng& rng) {
    double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k + 1 < p.n_components(); ++k) {
        cum += p.weights[k];
        if (u < cum) return k;
    }
    return p.n_components() - 1;
}

/// Ancestral sampling: component by categorical pick, then a normal draw.
inline std::vector<double> mixture_sample(const MixtureParams& p, Rng& rng, std::size_t m) {
    if (m < 1) throw ContractError("mixture_sample: need m >= 1");
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t k = sample_component(p, rng);
        out[i] = rng.normal(p.means[k], p.scales[k]);
    }
    return out;
}

/// Order statistics by linear interpolation; qs must lie in the open (0,1).
inline std::vector<double> empirical_quantiles(std::vector<double> samples,
                                               const std::vector<double>& qs) {
    if (samples.empty()) throw ContractError("empirical_quantiles: empty samples");
    for (double q : qs)
        if (!(q > 0.0 && q < 1.0))
            throw ContractError("empirical_quantiles: q=" + std::to_string(q) +
                                " outside the open interval (0,1)");
    std::sort(samples.begin(), samples.end());
    std::vector<double> out(qs.size());
    std::size_t n = samples.size();
    for (std::size_t i = 0; i < qs.size(); ++i) {
        double pos = qs[i] * static_cast<double>(n - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, n - 1);
        double frac = pos - static_cast<double>(lo);
        out[i] = samples[lo] + frac * (samples[hi] - samples[lo]);
    }
    return out;
}

}  // namespace plf
