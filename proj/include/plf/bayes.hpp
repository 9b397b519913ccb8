#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "plf/autodiff.hpp"
#include "plf/errors.hpp"
#include "plf/rng.hpp"
#include "plf/tensor.hpp"

namespace plf {

/// Factorized-Gaussian posterior over one weight tensor. The per-weight std
/// is softplus(pre_scale), positive for any finite pre_scale.
struct VariationalParams {
    Tensor loc;
    Tensor pre_scale;
};

/// Per-weight Gaussian prior; the library fixes it at N(0,1).
struct PriorSpec {
    double mean = 0.0;
    double std = 1.0;
};

inline double inv_softplus(double y) { return std::log(std::expm1(y)); }

inline Tensor posterior_std(const VariationalParams& q) {
    Tensor s = q.pre_scale;
    for (double& v : s.data) v = ad::softplus_val(v);
    return s;
}

/// loc + softplus(pre_scale) * eps with eps ~ N(0,I). A null eps tensor is
/// the deterministic test hook (eps forced to 0).
inline Tensor reparam_sample(const VariationalParams& q, Rng& rng) {
    require_same_shape(q.loc, q.pre_scale, "reparam_sample");
    Tensor out = q.loc;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] += ad::softplus_val(q.pre_scale[i]) * rng.normal();
    return out;
}

inline Tensor reparam_sample_with(const VariationalParams& q, const Tensor& eps) {
    require_same_shape(q.loc, q.pre_scale, "reparam_sample");
    require_same_shape(q.loc, eps, "reparam_sample eps");
    Tensor out = q.loc;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] += ad::softplus_val(q.pre_scale[i]) * eps[i];
    return out;
}

/// Closed-form KL(q || N(mean, std^2)) for a factorized Gaussian q; >= 0,
/// zero iff q equals the prior.
inline double kl_mean_field(const VariationalParams& q, const PriorSpec& p = {}) {
    require_same_shape(q.loc, q.pre_scale, "kl_mean_field");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.loc.numel(); ++i) {
        double s = ad::softplus_val(q.pre_scale[i]);
        double d = q.loc[i] - p.mean;
        // written as log(p.std) - log(s) so the value matches the graph
        // version bit for bit under the standard-normal prior
        kl += (std::log(p.std) - std::log(s)) + (s * s + d * d) / (2.0 * p.std * p.std) - 0.5;
    }
    return kl;
}

/// Graph version of kl_mean_field for the standard-normal prior, used inside
/// the ELBO loss so gradients reach loc and pre_scale.
inline ad::Var kl_mean_field_graph(ad::Tape& t, ad::Var loc, ad::Var pre_scale) {
    ad::Var s = ad::softplus(t, pre_scale);
    ad::Var neg_log_s = ad::neg(t, ad::log_(t, s));
    ad::Var quad = ad::scale(t, ad::add(t, ad::square(t, s), ad::square(t, loc)), 0.5);
    ad::Var per_weight = ad::add_scalar(t, ad::add(t, neg_log_s, quad), -0.5);
    return ad::sum_all(t, per_weight);
}

/// Xavier-uniform locations; pre_scale constant so the initial posterior std
/// is init_std for every weight.
inline VariationalParams variational_init(const std::vector<std::size_t>& shape,
                                          std::size_t fan_in, std::size_t fan_out, Rng& rng,
                                          double init_std = 0.01) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    VariationalParams q;
    q.loc = Tensor::zeros(shape);
    for (double& v : q.loc.data) v = rng.uniform(-bound, bound);
    q.pre_scale = Tensor::full(shape, inv_softplus(init_std));
    return q;
}

}  // namespace plf
