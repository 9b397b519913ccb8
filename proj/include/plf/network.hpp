#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "plf/autodiff.hpp"
#include "plf/bayes.hpp"
#include "plf/errors.hpp"
#include "plf/mdn.hpp"
#include "plf/rng.hpp"
#include "plf/tensor.hpp"

namespace plf {

enum class Variant { GaussHomo, GaussHete, DetMdn, BayMdn };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::GaussHomo: return "gauss-homo";
        case Variant::GaussHete: return "gauss-hete";
        case Variant::DetMdn: return "det-mdn";
        case Variant::BayMdn: return "bay-mdn";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "gauss-homo") return Variant::GaussHomo;
    if (s == "gauss-hete") return Variant::GaussHete;
    if (s == "det-mdn") return Variant::DetMdn;
    if (s == "bay-mdn") return Variant::BayMdn;
    throw ContractError("unknown variant: " + s);
}

struct ModelSpec {
    Variant variant = Variant::DetMdn;
    std::vector<std::size_t> hidden_sizes = {100, 100, 100};
    std::size_t n_k = 3;  // forced to 1 for the gauss variants
    double l2_penalty = 1e-2;   // deterministic variants only
    double temperature = 1e-2;  // bayesian only
    HeadConfig head;

    bool bayesian() const { return variant == Variant::BayMdn; }
    bool gauss_homo() const { return variant == Variant::GaussHomo; }

    std::size_t components() const {
        return (variant == Variant::GaussHomo || variant == Variant::GaussHete) ? 1 : n_k;
    }

    // gauss-homo predicts a mean only; other variants emit a full head
    std::size_t head_width() const { return gauss_homo() ? 1 : 3 * components(); }

    void validate() const {
        if (bayesian() && temperature <= 0.0)
            throw ContractError("bayesian variants need temperature > 0");
        if (head.n_k < 1) throw ContractError("need at least one mixture component");
        if (head.psi < 0.1 || head.psi > 0.3)
            throw ContractError("psi must lie in [0.1, 0.3]");
    }
};

struct DenseLayer {
    Tensor W;  // out x in
    Tensor b;  // out
};

struct BayesLayer {
    VariationalParams W;
    VariationalParams b;
};

/// Layer stack for one model; exactly one of det/bay is populated.
struct Network {
    ModelSpec spec;
    std::size_t n_inputs = 0;
    std::vector<DenseLayer> det;
    std::vector<BayesLayer> bay;

    std::size_t n_layers() const { return spec.bayesian() ? bay.size() : det.size(); }

    /// Flat list of trainable tensors, in a fixed serialization order:
    /// per layer W, b (deterministic) or W.loc, W.pre_scale, b.loc,
    /// b.pre_scale (bayesian).
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        if (spec.bayesian()) {
            for (auto& l : bay) {
                out.push_back(&l.W.loc);
                out.push_back(&l.W.pre_scale);
                out.push_back(&l.b.loc);
                out.push_back(&l.b.pre_scale);
            }
        } else {
            for (auto& l : det) {
                out.push_back(&l.W);
                out.push_back(&l.b);
            }
        }
        return out;
    }

    std::vector<const Tensor*> parameters() const {
        auto ps = const_cast<Network*>(this)->parameters();
        return {ps.begin(), ps.end()};
    }

    double total_kl() const {
        double kl = 0.0;
        // accumulation order matches the ELBO graph, keeping the two routes
        // bitwise identical
        for (const auto& l : bay) {
            kl += kl_mean_field(l.W);
            kl += kl_mean_field(l.b);
        }
        return kl;
    }
};

inline std::vector<std::size_t> layer_widths(const ModelSpec& spec, std::size_t n_inputs) {
    std::vector<std::size_t> widths;
    widths.push_back(n_inputs);
    for (auto h : spec.hidden_sizes) widths.push_back(h);
    widths.push_back(spec.head_width());
    return widths;
}

inline Network init_network(const ModelSpec& spec, std::size_t n_inputs, Rng& rng) {
    spec.validate();
    Network net;
    net.spec = spec;
    net.n_inputs = n_inputs;
    auto widths = layer_widths(spec, n_inputs);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        std::size_t fin = widths[l], fout = widths[l + 1];
        if (spec.bayesian()) {
            BayesLayer bl;
            bl.W = variational_init({fout, fin}, fin, fout, rng);
            bl.b = variational_init({fout}, fin, fout, rng);
            net.bay.push_back(std::move(bl));
        } else {
            double bound = std::sqrt(6.0 / static_cast<double>(fin + fout));
            DenseLayer dl;
            dl.W = Tensor::zeros({fout, fin});
            for (double& v : dl.W.data) v = rng.uniform(-bound, bound);
            dl.b = Tensor::zeros({fout});
            net.det.push_back(std::move(dl));
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// Plain (tape-free) forward path, used for prediction and validation scoring
// ---------------------------------------------------------------------------

/// Concrete weight snapshot of one network; for bayesian models this is one
/// posterior draw (or the loc point when rng is null).
inline std::vector<DenseLayer> snapshot_weights(const Network& net, Rng* rng) {
    if (!net.spec.bayesian()) return net.det;
    std::vector<DenseLayer> ws;
    ws.reserve(net.bay.size());
    for (const auto& l : net.bay) {
        DenseLayer d;
        if (rng) {
            d.W = reparam_sample(l.W, *rng);
            d.b = reparam_sample(l.b, *rng);
        } else {
            d.W = l.W.loc;
            d.b = l.b.loc;
        }
        ws.push_back(std::move(d));
    }
    return ws;
}

inline Tensor forward_raw(const std::vector<DenseLayer>& weights, const std::vector<double>& x) {
    Tensor h = Tensor::vec(x);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const auto& W = weights[l].W;
        const auto& b = weights[l].b;
        if (W.cols() != h.numel())
            throw DimensionError("forward: input length " + std::to_string(h.numel()) +
                                 " does not match layer expecting " + std::to_string(W.cols()));
        Tensor out = b;
        for (std::size_t i = 0; i < W.rows(); ++i) {
            const double* wrow = W.data.data() + i * W.cols();
            double acc = out[i];
            for (std::size_t j = 0; j < W.cols(); ++j) acc += wrow[j] * h[j];
            out[i] = acc;
        }
        if (l + 1 < weights.size())
            for (double& v : out.data) v = std::max(v, 0.0);
        h = std::move(out);
    }
    return h;
}

/// Head vector -> constrained mixture parameters in standardized space.
/// sigma_homo substitutes the head-free scale of the gauss-homo variant.
inline MixtureParams head_to_params(const ModelSpec& spec, const Tensor& head,
                                    std::optional<double> sigma_homo) {
    if (spec.gauss_homo()) {
        MixtureParams p;
        p.weights = {1.0};
        p.means = {head[0]};
        p.scales = {sigma_homo.value_or(1.0)};
        return p;
    }
    HeadConfig cfg = spec.head;
    cfg.n_k = spec.components();
    return split_head(head, cfg);
}

}  // namespace plf
