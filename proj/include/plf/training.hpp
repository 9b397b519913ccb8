#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plf/autodiff.hpp"
#include "plf/bayes.hpp"
#include "plf/dataset.hpp"
#include "plf/errors.hpp"
#include "plf/mdn.hpp"
#include "plf/network.hpp"
#include "plf/rng.hpp"
#include "plf/tensor.hpp"

namespace plf {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 512;
    std::size_t max_epochs = 10000;
    std::size_t patience = 50;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (lr <= 0 || batch_size == 0 || max_epochs == 0 || patience == 0)
            throw ContractError("TrainConfig: all fields must be positive");
        if (patience >= max_epochs) throw ContractError("TrainConfig: patience < max_epochs required");
    }
};

struct EpochRecord {
    double train_loss;
    double val_loss;
};

struct TrainedModel {
    ModelSpec spec;
    Network net;
    std::vector<Scaler> input_scalers;
    Scaler target_scaler;
    std::optional<double> sigma_y;  // gauss-homo only
    std::vector<EpochRecord> history;
};

// ---------------------------------------------------------------------------
// Graph assembly
// ---------------------------------------------------------------------------

/// One leaf Var per entry of Network::parameters(), plus the assembled
/// batched head output.
struct ForwardGraph {
    std::vector<ad::Var> param_leaves;
    ad::Var head;                      // B x head_width
    std::vector<ad::Var> layer_weights;  // effective (possibly sampled) W, b per layer
};

/// Per-parameter standard-normal noise, one tensor per Network parameter slot
/// (zeros on loc slots' partners are ignored for deterministic nets).
inline std::vector<Tensor> draw_eps(const Network& net, Rng& rng) {
    std::vector<Tensor> eps;
    if (!net.spec.bayesian()) return eps;
    for (const auto& l : net.bay) {
        Tensor eW = Tensor::zeros(l.W.loc.shape);
        for (double& v : eW.data) v = rng.normal();
        Tensor eb = Tensor::zeros(l.b.loc.shape);
        for (double& v : eb.data) v = rng.normal();
        eps.push_back(std::move(eW));
        eps.push_back(std::move(eb));
    }
    return eps;
}

inline std::vector<Tensor> zero_eps(const Network& net) {
    std::vector<Tensor> eps;
    if (!net.spec.bayesian()) return eps;
    for (const auto& l : net.bay) {
        eps.push_back(Tensor::zeros(l.W.loc.shape));
        eps.push_back(Tensor::zeros(l.b.loc.shape));
    }
    return eps;
}

/// Build the batched forward graph for inputs X (B x n_x). For bayesian nets
/// `eps` holds one frozen noise tensor per layer weight/bias (from draw_eps).
inline ForwardGraph forward_graph(ad::Tape& t, Network& net, const Tensor& X,
                                  const std::vector<Tensor>& eps) {
    if (X.rank() != 2 || X.cols() != net.n_inputs)
        throw DimensionError("forward: inputs " + X.shape_str() + " do not match n_x=" +
                             std::to_string(net.n_inputs));
    ForwardGraph g;
    ad::Var h = t.leaf(X);
    std::size_t n_layers = net.n_layers();
    for (std::size_t l = 0; l < n_layers; ++l) {
        ad::Var W, b;
        if (net.spec.bayesian()) {
            auto& bl = net.bay[l];
            ad::Var locW = t.leaf(bl.W.loc), rhoW = t.leaf(bl.W.pre_scale);
            ad::Var locB = t.leaf(bl.b.loc), rhoB = t.leaf(bl.b.pre_scale);
            g.param_leaves.insert(g.param_leaves.end(), {locW, rhoW, locB, rhoB});
            W = ad::add(t, locW, ad::mul_const(t, ad::softplus(t, rhoW), eps[2 * l]));
            b = ad::add(t, locB, ad::mul_const(t, ad::softplus(t, rhoB), eps[2 * l + 1]));
        } else {
            auto& dl = net.det[l];
            W = t.leaf(dl.W);
            b = t.leaf(dl.b);
            g.param_leaves.insert(g.param_leaves.end(), {W, b});
        }
        g.layer_weights.insert(g.layer_weights.end(), {W, b});
        h = ad::add_rowvec(t, ad::matmul_rt(t, h, W), b);
        if (l + 1 < n_layers) h = ad::relu(t, h);
    }
    g.head = h;
    return g;
}

/// Mean over the batch of -log p(y|x) for the mixture head (Gaussian kernels,
/// softmax weights, ELU+1 scales).
inline ad::Var mixture_nll_graph(ad::Tape& t, const ModelSpec& spec, ad::Var head,
                                 const std::vector<double>& y) {
    std::size_t k = spec.components();
    ad::Var y_node = t.leaf(Tensor::vec(y));
    ad::Var means = ad::slice_cols(t, head, 0, k);
    ad::Var wlog = ad::slice_cols(t, head, k, k);
    ad::Var slog = ad::slice_cols(t, head, 2 * k, k);
    ad::Var sigma = ad::elu_plus_one(t, slog, spec.head.psi, spec.head.eps_floor);
    ad::Var log_alpha = ad::sub_col(t, wlog, ad::logsumexp_rows(t, wlog));
    ad::Var z = ad::div(t, ad::sub_col(t, means, y_node), sigma);
    ad::Var log_phi = ad::add_scalar(
        t,
        ad::sub(t, ad::scale(t, ad::square(t, z), -0.5), ad::log_(t, sigma)),
        -0.5 * std::log(kTwoPi));
    ad::Var log_p = ad::logsumexp_rows(t, ad::add(t, log_alpha, log_phi));
    return ad::neg(t, ad::mean_all(t, log_p));
}

/// gauss-homo training loss: unit variance in standardized space, so the NLL
/// reduces to 0.5 (f - y)^2 + 0.5 log 2 pi per sample.
inline ad::Var homo_nll_graph(ad::Tape& t, ad::Var head, const std::vector<double>& y) {
    ad::Var y_node = t.leaf(Tensor::vec(y));
    ad::Var diff = ad::sub_col(t, head, y_node);
    return ad::add_scalar(t, ad::scale(t, ad::mean_all(t, ad::square(t, diff)), 0.5),
                          0.5 * std::log(kTwoPi));
}

inline ad::Var data_nll_graph(ad::Tape& t, const ModelSpec& spec, ad::Var head,
                              const std::vector<double>& y) {
    return spec.gauss_homo() ? homo_nll_graph(t, head, y) : mixture_nll_graph(t, spec, head, y);
}

/// l2_penalty * sum over all effective parameters of w^2.
inline ad::Var l2_graph(ad::Tape& t, const ForwardGraph& g, double penalty) {
    ad::Var acc = t.leaf(Tensor::scalar(0.0));
    for (ad::Var w : g.layer_weights) acc = ad::add(t, acc, ad::sum_all(t, ad::square(t, w)));
    return ad::scale(t, acc, penalty);
}

struct LossGraph {
    ForwardGraph fwd;
    ad::Var loss;
    double data_nll;  // value of the data term alone
};

/// Full training objective on one batch. Deterministic variants: NLL + L2.
/// Bayesian: NLL under the frozen eps draw + temperature * KL / dataset_size.
inline LossGraph loss_graph(ad::Tape& t, Network& net, const Tensor& X,
                            const std::vector<double>& y, const std::vector<Tensor>& eps,
                            std::size_t dataset_size) {
    LossGraph lg;
    lg.fwd = forward_graph(t, net, X, eps);
    ad::Var nll = data_nll_graph(t, net.spec, lg.fwd.head, y);
    lg.data_nll = t.value(nll)[0];
    if (net.spec.bayesian()) {
        ad::Var kl = t.leaf(Tensor::scalar(0.0));
        for (std::size_t l = 0; l < net.bay.size(); ++l) {
            ad::Var locW = lg.fwd.param_leaves[4 * l + 0], rhoW = lg.fwd.param_leaves[4 * l + 1];
            ad::Var locB = lg.fwd.param_leaves[4 * l + 2], rhoB = lg.fwd.param_leaves[4 * l + 3];
            kl = ad::add(t, kl, kl_mean_field_graph(t, locW, rhoW));
            kl = ad::add(t, kl, kl_mean_field_graph(t, locB, rhoB));
        }
        double w = net.spec.temperature / static_cast<double>(dataset_size);
        lg.loss = ad::add(t, nll, ad::scale(t, kl, w));
    } else if (net.spec.l2_penalty > 0.0) {
        lg.loss = ad::add(t, nll, l2_graph(t, lg.fwd, net.spec.l2_penalty));
    } else {
        lg.loss = nll;
    }
    return lg;
}

// ---------------------------------------------------------------------------
// Scalar loss wrappers (also the public contract used by tests)
// ---------------------------------------------------------------------------

inline Tensor gather_rows(const SupervisedSet& ds, const std::vector<std::size_t>& idx) {
    std::size_t c = ds.inputs.cols();
    Tensor X = Tensor::zeros({idx.size(), c});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) X.at(r, j) = ds.inputs.at(idx[r], j);
    return X;
}

inline std::vector<double> gather_targets(const SupervisedSet& ds,
                                          const std::vector<std::size_t>& idx) {
    std::vector<double> y(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) y[r] = ds.targets[idx[r]];
    return y;
}

/// Deterministic-variant batch loss (mean NLL plus L2 penalty).
inline double nll_loss(Network& net, const Tensor& X, const std::vector<double>& y) {
    if (y.empty()) throw ContractError("nll_loss: empty batch");
    ad::Tape t;
    auto lg = loss_graph(t, net, X, y, zero_eps(net), std::max<std::size_t>(y.size(), 1));
    return t.value(lg.loss)[0];
}

/// Bayesian batch loss under one frozen reparametrization draw:
/// mean NLL + tau * KL / N.
inline double tempered_elbo_loss(Network& net, const Tensor& X, const std::vector<double>& y,
                                 double tau, std::size_t dataset_size,
                                 const std::vector<Tensor>& eps) {
    if (!net.spec.bayesian()) throw ContractError("tempered_elbo_loss: model is not bayesian");
    if (dataset_size < y.size()) throw ContractError("tempered_elbo_loss: N >= batch size required");
    double saved = net.spec.temperature;
    net.spec.temperature = tau;
    ad::Tape t;
    auto lg = loss_graph(t, net, X, y, eps, dataset_size);
    net.spec.temperature = saved;
    if (tau == 0.0) return lg.data_nll;
    return t.value(lg.loss)[0];
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;

    static AdamState init(const std::vector<Tensor*>& params) {
        AdamState s;
        for (const Tensor* p : params) {
            s.m.push_back(Tensor::zeros(p->shape));
            s.v.push_back(Tensor::zeros(p->shape));
        }
        return s;
    }
};

/// Standard bias-corrected ADAM update, in place.
inline void adam_step(AdamState& state, std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient count mismatch");
    state.t += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        const Tensor& g = grads[p];
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            double& m = state.m[p][i];
            double& v = state.v[p][i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m / bc1;
            double vhat = v / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Validation metric and the training loop
// ---------------------------------------------------------------------------

/// Mean NLL over a split, at the posterior-mean weights for bayesian models.
inline double validation_nll(const Network& net, const SupervisedSet& ds, std::size_t begin,
                             std::size_t end, std::optional<double> sigma_homo = std::nullopt) {
    if (begin >= end) throw ContractError("validation_nll: empty split");
    auto weights = snapshot_weights(net, nullptr);
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        Tensor head = forward_raw(weights, ds.input_row(i));
        MixtureParams p = head_to_params(net.spec, head, sigma_homo);
        acc += -mixture_log_density(p, ds.targets[i]);
    }
    return acc / static_cast<double>(end - begin);
}

/// sqrt mean squared residual of the mean prediction on the validation split,
/// floored at eps_floor.
inline double estimate_validation_sigma(const Network& net, const SupervisedSet& ds) {
    if (ds.n_val == 0) throw ContractError("estimate_validation_sigma: empty validation set");
    auto weights = snapshot_weights(net, nullptr);
    double acc = 0.0;
    for (std::size_t i = ds.val_begin(); i < ds.val_end(); ++i) {
        Tensor head = forward_raw(weights, ds.input_row(i));
        double r = head[0] - ds.targets[i];
        acc += r * r;
    }
    double sigma = std::sqrt(acc / static_cast<double>(ds.n_val));
    return std::max(sigma, net.spec.head.eps_floor);
}

inline std::vector<Tensor> clone_params(const Network& net) {
    std::vector<Tensor> out;
    for (const Tensor* p : net.parameters()) out.push_back(*p);
    return out;
}

inline void restore_params(Network& net, const std::vector<Tensor>& saved) {
    auto ps = net.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] = saved[i];
}

/// Minibatch training with per-epoch shuffling, early stopping on the
/// validation NLL, and best-epoch parameter restoration.
inline TrainedModel train(const ModelSpec& spec, const SupervisedSet& data, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (data.n_train == 0 || data.n_val == 0)
        throw ContractError("train: need non-empty train and validation splits");

    Rng init_rng(derive_seed(cfg.seed, 1));
    Rng shuffle_rng(derive_seed(cfg.seed, 2));
    Rng noise_rng(derive_seed(cfg.seed, 3));

    TrainedModel model;
    model.spec = spec;
    model.net = init_network(spec, data.n_features(), init_rng);
    model.input_scalers = data.input_scalers;
    model.target_scaler = data.target_scaler;

    auto params = model.net.parameters();
    AdamState adam = AdamState::init(params);

    std::vector<std::size_t> order(data.n_train);
    std::iota(order.begin(), order.end(), data.train_begin());

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params = clone_params(model.net);
    std::size_t bad_epochs = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            Tensor X = gather_rows(data, idx);
            std::vector<double> y = gather_targets(data, idx);

            ad::Tape t;
            std::vector<Tensor> eps =
                spec.bayesian() ? draw_eps(model.net, noise_rng) : std::vector<Tensor>{};
            auto lg = loss_graph(t, model.net, X, y, eps, data.n_train);
            double loss_val = t.value(lg.loss)[0];
            if (!std::isfinite(loss_val))
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / cfg.batch_size));
            epoch_loss += loss_val * static_cast<double>(idx.size());
            seen += idx.size();

            ad::GradientMap grads = t.backward(lg.loss);
            std::vector<Tensor> g;
            g.reserve(params.size());
            for (std::size_t p = 0; p < params.size(); ++p)
                g.push_back(grads.get_or_zero(lg.fwd.param_leaves[p], params[p]->shape));
            adam_step(adam, params, g, cfg);
        }
        epoch_loss /= static_cast<double>(seen);

        double val = validation_nll(model.net, data, data.val_begin(), data.val_end());
        model.history.push_back({epoch_loss, val});

        if (val < best_val) {
            best_val = val;
            best_params = clone_params(model.net);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if (bad_epochs >= cfg.patience) break;
        }
    }

    restore_params(model.net, best_params);
    if (spec.gauss_homo()) model.sigma_y = estimate_validation_sigma(model.net, data);
    return model;
}

/// One posterior/parameter evaluation of the mixture head for a standardized
/// input; bayesian models take one weight draw per call when rng is given.
inline MixtureParams forward(const TrainedModel& m, const std::vector<double>& x_std,
                             Rng* rng = nullptr) {
    auto weights = snapshot_weights(m.net, rng);
    Tensor head = forward_raw(weights, x_std);
    return head_to_params(m.spec, head, m.sigma_y);
}

}  // namespace plf
