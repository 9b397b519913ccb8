#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plf/errors.hpp"
#include "plf/tensor.hpp"

namespace plf::ad {

/// Handle into a Tape. Cheap to copy; only meaningful with its owning tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Tape;

/// Per-leaf adjoints produced by Tape::backward. Absent leaf means zero
/// gradient.
class GradientMap {
public:
    const Tensor* find(Var v) const {
        auto it = grads_.find(v.id);
        return it == grads_.end() ? nullptr : &it->second;
    }

    Tensor get_or_zero(Var v, const std::vector<std::size_t>& shape) const {
        if (const Tensor* g = find(v)) return *g;
        return Tensor::zeros(shape);
    }

    void set(std::size_t id, Tensor g) { grads_[id] = std::move(g); }

private:
    std::unordered_map<std::size_t, Tensor> grads_;
};

/// Tape-based reverse-mode AD over Tensor-valued nodes. A tape is built per
/// minibatch and discarded after the step; it is single-threaded, but
/// independent tapes may run concurrently.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    Var leaf(Tensor v) { return make(std::move(v), nullptr); }

    Var make(Tensor v, BackwardFn fn) {
        nodes_.push_back(Node{std::move(v), std::move(fn)});
        return Var{nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulation target for node `id` during backward.
    Tensor& adjoint(std::size_t id) {
        if (!seen_[id]) {
            adjoints_[id] = Tensor::zeros(nodes_[id].value.shape);
            seen_[id] = true;
        }
        return adjoints_[id];
    }

    /// Reverse sweep from a scalar loss. The tape may be reused for further
    /// forward ops afterwards; adjoint state is reset on each call.
    GradientMap backward(Var loss) {
        const Tensor& lv = value(loss);
        if (lv.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + lv.shape_str());
        adjoints_.assign(nodes_.size(), Tensor{});
        seen_.assign(nodes_.size(), false);
        adjoint(loss.id) = Tensor::full(lv.shape, 1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (!seen_[i] || !nodes_[i].backward) continue;
            nodes_[i].backward(*this, adjoints_[i]);
        }
        GradientMap out;
        for (std::size_t i = 0; i <= loss.id; ++i)
            if (seen_[i] && !nodes_[i].backward) out.set(i, std::move(adjoints_[i]));
        adjoints_.clear();
        seen_.clear();
        return out;
    }

private:
    struct Node {
        Tensor value;
        BackwardFn backward;  // null for leaves and constants
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;
    std::vector<char> seen_;
};

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Var add(Tape& t, Var a, Var b) {
    const Tensor &av = t.value(a), &bv = t.value(b);
    require_same_shape(av, bv, "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return t.make(std::move(out), [a, b](Tape& tp, const Tensor& adj) {
        Tensor &ga = tp.adjoint(a.id), &gb = tp.adjoint(b.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            ga[i] += adj[i];
            gb[i] += adj[i];
        }
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    const Tensor &av = t.value(a), &bv = t.value(b);
    require_same_shape(av, bv, "sub");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return t.make(std::move(out), [a, b](Tape& tp, const Tensor& adj) {
        Tensor &ga = tp.adjoint(a.id), &gb = tp.adjoint(b.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            ga[i] += adj[i];
            gb[i] -= adj[i];
        }
    });
}

inline Var mul(Tape& t, Var a, Var b) {
    const Tensor &av = t.value(a), &bv = t.value(b);
    require_same_shape(av, bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return t.make(std::move(out), [a, b](Tape& tp, const Tensor& adj) {
        const Tensor &av2 = tp.value(a), &bv2 = tp.value(b);
        Tensor &ga = tp.adjoint(a.id), &gb = tp.adjoint(b.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            ga[i] += adj[i] * bv2[i];
            gb[i] += adj[i] * av2[i];
        }
    });
}

inline Var div(Tape& t, Var a, Var b) {
    const Tensor &av = t.value(a), &bv = t.value(b);
    require_same_shape(av, bv, "div");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= bv[i];
    return t.make(std::move(out), [a, b](Tape& tp, const Tensor& adj) {
        const Tensor &av2 = tp.value(a), &bv2 = tp.value(b);
        Tensor &ga = tp.adjoint(a.id), &gb = tp.adjoint(b.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            ga[i] += adj[i] / bv2[i];
            gb[i] -= adj[i] * av2[i] / (bv2[i] * bv2[i]);
        }
    });
}

inline Var scale(Tape& t, Var a, double c) {
    Tensor out = t.value(a);
    for (double& v : out.data) v *= c;
    return t.make(std::move(out), [a, c](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] * c;
    });
}

inline Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

inline Var add_scalar(Tape& t, Var a, double c) {
    Tensor out = t.value(a);
    for (double& v : out.data) v += c;
    return t.make(std::move(out), [a](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i];
    });
}

/// Elementwise product with a constant tensor (no gradient into the constant).
inline Var mul_const(Tape& t, Var a, Tensor c) {
    const Tensor& av = t.value(a);
    require_same_shape(av, c, "mul_const");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c[i];
    return t.make(std::move(out), [a, c = std::move(c)](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] * c[i];
    });
}

inline Var relu(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& v : out.data) v = std::max(v, 0.0);
    return t.make(std::move(out), [a](Tape& tp, const Tensor& adj) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.adjoint(a.id);
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < adj.numel(); ++i)
            if (av[i] > 0.0) ga[i] += adj[i];
    });
}

inline Var exp_(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& v : out.data) v = std::exp(v);
    Tensor cached = out;
    return t.make(std::move(out), [a, cached = std::move(cached)](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] * cached[i];
    });
}

inline Var log_(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& v : out.data) v = std::log(v);
    return t.make(std::move(out), [a](Tape& tp, const Tensor& adj) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] / av[i];
    });
}

inline Var square(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& v : out.data) v *= v;
    return t.make(std::move(out), [a](Tape& tp, const Tensor& adj) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] * 2.0 * av[i];
    });
}

inline double softplus_val(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline Var softplus(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& v : out.data) v = softplus_val(v);
    return t.make(std::move(out), [a](Tape& tp, const Tensor& adj) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-av[i]));
            ga[i] += adj[i] * s;
        }
    });
}

/// Variance activation 1 + ELU_psi(z) + eps; strictly positive for psi < 1.
inline Var elu_plus_one(Tape& t, Var a, double psi, double eps_floor) {
    Tensor out = t.value(a);
    for (double& v : out.data)
        v = v >= 0.0 ? 1.0 + v + eps_floor : 1.0 + psi * std::expm1(v) + eps_floor;
    return t.make(std::move(out), [a, psi](Tape& tp, const Tensor& adj) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.adjoint(a.id);
        for (std::size_t i = 0; i < adj.numel(); ++i) {
            double d = av[i] >= 0.0 ? 1.0 : psi * std::exp(av[i]);
            ga[i] += adj[i] * d;
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Wx + b for a single input vector x[n], W[m x n], b[m].
inline Var affine(Tape& t, Var x, Var W, Var b) {
    const Tensor &xv = t.value(x), &Wv = t.value(W), &bv = t.value(b);
    if (xv.rank() != 1 || Wv.rank() != 2 || bv.rank() != 1 || Wv.cols() != xv.numel() ||
        Wv.rows() != bv.numel())
        throw DimensionError("affine: incompatible shapes x=" + xv.shape_str() +
                             " W=" + Wv.shape_str() + " b=" + bv.shape_str());
    std::size_t m = Wv.rows(), n = Wv.cols();
    Tensor out = bv;
    for (std::size_t i = 0; i < m; ++i) {
        double acc = out[i];
        const double* wrow = Wv.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * xv[j];
        out[i] = acc;
    }
    return t.make(std::move(out), [x, W, b](Tape& tp, const Tensor& adj) {
        const Tensor &xv2 = tp.value(x), &Wv2 = tp.value(W);
        std::size_t m = Wv2.rows(), n = Wv2.cols();
        Tensor &gx = tp.adjoint(x.id), &gW = tp.adjoint(W.id), &gb = tp.adjoint(b.id);
        for (std::size_t i = 0; i < m; ++i) {
            double ai = adj[i];
            gb[i] += ai;
            const double* wrow = Wv2.data.data() + i * n;
            double* gwrow = gW.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                gx[j] += ai * wrow[j];
                gwrow[j] += ai * xv2[j];
            }
        }
    });
}

/// X[B x n] times W[m x n]^T -> [B x m]; the batched core of dense layers.
inline Var matmul_rt(Tape& t, Var X, Var W) {
    const Tensor &Xv = t.value(X), &Wv = t.value(W);
    if (Xv.rank() != 2 || Wv.rank() != 2 || Xv.cols() != Wv.cols())
        throw DimensionError("matmul_rt: incompatible shapes X=" + Xv.shape_str() +
                             " W=" + Wv.shape_str());
    std::size_t B = Xv.rows(), n = Xv.cols(), m = Wv.rows();
    Tensor out = Tensor::zeros({B, m});
    for (std::size_t r = 0; r < B; ++r) {
        const double* xrow = Xv.data.data() + r * n;
        double* orow = out.data.data() + r * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double* wrow = Wv.data.data() + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += xrow[j] * wrow[j];
            orow[i] = acc;
        }
    }
    return t.make(std::move(out), [X, W](Tape& tp, const Tensor& adj) {
        const Tensor &Xv2 = tp.value(X), &Wv2 = tp.value(W);
        std::size_t B = Xv2.rows(), n = Xv2.cols(), m = Wv2.rows();
        Tensor &gX = tp.adjoint(X.id), &gW = tp.adjoint(W.id);
        for (std::size_t r = 0; r < B; ++r) {
            const double* arow = adj.data.data() + r * m;
            const double* xrow = Xv2.data.data() + r * n;
            double* gxrow = gX.data.data() + r * n;
            for (std::size_t i = 0; i < m; ++i) {
                double ai = arow[i];
                if (ai == 0.0) continue;
                const double* wrow = Wv2.data.data() + i * n;
                double* gwrow = gW.data.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    gxrow[j] += ai * wrow[j];
                    gwrow[j] += ai * xrow[j];
                }
            }
        }
    });
}

/// Broadcast-add a row vector b[m] to every row of X[B x m].
inline Var add_rowvec(Tape& t, Var X, Var b) {
    const Tensor &Xv = t.value(X), &bv = t.value(b);
    if (Xv.rank() != 2 || bv.rank() != 1 || Xv.cols() != bv.numel())
        throw DimensionError("add_rowvec: incompatible shapes X=" + Xv.shape_str() +
                             " b=" + bv.shape_str());
    std::size_t B = Xv.rows(), m = Xv.cols();
    Tensor out = Xv;
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t i = 0; i < m; ++i) out.data[r * m + i] += bv[i];
    return t.make(std::move(out), [X, b](Tape& tp, const Tensor& adj) {
        std::size_t B = adj.rows(), m = adj.cols();
        Tensor &gX = tp.adjoint(X.id), &gb = tp.adjoint(b.id);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t i = 0; i < m; ++i) {
                double a = adj.data[r * m + i];
                gX.data[r * m + i] += a;
                gb[i] += a;
            }
    });
}

/// M[B x k] minus a per-row scalar v[B], broadcast across columns.
inline Var sub_col(Tape& t, Var M, Var v) {
    const Tensor &Mv = t.value(M), &vv = t.value(v);
    if (Mv.rank() != 2 || vv.rank() != 1 || Mv.rows() != vv.numel())
        throw DimensionError("sub_col: incompatible shapes M=" + Mv.shape_str() +
                             " v=" + vv.shape_str());
    std::size_t B = Mv.rows(), k = Mv.cols();
    Tensor out = Mv;
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < k; ++j) out.data[r * k + j] -= vv[r];
    return t.make(std::move(out), [M, v](Tape& tp, const Tensor& adj) {
        std::size_t B = adj.rows(), k = adj.cols();
        Tensor &gM = tp.adjoint(M.id), &gv = tp.adjoint(v.id);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t j = 0; j < k; ++j) {
                double a = adj.data[r * k + j];
                gM.data[r * k + j] += a;
                gv[r] -= a;
            }
    });
}

inline Var slice_cols(Tape& t, Var M, std::size_t off, std::size_t len) {
    const Tensor& Mv = t.value(M);
    if (Mv.rank() != 2 || off + len > Mv.cols())
        throw DimensionError("slice_cols: slice [" + std::to_string(off) + "," +
                             std::to_string(off + len) + ") out of " + Mv.shape_str());
    std::size_t B = Mv.rows(), c = Mv.cols();
    Tensor out = Tensor::zeros({B, len});
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < len; ++j) out.data[r * len + j] = Mv.data[r * c + off + j];
    return t.make(std::move(out), [M, off, len](Tape& tp, const Tensor& adj) {
        Tensor& gM = tp.adjoint(M.id);
        std::size_t B = adj.rows(), c = gM.cols();
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t j = 0; j < len; ++j)
                gM.data[r * c + off + j] += adj.data[r * len + j];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Row-wise log-sum-exp with max-shift stabilization: M[B x k] -> [B].
inline Var logsumexp_rows(Tape& t, Var M) {
    const Tensor& Mv = t.value(M);
    if (Mv.rank() != 2) throw DimensionError("logsumexp_rows: need rank-2, got " + Mv.shape_str());
    std::size_t B = Mv.rows(), k = Mv.cols();
    Tensor out = Tensor::zeros({B});
    for (std::size_t r = 0; r < B; ++r) {
        const double* row = Mv.data.data() + r * k;
        double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        out[r] = mx + std::log(s);
    }
    Tensor cached = out;
    return t.make(std::move(out), [M, cached = std::move(cached)](Tape& tp, const Tensor& adj) {
        const Tensor& Mv2 = tp.value(M);
        std::size_t B = Mv2.rows(), k = Mv2.cols();
        Tensor& gM = tp.adjoint(M.id);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t j = 0; j < k; ++j)
                gM.data[r * k + j] += adj[r] * std::exp(Mv2.data[r * k + j] - cached[r]);
    });
}

inline Var sum_all(Tape& t, Var a) {
    const Tensor& av = t.value(a);
    double s = 0.0;
    for (double v : av.data) s += v;
    return t.make(Tensor::scalar(s), [a](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        for (double& g : ga.data) g += adj[0];
    });
}

inline Var mean_all(Tape& t, Var a) {
    const Tensor& av = t.value(a);
    std::size_t n = av.numel();
    if (n == 0) throw ContractError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : av.data) s += v;
    return t.make(Tensor::scalar(s / static_cast<double>(n)), [a, n](Tape& tp, const Tensor& adj) {
        Tensor& ga = tp.adjoint(a.id);
        double g = adj[0] / static_cast<double>(n);
        for (double& v : ga.data) v += g;
    });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Builds a scalar loss from leaf Vars created on the given tape; the leaves
/// correspond positionally to the checked parameter tensors.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_builder(const GraphBuilder& f, const std::vector<Tensor>& thetas) {
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(thetas.size());
    for (const auto& th : thetas) leaves.push_back(t.leaf(th));
    Var out = f(t, leaves);
    const Tensor& v = t.value(out);
    if (v.numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
    if (!std::isfinite(v[0])) throw TrainingError("grad_check: non-finite value at probe point");
    return v[0];
}

/// Max relative error between reverse-mode adjoints and central finite
/// differences, componentwise, with denominator max(|analytic|,|numeric|,1e-8).
inline double grad_check(const GraphBuilder& f, std::vector<Tensor> thetas, double h) {
    if (h <= 0.0) throw ContractError("grad_check: step must be positive");
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(thetas.size());
    for (const auto& th : thetas) leaves.push_back(t.leaf(th));
    Var loss = f(t, leaves);
    if (t.value(loss).numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
    if (!std::isfinite(t.value(loss)[0]))
        throw TrainingError("grad_check: non-finite value at probe point");
    GradientMap grads = t.backward(loss);

    double max_err = 0.0;
    for (std::size_t p = 0; p < thetas.size(); ++p) {
        Tensor analytic = grads.get_or_zero(leaves[p], thetas[p].shape);
        for (std::size_t i = 0; i < thetas[p].numel(); ++i) {
            double orig = thetas[p][i];
            thetas[p][i] = orig + h;
            double fp = eval_builder(f, thetas);
            thetas[p][i] = orig - h;
            double fm = eval_builder(f, thetas);
            thetas[p][i] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace plf::ad
