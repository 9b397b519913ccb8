#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "plf/errors.hpp"
#include "plf/tensor.hpp"

namespace plf {

/// Per-column standardization parameters, fitted on the training split only.
struct Scaler {
    double mean = 0.0;
    double std = 1.0;  // floored at 1e-12 for constant columns
};

inline constexpr double kScalerStdFloor = 1e-12;

inline Scaler fit_scaler(const std::vector<double>& values) {
    if (values.empty()) throw ContractError("fit_scaler: empty values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    double std = std::sqrt(var);
    return Scaler{mean, std < kScalerStdFloor ? kScalerStdFloor : std};
}

inline double standardize(double x, const Scaler& s) { return (x - s.mean) / s.std; }
inline double destandardize(double z, const Scaler& s) { return z * s.std + s.mean; }

inline std::vector<double> standardize(const std::vector<double>& xs, const Scaler& s) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = standardize(xs[i], s);
    return out;
}

inline std::vector<double> destandardize(const std::vector<double>& zs, const Scaler& s) {
    std::vector<double> out(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) out[i] = destandardize(zs[i], s);
    return out;
}

/// Standardized feature/target pairs with contiguous chronological split
/// ranges: train [0, n_train), val [n_train, n_train+n_val), test [.., N).
struct SupervisedSet {
    Tensor inputs;                 // N x n_x, standardized
    std::vector<double> targets;   // standardized
    std::vector<std::int64_t> timestamps;  // unix seconds, one per sample
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::vector<Scaler> input_scalers;
    Scaler target_scaler;

    std::size_t size() const { return targets.size(); }
    std::size_t n_features() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
    std::size_t n_test() const { return size() - n_train - n_val; }

    std::size_t train_begin() const { return 0; }
    std::size_t train_end() const { return n_train; }
    std::size_t val_begin() const { return n_train; }
    std::size_t val_end() const { return n_train + n_val; }
    std::size_t test_begin() const { return n_train + n_val; }
    std::size_t test_end() const { return size(); }

    std::vector<double> input_row(std::size_t i) const {
        std::size_t c = inputs.cols();
        return {inputs.data.begin() + i * c, inputs.data.begin() + (i + 1) * c};
    }
};

/// Build a standardized SupervisedSet directly from raw matrices (used by the
/// synthetic benchmarks); split fractions follow the 70/15/15 rule with the
/// rounding remainder assigned to train.
inline SupervisedSet make_supervised(const Tensor& raw_inputs, const std::vector<double>& raw_targets,
                                     const std::vector<std::int64_t>& timestamps,
                                     double train_frac = 0.70, double val_frac = 0.15,
                                     double test_frac = 0.15) {
    if (raw_inputs.rank() != 2 || raw_inputs.rows() != raw_targets.size())
        throw DimensionError("make_supervised: inputs " + raw_inputs.shape_str() + " vs " +
                             std::to_string(raw_targets.size()) + " targets");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ContractError("make_supervised: split fractions must sum to 1");
    std::size_t n = raw_targets.size();
    std::size_t n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
    std::size_t n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    std::size_t n_train = n - n_val - n_test;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw ContractError("make_supervised: a split block is empty (N=" + std::to_string(n) + ")");

    SupervisedSet ds;
    ds.n_train = n_train;
    ds.n_val = n_val;
    ds.timestamps = timestamps.empty() ? std::vector<std::int64_t>(n, 0) : timestamps;

    std::size_t n_x = raw_inputs.cols();
    ds.input_scalers.resize(n_x);
    for (std::size_t j = 0; j < n_x; ++j) {
        std::vector<double> col(n_train);
        for (std::size_t i = 0; i < n_train; ++i) col[i] = raw_inputs.at(i, j);
        ds.input_scalers[j] = fit_scaler(col);
    }
    ds.target_scaler = fit_scaler({raw_targets.begin(), raw_targets.begin() + n_train});

    ds.inputs = Tensor::zeros({n, n_x});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n_x; ++j)
            ds.inputs.at(i, j) = standardize(raw_inputs.at(i, j), ds.input_scalers[j]);
    ds.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.targets[i] = standardize(raw_targets[i], ds.target_scaler);
    return ds;
}

}  // namespace plf
