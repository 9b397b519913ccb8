#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "plf/calendar.hpp"
#include "plf/dataset.hpp"
#include "plf/ensemble.hpp"
#include "plf/errors.hpp"

namespace plf {

/// Empirical CRPS: (1/m) sum |y_i - y| - (1/2m^2) sum_ij |y_i - y_j|.
/// The double sum uses the sorted identity sum_i (2i - m - 1) y_(i), so the
/// whole computation is O(m log m).
inline double crps_empirical(std::vector<double> samples, double y) {
    if (samples.empty()) throw ContractError("crps_empirical: empty samples");
    std::size_t m = samples.size();
    std::sort(samples.begin(), samples.end());
    double term1 = 0.0, pair_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        term1 += std::abs(samples[i] - y);
        pair_sum += (2.0 * static_cast<double>(i + 1) - static_cast<double>(m) - 1.0) * samples[i];
    }
    double md = static_cast<double>(m);
    return term1 / md - pair_sum / (md * md);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(kTwoPi); }

/// Closed-form CRPS of a single Gaussian forecast; the analytic oracle for
/// the empirical estimator.
inline double crps_gaussian(double mu, double sigma, double y) {
    if (sigma <= 0.0) throw ContractError("crps_gaussian: sigma must be positive");
    double z = (y - mu) / sigma;
    return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(M_PI));
}

/// Per-sample scores plus the overall mean and hour-of-day / weekday
/// decompositions, all in original target (kWh) units.
struct ScoreReport {
    double overall = 0.0;
    std::map<int, double> by_hour;     // 0..23
    std::map<int, double> by_weekday;  // 0=Mon .. 6=Sun
    std::vector<double> per_sample;
};

/// Score an ensemble on the test split: per test sample, draw the pooled
/// predictive distribution and score against the destandardized target.
inline ScoreReport evaluate(const Ensemble& e, const SupervisedSet& test_set,
                            std::size_t m_total = 500, std::uint64_t seed = 0) {
    if (test_set.n_test() == 0) throw ContractError("evaluate: empty test split");
    std::size_t draws = default_draws_per_member(e.size(), m_total);
    const Scaler& ts = e.target_scaler();

    ScoreReport r;
    std::map<int, std::pair<double, std::size_t>> hour_acc, day_acc;
    for (std::size_t i = test_set.test_begin(); i < test_set.test_end(); ++i) {
        // predict_samples standardizes internally, so feed it the raw input
        std::vector<double> x_raw = test_set.input_row(i);
        for (std::size_t j = 0; j < x_raw.size(); ++j)
            x_raw[j] = destandardize(x_raw[j], test_set.input_scalers[j]);
        PredictiveSamples s = predict_samples(e, x_raw, draws, seed, i);
        double y = destandardize(test_set.targets[i], ts);
        double score = crps_empirical(s.values, y);
        r.per_sample.push_back(score);
        r.overall += score;

        CivilTime ct = civil_from_unix(test_set.timestamps[i]);
        hour_acc[ct.hour].first += score;
        hour_acc[ct.hour].second += 1;
        day_acc[ct.weekday].first += score;
        day_acc[ct.weekday].second += 1;
    }
    r.overall /= static_cast<double>(r.per_sample.size());
    for (auto& [h, acc] : hour_acc) r.by_hour[h] = acc.first / static_cast<double>(acc.second);
    for (auto& [d, acc] : day_acc) r.by_weekday[d] = acc.first / static_cast<double>(acc.second);
    return r;
}

/// 100 * (CRPS_base - CRPS_v) / CRPS_base per variant; NaN when the baseline
/// score is zero (undefined improvement).
inline std::map<std::string, double> improvement_table(
    const std::map<std::string, double>& overall_by_variant, const std::string& baseline) {
    auto it = overall_by_variant.find(baseline);
    if (it == overall_by_variant.end())
        throw ContractError("improvement_table: baseline '" + baseline + "' missing");
    double base = it->second;
    std::map<std::string, double> out;
    for (const auto& [name, crps] : overall_by_variant)
        out[name] = base == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                : 100.0 * (base - crps) / base;
    return out;
}

}  // namespace plf
