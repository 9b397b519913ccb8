#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "plf/calendar.hpp"
#include "plf/dataset.hpp"
#include "plf/errors.hpp"
#include "plf/tensor.hpp"

namespace plf {

struct Reading {
    std::int64_t timestamp;
    double kwh;
};

/// Timestamped energy readings for one household at a fixed cadence; gaps
/// are simply missing grid points.
struct LoadSeries {
    std::string household_id;
    std::int64_t cadence_seconds = 1800;  // half-hourly raw, 3600 after resampling
    std::vector<Reading> readings;        // strictly increasing timestamps
    std::size_t duplicate_warnings = 0;

    bool has(std::int64_t ts) const {
        auto it = std::lower_bound(readings.begin(), readings.end(), ts,
                                   [](const Reading& r, std::int64_t t) { return r.timestamp < t; });
        return it != readings.end() && it->timestamp == ts;
    }
};

struct CsvSchema {
    std::string household_col = "household_id";
    std::string timestamp_col = "timestamp";
    std::string kwh_col = "kwh";
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

/// Parse the raw export, keep one household, sort, and deduplicate repeated
/// timestamps (first occurrence wins).
inline LoadSeries ingest_load_csv(const std::string& path, const std::string& household_id,
                                  const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_csv_line(line);
    auto col_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DataError(path + ": missing column '" + name + "'");
    };
    std::size_t hh_col = col_of(schema.household_col);
    std::size_t ts_col = col_of(schema.timestamp_col);
    std::size_t kwh_col = col_of(schema.kwh_col);

    LoadSeries s;
    s.household_id = household_id;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() <= std::max({hh_col, ts_col, kwh_col}))
            throw DataError(path + ":" + std::to_string(lineno) + ": too few columns");
        if (fields[hh_col] != household_id) continue;
        Reading r;
        try {
            r.timestamp = parse_iso8601(fields[ts_col]);
            std::size_t pos = 0;
            r.kwh = std::stod(fields[kwh_col], &pos);
            if (pos != fields[kwh_col].size()) throw DataError("trailing characters");
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (r.kwh < 0.0)
            throw DataError(path + ":" + std::to_string(lineno) + ": negative kWh reading");
        s.readings.push_back(r);
    }
    if (s.readings.empty())
        throw DataError(path + ": no readings for household '" + household_id + "'");

    std::stable_sort(s.readings.begin(), s.readings.end(),
                     [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
    std::vector<Reading> dedup;
    dedup.reserve(s.readings.size());
    for (const Reading& r : s.readings) {
        if (!dedup.empty() && dedup.back().timestamp == r.timestamp) {
            s.duplicate_warnings += 1;  // keep first
            continue;
        }
        dedup.push_back(r);
    }
    s.readings = std::move(dedup);
    return s;
}

/// Sum each aligned pair of half-hour energies into one hourly kWh value;
/// hours missing either half-hour are left as gaps.
inline LoadSeries resample_hourly(const LoadSeries& s) {
    if (s.cadence_seconds != 1800)
        throw ContractError("resample_hourly: expected half-hourly cadence");
    LoadSeries out;
    out.household_id = s.household_id;
    out.cadence_seconds = 3600;
    std::unordered_map<std::int64_t, std::pair<double, int>> hours;
    for (const Reading& r : s.readings) {
        std::int64_t hour_ts = (r.timestamp / 3600) * 3600;
        std::int64_t offset = r.timestamp - hour_ts;
        if (offset != 0 && offset != 1800) continue;  // off-grid reading, not a valid half-hour
        auto& acc = hours[hour_ts];
        acc.first += r.kwh;
        acc.second += 1;
    }
    for (const auto& [ts, acc] : hours)
        if (acc.second == 2) out.readings.push_back({ts, acc.first});
    std::sort(out.readings.begin(), out.readings.end(),
              [](const Reading& a, const Reading& b) { return a.timestamp < b.timestamp; });
    return out;
}

inline constexpr std::size_t kNumFeatures = 2 + 12 + 7 + 24;  // lags + calendar one-hots

inline std::vector<double> calendar_features(std::int64_t ts) {
    std::vector<double> f(12 + 7 + 24, 0.0);
    CivilTime ct = civil_from_unix(ts);
    f[static_cast<std::size_t>(ct.month - 1)] = 1.0;
    f[12 + static_cast<std::size_t>(ct.weekday)] = 1.0;
    f[19 + static_cast<std::size_t>(ct.hour)] = 1.0;
    return f;
}

struct RawFeatures {
    Tensor inputs;  // N x 45, unstandardized
    std::vector<double> targets;
    std::vector<std::int64_t> timestamps;
};

/// Sliding-window featurization over the hourly series: lags t-24h and
/// t-48h plus month/weekday/hour one-hots; samples touching a gap at t,
/// t-24h or t-48h are dropped.
inline RawFeatures build_features(const LoadSeries& s) {
    if (s.cadence_seconds != 3600) throw ContractError("build_features: expected hourly cadence");
    std::unordered_map<std::int64_t, double> by_ts;
    for (const Reading& r : s.readings) by_ts[r.timestamp] = r.kwh;

    std::vector<std::vector<double>> rows;
    RawFeatures out;
    for (const Reading& r : s.readings) {
        auto l24 = by_ts.find(r.timestamp - 24 * 3600);
        auto l48 = by_ts.find(r.timestamp - 48 * 3600);
        if (l24 == by_ts.end() || l48 == by_ts.end()) continue;
        std::vector<double> row;
        row.reserve(kNumFeatures);
        row.push_back(l24->second);
        row.push_back(l48->second);
        auto cal = calendar_features(r.timestamp);
        row.insert(row.end(), cal.begin(), cal.end());
        rows.push_back(std::move(row));
        out.targets.push_back(r.kwh);
        out.timestamps.push_back(r.timestamp);
    }
    out.inputs = Tensor::zeros({rows.size(), kNumFeatures});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < kNumFeatures; ++j) out.inputs.at(i, j) = rows[i][j];
    return out;
}

/// Contiguous chronological 70/15/15 split (remainder to train); scalers
/// fitted on the training block only.
inline SupervisedSet split_chronological(const RawFeatures& f, double train_frac = 0.70,
                                         double val_frac = 0.15, double test_frac = 0.15) {
    return make_supervised(f.inputs, f.targets, f.timestamps, train_frac, val_frac, test_frac);
}

struct SummaryStats {
    double mean;
    double std;  // population std
    double q25;
    double q50;
    double q75;
};

inline SummaryStats describe(const LoadSeries& s) {
    if (s.readings.empty()) throw ContractError("describe: empty series");
    std::vector<double> v;
    v.reserve(s.readings.size());
    for (const Reading& r : s.readings) v.push_back(r.kwh);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        double pos = q * static_cast<double>(v.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return v[lo] + frac * (v[hi] - v[lo]);
    };
    return {mean, std::sqrt(var), quantile(0.25), quantile(0.50), quantile(0.75)};
}

/// Partial autocorrelations via Durbin-Levinson on the sample
/// autocovariances; pacf[0] = 1 by definition.
inline std::vector<double> pacf(const LoadSeries& s, std::size_t max_lag) {
    std::size_t n = s.readings.size();
    if (n <= max_lag + 1) throw ContractError("pacf: series shorter than max_lag + 2");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = s.readings[i].kwh;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> gamma(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        for (std::size_t i = 0; i + k < n; ++i) gamma[k] += (x[i] - mean) * (x[i + k] - mean);
        gamma[k] /= static_cast<double>(n);
    }
    if (gamma[0] <= 0.0) throw ContractError("pacf: degenerate (zero-variance) series");

    std::vector<double> out(max_lag + 1, 0.0);
    out[0] = 1.0;
    std::vector<double> phi_prev(max_lag + 1, 0.0), phi(max_lag + 1, 0.0);
    double v = gamma[0];
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = gamma[k];
        for (std::size_t j = 1; j < k; ++j) num -= phi_prev[j] * gamma[k - j];
        double a = num / v;
        phi[k] = a;
        for (std::size_t j = 1; j < k; ++j) phi[j] = phi_prev[j] - a * phi_prev[k - j];
        v *= (1.0 - a * a);
        out[k] = a;
        phi_prev = phi;
    }
    return out;
}

}  // namespace plf
