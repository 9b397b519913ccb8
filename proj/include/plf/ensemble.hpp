#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "plf/dataset.hpp"
#include "plf/errors.hpp"
#include "plf/mdn.hpp"
#include "plf/network.hpp"
#include "plf/rng.hpp"
#include "plf/training.hpp"

namespace plf {

/// Uniformly weighted collection of independently trained members. A single
/// model is the n_e = 1 case.
struct Ensemble {
    std::vector<TrainedModel> members;
    std::vector<std::uint64_t> member_seeds;

    std::size_t size() const { return members.size(); }
    const ModelSpec& spec() const { return members.front().spec; }
    const std::vector<Scaler>& input_scalers() const { return members.front().input_scalers; }
    const Scaler& target_scaler() const { return members.front().target_scaler; }
};

/// Per-input pooled predictive draws in original target units, with the
/// (member, draw) provenance of each sample.
struct PredictiveSamples {
    std::vector<double> values;
    std::vector<std::pair<std::size_t, std::size_t>> provenance;
};

/// Members get seeds base, base+1, ... so initializations and shuffles
/// differ; any member divergence aborts the whole ensemble.
inline Ensemble train_ensemble(const ModelSpec& spec, const SupervisedSet& data,
                               const TrainConfig& cfg, std::size_t n_e) {
    if (n_e < 1) throw ContractError("train_ensemble: need n_e >= 1");
    Ensemble e;
    for (std::size_t m = 0; m < n_e; ++m) {
        TrainConfig member_cfg = cfg;
        member_cfg.seed = cfg.seed + m;
        try {
            e.members.push_back(train(spec, data, member_cfg));
        } catch (const TrainingError& err) {
            throw TrainingError("train_ensemble: member " + std::to_string(m) +
                                " diverged: " + err.what());
        }
        e.member_seeds.push_back(member_cfg.seed);
    }
    return e;
}

inline std::size_t default_draws_per_member(std::size_t n_e, std::size_t m_total = 500) {
    return (m_total + n_e - 1) / n_e;  // ceil so totals reach the evaluation budget
}

/// Pool M draws per member at a raw (unstandardized) input. Bayesian members
/// take one fresh weight draw per sample; deterministic members sample their
/// fixed mixture. Per-member rng substreams are derived from (base seed,
/// member training seed, input index) so results are schedule-independent and
/// the pooled sample multiset does not depend on member order.
inline PredictiveSamples predict_samples(const Ensemble& e, const std::vector<double>& x_raw,
                                         std::size_t draws_per_member, std::uint64_t base_seed,
                                         std::uint64_t input_index = 0) {
    if (draws_per_member < 1) throw ContractError("predict_samples: need M >= 1");
    const auto& scalers = e.input_scalers();
    if (x_raw.size() != scalers.size())
        throw DimensionError("predict_samples: input length " + std::to_string(x_raw.size()) +
                             " vs " + std::to_string(scalers.size()) + " features");
    std::vector<double> x_std(x_raw.size());
    for (std::size_t j = 0; j < x_raw.size(); ++j) x_std[j] = standardize(x_raw[j], scalers[j]);

    const Scaler& ts = e.target_scaler();
    PredictiveSamples out;
    out.values.reserve(e.size() * draws_per_member);
    for (std::size_t m = 0; m < e.size(); ++m) {
        std::uint64_t member_key = m < e.member_seeds.size() ? e.member_seeds[m] : m;
        Rng rng(derive_seed(base_seed, member_key, input_index));
        const TrainedModel& member = e.members[m];
        if (member.spec.bayesian()) {
            for (std::size_t d = 0; d < draws_per_member; ++d) {
                MixtureParams p = forward(member, x_std, &rng);
                double z = mixture_sample(p, rng, 1)[0];
                out.values.push_back(destandardize(z, ts));
                out.provenance.emplace_back(m, d);
            }
        } else {
            MixtureParams p = forward(member, x_std);
            std::vector<double> zs = mixture_sample(p, rng, draws_per_member);
            for (std::size_t d = 0; d < zs.size(); ++d) {
                out.values.push_back(destandardize(zs[d], ts));
                out.provenance.emplace_back(m, d);
            }
        }
    }
    return out;
}

struct PredictiveSummary {
    double mean;
    std::vector<double> quantiles;
};

inline PredictiveSummary predictive_summary(const PredictiveSamples& s,
                                            const std::vector<double>& qs) {
    if (s.values.empty()) throw ContractError("predictive_summary: empty samples");
    double mean = 0.0;
    for (double v : s.values) mean += v;
    mean /= static_cast<double>(s.values.size());
    return {mean, empirical_quantiles(s.values, qs)};
}

}  // namespace plf
