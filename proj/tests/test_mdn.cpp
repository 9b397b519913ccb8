#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "plf/mdn.hpp"
#include "plf/rng.hpp"

using namespace plf;

TEST_CASE("split_head single component") {
    HeadConfig cfg{1, 0.2, 1e-8};
    MixtureParams p = split_head(Tensor::vec({0.5, 123.0, 0.0}), cfg);
    CHECK(p.weights[0] == 1.0);
    CHECK(p.means[0] == 0.5);
    CHECK(p.scales[0] == Catch::Approx(1.0 + 1e-8).epsilon(1e-14));
}

TEST_CASE("split_head uniform weights from equal logits") {
    HeadConfig cfg{3, 0.2, 1e-8};
    MixtureParams p = split_head(Tensor::vec({0, 0, 0, 0, 0, 0, 0, 0, 0}), cfg);
    for (double w : p.weights) CHECK(w == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("split_head scale logits through ELU+1") {
    HeadConfig cfg{2, 0.1, 1e-8};
    MixtureParams p = split_head(Tensor::vec({0, 0, 0, 0, 2.0, -3.0}), cfg);
    CHECK(p.scales[0] == Catch::Approx(3.0 + 1e-8).epsilon(1e-12));
    CHECK(p.scales[1] == Catch::Approx(1.0 + 0.1 * (std::exp(-3.0) - 1.0) + 1e-8).epsilon(1e-12));
    CHECK(p.scales[1] == Catch::Approx(0.90497871).margin(1e-7));
}

TEST_CASE("split_head rejects wrong length") {
    HeadConfig cfg{3, 0.2, 1e-8};
    CHECK_THROWS_AS(split_head(Tensor::vec({1, 2, 3, 4}), cfg), DimensionError);
}

TEST_CASE("elu_plus_one pointwise values") {
    CHECK(elu_plus_one(0.0, 0.2, 1e-8) == Catch::Approx(1.0 + 1e-8).epsilon(1e-14));
    CHECK(elu_plus_one(2.0, 0.2, 1e-8) == Catch::Approx(3.0 + 1e-8).epsilon(1e-14));
    CHECK(elu_plus_one(-3.0, 0.1, 1e-8) == Catch::Approx(0.9049787 + 1e-8).margin(1e-7));
}

TEST_CASE("elu_plus_one is continuous, monotone and floored") {
    double prev = -1.0;
    double min_seen = 1e300;
    for (double z = -50.0; z <= 50.0; z += 0.01) {
        double v = elu_plus_one(z, 0.2, 1e-8);
        // strict growth is below double resolution deep in the negative tail
        if (z > -20.0)
            CHECK(v > prev);
        else
            CHECK(v >= prev);
        prev = v;
        min_seen = std::min(min_seen, v);
    }
    CHECK(min_seen > 1e-8);
    // continuity at the branch point
    CHECK(std::abs(elu_plus_one(-1e-12, 0.2, 1e-8) - elu_plus_one(1e-12, 0.2, 1e-8)) < 1e-11);
}

TEST_CASE("mixture_log_density hand values") {
    MixtureParams std_normal{{1.0}, {0.0}, {1.0}};
    CHECK(mixture_log_density(std_normal, 0.0) == Catch::Approx(-0.9189385332).margin(1e-6));

    MixtureParams dup{{0.5, 0.5}, {0.0, 0.0}, {1.0, 1.0}};
    CHECK(mixture_log_density(dup, 0.0) == Catch::Approx(-0.9189385332).margin(1e-6));

    MixtureParams sym{{0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}};
    CHECK(mixture_log_density(sym, 0.0) == Catch::Approx(-1.4189385332).margin(1e-6));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> logits(4);
        for (double& v : logits) v = rng.uniform(-30, 30);
        auto p = softmax(logits);
        double s = 0.0;
        for (double v : p) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
        std::vector<double> shifted = logits;
        for (double& v : shifted) v += 17.25;
        auto q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == Catch::Approx(q[i]).margin(1e-15));
    }
}

TEST_CASE("mixture density integrates to one") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        MixtureParams p;
        std::vector<double> logits;
        for (int k = 0; k < 3; ++k) {
            logits.push_back(rng.uniform(-1, 1));
            p.means.push_back(rng.uniform(-2, 2));
            p.scales.push_back(rng.uniform(0.3, 1.5));
        }
        p.weights = softmax(logits);
        double max_s = *std::max_element(p.scales.begin(), p.scales.end());
        double lo = *std::min_element(p.means.begin(), p.means.end()) - 10.0 * max_s;
        double hi = *std::max_element(p.means.begin(), p.means.end()) + 10.0 * max_s;
        std::size_t n = 200000;
        double h = (hi - lo) / static_cast<double>(n);
        double integral = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            double x = lo + static_cast<double>(i) * h;
            double f = std::exp(mixture_log_density(p, x));
            integral += (i == 0 || i == n) ? 0.5 * f : f;
        }
        integral *= h;
        CHECK(std::abs(integral - 1.0) < 1e-6);
    }
}

TEST_CASE("mixture_sample degenerate scale concentrates at the mean") {
    MixtureParams p{{1.0}, {5.0}, {1e-8}};
    Rng rng(3);
    for (double v : mixture_sample(p, rng, 100)) CHECK(std::abs(v - 5.0) < 1e-3);
}

TEST_CASE("mixture_sample matches standard normal moments") {
    MixtureParams p{{1.0}, {0.0}, {1.0}};
    Rng rng(17);
    auto xs = mixture_sample(p, rng, 100000);
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xs.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("zero-weight component is never sampled") {
    MixtureParams p{{1.0, 0.0}, {0.0, 100.0}, {0.5, 0.1}};
    Rng rng(23);
    for (double v : mixture_sample(p, rng, 1000)) CHECK(std::abs(v) < 10.0);
}

TEST_CASE("mixture_sample histogram matches the density (chi-squared)") {
    MixtureParams p;
    p.weights = {0.4, 0.35, 0.25};
    p.means = {-1.5, 0.0, 2.0};
    p.scales = {0.5, 0.8, 0.6};
    Rng rng(31);
    std::size_t m = 100000;
    auto xs = mixture_sample(p, rng, m);

    // bins over +-6 scales around the means; tails folded into edge bins
    double lo = -4.5, hi = 5.0;
    std::size_t nbins = 40;
    std::vector<double> counts(nbins, 0.0);
    for (double v : xs) {
        double u = (v - lo) / (hi - lo);
        std::size_t b = u <= 0.0 ? 0
                        : u >= 1.0 ? nbins - 1
                                   : static_cast<std::size_t>(u * static_cast<double>(nbins));
        counts[std::min(b, nbins - 1)] += 1.0;
    }
    // expected mass by fine quadrature per bin
    double chi2 = 0.0;
    std::size_t dof = 0;
    for (std::size_t b = 0; b < nbins; ++b) {
        double bl = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(nbins);
        double bh = bl + (hi - lo) / static_cast<double>(nbins);
        double mass = 0.0;
        std::size_t steps = 200;
        double h = (bh - bl) / static_cast<double>(steps);
        for (std::size_t i = 0; i <= steps; ++i) {
            double x = bl + static_cast<double>(i) * h;
            double f = std::exp(mixture_log_density(p, x));
            mass += (i == 0 || i == steps) ? 0.5 * f : f;
        }
        mass *= h;
        double expected = mass * static_cast<double>(m);
        if (expected < 5.0) continue;  // sparse bins excluded, standard chi-squared practice
        chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
        dof += 1;
    }
    REQUIRE(dof > 10);
    // 1% critical value approximation via Wilson-Hilferty
    double k = static_cast<double>(dof - 1);
    double z99 = 2.3263478740408408;
    double crit = k * std::pow(1.0 - 2.0 / (9.0 * k) + z99 * std::sqrt(2.0 / (9.0 * k)), 3);
    CHECK(chi2 < crit);
}

TEST_CASE("empirical_quantiles basics") {
    CHECK(empirical_quantiles({1, 2, 3, 4, 5}, {0.5})[0] == 3.0);
    CHECK_THROWS_AS(empirical_quantiles({1, 2, 3}, {0.0}), ContractError);
    CHECK_THROWS_AS(empirical_quantiles({}, {0.5}), ContractError);
}

TEST_CASE("empirical_quantiles of normal draws hit the normal quantile") {
    Rng rng(41);
    MixtureParams p{{1.0}, {0.0}, {1.0}};
    auto xs = mixture_sample(p, rng, 100000);
    double q975 = empirical_quantiles(xs, {0.975})[0];
    CHECK(q975 == Catch::Approx(1.959963985).margin(0.05));
}

TEST_CASE("empirical_quantiles are non-decreasing in q") {
    Rng rng(43);
    std::vector<double> xs(500);
    for (double& v : xs) v = rng.uniform(-10, 10);
    std::vector<double> qs;
    for (double q = 0.05; q < 1.0; q += 0.05) qs.push_back(q);
    auto vals = empirical_quantiles(xs, qs);
    for (std::size_t i = 1; i < vals.size(); ++i) CHECK(vals[i] >= vals[i - 1]);
}
