#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace reportgap;

namespace {

const std::string kRate = col::rate("intrafamily_violence");

PanelDataset noisy_panel(int munis, std::uint64_t seed, Date end = calendar::make_date(2021, 6, 27)) {
    auto s = testing_support::small_spec(munis, seed);
    s.end = end;
    if (end < s.closure_date) {
        s.closure_date = end - std::chrono::days{70};
        s.reopening = false;
    }
    s.noise_sd = 2.0;
    return generate(s).panel;
}

double weighted_mean(const PanelDataset& p) {
    const auto& y = p.column(kRate);
    const auto& w = p.column(col::weight);
    return oracle::weighted_mean(y, w, [](std::size_t) { return true; });
}

} // namespace

TEST(Resample, IdentityDrawReproducesPanel) {
    const auto p = noisy_panel(5, 1);
    const ClusterIndex index(p);
    std::vector<std::size_t> draws(index.size());
    std::iota(draws.begin(), draws.end(), 0);
    const auto r = resample_clusters(p, index, draws);
    ASSERT_EQ(r.size(), p.size());
    EXPECT_EQ(r.week(), p.week());
    EXPECT_EQ(r.column(kRate), p.column(kRate));
    EXPECT_EQ(r.municipalities().size(), p.municipalities().size());
}

TEST(Resample, RepeatedDrawKeepsDistinctClusters) {
    const auto p = noisy_panel(2, 2);
    const ClusterIndex index(p);
    const auto r = resample_clusters(p, index, {0, 0});
    EXPECT_EQ(r.municipalities(), (std::vector<int>{1, 2}));
    const auto& y = r.column(kRate);
    const std::size_t T = p.grid().size();
    ASSERT_EQ(r.size(), 2 * T);
    for (std::size_t t = 0; t < T; ++t) {
        EXPECT_EQ(y[t], y[T + t]);
        EXPECT_EQ(y[t], p.column(kRate)[index.rows(0)[t]]);
    }
    EXPECT_THROW((void)resample_clusters(p, index, {0, 2}), std::out_of_range);
}

TEST(Resample, DrawFrequenciesAreUniform) {
    const std::size_t M = 12, R = 10000;
    std::vector<double> freq(M, 0.0);
    std::mt19937_64 rng(99);
    for (std::size_t r = 0; r < R; ++r)
        for (auto d : draw_clusters(M, rng)) freq[d] += 1.0;
    const double n = static_cast<double>(M * R), p = 1.0 / M;
    const double se = std::sqrt(n * p * (1 - p));
    for (double f : freq) EXPECT_LT(std::fabs(f - n * p), 3 * se);
}

TEST(Bootstrap, ConstantStatisticGivesDegenerateInterval) {
    const auto p = noisy_panel(6, 3);
    const auto r = bootstrap_ci(p, [](const PanelDataset&) { return 3.25; }, {50, 7, 1, 0.05});
    EXPECT_EQ(r.ci_low, 3.25);
    EXPECT_EQ(r.ci_high, 3.25);
    EXPECT_EQ(r.replicates.size(), 50u);
}

TEST(Bootstrap, DeterministicAcrossRunsAndThreads) {
    const auto p = noisy_panel(10, 4);
    BootstrapOptions o{60, 1234, 1, 0.05};
    const auto a = bootstrap_ci(p, weighted_mean, o);
    const auto b = bootstrap_ci(p, weighted_mean, o);
    o.threads = 4;
    const auto c = bootstrap_ci(p, weighted_mean, o);
    EXPECT_EQ(a.replicates, b.replicates);
    EXPECT_EQ(a.replicates, c.replicates);
    EXPECT_EQ(a.ci_low, c.ci_low);
    EXPECT_EQ(a.ci_high, c.ci_high);
    o.seed = 1235;
    EXPECT_NE(bootstrap_ci(p, weighted_mean, o).replicates, a.replicates);
}

TEST(Bootstrap, IntervalBoundsAreReplicateQuantiles) {
    const auto p = noisy_panel(10, 5);
    const auto r = bootstrap_ci(p, weighted_mean, {101, 8, 1, 0.05});
    auto sorted = r.replicates;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(r.ci_low, oracle::quantile7(sorted, 0.025));
    EXPECT_EQ(r.ci_high, oracle::quantile7(sorted, 0.975));
    // exchangeability: the interval ignores replicate order
    auto shuffled = r.replicates;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
    EXPECT_EQ(stats::quantile(shuffled, 0.025), r.ci_low);
    EXPECT_EQ(stats::quantile(shuffled, 0.975), r.ci_high);
}

TEST(Bootstrap, FailingReplicateIsNamed) {
    const auto p = noisy_panel(4, 6);
    int calls = 0;
    try {
        (void)bootstrap_ci(
            p,
            [&](const PanelDataset&) {
                if (++calls == 3) throw DataError("boom");
                return 1.0;
            },
            {10, 1, 1, 0.05});
        FAIL() << "expected an error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("replicate 2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
    }
}

TEST(Bootstrap, InvalidOptionsAreRejected) {
    const auto p = noisy_panel(4, 7);
    EXPECT_THROW((void)bootstrap_ci(p, weighted_mean, {1, 1, 1, 0.05}), ConfigError);
    EXPECT_THROW((void)bootstrap_ci(p, weighted_mean, {10, 1, 1, 1.5}), ConfigError);
    const auto one = p.filter([&](std::size_t i) { return p.municipality()[i] == 1; });
    EXPECT_THROW((void)bootstrap_ci(one, weighted_mean, {10, 1, 1, 0.05}), DataError);
}

TEST(Bootstrap, WidthMatchesAnalyticClusteredInterval) {
    const auto p = noisy_panel(40, 8, calendar::make_date(2019, 12, 29));
    const auto& y = p.column(kRate);
    const auto& w = p.column(col::weight);
    const double mean = weighted_mean(p);
    std::map<int, double> score;
    double wsum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        score[p.municipality()[i]] += w[i] * (y[i] - mean);
        wsum += w[i];
    }
    double var = 0.0;
    for (const auto& [m, s] : score) var += s * s;
    var /= wsum * wsum;
    const double analytic = 2 * 1.959963984540054 * std::sqrt(var);
    const auto r = bootstrap_ci(p, weighted_mean, {250, 2020, 1, 0.05});
    const double width = r.ci_high - r.ci_low;
    EXPECT_NEAR(width / analytic, 1.0, 0.25) << width << " vs " << analytic;
}

TEST(Bootstrap, ClosureCoefficientIntervalCoversTruth) {
    // homoskedastic DGP, 50 clusters, 200 outer simulations
    int covered = 0;
    const int sims = 200;
    for (int s = 0; s < sims; ++s) {
        auto spec = testing_support::small_spec(50, 5000 + static_cast<std::uint64_t>(s));
        spec.end = calendar::make_date(2020, 12, 27);
        spec.first_reopen_date = calendar::make_date(2020, 8, 3);
        spec.reopen_spread_weeks = 12;
        spec.noise_sd = 2.0;
        spec.ar1 = 0.0;
        spec.pop_min = spec.pop_max = 10000;
        const auto panel = generate(spec).panel;
        DesignOptions o;
        o.demean_tolerance = 1e-10;
        const auto beta = [&](const PanelDataset& p) { return run_design(p, o).fit.coef(col::closure); };
        const auto ci = bootstrap_ci(panel, beta, {99, 77 + static_cast<std::uint64_t>(s), 1, 0.05});
        covered += ci.ci_low <= spec.outcomes[0].closure_effect && spec.outcomes[0].closure_effect <= ci.ci_high;
    }
    const double rate = static_cast<double>(covered) / sims;
    EXPECT_GE(rate, 0.90);
    EXPECT_LE(rate, 0.99);
}
