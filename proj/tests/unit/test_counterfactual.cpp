#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace reportgap;

namespace {

const std::string kCat = "intrafamily_violence";
const std::string kRate = col::rate(kCat);

DgpSpec flat_spec(int munis, std::uint64_t seed) {
    auto s = testing_support::small_spec(munis, seed);
    s.outcomes[0].closure_effect = 0.0;
    s.outcomes[0].reopening_effect = 0.0;
    return s;
}

DgpSpec long_spec(int munis, std::uint64_t seed) {
    auto s = flat_spec(munis, seed);
    s.start = calendar::make_date(2015, 1, 5);
    return s;
}

ProjectionOptions tight() {
    ProjectionOptions o;
    o.demean_tolerance = 1e-13;
    return o;
}

std::vector<double> predictions(const CounterfactualModel& m, const PanelDataset& p, const std::vector<std::size_t>& rows) {
    std::vector<double> out;
    for (auto i : rows) out.push_back(m.predict(p, i, nullptr));
    return out;
}

} // namespace

TEST(Projection, ConstantOutcomeGivesInterceptAndZeroError) {
    auto s = flat_spec(2, 1);
    s.municipal_sd = 0.0;
    s.woy_amplitude = 0.0;
    const auto all = generate(s).panel;
    const auto p = all.filter([&](std::size_t i) { return all.municipality()[i] == 1; });
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only);
    EXPECT_NEAR(m.intercept, s.outcomes[0].base_rate, 1e-12);
    for (const auto& [k, v] : m.woy_effects) EXPECT_NEAR(v, 0.0, 1e-12);
    EXPECT_TRUE(m.trend.empty());
    EXPECT_NEAR(rmspe(m, p, validation_rows(p, {})), 0.0, 1e-12);
}

TEST(Projection, RecoversLinearTrendWithoutNoise) {
    auto s = flat_spec(5, 2);
    s.outcomes[0].trend = {1.75};
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 1, 2019, Channel::time_only, tight());
    ASSERT_EQ(m.trend.size(), 1u);
    EXPECT_NEAR(m.trend[0], 1.75, 1e-6);
    const auto q = fit_projection(p, kCat, 2, 2019, Channel::time_only, tight());
    ASSERT_EQ(q.trend.size(), 2u);
    EXPECT_NEAR(q.trend[0], 1.75, 1e-6);
    EXPECT_NEAR(q.trend[1], 0.0, 1e-6);
}

TEST(Projection, FittedLevelsSatisfyNormalEquations) {
    auto s = flat_spec(6, 3);
    s.noise_sd = 1.0;
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only);
    const auto& y = p.column(kRate);
    const auto& w = p.column(col::weight);
    std::map<int, double> by_muni, by_woy;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.week()[i] >= p.closure_week()) continue;
        const double r = w[i] * (y[i] - m.predict(p, i, nullptr));
        by_muni[p.municipality()[i]] += r;
        by_woy[p.week_of_year()[i]] += r;
    }
    for (const auto& [k, v] : by_muni) EXPECT_NEAR(v, 0.0, 1e-6) << k;
    for (const auto& [k, v] : by_woy) EXPECT_NEAR(v, 0.0, 1e-6) << k;
}

TEST(Projection, SingleMunicipalityReproducesWeekOfYearMeans) {
    auto s = flat_spec(2, 4);
    s.noise_sd = 1.0;
    const auto all = generate(s).panel;
    const auto p = all.filter([&](std::size_t i) { return all.municipality()[i] == 2; });
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only);
    const auto& y = p.column(kRate);
    const auto& w = p.column(col::weight);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const int woy = p.week_of_year()[i];
        const double mean = oracle::weighted_mean(
            y, w, [&](std::size_t j) { return p.week_of_year()[j] == woy && p.week()[j] < p.closure_week(); });
        EXPECT_NEAR(m.predict(p, i, nullptr), mean, 1e-10);
    }
}

TEST(Projection, SchoolOpeningChannelIsEstimated) {
    auto s = flat_spec(8, 5);
    s.outcomes[0].closure_event_effect = -2.0;
    s.outcomes[0].reopening_effect = 2.0;
    s.continuous_reopening = true;
    const auto p = generate(s).panel;
    // outcome is 2 * opening - 2 plus levels
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::with_school_opening, tight());
    ASSERT_TRUE(m.school_opening_coefficient);
    EXPECT_NEAR(*m.school_opening_coefficient, 2.0, 1e-6);
}

TEST(Projection, DegenerateWindowAndDegreeAreErrors) {
    const auto p = generate(flat_spec(3, 6)).panel;
    EXPECT_THROW((void)fit_projection(p, kCat, 0, 2021, Channel::time_only), DataError);
    EXPECT_THROW((void)fit_projection(p, kCat, 3, 2019, Channel::time_only), ConfigError);
    EXPECT_THROW((void)parse_channel("school"), ConfigError);
}

TEST(Rmspe, MatchesDefinitionalOracle) {
    auto s = flat_spec(4, 7);
    s.noise_sd = 1.5;
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 1, 2019, Channel::time_only);
    const auto rows = validation_rows(p, {});
    std::vector<double> actual;
    for (auto i : rows) actual.push_back(p.column(kRate)[i]);
    EXPECT_NEAR(rmspe(m, p, rows), oracle::rmspe(actual, predictions(m, p, rows)), 1e-12);
    EXPECT_GE(rmspe(m, p, rows), 0.0);
    EXPECT_THROW((void)rmspe(m, p, {}), DataError);
}

TEST(Rmspe, ConstantPredictionAgainstConstantTruth) {
    auto s = flat_spec(3, 8);
    s.municipal_sd = 0.0;
    s.woy_amplitude = 0.0;
    const auto p = generate(s).panel;
    CounterfactualModel m;
    m.outcome = kCat;
    m.intercept = 23.5;
    for (int k = 1; k <= 3; ++k) m.municipal_effects[k] = 0.0;
    for (int w = 1; w <= 52; ++w) m.woy_effects[w] = 0.0;
    EXPECT_NEAR(rmspe(m, p, validation_rows(p, {})), 3.5, 1e-12);
}

TEST(Rmspe, ValidationCellsStopAtClosure) {
    const auto p = generate(flat_spec(2, 9)).panel;
    const auto rows = validation_rows(p, {});
    for (auto i : rows) {
        EXPECT_LT(p.week()[i], p.closure_week());
        EXPECT_GE(p.week_start(i), calendar::make_date(2019, 1, 1));
        EXPECT_LE(p.week_start(i), calendar::make_date(2020, 2, 29));
    }
    // 2019-01-07 .. 2020-02-24
    EXPECT_EQ(rows.size(), 2u * 60u);
}

TEST(Selection, QuadraticTrendSelectsDegreeTwoInEveryWindow) {
    auto s = long_spec(4, 10);
    s.outcomes[0].trend = {0.8, -0.35};
    const auto p = generate(s).panel;
    SelectionOptions o;
    o.projection = tight();
    const auto sel = select_model(p, kCat, Channel::time_only, o);
    ASSERT_EQ(sel.grid.size(), 12u);
    EXPECT_EQ(sel.best.trend_degree, 2);
    for (int start : o.window_starts) {
        const GridEntry* best = nullptr;
        for (const auto& e : sel.grid)
            if (e.window_start_year == start && (!best || e.rmspe < best->rmspe)) best = &e;
        EXPECT_EQ(best->degree, 2) << start;
    }
}

TEST(Selection, TiesPreferLowerDegreeThenLaterWindow) {
    auto s = long_spec(3, 11);
    s.municipal_sd = 0.0;
    s.woy_amplitude = 0.0;
    const auto p = generate(s).panel;
    SelectionOptions o;
    o.projection = tight();
    const auto sel = select_model(p, kCat, Channel::time_only, o);
    EXPECT_EQ(sel.best.trend_degree, 0);
    EXPECT_EQ(sel.best.window_start_year, 2018);
}

TEST(Selection, GridIsWindowMajorAndMatchesBruteForce) {
    auto s = long_spec(5, 12);
    s.noise_sd = 2.0;
    s.outcomes[0].trend = {0.3};
    const auto p = generate(s).panel;
    const auto sel = select_model(p, kCat, Channel::time_only);
    ASSERT_EQ(sel.grid.size(), 12u);
    std::size_t k = 0, argmin = 0;
    for (int start : {2015, 2016, 2017, 2018})
        for (int degree : {0, 1, 2}) {
            EXPECT_EQ(sel.grid[k].window_start_year, start);
            EXPECT_EQ(sel.grid[k].degree, degree);
            EXPECT_EQ(static_cast<int>(sel.grid[k].model.trend.size()), degree);
            if (sel.grid[k].rmspe < sel.grid[argmin].rmspe) argmin = k;
            ++k;
        }
    EXPECT_EQ(sel.best_index, argmin);
    EXPECT_EQ(sel.best.rmspe, sel.grid[argmin].rmspe);
}

TEST(Differential, ExactProjectionGivesZeroDifferential) {
    const auto p = generate(flat_spec(5, 13)).panel;
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only, tight());
    const auto d = project_and_difference(m, p);
    ASSERT_FALSE(d.weeks.empty());
    EXPECT_EQ(d.weeks.front().week, p.closure_week());
    for (const auto& w : d.weeks) EXPECT_NEAR(w.differential, 0.0, 1e-8 * w.actual_total);
    for (const auto& a : d.periods) EXPECT_NEAR(a.differential, 0.0, 1e-8 * a.actual);
}

TEST(Differential, RecoversPlantedNationalDrop) {
    auto s = flat_spec(10, 14);
    s.outcomes[0].national_drop_cases = 40.0;
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only, tight());
    const auto d = project_and_difference(m, p);
    for (const auto& w : d.weeks) EXPECT_NEAR(w.differential, 40.0, 1e-6);
    const auto& total = d.period("total");
    EXPECT_NEAR(total.differential, 40.0 * total.weeks, 1e-5);
    EXPECT_NEAR(d.period("closure").differential + d.period("reopening").differential, total.differential, 1e-6);
    EXPECT_NEAR(total.projected - total.actual, total.differential, 1e-6);
}

TEST(Differential, ScalingIsLinearInProjectedTotals) {
    auto s = flat_spec(6, 15);
    s.noise_sd = 1.0;
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 1, 2019, Channel::time_only);
    const auto base = project_and_difference(m, p, 1.0);
    for (double f : {1.1, 1.2, 1.3, 1.4}) {
        const auto sc = project_and_difference(m, p, f);
        ASSERT_EQ(sc.weeks.size(), base.weeks.size());
        for (std::size_t i = 0; i < sc.weeks.size(); ++i)
            EXPECT_NEAR(sc.weeks[i].differential, base.weeks[i].differential + (f - 1) * base.weeks[i].projected_total,
                        1e-9 * base.weeks[i].projected_total);
        for (const auto& name : {"closure", "reopening", "total"}) {
            const auto& a = base.period(name);
            const double expect = a.differential + (f - 1) * a.projected;
            EXPECT_LE(std::fabs(sc.period(name).differential - expect), 1e-6 * std::fabs(expect)) << name;
        }
    }
    EXPECT_THROW((void)project_and_difference(m, p, 0.9), ConfigError);
}

TEST(Differential, PeriodsSplitAtOwnReopeningWeek) {
    auto s = flat_spec(6, 16);
    s.never_reopen_share = 0.3;
    const auto p = generate(s).panel;
    const auto m = fit_projection(p, kCat, 0, 2019, Channel::time_only);
    const auto d = project_and_difference(m, p);
    const auto reopen = first_reopen_weeks(p);
    const auto& y = p.column(kRate);
    const auto& pop = p.column(col::population);
    double closure_actual = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.week()[i] < p.closure_week()) continue;
        const auto r = reopen.find(p.municipality()[i]);
        if (r == reopen.end() || p.week()[i] < r->second) closure_actual += y[i] * pop[i] / 1e5;
    }
    EXPECT_NEAR(d.period("closure").actual, closure_actual, 1e-8 * closure_actual);
}

TEST(Differential, MunicipalityPermutationLeavesSeriesUnchanged) {
    auto s = flat_spec(7, 17);
    s.noise_sd = 1.0;
    const auto p = generate(s).panel;
    auto q = p;
    std::vector<int> ids = p.municipality();
    for (auto& m : ids) m = 8 - m; // reverses 1..7
    q.relabel_municipalities(ids);
    const auto a = project_and_difference(fit_projection(p, kCat, 1, 2019, Channel::time_only), p);
    const auto b = project_and_difference(fit_projection(q, kCat, 1, 2019, Channel::time_only), q);
    ASSERT_EQ(a.weeks.size(), b.weeks.size());
    for (std::size_t i = 0; i < a.weeks.size(); ++i)
        EXPECT_NEAR(a.weeks[i].differential, b.weeks[i].differential, 1e-8 * a.weeks[i].projected_total);
}

TEST(Differential, MunicipalityMissingFromModelIsError) {
    const auto p = generate(flat_spec(4, 18)).panel;
    const auto sub = p.filter([&](std::size_t i) { return p.municipality()[i] != 4; });
    const auto m = fit_projection(sub, kCat, 0, 2019, Channel::time_only);
    EXPECT_THROW((void)project_and_difference(m, p), DataError);
}

TEST(ChannelShare, IdentityAndZeroCases) {
    DifferentialSeries a;
    a.periods = {{"closure", 100.0}, {"reopening", 50.0}, {"total", 150.0}};
    auto zero = a;
    for (auto& p : zero.periods) p.differential = 0.0;
    for (const auto& s : school_channel_share(a, a)) EXPECT_EQ(s.share, 0.0);
    for (const auto& s : school_channel_share(a, zero)) EXPECT_EQ(s.share, 1.0);
    auto half = a;
    for (auto& p : half.periods) p.differential *= 0.43;
    for (const auto& s : school_channel_share(a, half)) EXPECT_NEAR(s.share, 0.57, 1e-12);
    EXPECT_THROW((void)school_channel_share(zero, a), NumericalError);
}
