#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace reportgap;

namespace {

const std::string kCat = "intrafamily_violence";

} // namespace

TEST(Synth, SameSpecGivesIdenticalPanel) {
    auto s = testing_support::small_spec(6, 42);
    s.noise_sd = 1.0;
    const auto a = generate(s);
    const auto b = generate(s);
    EXPECT_EQ(panel_table(a.panel).str(), panel_table(b.panel).str());
    EXPECT_EQ(a.truth.first_reopen_week, b.truth.first_reopen_week);
    s.seed = 43;
    EXPECT_NE(generate(s).panel.column(col::rate(kCat)), a.panel.column(col::rate(kCat)));
}

TEST(Synth, PanelsSatisfyTreatmentInvariants) {
    for (auto adoption : {Adoption::simultaneous, Adoption::staggered}) {
        auto s = testing_support::small_spec(10, 5);
        s.adoption = adoption;
        s.never_reopen_share = 0.2;
        const auto g = generate(s);
        const auto& p = g.panel;
        EXPECT_TRUE(is_balanced(p));
        EXPECT_EQ(p.closure_week(), g.truth.closure_week);
        EXPECT_EQ(first_reopen_weeks(p), g.truth.first_reopen_week);
        const auto& cl = p.column(col::closure);
        const auto& ro = p.column(col::reopen_binary);
        const auto& sh = p.column(col::reopen_share);
        const auto& w = p.column(col::weight);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_TRUE(cl[i] + ro[i] == 0.0 || cl[i] + ro[i] == 1.0);
            if (p.week()[i] < p.closure_week()) {
                EXPECT_EQ(cl[i] + ro[i], 0.0);
            }
            EXPECT_LE(sh[i], ro[i]);
            EXPECT_GT(w[i], 0.0);
        }
        for (const auto& [m, r] : g.truth.first_reopen_week) EXPECT_GT(r, p.closure_week());
        if (adoption == Adoption::simultaneous) {
            std::set<int> weeks;
            for (const auto& [m, r] : g.truth.first_reopen_week) weeks.insert(r);
            EXPECT_LE(weeks.size(), 1u);
        }
    }
}

TEST(Synth, NoiselessZeroEffectsEstimateZero) {
    auto s = testing_support::small_spec(12, 6);
    s.outcomes[0].closure_effect = 0.0;
    s.outcomes[0].reopening_effect = 0.0;
    const auto p = generate(s).panel;
    DesignOptions o;
    o.demean_tolerance = 1e-13;
    const auto f = run_design(p, o).fit;
    EXPECT_NEAR(f.coef(col::closure), 0.0, 1e-8);
    EXPECT_NEAR(f.coef(col::reopen_binary), 0.0, 1e-8);
}

TEST(Synth, NoiselessPlantedEffectsAreRecoveredExactly) {
    auto s = testing_support::small_spec(12, 7);
    s.outcomes[0].closure_effect = -1.5;
    s.outcomes[0].reopening_effect = -0.8;
    const auto p = generate(s).panel;
    DesignOptions o;
    o.demean_tolerance = 1e-13;
    const auto f = run_design(p, o).fit;
    EXPECT_NEAR(f.coef(col::closure), -1.5, 1e-8);
    EXPECT_NEAR(f.coef(col::reopen_binary), -0.8, 1e-8);
}

TEST(Synth, IntegerCountsMatchRates) {
    auto s = testing_support::small_spec(4, 8);
    s.integer_counts = true;
    const auto p = generate(s).panel;
    ASSERT_TRUE(p.has_counts(kCat));
    const auto& c = p.counts(kCat);
    const auto& r = p.column(col::rate(kCat));
    const auto& pop = p.column(col::population);
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_GE(c[i], 0);
        EXPECT_DOUBLE_EQ(r[i], static_cast<double>(c[i]) * per_100k / pop[i]);
    }
}

TEST(Synth, RawExpansionRoundTripsThroughIngest) {
    auto s = testing_support::small_spec(5, 9);
    s.integer_counts = true;
    s.pop_min = 2000;
    s.pop_max = 6000;
    const auto g = generate(s);
    RawOptions opt;
    opt.invalid_records = 6;
    opt.first_day_heaping = 0.0;
    const auto raw = generate_raw(g, opt);
    const auto dir = testing_support::scratch_dir("synth_raw");
    std::ofstream(dir / "records.csv") << records_table(raw.records).str();
    std::ofstream(dir / "population.csv") << population_table(raw.population).str();
    const auto range = g.panel.grid().range();
    const auto pop = load_population(dir / "population.csv");
    const auto rec = load_records(dir / "records.csv", {}, pop.table.registry(), range);
    EXPECT_EQ(rec.rejected.size(), 6u);
    const PanelInputs in{&rec.table, &pop.table, nullptr, nullptr, nullptr};
    const auto built = build_panel(in, range).panel;
    EXPECT_EQ(built.counts(kCat), g.panel.counts(kCat));
    for (const auto& c : main_categories()) {
        if (c == kCat) continue;
        for (auto v : built.counts(c)) EXPECT_EQ(v, 0);
    }
    EXPECT_EQ(built.column(col::population), g.panel.column(col::population));
}

TEST(Synth, InvalidSpecsAreRejected) {
    auto s = testing_support::small_spec(1, 1);
    EXPECT_THROW((void)generate(s), ConfigError);
    s = testing_support::small_spec(3, 1);
    s.ar1 = 1.0;
    EXPECT_THROW((void)generate(s), ConfigError);
    s = testing_support::small_spec(3, 1);
    s.closure_date = calendar::make_date(2022, 1, 3);
    EXPECT_THROW((void)generate(s), ConfigError);
}
