#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace reportgap;

namespace {

SynthPanel attendance_panel(double attendance_effect, double noise, std::uint64_t seed = 31) {
    auto spec = testing_support::small_spec(16, seed);
    spec.noise_sd = noise;
    spec.outcomes[0].attendance_effect = attendance_effect;
    return generate(spec);
}

RegressionFit fake_fit(const std::vector<std::string>& terms, Eigen::VectorXd b, Eigen::MatrixXd V) {
    RegressionFit f;
    f.terms = terms;
    f.coefficients = std::move(b);
    f.vcov = std::move(V);
    f.n_clusters = 346;
    return f;
}

} // namespace

TEST(Design, ClosureAndBinaryReopeningAreCellwiseOrthogonal) {
    const auto synth = generate(testing_support::small_spec(10, 2));
    const auto& cl = synth.panel.column(col::closure);
    const auto& ro = synth.panel.column(col::reopen_binary);
    for (std::size_t i = 0; i < cl.size(); ++i) EXPECT_EQ(cl[i] * ro[i], 0.0);
}

TEST(Design, ControlSetsSelectRegressorsAndEffects) {
    DesignOptions o;
    o.control_set = ControlSet::none;
    EXPECT_TRUE(design_spec(o).fe_dims.empty());
    o.control_set = ControlSet::fe_only;
    EXPECT_EQ(design_spec(o).fe_dims, (std::vector<std::string>{"municipality", "week_of_year"}));
    EXPECT_EQ(design_spec(o).regressors.size(), 2u);
    o.control_set = ControlSet::fe_plus_lockdown_epi;
    o.reopening_mode = ReopeningMode::continuous;
    const auto s = design_spec(o);
    EXPECT_EQ(s.regressors, (std::vector<std::string>{col::closure, col::reopen_share, col::quarantine, col::covid_cases,
                                                      col::tests, col::positivity}));
}

TEST(Design, AttendanceInteractionRequiresAttendanceWindow) {
    DesignOptions o;
    o.attendance_interaction = true;
    EXPECT_THROW(o.validate(), ConfigError);
    o.sample_rule = SampleRule::attendance_window;
    EXPECT_NO_THROW(o.validate());
}

TEST(Table1, ConstantOutcomeGivesZeroEffectsAndUnitP) {
    auto synth = generate(testing_support::small_spec(8, 5));
    auto& p = synth.panel;
    p.set_rates("intrafamily_violence", std::vector<double>(p.size(), 7.25));
    Table1Grid g;
    g.outcomes = {"intrafamily_violence"};
    for (const auto& f : run_table1(p, g)) {
        const auto reopen = reopen_term(f.options.reopening_mode);
        EXPECT_EQ(f.fit.coef(col::closure), 0.0) << to_string(f.options.control_set);
        EXPECT_EQ(f.fit.coef(reopen), 0.0) << to_string(f.options.control_set);
        EXPECT_EQ(f.beta_eq_gamma.p_value, 1.0) << to_string(f.options.control_set);
        EXPECT_DOUBLE_EQ(f.fit.baseline_mean, 7.25);
    }
}

TEST(Table1, GridHasOneFitPerCombination) {
    auto spec = testing_support::small_spec(8, 6);
    spec.noise_sd = 1.0;
    spec.outcomes.resize(2);
    spec.outcomes[1].category = "rape";
    const auto synth = generate(spec);
    Table1Grid g;
    g.outcomes = {"intrafamily_violence", "rape"};
    const auto fits = run_table1(synth.panel, g);
    EXPECT_EQ(fits.size(), 2u * 3u * 2u);
    for (const auto& f : fits) {
        EXPECT_GE(f.beta_eq_gamma.p_value, 0.0);
        EXPECT_LE(f.beta_eq_gamma.p_value, 1.0);
        EXPECT_FALSE(std::isnan(f.fit.baseline_mean));
        if (f.options.control_set == ControlSet::fe_plus_lockdown_epi) {
            EXPECT_EQ(f.fit.terms.size(), 6u);
        }
    }
}

TEST(Table1, PooledModelWithoutFixedEffectsReproducesPeriodMeans) {
    // two municipalities sharing one schedule: no-FE coefficients are weighted
    // differences of before/during/after means
    auto spec = testing_support::small_spec(2, 7);
    spec.adoption = Adoption::simultaneous;
    spec.noise_sd = 2.0;
    const auto synth = generate(spec);
    const auto& p = synth.panel;
    DesignOptions o;
    o.control_set = ControlSet::none;
    const auto f = run_design(p, o);
    const auto& y = p.column(col::rate("intrafamily_violence"));
    const auto& w = p.column(col::weight);
    const auto& cl = p.column(col::closure);
    const auto& ro = p.column(col::reopen_binary);
    const double pre = oracle::weighted_mean(y, w, [&](std::size_t i) { return cl[i] == 0 && ro[i] == 0; });
    const double during = oracle::weighted_mean(y, w, [&](std::size_t i) { return cl[i] == 1; });
    const double after = oracle::weighted_mean(y, w, [&](std::size_t i) { return ro[i] == 1; });
    EXPECT_NEAR(f.fit.coef(intercept_term), pre, 1e-10);
    EXPECT_NEAR(f.fit.coef(col::closure), during - pre, 1e-10);
    EXPECT_NEAR(f.fit.coef(col::reopen_binary), after - pre, 1e-10);
}

TEST(Attendance, MarginalEffectArithmetic) {
    Eigen::VectorXd b(3);
    b << -1.2, -0.823, 1.022;
    const auto fit = fake_fit({col::closure, col::reopen_binary, interaction_term}, b, Eigen::MatrixXd::Identity(3, 3) * 0.01);
    const auto m = marginal_effect(fit, col::reopen_binary, 0.228);
    EXPECT_NEAR(m.estimate, -0.590, 5e-4);
    EXPECT_NEAR(m.estimate, -0.823 + 1.022 * 0.228, 1e-15);
}

TEST(Attendance, DeltaMethodStandardError) {
    Eigen::MatrixXd A(3, 3);
    A << 1, 0.2, -0.3, 0.2, 2, 0.4, -0.3, 0.4, 1.5;
    const Eigen::MatrixXd V = 0.01 * A * A.transpose();
    const auto fit = fake_fit({col::closure, col::reopen_share, interaction_term}, Eigen::Vector3d(0.1, -0.4, 0.3), V);
    for (double a : {0.0, 0.31, 0.77, 1.0}) {
        const auto m = marginal_effect(fit, col::reopen_share, a);
        EXPECT_NEAR(m.se, std::sqrt(V(1, 1) + a * a * V(2, 2) + 2 * a * V(1, 2)), 1e-15);
    }
}

TEST(Attendance, QuantilesMatchSortOracle) {
    const auto synth = attendance_panel(0.5, 1.0);
    DesignOptions o;
    const std::vector<double> probs{0.25, 0.5, 0.75, 0.9};
    const auto r = run_attendance(synth.panel, o, probs);
    const auto sample = filter_sample(synth.panel, SampleRule::attendance_window);
    std::vector<double> obs;
    for (double a : sample.column(col::attendance))
        if (!std::isnan(a)) obs.push_back(a);
    ASSERT_FALSE(obs.empty());
    ASSERT_EQ(r.margins.size(), probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) EXPECT_EQ(r.margins[k].attendance, oracle::quantile7(obs, probs[k]));
}

TEST(Attendance, FlatInteractionGivesConstantMargins) {
    const auto synth = attendance_panel(0.0, 0.0);
    DesignOptions o;
    o.demean_tolerance = 1e-13;
    const auto r = run_attendance(synth.panel, o);
    const double gamma = r.interaction.fit.coef(col::reopen_binary);
    EXPECT_NEAR(r.interaction.fit.coef(interaction_term), 0.0, 1e-8);
    for (const auto& m : r.margins) EXPECT_NEAR(m.estimate, gamma, 1e-8);
    EXPECT_NEAR(gamma, -0.8, 1e-8);
}

TEST(Attendance, RecoversPlantedInteraction) {
    const auto synth = attendance_panel(1.0, 0.0, 33);
    DesignOptions o;
    o.demean_tolerance = 1e-13;
    const auto r = run_attendance(synth.panel, o);
    EXPECT_NEAR(r.interaction.fit.coef(interaction_term), 1.0, 1e-8);
    EXPECT_NEAR(r.interaction.fit.coef(col::reopen_binary), -0.8, 1e-8);
}

TEST(Attendance, MissingAttendanceInSampleIsError) {
    auto synth = attendance_panel(0.0, 1.0);
    DesignOptions o;
    o.attendance_interaction = true;
    o.sample_rule = SampleRule::full;
    EXPECT_THROW((void)run_design(synth.panel, o), ConfigError);
    auto p = synth.panel;
    p.set_column(col::attendance, std::vector<double>(p.size(), std::nan("")));
    EXPECT_THROW((void)run_attendance(p, DesignOptions{}), DataError);
}

TEST(DvSubclasses, SubclassCountsPartitionIntrafamilyViolence) {
    auto spec = testing_support::small_spec(4, 40);
    spec.integer_counts = true;
    const auto synth = generate(spec);
    const auto raw = generate_raw(synth);
    const auto p = build_panel({&raw.records, &raw.population, nullptr, nullptr, nullptr}, synth.panel.grid().range()).panel;
    const auto& total = p.counts("intrafamily_violence");
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::int64_t s = 0;
        for (const auto& c : dv_subclass_categories()) s += p.counts(c)[i];
        EXPECT_EQ(s, total[i]);
    }
    auto enc = encode_treatments(p, synth.schedule);
    const auto fits = run_dv_subclasses(enc, DesignOptions{});
    EXPECT_EQ(fits.size(), 3u);
}

TEST(Heterogeneity, IdentityGroupMatchesFullSampleDesign) {
    auto spec = testing_support::small_spec(10, 41);
    spec.noise_sd = 1.0;
    const auto synth = generate(spec);
    const DesignOptions o;
    const auto full = run_design(synth.panel, o);
    const auto groups = run_heterogeneity([&](const Group&) { return synth.panel; }, {{"all", SexGroup{}}}, o,
                                          synth.truth.total_population * synth.panel.grid().size());
    ASSERT_EQ(groups.size(), 1u);
    EXPECT_EQ(groups[0].closure.estimate, full.fit.coef(col::closure));
    EXPECT_EQ(groups[0].reopening.estimate, full.fit.coef(col::reopen_binary));
    EXPECT_NEAR(groups[0].population_share, 1.0, 1e-12);
    EXPECT_NEAR(groups[0].reopening_vs_closure.estimate, full.fit.coef(col::reopen_binary) - full.fit.coef(col::closure), 1e-14);
    EXPECT_LT(groups[0].closure.ci_low, groups[0].closure.estimate);
    EXPECT_GT(groups[0].closure.ci_high, groups[0].closure.estimate);
}

TEST(Heterogeneity, SexPartitionYieldsOverlappingIntervalsUnderCommonEffects) {
    auto spec = testing_support::small_spec(30, 42);
    spec.integer_counts = true;
    spec.pop_min = 20000;
    spec.pop_max = 60000;
    spec.outcomes[0].base_rate = 40.0;
    spec.outcomes[0].closure_effect = -10.0;
    spec.outcomes[0].reopening_effect = -5.0;
    const auto synth = generate(spec);
    RawOptions ro;
    ro.female_share = 0.5; // equal rates by sex, matching the even population split
    const auto raw = generate_raw(synth, ro);
    const PanelInputs in{&raw.records, &raw.population, &raw.school, &raw.epi, &raw.quarantine};
    const DateRange range = synth.panel.grid().range();
    const auto groups = run_heterogeneity(
        [&](const Group& g) { return subgroup_panel(in, range, synth.schedule, g); },
        {{"female", SexGroup{Sex::female}}, {"male", SexGroup{Sex::male}}}, DesignOptions{}, synth.truth.total_population);
    ASSERT_EQ(groups.size(), 2u);
    for (auto term : std::initializer_list<TermEstimate GroupEstimate::*>{&GroupEstimate::closure, &GroupEstimate::reopening}) {
        const auto& a = groups[0].*term;
        const auto& b = groups[1].*term;
        EXPECT_TRUE(a.ci_low <= b.ci_high && b.ci_low <= a.ci_high);
    }
    EXPECT_GT(groups[0].closure.estimate, -10.0 - 3 * groups[0].closure.se);
    EXPECT_LT(groups[0].closure.estimate, -10.0 + 3 * groups[0].closure.se);
}
