#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "reportgap/error.hpp"
#include "reportgap/festimator.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/stats.hpp"
#include "reportgap/treatments.hpp"

namespace reportgap {

enum class ReopeningMode { binary, continuous };
enum class ControlSet { none, fe_only, fe_plus_lockdown_epi };

inline std::string to_string(ReopeningMode m) { return m == ReopeningMode::binary ? "binary" : "continuous"; }

inline std::string to_string(ControlSet c) {
    switch (c) {
    case ControlSet::none: return "none";
    case ControlSet::fe_only: return "fe_only";
    case ControlSet::fe_plus_lockdown_epi: return "fe_plus_lockdown_epi";
    }
    return "?";
}

inline ReopeningMode parse_reopening_mode(std::string_view s) {
    if (s == "binary") return ReopeningMode::binary;
    if (s == "continuous") return ReopeningMode::continuous;
    throw ConfigError(fmt::format("unknown reopening mode '{}'", s));
}

inline ControlSet parse_control_set(std::string_view s) {
    if (s == "none") return ControlSet::none;
    if (s == "fe_only") return ControlSet::fe_only;
    if (s == "fe_plus_lockdown_epi") return ControlSet::fe_plus_lockdown_epi;
    throw ConfigError(fmt::format("unknown control set '{}'", s));
}

inline const std::vector<std::string>& lockdown_epi_controls() {
    static const std::vector<std::string> v{col::quarantine, col::covid_cases, col::tests, col::positivity};
    return v;
}

inline constexpr const char* interaction_term = "reopen_x_attendance";

struct DesignOptions {
    ReopeningMode reopening_mode = ReopeningMode::binary;
    ControlSet control_set = ControlSet::fe_only;
    std::string outcome_category = "intrafamily_violence";
    SampleRule sample_rule = SampleRule::full;
    bool attendance_interaction = false;
    bool weighted = true;
    double demean_tolerance = 1e-8;
    int demean_max_iter = 10000;

    void validate() const {
        if (attendance_interaction && sample_rule != SampleRule::attendance_window)
            throw ConfigError("attendance interaction requires the attendance_window sample rule");
    }
};

inline std::string reopen_term(ReopeningMode m) {
    return m == ReopeningMode::binary ? col::reopen_binary : col::reopen_share;
}

/// Regression spec for a design.
inline RegressionSpec design_spec(const DesignOptions& o) {
    RegressionSpec s;
    s.outcome = col::rate(o.outcome_category);
    s.regressors = {col::closure, reopen_term(o.reopening_mode)};
    if (o.attendance_interaction) s.regressors.emplace_back(interaction_term);
    if (o.control_set == ControlSet::none) {
        s.fe_dims = {};
    } else {
        s.fe_dims = {"municipality", "week_of_year"};
    }
    if (o.control_set == ControlSet::fe_plus_lockdown_epi)
        for (const auto& c : lockdown_epi_controls()) s.regressors.push_back(c);
    s.weights = o.weighted ? std::optional<std::string>(col::weight) : std::nullopt;
    s.demean_tolerance = o.demean_tolerance;
    s.demean_max_iter = o.demean_max_iter;
    return s;
}

struct DesignFit {
    DesignOptions options;
    RegressionFit fit;
    WaldResult beta_eq_gamma;
};

/// Estimates one design on the panel (after applying its sample rule).
inline DesignFit run_design(const PanelDataset& panel, const DesignOptions& o) {
    o.validate();
    const PanelDataset sample = filter_sample(panel, o.sample_rule);
    DesignFit out{o, {}, {}};
    if (o.attendance_interaction) {
        ColumnMap extra;
        const auto& att = sample.column(col::attendance);
        const auto& ro = sample.column(reopen_term(o.reopening_mode));
        const auto& rb = sample.column(col::reopen_binary);
        std::vector<double> inter(sample.size());
        for (std::size_t i = 0; i < sample.size(); ++i) {
            if (rb[i] == 0.0) {
                inter[i] = 0.0;
            } else if (std::isnan(att[i])) {
                throw DataError("attendance missing for a reopened cell in the estimation sample");
            } else {
                inter[i] = ro[i] * att[i];
            }
        }
        extra[interaction_term] = std::move(inter);
        out.fit = estimate(design_spec(o), sample, &extra);
    } else {
        out.fit = estimate(design_spec(o), sample);
    }
    out.beta_eq_gamma = wald_linear(out.fit, Contrast::difference(col::closure, reopen_term(o.reopening_mode)));
    return out;
}

/// Main grid: one fit per outcome x control set x reopening mode.
struct Table1Grid {
    std::vector<std::string> outcomes{"intrafamily_violence", "sexual_abuse", "rape"};
    std::vector<ControlSet> control_sets{ControlSet::none, ControlSet::fe_only, ControlSet::fe_plus_lockdown_epi};
    std::vector<ReopeningMode> modes{ReopeningMode::binary, ReopeningMode::continuous};
    SampleRule sample_rule = SampleRule::full;
    bool weighted = true;
    double demean_tolerance = 1e-8;
    int demean_max_iter = 10000;
};

inline std::vector<DesignFit> run_table1(const PanelDataset& panel, const Table1Grid& grid) {
    std::vector<DesignFit> out;
    for (auto mode : grid.modes)
        for (const auto& outcome : grid.outcomes)
            for (auto cs : grid.control_sets) {
                DesignOptions o;
                o.reopening_mode = mode;
                o.control_set = cs;
                o.outcome_category = outcome;
                o.sample_rule = grid.sample_rule;
                o.weighted = grid.weighted;
                o.demean_tolerance = grid.demean_tolerance;
                o.demean_max_iter = grid.demean_max_iter;
                out.push_back(run_design(panel, o));
            }
    return out;
}

struct MarginalEffect {
    double probability = 0.0;
    double attendance = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

struct AttendanceResult {
    DesignFit baseline;    // same sample, no interaction
    DesignFit interaction; // with reopening x attendance
    std::vector<MarginalEffect> margins;
};

/// gamma + delta*a with delta-method SE sqrt(v_gg + a^2 v_dd + 2a v_gd).
inline MarginalEffect marginal_effect(const RegressionFit& fit, const std::string& reopen, double a) {
    const auto g = static_cast<Eigen::Index>(fit.index(reopen));
    const auto d = static_cast<Eigen::Index>(fit.index(interaction_term));
    MarginalEffect m;
    m.attendance = a;
    m.estimate = fit.coefficients(g) + a * fit.coefficients(d);
    const double var = fit.vcov(g, g) + a * a * fit.vcov(d, d) + 2.0 * a * fit.vcov(g, d);
    m.se = std::sqrt(std::max(0.0, var));
    m.p_value = m.se > 0.0 ? stats::two_sided_p(m.estimate / m.se, fit.df()) : 1.0;
    return m;
}

/// Attendance interaction model with marginal reopening effects at type-7
/// quantiles of attendance over estimation-sample cells where it is observed.
inline AttendanceResult run_attendance(const PanelDataset& panel, DesignOptions o,
                                       const std::vector<double>& probabilities = {0.25, 0.50, 0.75, 0.90}) {
    o.sample_rule = SampleRule::attendance_window;
    o.attendance_interaction = false;
    {
        const auto& att = panel.column(col::attendance);
        const auto& rb = panel.column(col::reopen_binary);
        bool any = false;
        for (std::size_t i = 0; i < panel.size() && !any; ++i) any = rb[i] == 1.0 && !std::isnan(att[i]);
        if (!any) throw DataError("attendance is missing for every reopened cell; the interaction is not identified");
    }
    AttendanceResult out;
    out.baseline = run_design(panel, o);
    o.attendance_interaction = true;
    out.interaction = run_design(panel, o);
    const PanelDataset sample = filter_sample(panel, o.sample_rule);
    const auto& att = sample.column(col::attendance);
    std::vector<double> observed;
    for (auto r : out.interaction.fit.rows)
        if (!std::isnan(att[r])) observed.push_back(att[r]);
    if (observed.empty()) throw DataError("no observed attendance in the estimation sample");
    std::sort(observed.begin(), observed.end());
    for (double p : probabilities) {
        auto m = marginal_effect(out.interaction.fit, reopen_term(o.reopening_mode), stats::quantile_sorted(observed, p));
        m.probability = p;
        out.margins.push_back(m);
    }
    return out;
}

/// Same design per intra-family violence subclass outcome.
inline std::vector<DesignFit> run_dv_subclasses(const PanelDataset& panel, DesignOptions o,
                                                const std::vector<std::string>& subclasses = {"dv_psychological",
                                                                                              "dv_physical_moderate",
                                                                                              "dv_physical_serious"}) {
    std::vector<DesignFit> out;
    for (const auto& s : subclasses) {
        o.outcome_category = s;
        out.push_back(run_design(panel, o));
    }
    return out;
}

struct TermEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
};

inline TermEstimate term_estimate(const RegressionFit& fit, const std::string& term, double level = 0.95) {
    TermEstimate t;
    t.estimate = fit.coef(term);
    t.se = fit.se(term);
    const double c = stats::t_critical(level, fit.df());
    t.ci_low = t.estimate - c * t.se;
    t.ci_high = t.estimate + c * t.se;
    t.p_value = fit.p(term);
    return t;
}

struct GroupEstimate {
    std::string label;
    DesignFit design;
    TermEstimate closure;
    TermEstimate reopening;
    TermEstimate reopening_vs_closure;
    double baseline_mean = 0.0;
    double population_share = 0.0;
};

/// Fits the design on each group's own panel (weights = subgroup population).
/// `full_population` is the reference for population shares.
inline std::vector<GroupEstimate> run_heterogeneity(const std::function<PanelDataset(const Group&)>& builder,
                                                    const std::vector<Group>& groups, const DesignOptions& o,
                                                    double full_population) {
    std::vector<GroupEstimate> out;
    for (const auto& g : groups) {
        const PanelDataset panel = builder(g);
        GroupEstimate e;
        e.label = g.label;
        e.design = run_design(panel, o);
        const auto& fit = e.design.fit;
        const auto reopen = reopen_term(o.reopening_mode);
        e.closure = term_estimate(fit, col::closure);
        e.reopening = term_estimate(fit, reopen);
        const auto diff = wald_linear(fit, Contrast::difference(reopen, col::closure));
        const double c = stats::t_critical(0.95, fit.df());
        e.reopening_vs_closure = {diff.estimate, diff.se, diff.estimate - c * diff.se, diff.estimate + c * diff.se,
                                  diff.p_value};
        e.baseline_mean = fit.baseline_mean;
        double pop = 0.0;
        const auto& p = panel.column(col::population);
        for (std::size_t i = 0; i < panel.size(); ++i) pop += p[i];
        e.population_share = full_population > 0.0 ? pop / full_population : std::nan("");
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace reportgap
