#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "reportgap/calendar.hpp"
#include "reportgap/did.hpp"
#include "reportgap/error.hpp"
#include "reportgap/festimator.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/treatments.hpp"

namespace reportgap {

enum class Channel { time_only, with_school_opening, with_school_opening_and_epi };

inline std::string to_string(Channel c) {
    switch (c) {
    case Channel::time_only: return "time_only";
    case Channel::with_school_opening: return "with_school_opening";
    case Channel::with_school_opening_and_epi: return "with_school_opening_and_epi";
    }
    return "?";
}

inline Channel parse_channel(std::string_view s) {
    if (s == "time_only") return Channel::time_only;
    if (s == "with_school_opening") return Channel::with_school_opening;
    if (s == "with_school_opening_and_epi") return Channel::with_school_opening_and_epi;
    throw ConfigError(fmt::format("unknown counterfactual channel '{}'", s));
}

inline constexpr const char* school_opening_term = "school_opening";

/// Secular trend time: years elapsed since the first grid week.
inline double trend_time(int week) { return static_cast<double>(week) / 52.0; }

inline std::string trend_term(int power) { return fmt::format("trend_{}", power); }

struct ProjectionOptions {
    bool weighted = true;
    double demean_tolerance = 1e-10;
    int demean_max_iter = 100000;
};

/// Pre-period projection: intercept + week-of-year + municipal effects + a
/// polynomial trend, optionally with the school-opening channel and controls.
struct CounterfactualModel {
    Channel channel = Channel::time_only;
    int window_start_year = 0;
    int trend_degree = 0;
    std::string outcome;
    double intercept = 0.0;
    std::map<int, double> woy_effects;       // week-of-year 1..52, weighted mean zero
    std::map<int, double> municipal_effects; // weighted mean zero
    std::vector<double> trend;               // coefficient of t^1..t^degree
    std::optional<double> school_opening_coefficient;
    std::map<std::string, double> control_coefficients;
    double rmspe = std::nan("");
    std::size_t n_obs = 0;

    /// Projected rate for a panel cell. Throws when the cell's municipality or
    /// week-of-year has no fitted effect.
    [[nodiscard]] double predict(const PanelDataset& panel, std::size_t row, const std::vector<double>* opening) const {
        const int m = panel.municipality()[row];
        const auto mf = municipal_effects.find(m);
        if (mf == municipal_effects.end())
            throw DataError(fmt::format("municipality {} is absent from the projection model", m));
        const auto wf = woy_effects.find(panel.week_of_year()[row]);
        if (wf == woy_effects.end())
            throw DataError(fmt::format("week-of-year {} is absent from the projection model", panel.week_of_year()[row]));
        double v = intercept + mf->second + wf->second;
        const double t = trend_time(panel.week()[row]);
        double tp = 1.0;
        for (double c : trend) {
            tp *= t;
            v += c * tp;
        }
        if (school_opening_coefficient) v += *school_opening_coefficient * (*opening)[row];
        for (const auto& [name, c] : control_coefficients) v += c * panel.column(name)[row];
        return v;
    }
};

namespace detail {

/// Recovers additive municipal and week-of-year levels of `r` by alternating
/// weighted means (r ~ a_m + c_w), normalised to weighted mean zero with the
/// common level returned separately.
inline void solve_two_way_levels(const std::vector<int>& muni, const std::vector<int>& woy, const std::vector<double>& w,
                                 const std::vector<double>& r, CounterfactualModel& model) {
    std::map<int, double> a, c, wa, wc;
    for (std::size_t i = 0; i < r.size(); ++i) {
        wa[muni[i]] += w[i];
        wc[woy[i]] += w[i];
        a[muni[i]] = 0.0;
        c[woy[i]] = 0.0;
    }
    double scale = 0.0;
    for (double v : r) scale = std::max(scale, std::fabs(v));
    if (scale == 0.0) scale = 1.0;
    for (int it = 0; it < 100000; ++it) {
        std::map<int, double> na, nc;
        for (std::size_t i = 0; i < r.size(); ++i) na[muni[i]] += w[i] * (r[i] - c[woy[i]]);
        double change = 0.0;
        for (auto& [k, v] : na) {
            v /= wa[k];
            change = std::max(change, std::fabs(v - a[k]));
        }
        a = std::move(na);
        for (std::size_t i = 0; i < r.size(); ++i) nc[woy[i]] += w[i] * (r[i] - a[muni[i]]);
        for (auto& [k, v] : nc) {
            v /= wc[k];
            change = std::max(change, std::fabs(v - c[k]));
        }
        c = std::move(nc);
        if (change < 1e-13 * scale) break;
        if (it == 99999) throw NumericalError("fixed-effect level recovery did not converge");
    }
    double total = 0.0, abar = 0.0, cbar = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        total += w[i];
        abar += w[i] * a[muni[i]];
        cbar += w[i] * c[woy[i]];
    }
    abar /= total;
    cbar /= total;
    model.intercept = abar + cbar;
    for (auto& [k, v] : a) model.municipal_effects[k] = v - abar;
    for (auto& [k, v] : c) model.woy_effects[k] = v - cbar;
}

} // namespace detail

/// Design columns (trend powers, school opening) for the projection regressions.
inline ColumnMap projection_columns(const PanelDataset& panel, int degree, Channel channel) {
    ColumnMap extra;
    for (int p = 1; p <= degree; ++p) {
        std::vector<double> v(panel.size());
        for (std::size_t i = 0; i < panel.size(); ++i) v[i] = std::pow(trend_time(panel.week()[i]), p);
        extra[trend_term(p)] = std::move(v);
    }
    if (channel != Channel::time_only) extra[school_opening_term] = school_opening(panel);
    return extra;
}

/// Fits the projection on cells from `window_start_year` on. The time-only
/// channel uses pre-closure cells only; school-opening channels use every cell
/// from the window start so the opening coefficient is identified.
inline CounterfactualModel fit_projection(const PanelDataset& panel, const std::string& outcome_category, int degree,
                                          int window_start_year, Channel channel, const ProjectionOptions& opt = {}) {
    if (degree < 0 || degree > 2) throw ConfigError(fmt::format("trend degree {} not in {{0,1,2}}", degree));
    const int closure = panel.closure_week();
    if (closure < 0) throw DataError("panel has no encoded closure week");
    const PanelDataset sample = panel.filter([&](std::size_t i) {
        return panel.year()[i] >= window_start_year && (channel != Channel::time_only || panel.week()[i] < closure);
    });
    std::vector<int> weeks(sample.week());
    std::sort(weeks.begin(), weeks.end());
    weeks.erase(std::unique(weeks.begin(), weeks.end()), weeks.end());
    if (weeks.size() < 52)
        throw DataError(fmt::format("degenerate projection window from {}: {} weeks, need a full year", window_start_year,
                                    weeks.size()));

    CounterfactualModel model;
    model.channel = channel;
    model.window_start_year = window_start_year;
    model.trend_degree = degree;
    model.outcome = outcome_category;
    const auto extra = projection_columns(sample, degree, channel);

    RegressionSpec spec;
    spec.outcome = col::rate(outcome_category);
    for (int p = 1; p <= degree; ++p) spec.regressors.push_back(trend_term(p));
    if (channel != Channel::time_only) spec.regressors.emplace_back(school_opening_term);
    if (channel == Channel::with_school_opening_and_epi)
        for (const auto& c : lockdown_epi_controls()) spec.regressors.push_back(c);
    spec.weights = opt.weighted ? std::optional<std::string>(col::weight) : std::nullopt;
    spec.demean_tolerance = opt.demean_tolerance;
    spec.demean_max_iter = opt.demean_max_iter;

    const auto& y = sample.column(spec.outcome);
    std::vector<std::size_t> rows;
    std::vector<double> slopes;
    if (!spec.regressors.empty()) {
        const auto fit = estimate(spec, sample, &extra);
        rows = fit.rows;
        slopes.assign(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
    } else {
        const auto& w = sample.column(col::weight);
        for (std::size_t i = 0; i < sample.size(); ++i)
            if ((!opt.weighted || w[i] > 0.0) && std::isfinite(y[i])) rows.push_back(i);
    }
    if (rows.empty()) throw DataError("projection window has no usable cells");

    std::vector<int> muni, woy;
    std::vector<double> w, r;
    const auto* wcol = opt.weighted ? &sample.column(col::weight) : nullptr;
    for (auto i : rows) {
        double v = y[i];
        for (std::size_t j = 0; j < spec.regressors.size(); ++j) {
            const auto& name = spec.regressors[j];
            const auto it = extra.find(name);
            v -= slopes[j] * (it != extra.end() ? it->second[i] : sample.column(name)[i]);
        }
        muni.push_back(sample.municipality()[i]);
        woy.push_back(sample.week_of_year()[i]);
        w.push_back(wcol ? (*wcol)[i] : 1.0);
        r.push_back(v);
    }
    detail::solve_two_way_levels(muni, woy, w, r, model);
    for (std::size_t j = 0; j < spec.regressors.size(); ++j) {
        const auto& name = spec.regressors[j];
        if (name.rfind("trend_", 0) == 0) {
            model.trend.push_back(slopes[j]);
        } else if (name == school_opening_term) {
            model.school_opening_coefficient = slopes[j];
        } else {
            model.control_coefficients[name] = slopes[j];
        }
    }
    model.n_obs = rows.size();
    return model;
}

/// Validation cells: week start inside [from, to] and before national closure.
struct ValidationWindow {
    Date from = calendar::make_date(2019, 1, 1);
    Date to = calendar::make_date(2020, 2, 29);
};

inline std::vector<std::size_t> validation_rows(const PanelDataset& panel, const ValidationWindow& v) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const Date d = panel.week_start(i);
        if (d >= v.from && d <= v.to && (panel.closure_week() < 0 || panel.week()[i] < panel.closure_week()))
            rows.push_back(i);
    }
    return rows;
}

/// Root of the mean squared cell-level prediction error over validation cells
/// (unweighted by default).
inline double rmspe(const CounterfactualModel& model, const PanelDataset& panel, const std::vector<std::size_t>& rows,
                    bool weighted = false) {
    if (rows.empty()) throw DataError("empty validation set");
    const auto& y = panel.column(col::rate(model.outcome));
    const auto& w = panel.column(col::weight);
    const std::vector<double> opening =
        model.school_opening_coefficient ? school_opening(panel) : std::vector<double>{};
    double num = 0.0, den = 0.0;
    for (auto i : rows) {
        const double e = y[i] - model.predict(panel, i, &opening);
        const double wi = weighted ? w[i] : 1.0;
        num += wi * e * e;
        den += wi;
    }
    if (!(den > 0.0)) throw DataError("validation cells carry zero weight");
    return std::sqrt(num / den);
}

struct GridEntry {
    int window_start_year = 0;
    int degree = 0;
    double rmspe = 0.0;
    CounterfactualModel model;
};

struct ModelSelection {
    CounterfactualModel best;
    std::vector<GridEntry> grid; // window-major, degree-minor order
    std::size_t best_index = 0;
};

struct SelectionOptions {
    std::vector<int> degrees{0, 1, 2};
    std::vector<int> window_starts{2015, 2016, 2017, 2018};
    ValidationWindow validation;
    bool weighted_rmspe = false;
    ProjectionOptions projection;
};

/// True when `a` should be preferred over the incumbent `b`: lower RMSPE, or a
/// tie (within 1e-12 relative) broken by lower degree then later window start.
inline bool prefer(const GridEntry& a, const GridEntry& b) {
    const double tol = 1e-12 * std::max({1.0, a.rmspe, b.rmspe});
    if (a.rmspe < b.rmspe - tol) return true;
    if (a.rmspe > b.rmspe + tol) return false;
    if (a.degree != b.degree) return a.degree < b.degree;
    return a.window_start_year > b.window_start_year;
}

inline ModelSelection select_model(const PanelDataset& panel, const std::string& outcome_category, Channel channel,
                                   const SelectionOptions& opt = {}) {
    const auto rows = validation_rows(panel, opt.validation);
    ModelSelection out;
    for (int start : opt.window_starts)
        for (int degree : opt.degrees) {
            GridEntry e;
            e.window_start_year = start;
            e.degree = degree;
            e.model = fit_projection(panel, outcome_category, degree, start, channel, opt.projection);
            e.rmspe = rmspe(e.model, panel, rows, opt.weighted_rmspe);
            e.model.rmspe = e.rmspe;
            out.grid.push_back(std::move(e));
        }
    if (out.grid.empty()) throw ConfigError("empty model grid");
    for (std::size_t i = 1; i < out.grid.size(); ++i)
        if (prefer(out.grid[i], out.grid[out.best_index])) out.best_index = i;
    out.best = out.grid[out.best_index].model;
    return out;
}

struct WeeklyDifferential {
    int week = 0;
    double actual_total = 0.0;
    double projected_total = 0.0; // unscaled projection, cases
    double differential = 0.0;    // scale * projected - actual, cases
    double ci_low = std::nan("");
    double ci_high = std::nan("");
    double projected_ci_low = std::nan("");
    double projected_ci_high = std::nan("");
};

struct PeriodAggregate {
    std::string period; // closure, reopening, total
    double differential = 0.0;
    double projected = 0.0;
    double actual = 0.0;
    int weeks = 0;
    double ci_low = std::nan("");
    double ci_high = std::nan("");
};

struct DifferentialSeries {
    std::string outcome;
    Channel channel = Channel::time_only;
    double scale_factor = 1.0;
    std::vector<WeeklyDifferential> weeks;
    std::vector<PeriodAggregate> periods; // closure, reopening, total

    [[nodiscard]] const PeriodAggregate& period(std::string_view name) const {
        for (const auto& p : periods)
            if (p.period == name) return p;
        throw std::out_of_range(fmt::format("no period '{}'", name));
    }
};

/// Projects post-closure cells and converts per-cell differences
/// (scale * projected - actual, positive = missing reports) to national weekly
/// case counts with population / 100,000. Periods split at each municipality's
/// own first reopening week.
inline DifferentialSeries project_and_difference(const CounterfactualModel& model, const PanelDataset& panel,
                                                 double scale_factor = 1.0) {
    if (!(scale_factor >= 1.0)) throw ConfigError("scale factor must be >= 1");
    const int closure = panel.closure_week();
    if (closure < 0) throw DataError("panel has no encoded closure week");
    const auto& y = panel.column(col::rate(model.outcome));
    const auto& pop = panel.column(col::population);
    const auto reopen = first_reopen_weeks(panel);
    const std::vector<double> opening =
        model.school_opening_coefficient ? school_opening(panel) : std::vector<double>{};

    DifferentialSeries s;
    s.outcome = model.outcome;
    s.channel = model.channel;
    s.scale_factor = scale_factor;
    std::map<int, WeeklyDifferential> by_week;
    PeriodAggregate closure_p{"closure"}, reopen_p{"reopening"}, total_p{"total"};
    std::set<int> closure_weeks, reopen_weeks;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const int week = panel.week()[i];
        if (week < closure) continue;
        const double proj = model.predict(panel, i, &opening);
        const double f = pop[i] / per_100k;
        const double diff = (scale_factor * proj - y[i]) * f;
        auto& wk = by_week[week];
        wk.week = week;
        wk.actual_total += y[i] * f;
        wk.projected_total += proj * f;
        wk.differential += diff;
        const auto r = reopen.find(panel.municipality()[i]);
        const bool reopened = r != reopen.end() && week >= r->second;
        auto& p = reopened ? reopen_p : closure_p;
        (reopened ? reopen_weeks : closure_weeks).insert(week);
        for (auto* agg : {&p, &total_p}) {
            agg->differential += diff;
            agg->projected += proj * f;
            agg->actual += y[i] * f;
        }
    }
    closure_p.weeks = static_cast<int>(closure_weeks.size());
    reopen_p.weeks = static_cast<int>(reopen_weeks.size());
    total_p.weeks = static_cast<int>(by_week.size());
    for (auto& [w, v] : by_week) s.weeks.push_back(v);
    s.periods = {closure_p, reopen_p, total_p};
    return s;
}

struct ChannelShare {
    std::string period;
    double share = 0.0;
};

/// Share of the time-only differential explained by the school channel:
/// (aggregate_time_only - aggregate_with_channel) / aggregate_time_only.
inline std::vector<ChannelShare> school_channel_share(const DifferentialSeries& time_only,
                                                      const DifferentialSeries& with_channel) {
    std::vector<ChannelShare> out;
    for (const auto& p : time_only.periods) {
        const auto& q = with_channel.period(p.period);
        if (p.differential == 0.0)
            throw NumericalError(fmt::format("zero time-only differential in period '{}'", p.period));
        out.push_back({p.period, (p.differential - q.differential) / p.differential});
    }
    return out;
}

} // namespace reportgap
