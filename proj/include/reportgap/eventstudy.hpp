#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "reportgap/did.hpp"
#include "reportgap/error.hpp"
#include "reportgap/festimator.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/stats.hpp"

namespace reportgap {

enum class EventKind { closure, reopening };

inline std::string to_string(EventKind e) { return e == EventKind::closure ? "closure" : "reopening"; }

/// Leads 2..J and lags 0..K around an event; the terminal lead and lag absorb
/// every more distant period and lead 1 is the omitted base.
struct EventWindow {
    EventKind event = EventKind::closure;
    int leads = 60; // J
    int lags = 20;  // K

    void validate() const {
        if (leads < 2) throw ConfigError("event window needs at least 2 leads (lead 1 is the omitted base)");
        if (lags < 0) throw ConfigError("event window lags must be nonnegative");
    }

    static EventWindow closure_default() { return {EventKind::closure, 60, 20}; }
    static EventWindow reopening_default() { return {EventKind::reopening, 20, 40}; }
};

inline std::string lead_name(int j) { return fmt::format("lead_{}", j); }
inline std::string lag_name(int k) { return fmt::format("lag_{}", k); }

struct EventDesign {
    std::vector<std::size_t> rows;          // panel rows kept (municipalities with the event)
    std::vector<std::string> names;         // lead_J..lead_2, lag_0..lag_K
    std::vector<int> event_times;           // -J..-2, 0..K, aligned with names
    ColumnMap columns;                      // indicator columns over `rows`
    std::vector<int> excluded_municipalities;
};

/// Event week per municipality: the national closure week, or each
/// municipality's first reopening week.
inline std::map<int, int> event_weeks(const PanelDataset& panel, EventKind event) {
    std::map<int, int> out;
    if (event == EventKind::closure) {
        if (panel.closure_week() < 0) throw DataError("panel has no encoded closure week");
        for (int m : panel.municipalities()) out[m] = panel.closure_week();
        return out;
    }
    return first_reopen_weeks(panel);
}

inline EventDesign build_leads_lags(const PanelDataset& panel, const std::map<int, int>& events,
                                    const EventWindow& window) {
    window.validate();
    EventDesign d;
    for (int j = window.leads; j >= 2; --j) {
        d.names.push_back(lead_name(j));
        d.event_times.push_back(-j);
    }
    for (int k = 0; k <= window.lags; ++k) {
        d.names.push_back(lag_name(k));
        d.event_times.push_back(k);
    }
    std::map<int, int> last_week;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const int m = panel.municipality()[i];
        if (!events.count(m)) continue;
        auto [it, ins] = last_week.emplace(m, panel.week()[i]);
        if (!ins) it->second = std::max(it->second, panel.week()[i]);
        d.rows.push_back(i);
    }
    for (int m : panel.municipalities())
        if (!events.count(m)) d.excluded_municipalities.push_back(m);
    if (d.rows.empty()) throw DataError("no municipality experiences the event");
    bool any_span = false;
    for (const auto& [m, last] : last_week)
        if (last - events.at(m) >= window.lags) any_span = true;
    if (!any_span)
        throw DataError(fmt::format("{} lags exceed the post-event span of every municipality", window.lags));

    for (const auto& name : d.names) d.columns[name].assign(d.rows.size(), 0.0);
    std::vector<std::vector<double>*> lead(static_cast<std::size_t>(window.leads + 1), nullptr);
    std::vector<std::vector<double>*> lag(static_cast<std::size_t>(window.lags + 1), nullptr);
    for (int j = 2; j <= window.leads; ++j) lead[static_cast<std::size_t>(j)] = &d.columns[lead_name(j)];
    for (int k = 0; k <= window.lags; ++k) lag[static_cast<std::size_t>(k)] = &d.columns[lag_name(k)];
    for (std::size_t r = 0; r < d.rows.size(); ++r) {
        const auto i = d.rows[r];
        const int rel = panel.week()[i] - events.at(panel.municipality()[i]);
        if (rel <= -window.leads) {
            (*lead[static_cast<std::size_t>(window.leads)])[r] = 1.0;
        } else if (rel <= -2) {
            (*lead[static_cast<std::size_t>(-rel)])[r] = 1.0;
        } else if (rel >= window.lags) {
            (*lag[static_cast<std::size_t>(window.lags)])[r] = 1.0;
        } else if (rel >= 0) {
            (*lag[static_cast<std::size_t>(rel)])[r] = 1.0;
        }
    }
    return d;
}

struct EventPoint {
    int event_time = 0;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct EventStudyResult {
    EventWindow window;
    RegressionFit fit;
    std::vector<EventPoint> path; // ascending event time, base period (-1) included at 0
    std::vector<int> excluded_municipalities;
};

struct EventStudyOptions {
    ControlSet control_set = ControlSet::fe_only;
    bool weighted = true;
    double demean_tolerance = 1e-8;
    int demean_max_iter = 10000;
};

inline EventStudyResult estimate_event_study(const PanelDataset& panel, const std::string& outcome_category,
                                             const EventWindow& window, const EventStudyOptions& opt = {}) {
    const auto events = event_weeks(panel, window.event);
    EventDesign design = build_leads_lags(panel, events, window);
    const PanelDataset sample = panel.subset(design.rows);

    RegressionSpec spec;
    spec.outcome = col::rate(outcome_category);
    spec.regressors = design.names;
    spec.fe_dims = opt.control_set == ControlSet::none ? std::vector<std::string>{}
                                                       : std::vector<std::string>{"municipality", "week_of_year"};
    if (opt.control_set == ControlSet::fe_plus_lockdown_epi)
        for (const auto& c : lockdown_epi_controls()) spec.regressors.push_back(c);
    spec.weights = opt.weighted ? std::optional<std::string>(col::weight) : std::nullopt;
    spec.demean_tolerance = opt.demean_tolerance;
    spec.demean_max_iter = opt.demean_max_iter;

    EventStudyResult out;
    out.window = window;
    out.excluded_municipalities = design.excluded_municipalities;
    out.fit = estimate(spec, sample, &design.columns);
    const double crit = stats::t_critical(0.95, out.fit.df());
    for (std::size_t i = 0; i < design.names.size(); ++i) {
        EventPoint p;
        p.event_time = design.event_times[i];
        p.estimate = out.fit.coef(design.names[i]);
        p.se = out.fit.se(design.names[i]);
        p.ci_low = p.estimate - crit * p.se;
        p.ci_high = p.estimate + crit * p.se;
        out.path.push_back(p);
    }
    out.path.push_back({-1, 0.0, 0.0, 0.0, 0.0});
    std::sort(out.path.begin(), out.path.end(), [](const auto& a, const auto& b) { return a.event_time < b.event_time; });
    return out;
}

} // namespace reportgap
