#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "reportgap/calendar.hpp"
#include "reportgap/error.hpp"
#include "reportgap/ingest.hpp"
#include "reportgap/panel.hpp"

namespace reportgap {

struct MunicipalSchedule {
    std::optional<int> first_reopen_week;
    std::map<int, double> openness; // week -> share of enrolled students whose school is open
};

/// National closure week plus per-municipality reopening path.
struct TreatmentSchedule {
    int closure_week = 0;
    std::map<int, MunicipalSchedule> municipalities;
};

/// Builds the schedule from weekly school status rows. A municipality's first
/// reopening week is the first week at or after closure with openness > 0.
inline TreatmentSchedule derive_schedule(const StatusTable& school, const WeekGrid& grid, int closure_week,
                                         const std::vector<int>& municipalities) {
    TreatmentSchedule s;
    s.closure_week = closure_week;
    for (int m : municipalities) s.municipalities[m];
    const auto it = school.values.find("openness");
    if (it == school.values.end()) throw DataError("school status table has no openness field");
    const auto& openness = it->second;
    for (std::size_t r = 0; r < school.size(); ++r) {
        const int week = grid.week_of(school.date[r]);
        auto m = s.municipalities.find(school.municipality[r]);
        if (m == s.municipalities.end() || !grid.contains_week(week)) continue;
        const double v = openness[r];
        if (std::isnan(v)) continue;
        if (v < 0.0 || v > 1.0)
            throw DataError(fmt::format("openness {} outside [0,1] for municipality {}", v, school.municipality[r]));
        m->second.openness[week] = v;
    }
    for (auto& [muni, ms] : s.municipalities) {
        for (const auto& [week, v] : ms.openness) {
            if (week >= closure_week && v > 0.0) {
                ms.first_reopen_week = week;
                break;
            }
        }
    }
    return s;
}

/// Writes closure / reopen_binary / reopen_share. Closure holds on
/// [closure_week, first_reopen_week); reopening is absorbing from
/// first_reopen_week on. In reopened weeks without a positive openness
/// observation the last positive openness is carried forward.
inline PanelDataset encode_treatments(PanelDataset panel, const TreatmentSchedule& schedule) {
    const std::size_t n = panel.size();
    std::vector<double> closure(n, 0.0), reopen(n, 0.0), share(n, 0.0);
    for (const auto& [muni, ms] : schedule.municipalities) {
        for (const auto& [week, v] : ms.openness)
            if (!(v >= 0.0 && v <= 1.0))
                throw DataError(fmt::format("openness {} outside [0,1] for municipality {} week {}", v, muni, week));
        if (ms.first_reopen_week && *ms.first_reopen_week <= schedule.closure_week)
            throw DataError(fmt::format("municipality {} reopens in week {}, not after closure week {}", muni,
                                        *ms.first_reopen_week, schedule.closure_week));
    }
    // rows of each municipality in week order
    std::map<int, std::map<int, std::size_t>> rows;
    for (std::size_t i = 0; i < n; ++i) rows[panel.municipality()[i]][panel.week()[i]] = i;
    for (const auto& [muni, by_week] : rows) {
        const auto ms = schedule.municipalities.find(muni);
        if (ms == schedule.municipalities.end())
            throw DataError(fmt::format("treatment schedule does not cover municipality {}", muni));
        const auto& sched = ms->second;
        double carried = 0.0;
        for (const auto& [week, i] : by_week) {
            if (week < schedule.closure_week) continue;
            if (!sched.first_reopen_week || week < *sched.first_reopen_week) {
                closure[i] = 1.0;
                continue;
            }
            reopen[i] = 1.0;
            const auto o = sched.openness.find(week);
            if (o != sched.openness.end() && o->second > 0.0) carried = o->second;
            if (carried <= 0.0) {
                // reopening week without an observation: use the first positive one
                for (const auto& [w, v] : sched.openness)
                    if (w >= *sched.first_reopen_week && v > 0.0) {
                        carried = v;
                        break;
                    }
            }
            share[i] = carried;
        }
    }
    panel.set_column(col::closure, std::move(closure));
    panel.set_column(col::reopen_binary, std::move(reopen));
    panel.set_column(col::reopen_share, std::move(share));
    panel.set_closure_week(schedule.closure_week);
    return panel;
}

/// Share of students whose school is open: 1 before closure, 0 while closed,
/// reopen_share after reopening.
inline std::vector<double> school_opening(const PanelDataset& panel) {
    const auto& cl = panel.column(col::closure);
    const auto& ro = panel.column(col::reopen_binary);
    const auto& sh = panel.column(col::reopen_share);
    std::vector<double> out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) out[i] = (1.0 - cl[i] - ro[i]) + sh[i];
    return out;
}

enum class SampleRule { full, no_january_february, attendance_window };

inline std::string to_string(SampleRule r) {
    switch (r) {
    case SampleRule::full: return "full";
    case SampleRule::no_january_february: return "no_january_february";
    case SampleRule::attendance_window: return "attendance_window";
    }
    return "?";
}

inline SampleRule parse_sample_rule(std::string_view s) {
    if (s == "full") return SampleRule::full;
    if (s == "no_january_february") return SampleRule::no_january_february;
    if (s == "attendance_window") return SampleRule::attendance_window;
    throw ConfigError(fmt::format("unknown sample rule '{}'", s));
}

/// True when any day of the Monday-starting week falls in January or February.
inline bool week_touches_jan_feb(Date monday) {
    for (int d = 0; d < 7; ++d) {
        const int m = calendar::month_of(monday + std::chrono::days{d});
        if (m == 1 || m == 2) return true;
    }
    return false;
}

/// Applies a sample exclusion. `attendance_window` keeps the cells where the
/// attendance interaction is defined: attendance observed, or no reopening
/// exposure (the interaction is then identically zero).
inline PanelDataset filter_sample(const PanelDataset& panel, SampleRule rule) {
    PanelDataset out;
    switch (rule) {
    case SampleRule::full:
        out = panel;
        break;
    case SampleRule::no_january_february:
        out = panel.filter([&](std::size_t i) { return !week_touches_jan_feb(panel.week_start(i)); });
        break;
    case SampleRule::attendance_window: {
        const auto& att = panel.column(col::attendance);
        const auto& ro = panel.column(col::reopen_binary);
        out = panel.filter([&](std::size_t i) { return !std::isnan(att[i]) || ro[i] == 0.0; });
        break;
    }
    }
    if (out.empty()) throw DataError(fmt::format("sample rule '{}' leaves no cells", to_string(rule)));
    return out;
}

enum class LockdownStratum { early, late, never };

inline std::string to_string(LockdownStratum s) {
    switch (s) {
    case LockdownStratum::early: return "early_lockdown";
    case LockdownStratum::late: return "late_lockdown";
    case LockdownStratum::never: return "no_lockdown";
    }
    return "?";
}

/// Early when the first quarantined week starts on or before `early_until`,
/// late otherwise, never when no quarantine row is positive.
inline std::map<int, LockdownStratum> lockdown_strata(const StatusTable& quarantine, const std::vector<int>& municipalities,
                                                      Date early_until = calendar::make_date(2020, 8, 30)) {
    std::map<int, std::optional<Date>> first;
    for (int m : municipalities) first[m];
    const auto it = quarantine.values.find(col::quarantine);
    if (it == quarantine.values.end()) throw DataError("quarantine table has no quarantine field");
    for (std::size_t r = 0; r < quarantine.size(); ++r) {
        auto f = first.find(quarantine.municipality[r]);
        if (f == first.end() || !(it->second[r] > 0.0)) continue;
        if (!f->second || quarantine.date[r] < *f->second) f->second = quarantine.date[r];
    }
    std::map<int, LockdownStratum> out;
    for (const auto& [m, d] : first)
        out[m] = !d ? LockdownStratum::never : (*d <= early_until ? LockdownStratum::early : LockdownStratum::late);
    return out;
}

struct AgeBand {
    int lo = 0;
    int hi = 17;
};

struct SexGroup {
    std::optional<Sex> sex; // nullopt = all
};

/// A named estimation subgroup: age band, sex, or lockdown-timing stratum.
struct Group {
    std::string label;
    std::variant<AgeBand, SexGroup, LockdownStratum> definition;
};

/// Rebuilds and re-encodes the panel for one subgroup: counts, populations,
/// rates and weights are recomputed from the subgroup's records only.
inline PanelDataset subgroup_panel(const PanelInputs& in, DateRange range, const TreatmentSchedule& schedule,
                                   const Group& group, const std::map<int, LockdownStratum>& strata = {}) {
    SubgroupFilter filter;
    if (const auto* band = std::get_if<AgeBand>(&group.definition)) {
        if (band->lo < 0 || band->hi > 17 || band->lo > band->hi)
            throw ConfigError(fmt::format("invalid age band [{}, {}]", band->lo, band->hi));
        filter.age_band = std::pair{band->lo, band->hi};
    } else if (const auto* sex = std::get_if<SexGroup>(&group.definition)) {
        filter.sex = sex->sex;
    } else {
        const auto stratum = std::get<LockdownStratum>(group.definition);
        std::set<int> keep;
        for (const auto& [m, s] : strata)
            if (s == stratum) keep.insert(m);
        if (keep.empty()) throw DataError(fmt::format("subgroup '{}' is empty", group.label));
        filter.municipalities = std::move(keep);
    }
    auto built = build_panel(in, range, filter);
    const auto& pop = built.panel.column(col::population);
    double total = 0.0;
    for (double p : pop) total += p;
    if (total <= 0.0) throw DataError(fmt::format("subgroup '{}' has zero population", group.label));
    return encode_treatments(std::move(built.panel), schedule);
}

} // namespace reportgap
