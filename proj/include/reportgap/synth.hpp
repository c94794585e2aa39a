#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "reportgap/calendar.hpp"
#include "reportgap/csv.hpp"
#include "reportgap/error.hpp"
#include "reportgap/ingest.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/treatments.hpp"

namespace reportgap {

enum class Adoption { simultaneous, staggered };

inline std::string to_string(Adoption a) { return a == Adoption::simultaneous ? "simultaneous" : "staggered"; }

inline Adoption parse_adoption(std::string_view s) {
    if (s == "simultaneous") return Adoption::simultaneous;
    if (s == "staggered") return Adoption::staggered;
    throw ConfigError(fmt::format("unknown adoption pattern '{}'", s));
}

/// Planted outcome process, in rate units (cases per 100,000 minors per week).
struct OutcomeDgp {
    std::string category = "intrafamily_violence";
    double base_rate = 20.0;
    double closure_effect = -1.5;   // on the closure indicator
    double reopening_effect = -0.8; // on reopen_binary, or reopen_share when continuous
    double attendance_effect = 0.0; // on reopening x attendance
    double cohort_step = 0.0;       // reopening effect shifts by this per reopening cohort rank
    double closure_event_effect = 0.0;   // level shift from the closure week on
    double reopening_event_effect = 0.0; // level shift from each municipality's reopening week on
    double national_drop_cases = 0.0;    // cases per week removed nationally from closure on
    std::vector<double> trend;           // coefficients on t^1..t^d, t in years since grid start
};

struct DgpSpec {
    int municipalities = 20;
    Date start = calendar::make_date(2019, 1, 7);
    Date end = calendar::make_date(2021, 6, 27);
    Date closure_date = calendar::make_date(2020, 3, 16);
    bool reopening = true;
    Adoption adoption = Adoption::staggered;
    Date first_reopen_date = calendar::make_date(2020, 8, 3);
    int reopen_spread_weeks = 30; // staggered: reopening weeks drawn over this span
    int cohorts = 0;              // staggered: 0 = independent draws, else evenly spaced cohorts
    double never_reopen_share = 0.0;
    int openness_ramp_weeks = 12;
    bool continuous_reopening = false;
    Date attendance_from = calendar::make_date(2021, 3, 1);
    double municipal_sd = 3.0;
    double woy_amplitude = 2.0;
    double noise_sd = 1.0;
    double ar1 = 0.3;
    int pop_min = 2000;
    int pop_max = 80000;
    bool integer_counts = false;
    bool epi_covariates = true;
    std::vector<OutcomeDgp> outcomes{OutcomeDgp{}};
    std::uint64_t seed = 1;

    void validate() const {
        if (municipalities < 2) throw ConfigError("synthetic panel needs at least 2 municipalities");
        if (end <= start) throw ConfigError("synthetic range ends before it starts");
        if (pop_min <= 0 || pop_max < pop_min) throw ConfigError("invalid synthetic population bounds");
        if (ar1 <= -1.0 || ar1 >= 1.0) throw ConfigError("AR(1) coefficient must lie in (-1, 1)");
        if (never_reopen_share < 0.0 || never_reopen_share > 1.0) throw ConfigError("never_reopen_share not in [0,1]");
        if (outcomes.empty()) throw ConfigError("synthetic spec has no outcomes");
    }
};

struct SynthTruth {
    std::map<int, int> first_reopen_week;
    std::map<int, int> cohort_rank;
    std::map<int, double> municipal_effects;
    std::map<int, double> woy_effects;
    int closure_week = 0;
    double total_population = 0.0;
};

struct SynthPanel {
    PanelDataset panel;
    TreatmentSchedule schedule;
    SynthTruth truth;
};

namespace detail {

inline double openness_path(int weeks_since_reopen, int ramp) {
    if (ramp <= 0) return 1.0;
    return std::min(1.0, 0.1 + 0.9 * static_cast<double>(weeks_since_reopen + 1) / ramp);
}

} // namespace detail

/// Draws a balanced municipality x week panel with encoded treatments and the
/// planted outcome processes.
inline SynthPanel generate(const DgpSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const WeekGrid grid(DateRange{spec.start, spec.end});
    const int T = grid.size();
    const int closure_week = grid.week_of(spec.closure_date);
    if (!grid.contains_week(closure_week) || closure_week < 1)
        throw ConfigError("closure date must fall inside the synthetic range after its first week");

    SynthPanel out{PanelDataset(grid), {}, {}};
    auto& truth = out.truth;
    truth.closure_week = closure_week;
    const int M = spec.municipalities;
    std::vector<double> pop(M);
    std::uniform_int_distribution<int> pop_draw(spec.pop_min, spec.pop_max);
    for (int m = 0; m < M; ++m) {
        pop[m] = pop_draw(rng);
        truth.total_population += pop[m];
        truth.municipal_effects[m + 1] = spec.municipal_sd * z(rng);
    }
    for (int w = 1; w <= 52; ++w)
        truth.woy_effects[w] = spec.woy_amplitude * (std::sin(2.0 * std::numbers::pi * w / 52.0) + 0.3 * z(rng));

    // reopening schedule
    auto& schedule = out.schedule;
    schedule.closure_week = closure_week;
    const int base_reopen = std::max(closure_week + 1, grid.week_of(spec.first_reopen_date));
    for (int m = 1; m <= M; ++m) {
        auto& ms = schedule.municipalities[m];
        if (!spec.reopening || u(rng) < spec.never_reopen_share) continue;
        int r = base_reopen;
        int rank = 0;
        if (spec.adoption == Adoption::staggered) {
            if (spec.cohorts > 0) {
                rank = (m - 1) % spec.cohorts;
                r += spec.cohorts > 1 ? rank * spec.reopen_spread_weeks / (spec.cohorts - 1) : 0;
            } else {
                r += std::uniform_int_distribution<int>(0, std::max(0, spec.reopen_spread_weeks))(rng);
                rank = r - base_reopen;
            }
        }
        if (r >= T) continue;
        ms.first_reopen_week = r;
        truth.first_reopen_week[m] = r;
        truth.cohort_rank[m] = rank;
        for (int w = r; w < T; ++w) ms.openness[w] = detail::openness_path(w - r, spec.openness_ramp_weeks);
    }

    auto& panel = out.panel;
    for (int m = 1; m <= M; ++m)
        for (int w = 0; w < T; ++w) panel.add_cell(m, w);
    const std::size_t n = panel.size();
    std::vector<double> population(n), attendance(n, std::nan("")), quarantine(n, 0.0), cases(n, 0.0),
        tests(n, 0.0), positivity(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) population[i] = pop[static_cast<std::size_t>(panel.municipality()[i] - 1)];
    for (int m = 1; m <= M; ++m) {
        const int q_start = closure_week + std::uniform_int_distribution<int>(0, 40)(rng);
        const int q_len = std::uniform_int_distribution<int>(4, 20)(rng);
        const bool ever_quarantined = u(rng) < 0.8;
        const double epi_scale = 0.5 + u(rng);
        for (int w = 0; w < T; ++w) {
            const auto i = static_cast<std::size_t>((m - 1) * T + w);
            if (spec.epi_covariates && w >= closure_week) {
                const double wave = std::max(0.0, std::sin(2.0 * std::numbers::pi * (w - closure_week) / 40.0));
                cases[i] = epi_scale * (0.2 + 1.5 * wave) + 0.1 * u(rng);
                tests[i] = epi_scale * (2.0 + 6.0 * wave) + 0.5 * u(rng);
                positivity[i] = 2.0 + 15.0 * wave * u(rng);
                quarantine[i] = ever_quarantined && w >= q_start && w < q_start + q_len ? 1.0 : 0.0;
            }
            const auto r = truth.first_reopen_week.find(m);
            if (r != truth.first_reopen_week.end() && w >= r->second && grid.week_start(w) >= spec.attendance_from)
                attendance[i] = std::clamp(0.35 + 0.5 * u(rng) + 0.1 * z(rng), 0.0, 1.0);
        }
    }
    panel.set_column(col::population, population);
    panel.set_column(col::weight, population);
    panel.set_column(col::attendance, attendance);
    panel.set_column(col::quarantine, quarantine);
    panel.set_column(col::covid_cases, cases);
    panel.set_column(col::tests, tests);
    panel.set_column(col::positivity, positivity);
    panel = encode_treatments(std::move(panel), schedule);

    const auto& closure = panel.column(col::closure);
    const auto& reopen = panel.column(col::reopen_binary);
    const auto& share = panel.column(col::reopen_share);
    const double innovation = std::sqrt(1.0 - spec.ar1 * spec.ar1);
    for (const auto& o : spec.outcomes) {
        const double drop_rate = o.national_drop_cases * per_100k / truth.total_population;
        std::vector<double> y(n);
        for (int m = 1; m <= M; ++m) {
            double e = spec.noise_sd * z(rng);
            const auto r = truth.first_reopen_week.find(m);
            const int rank = r == truth.first_reopen_week.end() ? 0 : truth.cohort_rank.at(m);
            for (int w = 0; w < T; ++w) {
                const auto i = static_cast<std::size_t>((m - 1) * T + w);
                if (w > 0) e = spec.ar1 * e + innovation * spec.noise_sd * z(rng);
                const double t = static_cast<double>(w) / 52.0;
                double v = o.base_rate + truth.municipal_effects[m] + truth.woy_effects[panel.week_of_year()[i]];
                double tp = 1.0;
                for (double c : o.trend) {
                    tp *= t;
                    v += c * tp;
                }
                const double reopen_x = spec.continuous_reopening ? share[i] : reopen[i];
                v += o.closure_effect * closure[i] + (o.reopening_effect + o.cohort_step * rank) * reopen_x;
                if (!std::isnan(attendance[i])) v += o.attendance_effect * reopen_x * attendance[i];
                if (w >= closure_week) v += o.closure_event_effect - drop_rate;
                if (r != truth.first_reopen_week.end() && w >= r->second) v += o.reopening_event_effect;
                y[i] = v + e;
            }
        }
        if (spec.integer_counts) {
            std::vector<std::int64_t> counts(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double mean = std::max(0.0, y[i]) * population[i] / per_100k;
                counts[i] = mean > 0.0 ? std::poisson_distribution<std::int64_t>(mean)(rng) : 0;
            }
            panel.set_counts(o.category, std::move(counts));
        } else {
            panel.set_rates(o.category, std::move(y));
        }
    }
    return out;
}

/// Raw administrative-style inputs matching a count-valued synthetic panel.
struct RawData {
    RecordTable records;
    PopulationTable population;
    StatusTable school;
    StatusTable epi;
    StatusTable quarantine;
};

struct RawOptions {
    double first_day_heaping = 0.15; // share of sexual-abuse and rape records re-dated to day 1
    double female_share = 0.6;
    int invalid_records = 0; // appended rows that ingest must reject (adult ages, dates past the range)
};

/// Expands a count-valued synthetic panel into event-level records, yearly
/// population by age and sex, and weekly status tables.
inline RawData generate_raw(const SynthPanel& synth, const RawOptions& opt = {}) {
    const auto& panel = synth.panel;
    const auto& grid = panel.grid();
    std::mt19937_64 rng(0x5EEDULL ^ static_cast<std::uint64_t>(panel.size()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> age_draw(0, 17);
    RawData raw;
    raw.records.range = grid.range();
    for (const auto& cat_name : main_categories()) {
        if (!panel.has_counts(cat_name)) continue;
        const Category cat = *parse_category(cat_name);
        const auto& counts = panel.counts(cat_name);
        for (std::size_t i = 0; i < panel.size(); ++i) {
            const Date monday = panel.week_start(i);
            std::vector<Date> days;
            for (int d = 0; d < 7; ++d)
                if (grid.range().contains(monday + std::chrono::days{d})) days.push_back(monday + std::chrono::days{d});
            if (days.empty()) continue;
            std::uniform_int_distribution<std::size_t> day_draw(0, days.size() - 1);
            for (std::int64_t k = 0; k < counts[i]; ++k) {
                VictimRecord r;
                r.event_date = days[day_draw(rng)];
                r.municipality = panel.municipality()[i];
                r.category = cat;
                r.age = age_draw(rng);
                r.sex = u(rng) < opt.female_share ? Sex::female : Sex::male;
                if (cat == Category::intrafamily_violence) {
                    const double p = u(rng);
                    r.subclass = p < 0.5 ? DvSubclass::psychological
                                         : (p < 0.85 ? DvSubclass::physical_moderate : DvSubclass::physical_serious);
                } else if (u(rng) < opt.first_day_heaping) {
                    const Date first = calendar::make_date(calendar::year_of(r.event_date),
                                                           calendar::month_of(r.event_date), 1);
                    if (grid.range().contains(first)) r.event_date = first;
                }
                raw.records.rows.push_back(r);
            }
        }
    }
    std::sort(raw.records.rows.begin(), raw.records.rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.event_date, a.municipality) < std::tie(b.event_date, b.municipality);
    });
    for (int k = 0; k < opt.invalid_records; ++k) {
        VictimRecord r;
        r.municipality = panel.municipality()[static_cast<std::size_t>(k) % panel.size()];
        r.category = Category::intrafamily_violence;
        r.event_date = k % 2 == 0 ? grid.range().start + std::chrono::days{7 * k} : grid.range().end + std::chrono::days{1 + k};
        r.age = k % 2 == 0 ? 18 + k % 3 : 5;
        raw.records.rows.push_back(r);
    }

    std::map<int, std::int64_t> pop;
    for (std::size_t i = 0; i < panel.size(); ++i)
        pop[panel.municipality()[i]] = static_cast<std::int64_t>(panel.column(col::population)[i]);
    const int y0 = calendar::iso_year(grid.week_start(0));
    const int y1 = calendar::iso_year(grid.week_start(grid.size() - 1));
    for (const auto& [m, total] : pop)
        for (int y = y0; y <= y1; ++y) {
            const std::int64_t base = total / 36, extra = total % 36;
            int k = 0;
            for (int age = 0; age <= 17; ++age)
                for (Sex s : {Sex::female, Sex::male}) {
                    raw.population.rows.push_back({m, y, age, s, base + (k < extra ? 1 : 0)});
                    ++k;
                }
        }

    const auto& closure = panel.column(col::closure);
    const auto& reopen = panel.column(col::reopen_binary);
    const auto& share = panel.column(col::reopen_share);
    const auto& att = panel.column(col::attendance);
    auto& sch = raw.school;
    auto& epi = raw.epi;
    auto& q = raw.quarantine;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const int m = panel.municipality()[i];
        const Date d = panel.week_start(i);
        sch.municipality.push_back(m);
        sch.date.push_back(d);
        sch.values["openness"].push_back(reopen[i] > 0.0 ? share[i] : (closure[i] > 0.0 ? 0.0 : 1.0));
        sch.values[col::attendance].push_back(att[i]);
        q.municipality.push_back(m);
        q.date.push_back(d);
        q.values[col::quarantine].push_back(panel.column(col::quarantine)[i]);
        if (panel.week()[i] >= panel.closure_week()) {
            epi.municipality.push_back(m);
            epi.date.push_back(d);
            for (const char* c : {col::covid_cases, col::tests, col::positivity})
                epi.values[c].push_back(panel.column(c)[i]);
        }
    }
    return raw;
}

inline csv::Writer records_table(const RecordTable& records) {
    csv::Writer w({"event_date", "municipality_id", "category", "subclass", "age", "sex"});
    for (const auto& r : records.rows)
        w.add({calendar::format_date(r.event_date), std::to_string(r.municipality), to_string(r.category),
               to_string(r.subclass), std::to_string(r.age), r.sex == Sex::female ? "F" : "M"});
    return w;
}

inline csv::Writer population_table(const PopulationTable& pop) {
    csv::Writer w({"municipality_id", "year", "age", "sex", "count"});
    for (const auto& r : pop.rows)
        w.add({std::to_string(r.municipality), std::to_string(r.year), std::to_string(r.age),
               r.sex == Sex::female ? "F" : "M", std::to_string(r.count)});
    return w;
}

/// Status rows with the given value columns; NaN is written as an empty cell.
inline csv::Writer status_table(const StatusTable& status, const std::vector<std::string>& fields) {
    std::vector<std::string> header{"municipality_id", "week_start"};
    header.insert(header.end(), fields.begin(), fields.end());
    csv::Writer w(header);
    for (std::size_t r = 0; r < status.size(); ++r) {
        std::vector<std::string> row{std::to_string(status.municipality[r]), calendar::format_date(status.date[r])};
        for (const auto& f : fields) {
            const double v = status.values.at(f)[r];
            row.push_back(std::isnan(v) ? "" : csv::fmt_exact(v));
        }
        w.add(row);
    }
    return w;
}

} // namespace reportgap
