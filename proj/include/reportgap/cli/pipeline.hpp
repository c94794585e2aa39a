#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fmt/format.h>

#include "reportgap/cli/config.hpp"
#include "reportgap/reportgap.hpp"

namespace reportgap::cli {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr int output_digits = 10;

inline std::string num(double v) { return csv::fmt_fixed(v, output_digits); }
inline std::string opt_week(const std::optional<int>& w) { return w ? std::to_string(*w) : "NA"; }

/// Loaded inputs shared by the subcommands.
struct PipelineData {
    PanelDataset panel;
    std::vector<RejectedRow> rejected;
    std::optional<RecordTable> records;
    std::optional<PopulationTable> population;
    std::optional<StatusTable> school, epi, quarantine;
    TreatmentSchedule schedule;
    std::map<int, LockdownStratum> strata;

    [[nodiscard]] PanelInputs inputs() const {
        return {records ? &*records : nullptr, population ? &*population : nullptr, school ? &*school : nullptr,
                epi ? &*epi : nullptr, quarantine ? &*quarantine : nullptr};
    }
    [[nodiscard]] bool has_raw() const { return records && population; }
};

inline PipelineData load_data(const RunConfig& cfg) {
    PipelineData d;
    const WeekGrid grid(cfg.range);
    const int closure_week = grid.week_of(cfg.closure_date);
    if (cfg.inputs.has_raw()) {
        auto pop = load_population(*cfg.inputs.population, cfg.population_schema);
        d.rejected = pop.rejected;
        d.population = std::move(pop.table);
        auto rec = load_records(*cfg.inputs.records, cfg.record_schema, d.population->registry(), cfg.range);
        d.rejected.insert(d.rejected.end(), rec.rejected.begin(), rec.rejected.end());
        d.records = smooth_first_day_excess(std::move(rec.table), cfg.smoothing);
        auto school = load_status(*cfg.inputs.school_status, cfg.school_schema);
        d.rejected.insert(d.rejected.end(), school.rejected.begin(), school.rejected.end());
        d.school = std::move(school.table);
        if (cfg.inputs.epidemiology) {
            auto epi = load_status(*cfg.inputs.epidemiology, cfg.epi_schema_);
            d.rejected.insert(d.rejected.end(), epi.rejected.begin(), epi.rejected.end());
            d.epi = std::move(epi.table);
        }
        if (cfg.inputs.quarantine) {
            auto q = load_status(*cfg.inputs.quarantine, cfg.quarantine_schema_);
            d.rejected.insert(d.rejected.end(), q.rejected.begin(), q.rejected.end());
            d.quarantine = std::move(q.table);
        }
        auto built = build_panel(d.inputs(), cfg.range);
        d.rejected.insert(d.rejected.end(), built.rejected.begin(), built.rejected.end());
        d.schedule = derive_schedule(*d.school, grid, closure_week, built.panel.municipalities());
        d.panel = encode_treatments(std::move(built.panel), d.schedule);
        if (d.quarantine) d.strata = lockdown_strata(*d.quarantine, d.panel.municipalities(), cfg.lockdown_early_until);
        return d;
    }
    if (cfg.inputs.panel) {
        d.panel = read_panel(*cfg.inputs.panel, cfg.range);
        if (d.panel.closure_week() >= 0 && d.panel.closure_week() != closure_week)
            throw DataError(fmt::format("panel closure week {} disagrees with study.closure_date (week {})",
                                        d.panel.closure_week(), closure_week));
        d.panel.set_closure_week(closure_week);
        d.schedule.closure_week = closure_week;
        const auto reopen = first_reopen_weeks(d.panel);
        for (int m : d.panel.municipalities()) {
            auto& ms = d.schedule.municipalities[m];
            if (auto it = reopen.find(m); it != reopen.end()) ms.first_reopen_week = it->second;
        }
        return d;
    }
    throw ConfigError("no inputs configured: set inputs.records/population/school_status or inputs.panel");
}

/// Collects written tables for the manifest.
class OutputSet {
public:
    OutputSet(std::filesystem::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {
        std::filesystem::create_directories(dir_);
    }

    /// Writes `w` with a trailing config_hash column.
    void write(const std::string& name, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
        auto h = header;
        h.emplace_back("config_hash");
        csv::Writer w(h);
        for (auto r : rows) {
            r.push_back(hash_);
            w.add(std::move(r));
        }
        save(name, w.str(), rows.size());
    }

    void write_panel_file(const std::string& name, const PanelDataset& panel) {
        const auto w = panel_table(panel, hash_);
        save(name, w.str(), w.size());
    }

    void write_raw(const std::string& name, const std::string& content, std::size_t rows) { save(name, content, rows); }

    void note(std::string n) { notes_.push_back(std::move(n)); }

    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
    [[nodiscard]] const std::string& hash() const { return hash_; }
    [[nodiscard]] json files() const {
        json a = json::array();
        for (const auto& [name, info] : files_)
            a.push_back({{"file", name}, {"rows", info.first}, {"sha256", info.second}});
        return a;
    }
    [[nodiscard]] const std::vector<std::string>& notes() const { return notes_; }

private:
    void save(const std::string& name, const std::string& content, std::size_t rows) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw DataError(fmt::format("cannot write '{}'", (dir_ / name).string()));
        out << content;
        files_[name] = {rows, detail::sha256_hex(content)};
    }

    std::filesystem::path dir_;
    std::string hash_;
    std::map<std::string, std::pair<std::size_t, std::string>> files_;
    std::vector<std::string> notes_;
};

using Rows = std::vector<std::vector<std::string>>;

inline void run_ingest(const RunConfig& cfg, const PipelineData& d, OutputSet& out) {
    out.write_panel_file("panel.csv", d.panel);
    Rows rej;
    for (const auto& r : d.rejected)
        rej.push_back({std::filesystem::path(r.source).filename().string(), std::to_string(r.line), r.reason});
    out.write("rejected_rows.csv", {"source", "line", "reason"}, rej);
    Rows sched;
    const WeekGrid grid(cfg.range);
    for (const auto& [m, ms] : d.schedule.municipalities) {
        const auto s = d.strata.find(m);
        sched.push_back({std::to_string(m), opt_week(ms.first_reopen_week),
                         ms.first_reopen_week ? calendar::format_date(grid.week_start(*ms.first_reopen_week)) : "NA",
                         s == d.strata.end() ? "NA" : to_string(s->second)});
    }
    out.write("treatment_schedule.csv", {"municipality_id", "first_reopen_week", "first_reopen_date", "lockdown_stratum"},
              sched);
}

inline std::vector<std::string> fit_row_tail(const RegressionFit& f) {
    return {std::to_string(f.n_obs), std::to_string(f.n_clusters), num(f.baseline_mean),
            std::to_string(f.demean_report.iterations), num(f.demean_tolerance)};
}

inline void run_estimate(const RunConfig& cfg, const PipelineData& d, OutputSet& out) {
    const auto& panel = d.panel;
    Rows t1, meta;
    for (const auto& df : run_table1(panel, cfg.table1)) {
        const auto& f = df.fit;
        meta.push_back({df.options.outcome_category, to_string(df.options.reopening_mode),
                        to_string(df.options.control_set), std::to_string(f.n_obs), std::to_string(f.k_effective),
                        std::to_string(f.n_clusters), num(f.baseline_mean), std::to_string(f.demean_report.iterations),
                        fmt::format("{:.6e}", f.demean_report.last_delta), fmt::format("{:.1e}", f.demean_tolerance)});
        for (const auto& term : f.terms) {
            std::vector<std::string> r{df.options.outcome_category, to_string(df.options.reopening_mode),
                                       to_string(df.options.control_set), term};
            const auto te = term_estimate(f, term);
            for (double v : {te.estimate, te.se, f.t(term), te.p_value, te.ci_low, te.ci_high}) r.push_back(num(v));
            r.push_back(num(df.beta_eq_gamma.p_value));
            for (auto& s : fit_row_tail(f)) r.push_back(std::move(s));
            t1.push_back(std::move(r));
        }
    }
    out.write("table1.csv",
              {"outcome", "reopening_mode", "control_set", "term", "estimate", "se", "t", "p_value", "ci_low",
               "ci_high", "closure_eq_reopening_p", "n_obs", "n_clusters", "baseline_mean", "demean_iterations",
               "demean_tolerance"},
              t1);
    out.write("fit_metadata.csv",
              {"outcome", "reopening_mode", "control_set", "n_obs", "k_effective", "n_clusters", "baseline_mean",
               "demean_iterations", "demean_last_delta", "demean_tolerance"},
              meta);

    Rows att;
    for (const auto& outcome : cfg.categories) {
        DesignOptions o = cfg.design;
        o.outcome_category = outcome;
        AttendanceResult a;
        try {
            a = run_attendance(panel, o, cfg.attendance_quantiles);
        } catch (const DataError& e) {
            out.note(fmt::format("attendance model skipped for {}: {}", outcome, e.what()));
            continue;
        }
        for (const auto* df : {&a.baseline, &a.interaction}) {
            const std::string model = df == &a.baseline ? "baseline" : "interaction";
            for (const auto& term : df->fit.terms) {
                const auto te = term_estimate(df->fit, term);
                att.push_back({outcome, model, term, "NA", "NA", num(te.estimate), num(te.se), num(te.p_value),
                               std::to_string(df->fit.n_obs), num(df->fit.baseline_mean)});
            }
        }
        for (const auto& m : a.margins)
            att.push_back({outcome, "marginal_effect", reopen_term(o.reopening_mode), num(m.probability),
                           num(m.attendance), num(m.estimate), num(m.se), num(m.p_value),
                           std::to_string(a.interaction.fit.n_obs), num(a.interaction.fit.baseline_mean)});
    }
    out.write("attendance.csv",
              {"outcome", "model", "term", "attendance_quantile", "attendance", "estimate", "se", "p_value", "n_obs",
               "baseline_mean"},
              att);

    if (cfg.dv_subclasses) {
        Rows dv;
        bool present = true;
        for (const auto& c : dv_subclass_categories()) present = present && panel.has_column(col::rate(c));
        if (present) {
            for (const auto& df : run_dv_subclasses(panel, cfg.design))
                for (const auto& term : df.fit.terms) {
                    const auto te = term_estimate(df.fit, term);
                    dv.push_back({df.options.outcome_category, term, num(te.estimate), num(te.se), num(te.p_value),
                                  std::to_string(df.fit.n_obs), num(df.fit.baseline_mean),
                                  num(df.beta_eq_gamma.p_value)});
                }
        } else {
            out.note("DV subclass outcomes absent from the panel");
        }
        out.write("dv_subclasses.csv",
                  {"outcome", "term", "estimate", "se", "p_value", "n_obs", "baseline_mean", "closure_eq_reopening_p"},
                  dv);
    }

    Rows het;
    if (d.has_raw() && !cfg.groups.empty()) {
        double full_pop = 0.0;
        for (double p : panel.column(col::population)) full_pop += p;
        std::vector<Group> groups;
        for (const auto& g : cfg.groups) {
            if (std::holds_alternative<LockdownStratum>(g.definition)) {
                int members = 0;
                for (const auto& [m, s] : d.strata) members += s == std::get<LockdownStratum>(g.definition);
                if (members < 2) {
                    out.note(fmt::format("heterogeneity group '{}' has {} municipalities (clustering needs 2) and was "
                                         "skipped",
                                         g.label, members));
                    continue;
                }
            }
            groups.push_back(g);
        }
        const auto inputs = d.inputs();
        for (const auto& outcome : cfg.categories) {
            DesignOptions o = cfg.design;
            o.outcome_category = outcome;
            const auto res = run_heterogeneity(
                [&](const Group& g) { return subgroup_panel(inputs, cfg.range, d.schedule, g, d.strata); }, groups, o,
                full_pop);
            for (const auto& g : res) {
                for (const auto& [name, te] : {std::pair{"closure", g.closure}, std::pair{"reopening", g.reopening},
                                              std::pair{"reopening_minus_closure", g.reopening_vs_closure}})
                    het.push_back({outcome, g.label, name, num(te.estimate), num(te.se), num(te.ci_low),
                                   num(te.ci_high), num(te.p_value), num(g.baseline_mean), num(g.population_share),
                                   std::to_string(g.design.fit.n_obs)});
            }
        }
    } else {
        out.note("heterogeneity requires raw record inputs; table left empty");
    }
    out.write("heterogeneity.csv",
              {"outcome", "group", "quantity", "estimate", "se", "ci_low", "ci_high", "p_value", "baseline_mean",
               "population_share", "n_obs"},
              het);
}

inline void run_eventstudy(const RunConfig& cfg, const PipelineData& d, OutputSet& out) {
    Rows rows;
    for (const auto& outcome : cfg.categories)
        for (const auto& window : {cfg.closure_window, cfg.reopening_window}) {
            const auto res = estimate_event_study(d.panel, outcome, window, cfg.event_options);
            if (!res.excluded_municipalities.empty() && outcome == cfg.categories.front()) {
                std::string ids;
                for (int m : res.excluded_municipalities) ids += (ids.empty() ? "" : " ") + std::to_string(m);
                out.note(fmt::format("{} event study excludes municipalities without the event: {}",
                                     to_string(window.event), ids));
            }
            for (const auto& p : res.path)
                rows.push_back({outcome, to_string(window.event), std::to_string(p.event_time), num(p.estimate),
                                num(p.se), num(p.ci_low), num(p.ci_high), std::to_string(window.leads),
                                std::to_string(window.lags), std::to_string(res.fit.n_obs),
                                std::to_string(res.excluded_municipalities.size())});
        }
    out.write("event_study.csv",
              {"outcome", "event", "event_time", "estimate", "se", "ci_low", "ci_high", "leads", "lags", "n_obs",
               "excluded_municipalities"},
              rows);
}

inline void run_bacon(const RunConfig& cfg, const PipelineData& d, OutputSet& out) {
    const PanelDataset sub = reopening_subpanel(d.panel);
    Rows items, summary;
    for (const auto& outcome : cfg.categories) {
        BaconOptions opt;
        opt.weighted = cfg.bacon_weighted;
        const auto bd = bacon_decompose(sub, col::rate(outcome), col::reopen_binary, opt);
        for (const auto& it : bd.items)
            items.push_back({outcome, col::reopen_binary, to_string(it.comparison), std::to_string(it.treated_week),
                             opt_week(it.control_week), num(it.weight), num(it.dd_estimate)});
        for (const auto& a : bd.aggregates)
            summary.push_back({outcome, col::reopen_binary, to_string(a.comparison), num(a.weight), num(a.average_dd),
                               num(bd.recomposed_coefficient), bd.weighted ? "true" : "false", "from_closure_week"});
    }
    out.write("bacon.csv", {"outcome", "treatment", "comparison", "treated_week", "control_week", "weight", "dd_estimate"},
              items);
    out.write("bacon_summary.csv",
              {"outcome", "treatment", "comparison", "weight", "average_dd", "recomposed_coefficient", "weighted",
               "sample"},
              summary);
}

inline void run_dcdh(const RunConfig& cfg, const PipelineData& d, OutputSet& out) {
    Rows cells, summary;
    const std::vector<std::string> fe{"municipality", "week_of_year"};
    for (const char* treatment : {col::closure, col::reopen_binary}) {
        const auto w = dcdh_weights(d.panel, treatment, fe, cfg.table1.weighted);
        for (const auto& c : w.cells)
            cells.push_back({treatment, std::to_string(c.municipality), std::to_string(c.week), num(c.weight)});
        summary.push_back({treatment, std::to_string(w.cells.size()), num(w.sum_of_weights), num(w.negative_share),
                           std::to_string(w.negative_count)});
    }
    out.write("dcdh.csv", {"treatment", "municipality_id", "week_index", "weight"}, cells);
    out.write("dcdh_summary.csv", {"treatment", "treated_cells", "sum_of_weights", "negative_share", "negative_count"},
              summary);
}

namespace detail {

/// Weekly projected and actual national totals followed by period sums, in a
/// fixed layout so bootstrap replicates can be rescaled after the fact.
inline std::vector<double> pack_series(const DifferentialSeries& s) {
    std::vector<double> v;
    for (const auto& w : s.weeks) v.push_back(w.projected_total);
    for (const auto& w : s.weeks) v.push_back(w.actual_total);
    for (const auto& p : s.periods) v.push_back(p.projected);
    for (const auto& p : s.periods) v.push_back(p.actual);
    return v;
}

inline std::pair<double, double> interval(std::vector<double> v, double alpha) {
    std::sort(v.begin(), v.end());
    return {stats::quantile_sorted(v, alpha / 2.0), stats::quantile_sorted(v, 1.0 - alpha / 2.0)};
}

} // namespace detail

/// Model selection, projections and sensitivity series; with `bootstrap` set,
/// municipality block-bootstrap CIs for every series and period aggregate.
inline void run_counterfactual(const RunConfig& cfg, const PipelineData& d, OutputSet& out, bool bootstrap) {
    const auto& panel = d.panel;
    Rows grid_rows, series_rows, period_rows, share_rows, rep_rows;
    for (const auto& outcome : cfg.cf_categories) {
        std::map<Channel, DifferentialSeries> unit_scale;
        for (Channel ch : cfg.channels) {
            const auto sel = select_model(panel, outcome, ch, cfg.selection);
            for (std::size_t g = 0; g < sel.grid.size(); ++g) {
                const auto& e = sel.grid[g];
                const auto s = project_and_difference(e.model, panel, 1.0);
                grid_rows.push_back({outcome, to_string(ch), std::to_string(e.window_start_year),
                                     std::to_string(e.degree), num(e.rmspe), g == sel.best_index ? "true" : "false",
                                     num(s.period("closure").differential), num(s.period("reopening").differential),
                                     num(s.period("total").differential)});
            }
            const auto& best = sel.best;
            const auto base = project_and_difference(best, panel, 1.0);
            unit_scale[ch] = base;
            const std::size_t W = base.weeks.size(), P = base.periods.size();

            std::optional<BootstrapResult> boot;
            if (bootstrap) {
                const int degree = best.trend_degree, start = best.window_start_year;
                const auto opt = cfg.selection;
                const bool reselect = cfg.reselect;
                boot = reportgap::bootstrap(
                    panel,
                    [&, degree, start, ch, reselect](const PanelDataset& p) {
                        const auto m = reselect ? select_model(p, outcome, ch, opt).best
                                                : fit_projection(p, outcome, degree, start, ch, opt.projection);
                        return detail::pack_series(project_and_difference(m, p, 1.0));
                    },
                    cfg.bootstrap);
                for (std::size_t b = 0; b < boot->replicates.size(); ++b) {
                    const auto& r = boot->replicates[b];
                    for (std::size_t k = 0; k < P; ++k)
                        rep_rows.push_back({outcome, to_string(ch), std::to_string(b), base.periods[k].period,
                                            num(r[2 * W + k]), num(r[2 * W + P + k])});
                }
            }
            const double alpha = cfg.bootstrap.alpha;
            for (double s : cfg.scale_factors) {
                const auto series = project_and_difference(best, panel, s);
                for (std::size_t k = 0; k < W; ++k) {
                    const auto& w = series.weeks[k];
                    std::string lo = "NA", hi = "NA", dlo = "NA", dhi = "NA";
                    if (boot) {
                        std::vector<double> proj, diff;
                        for (const auto& r : boot->replicates) {
                            proj.push_back(r[k]);
                            diff.push_back(s * r[k] - r[W + k]);
                        }
                        const auto [a, b2] = detail::interval(proj, alpha);
                        const auto [c, e] = detail::interval(diff, alpha);
                        lo = num(a), hi = num(b2), dlo = num(c), dhi = num(e);
                    }
                    series_rows.push_back({outcome, to_string(ch), num(s), std::to_string(w.week),
                                           calendar::format_date(panel.grid().week_start(w.week)), num(w.actual_total),
                                           num(w.projected_total), lo, hi, num(w.differential), dlo, dhi});
                }
                for (std::size_t k = 0; k < P; ++k) {
                    const auto& p = series.periods[k];
                    std::string lo = "NA", hi = "NA";
                    if (boot) {
                        std::vector<double> diff;
                        for (const auto& r : boot->replicates) diff.push_back(s * r[2 * W + k] - r[2 * W + P + k]);
                        const auto [a, b2] = detail::interval(diff, alpha);
                        lo = num(a), hi = num(b2);
                    }
                    period_rows.push_back({outcome, to_string(ch), num(s), p.period, std::to_string(p.weeks),
                                           num(p.projected), num(p.actual), num(p.differential), lo, hi,
                                           std::to_string(best.window_start_year), std::to_string(best.trend_degree)});
                }
            }
        }
        for (Channel ch : cfg.channels) {
            if (ch == Channel::time_only) continue;
            try {
                for (const auto& sh : school_channel_share(unit_scale.at(Channel::time_only), unit_scale.at(ch)))
                    share_rows.push_back({outcome, to_string(ch), sh.period, num(sh.share)});
            } catch (const NumericalError& e) {
                out.note(fmt::format("school channel share for {} / {}: {}", outcome, to_string(ch), e.what()));
            }
        }
    }
    out.write("counterfactual_grid.csv",
              {"outcome", "channel", "window_start", "degree", "rmspe", "selected", "closure_differential",
               "reopening_differential", "total_differential"},
              grid_rows);
    out.write("counterfactual_series.csv",
              {"outcome", "channel", "scale_factor", "week_index", "week_start", "actual", "projected", "ci_low",
               "ci_high", "differential", "differential_ci_low", "differential_ci_high"},
              series_rows);
    out.write("counterfactual_periods.csv",
              {"outcome", "channel", "scale_factor", "period", "weeks", "projected", "actual", "differential", "ci_low",
               "ci_high", "window_start", "degree"},
              period_rows);
    out.write("school_channel_share.csv", {"outcome", "channel", "period", "share"}, share_rows);
    if (bootstrap)
        out.write("bootstrap_replicates.csv", {"outcome", "channel", "replicate", "period", "projected", "actual"},
                  rep_rows);
}

/// Writes synthetic raw inputs, the canonical synthetic panel and its truth record.
inline void run_synth(const RunConfig& cfg, OutputSet& out) {
    const auto synth = generate(cfg.synth);
    const auto raw = generate_raw(synth, cfg.synth_raw);
    const auto rec = records_table(raw.records);
    out.write_raw("records.csv", rec.str(), rec.size());
    const auto pop = population_table(raw.population);
    out.write_raw("population.csv", pop.str(), pop.size());
    const auto sch = status_table(raw.school, {"openness", col::attendance});
    out.write_raw("school_status.csv", sch.str(), sch.size());
    const auto epi = status_table(raw.epi, {col::covid_cases, col::tests, col::positivity});
    out.write_raw("epidemiology.csv", epi.str(), epi.size());
    const auto q = status_table(raw.quarantine, {col::quarantine});
    out.write_raw("quarantine.csv", q.str(), q.size());
    out.write_panel_file("synthetic_panel.csv", synth.panel);

    json truth;
    truth["closure_week"] = synth.truth.closure_week;
    truth["total_population"] = synth.truth.total_population;
    json reopen = json::object();
    for (const auto& [m, w] : synth.truth.first_reopen_week) reopen[std::to_string(m)] = w;
    truth["first_reopen_week"] = reopen;
    json outcomes = json::object();
    for (const auto& o : cfg.synth.outcomes)
        outcomes[o.category] = {{"base_rate", o.base_rate},
                                {"closure_effect", o.closure_effect},
                                {"reopening_effect", o.reopening_effect},
                                {"attendance_effect", o.attendance_effect},
                                {"cohort_step", o.cohort_step},
                                {"trend", o.trend}};
    truth["outcomes"] = outcomes;
    json me = json::object();
    for (const auto& [m, v] : synth.truth.municipal_effects) me[std::to_string(m)] = v;
    truth["municipal_effects"] = me;
    const std::string text = truth.dump(2) + "\n";
    out.write_raw("synth_truth.json", text, 1);
}

inline json versions() {
    return {{"reportgap", tool_version},
            {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
            {"boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100)},
            {"fmt", FMT_VERSION}};
}

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> v{"ingest",         "estimate",  "eventstudy", "bacon", "dcdh",
                                            "counterfactual", "bootstrap", "synth",      "all"};
    return v;
}

/// Runs one subcommand and writes its tables plus manifest.json and timings.json.
inline void run(const std::string& command, const RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    OutputSet out(cfg.output_dir, cfg.hash);
    json timings = json::object();
    auto timed = [&](const std::string& step, auto&& fn) {
        const auto t0 = clock::now();
        fn();
        timings[step] = std::chrono::duration<double>(clock::now() - t0).count();
    };
    if (command == "synth") {
        timed("synth", [&] { run_synth(cfg, out); });
    } else {
        PipelineData data;
        timed("load", [&] { data = load_data(cfg); });
        const bool all = command == "all";
        if (all || command == "ingest") timed("ingest", [&] { run_ingest(cfg, data, out); });
        if (all || command == "estimate") timed("estimate", [&] { run_estimate(cfg, data, out); });
        if (all || command == "eventstudy") timed("eventstudy", [&] { run_eventstudy(cfg, data, out); });
        if (all || command == "bacon") timed("bacon", [&] { run_bacon(cfg, data, out); });
        if (all || command == "dcdh") timed("dcdh", [&] { run_dcdh(cfg, data, out); });
        if (command == "counterfactual") timed("counterfactual", [&] { run_counterfactual(cfg, data, out, false); });
        if (all || command == "bootstrap") timed("bootstrap", [&] { run_counterfactual(cfg, data, out, true); });
    }
    json manifest;
    manifest["tool"] = "reportgap";
    manifest["subcommand"] = command;
    manifest["config_hash"] = cfg.hash;
    json ov = json::array();
    for (const auto& o : cfg.overrides)
        ov.push_back({{"key", o.key}, {"file_value", o.file_value}, {"flag_value", o.flag_value}, {"winner", "flag"}});
    manifest["overrides"] = ov;
    manifest["seeds"] = {{"bootstrap", cfg.bootstrap.seed}, {"synth", cfg.synth.seed}};
    manifest["versions"] = versions();
    manifest["conventions"] = {{"rmspe", cfg.selection.weighted_rmspe ? "population-weighted mean, then root"
                                                                       : "unweighted mean over cells, then root"},
                               {"bacon_sample", "cells from the national closure week on, reopen_binary treatment"},
                               {"bootstrap_model_selection", cfg.reselect ? "re-selected per replicate" : "held fixed"},
                               {"period_split", "each municipality's first reopening week"},
                               {"timings", "timings.json"}};
    json cfg_echo = cfg.effective;
    cfg_echo.erase("runtime");
    manifest["config"] = cfg_echo;
    manifest["outputs"] = out.files();
    manifest["notes"] = out.notes();
    std::ofstream(out.dir() / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
    json log = {{"subcommand", command}, {"threads", cfg.threads}, {"seconds", timings}};
    std::ofstream(out.dir() / "timings.json", std::ios::binary) << log.dump(2) << "\n";
}

} // namespace reportgap::cli
