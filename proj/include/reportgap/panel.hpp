#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "reportgap/calendar.hpp"
#include "reportgap/csv.hpp"
#include "reportgap/error.hpp"

namespace reportgap {

/// Canonical numeric column names shared by every module.
namespace col {
inline constexpr const char* population = "population_u18";
inline constexpr const char* weight = "analytic_weight";
inline constexpr const char* closure = "closure";
inline constexpr const char* reopen_binary = "reopen_binary";
inline constexpr const char* reopen_share = "reopen_share";
inline constexpr const char* attendance = "attendance";
inline constexpr const char* quarantine = "quarantine";
inline constexpr const char* covid_cases = "covid_cases_per_1000";
inline constexpr const char* tests = "tests_per_1000";
inline constexpr const char* positivity = "positivity_pct";

inline std::string rate(std::string_view category) { return fmt::format("rate_{}", category); }
inline std::string count(std::string_view category) { return fmt::format("count_{}", category); }
} // namespace col

/// Standard column order of the canonical panel file (after the key columns).
inline const std::vector<std::string>& standard_columns() {
    static const std::vector<std::string> cols{col::population, col::weight,     col::closure,
                                               col::reopen_binary, col::reopen_share, col::attendance,
                                               col::quarantine, col::covid_cases, col::tests,
                                               col::positivity};
    return cols;
}

inline constexpr double per_100k = 100000.0;

/// Municipality x week cells in long format. Cells are stored column-wise; a
/// cell is a row index shared by every column.
class PanelDataset {
public:
    PanelDataset() = default;
    explicit PanelDataset(WeekGrid grid) : grid_(grid) {}

    [[nodiscard]] const WeekGrid& grid() const { return grid_; }
    [[nodiscard]] std::size_t size() const { return municipality_.size(); }
    [[nodiscard]] bool empty() const { return municipality_.empty(); }

    /// Appends a cell; every numeric column must be filled afterwards via set_column.
    void add_cell(int municipality, int week) {
        municipality_.push_back(municipality);
        week_.push_back(week);
        const Date start = grid_.week_start(week);
        week_of_year_.push_back(calendar::week_of_year(start));
        year_.push_back(calendar::iso_year(start));
    }

    [[nodiscard]] const std::vector<int>& municipality() const { return municipality_; }
    [[nodiscard]] const std::vector<int>& week() const { return week_; }
    [[nodiscard]] const std::vector<int>& week_of_year() const { return week_of_year_; }
    [[nodiscard]] const std::vector<int>& year() const { return year_; }
    [[nodiscard]] Date week_start(std::size_t row) const { return grid_.week_start(week_[row]); }

    /// Integer key column by dimension name: municipality, week, week_of_year, year.
    [[nodiscard]] const std::vector<int>& key(std::string_view name) const {
        if (name == "municipality") return municipality_;
        if (name == "week") return week_;
        if (name == "week_of_year") return week_of_year_;
        if (name == "year") return year_;
        throw ConfigError(fmt::format("unknown categorical dimension '{}'", name));
    }

    [[nodiscard]] bool has_column(std::string_view name) const {
        return columns_.find(std::string(name)) != columns_.end();
    }

    [[nodiscard]] const std::vector<double>& column(std::string_view name) const {
        auto it = columns_.find(std::string(name));
        if (it == columns_.end()) throw DataError(fmt::format("panel has no column '{}'", name));
        return it->second;
    }

    void set_column(std::string name, std::vector<double> values) {
        if (values.size() != size())
            throw std::logic_error(fmt::format("column '{}' has {} values for {} cells", name,
                                               values.size(), size()));
        columns_[std::move(name)] = std::move(values);
    }

    void drop_column(std::string_view name) { columns_.erase(std::string(name)); }

    [[nodiscard]] const std::map<std::string, std::vector<double>>& columns() const { return columns_; }

    /// Outcome categories in declaration order.
    [[nodiscard]] const std::vector<std::string>& categories() const { return categories_; }

    [[nodiscard]] bool has_counts(std::string_view category) const {
        return counts_.find(std::string(category)) != counts_.end();
    }

    [[nodiscard]] const std::vector<std::int64_t>& counts(std::string_view category) const {
        auto it = counts_.find(std::string(category));
        if (it == counts_.end()) throw DataError(fmt::format("panel has no counts for '{}'", category));
        return it->second;
    }

    /// Registers a count-valued category and derives its rate column from population.
    void set_counts(const std::string& category, std::vector<std::int64_t> values) {
        if (values.size() != size()) throw std::logic_error("count column size mismatch");
        const auto& pop = column(col::population);
        std::vector<double> rate(size());
        for (std::size_t i = 0; i < size(); ++i)
            rate[i] = pop[i] > 0 ? static_cast<double>(values[i]) * per_100k / pop[i] : 0.0;
        register_category(category);
        counts_[category] = std::move(values);
        set_column(col::rate(category), std::move(rate));
    }

    /// Registers a rate-only category (continuous synthetic outcomes carry no counts).
    void set_rates(const std::string& category, std::vector<double> rate) {
        register_category(category);
        counts_.erase(category);
        set_column(col::rate(category), std::move(rate));
    }

    /// National closure week, or -1 when treatments are not encoded.
    [[nodiscard]] int closure_week() const { return closure_week_; }
    void set_closure_week(int week) { closure_week_ = week; }

    [[nodiscard]] std::vector<int> municipalities() const {
        std::set<int> s(municipality_.begin(), municipality_.end());
        return {s.begin(), s.end()};
    }

    /// Cells at the given row indices, in that order.
    [[nodiscard]] PanelDataset subset(const std::vector<std::size_t>& rows) const {
        PanelDataset out(grid_);
        out.closure_week_ = closure_week_;
        out.categories_ = categories_;
        out.municipality_.reserve(rows.size());
        for (auto r : rows) {
            out.municipality_.push_back(municipality_[r]);
            out.week_.push_back(week_[r]);
            out.week_of_year_.push_back(week_of_year_[r]);
            out.year_.push_back(year_[r]);
        }
        for (const auto& [name, values] : columns_) {
            std::vector<double> v;
            v.reserve(rows.size());
            for (auto r : rows) v.push_back(values[r]);
            out.columns_.emplace(name, std::move(v));
        }
        for (const auto& [name, values] : counts_) {
            std::vector<std::int64_t> v;
            v.reserve(rows.size());
            for (auto r : rows) v.push_back(values[r]);
            out.counts_.emplace(name, std::move(v));
        }
        return out;
    }

    template <class Pred>
    [[nodiscard]] PanelDataset filter(Pred keep) const {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < size(); ++i)
            if (keep(i)) rows.push_back(i);
        return subset(rows);
    }

    /// Overwrites municipality ids in place (used by the cluster bootstrap).
    void relabel_municipalities(std::vector<int> ids) {
        if (ids.size() != size()) throw std::logic_error("relabel size mismatch");
        municipality_ = std::move(ids);
    }

    /// Concatenates cells of `other` (same grid and columns) after this panel's cells.
    void append(const PanelDataset& other) {
        if (size() == 0 && columns_.empty()) {
            *this = other;
            return;
        }
        auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
        cat(municipality_, other.municipality_);
        cat(week_, other.week_);
        cat(week_of_year_, other.week_of_year_);
        cat(year_, other.year_);
        for (auto& [name, values] : columns_) cat(values, other.column(name));
        for (auto& [name, values] : counts_) cat(values, other.counts(name));
    }

private:
    void register_category(const std::string& category) {
        if (std::find(categories_.begin(), categories_.end(), category) == categories_.end())
            categories_.push_back(category);
    }

    WeekGrid grid_;
    std::vector<int> municipality_;
    std::vector<int> week_;
    std::vector<int> week_of_year_;
    std::vector<int> year_;
    std::map<std::string, std::vector<double>> columns_;
    std::vector<std::string> categories_;
    std::map<std::string, std::vector<std::int64_t>> counts_;
    int closure_week_ = -1;
};

/// True when every municipality has exactly one cell for every grid week.
inline bool is_balanced(const PanelDataset& panel) {
    const auto munis = panel.municipalities();
    const auto n_weeks = static_cast<std::size_t>(panel.grid().size());
    if (panel.size() != munis.size() * n_weeks) return false;
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!panel.grid().contains_week(panel.week()[i])) return false;
        if (!seen.emplace(panel.municipality()[i], panel.week()[i]).second) return false;
    }
    return true;
}

/// First week with reopen_binary = 1 per municipality (absent when never reopened).
inline std::map<int, int> first_reopen_weeks(const PanelDataset& panel) {
    std::map<int, int> out;
    const auto& reopen = panel.column(col::reopen_binary);
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (reopen[i] != 1.0) continue;
        auto [it, inserted] = out.emplace(panel.municipality()[i], panel.week()[i]);
        if (!inserted) it->second = std::min(it->second, panel.week()[i]);
    }
    return out;
}

/// Canonical panel file: one row per cell, fixed column order. Rates carry 9
/// decimals; counts are integers; other numeric columns use the shortest
/// round-trip representation.
inline csv::Writer panel_table(const PanelDataset& panel, const std::string& config_hash = "") {
    std::vector<std::string> header{"municipality_id", "week_index", "week_start", "iso_year", "week_of_year"};
    std::vector<std::string> numeric;
    for (const auto& c : standard_columns())
        if (panel.has_column(c)) numeric.push_back(c);
    std::set<std::string> rate_cols;
    for (const auto& cat : panel.categories()) rate_cols.insert(col::rate(cat));
    std::vector<std::string> extras;
    for (const auto& [name, _] : panel.columns()) {
        if (rate_cols.count(name)) continue;
        if (std::find(numeric.begin(), numeric.end(), name) != numeric.end()) continue;
        extras.push_back(name);
    }
    for (const auto& c : numeric) header.push_back(c);
    for (const auto& cat : panel.categories()) {
        header.push_back(col::count(cat));
        header.push_back(col::rate(cat));
    }
    for (const auto& c : extras) header.push_back(c);
    header.emplace_back("config_hash");

    csv::Writer w(header);
    for (std::size_t i = 0; i < panel.size(); ++i) {
        std::vector<std::string> row{
            std::to_string(panel.municipality()[i]), std::to_string(panel.week()[i]),
            calendar::format_date(panel.week_start(i)), std::to_string(panel.year()[i]),
            std::to_string(panel.week_of_year()[i])};
        for (const auto& c : numeric) row.push_back(csv::fmt_exact(panel.column(c)[i]));
        for (const auto& cat : panel.categories()) {
            row.push_back(panel.has_counts(cat) ? std::to_string(panel.counts(cat)[i]) : "NA");
            row.push_back(csv::fmt_fixed(panel.column(col::rate(cat))[i], 9));
        }
        for (const auto& c : extras) row.push_back(csv::fmt_exact(panel.column(c)[i]));
        row.push_back(config_hash);
        w.add(std::move(row));
    }
    return w;
}

inline void write_panel(const PanelDataset& panel, const std::filesystem::path& path,
                        const std::string& config_hash = "") {
    panel_table(panel, config_hash).save(path);
}

/// Reads a canonical panel file. Rates of count-valued categories are
/// recomputed from counts so the count/rate identity holds exactly.
inline PanelDataset read_panel(const std::filesystem::path& path, DateRange range) {
    const auto t = csv::read(path);
    const auto mi = t.require("municipality_id");
    const auto wi = t.require("week_index");
    PanelDataset panel{WeekGrid(range)};
    std::vector<std::string> numeric_names;
    std::vector<std::size_t> numeric_idx;
    std::vector<std::string> categories;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& h = t.header[c];
        if (h == "municipality_id" || h == "week_index" || h == "week_start" || h == "iso_year" ||
            h == "week_of_year" || h == "config_hash")
            continue;
        if (h.rfind("count_", 0) == 0) {
            categories.push_back(h.substr(6));
            continue;
        }
        numeric_names.push_back(h);
        numeric_idx.push_back(c);
    }
    std::vector<std::vector<double>> numeric(numeric_names.size());
    std::map<std::string, std::vector<std::int64_t>> counts;
    std::map<std::string, bool> count_valued;
    for (const auto& cat : categories) count_valued[cat] = true;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() != t.header.size())
            throw DataError(fmt::format("{}: row {} has {} fields, expected {}", t.source,
                                        t.line_numbers[r], row.size(), t.header.size()));
        const auto m = csv::to_int(row[mi]);
        const auto w = csv::to_int(row[wi]);
        if (!m || !w) throw DataError(fmt::format("{}: bad key at row {}", t.source, t.line_numbers[r]));
        if (!panel.grid().contains_week(static_cast<int>(*w)))
            throw DataError(fmt::format("{}: week {} at row {} outside study range", t.source, *w,
                                        t.line_numbers[r]));
        panel.add_cell(static_cast<int>(*m), static_cast<int>(*w));
        for (std::size_t k = 0; k < numeric_idx.size(); ++k) {
            auto v = csv::to_double(row[numeric_idx[k]]);
            if (!v)
                throw DataError(fmt::format("{}: non-numeric '{}' in column {} at row {}", t.source,
                                            row[numeric_idx[k]], numeric_names[k], t.line_numbers[r]));
            numeric[k].push_back(*v);
        }
        for (const auto& cat : categories) {
            const auto& s = row[t.require(col::count(cat))];
            if (s == "NA") {
                count_valued[cat] = false;
                counts[cat].push_back(0);
                continue;
            }
            auto v = csv::to_int(s);
            if (!v || *v < 0)
                throw DataError(fmt::format("{}: bad count '{}' at row {}", t.source, s, t.line_numbers[r]));
            counts[cat].push_back(*v);
        }
    }
    for (std::size_t k = 0; k < numeric_names.size(); ++k) panel.set_column(numeric_names[k], std::move(numeric[k]));
    for (const auto& cat : categories) {
        if (count_valued[cat]) {
            panel.set_counts(cat, std::move(counts[cat]));
        } else {
            panel.set_rates(cat, panel.column(col::rate(cat)));
        }
    }
    if (panel.has_column(col::closure) && panel.has_column(col::reopen_binary)) {
        int first = -1;
        const auto& cl = panel.column(col::closure);
        const auto& ro = panel.column(col::reopen_binary);
        for (std::size_t i = 0; i < panel.size(); ++i)
            if ((cl[i] == 1.0 || ro[i] == 1.0) && (first < 0 || panel.week()[i] < first)) first = panel.week()[i];
        panel.set_closure_week(first);
    }
    return panel;
}

} // namespace reportgap
