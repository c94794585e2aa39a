#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "reportgap/calendar.hpp"
#include "reportgap/csv.hpp"
#include "reportgap/error.hpp"
#include "reportgap/panel.hpp"

namespace reportgap {

enum class Category { intrafamily_violence, sexual_abuse, rape };
enum class DvSubclass { none, psychological, physical_moderate, physical_serious };
enum class Sex { female, male };

inline std::string to_string(Category c) {
    switch (c) {
    case Category::intrafamily_violence: return "intrafamily_violence";
    case Category::sexual_abuse: return "sexual_abuse";
    case Category::rape: return "rape";
    }
    return "?";
}

inline std::string to_string(DvSubclass s) {
    switch (s) {
    case DvSubclass::none: return "";
    case DvSubclass::psychological: return "psychological";
    case DvSubclass::physical_moderate: return "physical_moderate";
    case DvSubclass::physical_serious: return "physical_serious";
    }
    return "?";
}

inline std::string to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

inline std::optional<Category> parse_category(std::string_view s) {
    if (s == "intrafamily_violence") return Category::intrafamily_violence;
    if (s == "sexual_abuse") return Category::sexual_abuse;
    if (s == "rape") return Category::rape;
    return std::nullopt;
}

inline std::optional<DvSubclass> parse_subclass(std::string_view s) {
    if (s.empty() || s == "NA" || s == "none") return DvSubclass::none;
    if (s == "psychological") return DvSubclass::psychological;
    if (s == "physical_moderate") return DvSubclass::physical_moderate;
    if (s == "physical_serious") return DvSubclass::physical_serious;
    return std::nullopt;
}

inline std::optional<Sex> parse_sex(std::string_view s) {
    if (s == "F" || s == "f" || s == "female") return Sex::female;
    if (s == "M" || s == "m" || s == "male") return Sex::male;
    return std::nullopt;
}

/// Outcome category names carried by built panels, in canonical order.
inline const std::vector<std::string>& main_categories() {
    static const std::vector<std::string> v{"intrafamily_violence", "sexual_abuse", "rape"};
    return v;
}

inline const std::vector<std::string>& dv_subclass_categories() {
    static const std::vector<std::string> v{"dv_psychological", "dv_physical_moderate", "dv_physical_serious"};
    return v;
}

struct VictimRecord {
    Date event_date;
    int municipality = 0;
    Category category = Category::intrafamily_violence;
    DvSubclass subclass = DvSubclass::none;
    int age = 0;
    Sex sex = Sex::female;
};

struct RecordTable {
    DateRange range;
    std::vector<VictimRecord> rows;
};

struct PopulationRow {
    int municipality = 0;
    int year = 0;
    int age = 0;
    Sex sex = Sex::female;
    std::int64_t count = 0;
};

struct PopulationTable {
    std::vector<PopulationRow> rows;

    /// Every municipality with at least one population row.
    [[nodiscard]] std::set<int> registry() const {
        std::set<int> out;
        for (const auto& r : rows) out.insert(r.municipality);
        return out;
    }
};

/// Weekly municipal status rows (school openness, epidemiology, quarantine).
struct StatusTable {
    std::vector<int> municipality;
    std::vector<Date> date;
    std::map<std::string, std::vector<double>> values;

    [[nodiscard]] std::size_t size() const { return municipality.size(); }
};

struct RejectedRow {
    std::string source;
    std::size_t line = 0;
    std::string reason;
};

template <class T>
struct Loaded {
    T table;
    std::vector<RejectedRow> rejected;
};

/// Maps semantic record fields to file column names.
struct RecordSchema {
    std::string event_date = "event_date";
    std::string municipality = "municipality_id";
    std::string category = "category";
    std::string subclass = "subclass";
    std::string age = "age";
    std::string sex = "sex";
};

struct PopulationSchema {
    std::string municipality = "municipality_id";
    std::string year = "year";
    std::string age = "age";
    std::string sex = "sex";
    std::string count = "count";
};

/// Status file mapping: key columns plus semantic field -> file column.
/// Fields listed in `optional_fields` may be blank (missing).
struct StatusSchema {
    std::string municipality = "municipality_id";
    std::string date = "week_start";
    std::map<std::string, std::string> fields;
    std::set<std::string> optional_fields;
    std::set<std::string> unit_interval_fields;
};

inline StatusSchema school_status_schema() {
    StatusSchema s;
    s.fields = {{"openness", "openness"}, {col::attendance, "attendance"}};
    s.optional_fields = {col::attendance};
    s.unit_interval_fields = {"openness", col::attendance};
    return s;
}

inline StatusSchema epi_schema() {
    StatusSchema s;
    s.fields = {{col::covid_cases, col::covid_cases}, {col::tests, col::tests}, {col::positivity, col::positivity}};
    return s;
}

inline StatusSchema quarantine_schema() {
    StatusSchema s;
    s.fields = {{col::quarantine, col::quarantine}};
    s.unit_interval_fields = {col::quarantine};
    return s;
}

/// Loads event-level victim records. Rows outside `range` or with ages outside
/// [0,17] are rejected with a reason; unparseable dates and unknown municipality
/// codes are hard errors.
inline Loaded<RecordTable> load_records(const std::filesystem::path& path, const RecordSchema& schema,
                                        const std::set<int>& registry, DateRange range) {
    const auto t = csv::read(path);
    const auto i_date = t.require(schema.event_date);
    const auto i_muni = t.require(schema.municipality);
    const auto i_cat = t.require(schema.category);
    const auto i_age = t.require(schema.age);
    const auto i_sex = t.require(schema.sex);
    const auto i_sub = t.find(schema.subclass);

    Loaded<RecordTable> out;
    out.table.range = range;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = t.line_numbers[r];
        auto reject = [&](std::string reason) { out.rejected.push_back({t.source, line, std::move(reason)}); };
        if (row.size() != t.header.size()) {
            reject(fmt::format("malformed: {} fields, expected {}", row.size(), t.header.size()));
            continue;
        }
        Date date;
        try {
            date = calendar::parse_date(row[i_date]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: row {}: {}", t.source, line, e.what()));
        }
        const auto muni = csv::to_int(row[i_muni]);
        if (!muni) {
            reject(fmt::format("malformed municipality code '{}'", row[i_muni]));
            continue;
        }
        if (!registry.count(static_cast<int>(*muni)))
            throw DataError(fmt::format("{}: row {}: municipality code {} not in registry", t.source, line, *muni));
        if (!range.contains(date)) {
            reject(fmt::format("event date {} outside study range", row[i_date]));
            continue;
        }
        const auto cat = parse_category(row[i_cat]);
        if (!cat) {
            reject(fmt::format("unknown category '{}'", row[i_cat]));
            continue;
        }
        const auto sub = i_sub ? parse_subclass(row[*i_sub]) : std::optional{DvSubclass::none};
        if (!sub) {
            reject(fmt::format("unknown subclass '{}'", row[*i_sub]));
            continue;
        }
        const auto age = csv::to_int(row[i_age]);
        if (!age) {
            reject(fmt::format("malformed age '{}'", row[i_age]));
            continue;
        }
        if (*age < 0 || *age > 17) {
            reject(fmt::format("age {} outside [0,17]", *age));
            continue;
        }
        const auto sex = parse_sex(row[i_sex]);
        if (!sex) {
            reject(fmt::format("unknown sex '{}'", row[i_sex]));
            continue;
        }
        out.table.rows.push_back({date, static_cast<int>(*muni), *cat, *sub, static_cast<int>(*age), *sex});
    }
    return out;
}

inline Loaded<PopulationTable> load_population(const std::filesystem::path& path, const PopulationSchema& schema = {}) {
    const auto t = csv::read(path);
    const auto i_muni = t.require(schema.municipality);
    const auto i_year = t.require(schema.year);
    const auto i_age = t.require(schema.age);
    const auto i_sex = t.require(schema.sex);
    const auto i_count = t.require(schema.count);

    Loaded<PopulationTable> out;
    std::set<std::tuple<int, int, int, int>> keys;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = t.line_numbers[r];
        if (row.size() != t.header.size()) {
            out.rejected.push_back({t.source, line, "malformed: wrong field count"});
            continue;
        }
        const auto m = csv::to_int(row[i_muni]);
        const auto y = csv::to_int(row[i_year]);
        const auto a = csv::to_int(row[i_age]);
        const auto s = parse_sex(row[i_sex]);
        const auto c = csv::to_int(row[i_count]);
        if (!m || !y || !a || !s || !c)
            throw DataError(fmt::format("{}: row {}: unparseable population row", t.source, line));
        if (*c < 0) throw DataError(fmt::format("{}: row {}: negative population count", t.source, line));
        if (!keys.emplace(int(*m), int(*y), int(*a), int(*s)).second)
            throw DataError(fmt::format("{}: row {}: duplicate key (municipality {}, year {}, age {}, sex {})",
                                        t.source, line, *m, *y, *a, to_string(*s)));
        out.table.rows.push_back({int(*m), int(*y), int(*a), *s, *c});
    }
    return out;
}

/// Loads a weekly status file. Values of unit-interval fields are validated to [0,1].
inline Loaded<StatusTable> load_status(const std::filesystem::path& path, const StatusSchema& schema) {
    const auto t = csv::read(path);
    const auto i_muni = t.require(schema.municipality);
    const auto i_date = t.require(schema.date);
    std::vector<std::pair<std::string, std::size_t>> fields;
    for (const auto& [semantic, column] : schema.fields) {
        if (auto idx = t.find(column)) {
            fields.emplace_back(semantic, *idx);
        } else if (!schema.optional_fields.count(semantic)) {
            (void)t.require(column);
        }
    }
    Loaded<StatusTable> out;
    for (const auto& [semantic, column] : schema.fields) out.table.values[semantic];
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = t.line_numbers[r];
        if (row.size() != t.header.size()) {
            out.rejected.push_back({t.source, line, "malformed: wrong field count"});
            continue;
        }
        const auto m = csv::to_int(row[i_muni]);
        if (!m) throw DataError(fmt::format("{}: row {}: bad municipality '{}'", t.source, line, row[i_muni]));
        Date d;
        try {
            d = calendar::parse_date(row[i_date]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: row {}: {}", t.source, line, e.what()));
        }
        out.table.municipality.push_back(static_cast<int>(*m));
        out.table.date.push_back(d);
        for (const auto& [semantic, idx] : fields) {
            const auto v = csv::to_double(row[idx]);
            if (!v) throw DataError(fmt::format("{}: row {}: non-numeric {} '{}'", t.source, line, semantic, row[idx]));
            if (std::isnan(*v) && !schema.optional_fields.count(semantic))
                throw DataError(fmt::format("{}: row {}: missing required {}", t.source, line, semantic));
            if (schema.unit_interval_fields.count(semantic) && !std::isnan(*v) && (*v < 0.0 || *v > 1.0))
                throw DataError(fmt::format("{}: row {}: {} = {} outside [0,1]", t.source, line, semantic, *v));
            out.table.values[semantic].push_back(*v);
        }
        for (const auto& [semantic, column] : schema.fields) {
            auto& v = out.table.values[semantic];
            if (v.size() < out.table.municipality.size()) v.push_back(std::nan(""));
        }
    }
    return out;
}

namespace detail {

/// Nearest integer of num/den (den > 0, num >= 0), ties to even.
inline std::int64_t round_ratio_half_even(std::int64_t num, std::int64_t den) {
    const std::int64_t q = num / den;
    const std::int64_t r = num % den;
    if (2 * r > den) return q + 1;
    if (2 * r == den) return (q % 2 == 0) ? q : q + 1;
    return q;
}

} // namespace detail

/// Reassigns excess first-of-month records of the given categories.
///
/// Per (municipality, category, month): the expected day-1 count is the mean
/// daily count over days 2..end (rounded half-to-even); the excess above it is
/// moved record by record round-robin over days 2..end, in ascending date order.
/// The last day is clipped to the table's study range end.
inline RecordTable smooth_first_day_excess(RecordTable records, const std::set<Category>& categories) {
    struct Key {
        int municipality, category, year, month;
        auto operator<=>(const Key&) const = default;
    };
    struct Month {
        std::vector<std::size_t> day1;
        std::int64_t rest = 0;
    };
    std::map<Key, Month> months;
    for (std::size_t i = 0; i < records.rows.size(); ++i) {
        const auto& r = records.rows[i];
        if (!categories.count(r.category)) continue;
        const Key k{r.municipality, static_cast<int>(r.category), calendar::year_of(r.event_date),
                    calendar::month_of(r.event_date)};
        auto& m = months[k];
        if (calendar::day_of(r.event_date) == 1) {
            m.day1.push_back(i);
        } else {
            ++m.rest;
        }
    }
    for (auto& [k, m] : months) {
        if (m.day1.empty()) continue;
        int last_day = calendar::days_in_month(k.year, k.month);
        const Date month_end = calendar::make_date(k.year, k.month, last_day);
        if (records.range.end < month_end) last_day = calendar::day_of(records.range.end);
        if (last_day < 2) continue;
        const std::int64_t n_days = last_day - 1;
        const std::int64_t expected = detail::round_ratio_half_even(m.rest, n_days);
        const std::int64_t observed = static_cast<std::int64_t>(m.day1.size());
        const std::int64_t excess = std::max<std::int64_t>(0, observed - expected);
        for (std::int64_t j = 0; j < excess; ++j) {
            const std::size_t idx = m.day1[static_cast<std::size_t>(observed - excess + j)];
            const int day = 2 + static_cast<int>(j % n_days);
            records.rows[idx].event_date = calendar::make_date(k.year, k.month, day);
        }
    }
    return records;
}

/// Restricts which records and population rows enter a panel.
struct SubgroupFilter {
    std::optional<std::pair<int, int>> age_band; // inclusive
    std::optional<Sex> sex;
    std::optional<std::set<int>> municipalities;

    [[nodiscard]] bool keeps(int municipality, int age, Sex s) const {
        if (age_band && (age < age_band->first || age > age_band->second)) return false;
        if (sex && s != *sex) return false;
        if (municipalities && !municipalities->count(municipality)) return false;
        return true;
    }
};

struct PanelInputs {
    const RecordTable* records = nullptr;
    const PopulationTable* population = nullptr;
    const StatusTable* school_status = nullptr;
    const StatusTable* epi = nullptr;
    const StatusTable* quarantine = nullptr;
};

struct BuiltPanel {
    PanelDataset panel;
    std::vector<RejectedRow> rejected;
};

namespace detail {

/// Scatters weekly status values into panel columns keyed by (municipality, week).
inline void scatter_status(const StatusTable& status, const std::string& source, const WeekGrid& grid,
                           const std::map<std::pair<int, int>, std::size_t>& cell_of,
                           std::map<std::string, std::vector<double>>& targets, std::vector<RejectedRow>& rejected) {
    std::map<std::pair<int, int>, std::size_t> seen;
    std::vector<std::string> duplicates;
    for (std::size_t r = 0; r < status.size(); ++r) {
        const int week = grid.week_of(status.date[r]);
        if (!grid.contains_week(week)) {
            rejected.push_back({source, r + 2, "status date outside study range"});
            continue;
        }
        const std::pair key{status.municipality[r], week};
        auto cell = cell_of.find(key);
        if (cell == cell_of.end()) {
            rejected.push_back({source, r + 2, fmt::format("municipality {} not in panel", key.first)});
            continue;
        }
        if (!seen.emplace(key, r).second) {
            duplicates.push_back(fmt::format("({}, {})", key.first, calendar::format_date(grid.week_start(week))));
            continue;
        }
        for (auto& [name, target] : targets) {
            auto it = status.values.find(name);
            if (it != status.values.end()) target[cell->second] = it->second[r];
        }
    }
    if (!duplicates.empty()) {
        std::string keys;
        for (std::size_t i = 0; i < duplicates.size() && i < 20; ++i) keys += (i ? ", " : "") + duplicates[i];
        throw DataError(fmt::format("{}: {} overlapping duplicate status rows: {}", source, duplicates.size(), keys));
    }
}

} // namespace detail

/// Aggregates records to a balanced municipality x week panel with rates per
/// 100,000 minors and population analytic weights. Treatment columns are
/// initialised to zero; see encode_treatments.
inline BuiltPanel build_panel(const PanelInputs& in, DateRange range, const SubgroupFilter& filter = {}) {
    if (!in.records || !in.population) throw std::logic_error("build_panel requires records and population");
    const WeekGrid grid(range);
    BuiltPanel out{PanelDataset(grid), {}};

    std::set<int> munis = in.population->registry();
    if (filter.municipalities) {
        std::set<int> keep;
        for (int m : munis)
            if (filter.municipalities->count(m)) keep.insert(m);
        munis = std::move(keep);
    }
    if (munis.empty()) throw DataError("panel has no municipalities");

    // population by (municipality, year): total rows seen and filtered u18 sum
    std::map<std::pair<int, int>, std::int64_t> pop_u18;
    std::set<std::pair<int, int>> pop_present;
    for (const auto& r : in.population->rows) {
        pop_present.emplace(r.municipality, r.year);
        auto& slot = pop_u18[{r.municipality, r.year}];
        if (r.age >= 0 && r.age <= 17 && filter.keeps(r.municipality, r.age, r.sex)) slot += r.count;
    }

    PanelDataset& panel = out.panel;
    std::map<std::pair<int, int>, std::size_t> cell_of;
    std::vector<double> population;
    for (int m : munis) {
        for (int w = 0; w < grid.size(); ++w) {
            cell_of[{m, w}] = panel.size();
            panel.add_cell(m, w);
            const int year = panel.year().back();
            if (!pop_present.count({m, year}))
                throw DataError(fmt::format("no population record for municipality {} in year {} (week {})", m,
                                            year, calendar::format_date(grid.week_start(w))));
            population.push_back(static_cast<double>(pop_u18[{m, year}]));
        }
    }
    const std::size_t n = panel.size();
    panel.set_column(col::population, population);
    panel.set_column(col::weight, population);

    std::map<std::string, std::vector<std::int64_t>> counts;
    for (const auto& c : main_categories()) counts[c].assign(n, 0);
    for (const auto& c : dv_subclass_categories()) counts[c].assign(n, 0);
    for (const auto& r : in.records->rows) {
        if (!filter.keeps(r.municipality, r.age, r.sex)) continue;
        const auto cell = cell_of.find({r.municipality, grid.week_of(r.event_date)});
        if (cell == cell_of.end()) {
            if (!munis.count(r.municipality)) continue; // excluded by municipality filter
            out.rejected.push_back({"records", 0, fmt::format("record dated {} falls outside the week grid",
                                                              calendar::format_date(r.event_date))});
            continue;
        }
        ++counts[to_string(r.category)][cell->second];
        if (r.category == Category::intrafamily_violence && r.subclass != DvSubclass::none)
            ++counts["dv_" + to_string(r.subclass)][cell->second];
    }
    for (const auto& c : main_categories()) panel.set_counts(c, std::move(counts[c]));
    for (const auto& c : dv_subclass_categories()) panel.set_counts(c, std::move(counts[c]));

    std::map<std::string, std::vector<double>> status{
        {col::attendance, std::vector<double>(n, std::nan(""))},
        {col::quarantine, std::vector<double>(n, 0.0)},
        {col::covid_cases, std::vector<double>(n, 0.0)},
        {col::tests, std::vector<double>(n, 0.0)},
        {col::positivity, std::vector<double>(n, 0.0)},
    };
    auto scatter = [&](const StatusTable* table, const char* source, std::vector<std::string> names) {
        if (!table) return;
        std::map<std::string, std::vector<double>> targets;
        for (const auto& name : names) targets[name] = std::move(status[name]);
        detail::scatter_status(*table, source, grid, cell_of, targets, out.rejected);
        for (auto& [name, v] : targets) status[name] = std::move(v);
    };
    scatter(in.school_status, "school_status", {col::attendance});
    scatter(in.epi, "epi", {col::covid_cases, col::tests, col::positivity});
    scatter(in.quarantine, "quarantine", {col::quarantine});
    for (auto& [name, v] : status) panel.set_column(name, std::move(v));
    panel.set_column(col::closure, std::vector<double>(n, 0.0));
    panel.set_column(col::reopen_binary, std::vector<double>(n, 0.0));
    panel.set_column(col::reopen_share, std::vector<double>(n, 0.0));
    return out;
}

} // namespace reportgap
