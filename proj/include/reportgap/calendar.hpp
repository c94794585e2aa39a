#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "reportgap/error.hpp"

namespace reportgap {

using Date = std::chrono::sys_days;

namespace calendar {

inline std::chrono::year_month_day ymd(Date d) { return std::chrono::year_month_day{d}; }

inline int year_of(Date d) { return static_cast<int>(ymd(d).year()); }
inline int month_of(Date d) { return static_cast<int>(static_cast<unsigned>(ymd(d).month())); }
inline int day_of(Date d) { return static_cast<int>(static_cast<unsigned>(ymd(d).day())); }

inline Date make_date(int y, int m, int d) {
    return Date{std::chrono::year{y} / std::chrono::month{static_cast<unsigned>(m)} /
                std::chrono::day{static_cast<unsigned>(d)}};
}

inline int days_in_month(int y, int m) {
    using namespace std::chrono;
    return static_cast<int>(
        static_cast<unsigned>((year{y} / month{static_cast<unsigned>(m)} / last).day()));
}

/// Parses strict ISO-8601 `YYYY-MM-DD`. Throws DataError on anything else.
inline Date parse_date(std::string_view text) {
    auto digits = [&](std::size_t from, std::size_t n, int& out) {
        out = 0;
        for (std::size_t i = from; i < from + n; ++i) {
            const char c = text[i];
            if (c < '0' || c > '9') return false;
            out = out * 10 + (c - '0');
        }
        return true;
    };
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !digits(0, 4, y) ||
        !digits(5, 2, m) || !digits(8, 2, d)) {
        throw DataError(fmt::format("unparseable date '{}'", text));
    }
    const std::chrono::year_month_day v{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
    if (!v.ok()) throw DataError(fmt::format("invalid calendar date '{}'", text));
    return Date{v};
}

inline std::string format_date(Date d) {
    return fmt::format("{:04d}-{:02d}-{:02d}", year_of(d), month_of(d), day_of(d));
}

/// Monday on or before `d`.
inline Date week_monday(Date d) {
    const unsigned iso = std::chrono::weekday{d}.iso_encoding(); // Mon=1 .. Sun=7
    return d - std::chrono::days{iso - 1};
}

/// ISO-8601 year of the week containing `d` (year of that week's Thursday).
inline int iso_year(Date d) { return year_of(week_monday(d) + std::chrono::days{3}); }

/// ISO-8601 week number (1..53).
inline int iso_week(Date d) {
    const Date thursday = week_monday(d) + std::chrono::days{3};
    const Date jan1 = make_date(year_of(thursday), 1, 1);
    return static_cast<int>((thursday - jan1).count() / 7) + 1;
}

/// Week-of-year category used for seasonal fixed effects: ISO week, 53 folded into 52.
inline int week_of_year(Date d) {
    const int w = iso_week(d);
    return w == 53 ? 52 : w;
}

} // namespace calendar

/// Inclusive calendar range.
struct DateRange {
    Date start;
    Date end;

    [[nodiscard]] bool contains(Date d) const { return d >= start && d <= end; }
};

/// Monday-based weekly grid. Week 0 starts on the Monday on or before the range start.
class WeekGrid {
public:
    WeekGrid() = default;
    explicit WeekGrid(DateRange range)
        : range_(range), first_monday_(calendar::week_monday(range.start)) {
        if (range.end < range.start) throw ConfigError("study range ends before it starts");
        n_weeks_ = static_cast<int>((calendar::week_monday(range.end) - first_monday_).count() / 7) + 1;
    }

    [[nodiscard]] int size() const { return n_weeks_; }
    [[nodiscard]] const DateRange& range() const { return range_; }
    [[nodiscard]] Date first_monday() const { return first_monday_; }

    [[nodiscard]] Date week_start(int week) const { return first_monday_ + std::chrono::days{7 * week}; }

    /// Week index of a date; may fall outside [0, size()).
    [[nodiscard]] int week_of(Date d) const {
        return static_cast<int>((calendar::week_monday(d) - first_monday_).count() / 7);
    }

    [[nodiscard]] bool contains_week(int week) const { return week >= 0 && week < n_weeks_; }

private:
    DateRange range_{};
    Date first_monday_{};
    int n_weeks_ = 0;
};

} // namespace reportgap
