#include <gtest/gtest.h>

#include <sstream>

#include "reportgap/calendar.hpp"
#include "reportgap/csv.hpp"

using namespace reportgap;

TEST(Calendar, ParsesAndFormatsIsoDates) {
    const Date d = calendar::parse_date("2020-03-16");
    EXPECT_EQ(calendar::year_of(d), 2020);
    EXPECT_EQ(calendar::month_of(d), 3);
    EXPECT_EQ(calendar::day_of(d), 16);
    EXPECT_EQ(calendar::format_date(d), "2020-03-16");
}

TEST(Calendar, RejectsMalformedDates) {
    EXPECT_THROW(calendar::parse_date("2020-02-30"), DataError);
    EXPECT_THROW(calendar::parse_date("2020/03/16"), DataError);
    EXPECT_THROW(calendar::parse_date("20-3-16"), DataError);
    EXPECT_THROW(calendar::parse_date(""), DataError);
}

TEST(Calendar, WeeksStartOnMonday) {
    // 2020-03-16 is a Monday, 2020-03-22 the following Sunday
    EXPECT_EQ(calendar::week_monday(calendar::make_date(2020, 3, 16)), calendar::make_date(2020, 3, 16));
    EXPECT_EQ(calendar::week_monday(calendar::make_date(2020, 3, 22)), calendar::make_date(2020, 3, 16));
    EXPECT_EQ(calendar::week_monday(calendar::make_date(2020, 3, 23)), calendar::make_date(2020, 3, 23));
}

TEST(Calendar, IsoWeekAndFolding) {
    EXPECT_EQ(calendar::iso_week(calendar::make_date(2020, 3, 16)), 12);
    // 2020-12-28 lies in ISO week 53 of 2020, folded into 52
    EXPECT_EQ(calendar::iso_week(calendar::make_date(2020, 12, 28)), 53);
    EXPECT_EQ(calendar::week_of_year(calendar::make_date(2020, 12, 28)), 52);
    // 2021-01-01 is a Friday still in ISO 2020-W53
    EXPECT_EQ(calendar::iso_year(calendar::make_date(2021, 1, 1)), 2020);
    EXPECT_EQ(calendar::iso_year(calendar::make_date(2019, 12, 30)), 2020);
}

TEST(Calendar, WeekGridCountsWholeWeeksFromFirstMonday) {
    const WeekGrid g(DateRange{calendar::make_date(2018, 1, 1), calendar::make_date(2020, 12, 31)});
    // 2018-01-01 is a Monday; 2020-12-31 falls in the week starting 2020-12-28
    EXPECT_EQ(g.first_monday(), calendar::make_date(2018, 1, 1));
    EXPECT_EQ(g.size(), 157);
    EXPECT_EQ(g.week_of(calendar::make_date(2018, 1, 7)), 0);
    EXPECT_EQ(g.week_of(calendar::make_date(2018, 1, 8)), 1);
    EXPECT_EQ(g.week_start(g.week_of(calendar::make_date(2020, 3, 18))), calendar::make_date(2020, 3, 16));
    const WeekGrid h(DateRange{calendar::make_date(2018, 1, 3), calendar::make_date(2018, 1, 3)});
    EXPECT_EQ(h.first_monday(), calendar::make_date(2018, 1, 1));
    EXPECT_EQ(h.size(), 1);
}

TEST(Csv, SplitsQuotedFields) {
    const auto f = csv::split_line(R"(a,"b,c","d""e",)");
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(f[1], "b,c");
    EXPECT_EQ(f[2], "d\"e");
    EXPECT_EQ(f[3], "");
}

TEST(Csv, ParsesHeaderAndRowsAndStripsBom) {
    std::istringstream in("\xEF\xBB\xBFx,y\r\n1,2\n3,4\n");
    const auto t = csv::parse(in, "mem");
    ASSERT_EQ(t.header.size(), 2u);
    EXPECT_EQ(t.header[0], "x");
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][1], "4");
    EXPECT_EQ(*t.find("y"), 1u);
    EXPECT_THROW((void)t.require("z"), DataError);
}

TEST(Csv, MissingFileIsDataError) { EXPECT_THROW(csv::read("/nonexistent/file.csv"), DataError); }

TEST(Csv, NumberFormattingRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-9, 123456789.125}) {
        const auto s = csv::fmt_exact(v);
        EXPECT_EQ(*csv::to_double(s), v) << s;
    }
    EXPECT_EQ(csv::fmt_exact(std::nan("")), "NA");
    EXPECT_TRUE(std::isnan(*csv::to_double("NA")));
    EXPECT_FALSE(csv::to_double("abc").has_value());
    EXPECT_EQ(csv::fmt_fixed(-1e-12, 9), "0.000000000");
    EXPECT_EQ(csv::fmt_fixed(4.0, 9), "4.000000000");
}

TEST(Csv, WriterQuotesAndChecksWidth) {
    csv::Writer w({"a", "b"});
    w.add({"x,y", "z"});
    EXPECT_EQ(w.str(), "a,b\n\"x,y\",z\n");
    EXPECT_THROW(w.add({"only"}), std::logic_error);
}
