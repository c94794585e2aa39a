#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "reportgap/error.hpp"
#include "reportgap/festimator.hpp"
#include "reportgap/panel.hpp"

namespace reportgap {

enum class Comparison { earlier_vs_later_control, later_vs_earlier_control, treated_vs_never };

inline std::string to_string(Comparison c) {
    switch (c) {
    case Comparison::earlier_vs_later_control: return "earlier_vs_later_control";
    case Comparison::later_vs_earlier_control: return "later_vs_earlier_control";
    case Comparison::treated_vs_never: return "treated_vs_never";
    }
    return "?";
}

struct BaconItem {
    Comparison comparison{};
    int treated_week = 0;          // adoption week of the treated timing group
    std::optional<int> control_week; // adoption week of the control group; none = never treated
    double weight = 0.0;
    double dd_estimate = 0.0;
};

struct BaconAggregate {
    Comparison comparison{};
    double weight = 0.0;
    double average_dd = 0.0; // weight-averaged 2x2 estimate within the class
};

struct BaconDecomposition {
    std::vector<BaconItem> items;
    std::vector<BaconAggregate> aggregates;
    double recomposed_coefficient = 0.0;
    bool weighted = false;
};

struct BaconOptions {
    bool weighted = true;                  // analytic weights fold into group sizes (unit mean weight)
    std::vector<std::string> covariates;   // must be empty
};

/// Goodman-Bacon decomposition of the two-way (unit + period) FE coefficient
/// on a binary absorbing treatment in a balanced panel.
inline BaconDecomposition bacon_decompose(const PanelDataset& panel, const std::string& outcome,
                                          const std::string& treatment, const BaconOptions& opt = {}) {
    if (!opt.covariates.empty())
        throw ConfigError("the decomposition is defined without covariates; residualize the outcome or drop them");
    const auto& y = panel.column(outcome);
    const auto& d = panel.column(treatment);
    const std::vector<double>* w = opt.weighted ? &panel.column(col::weight) : nullptr;

    std::vector<int> weeks(panel.week());
    std::sort(weeks.begin(), weeks.end());
    weeks.erase(std::unique(weeks.begin(), weeks.end()), weeks.end());
    const int T = static_cast<int>(weeks.size());
    if (T < 2) throw DataError("decomposition needs at least two periods");
    auto period_of = [&](int week) { return static_cast<int>(std::lower_bound(weeks.begin(), weeks.end(), week) - weeks.begin()); };

    struct Unit {
        std::vector<double> y, d;
        std::vector<bool> seen;
        double weight_sum = 0.0;
    };
    std::map<int, Unit> units;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        auto& u = units[panel.municipality()[i]];
        if (u.y.empty()) {
            u.y.assign(static_cast<std::size_t>(T), 0.0);
            u.d.assign(static_cast<std::size_t>(T), 0.0);
            u.seen.assign(static_cast<std::size_t>(T), false);
        }
        const auto t = static_cast<std::size_t>(period_of(panel.week()[i]));
        if (u.seen[t]) throw DataError("decomposition requires one cell per unit and period");
        if (d[i] != 0.0 && d[i] != 1.0) throw DataError(fmt::format("treatment '{}' is not binary", treatment));
        u.seen[t] = true;
        u.y[t] = y[i];
        u.d[t] = d[i];
        u.weight_sum += w ? (*w)[i] : 1.0;
    }

    // timing groups keyed by first treated period (T = never treated)
    struct GroupAcc {
        double size = 0.0;
        std::vector<double> sum_y;
    };
    std::map<int, GroupAcc> groups;
    for (const auto& [m, u] : units) {
        for (bool s : u.seen)
            if (!s) throw DataError(fmt::format("panel is unbalanced: municipality {} misses periods", m));
        int first = T;
        for (int t = 0; t < T; ++t) {
            if (u.d[static_cast<std::size_t>(t)] == 1.0 && first == T) first = t;
            if (first < T && u.d[static_cast<std::size_t>(t)] == 0.0)
                throw DataError(fmt::format("treatment is not absorbing for municipality {}", m));
        }
        const double uw = u.weight_sum / T;
        if (!(uw > 0.0)) continue;
        auto& g = groups[first];
        if (g.sum_y.empty()) g.sum_y.assign(static_cast<std::size_t>(T), 0.0);
        g.size += uw;
        for (int t = 0; t < T; ++t) g.sum_y[static_cast<std::size_t>(t)] += uw * u.y[static_cast<std::size_t>(t)];
    }
    double total = 0.0;
    for (const auto& [k, g] : groups) total += g.size;

    struct Group {
        int start;
        double share;
        double dbar;
        std::vector<double> ybar;
        [[nodiscard]] double mean(int from, int to) const { // periods [from, to)
            double s = 0.0;
            for (int t = from; t < to; ++t) s += ybar[static_cast<std::size_t>(t)];
            return s / (to - from);
        }
    };
    std::vector<Group> timing;
    std::optional<Group> never;
    for (const auto& [start, g] : groups) {
        Group out{start, g.size / total, static_cast<double>(T - start) / T, {}};
        for (double s : g.sum_y) out.ybar.push_back(s / g.size);
        if (start == T) {
            never = std::move(out);
        } else {
            timing.push_back(std::move(out));
        }
    }
    if (timing.empty()) throw DataError("no unit is ever treated");

    BaconDecomposition out;
    out.weighted = opt.weighted;
    auto week_at = [&](int period) { return weeks[static_cast<std::size_t>(period)]; };
    if (never) {
        for (const auto& k : timing) {
            if (k.start == 0) continue; // always treated: no identifying variation against never treated
            const double nk = k.share, nu = never->share;
            const double nku = nk / (nk + nu);
            const double s = (nk + nu) * (nk + nu) * nku * (1 - nku) * k.dbar * (1 - k.dbar);
            const double dd = (k.mean(k.start, T) - k.mean(0, k.start)) - (never->mean(k.start, T) - never->mean(0, k.start));
            out.items.push_back({Comparison::treated_vs_never, week_at(k.start), std::nullopt, s, dd});
        }
    }
    for (std::size_t a = 0; a < timing.size(); ++a) {
        for (std::size_t b = a + 1; b < timing.size(); ++b) {
            const auto& k = timing[a]; // earlier
            const auto& l = timing[b]; // later
            const double nkl = k.share / (k.share + l.share);
            const double nn = k.share + l.share;
            if (k.start > 0) {
                const double s = std::pow(nn * (1 - l.dbar), 2) * nkl * (1 - nkl) * ((k.dbar - l.dbar) / (1 - l.dbar)) *
                                 ((1 - k.dbar) / (1 - l.dbar));
                const double dd = (k.mean(k.start, l.start) - k.mean(0, k.start)) -
                                  (l.mean(k.start, l.start) - l.mean(0, k.start));
                out.items.push_back({Comparison::earlier_vs_later_control, week_at(k.start), week_at(l.start), s, dd});
            }
            {
                const double s = std::pow(nn * k.dbar, 2) * nkl * (1 - nkl) * (l.dbar / k.dbar) * ((k.dbar - l.dbar) / k.dbar);
                const double dd = (l.mean(l.start, T) - l.mean(k.start, l.start)) -
                                  (k.mean(l.start, T) - k.mean(k.start, l.start));
                out.items.push_back({Comparison::later_vs_earlier_control, week_at(l.start), week_at(k.start), s, dd});
            }
        }
    }
    double sum = 0.0;
    for (const auto& it : out.items) sum += it.weight;
    if (!(sum > 0.0)) throw NumericalError("decomposition weights sum to zero (no identifying variation)");
    for (auto& it : out.items) {
        it.weight /= sum;
        out.recomposed_coefficient += it.weight * it.dd_estimate;
    }
    for (auto c : {Comparison::earlier_vs_later_control, Comparison::later_vs_earlier_control, Comparison::treated_vs_never}) {
        BaconAggregate agg{c, 0.0, 0.0};
        for (const auto& it : out.items)
            if (it.comparison == c) {
                agg.weight += it.weight;
                agg.average_dd += it.weight * it.dd_estimate;
            }
        if (agg.weight > 0.0) {
            agg.average_dd /= agg.weight;
            out.aggregates.push_back(agg);
        }
    }
    return out;
}

/// Sub-panel from the national closure week onward, with reopening as the sole
/// treatment for the decomposition.
inline PanelDataset reopening_subpanel(const PanelDataset& panel) {
    if (panel.closure_week() < 0) throw DataError("panel has no encoded closure week");
    return panel.filter([&](std::size_t i) { return panel.week()[i] >= panel.closure_week(); });
}

/// Unit-constant analytic weights (mean over each municipality's cells), the
/// weighting under which the decomposition identity is exact.
inline std::vector<double> unit_mean_weights(const PanelDataset& panel) {
    const auto& w = panel.column(col::weight);
    std::map<int, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        auto& a = acc[panel.municipality()[i]];
        a.first += w[i];
        ++a.second;
    }
    std::vector<double> out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const auto& a = acc[panel.municipality()[i]];
        out[i] = a.first / a.second;
    }
    return out;
}

struct DcdhCellWeight {
    int municipality = 0;
    int week = 0;
    double weight = 0.0;
};

struct DcdhWeights {
    std::vector<DcdhCellWeight> cells;
    double sum_of_weights = 0.0;
    double negative_share = 0.0; // magnitude share of negative weights
    std::size_t negative_count = 0;
};

/// Weights the two-way FE estimand attaches to treated cells: proportional to
/// w_mt times the residual of the treatment on the absorbed FEs. Weights with
/// magnitude below 1e-12 of the largest are treated as zero when classifying sign.
inline DcdhWeights dcdh_weights(const PanelDataset& panel, const std::string& treatment,
                                const std::vector<std::string>& fe_dims, bool weighted = true,
                                double tolerance = 1e-12) {
    const auto& d = panel.column(treatment);
    std::vector<double> w(panel.size(), 1.0);
    if (weighted) w = panel.column(col::weight);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < panel.size(); ++i)
        if (w[i] > 0.0) rows.push_back(i);
    std::vector<std::vector<int>> codes;
    for (const auto& dim : fe_dims) {
        const auto& key = panel.key(dim);
        std::vector<int> c;
        for (auto i : rows) c.push_back(key[i]);
        codes.push_back(std::move(c));
    }
    std::vector<double> ws;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        ws.push_back(w[rows[r]]);
        x(static_cast<Eigen::Index>(r), 0) = d[rows[r]];
    }
    const FixedEffects fe(std::move(codes), ws);
    const auto res = demean(std::move(x), fe, 1e-12, 100000).columns;

    DcdhWeights out;
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = rows[r];
        if (d[i] != 1.0) continue;
        const double raw = ws[r] * res(static_cast<Eigen::Index>(r), 0);
        out.cells.push_back({panel.municipality()[i], panel.week()[i], raw});
        total += raw;
    }
    if (out.cells.empty()) throw DataError(fmt::format("no treated cells for '{}'", treatment));
    if (total == 0.0) throw NumericalError("treatment is fully absorbed by the fixed effects");
    double biggest = 0.0, magnitude = 0.0, negative = 0.0;
    for (auto& c : out.cells) {
        c.weight /= total;
        out.sum_of_weights += c.weight;
        biggest = std::max(biggest, std::fabs(c.weight));
    }
    for (const auto& c : out.cells) {
        if (std::fabs(c.weight) <= tolerance * biggest) continue;
        magnitude += std::fabs(c.weight);
        if (c.weight < 0.0) {
            negative += -c.weight;
            ++out.negative_count;
        }
    }
    out.negative_share = magnitude > 0.0 ? negative / magnitude : 0.0;
    return out;
}

} // namespace reportgap
