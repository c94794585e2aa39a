#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "reportgap/error.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/stats.hpp"

namespace reportgap {

/// SplitMix64 finaliser; maps (master seed, replicate index) to independent streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t index) {
    return splitmix64(splitmix64(master) ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(index) + 1)));
}

/// Rows grouped by municipality, in ascending municipality order.
class ClusterIndex {
public:
    explicit ClusterIndex(const PanelDataset& panel) {
        std::map<int, std::vector<std::size_t>> by;
        for (std::size_t i = 0; i < panel.size(); ++i) by[panel.municipality()[i]].push_back(i);
        for (auto& [m, rows] : by) {
            ids_.push_back(m);
            rows_.push_back(std::move(rows));
        }
    }

    [[nodiscard]] std::size_t size() const { return ids_.size(); }
    [[nodiscard]] const std::vector<int>& ids() const { return ids_; }
    [[nodiscard]] const std::vector<std::size_t>& rows(std::size_t k) const { return rows_[k]; }

private:
    std::vector<int> ids_;
    std::vector<std::vector<std::size_t>> rows_;
};

/// M cluster positions drawn uniformly with replacement.
inline std::vector<std::size_t> draw_clusters(std::size_t m, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::vector<std::size_t> draws(m);
    for (auto& d : draws) d = pick(rng);
    return draws;
}

/// Stacks the drawn clusters; the k-th draw becomes municipality k+1 so that
/// duplicated clusters stay distinct for fixed effects and clustering.
inline PanelDataset resample_clusters(const PanelDataset& panel, const ClusterIndex& index,
                                      const std::vector<std::size_t>& draws) {
    std::vector<std::size_t> rows;
    std::vector<int> ids;
    for (std::size_t k = 0; k < draws.size(); ++k) {
        if (draws[k] >= index.size()) throw std::out_of_range("cluster draw out of range");
        const auto& r = index.rows(draws[k]);
        rows.insert(rows.end(), r.begin(), r.end());
        ids.insert(ids.end(), r.size(), static_cast<int>(k) + 1);
    }
    PanelDataset out = panel.subset(rows);
    out.relabel_municipalities(std::move(ids));
    return out;
}

inline PanelDataset resample_clusters(const PanelDataset& panel, std::mt19937_64& rng) {
    const ClusterIndex index(panel);
    return resample_clusters(panel, index, draw_clusters(index.size(), rng));
}

struct BootstrapOptions {
    std::size_t replicates = 250;
    std::uint64_t seed = 20200316;
    unsigned threads = 1;
    double alpha = 0.05;
};

struct BootstrapResult {
    std::vector<std::vector<double>> replicates; // B x dim, replicate order
    std::vector<double> ci_low;
    std::vector<double> ci_high;
};

using Statistic = std::function<std::vector<double>(const PanelDataset&)>;

/// Municipality block bootstrap of a vector statistic with percentile CIs.
/// Replicate b draws from its own stream seeded by (seed, b), so results do not
/// depend on the thread count.
inline BootstrapResult bootstrap(const PanelDataset& panel, const Statistic& statistic, const BootstrapOptions& opt = {}) {
    if (opt.replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ConfigError("bootstrap alpha must be in (0,1)");
    const ClusterIndex index(panel);
    if (index.size() < 2) throw DataError("bootstrap needs at least 2 municipalities");
    const std::size_t B = opt.replicates;
    std::vector<std::vector<double>> reps(B);
    std::vector<std::exception_ptr> errors(B);
    const unsigned T = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(B)));
    auto work = [&](unsigned t) {
        for (std::size_t b = t; b < B; b += T) {
            try {
                std::mt19937_64 rng(replicate_seed(opt.seed, b));
                reps[b] = statistic(resample_clusters(panel, index, draw_clusters(index.size(), rng)));
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };
    if (T == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < T; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (std::size_t b = 0; b < B; ++b) {
        if (!errors[b]) continue;
        try {
            std::rethrow_exception(errors[b]);
        } catch (const std::exception& e) {
            throw NumericalError(fmt::format("bootstrap replicate {} failed: {}", b, e.what()));
        }
    }
    const std::size_t dim = reps[0].size();
    for (std::size_t b = 1; b < B; ++b)
        if (reps[b].size() != dim)
            throw NumericalError(fmt::format("bootstrap replicate {} returned {} values, expected {}", b,
                                             reps[b].size(), dim));
    BootstrapResult out;
    out.ci_low.resize(dim);
    out.ci_high.resize(dim);
    std::vector<double> v(B);
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t b = 0; b < B; ++b) v[b] = reps[b][j];
        std::sort(v.begin(), v.end());
        out.ci_low[j] = stats::quantile_sorted(v, opt.alpha / 2.0);
        out.ci_high[j] = stats::quantile_sorted(v, 1.0 - opt.alpha / 2.0);
    }
    out.replicates = std::move(reps);
    return out;
}

struct ScalarInterval {
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<double> replicates;
};

inline ScalarInterval bootstrap_ci(const PanelDataset& panel, const std::function<double(const PanelDataset&)>& statistic,
                                   const BootstrapOptions& opt = {}) {
    const auto r = bootstrap(
        panel, [&](const PanelDataset& p) { return std::vector<double>{statistic(p)}; }, opt);
    ScalarInterval s{r.ci_low[0], r.ci_high[0], {}};
    for (const auto& rep : r.replicates) s.replicates.push_back(rep[0]);
    return s;
}

} // namespace reportgap
