#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "reportgap/error.hpp"
#include "reportgap/panel.hpp"
#include "reportgap/stats.hpp"

namespace reportgap {

/// Maps arbitrary integer codes to dense level indices 0..L-1 (in ascending code order).
inline std::vector<int> compact_levels(std::span<const int> codes, int* n_levels = nullptr) {
    std::vector<int> sorted(codes.begin(), codes.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), codes[i]) - sorted.begin());
    if (n_levels) *n_levels = static_cast<int>(sorted.size());
    return out;
}

/// Categorical dimensions absorbed by weighted within-transformation.
class FixedEffects {
public:
    FixedEffects(std::vector<std::vector<int>> codes, std::vector<double> weights) : weights_(std::move(weights)) {
        for (auto& c : codes) {
            if (c.size() != weights_.size()) throw std::logic_error("fixed-effect codes and weights differ in length");
            int n = 0;
            ids_.push_back(compact_levels(c, &n));
            if (n < 1) throw DataError("fixed-effect dimension has no levels");
            n_levels_.push_back(n);
            std::vector<double> wsum(static_cast<std::size_t>(n), 0.0);
            for (std::size_t i = 0; i < weights_.size(); ++i) {
                if (weights_[i] < 0.0) throw DataError("negative analytic weight");
                wsum[static_cast<std::size_t>(ids_.back()[i])] += weights_[i];
            }
            level_weight_.push_back(std::move(wsum));
        }
    }

    [[nodiscard]] std::size_t dims() const { return ids_.size(); }
    [[nodiscard]] std::size_t rows() const { return weights_.size(); }
    [[nodiscard]] int levels(std::size_t d) const { return n_levels_[d]; }
    [[nodiscard]] const std::vector<int>& ids(std::size_t d) const { return ids_[d]; }
    [[nodiscard]] const std::vector<double>& weights() const { return weights_; }

    /// Subtracts the weighted level means of dimension `d` from `x` in place.
    void project_out(std::size_t d, double* x, std::vector<double>& scratch) const {
        const auto& id = ids_[d];
        const auto& wsum = level_weight_[d];
        scratch.assign(wsum.size(), 0.0);
        const std::size_t n = weights_.size();
        for (std::size_t i = 0; i < n; ++i) scratch[static_cast<std::size_t>(id[i])] += weights_[i] * x[i];
        for (std::size_t l = 0; l < wsum.size(); ++l) scratch[l] = wsum[l] > 0.0 ? scratch[l] / wsum[l] : 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] -= scratch[static_cast<std::size_t>(id[i])];
    }

    /// Degrees of freedom absorbed: total levels minus redundancies. The first two
    /// dimensions lose one level per connected component of their bipartite
    /// graph; each further dimension is assumed to lose one.
    [[nodiscard]] std::size_t absorbed_df() const {
        if (dims() == 0) return 0;
        std::size_t df = static_cast<std::size_t>(n_levels_[0]);
        if (dims() == 1) return df;
        const int a = n_levels_[0];
        std::vector<int> parent(static_cast<std::size_t>(a + n_levels_[1]));
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int v) {
            while (parent[static_cast<std::size_t>(v)] != v) {
                parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
                v = parent[static_cast<std::size_t>(v)];
            }
            return v;
        };
        for (std::size_t i = 0; i < rows(); ++i) {
            const int u = find(ids_[0][i]);
            const int v = find(a + ids_[1][i]);
            if (u != v) parent[static_cast<std::size_t>(u)] = v;
        }
        std::size_t components = 0;
        for (int v = 0; v < static_cast<int>(parent.size()); ++v)
            if (find(v) == v) ++components;
        df += static_cast<std::size_t>(n_levels_[1]) - components;
        for (std::size_t d = 2; d < dims(); ++d) df += static_cast<std::size_t>(n_levels_[d]) - 1;
        return df;
    }

private:
    std::vector<double> weights_;
    std::vector<std::vector<int>> ids_;
    std::vector<int> n_levels_;
    std::vector<std::vector<double>> level_weight_;
};

struct DemeanReport {
    int iterations = 0;
    double last_delta = 0.0;
};

struct DemeanResult {
    Eigen::MatrixXd columns;
    DemeanReport report;
};

/// Alternating weighted group-mean subtraction across all dimensions until the
/// largest change of any column in a sweep, relative to that column's input
/// scale, drops below `tolerance`. A single dimension is exact after one sweep.
inline DemeanResult demean(Eigen::MatrixXd columns, const FixedEffects& fe, double tolerance = 1e-8,
                           int max_iter = 10000) {
    if (!(tolerance > 0.0)) throw ConfigError("demean tolerance must be positive");
    if (static_cast<std::size_t>(columns.rows()) != fe.rows()) throw std::logic_error("demean row mismatch");
    DemeanResult out;
    if (fe.dims() == 0) {
        out.columns = std::move(columns);
        return out;
    }
    std::vector<double> scratch;
    std::vector<double> before(fe.rows());
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
        double* x = columns.col(c).data();
        const double scale = columns.col(c).cwiseAbs().maxCoeff();
        if (scale == 0.0) continue;
        int it = 0;
        double delta = 0.0;
        while (true) {
            ++it;
            std::copy(x, x + fe.rows(), before.begin());
            for (std::size_t d = 0; d < fe.dims(); ++d) fe.project_out(d, x, scratch);
            if (fe.dims() == 1) {
                delta = 0.0;
                break;
            }
            delta = 0.0;
            for (std::size_t i = 0; i < fe.rows(); ++i) delta = std::max(delta, std::fabs(x[i] - before[i]));
            delta /= scale;
            if (delta < tolerance) break;
            if (it >= max_iter)
                throw NumericalError(fmt::format("demeaning did not converge in {} sweeps (last relative delta {:.3e})",
                                                 max_iter, delta));
        }
        out.report.iterations = std::max(out.report.iterations, it);
        out.report.last_delta = std::max(out.report.last_delta, delta);
    }
    out.columns = std::move(columns);
    return out;
}

struct WlsResult {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
};

/// Weighted least squares via column-pivoted QR of sqrt(W)X. Rank is judged by
/// singular values below 1e-10 x the largest; the offending columns are named.
inline WlsResult fit_wls(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                         const std::vector<std::string>& names = {}) {
    if (X.rows() != y.size() || w.size() != y.size()) throw std::logic_error("fit_wls dimension mismatch");
    if (X.cols() == 0) throw ConfigError("regression has no regressors");
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    const Eigen::MatrixXd R = qr.matrixR().topRows(X.cols()).triangularView<Eigen::Upper>();
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > 1e-10 * smax) ++rank;
    if (rank < X.cols() || smax == 0.0) {
        std::string cols;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index i = rank; i < X.cols(); ++i) {
            const auto j = static_cast<std::size_t>(perm(i));
            cols += (cols.empty() ? "" : ", ") + (j < names.size() ? names[j] : fmt::format("column {}", j));
        }
        throw NumericalError(fmt::format("design matrix is rank deficient (rank {} of {}); dependent column(s): {}",
                                         rank, X.cols(), cols));
    }
    WlsResult out;
    out.coefficients = qr.solve(Eigen::VectorXd(sw.cwiseProduct(y)));
    out.residuals = y - X * out.coefficients;
    return out;
}

/// Cluster-robust sandwich with CR1 small-sample factor
/// [G/(G-1)] [(N-1)/(N-K)], K = k_effective.
inline Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, const Eigen::VectorXd& u,
                                    std::span<const int> clusters, std::size_t k_effective) {
    const auto n = static_cast<std::size_t>(X.rows());
    if (clusters.size() != n) throw DataError("every row needs a cluster id");
    int g_count = 0;
    const auto ids = compact_levels(clusters, &g_count);
    if (g_count < 2) throw NumericalError("cluster-robust covariance needs at least 2 clusters");
    if (n <= k_effective)
        throw NumericalError(fmt::format("N = {} does not exceed K = {}", n, k_effective));
    const Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    const Eigen::MatrixXd bread = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(g_count, X.cols());
    for (std::size_t i = 0; i < n; ++i)
        scores.row(ids[i]).noalias() += (w(static_cast<Eigen::Index>(i)) * u(static_cast<Eigen::Index>(i))) *
                                        X.row(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd meat = scores.transpose() * scores;
    const double G = g_count;
    const double N = static_cast<double>(n);
    const double K = static_cast<double>(k_effective);
    const double c = (G / (G - 1.0)) * ((N - 1.0) / (N - K));
    Eigen::MatrixXd V = c * bread * meat * bread;
    return 0.5 * (V + V.transpose());
}

struct RegressionSpec {
    std::string outcome;
    std::vector<std::string> regressors;
    std::vector<std::string> fe_dims{"municipality", "week_of_year"};
    std::optional<std::string> weights = std::string(col::weight);
    std::string cluster_dim = "municipality";
    double demean_tolerance = 1e-8;
    int demean_max_iter = 10000;
};

inline constexpr const char* intercept_term = "(intercept)";

struct RegressionFit {
    std::string outcome;
    std::vector<std::string> terms;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd residuals;
    std::vector<std::size_t> rows; // panel rows in the estimation sample
    std::size_t n_obs = 0;
    std::size_t k_effective = 0;
    std::size_t n_clusters = 0;
    double baseline_mean = std::nan("");
    double demean_tolerance = 0.0;
    DemeanReport demean_report;

    [[nodiscard]] std::size_t index(std::string_view term) const {
        for (std::size_t i = 0; i < terms.size(); ++i)
            if (terms[i] == term) return i;
        throw ConfigError(fmt::format("fit has no term '{}'", term));
    }
    [[nodiscard]] double coef(std::string_view term) const { return coefficients(static_cast<Eigen::Index>(index(term))); }
    [[nodiscard]] double se(std::string_view term) const {
        const auto i = static_cast<Eigen::Index>(index(term));
        return std::sqrt(std::max(0.0, vcov(i, i)));
    }
    [[nodiscard]] double df() const { return static_cast<double>(n_clusters) - 1.0; }
    [[nodiscard]] double t(std::string_view term) const {
        const double s = se(term);
        return s > 0.0 ? coef(term) / s : (coef(term) == 0.0 ? 0.0 : std::nan(""));
    }
    [[nodiscard]] double p(std::string_view term) const { return stats::two_sided_p(t(term), df()); }
};

/// Linear restriction sum_k weight_k * b_k = 0.
struct Contrast {
    std::vector<std::pair<std::string, double>> terms;

    static Contrast difference(std::string a, std::string b) { return {{{std::move(a), 1.0}, {std::move(b), -1.0}}}; }
};

struct WaldResult {
    double estimate = 0.0;
    double se = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
};

/// t = c'b / sqrt(c'Vc), two-sided p from t with G-1 degrees of freedom. A
/// contrast that cancels identically, or an exactly zero estimate with zero
/// variance, yields statistic 0 and p = 1; a nonzero estimate with zero variance
/// is an error.
inline WaldResult wald_linear(const RegressionFit& fit, const Contrast& contrast) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fit.terms.size()));
    for (const auto& [term, weight] : contrast.terms) c(static_cast<Eigen::Index>(fit.index(term))) += weight;
    WaldResult r;
    if (c.isZero(0.0)) return r;
    r.estimate = c.dot(fit.coefficients);
    const double var = c.dot(fit.vcov * c);
    if (!(var > 0.0)) {
        if (r.estimate == 0.0) return r;
        throw NumericalError("linear restriction has zero variance");
    }
    r.se = std::sqrt(var);
    r.statistic = r.estimate / r.se;
    r.p_value = stats::two_sided_p(r.statistic, fit.df());
    return r;
}

/// Extra design columns supplied alongside a panel (event-time indicators, interactions).
using ColumnMap = std::map<std::string, std::vector<double>>;

namespace detail {
inline const std::vector<double>& lookup(const PanelDataset& panel, const ColumnMap* extra, const std::string& name) {
    if (extra) {
        auto it = extra->find(name);
        if (it != extra->end()) return it->second;
    }
    return panel.column(name);
}
} // namespace detail

/// Weighted FE regression: demean -> WLS -> clustered covariance. Cells with
/// zero weight or a missing value in any used column are dropped. An outcome
/// fully absorbed by the fixed effects is set to exactly zero.
inline RegressionFit estimate(const RegressionSpec& spec, const PanelDataset& panel, const ColumnMap* extra = nullptr) {
    if (spec.regressors.empty()) throw ConfigError("regression spec has no regressors");
    std::vector<std::string> fe_dims;
    for (const auto& d : spec.fe_dims)
        if (d != "none") fe_dims.push_back(d);

    const auto& y_all = detail::lookup(panel, extra, spec.outcome);
    std::vector<const std::vector<double>*> x_all;
    for (const auto& r : spec.regressors) x_all.push_back(&detail::lookup(panel, extra, r));
    const std::vector<double>* w_all = spec.weights ? &detail::lookup(panel, extra, *spec.weights) : nullptr;

    RegressionFit fit;
    fit.outcome = spec.outcome;
    fit.terms = spec.regressors;
    fit.demean_tolerance = spec.demean_tolerance;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (w_all && !((*w_all)[i] > 0.0)) continue;
        if (!std::isfinite(y_all[i])) continue;
        bool ok = true;
        for (const auto* x : x_all) ok = ok && std::isfinite((*x)[i]);
        if (ok) fit.rows.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(fit.rows.size());
    if (n == 0) throw DataError("estimation sample is empty");
    const bool with_intercept = fe_dims.empty();
    if (with_intercept) fit.terms.emplace_back(intercept_term);
    const auto k = static_cast<Eigen::Index>(fit.terms.size());

    Eigen::MatrixXd data(n, k + 1);
    Eigen::VectorXd w(n);
    std::vector<int> clusters(fit.rows.size());
    const auto& cluster_key = panel.key(spec.cluster_dim);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto i = fit.rows[static_cast<std::size_t>(r)];
        data(r, 0) = y_all[i];
        for (std::size_t j = 0; j < x_all.size(); ++j) data(r, static_cast<Eigen::Index>(j) + 1) = (*x_all[j])[i];
        if (with_intercept) data(r, k) = 1.0;
        w(r) = w_all ? (*w_all)[i] : 1.0;
        clusters[static_cast<std::size_t>(r)] = cluster_key[i];
    }

    // baseline: weighted mean outcome over pre-closure cells
    if (panel.has_column(col::closure) && panel.has_column(col::reopen_binary)) {
        const auto& cl = panel.column(col::closure);
        const auto& ro = panel.column(col::reopen_binary);
        double sw = 0.0, swy = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto i = fit.rows[static_cast<std::size_t>(r)];
            if (cl[i] == 0.0 && ro[i] == 0.0) {
                sw += w(r);
                swy += w(r) * data(r, 0);
            }
        }
        if (sw > 0.0) fit.baseline_mean = swy / sw;
    }

    std::vector<std::vector<int>> codes;
    for (const auto& d : fe_dims) {
        const auto& key = panel.key(d);
        std::vector<int> c(fit.rows.size());
        for (std::size_t r = 0; r < fit.rows.size(); ++r) c[r] = key[fit.rows[r]];
        codes.push_back(std::move(c));
    }
    const FixedEffects fe(std::move(codes), std::vector<double>(w.data(), w.data() + n));
    const double y_scale = data.col(0).cwiseAbs().maxCoeff();
    auto dm = demean(std::move(data), fe, spec.demean_tolerance, spec.demean_max_iter);
    fit.demean_report = dm.report;
    Eigen::MatrixXd& tilde = dm.columns;
    if (!fe_dims.empty() && tilde.col(0).cwiseAbs().maxCoeff() <= 1e-12 * y_scale) tilde.col(0).setZero();
    // a constant outcome is carried by the intercept exactly
    double constant = 0.0;
    if (with_intercept && (tilde.col(0).array() == tilde(0, 0)).all()) {
        constant = tilde(0, 0);
        tilde.col(0).setZero();
    }

    const Eigen::VectorXd yt = tilde.col(0);
    const Eigen::MatrixXd Xt = tilde.rightCols(k);
    auto wls = fit_wls(yt, Xt, w, fit.terms);
    fit.coefficients = std::move(wls.coefficients);
    if (with_intercept) fit.coefficients(k - 1) += constant;
    fit.residuals = std::move(wls.residuals);
    fit.n_obs = static_cast<std::size_t>(n);
    fit.k_effective = static_cast<std::size_t>(k) + fe.absorbed_df();
    int g = 0;
    compact_levels(clusters, &g);
    fit.n_clusters = static_cast<std::size_t>(g);
    fit.vcov = cluster_vcov(Xt, w, fit.residuals, clusters, fit.k_effective);
    return fit;
}

} // namespace reportgap
