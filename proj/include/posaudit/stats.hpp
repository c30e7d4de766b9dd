#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace posaudit {

// Average ranks, 1-based, ties share the mean rank.
inline std::vector<double> rank_average(const std::vector<double>& v) {
    std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: size mismatch");
    double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson: constant input");
    return sab / std::sqrt(saa * sbb);
}

struct PartialCorrResult {
    double rho = 0.0;
    double p_two_sided = 1.0;
    double p_one_sided_positive = 1.0;  // alternative rho > 0
    std::size_t n = 0;
    std::string method = "spearman-partial";
};

// Rank-based partial correlation of x and y controlling for z:
// Spearman ranks, then the Pearson partial-correlation identity.
// p-values from t = rho * sqrt((n-3) / (1-rho^2)) with n-3 df.
inline PartialCorrResult partial_corr(const std::vector<double>& x, const std::vector<double>& y,
                                      const std::vector<double>& z) {
    std::size_t n = x.size();
    if (y.size() != n || z.size() != n) throw std::invalid_argument("partial_corr: size mismatch");
    if (n < 4) throw std::invalid_argument("partial_corr: need n >= 4");
    auto rx = rank_average(x), ry = rank_average(y), rz = rank_average(z);
    double r_xy = pearson(rx, ry);  // throws on constant input
    double r_xz = pearson(rx, rz);
    double r_yz = pearson(ry, rz);
    double denom2 = (1.0 - r_xz * r_xz) * (1.0 - r_yz * r_yz);
    if (denom2 <= 0.0)
        throw std::invalid_argument("partial_corr: control is collinear with an input");
    PartialCorrResult res;
    res.n = n;
    res.rho = (r_xy - r_xz * r_yz) / std::sqrt(denom2);
    res.rho = std::clamp(res.rho, -1.0, 1.0);
    double df = static_cast<double>(n) - 3.0;
    if (std::abs(res.rho) >= 1.0) {
        res.p_two_sided = 0.0;
        res.p_one_sided_positive = res.rho > 0 ? 0.0 : 1.0;
        return res;
    }
    double t = res.rho * std::sqrt(df / (1.0 - res.rho * res.rho));
    boost::math::students_t_distribution<double> dist(df);
    res.p_one_sided_positive = boost::math::cdf(boost::math::complement(dist, t));
    res.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    res.p_two_sided = std::min(res.p_two_sided, 1.0);
    return res;
}

struct BinTable {
    int k = 0;
    std::vector<double> bin_means;        // mean PBS per length bin, ascending length
    std::vector<double> bin_mean_lengths; // mean length per bin, for plot data
    std::vector<int> bin_counts;
    bool strictly_monotone = false;
    std::optional<int> first_violation;  // 1-based bin index of first out-of-order adjacent pair
    double endpoint_gradient = 0.0;      // last mean - first mean
};

struct LengthPbsPoint {
    std::string id;
    double length = 0.0;
    double pbs = 0.0;
};

// Equal-frequency bins by ascending length (ties broken by id), mean PBS per
// bin, strict-monotonicity diagnostics. Bin counts differ by at most one.
inline BinTable bin_by_length(std::vector<LengthPbsPoint> points, int k) {
    if (k < 2) throw std::invalid_argument("bin_by_length: k must be >= 2");
    std::size_t n = points.size();
    if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("bin_by_length: n < k");
    std::sort(points.begin(), points.end(), [](const LengthPbsPoint& a, const LengthPbsPoint& b) {
        if (a.length != b.length) return a.length < b.length;
        return a.id < b.id;
    });
    BinTable table;
    table.k = k;
    std::size_t base = n / k, extra = n % k, idx = 0;
    for (int b = 0; b < k; ++b) {
        std::size_t size = base + (static_cast<std::size_t>(b) < extra ? 1 : 0);
        double pbs_sum = 0.0, len_sum = 0.0;
        for (std::size_t i = 0; i < size; ++i, ++idx) {
            pbs_sum += points[idx].pbs;
            len_sum += points[idx].length;
        }
        table.bin_counts.push_back(static_cast<int>(size));
        table.bin_means.push_back(pbs_sum / size);
        table.bin_mean_lengths.push_back(len_sum / size);
    }
    table.strictly_monotone = true;
    for (int b = 0; b + 1 < k; ++b) {
        if (!(table.bin_means[b + 1] > table.bin_means[b])) {
            table.strictly_monotone = false;
            if (!table.first_violation) table.first_violation = b + 1;
        }
    }
    table.endpoint_gradient = table.bin_means.back() - table.bin_means.front();
    return table;
}

enum class Alternative { greater, less };

struct WilcoxonResult {
    std::size_t n_pairs = 0;  // after zero-difference removal
    double statistic = 0.0;   // W+ (sum of ranks of positive differences)
    double p_one_sided = 1.0;
    double mean_diff = 0.0;  // over all supplied pairs, zeros included
    std::string direction;
    bool degenerate = false;  // all differences zero
    bool used_exact = false;
};

namespace stats_detail {

// Exact null distribution of W+ via subset-sum counting over doubled ranks
// (average-rank ties make ranks half-integers; doubling keeps sums integral).
inline double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus,
                               Alternative alternative) {
    std::vector<int> r2;
    r2.reserve(ranks.size());
    int total2 = 0;
    for (double r : ranks) {
        int d = static_cast<int>(std::llround(2.0 * r));
        r2.push_back(d);
        total2 += d;
    }
    std::vector<double> ways(total2 + 1, 0.0);
    ways[0] = 1.0;
    for (int d : r2)
        for (int s = total2; s >= d; --s) ways[s] += ways[s - d];
    double denom = std::pow(2.0, static_cast<double>(ranks.size()));
    int w2 = static_cast<int>(std::llround(2.0 * w_plus));
    double acc = 0.0;
    if (alternative == Alternative::greater) {
        for (int s = w2; s <= total2; ++s) acc += ways[s];
    } else {
        for (int s = 0; s <= w2; ++s) acc += ways[s];
    }
    return acc / denom;
}

}  // namespace stats_detail

// One-sided paired Wilcoxon signed-rank test. "greater" tests a > b.
// Exact distribution when n_pairs <= 25, else normal approximation with
// tie-corrected variance and continuity correction.
inline WilcoxonResult wilcoxon_paired_one_sided(const std::vector<double>& a,
                                                const std::vector<double>& b,
                                                Alternative alternative) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("wilcoxon: size mismatch or empty");
    WilcoxonResult res;
    res.direction = alternative == Alternative::greater ? "greater" : "less";
    std::vector<double> diffs;
    double diff_sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        diff_sum += d;
        if (d != 0.0) diffs.push_back(d);
    }
    res.mean_diff = diff_sum / static_cast<double>(a.size());
    res.n_pairs = diffs.size();
    if (diffs.empty()) {
        res.degenerate = true;
        res.p_one_sided = 1.0;
        return res;
    }
    std::vector<double> abs_d(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) abs_d[i] = std::abs(diffs[i]);
    auto ranks = rank_average(abs_d);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0) w_plus += ranks[i];
    res.statistic = w_plus;

    std::size_t n = diffs.size();
    if (n <= 25) {
        res.used_exact = true;
        res.p_one_sided = stats_detail::wilcoxon_exact_p(ranks, w_plus, alternative);
        return res;
    }
    double nn = static_cast<double>(n);
    double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    // tie correction: subtract sum(t^3 - t)/48 over tie groups of |d|
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            double t = static_cast<double>(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
    }
    boost::math::normal_distribution<double> norm;
    double sd = std::sqrt(var);
    if (alternative == Alternative::greater) {
        double z = (w_plus - mean - 0.5) / sd;
        res.p_one_sided = boost::math::cdf(boost::math::complement(norm, z));
    } else {
        double z = (w_plus - mean + 0.5) / sd;
        res.p_one_sided = boost::math::cdf(norm, z);
    }
    return res;
}

struct ChiSquareResult {
    std::array<std::array<double, 2>, 2> table{};  // rows: before/after; cols: changed/unchanged
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 1;
    bool small_sample_warning = false;  // some expected cell < 1
};

// Pearson chi-square on the 2x2 changed/unchanged x before/after table,
// without continuity correction.
inline ChiSquareResult chi_square_2x2(double changed_before, double total_before,
                                      double changed_after, double total_after) {
    if (total_before <= 0 || total_after <= 0)
        throw std::invalid_argument("chi_square_2x2: totals must be positive");
    if (changed_before < 0 || changed_after < 0 || changed_before > total_before ||
        changed_after > total_after)
        throw std::invalid_argument("chi_square_2x2: changed counts out of range");
    ChiSquareResult res;
    res.table[0] = {changed_before, total_before - changed_before};
    res.table[1] = {changed_after, total_after - changed_after};
    double n = total_before + total_after;
    double col0 = changed_before + changed_after;
    double col1 = n - col0;
    std::array<double, 2> rows = {total_before, total_after};
    std::array<double, 2> cols = {col0, col1};
    double stat = 0.0;
    bool degenerate_margin = (col0 == 0.0 || col1 == 0.0);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            double expected = rows[r] * cols[c] / n;
            if (expected < 1.0) res.small_sample_warning = true;
            if (expected > 0.0) {
                double d = res.table[r][c] - expected;
                stat += d * d / expected;
            }
        }
    }
    if (degenerate_margin) {
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.small_sample_warning = true;
        return res;
    }
    res.statistic = stat;
    boost::math::chi_squared_distribution<double> dist(1.0);
    res.p_value = boost::math::cdf(boost::math::complement(dist, stat));
    return res;
}

}  // namespace posaudit
