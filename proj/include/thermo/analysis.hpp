#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "thermo/explain.hpp"
#include "thermo/hub.hpp"

namespace thermo {

// Argmax of the stored logits; same tie rule as select_target.
inline int predicted_label(const Instance& inst) {
    return select_target(inst.logits);
}

/// Aligned instance pair on which two models predict different labels.
struct DisagreementPair {
    std::size_t idx = 0;
    Instance instance_a;
    Instance instance_b;
    int pred_a = 0;
    int pred_b = 0;
};

namespace detail {

inline void check_aligned(const ExplanationDataset& a, const ExplanationDataset& b,
                          const char* what) {
    if (a.instances.size() != b.instances.size()) {
        throw std::invalid_argument(std::string(what) + ": datasets differ in length (" +
                                    std::to_string(a.instances.size()) + " vs " +
                                    std::to_string(b.instances.size()) + ")");
    }
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        if (a.instances[i].idx != b.instances[i].idx) {
            throw std::invalid_argument(std::string(what) + ": idx mismatch at position " +
                                        std::to_string(i));
        }
        if (a.instances[i].input_ids != b.instances[i].input_ids) {
            throw std::invalid_argument(std::string(what) +
                                        ": input_ids mismatch at idx " +
                                        std::to_string(a.instances[i].idx));
        }
    }
}

} // namespace detail

// Pairs where the two datasets' predicted labels differ, in idx order.
inline std::vector<DisagreementPair> disagreement(const ExplanationDataset& a,
                                                  const ExplanationDataset& b) {
    detail::check_aligned(a, b, "disagreement");
    std::vector<DisagreementPair> out;
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        const int pa = predicted_label(a.instances[i]);
        const int pb = predicted_label(b.instances[i]);
        if (pa != pb) {
            out.push_back({a.instances[i].idx, a.instances[i], b.instances[i], pa, pb});
        }
    }
    return out;
}

// Concatenated attribution vectors in idx order. With drop_pad set, positions
// holding that token id are skipped.
inline std::vector<double> flatten_attributions(const ExplanationDataset& ds,
                                                std::optional<TokenId> drop_pad = {}) {
    std::vector<double> out;
    for (const auto& inst : ds.instances) {
        for (std::size_t i = 0; i < inst.attributions.size(); ++i) {
            if (drop_pad && inst.input_ids[i] == *drop_pad) continue;
            out.push_back(inst.attributions[i]);
        }
    }
    return out;
}

struct TauResult {
    double tau = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

namespace detail {

// per-variable tie statistics over groups of equal values
struct TieStats {
    std::uint64_t pairs = 0;    // sum t(t-1)/2
    std::uint64_t sum1 = 0;     // sum t(t-1)
    std::uint64_t sum2 = 0;     // sum t(t-1)(t-2)
    std::uint64_t sum_var = 0;  // sum t(t-1)(2t+5)

    void add_group(std::uint64_t t) {
        if (t < 2) return;
        pairs += t * (t - 1) / 2;
        sum1 += t * (t - 1);
        sum2 += t * (t - 1) * (t - 2);
        sum_var += t * (t - 1) * (2 * t + 5);
    }
};

inline std::uint64_t merge_count_inversions(std::vector<double>& v, std::vector<double>& tmp,
                                            std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t count =
        merge_count_inversions(v, tmp, lo, mid) + merge_count_inversions(v, tmp, mid, hi);
    std::size_t i = lo;
    std::size_t j = mid;
    std::size_t k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            count += mid - i;  // strictly smaller on the right: inversion
            tmp[k++] = v[j++];
        } else {
            tmp[k++] = v[i++];
        }
    }
    while (i < mid) tmp[k++] = v[i++];
    while (j < hi) tmp[k++] = v[j++];
    std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
              tmp.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return count;
}

// Two-sided p-value from the tie-corrected normal approximation for tau-b.
inline double tau_b_pvalue(double s, std::uint64_t n, const TieStats& tx, const TieStats& ty) {
    const auto dn = static_cast<double>(n);
    double var = (dn * (dn - 1.0) * (2.0 * dn + 5.0) - static_cast<double>(tx.sum_var) -
                  static_cast<double>(ty.sum_var)) /
                 18.0;
    var += static_cast<double>(tx.sum1) * static_cast<double>(ty.sum1) /
           (2.0 * dn * (dn - 1.0));
    if (n > 2) {
        var += static_cast<double>(tx.sum2) * static_cast<double>(ty.sum2) /
               (9.0 * dn * (dn - 1.0) * (dn - 2.0));
    }
    if (!(var > 0.0)) {
        return 1.0;
    }
    const double z = s / std::sqrt(var);
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

} // namespace detail

// Tie-corrected Kendall tau-b with a merge-sort discordance count:
//   tau = (C - D) / sqrt((n0 - n1) (n0 - n2))
// where n0 = n(n-1)/2 and n1, n2 are tied-pair counts in x and y.
// C - D is obtained as n0 - n1 - n2 + n3 - 2 * (inversions of y under x-order)
// after sorting lexicographically by (x, y).
inline TauResult kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("kendall_tau: length mismatch (" +
                                    std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        throw std::invalid_argument("kendall_tau: need at least 2 observations");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw std::invalid_argument("kendall_tau: non-finite input");
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    detail::TieStats tie_x;
    std::uint64_t joint_pairs = 0;  // pairs tied in both x and y
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && x[order[j]] == x[order[i]]) ++j;
            tie_x.add_group(j - i);
            std::size_t k = i;
            while (k < j) {
                std::size_t m = k;
                while (m < j && y[order[m]] == y[order[k]]) ++m;
                const std::uint64_t run = m - k;
                joint_pairs += run * (run - 1) / 2;
                k = m;
            }
            i = j;
        }
    }

    std::vector<double> y_in_x_order(n);
    for (std::size_t i = 0; i < n; ++i) y_in_x_order[i] = y[order[i]];
    std::vector<double> tmp(n);
    const std::uint64_t inversions =
        detail::merge_count_inversions(y_in_x_order, tmp, 0, n);

    detail::TieStats tie_y;
    {
        // y_in_x_order is now fully sorted
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && y_in_x_order[j] == y_in_x_order[i]) ++j;
            tie_y.add_group(j - i);
            i = j;
        }
    }

    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    if (n0 == tie_x.pairs || n0 == tie_y.pairs) {
        throw std::domain_error("kendall_tau: zero variance (all values tied), tau undefined");
    }
    const double s = static_cast<double>(n0) - static_cast<double>(tie_x.pairs) -
                     static_cast<double>(tie_y.pairs) + static_cast<double>(joint_pairs) -
                     2.0 * static_cast<double>(inversions);
    // One sqrt of the product keeps tau exactly 1 for identical inputs.
    const double denom = std::sqrt(static_cast<double>(n0 - tie_x.pairs) *
                                   static_cast<double>(n0 - tie_y.pairs));
    const double tau = std::clamp(s / denom, -1.0, 1.0);
    return {tau, detail::tau_b_pvalue(s, n, tie_x, tie_y), n};
}

inline TauResult kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    return kendall_tau(std::span<const double>(x), std::span<const double>(y));
}

// Rank correlation between two explainers' flattened attribution maps over
// aligned datasets.
inline TauResult explainer_agreement(const ExplanationDataset& a, const ExplanationDataset& b,
                                     std::optional<TokenId> drop_pad = {}) {
    detail::check_aligned(a, b, "explainer_agreement");
    const auto xa = flatten_attributions(a, drop_pad);
    const auto xb = flatten_attributions(b, drop_pad);
    return kendall_tau(xa, xb);
}

} // namespace thermo
