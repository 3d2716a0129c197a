#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "thermo/model.hpp"
#include "thermo/rng.hpp"

namespace thermo {

// ---------------------------------------------------------------------------
// Explainer configurations
// ---------------------------------------------------------------------------

struct LgxaConfig {
    friend bool operator==(const LgxaConfig&, const LgxaConfig&) = default;
};

struct LigConfig {
    int steps = 25;
    friend bool operator==(const LigConfig&, const LigConfig&) = default;
};

struct LimeConfig {
    int samples = 25;
    double mask_prob = 0.3;
    double kernel_width = 1.0;
    double ridge_lambda = 1.0;
    friend bool operator==(const LimeConfig&, const LimeConfig&) = default;
};

struct OcclusionConfig {
    int window = 3;
    friend bool operator==(const OcclusionConfig&, const OcclusionConfig&) = default;
};

struct SvsConfig {
    int samples = 25;
    friend bool operator==(const SvsConfig&, const SvsConfig&) = default;
};

// Provenance tag for the brute-force oracle; not a generation method.
struct ExactShapleyConfig {
    friend bool operator==(const ExactShapleyConfig&, const ExactShapleyConfig&) = default;
};

using MethodConfig =
    std::variant<LgxaConfig, LigConfig, LimeConfig, OcclusionConfig, SvsConfig,
                 ExactShapleyConfig>;

struct ExplainerConfig {
    MethodConfig method = LgxaConfig{};
    std::uint64_t seed = 42;
    friend bool operator==(const ExplainerConfig&, const ExplainerConfig&) = default;
};

inline std::string_view explainer_name(const MethodConfig& method) {
    struct Namer {
        std::string_view operator()(const LgxaConfig&) const { return "lgxa"; }
        std::string_view operator()(const LigConfig&) const { return "lig"; }
        std::string_view operator()(const LimeConfig&) const { return "lime"; }
        std::string_view operator()(const OcclusionConfig&) const { return "occ"; }
        std::string_view operator()(const SvsConfig&) const { return "svs"; }
        std::string_view operator()(const ExactShapleyConfig&) const { return "exact_shapley"; }
    };
    return std::visit(Namer{}, method);
}

inline MethodConfig default_method_config(std::string_view name) {
    if (name == "lgxa") return LgxaConfig{};
    if (name == "lig") return LigConfig{};
    if (name == "lime") return LimeConfig{};
    if (name == "occ") return OcclusionConfig{};
    if (name == "svs") return SvsConfig{};
    if (name == "exact_shapley") return ExactShapleyConfig{};
    throw std::invalid_argument("unknown explainer '" + std::string(name) +
                                "' (expected lgxa, lig, lime, occ or svs)");
}

inline void validate_config(const ExplainerConfig& cfg) {
    struct Checker {
        void operator()(const LgxaConfig&) const {}
        void operator()(const LigConfig& c) const {
            if (c.steps < 1) throw std::invalid_argument("lig: steps must be >= 1");
        }
        void operator()(const LimeConfig& c) const {
            if (c.samples < 1) throw std::invalid_argument("lime: samples must be >= 1");
            if (!(c.mask_prob > 0.0 && c.mask_prob < 1.0)) {
                throw std::invalid_argument("lime: mask_prob must be in (0, 1)");
            }
            if (!(c.kernel_width > 0.0)) {
                throw std::invalid_argument("lime: kernel_width must be > 0");
            }
            if (c.ridge_lambda < 0.0) {
                throw std::invalid_argument("lime: ridge_lambda must be >= 0");
            }
        }
        void operator()(const OcclusionConfig& c) const {
            if (c.window < 1) throw std::invalid_argument("occ: window must be >= 1");
        }
        void operator()(const SvsConfig& c) const {
            if (c.samples < 1) throw std::invalid_argument("svs: samples must be >= 1");
        }
        void operator()(const ExactShapleyConfig&) const {}
    };
    std::visit(Checker{}, cfg.method);
}

/// Per-token attribution scores for one (input, target class) pair.
struct AttributionMap {
    std::vector<double> scores;  // one per token position, special tokens included
    int target_class = 0;
    ExplainerConfig config;
    friend bool operator==(const AttributionMap&, const AttributionMap&) = default;
};

// Output neuron with the maximum activation; ties break to the lowest index.
inline int select_target(const Logits& logits) {
    if (logits.empty()) {
        throw std::invalid_argument("select_target: empty logits");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<int>(best);
}

namespace detail {

template <ForwardModel M>
bool is_pinned(const M& model, TokenId id) {
    return id == model.cls_id() || id == model.sep_id();
}

template <ForwardModel M>
double target_logit(const M& model, const TokenSequence& ids, int target) {
    return model.forward(ids)[static_cast<std::size_t>(target)];
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gradient-based explainers
// ---------------------------------------------------------------------------

// score[i] = sum_k grad[i][k] * x[i][k], summed over the embedding dimension.
template <DifferentiableModel M>
AttributionMap explain_gradient_x_activation(const M& model, const TokenSequence& ids,
                                             int target) {
    const Matrix x = model.embed(ids);
    const Matrix grad = model.gradient_wrt_embeddings(x, target);
    AttributionMap out;
    out.scores.assign(ids.size(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) {
            acc += grad(i, k) * x(i, k);
        }
        out.scores[i] = acc;
    }
    out.target_class = target;
    out.config = {LgxaConfig{}, 0};
    return out;
}

// Path integral from the all-pad baseline to the input, midpoint rule:
// score[i] = sum_k (x - b)[i][k] * mean_s grad(b + (s-0.5)/steps * (x-b))[i][k]
template <DifferentiableModel M>
AttributionMap explain_integrated_gradients(const M& model, const TokenSequence& ids,
                                            int target, const LigConfig& cfg = {}) {
    if (cfg.steps < 1) {
        throw std::invalid_argument("lig: steps must be >= 1");
    }
    const Matrix x = model.embed(ids);
    const TokenSequence pad_seq(ids.size(), model.pad_id());
    const Matrix baseline = model.embed(pad_seq);

    Matrix grad_sum(x.rows(), x.cols());
    Matrix point(x.rows(), x.cols());
    for (int s = 1; s <= cfg.steps; ++s) {
        const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(cfg.steps);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
                point(i, k) = baseline(i, k) + alpha * (x(i, k) - baseline(i, k));
            }
        }
        const Matrix grad = model.gradient_wrt_embeddings(point, target);
        for (std::size_t i = 0; i < grad_sum.data().size(); ++i) {
            grad_sum.data()[i] += grad.data()[i];
        }
    }

    AttributionMap out;
    out.scores.assign(ids.size(), 0.0);
    const double inv_steps = 1.0 / static_cast<double>(cfg.steps);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) {
            acc += (x(i, k) - baseline(i, k)) * grad_sum(i, k) * inv_steps;
        }
        out.scores[i] = acc;
    }
    out.target_class = target;
    out.config = {cfg, 0};
    return out;
}

// ---------------------------------------------------------------------------
// Perturbation-based explainers
// ---------------------------------------------------------------------------

// Slide a window of pad replacements over the sequence (stride 1) and average
// the logit drop over every window covering a position. Special tokens are
// occludable like any other position.
template <ForwardModel M>
AttributionMap explain_occlusion(const M& model, const TokenSequence& ids, int target,
                                 const OcclusionConfig& cfg = {}) {
    const std::size_t n = ids.size();
    if (cfg.window < 1 || static_cast<std::size_t>(cfg.window) > n) {
        throw std::invalid_argument("occ: window must be in [1, sequence length]");
    }
    const auto w = static_cast<std::size_t>(cfg.window);
    const double full = detail::target_logit(model, ids, target);

    std::vector<double> sums(n, 0.0);
    std::vector<std::size_t> cover(n, 0);
    TokenSequence masked = ids;
    for (std::size_t start = 0; start + w <= n; ++start) {
        for (std::size_t i = start; i < start + w; ++i) masked[i] = model.pad_id();
        const double drop = full - detail::target_logit(model, masked, target);
        for (std::size_t i = start; i < start + w; ++i) {
            sums[i] += drop;
            ++cover[i];
            masked[i] = ids[i];
        }
    }

    AttributionMap out;
    out.scores.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.scores[i] = sums[i] / static_cast<double>(cover[i]);
    }
    out.target_class = target;
    out.config = {cfg, 0};
    return out;
}

// Monte-Carlo Shapley estimation over random position permutations. The walk
// starts from the all-absent coalition (movable tokens replaced by pad) and
// credits each position with its marginal logit contribution when revealed.
// [CLS]/[SEP] positions are never permuted and score exactly zero.
template <ForwardModel M>
AttributionMap explain_shapley_sampling(const M& model, const TokenSequence& ids, int target,
                                        const SvsConfig& cfg, std::uint64_t seed) {
    if (cfg.samples < 1) {
        throw std::invalid_argument("svs: samples must be >= 1");
    }
    const std::size_t n = ids.size();
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < n; ++i) {
        if (!detail::is_pinned(model, ids[i])) movable.push_back(i);
    }

    AttributionMap out;
    out.scores.assign(n, 0.0);
    out.target_class = target;
    out.config = {cfg, seed};
    if (movable.empty()) {
        return out;
    }

    TokenSequence base = ids;
    for (const std::size_t i : movable) base[i] = model.pad_id();
    const double v_empty = detail::target_logit(model, base, target);

    SplitMix64 rng(seed);
    std::vector<std::size_t> perm = movable;
    std::vector<double> totals(n, 0.0);
    TokenSequence current(n);
    for (int s = 0; s < cfg.samples; ++s) {
        rng.shuffle(perm);
        current = base;
        double v_prev = v_empty;
        for (const std::size_t pos : perm) {
            current[pos] = ids[pos];
            const double v = detail::target_logit(model, current, target);
            totals[pos] += v - v_prev;
            v_prev = v;
        }
    }
    const double inv_samples = 1.0 / static_cast<double>(cfg.samples);
    for (const std::size_t i : movable) {
        out.scores[i] = totals[i] * inv_samples;
    }
    return out;
}

// Exact Shapley values by 2^n coalition enumeration; oracle for the sampled
// estimator. Every position is a player, v(S) is the target logit of the
// sequence with positions outside S replaced by pad.
template <ForwardModel M>
AttributionMap exact_shapley(const M& model, const TokenSequence& ids, int target) {
    const std::size_t n = ids.size();
    if (n > 16) {
        throw std::invalid_argument("exact_shapley: refusing n > 16 (2^n enumeration)");
    }
    const std::size_t total = std::size_t{1} << n;

    std::vector<double> value(total);
    TokenSequence seq(n);
    for (std::size_t mask = 0; mask < total; ++mask) {
        for (std::size_t i = 0; i < n; ++i) {
            seq[i] = (mask >> i) & 1u ? ids[i] : model.pad_id();
        }
        value[mask] = detail::target_logit(model, seq, target);
    }

    // weight(|S|) = |S|! (n-1-|S|)! / n!
    std::vector<double> factorial(n + 1, 1.0);
    for (std::size_t k = 1; k <= n; ++k) {
        factorial[k] = factorial[k - 1] * static_cast<double>(k);
    }
    std::vector<double> weight(n);
    for (std::size_t k = 0; k < n; ++k) {
        weight[k] = factorial[k] * factorial[n - 1 - k] / factorial[n];
    }

    AttributionMap out;
    out.scores.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < total; ++mask) {
            if (mask & bit) continue;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            phi += weight[size] * (value[mask | bit] - value[mask]);
        }
        out.scores[i] = phi;
    }
    out.target_class = target;
    out.config = {ExactShapleyConfig{}, 0};
    return out;
}

// LIME: sample pad-masking perturbations, weight them by similarity to the
// unperturbed input, and fit a weighted ridge regression of the target logit
// on the binary keep-mask. Coefficients are the attributions; the intercept
// is fitted but not regularized. [CLS]/[SEP] are always kept.
template <ForwardModel M>
AttributionMap explain_lime(const M& model, const TokenSequence& ids, int target,
                            const LimeConfig& cfg, std::uint64_t seed) {
    validate_config({cfg, seed});
    const std::size_t n = ids.size();

    std::vector<char> pinned(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        pinned[i] = detail::is_pinned(model, ids[i]) ? 1 : 0;
    }

    // sample 0 is always the unperturbed all-ones mask
    const std::size_t num_samples = static_cast<std::size_t>(cfg.samples) + 1;
    SplitMix64 rng(seed);
    std::vector<std::vector<char>> masks(num_samples, std::vector<char>(n, 1));
    for (std::size_t s = 1; s < num_samples; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned[i]) continue;
            masks[s][i] = rng.next_double() >= cfg.mask_prob ? 1 : 0;
        }
    }

    std::vector<double> response(num_samples);
    std::vector<double> sample_weight(num_samples);
    TokenSequence perturbed(n);
    for (std::size_t s = 0; s < num_samples; ++s) {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < n; ++i) {
            perturbed[i] = masks[s][i] ? ids[i] : model.pad_id();
            kept += masks[s][i];
        }
        response[s] = detail::target_logit(model, perturbed, target);
        // cosine similarity between a binary mask and the all-ones mask
        const double cosine =
            kept == 0 ? 0.0 : std::sqrt(static_cast<double>(kept) / static_cast<double>(n));
        const double dist = 1.0 - cosine;
        sample_weight[s] = std::exp(-(dist * dist) / (cfg.kernel_width * cfg.kernel_width));
    }

    // normal equations for [intercept, coef_1..coef_n]
    const std::size_t p = n + 1;
    std::vector<double> a(p * p, 0.0);
    std::vector<double> rhs(p, 0.0);
    std::vector<double> xrow(p);
    for (std::size_t s = 0; s < num_samples; ++s) {
        xrow[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) xrow[i + 1] = masks[s][i];
        const double w = sample_weight[s];
        for (std::size_t r = 0; r < p; ++r) {
            for (std::size_t c = r; c < p; ++c) {
                a[r * p + c] += w * xrow[r] * xrow[c];
            }
            rhs[r] += w * xrow[r] * response[s];
        }
    }
    for (std::size_t r = 1; r < p; ++r) {
        a[r * p + r] += cfg.ridge_lambda;  // intercept stays unpenalized
    }
    for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < r; ++c) {
            a[r * p + c] = a[c * p + r];
        }
    }

    // Cholesky; a near-zero pivot means the system is singular (possible with
    // ridge_lambda = 0) and is surfaced as an explicit failure.
    double max_diag = 0.0;
    for (std::size_t r = 0; r < p; ++r) {
        max_diag = std::max(max_diag, std::abs(a[r * p + r]));
    }
    const double pivot_floor = std::max(max_diag, 1.0) * 1e-12;
    std::vector<double> chol(p * p, 0.0);
    for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c <= r; ++c) {
            double acc = a[r * p + c];
            for (std::size_t k = 0; k < c; ++k) {
                acc -= chol[r * p + k] * chol[c * p + k];
            }
            if (r == c) {
                if (acc <= pivot_floor) {
                    throw std::runtime_error(
                        "lime: singular normal equations (try ridge_lambda > 0)");
                }
                chol[r * p + r] = std::sqrt(acc);
            } else {
                chol[r * p + c] = acc / chol[c * p + c];
            }
        }
    }
    std::vector<double> y(p);
    for (std::size_t r = 0; r < p; ++r) {
        double acc = rhs[r];
        for (std::size_t k = 0; k < r; ++k) acc -= chol[r * p + k] * y[k];
        y[r] = acc / chol[r * p + r];
    }
    std::vector<double> beta(p);
    for (std::size_t r = p; r-- > 0;) {
        double acc = y[r];
        for (std::size_t k = r + 1; k < p; ++k) acc -= chol[k * p + r] * beta[k];
        beta[r] = acc / chol[r * p + r];
    }

    AttributionMap out;
    out.scores.assign(beta.begin() + 1, beta.end());
    out.target_class = target;
    out.config = {cfg, seed};
    return out;
}

// Dispatch on the configured method. The seed in cfg drives the stochastic
// explainers; deterministic ones ignore it.
template <DifferentiableModel M>
AttributionMap explain(const M& model, const TokenSequence& ids, int target,
                       const ExplainerConfig& cfg) {
    validate_config(cfg);
    struct Dispatcher {
        const M& model;
        const TokenSequence& ids;
        int target;
        std::uint64_t seed;

        AttributionMap operator()(const LgxaConfig&) const {
            return explain_gradient_x_activation(model, ids, target);
        }
        AttributionMap operator()(const LigConfig& c) const {
            return explain_integrated_gradients(model, ids, target, c);
        }
        AttributionMap operator()(const LimeConfig& c) const {
            return explain_lime(model, ids, target, c, seed);
        }
        AttributionMap operator()(const OcclusionConfig& c) const {
            return explain_occlusion(model, ids, target, c);
        }
        AttributionMap operator()(const SvsConfig& c) const {
            return explain_shapley_sampling(model, ids, target, c, seed);
        }
        AttributionMap operator()(const ExactShapleyConfig&) const {
            return exact_shapley(model, ids, target);
        }
    };
    AttributionMap out = std::visit(Dispatcher{model, ids, target, cfg.seed}, cfg.method);
    out.config = cfg;
    return out;
}

} // namespace thermo
