#pragma once
// Depth domain adaptation at desk scale.
//
// Two mappings act on min-max normalized depth: a noise model N (clean
// synthetic -> sensor-like) and a restoration model R (sensor-like -> clean).
// Each has a discriminator. The joint objective is
//
//   L = L_noise + L_restore + L_cycle
//   L_noise   = E_real[log D_N(x)] + E_syn[log(1 - D_N(eta(N(x))))]
//   L_restore = E_syn[log D_R(x)]  + E_real[log(1 - D_R(eta(R(x))))]
//   L_cycle   = E_syn |R(eta(N(x))) - x|_1 + E_real |N(eta(R(x))) - x|_1
//
// minimized over (N, R) and maximized over (D_N, D_R). All gradients here
// are written out by hand and checked against central differences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "plf/core.hpp"
#include "plf/rng.hpp"

namespace plf::depth {

// ---------------------------------------------------------------------------
// Min-max normalization
// ---------------------------------------------------------------------------

struct NormalizeCache {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t argmin = 0;
    std::size_t argmax = 0;
};

// eta(v) = 2 * ((v - min) / (max - min) - 1/2) over entries with mask != 0.
// Masked-out entries are written as 0.
inline Grid<double> normalize_values(const Grid<double>& v, const Grid<std::uint8_t>* mask,
                                     NormalizeCache* cache = nullptr) {
    bool any = false;
    NormalizeCache c;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        if (!any || v[i] < c.lo) { c.lo = v[i]; c.argmin = i; }
        if (!any || v[i] > c.hi) { c.hi = v[i]; c.argmax = i; }
        any = true;
    }
    if (!any) throw Error(ErrorCode::EmptyInput, "no valid pixel to normalize");
    if (!(c.hi > c.lo)) throw Error(ErrorCode::DegenerateRange, "max equals min");
    const double range = c.hi - c.lo;
    Grid<double> out(v.height(), v.width(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        out[i] = 2.0 * ((v[i] - c.lo) / range - 0.5);
    }
    if (cache) *cache = c;
    return out;
}

// Accumulates d(loss)/d(v) into g_in given d(loss)/d(eta(v)) = g_out.
inline void normalize_backward(const Grid<double>& v, const NormalizeCache& c, const Grid<double>& g_out,
                               Grid<double>& g_in) {
    const double range = c.hi - c.lo;
    double to_min = 0.0;
    double to_max = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = (v[i] - c.lo) / range;
        g_in[i] += 2.0 * g_out[i] / range;
        to_min += g_out[i] * (-2.0 / range) * (1.0 - t);
        to_max += g_out[i] * (-2.0 * t / range);
    }
    g_in[c.argmin] += to_min;
    g_in[c.argmax] += to_max;
}

inline NormalizedDepthMap minmax_normalize(const DepthMap& d) {
    d.validate();
    return NormalizedDepthMap(normalize_values(d.depth, &d.valid), d.valid);
}

// ---------------------------------------------------------------------------
// Adversarial and cycle terms
// ---------------------------------------------------------------------------

inline constexpr double kScoreEps = 1e-7;

inline double clamp_score(double s) { return std::clamp(s, kScoreEps, 1.0 - kScoreEps); }

// mean(log real) + mean(log(1 - fake)), scores clamped to [eps, 1 - eps].
inline double gan_loss(std::span<const double> real_scores, std::span<const double> fake_scores) {
    if (real_scores.empty() || fake_scores.empty()) throw Error(ErrorCode::EmptyBatch, "gan_loss needs scores");
    double real = 0.0;
    for (double s : real_scores) real += std::log(clamp_score(s));
    double fake = 0.0;
    for (double s : fake_scores) fake += std::log(1.0 - clamp_score(s));
    return real / static_cast<double>(real_scores.size()) + fake / static_cast<double>(fake_scores.size());
}

inline double mean_abs_diff(const Grid<double>& a, const Grid<double>& b) {
    require_same_shape(a, b, "cycle pair");
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double cycle_loss(std::span<const NormalizedDepthMap> syn, std::span<const NormalizedDepthMap> syn_roundtrip,
                         std::span<const NormalizedDepthMap> real,
                         std::span<const NormalizedDepthMap> real_roundtrip) {
    if (syn.size() != syn_roundtrip.size() || real.size() != real_roundtrip.size())
        throw Error(ErrorCode::ShapeMismatch, "cycle loss pair lists differ in length");
    auto mean_over = [](std::span<const NormalizedDepthMap> a, std::span<const NormalizedDepthMap> b) {
        if (a.empty()) return 0.0;
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += mean_abs_diff(b[k].values, a[k].values);
        return s / static_cast<double>(a.size());
    };
    return mean_over(syn, syn_roundtrip) + mean_over(real, real_roundtrip);
}

inline double total_objective(double noise_term, double restore_term, double cycle_term) {
    if (!std::isfinite(noise_term) || !std::isfinite(restore_term) || !std::isfinite(cycle_term))
        throw Error(ErrorCode::NonFinite, "objective term is not finite");
    return noise_term + restore_term + cycle_term;
}

// ---------------------------------------------------------------------------
// Toy mapping: residual per-pixel perceptron over a 3x3 window
//
//   y = clamp(x + a . win + a0 + sum_j v_j tanh(W_j . win + b_j), -1, 1)
//
// Windows use replicate padding. hidden = 0 leaves the 10-parameter affine
// window filter.
// ---------------------------------------------------------------------------

enum class MappingRole { Noise, Restore };

struct MappingParams {
    MappingRole role = MappingRole::Noise;
    std::size_t hidden = 0;
    // [a(9) | a0 | W(hidden x 9) | b(hidden) | v(hidden)]
    std::vector<double> values;

    static constexpr std::size_t kWindow = 9;

    static constexpr std::size_t param_count(std::size_t hidden) { return kWindow + 1 + hidden * (kWindow + 2); }

    std::size_t affine_bias() const { return kWindow; }
    std::size_t w_offset() const { return kWindow + 1; }
    std::size_t b_offset() const { return w_offset() + hidden * kWindow; }
    std::size_t v_offset() const { return b_offset() + hidden; }

    static MappingParams identity(MappingRole role, std::size_t hidden) {
        return MappingParams{role, hidden, std::vector<double>(param_count(hidden), 0.0)};
    }

    // Identity output with random hidden weights (v = 0).
    static MappingParams identity_with_features(MappingRole role, std::size_t hidden, Rng& rng, double scale) {
        MappingParams p = identity(role, hidden);
        for (std::size_t i = p.w_offset(); i < p.v_offset(); ++i) p.values[i] = uniform(rng, -scale, scale);
        return p;
    }

    static MappingParams random(MappingRole role, std::size_t hidden, Rng& rng, double scale) {
        MappingParams p = identity(role, hidden);
        for (double& v : p.values) v = uniform(rng, -scale, scale);
        return p;
    }

    void validate() const {
        if (values.size() != param_count(hidden))
            throw Error(ErrorCode::ShapeMismatch, "mapping expects " + std::to_string(param_count(hidden)) +
                                                      " parameters, got " + std::to_string(values.size()));
        for (double v : values)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "mapping parameter is not finite");
    }

    friend bool operator==(const MappingParams&, const MappingParams&) = default;
};

// Forward activations kept for the backward pass.
struct MappingCache {
    std::vector<double> pre;     // pre-clamp output per pixel
    std::vector<double> hidden;  // tanh activations, pixel-major
};

namespace detail {

inline std::array<std::size_t, 9> window_indices(std::size_t h, std::size_t w, std::size_t r, std::size_t c) {
    std::array<std::size_t, 9> idx{};
    std::size_t k = 0;
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc, ++k) {
            const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(h) - 1));
            const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + dc, 0, static_cast<long>(w) - 1));
            idx[k] = rr * w + cc;
        }
    }
    return idx;
}

}  // namespace detail

inline Grid<double> apply_mapping_values(const MappingParams& p, const Grid<double>& x, MappingCache* cache = nullptr) {
    p.validate();
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    const auto& q = p.values;
    Grid<double> y(h, w);
    if (cache) {
        cache->pre.assign(x.size(), 0.0);
        cache->hidden.assign(x.size() * p.hidden, 0.0);
    }
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const auto idx = detail::window_indices(h, w, r, c);
            const std::size_t i = r * w + c;
            double pre = x[i] + q[p.affine_bias()];
            for (std::size_t k = 0; k < 9; ++k) pre += q[k] * x[idx[k]];
            for (std::size_t j = 0; j < p.hidden; ++j) {
                double z = q[p.b_offset() + j];
                for (std::size_t k = 0; k < 9; ++k) z += q[p.w_offset() + j * 9 + k] * x[idx[k]];
                const double a = std::tanh(z);
                if (cache) cache->hidden[i * p.hidden + j] = a;
                pre += q[p.v_offset() + j] * a;
            }
            if (cache) cache->pre[i] = pre;
            y[i] = std::clamp(pre, -1.0, 1.0);
        }
    }
    return y;
}

inline NormalizedDepthMap apply_mapping(const MappingParams& p, const NormalizedDepthMap& x) {
    return NormalizedDepthMap(apply_mapping_values(p, x.values), x.valid);
}

// Accumulates parameter gradients into g_params and, when g_x is non-null,
// input gradients into g_x. The clamp passes gradient on [-1, 1] inclusive.
inline void mapping_backward(const MappingParams& p, const Grid<double>& x, const MappingCache& cache,
                             const Grid<double>& g_y, std::span<double> g_params, Grid<double>* g_x) {
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    const auto& q = p.values;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = r * w + c;
            const double pre = cache.pre[i];
            if (pre < -1.0 || pre > 1.0) continue;
            const double g = g_y[i];
            if (g == 0.0) continue;
            const auto idx = detail::window_indices(h, w, r, c);
            g_params[p.affine_bias()] += g;
            for (std::size_t k = 0; k < 9; ++k) g_params[k] += g * x[idx[k]];
            if (g_x) {
                (*g_x)[i] += g;
                for (std::size_t k = 0; k < 9; ++k) (*g_x)[idx[k]] += g * q[k];
            }
            for (std::size_t j = 0; j < p.hidden; ++j) {
                const double a = cache.hidden[i * p.hidden + j];
                const double v = q[p.v_offset() + j];
                g_params[p.v_offset() + j] += g * a;
                const double gz = g * v * (1.0 - a * a);
                if (gz == 0.0) continue;
                g_params[p.b_offset() + j] += gz;
                for (std::size_t k = 0; k < 9; ++k) {
                    g_params[p.w_offset() + j * 9 + k] += gz * x[idx[k]];
                    if (g_x) (*g_x)[idx[k]] += gz * q[p.w_offset() + j * 9 + k];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Discriminator: logistic model over per-image statistics
//   features = [1, mean(x), mean(x^2), mean squared neighbour difference]
// ---------------------------------------------------------------------------

struct DiscriminatorParams {
    std::array<double, 4> w{};
    friend bool operator==(const DiscriminatorParams&, const DiscriminatorParams&) = default;
};

inline constexpr std::size_t kDiscriminatorParams = 4;

inline std::array<double, 4> discriminator_features(const Grid<double>& x) {
    const double n = static_cast<double>(x.size());
    double m1 = 0.0, m2 = 0.0, e = 0.0;
    std::size_t pairs = 0;
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            const double v = x(r, c);
            m1 += v;
            m2 += v * v;
            if (c + 1 < x.width()) { const double d = x(r, c + 1) - v; e += d * d; ++pairs; }
            if (r + 1 < x.height()) { const double d = x(r + 1, c) - v; e += d * d; ++pairs; }
        }
    }
    return {1.0, m1 / n, m2 / n, pairs ? e / static_cast<double>(pairs) : 0.0};
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double discriminate(const DiscriminatorParams& d, const Grid<double>& x) {
    const auto f = discriminator_features(x);
    double z = 0.0;
    for (std::size_t k = 0; k < 4; ++k) z += d.w[k] * f[k];
    return sigmoid(z);
}

// Accumulates d(loss)/d(x) into g_x given d(loss)/d(logit) = g_logit.
inline void discriminator_input_backward(const DiscriminatorParams& d, const Grid<double>& x, double g_logit,
                                         Grid<double>& g_x) {
    const double n = static_cast<double>(x.size());
    std::size_t pairs = 0;
    if (x.width() > 1) pairs += x.height() * (x.width() - 1);
    if (x.height() > 1) pairs += x.width() * (x.height() - 1);
    const double ge = pairs ? g_logit * d.w[3] / static_cast<double>(pairs) : 0.0;
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            const std::size_t i = r * x.width() + c;
            const double v = x[i];
            g_x[i] += g_logit * (d.w[1] / n + d.w[2] * 2.0 * v / n);
            if (c + 1 < x.width()) {
                const double diff = x(r, c + 1) - v;
                g_x[i + 1] += ge * 2.0 * diff;
                g_x[i] -= ge * 2.0 * diff;
            }
            if (r + 1 < x.height()) {
                const double diff = x(r + 1, c) - v;
                g_x[i + x.width()] += ge * 2.0 * diff;
                g_x[i] -= ge * 2.0 * diff;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Joint objective with gradients
// ---------------------------------------------------------------------------

struct AdaptationModel {
    MappingParams noise;
    MappingParams restore;
    DiscriminatorParams d_noise;
    DiscriminatorParams d_restore;
    // Re-apply eta to generator outputs before they reach a discriminator or
    // the opposite generator.
    bool renormalize = true;

    std::size_t param_count() const {
        return noise.values.size() + restore.values.size() + 2 * kDiscriminatorParams;
    }

    // Layout: [N | R | D_N | D_R].
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(param_count());
        out.insert(out.end(), noise.values.begin(), noise.values.end());
        out.insert(out.end(), restore.values.begin(), restore.values.end());
        out.insert(out.end(), d_noise.w.begin(), d_noise.w.end());
        out.insert(out.end(), d_restore.w.begin(), d_restore.w.end());
        return out;
    }

    void assign(std::span<const double> flat) {
        if (flat.size() != param_count()) throw Error(ErrorCode::ShapeMismatch, "flat parameter length");
        auto it = flat.begin();
        std::copy_n(it, noise.values.size(), noise.values.begin());
        it += static_cast<std::ptrdiff_t>(noise.values.size());
        std::copy_n(it, restore.values.size(), restore.values.begin());
        it += static_cast<std::ptrdiff_t>(restore.values.size());
        std::copy_n(it, 4, d_noise.w.begin());
        it += 4;
        std::copy_n(it, 4, d_restore.w.begin());
    }

    friend bool operator==(const AdaptationModel&, const AdaptationModel&) = default;
};

struct ObjectiveTerms {
    double noise = 0.0;
    double restore = 0.0;
    double cycle = 0.0;
    double total() const { return total_objective(noise, restore, cycle); }
};

// Which loss the generators' gradient refers to. MinMax differentiates L
// itself; NonSaturating replaces log(1 - D(G(x))) with -log D(G(x)).
enum class GeneratorForm { MinMax, NonSaturating };

namespace detail {

// Generator output optionally followed by eta, with caches for backprop.
struct MappedSample {
    Grid<double> out;         // G(x)
    MappingCache cache;
    Grid<double> shown;       // eta(G(x)) or G(x)
    NormalizeCache norm;
};

inline MappedSample map_sample(const MappingParams& g, const Grid<double>& x, bool renormalize) {
    MappedSample s;
    s.out = apply_mapping_values(g, x, &s.cache);
    s.shown = renormalize ? normalize_values(s.out, nullptr, &s.norm) : s.out;
    return s;
}

inline Grid<double> shown_to_out_grad(const MappedSample& s, const Grid<double>& g_shown, bool renormalize) {
    if (!renormalize) return g_shown;
    Grid<double> g(s.out.height(), s.out.width(), 0.0);
    normalize_backward(s.out, s.norm, g_shown, g);
    return g;
}

// d log(clamp(s)) / d logit and d log(1 - clamp(s)) / d logit.
inline double dlog_score(double s) { return (s < kScoreEps || s > 1.0 - kScoreEps) ? 0.0 : 1.0 - s; }
inline double dlog_one_minus(double s) { return (s < kScoreEps || s > 1.0 - kScoreEps) ? 0.0 : -s; }

// One adversarial direction: generator g maps `source` toward `target`,
// discriminator d separates target from g(source). Returns the min-max term
// and accumulates gradients.
inline double adversarial_term(const MappingParams& g, const DiscriminatorParams& d,
                               std::span<const Grid<double>> source, std::span<const Grid<double>> target,
                               bool renormalize, GeneratorForm form, std::vector<MappedSample>& mapped,
                               std::span<double> g_gen, std::span<double> g_disc) {
    std::vector<double> real_scores;
    std::vector<double> fake_scores;
    real_scores.reserve(target.size());
    fake_scores.reserve(source.size());
    const double nt = static_cast<double>(target.size());
    const double ns = static_cast<double>(source.size());

    for (const auto& x : target) {
        const double s = discriminate(d, x);
        real_scores.push_back(s);
        if (!g_disc.empty()) {
            const auto f = discriminator_features(x);
            const double gl = dlog_score(s) / nt;
            for (std::size_t k = 0; k < 4; ++k) g_disc[k] += gl * f[k];
        }
    }
    mapped.clear();
    mapped.reserve(source.size());
    for (const auto& x : source) {
        mapped.push_back(map_sample(g, x, renormalize));
        const auto& m = mapped.back();
        const double s = discriminate(d, m.shown);
        fake_scores.push_back(s);
        if (!g_disc.empty()) {
            const auto f = discriminator_features(m.shown);
            const double gl = dlog_one_minus(s) / ns;
            for (std::size_t k = 0; k < 4; ++k) g_disc[k] += gl * f[k];
        }
        if (!g_gen.empty()) {
            const double gl = (form == GeneratorForm::MinMax ? dlog_one_minus(s) : -dlog_score(s)) / ns;
            Grid<double> g_shown(x.height(), x.width(), 0.0);
            discriminator_input_backward(d, m.shown, gl, g_shown);
            mapping_backward(g, x, m.cache, shown_to_out_grad(m, g_shown, renormalize), g_gen, nullptr);
        }
    }
    return gan_loss(real_scores, fake_scores);
}

// E_x |second(first(x)) - x|_1 where first(x) was already computed.
inline double cycle_direction(const MappingParams& first, const MappingParams& second,
                              std::span<const Grid<double>> inputs, const std::vector<MappedSample>& firsts,
                              bool renormalize, std::span<double> g_first, std::span<double> g_second) {
    if (inputs.empty()) return 0.0;
    const double n = static_cast<double>(inputs.size());
    double total = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& x = inputs[k];
        const auto& m = firsts[k];
        MappingCache cache2;
        const Grid<double> back = apply_mapping_values(second, m.shown, &cache2);
        total += mean_abs_diff(back, x);
        if (g_first.empty() && g_second.empty()) continue;
        const double px = static_cast<double>(x.size());
        Grid<double> g_back(x.height(), x.width(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double diff = back[i] - x[i];
            g_back[i] = (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) / (px * n);
        }
        Grid<double> g_shown(x.height(), x.width(), 0.0);
        mapping_backward(second, m.shown, cache2, g_back, g_second, &g_shown);
        mapping_backward(first, x, m.cache, shown_to_out_grad(m, g_shown, renormalize), g_first, nullptr);
    }
    return total / n;
}

}  // namespace detail

struct AdaptationBatch {
    std::vector<Grid<double>> syn;
    std::vector<Grid<double>> real;
};

// Evaluates the three terms of L. When `grad` is non-null it receives the
// gradient in AdaptationModel::flatten() layout: discriminator entries are
// d L / d D, generator entries follow `form`.
inline ObjectiveTerms evaluate_objective(const AdaptationModel& m, const AdaptationBatch& batch,
                                         std::vector<double>* grad = nullptr,
                                         GeneratorForm form = GeneratorForm::MinMax) {
    if (batch.syn.empty() || batch.real.empty()) throw Error(ErrorCode::EmptyBatch, "objective needs both domains");
    const std::size_t nn = m.noise.values.size();
    const std::size_t nr = m.restore.values.size();
    std::span<double> g_n, g_r, g_dn, g_dr;
    if (grad) {
        grad->assign(m.param_count(), 0.0);
        std::span<double> all(*grad);
        g_n = all.subspan(0, nn);
        g_r = all.subspan(nn, nr);
        g_dn = all.subspan(nn + nr, 4);
        g_dr = all.subspan(nn + nr + 4, 4);
    }
    ObjectiveTerms t;
    std::vector<detail::MappedSample> syn_to_real;
    std::vector<detail::MappedSample> real_to_syn;
    t.noise = detail::adversarial_term(m.noise, m.d_noise, batch.syn, batch.real, m.renormalize, form,
                                       syn_to_real, g_n, g_dn);
    t.restore = detail::adversarial_term(m.restore, m.d_restore, batch.real, batch.syn, m.renormalize, form,
                                         real_to_syn, g_r, g_dr);
    t.cycle = detail::cycle_direction(m.noise, m.restore, batch.syn, syn_to_real, m.renormalize, g_n, g_r) +
              detail::cycle_direction(m.restore, m.noise, batch.real, real_to_syn, m.renormalize, g_r, g_n);
    return t;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

// Returns the loss at `params` and writes its analytic gradient.
using LossEvaluator = std::function<double(std::span<const double> params, std::vector<double>& grad)>;

// max_i |g_analytic_i - g_fd_i| / max(1, |g_fd_i|) with central differences.
inline double grad_check(const LossEvaluator& loss, std::span<const double> params, double h) {
    if (!(h >= 1e-7 && h <= 1e-3)) throw Error(ErrorCode::InvalidArgument, "step must lie in [1e-7, 1e-3]");
    std::vector<double> analytic;
    loss(params, analytic);
    if (analytic.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "gradient length");
    std::vector<double> probe(params.begin(), params.end());
    std::vector<double> scratch;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = loss(probe, scratch);
        probe[i] = saved - h;
        const double down = loss(probe, scratch);
        probe[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (!std::isfinite(fd) || !std::isfinite(analytic[i]))
            throw Error(ErrorCode::NonFiniteGradient, "gradient entry " + std::to_string(i));
        worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

// Loss evaluator over the full flat parameter vector of `shape`.
inline LossEvaluator objective_evaluator(AdaptationModel shape, AdaptationBatch batch) {
    return [shape = std::move(shape), batch = std::move(batch)](std::span<const double> p,
                                                                std::vector<double>& grad) mutable {
        shape.assign(p);
        return evaluate_objective(shape, batch, &grad, GeneratorForm::MinMax).total();
    };
}

// ---------------------------------------------------------------------------
// Alternating min-max training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t steps = 2000;
    double lr_generator = 0.05;
    double lr_discriminator = 0.5;
    std::size_t batch_size = 8;
    std::size_t hidden = 0;
    double init_scale = 0.1;
    bool renormalize = true;
    std::uint64_t seed = 0;
};

struct TraceRecord {
    std::size_t step = 0;
    double l_noise = 0.0;
    double l_restore = 0.0;
    double l_cycle = 0.0;
    double total = 0.0;
};

struct TrainResult {
    AdaptationModel model;
    std::vector<TraceRecord> trace;
};

inline AdaptationModel initial_model(const TrainConfig& cfg) {
    Rng rng = make_rng(cfg.seed, "depth-adapt/init");
    AdaptationModel m;
    m.noise = MappingParams::identity_with_features(MappingRole::Noise, cfg.hidden, rng, cfg.init_scale);
    m.restore = MappingParams::identity_with_features(MappingRole::Restore, cfg.hidden, rng, cfg.init_scale);
    m.renormalize = cfg.renormalize;
    return m;
}

inline void check_normalized_set(std::span<const Grid<double>> set, std::string_view what) {
    if (set.empty()) throw Error(ErrorCode::EmptyBatch, std::string(what) + " set is empty");
    for (const auto& g : set) {
        if (g.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + " sample is empty");
        for (double v : g.data())
            if (!(v >= -1.0 && v <= 1.0))
                throw Error(ErrorCode::InvalidArgument, std::string(what) + " samples must lie in [-1, 1]");
    }
}

// Each step draws a minibatch per domain, ascends the discriminators on L,
// then descends the generators on the non-saturating objective.
inline TrainResult train_minmax(std::span<const Grid<double>> syn, std::span<const Grid<double>> real,
                                const TrainConfig& cfg) {
    check_normalized_set(syn, "synthetic");
    check_normalized_set(real, "real");
    TrainResult result{initial_model(cfg), {}};
    AdaptationModel& m = result.model;
    Rng rng = make_rng(cfg.seed, "depth-adapt/batches");
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    const std::size_t nn = m.noise.values.size();
    const std::size_t nr = m.restore.values.size();
    result.trace.reserve(cfg.steps);

    AdaptationBatch batch;
    std::vector<double> grad;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        batch.syn.clear();
        batch.real.clear();
        for (std::size_t k = 0; k < bs; ++k) {
            batch.syn.push_back(syn[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(syn.size()) - 1))]);
            batch.real.push_back(real[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(real.size()) - 1))]);
        }

        const ObjectiveTerms t = evaluate_objective(m, batch, &grad, GeneratorForm::NonSaturating);
        const double total = t.noise + t.restore + t.cycle;
        if (!std::isfinite(total)) throw Error(ErrorCode::DivergenceDetected, "loss at step " + std::to_string(step));
        result.trace.push_back({step, t.noise, t.restore, t.cycle, total});

        for (std::size_t k = 0; k < 4; ++k) {
            m.d_noise.w[k] += cfg.lr_discriminator * grad[nn + nr + k];
            m.d_restore.w[k] += cfg.lr_discriminator * grad[nn + nr + 4 + k];
        }
        // Generators see the freshly updated discriminators.
        evaluate_objective(m, batch, &grad, GeneratorForm::NonSaturating);
        for (std::size_t i = 0; i < nn; ++i) m.noise.values[i] -= cfg.lr_generator * grad[i];
        for (std::size_t i = 0; i < nr; ++i) m.restore.values[i] -= cfg.lr_generator * grad[nn + i];
        for (double v : grad)
            if (!std::isfinite(v)) throw Error(ErrorCode::DivergenceDetected, "gradient at step " + std::to_string(step));
    }
    return result;
}

// Fraction of correct calls (score > 0.5 on real, < 0.5 on mapped syn).
inline double discriminator_accuracy(const AdaptationModel& m, std::span<const Grid<double>> syn,
                                     std::span<const Grid<double>> real) {
    std::size_t correct = 0;
    for (const auto& x : real) correct += discriminate(m.d_noise, x) > 0.5;
    for (const auto& x : syn) {
        const auto mapped = detail::map_sample(m.noise, x, m.renormalize);
        correct += discriminate(m.d_noise, mapped.shown) < 0.5;
    }
    return static_cast<double>(correct) / static_cast<double>(syn.size() + real.size());
}

inline std::string trace_csv(std::span<const TraceRecord> trace) {
    std::string out = "step,l_noise,l_restore,l_cycle,total\n";
    char line[160];
    for (const auto& r : trace) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.l_noise, r.l_restore, r.l_cycle,
                      r.total);
        out += line;
    }
    return out;
}

// Unaligned 1 x width toy sets: smooth profiles for the synthetic domain and
// independently drawn profiles shifted by `bias` for the real domain.
inline AdaptationBatch bias_shift_fixture(std::size_t count, std::size_t width, double bias, std::uint64_t seed) {
    Rng rng = make_rng(seed, "depth-adapt/bias-fixture");
    auto profile = [&](double shift) {
        const double level = uniform(rng, -0.35, 0.05);
        const double amp = uniform(rng, 0.1, 0.3);
        const double freq = uniform(rng, 0.2, 0.8);
        const double phase = uniform(rng, 0.0, 6.283185307179586);
        Grid<double> g(1, width);
        for (std::size_t c = 0; c < width; ++c)
            g[c] = level + amp * std::sin(freq * static_cast<double>(c) + phase) + shift;
        return g;
    };
    AdaptationBatch b;
    for (std::size_t k = 0; k < count; ++k) b.syn.push_back(profile(0.0));
    for (std::size_t k = 0; k < count; ++k) b.real.push_back(profile(bias));
    return b;
}

// ---------------------------------------------------------------------------
// Parametric sensor noise
// ---------------------------------------------------------------------------

struct NoiseParams {
    double hole_rate = 0.0;
    double hole_blob_radius = 0.0;  // pixels
    double quantization_step = 0.0; // meters
    double lateral_jitter_sigma = 0.0;  // pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (!(hole_rate >= 0.0 && hole_rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, "hole_rate in [0,1]");
        if (!(hole_blob_radius >= 0.0) || !(quantization_step >= 0.0) || !(lateral_jitter_sigma >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "noise parameters must be nonnegative");
    }
};

// Depth discontinuity (meters) above which a pixel counts as an edge pixel.
inline constexpr double kEdgeJump = 0.1;

inline double quantize(double v, double step) { return step > 0.0 ? std::round(v / step) * step : v; }

// Jitter edges, then quantize, then punch holes.
inline DepthMap simulate_sensor_noise(const DepthMap& d, const NoiseParams& p) {
    p.validate();
    d.validate();
    const std::size_t h = d.height();
    const std::size_t w = d.width();
    DepthMap out = d;

    if (p.lateral_jitter_sigma > 0.0) {
        Rng rng = make_rng(p.seed, "sensor-noise/jitter");
        std::normal_distribution<double> offset(0.0, p.lateral_jitter_sigma);
        auto edge = [&](std::size_t r, std::size_t c) {
            const double v = d.depth(r, c);
            auto differs = [&](std::size_t rr, std::size_t cc) { return std::abs(d.depth(rr, cc) - v) > kEdgeJump; };
            return (c > 0 && differs(r, c - 1)) || (c + 1 < w && differs(r, c + 1)) ||
                   (r > 0 && differs(r - 1, c)) || (r + 1 < h && differs(r + 1, c));
        };
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                if (!edge(r, c)) continue;
                const long dr = std::lround(offset(rng));
                const long dc = std::lround(offset(rng));
                const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(h) - 1));
                const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + dc, 0, static_cast<long>(w) - 1));
                out.depth(r, c) = d.depth(rr, cc);
                out.valid(r, c) = d.valid(rr, cc);
            }
        }
    }

    if (p.quantization_step > 0.0)
        for (std::size_t i = 0; i < out.depth.size(); ++i)
            if (out.valid[i]) out.depth[i] = quantize(out.depth[i], p.quantization_step);

    if (p.hole_rate > 0.0) {
        const std::size_t total = h * w;
        const auto target = static_cast<std::size_t>(std::ceil(p.hole_rate * static_cast<double>(total)));
        Rng rng = make_rng(p.seed, "sensor-noise/holes");
        const long radius = static_cast<long>(std::floor(p.hole_blob_radius));
        const double r2 = p.hole_blob_radius * p.hole_blob_radius;
        Grid<std::uint8_t> hole(h, w, 0);
        std::size_t covered = 0;
        // Blob placement stops once the target is met; the cap bounds the
        // loop for rates close to 1.
        const std::size_t max_blobs = 64 * total + 64;
        for (std::size_t b = 0; b < max_blobs && covered < target; ++b) {
            const long cr = uniform_int(rng, 0, static_cast<long>(h) - 1);
            const long cc = uniform_int(rng, 0, static_cast<long>(w) - 1);
            for (long dr = -radius; dr <= radius; ++dr) {
                for (long dc = -radius; dc <= radius; ++dc) {
                    if (static_cast<double>(dr * dr + dc * dc) > r2) continue;
                    const long rr = cr + dr;
                    const long cc2 = cc + dc;
                    if (rr < 0 || cc2 < 0 || rr >= static_cast<long>(h) || cc2 >= static_cast<long>(w)) continue;
                    auto& cell = hole(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc2));
                    if (!cell) { cell = 1; ++covered; }
                }
            }
        }
        if (p.hole_rate >= 1.0) std::fill(hole.data().begin(), hole.data().end(), 1);
        for (std::size_t i = 0; i < total; ++i) {
            if (hole[i]) {
                out.valid[i] = 0;
                out.depth[i] = 0.0;
            }
        }
    }
    for (std::size_t i = 0; i < out.depth.size(); ++i)
        if (!out.valid[i]) out.depth[i] = 0.0;
    return out;
}

}  // namespace plf::depth
