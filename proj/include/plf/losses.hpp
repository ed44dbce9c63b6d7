#pragma once
// Segmentation training losses: ENet-style class balancing and a weighted
// negative log-likelihood that skips unknown pixels. The same kernel serves
// dense synthetic labels and masked pseudo labels.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "plf/core.hpp"

namespace plf::losses {

inline constexpr double kBalanceConstant = 1.02;

using ClassWeights = std::array<double, kNumClasses>;

struct LossReport {
    double loss = 0.0;
    std::size_t pixels = 0;
};

// w_c = 1 / ln(1.02 + p_c)
inline ClassWeights class_balance_weights(std::span<const double> freq) {
    if (freq.size() != kNumClasses) throw Error(ErrorCode::BadDistribution, "need one frequency per class");
    double sum = 0.0;
    for (double p : freq) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::BadDistribution, "frequency must be >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::BadDistribution, "frequencies must sum to 1");
    ClassWeights w{};
    for (std::size_t c = 0; c < kNumClasses; ++c) w[c] = 1.0 / std::log(kBalanceConstant + freq[c]);
    return w;
}

// Class frequencies over labeled pixels of one or more label maps.
inline std::array<double, kNumClasses> label_frequencies(std::span<const LabelMap> maps) {
    std::array<double, kNumClasses> counts{};
    double total = 0.0;
    for (const auto& m : maps) {
        for (Label l : m.data()) {
            if (!is_class(l)) continue;
            counts[l] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) throw Error(ErrorCode::AllPixelsUnknown, "no labeled pixel to count");
    for (double& c : counts) c /= total;
    return counts;
}

inline void validate_weights(const ClassWeights& w) {
    for (double v : w)
        if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "class weights must be > 0");
}

inline nlohmann::json weights_to_json(const ClassWeights& w) { return nlohmann::json(std::vector<double>(w.begin(), w.end())); }

inline ClassWeights weights_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != kNumClasses) throw Error(ErrorCode::InvalidArgument, "class weights: 13 numbers");
    ClassWeights w{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (!j[c].is_number()) throw Error(ErrorCode::InvalidArgument, "class weights: 13 numbers");
        w[c] = j[c].get<double>();
    }
    validate_weights(w);
    return w;
}

// Mean over labeled pixels of -w_y * log softmax(logits)_y. When `grad` is
// given it receives d loss / d logits in the volume's layout.
inline LossReport weighted_nll(const ScoreVolume& logits, const LabelMap& labels, const ClassWeights& w,
                               std::vector<double>* grad = nullptr) {
    require_class_channels(logits, "weighted nll");
    require_same_plane(logits, labels, "weighted nll");
    validate_labels(labels);
    validate_weights(w);
    const std::size_t n = logits.pixels();

    std::size_t count = 0;
    for (Label l : labels.data()) count += is_class(l);
    if (count == 0) throw Error(ErrorCode::AllPixelsUnknown, "every pixel is unknown");
    if (grad) grad->assign(logits.data().size(), 0.0);

    const double inv = 1.0 / static_cast<double>(count);
    double total = 0.0;
    std::array<double, kNumClasses> prob{};
    for (std::size_t i = 0; i < n; ++i) {
        const Label y = labels[i];
        if (!is_class(y)) continue;
        double top = logits.at(0, i);
        for (std::size_t c = 1; c < kNumClasses; ++c) top = std::max(top, logits.at(c, i));
        double denom = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) denom += std::exp(logits.at(c, i) - top);
        const double log_denom = std::log(denom);
        total += -w[y] * (logits.at(y, i) - top - log_denom);
        if (grad) {
            for (std::size_t c = 0; c < kNumClasses; ++c) prob[c] = std::exp(logits.at(c, i) - top - log_denom);
            for (std::size_t c = 0; c < kNumClasses; ++c)
                (*grad)[c * n + i] = w[y] * inv * (prob[c] - (c == y ? 1.0 : 0.0));
        }
    }
    return {total * inv, count};
}

}  // namespace plf::losses
