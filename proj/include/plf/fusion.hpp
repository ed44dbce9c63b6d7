#pragma once
// Pseudo ground truth from two cues:
//
//   1. depth-based predictions, softmax-thresholded and voted per contour
//      segment (first integration step);
//   2. class activation maps, which may overrule a segment's vote when a
//      proposal is confident enough (second integration step). Among several
//      confident proposals the class with the smallest image-wide response
//      area wins, so small objects on larger ones survive.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "plf/contours.hpp"
#include "plf/core.hpp"

namespace plf::fusion {

struct ThresholdPair {
    double peak = 0.0;  // tau_p
    double rate = 0.0;  // tau_r
    friend bool operator==(const ThresholdPair&, const ThresholdPair&) = default;
};

struct ThresholdProfile {
    double tau_adapted = 0.6;
    double tau_cam = 0.5;
    ThresholdPair unknown{0.6, 0.2};
    ThresholdPair scene_bounds{0.7, 0.3};
    ThresholdPair other{0.8, 0.4};

    // tau_adapted and tau_cam live in [0, 1]. Peak/rate thresholds may sit
    // above 1, which disables replacement for that group.
    void validate() const {
        auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
        auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
        if (!unit(tau_adapted) || !unit(tau_cam))
            throw Error(ErrorCode::InvalidProfile, "tau_adapted and tau_cam must lie in [0,1]");
        for (const auto& p : {unknown, scene_bounds, other})
            if (!nonneg(p.peak) || !nonneg(p.rate))
                throw Error(ErrorCode::InvalidProfile, "peak/rate thresholds must be finite and >= 0");
    }

    friend bool operator==(const ThresholdProfile&, const ThresholdProfile&) = default;
};

struct CategoryGroups {
    ClassSet scene_bounds{id(Category::ceil), id(Category::floor), id(Category::wall)};
    ClassSet small{id(Category::books), id(Category::painting)};

    void validate() const {
        if (!scene_bounds.disjoint(small)) throw Error(ErrorCode::InvalidProfile, "category groups overlap");
    }

    friend bool operator==(const CategoryGroups&, const CategoryGroups&) = default;
};

// ---------------------------------------------------------------------------
// First integration step
// ---------------------------------------------------------------------------

// Per pixel: softmax over the class channels; the argmax class (ties to the
// lowest id) if its probability exceeds tau, otherwise unknown.
inline LabelMap confidence_filter(const ScoreVolume& logits, double tau_adapted) {
    require_class_channels(logits, "confidence filter");
    if (!logits.all_finite()) throw Error(ErrorCode::NonFinite, "logits must be finite");
    LabelMap out(logits.height(), logits.width(), kUnknown);
    for (std::size_t i = 0; i < logits.pixels(); ++i) {
        std::size_t best = 0;
        double top = logits.at(0, i);
        for (std::size_t c = 1; c < kNumClasses; ++c) {
            if (logits.at(c, i) > top) {
                top = logits.at(c, i);
                best = c;
            }
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) denom += std::exp(logits.at(c, i) - top);
        const double p_max = 1.0 / denom;
        if (p_max > tau_adapted) out[i] = static_cast<Label>(best);
    }
    return out;
}

using StepOneResult = std::vector<Label>;

inline StepOneResult step1_vote(const contours::SegmentMap& seg, const LabelMap& filtered) {
    const auto hist = contours::segment_histogram(seg, filtered);
    StepOneResult out(seg.count);
    for (std::size_t k = 0; k < seg.count; ++k) out[k] = contours::histogram_argmax(hist[k]);
    return out;
}

// ---------------------------------------------------------------------------
// Second integration step
// ---------------------------------------------------------------------------

using AreaVector = std::array<std::size_t, kNumClasses>;

// A_c: image-wide count of pixels with activation strictly above tau_cam.
inline AreaVector cam_area(const ScoreVolume& cam, double tau_cam) {
    require_class_channels(cam, "cam area");
    AreaVector a{};
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < cam.pixels(); ++i) a[c] += cam.at(c, i) > tau_cam;
    return a;
}

struct ResponseStats {
    double peak = 0.0;  // p_{k,c}
    double rate = 0.0;  // r_{k,c}
};

inline ResponseStats response_stats(std::span<const std::size_t> segment_pixels, const ScoreVolume& cam,
                                    std::size_t channel, double tau_cam) {
    if (segment_pixels.empty()) throw Error(ErrorCode::EmptySegment, "response stats of an empty segment");
    double peak = -std::numeric_limits<double>::infinity();
    std::size_t above = 0;
    for (std::size_t i : segment_pixels) {
        const double v = cam.at(channel, i);
        peak = std::max(peak, v);
        above += v > tau_cam;
    }
    return {peak, static_cast<double>(above) / static_cast<double>(segment_pixels.size())};
}

inline const ThresholdPair& thresholds_for(Label step1, const ThresholdProfile& prof, const CategoryGroups& groups) {
    if (step1 == kUnknown) return prof.unknown;
    if (groups.scene_bounds.contains(step1)) return prof.scene_bounds;
    return prof.other;
}

// Per-segment decision record, exposed for inspection and tests.
struct SegmentDecision {
    Label step1 = kUnknown;
    ClassSet proposals;
    ClassSet electable;
    Label label = kUnknown;
};

inline std::vector<SegmentDecision> step2_decisions(const contours::SegmentMap& seg, const StepOneResult& step1,
                                                    const ScoreVolume& cam, const ThresholdProfile& prof,
                                                    const CategoryGroups& groups) {
    prof.validate();
    groups.validate();
    require_class_channels(cam, "step 2 CAM");
    require_same_plane(cam, seg.ids, "step 2 CAM vs segments");
    if (step1.size() != seg.count) throw Error(ErrorCode::ShapeMismatch, "step-1 result needs one label per segment");
    for (double v : cam.data())
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "CAM values must lie in [0,1]");

    const AreaVector area = cam_area(cam, prof.tau_cam);
    const auto members = seg.members();
    std::vector<SegmentDecision> out(seg.count);
    for (std::size_t k = 0; k < seg.count; ++k) {
        SegmentDecision& d = out[k];
        d.step1 = step1[k];
        const auto& px = members[k];

        std::size_t ml = 0;
        double ml_sum = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double s = 0.0;
            for (std::size_t i : px) s += cam.at(c, i);
            if (s > ml_sum) {
                ml_sum = s;
                ml = c;
            }
        }
        d.proposals = groups.small;
        d.proposals.insert(static_cast<Label>(ml));

        const ThresholdPair& tau = thresholds_for(d.step1, prof, groups);
        for (Label c : d.proposals.members()) {
            const ResponseStats st = response_stats(px, cam, c, prof.tau_cam);
            if (st.peak > tau.peak && st.rate > tau.rate) d.electable.insert(c);
        }

        if (d.electable.empty()) {
            d.label = d.step1;
        } else {
            Label best = kUnknown;
            for (Label c : d.electable.members())
                if (best == kUnknown || area[c] < area[best]) best = c;
            d.label = best;
        }
    }
    return out;
}

inline LabelMap step2_integrate(const contours::SegmentMap& seg, const StepOneResult& step1, const ScoreVolume& cam,
                                const ThresholdProfile& prof, const CategoryGroups& groups) {
    const auto decisions = step2_decisions(seg, step1, cam, prof, groups);
    std::vector<Label> labels(decisions.size());
    for (std::size_t k = 0; k < decisions.size(); ++k) labels[k] = decisions[k].label;
    return contours::rasterize(seg, labels);
}

// Both integration steps on one image.
struct FusionOutput {
    LabelMap filtered;
    StepOneResult step1;
    LabelMap step1_map;
    LabelMap pseudo;
};

inline FusionOutput fuse(const contours::SegmentMap& seg, const ScoreVolume& logits, const ScoreVolume& cam,
                         const ThresholdProfile& prof, const CategoryGroups& groups) {
    prof.validate();
    require_same_plane(logits, seg.ids, "logits vs segments");
    FusionOutput out;
    out.filtered = confidence_filter(logits, prof.tau_adapted);
    out.step1 = step1_vote(seg, out.filtered);
    out.step1_map = contours::rasterize(seg, out.step1);
    out.pseudo = step2_integrate(seg, out.step1, cam, prof, groups);
    return out;
}

}  // namespace plf::fusion
