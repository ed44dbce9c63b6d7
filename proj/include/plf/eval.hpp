#pragma once
// Segmentation metrics with abstention: confusion matrices, IoU / mIoU /
// global accuracy, cover ratios, "effective" metrics (scaled by cover) and
// metrics restricted to the pixels where a pseudo-label mask exists.

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "plf/contours.hpp"
#include "plf/core.hpp"

namespace plf::eval {

// How predictions equal to kUnknown enter GA and IoU. CountAsWrong treats
// them as a prediction that never matches; Exclude drops those pixels, so
// abstention shows up only through cover ratios and effective metrics.
enum class AbstentionPolicy { CountAsWrong, Exclude };

inline constexpr std::size_t kAbstainColumn = kNumClasses;

struct ConfusionMatrix {
    // rows: ground truth; columns: prediction, last column = predicted unknown
    std::array<std::array<std::size_t, kNumClasses + 1>, kNumClasses> cells{};
    std::size_t ignored = 0;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& row : cells)
            for (auto v : row) n += v;
        return n;
    }

    std::size_t abstained() const {
        std::size_t n = 0;
        for (const auto& row : cells) n += row[kAbstainColumn];
        return n;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        for (std::size_t r = 0; r < kNumClasses; ++r)
            for (std::size_t c = 0; c <= kNumClasses; ++c) cells[r][c] += o.cells[r][c];
        ignored += o.ignored;
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, const ClassSet& ignore = {},
                                 const LabelMap* mask = nullptr) {
    require_same_shape(pred, gt, "confusion");
    if (mask) require_same_shape(*mask, gt, "confusion mask");
    validate_labels(pred);
    validate_labels(gt);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (mask && (*mask)[i] == kUnknown) continue;
        const Label g = gt[i];
        if (!is_class(g) || ignore.contains(g)) {
            ++cm.ignored;
            continue;
        }
        const Label p = pred[i];
        ++cm.cells[g][is_class(p) ? p : kAbstainColumn];
    }
    return cm;
}

struct CoverRatio {
    double global = 0.0;
    bool has_per_class = false;
    std::array<std::optional<double>, kNumClasses> per_class{};

    std::optional<double> class_ratio(Label c) const {
        if (!has_per_class) throw Error(ErrorCode::PerClassRequiresGt, "per-class cover ratio needs ground truth");
        return per_class.at(c);
    }
};

// Raw counts behind a cover ratio; additive across images.
struct CoverCounts {
    std::size_t covered = 0;
    std::size_t total = 0;
    bool has_gt = false;
    std::array<std::size_t, kNumClasses> seen{};
    std::array<std::size_t, kNumClasses> hit{};

    CoverCounts& operator+=(const CoverCounts& o) {
        covered += o.covered;
        total += o.total;
        has_gt = has_gt || o.has_gt;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            seen[c] += o.seen[c];
            hit[c] += o.hit[c];
        }
        return *this;
    }

    CoverRatio ratio() const {
        CoverRatio cr;
        cr.global = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
        cr.has_per_class = has_gt;
        if (has_gt)
            for (std::size_t c = 0; c < kNumClasses; ++c)
                if (seen[c]) cr.per_class[c] = static_cast<double>(hit[c]) / static_cast<double>(seen[c]);
        return cr;
    }
};

inline CoverCounts cover_counts(const LabelMap& pseudo, const LabelMap* gt = nullptr) {
    validate_labels(pseudo);
    CoverCounts cc;
    cc.total = pseudo.size();
    for (Label l : pseudo.data()) cc.covered += is_class(l);
    if (gt) {
        require_same_shape(pseudo, *gt, "cover ratio");
        cc.has_gt = true;
        for (std::size_t i = 0; i < gt->size(); ++i) {
            const Label g = (*gt)[i];
            if (!is_class(g)) continue;
            ++cc.seen[g];
            cc.hit[g] += is_class(pseudo[i]);
        }
    }
    return cc;
}

// Fraction of non-unknown pixels; per class (when gt is given) the fraction
// of gt-class-c pixels that carry a pseudo label.
inline CoverRatio cover_ratio(const LabelMap& pseudo, const LabelMap* gt = nullptr) {
    return cover_counts(pseudo, gt).ratio();
}

struct MetricReport {
    std::array<std::optional<double>, kNumClasses> iou{};
    double miou = 0.0;
    double ga = 0.0;
    ClassSet excluded;
    std::size_t evaluated_pixels = 0;
    std::optional<CoverRatio> cover;
    std::optional<double> effective_ga;
    std::optional<double> effective_miou;
};

// IoU_c = TP / (TP + FP + FN); classes with a zero denominator are absent
// and skipped by the mean, as are excluded classes. GA = trace / total.
inline MetricReport metrics(const ConfusionMatrix& cm, const ClassSet& exclude = {},
                            AbstentionPolicy policy = AbstentionPolicy::CountAsWrong) {
    const bool count_abstain = policy == AbstentionPolicy::CountAsWrong;
    std::size_t total = 0;
    std::size_t trace = 0;
    std::array<std::size_t, kNumClasses> row{}, col{};
    for (std::size_t g = 0; g < kNumClasses; ++g) {
        for (std::size_t p = 0; p < kNumClasses; ++p) {
            row[g] += cm.cells[g][p];
            col[p] += cm.cells[g][p];
        }
        if (count_abstain) row[g] += cm.cells[g][kAbstainColumn];
        total += row[g];
        trace += cm.cells[g][g];
    }
    if (total == 0) throw Error(ErrorCode::EmptyMatrix, "no evaluated pixel");

    MetricReport r;
    r.excluded = exclude;
    r.evaluated_pixels = total;
    r.ga = static_cast<double>(trace) / static_cast<double>(total);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const std::size_t tp = cm.cells[c][c];
        const std::size_t denom = row[c] + col[c] - tp;
        if (denom == 0) continue;
        r.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
        if (exclude.contains(static_cast<Label>(c))) continue;
        sum += *r.iou[c];
        ++n;
    }
    r.miou = n ? sum / static_cast<double>(n) : 0.0;
    return r;
}

struct EffectiveMetrics {
    double ga = 0.0;
    double miou = 0.0;
};

// GA x global cover, and the mean over the report's classes of
// IoU_c x cover_c (per-class cover applied before averaging).
inline EffectiveMetrics effective_metrics(const MetricReport& r) {
    if (!r.cover || !r.cover->has_per_class)
        throw Error(ErrorCode::MissingCoverRatio, "effective metrics need global and per-class cover ratios");
    EffectiveMetrics e;
    e.ga = r.ga * r.cover->global;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (!r.iou[c] || r.excluded.contains(static_cast<Label>(c))) continue;
        sum += *r.iou[c] * r.cover->per_class[c].value_or(0.0);
        ++n;
    }
    e.miou = n ? sum / static_cast<double>(n) : 0.0;
    return e;
}

inline void attach_cover(MetricReport& r, const CoverRatio& cover) {
    r.cover = cover;
    const auto e = effective_metrics(r);
    r.effective_ga = e.ga;
    r.effective_miou = e.miou;
}

// Metrics over pixels where mask != unknown.
inline MetricReport restricted_metrics(const LabelMap& pred, const LabelMap& gt, const LabelMap& mask,
                                       const ClassSet& exclude = {},
                                       AbstentionPolicy policy = AbstentionPolicy::CountAsWrong) {
    require_same_shape(pred, gt, "restricted metrics");
    require_same_shape(mask, gt, "restricted metrics mask");
    const bool any = std::any_of(mask.data().begin(), mask.data().end(), [](Label l) { return is_class(l); });
    if (!any) throw Error(ErrorCode::EmptyMask, "mask has no labeled pixel");
    return metrics(confusion(pred, gt, {}, &mask), exclude, policy);
}

// One row of the pseudo-label comparison: cover, GA, GA restricted to the
// mask, effective GA, and the same three for mIoU. Abstentions are excluded
// from GA/mIoU and accounted for by the cover ratio.
struct ComparisonRow {
    double cover = 0.0;
    double ga = 0.0;
    double ga_at_mask = 0.0;
    double effective_ga = 0.0;
    double miou = 0.0;
    double miou_at_mask = 0.0;
    double effective_miou = 0.0;
};

inline ComparisonRow comparison_row(const LabelMap& pred, const LabelMap& gt, const LabelMap& mask,
                                    const ClassSet& exclude = {}) {
    MetricReport full = metrics(confusion(pred, gt), exclude, AbstentionPolicy::Exclude);
    attach_cover(full, cover_ratio(pred, &gt));
    const MetricReport at = restricted_metrics(pred, gt, mask, exclude, AbstentionPolicy::Exclude);
    return {full.cover->global, full.ga, at.ga, *full.effective_ga, full.miou, at.miou, *full.effective_miou};
}

// ---------------------------------------------------------------------------
// Contour-wise refinement of predictions
// ---------------------------------------------------------------------------

// Each segment takes the majority predicted class among its labeled pixels
// (ties to the lowest id); segments with no labeled pixel become unknown.
inline LabelMap ucm_refine(const LabelMap& pred, const contours::SegmentMap& seg) {
    require_same_shape(pred, seg.ids, "ucm refine");
    validate_labels(pred);
    const auto hist = contours::segment_histogram(seg, pred);
    std::vector<Label> labels(seg.count);
    for (std::size_t k = 0; k < seg.count; ++k) labels[k] = contours::histogram_argmax(hist[k]);
    return contours::rasterize(seg, labels);
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j;
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c)
        per_class[std::string(kClassNames[c])] = r.iou[c] ? nlohmann::json(*r.iou[c]) : nlohmann::json(nullptr);
    j["iou"] = per_class;
    j["miou"] = r.miou;
    j["ga"] = r.ga;
    j["evaluated_pixels"] = r.evaluated_pixels;
    nlohmann::json excl = nlohmann::json::array();
    for (Label c : r.excluded.members()) excl.push_back(std::string(kClassNames[c]));
    j["excluded"] = excl;
    if (r.cover) {
        nlohmann::json cover;
        cover["global"] = r.cover->global;
        if (r.cover->has_per_class) {
            nlohmann::json pc = nlohmann::json::object();
            for (std::size_t c = 0; c < kNumClasses; ++c)
                pc[std::string(kClassNames[c])] =
                    r.cover->per_class[c] ? nlohmann::json(*r.cover->per_class[c]) : nlohmann::json(nullptr);
            cover["per_class"] = pc;
        }
        j["cover"] = cover;
    }
    if (r.effective_ga) j["effective_ga"] = *r.effective_ga;
    if (r.effective_miou) j["effective_miou"] = *r.effective_miou;
    return j;
}

// Aligned text table in taxonomy order followed by mIoU, values in percent.
inline std::string to_table(const MetricReport& r, std::string_view row_name = "result") {
    static constexpr std::array<std::string_view, kNumClasses> kShort = {
        "bed", "books", "ceil", "chair", "floor", "furn.", "objs.", "paint", "sofa", "table", "tv", "wall", "window"};
    std::string head = std::string(std::max<std::size_t>(row_name.size(), 8), ' ');
    std::string line(row_name);
    line.resize(head.size(), ' ');
    char cell[32];
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::snprintf(cell, sizeof cell, " %7s", std::string(kShort[c]).c_str());
        head += cell;
        if (r.iou[c]) std::snprintf(cell, sizeof cell, " %7.2f", 100.0 * *r.iou[c]);
        else std::snprintf(cell, sizeof cell, " %7s", "-");
        line += cell;
    }
    std::snprintf(cell, sizeof cell, " %7s", "mIoU");
    head += cell;
    std::snprintf(cell, sizeof cell, " %7.2f", 100.0 * r.miou);
    line += cell;
    std::string out = head + "\n" + line + "\n";
    char tail[160];
    std::snprintf(tail, sizeof tail, "GA %.2f", 100.0 * r.ga);
    out += tail;
    if (r.cover) {
        std::snprintf(tail, sizeof tail, "  cover %.2f", 100.0 * r.cover->global);
        out += tail;
    }
    if (r.effective_ga) {
        std::snprintf(tail, sizeof tail, "  effective GA %.2f  effective mIoU %.2f", 100.0 * *r.effective_ga,
                      100.0 * r.effective_miou.value_or(0.0));
        out += tail;
    }
    return out + "\n";
}

}  // namespace plf::eval
