#pragma once
// Thresholding an ultrametric contour map into a total partition of the
// image, plus per-segment class histograms.

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "plf/core.hpp"

namespace plf::contours {

inline constexpr double kDefaultTauUcm = 0.2;

struct SegmentMap {
    Grid<std::uint32_t> ids;
    std::size_t count = 0;
    std::vector<std::size_t> sizes;

    std::size_t height() const noexcept { return ids.height(); }
    std::size_t width() const noexcept { return ids.width(); }

    // Pixel indices per segment, in raster order.
    std::vector<std::vector<std::size_t>> members() const {
        std::vector<std::vector<std::size_t>> out(count);
        for (std::size_t k = 0; k < count; ++k) out[k].reserve(sizes[k]);
        for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]].push_back(i);
        return out;
    }

    friend bool operator==(const SegmentMap&, const SegmentMap&) = default;
};

// Builds a SegmentMap from arbitrary ids, renumbering in raster first-touch
// order. Connectivity is not checked.
inline SegmentMap canonicalize(const Grid<std::uint32_t>& raw) {
    SegmentMap s;
    s.ids = Grid<std::uint32_t>(raw.height(), raw.width());
    std::vector<std::uint32_t> remap;
    std::vector<std::uint32_t> keys;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::uint32_t key = raw[i];
        if (key >= remap.size()) remap.resize(static_cast<std::size_t>(key) + 1, std::numeric_limits<std::uint32_t>::max());
        if (remap[key] == std::numeric_limits<std::uint32_t>::max()) {
            remap[key] = static_cast<std::uint32_t>(s.count++);
            s.sizes.push_back(0);
        }
        s.ids[i] = remap[key];
        ++s.sizes[remap[key]];
    }
    return s;
}

inline void validate_strength(const Grid<double>& ucm) {
    for (double v : ucm.data())
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "contour strength outside [0,1]");
}

// Pixels with strength > tau are boundary pixels. 4-connected components of
// the remaining pixels become segments (ids in raster first-touch order).
// Boundary pixels are then absorbed, in synchronous rounds, into the
// adjacent segment with the most 4-neighbours already assigned (ties to the
// lowest id), and the result is renumbered in raster first-touch order.
inline SegmentMap extract_segments(const Grid<double>& ucm, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau_ucm must lie in [0,1]");
    validate_strength(ucm);
    const std::size_t h = ucm.height();
    const std::size_t w = ucm.width();
    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    SegmentMap s;
    s.ids = Grid<std::uint32_t>(h, w, kNone);
    if (h == 0 || w == 0) return s;

    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < ucm.size(); ++start) {
        if (ucm[start] > tau || s.ids[start] != kNone) continue;
        const auto label = static_cast<std::uint32_t>(s.count++);
        std::size_t size = 0;
        stack.push_back(start);
        s.ids[start] = label;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size;
            const std::size_t r = i / w;
            const std::size_t c = i % w;
            auto visit = [&](std::size_t j) {
                if (ucm[j] <= tau && s.ids[j] == kNone) {
                    s.ids[j] = label;
                    stack.push_back(j);
                }
            };
            if (r > 0) visit(i - w);
            if (r + 1 < h) visit(i + w);
            if (c > 0) visit(i - 1);
            if (c + 1 < w) visit(i + 1);
        }
        s.sizes.push_back(size);
    }

    if (s.count == 0) {
        // Everything is boundary: one segment.
        std::fill(s.ids.data().begin(), s.ids.data().end(), 0u);
        s.count = 1;
        s.sizes = {ucm.size()};
        return s;
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < ucm.size(); ++i)
        if (s.ids[i] == kNone) pending.push_back(i);

    std::vector<std::pair<std::size_t, std::uint32_t>> decided;
    while (!pending.empty()) {
        decided.clear();
        std::vector<std::size_t> still;
        for (std::size_t i : pending) {
            const std::size_t r = i / w;
            const std::size_t c = i % w;
            std::array<std::uint32_t, 4> nb{kNone, kNone, kNone, kNone};
            if (r > 0) nb[0] = s.ids[i - w];
            if (r + 1 < h) nb[1] = s.ids[i + w];
            if (c > 0) nb[2] = s.ids[i - 1];
            if (c + 1 < w) nb[3] = s.ids[i + 1];
            std::uint32_t best = kNone;
            int best_votes = 0;
            for (std::uint32_t cand : nb) {
                if (cand == kNone) continue;
                int votes = 0;
                for (std::uint32_t o : nb) votes += (o == cand);
                if (votes > best_votes || (votes == best_votes && cand < best)) {
                    best = cand;
                    best_votes = votes;
                }
            }
            if (best == kNone) still.push_back(i);
            else decided.emplace_back(i, best);
        }
        for (auto [i, label] : decided) {
            s.ids[i] = label;
            ++s.sizes[label];
        }
        pending.swap(still);
    }
    // Absorption can hand a boundary pixel to a later segment; renumber.
    return canonicalize(s.ids);
}

using Histogram = std::array<std::size_t, kNumClasses>;

// h[k][c] = pixels of segment k labeled c; unknown pixels are not counted.
inline std::vector<Histogram> segment_histogram(const SegmentMap& seg, const LabelMap& labels) {
    require_same_shape(seg.ids, labels, "segment histogram");
    std::vector<Histogram> hist(seg.count, Histogram{});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Label l = labels[i];
        if (is_class(l)) ++hist[seg.ids[i]][l];
    }
    return hist;
}

// Index of the largest bin (ties to the lowest class id), or kUnknown when
// every bin is zero.
inline Label histogram_argmax(const Histogram& h) {
    Label best = kUnknown;
    std::size_t best_count = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (h[c] > best_count) {
            best_count = h[c];
            best = static_cast<Label>(c);
        }
    }
    return best;
}

// Writes per-segment labels back to pixels.
inline LabelMap rasterize(const SegmentMap& seg, const std::vector<Label>& per_segment) {
    if (per_segment.size() != seg.count) throw Error(ErrorCode::ShapeMismatch, "one label per segment");
    LabelMap out(seg.height(), seg.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = per_segment[seg.ids[i]];
    return out;
}

// Segment maps are stored as u16, so at most 65536 segments.
inline bool fits_u16(const SegmentMap& seg) { return seg.count <= 65536; }

}  // namespace plf::contours
