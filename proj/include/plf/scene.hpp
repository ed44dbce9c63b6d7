#pragma once
// Deterministic synthetic indoor scenes for end-to-end runs: a ceiling /
// wall / floor layout with box-shaped furniture, a table carrying books and a
// painting on the wall. Every cue is derived from the same ground truth, so
// region boundaries agree across depth, contours, CAM and logits.
//
// In complementary mode the depth cue cannot see books or paintings (they
// share the depth of what they lie on, and the depth logits report table /
// wall there) while the CAM cue is precise only for those two small classes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "plf/core.hpp"
#include "plf/rng.hpp"
#include "plf/weak_local.hpp"

namespace plf::scene {

struct SceneSpec {
    std::size_t height = 48;
    std::size_t width = 64;
    std::size_t objects = 3;          // boxes on the floor, the table included
    double depth_error_rate = 0.1;    // fraction of pixels with corrupted logits
    double cam_error_rate = 0.9;      // fraction of a class's CAM core that is lost
    bool complementary = true;

    void validate() const {
        if (height < 32 || width < 32 || height % 4 || width % 4)
            throw Error(ErrorCode::BadSpec, "scene sides must be multiples of 4 and at least 32");
        if (objects < 1 || objects > 6) throw Error(ErrorCode::BadSpec, "objects must lie in [1, 6]");
        if (!(depth_error_rate >= 0.0 && depth_error_rate <= 1.0) || !(cam_error_rate >= 0.0 && cam_error_rate < 1.0))
            throw Error(ErrorCode::BadSpec, "error rates must lie in [0, 1] (cam rate below 1)");
    }
};

struct SyntheticScene {
    DepthMap depth;
    LabelMap gt;
    Grid<double> ucm;
    weak::FeatureVolume features;  // 13 x H/2 x W/2
    weak::HeadWeights head;        // identity
    ScoreVolume cam;               // compute_cam(features, head, H, W)
    ScoreVolume logits;
};

inline constexpr double kLogitTarget = 4.0;
inline constexpr double kLogitNoise = 0.5;

namespace detail {

struct Box {
    std::size_t r0, c0, r1, c1;  // half-open
    bool contains(std::size_t r, std::size_t c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
};

inline std::size_t even(Rng& rng, std::size_t lo, std::size_t hi) {
    hi = std::max(lo, hi);
    return 2 * static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo / 2), static_cast<std::int64_t>(hi / 2)));
}

// Label whose geometry the depth cue actually observes.
inline Label geometric_label(Label l) {
    if (l == id(Category::books)) return id(Category::table);
    if (l == id(Category::painting)) return id(Category::wall);
    return l;
}

}  // namespace detail

inline SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    spec.validate();
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    const std::size_t ceil_end = 2 * (h / 12);
    const std::size_t horizon = h / 2;
    Rng rng = make_rng(seed, "scene/layout");

    SyntheticScene s;
    s.gt = LabelMap(h, w);
    Grid<double> depth(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (r < ceil_end) {
                s.gt(r, c) = id(Category::ceil);
                depth(r, c) = 2.5 + 1.5 * static_cast<double>(r) / static_cast<double>(ceil_end);
            } else if (r < horizon) {
                s.gt(r, c) = id(Category::wall);
                depth(r, c) = 4.0;
            } else {
                s.gt(r, c) = id(Category::floor);
                depth(r, c) = 4.0 - 2.5 * static_cast<double>(r - horizon + 1) / static_cast<double>(h - horizon);
            }
        }
    }

    auto paint = [&](const detail::Box& b, Label l, double d) {
        for (std::size_t r = b.r0; r < b.r1; ++r)
            for (std::size_t c = b.c0; c < b.c1; ++c) {
                s.gt(r, c) = l;
                depth(r, c) = d;
            }
    };

    static constexpr Category kFurniture[] = {Category::bed, Category::chair, Category::sofa,
                                              Category::furniture, Category::objects, Category::tv};
    auto place_box = [&](std::size_t min_side) {
        const std::size_t bh = detail::even(rng, std::max<std::size_t>(min_side, h / 6), h / 3);
        const std::size_t bw = detail::even(rng, std::max<std::size_t>(min_side, w / 8), w / 3);
        const std::size_t bottom = detail::even(rng, horizon + 4, h);
        const std::size_t c0 = detail::even(rng, 0, w - bw);
        return detail::Box{bottom - bh, c0, bottom, c0 + bw};
    };

    for (std::size_t k = 1; k < spec.objects; ++k) {
        const auto cat = kFurniture[uniform_int(rng, 0, 5)];
        paint(place_box(4), id(cat), uniform(rng, 1.5, 3.5));
    }

    // The table goes on top of the other boxes, the books on the table.
    const detail::Box table = place_box(12);
    const double table_depth = uniform(rng, 1.5, 3.0);
    paint(table, id(Category::table), table_depth);
    const std::size_t books_h = detail::even(rng, 4, (table.r1 - table.r0) / 2);
    const std::size_t books_w = detail::even(rng, 4, (table.c1 - table.c0) / 2);
    const std::size_t books_c0 = table.c0 + detail::even(rng, 2, table.c1 - table.c0 - books_w - 2);
    paint({table.r0 + 2, books_c0, table.r0 + 2 + books_h, books_c0 + books_w}, id(Category::books), table_depth);

    // Painting: first placement that covers wall pixels only.
    for (int attempt = 0; attempt < 200; ++attempt) {
        const std::size_t ph = detail::even(rng, 4, std::max<std::size_t>(4, (horizon - ceil_end) / 2));
        const std::size_t pw = detail::even(rng, 4, w / 5);
        const std::size_t r0 = detail::even(rng, ceil_end + 2, horizon - ph - 2);
        const std::size_t c0 = detail::even(rng, 2, w - pw - 2);
        const detail::Box b{r0, c0, r0 + ph, c0 + pw};
        bool clear = true;
        for (std::size_t r = b.r0; r < b.r1 && clear; ++r)
            for (std::size_t c = b.c0; c < b.c1 && clear; ++c) clear = s.gt(r, c) == id(Category::wall);
        if (clear) {
            paint(b, id(Category::painting), 4.0);
            break;
        }
    }
    s.depth = DepthMap(std::move(depth));

    // Contours: strength 1 wherever the right or lower neighbour differs.
    s.ucm = Grid<double>(h, w, 0.0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            if ((c + 1 < w && s.gt(r, c + 1) != s.gt(r, c)) || (r + 1 < h && s.gt(r + 1, c) != s.gt(r, c)))
                s.ucm(r, c) = 1.0;

    // Logits: a peak at the (geometric) label plus noise; corrupted pixels
    // point at a random class instead.
    Rng lrng = make_rng(seed, "scene/logits");
    s.logits = ScoreVolume(kNumClasses, h, w);
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
        Label target = spec.complementary ? detail::geometric_label(s.gt[i]) : s.gt[i];
        if (uniform01(lrng) < spec.depth_error_rate) target = static_cast<Label>(uniform_int(lrng, 0, kNumClasses - 1));
        for (std::size_t c = 0; c < kNumClasses; ++c)
            s.logits.at(c, i) = (c == target ? kLogitTarget : 0.0) + uniform(lrng, -kLogitNoise, kLogitNoise);
    }

    // CAM features on the half-resolution grid: 1 on the class core, a
    // sub-threshold falloff around it. Cores of imprecise classes shrink to a
    // central box holding (1 - cam_error_rate) of the bounding box area.
    const std::size_t fh = h / 2;
    const std::size_t fw = w / 2;
    const ClassSet small{id(Category::books), id(Category::painting)};
    std::vector<double> feat(kNumClasses * fh * fw, 0.0);
    for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
        const auto l = static_cast<Label>(cls);
        Grid<std::uint8_t> mask(fh, fw, 0);
        std::size_t r0 = fh, c0 = fw, r1 = 0, c1 = 0;
        for (std::size_t r = 0; r < fh; ++r)
            for (std::size_t c = 0; c < fw; ++c) {
                std::size_t n = 0;
                for (std::size_t k = 0; k < 4; ++k) n += s.gt(2 * r + k / 2, 2 * c + k % 2) == l;
                if (n < 3) continue;
                mask(r, c) = 1;
                r0 = std::min(r0, r);
                c0 = std::min(c0, c);
                r1 = std::max(r1, r + 1);
                c1 = std::max(c1, c + 1);
            }
        if (r1 == 0) continue;
        const bool precise = spec.complementary ? small.contains(l) : false;
        const double keep = precise ? 1.0 : std::sqrt(1.0 - spec.cam_error_rate);
        const double kh = static_cast<double>(r1 - r0) * keep;
        const double kw = static_cast<double>(c1 - c0) * keep;
        const double mr = 0.5 * static_cast<double>(r0 + r1);
        const double mc = 0.5 * static_cast<double>(c0 + c1);
        std::vector<std::pair<std::size_t, std::size_t>> core;
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c)
                if (mask(r, c) && std::abs(static_cast<double>(r) + 0.5 - mr) <= 0.5 * kh + 0.5 &&
                    std::abs(static_cast<double>(c) + 0.5 - mc) <= 0.5 * kw + 0.5)
                    core.emplace_back(r, c);
        for (std::size_t r = 0; r < fh; ++r)
            for (std::size_t c = 0; c < fw; ++c) {
                std::size_t d = fh + fw;
                for (auto [cr, cc] : core) {
                    const std::size_t dr = r > cr ? r - cr : cr - r;
                    const std::size_t dc = c > cc ? c - cc : cc - c;
                    d = std::min(d, std::max(dr, dc));
                }
                feat[(cls * fh + r) * fw + c] =
                    d == 0 ? 1.0 : 0.45 * std::exp(-static_cast<double>(d - 1) / 1.5);
            }
    }
    s.features = weak::FeatureVolume(kNumClasses, fh, fw, std::move(feat));
    s.head.classes = kNumClasses;
    s.head.depth = kNumClasses;
    s.head.weights.assign(kNumClasses * kNumClasses, 0.0);
    for (std::size_t c = 0; c < kNumClasses; ++c) s.head.weights[c * kNumClasses + c] = 1.0;
    s.head.bias.assign(kNumClasses, 0.0);
    s.cam = weak::compute_cam(s.features, s.head, h, w);
    return s;
}

}  // namespace plf::scene
