#include <catch_amalgamated.hpp>

#include <cmath>

#include "plf/fusion.hpp"
#include "plf/rng.hpp"
#include "algorithm1_oracle.hpp"

using namespace plf;
using namespace plf::fusion;
using contours::SegmentMap;

namespace {

constexpr Label kBooks = 1, kCeil = 2, kChair = 3, kFloor = 4, kPainting = 7, kTable = 9, kWall = 11;

ScoreVolume random_logits(Rng& rng, std::size_t h, std::size_t w, double spread) {
    ScoreVolume v(kNumClasses, h, w);
    for (auto& x : v.data()) x = uniform(rng, -spread, spread);
    return v;
}

ScoreVolume random_cam(Rng& rng, std::size_t h, std::size_t w) {
    ScoreVolume v(kNumClasses, h, w);
    for (auto& x : v.data()) {
        const double u = uniform01(rng);
        // plenty of exact zeros and ones, and mass near the thresholds
        x = u < 0.2 ? 0.0 : u > 0.9 ? 1.0 : uniform01(rng);
    }
    return v;
}

// Random blocky partition with at most `k` segments.
SegmentMap random_segments(Rng& rng, std::size_t h, std::size_t w, int k) {
    Grid<std::uint32_t> raw(h, w, 0);
    const auto cuts = uniform_int(rng, 0, k - 1);
    for (int t = 0; t < cuts; ++t) {
        const auto r0 = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h) - 1));
        const auto c0 = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w) - 1));
        for (std::size_t r = r0; r < h; ++r)
            for (std::size_t c = c0; c < w; ++c) raw(r, c) = static_cast<std::uint32_t>(t + 1);
    }
    return contours::canonicalize(raw);
}

}  // namespace

TEST_CASE("confidence filter examples") {
    ScoreVolume v(kNumClasses, 1, 2, 0.0);
    v(kChair, 0, 0) = 10.0;
    const auto f = confidence_filter(v, 0.6);
    CHECK(f(0, 0) == kChair);
    CHECK(f(0, 1) == kUnknown);
}

TEST_CASE("confidence filter matches softmax oracle") {
    Rng rng = make_rng(31, "test/filter");
    const auto logits = random_logits(rng, 9, 11, 4.0);
    for (double tau : {0.0, 0.3, 0.6, 0.9}) {
        const auto f = confidence_filter(logits, tau);
        for (std::size_t i = 0; i < logits.pixels(); ++i) {
            double z = 0.0;
            for (std::size_t c = 0; c < kNumClasses; ++c) z += std::exp(logits.at(c, i));
            std::size_t best = 0;
            for (std::size_t c = 1; c < kNumClasses; ++c)
                if (logits.at(c, i) > logits.at(best, i)) best = c;
            const double p = std::exp(logits.at(best, i)) / z;
            CHECK(f[i] == (p > tau ? static_cast<Label>(best) : kUnknown));
        }
    }
}

TEST_CASE("confidence filter coverage shrinks with tau") {
    Rng rng = make_rng(32, "test/filter-mono");
    const auto logits = random_logits(rng, 16, 16, 5.0);
    std::size_t prev = SIZE_MAX;
    for (double tau = 0.0; tau <= 1.0; tau += 0.05) {
        const auto f = confidence_filter(logits, tau);
        const auto n = static_cast<std::size_t>(std::count_if(f.data().begin(), f.data().end(), is_class));
        CHECK(n <= prev);
        prev = n;
    }
    ScoreVolume bad(kNumClasses, 1, 1, 0.0);
    bad(0, 0, 0) = std::nan("");
    CHECK_THROWS_AS(confidence_filter(bad, 0.6), Error);
    CHECK_THROWS_AS(confidence_filter(ScoreVolume(12, 1, 1), 0.6), Error);
}

TEST_CASE("step-1 vote") {
    const auto seg = contours::canonicalize(Grid<std::uint32_t>(1, 16, std::vector<std::uint32_t>(16, 0)));
    LabelMap f(1, 16, kUnknown);
    for (int i = 0; i < 10; ++i) f[i] = kChair;
    for (int i = 10; i < 13; ++i) f[i] = kTable;
    CHECK(step1_vote(seg, f) == StepOneResult{kChair});
    CHECK(step1_vote(seg, LabelMap(1, 16, kUnknown)) == StepOneResult{kUnknown});
    CHECK_THROWS_AS(step1_vote(seg, LabelMap(2, 8)), Error);

    Rng rng = make_rng(33, "test/vote");
    const auto s = random_segments(rng, 12, 12, 5);
    LabelMap labels(12, 12);
    for (auto& l : labels.data()) l = static_cast<Label>(uniform_int(rng, 0, 3) == 0 ? kUnknown : uniform_int(rng, 0, 4));
    const auto vote = step1_vote(s, labels);
    for (std::uint32_t k = 0; k < s.count; ++k) {
        std::vector<int> counts(kNumClasses, 0);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (s.ids[i] == k && is_class(labels[i])) ++counts[labels[i]];
        const auto top = std::max_element(counts.begin(), counts.end());
        CHECK(vote[k] == (*top == 0 ? kUnknown : static_cast<Label>(top - counts.begin())));
    }
}

TEST_CASE("cam area and response stats") {
    ScoreVolume cam(kNumClasses, 8, 8, 0.0);
    CHECK(cam_area(cam, 0.5) == AreaVector{});
    for (std::size_t r = 1; r < 6; ++r)
        for (std::size_t c = 2; c < 7; ++c) cam(kTable, r, c) = 1.0;
    CHECK(cam_area(cam, 0.5)[kTable] == 25);

    std::vector<std::size_t> px{0, 1, 2};
    ScoreVolume flat(kNumClasses, 1, 3, 0.9);
    const auto st = response_stats(px, flat, 0, 0.5);
    CHECK(st.peak == 0.9);
    CHECK(st.rate == 1.0);
    const auto zero = response_stats(px, cam, 0, 0.5);
    CHECK(zero.peak == 0.0);
    CHECK(zero.rate == 0.0);
    CHECK_THROWS_AS(response_stats({}, cam, 0, 0.5), Error);

    Rng rng = make_rng(34, "test/area");
    const auto rc = random_cam(rng, 10, 7);
    const auto a = cam_area(rc, 0.5);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::size_t n = 0;
        for (std::size_t r = 0; r < 10; ++r)
            for (std::size_t x = 0; x < 7; ++x) n += rc(c, r, x) > 0.5;
        CHECK(a[c] == n);
    }
    const std::vector<std::size_t> some{3, 9, 10, 44, 69};
    const auto s2 = response_stats(some, rc, 4, 0.3);
    double peak = 0;
    int above = 0;
    for (auto i : some) {
        peak = std::max(peak, rc.at(4, i));
        above += rc.at(4, i) > 0.3;
    }
    CHECK(s2.peak == peak);
    CHECK(s2.rate == above / 5.0);
}

TEST_CASE("small object on its support wins by response area") {
    // 80x100 image; the segment under test is an 8x10 patch of table top.
    const std::size_t h = 80, w = 100;
    Grid<std::uint32_t> raw(h, w, 0);
    for (std::size_t r = 20; r < 28; ++r)
        for (std::size_t c = 30; c < 40; ++c) raw(r, c) = 1;
    const auto seg = contours::canonicalize(raw);
    REQUIRE(seg.count == 2);

    ScoreVolume cam(kNumClasses, h, w, 0.0);
    // table responds over 5000 pixels, including the patch
    std::size_t n = 0;
    for (std::size_t r = 0; r < h && n < 5000; ++r)
        for (std::size_t c = 0; c < w && n < 5000; ++c, ++n) cam(kTable, r, c) = 0.95;
    // books respond on 40 pixels inside the patch
    for (std::size_t r = 20; r < 24; ++r)
        for (std::size_t c = 30; c < 40; ++c) cam(kBooks, r, c) = 0.99;

    const ThresholdProfile prof;
    const CategoryGroups groups;
    const auto area = cam_area(cam, prof.tau_cam);
    REQUIRE(area[kTable] == 5000);
    REQUIRE(area[kBooks] == 40);

    const StepOneResult step1{kWall, kTable};
    const auto d = step2_decisions(seg, step1, cam, prof, groups);
    CHECK(d[1].proposals.contains(kTable));
    CHECK(d[1].electable == ClassSet{kBooks, kTable});
    CHECK(d[1].label == kBooks);

    // the books response fills less than the rate threshold -> table keeps it
    auto sparse = cam;
    for (std::size_t r = 22; r < 24; ++r)
        for (std::size_t c = 30; c < 40; ++c) sparse(kBooks, r, c) = 0.0;
    CHECK(step2_decisions(seg, step1, sparse, prof, groups)[1].label == kTable);

    const auto pseudo = step2_integrate(seg, step1, cam, prof, groups);
    CHECK(pseudo(25, 35) == kBooks);
    CHECK(pseudo(0, 0) == kTable);  // table also dominates the surrounding segment
}

TEST_CASE("unreachable thresholds pass step 1 through") {
    Rng rng = make_rng(35, "test/passthrough");
    ThresholdProfile prof;
    prof.unknown = prof.scene_bounds = prof.other = {1.01, 1.01};
    for (int t = 0; t < 20; ++t) {
        const auto seg = random_segments(rng, 9, 13, 5);
        StepOneResult step1(seg.count);
        for (auto& l : step1) l = uniform01(rng) < 0.3 ? kUnknown : static_cast<Label>(uniform_int(rng, 0, 12));
        const auto out = step2_integrate(seg, step1, random_cam(rng, 9, 13), prof, CategoryGroups{});
        CHECK(out == contours::rasterize(seg, step1));
    }
}

TEST_CASE("matches transcription oracle on 200 random instances") {
    Rng rng = make_rng(36, "test/algorithm1");
    const CategoryGroups groups;
    const std::vector<Label> sb{kCeil, kFloor, kWall}, small{kBooks, kPainting};
    for (int t = 0; t < 200; ++t) {
        const auto h = static_cast<std::size_t>(uniform_int(rng, 1, 16));
        const auto w = static_cast<std::size_t>(uniform_int(rng, 1, 16));
        const auto seg = random_segments(rng, h, w, 5);
        const auto cam = random_cam(rng, h, w);
        StepOneResult step1(seg.count);
        for (auto& l : step1) l = uniform01(rng) < 0.3 ? kUnknown : static_cast<Label>(uniform_int(rng, 0, 12));
        ThresholdProfile prof;
        prof.tau_cam = uniform(rng, 0.2, 0.8);
        for (auto* p : {&prof.unknown, &prof.scene_bounds, &prof.other}) *p = {uniform(rng, 0.3, 1.0), uniform(rng, 0.0, 0.8)};

        const auto got = step2_integrate(seg, step1, cam, prof, groups);
        REQUIRE(got == oracle::algorithm1(seg, step1, cam, prof, sb, small));

        // output is step 1 or an electable class; raising thresholds shrinks E_k
        const auto d = step2_decisions(seg, step1, cam, prof, groups);
        ThresholdProfile strict = prof;
        for (auto* p : {&strict.unknown, &strict.scene_bounds, &strict.other}) {
            p->peak += 0.1;
            p->rate += 0.1;
        }
        const auto ds = step2_decisions(seg, step1, cam, strict, groups);
        for (std::size_t k = 0; k < seg.count; ++k) {
            CHECK((d[k].label == step1[k] || d[k].electable.contains(d[k].label)));
            for (Label c : ds[k].electable.members()) CHECK(d[k].electable.contains(c));
        }
    }
}

TEST_CASE("class permutation equivariance") {
    Rng rng = make_rng(37, "test/perm");
    std::array<Label, kNumClasses> perm{};
    std::iota(perm.begin(), perm.end(), Label{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    int checked = 0;
    for (int t = 0; t < 60; ++t) {
        const auto seg = random_segments(rng, 12, 12, 4);
        ScoreVolume cam(kNumClasses, 12, 12);
        // continuous values keep sums and areas tie-free with probability one
        for (auto& x : cam.data()) x = uniform01(rng);
        StepOneResult step1(seg.count);
        for (auto& l : step1) l = static_cast<Label>(uniform_int(rng, 0, 12));
        ThresholdProfile prof;
        prof.unknown = prof.scene_bounds = prof.other = {0.5, 0.3};

        ScoreVolume pcam(kNumClasses, 12, 12);
        for (std::size_t c = 0; c < kNumClasses; ++c)
            for (std::size_t i = 0; i < 144; ++i) pcam.at(perm[c], i) = cam.at(c, i);
        StepOneResult pstep = step1;
        for (auto& l : pstep) l = perm[l];
        CategoryGroups g, pg;
        pg.scene_bounds = pg.small = ClassSet{};
        for (Label c : g.scene_bounds.members()) pg.scene_bounds.insert(perm[c]);
        for (Label c : g.small.members()) pg.small.insert(perm[c]);

        // integer areas tie easily; only tie-free instances are equivariant
        const auto area = cam_area(cam, prof.tau_cam);
        bool ties = false;
        for (const auto& d : step2_decisions(seg, step1, cam, prof, g)) {
            const auto e = d.electable.members();
            for (std::size_t x = 0; x < e.size(); ++x)
                for (std::size_t y = x + 1; y < e.size(); ++y) ties |= area[e[x]] == area[e[y]];
        }
        if (ties) continue;
        ++checked;
        const auto a = step2_integrate(seg, step1, cam, prof, g);
        const auto b = step2_integrate(seg, pstep, pcam, prof, pg);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == perm[a[i]]);
    }
    CHECK(checked >= 10);
}

TEST_CASE("fuse composes both steps; validation") {
    Rng rng = make_rng(38, "test/fuse");
    const auto seg = random_segments(rng, 10, 10, 4);
    const auto logits = random_logits(rng, 10, 10, 6.0);
    const auto cam = random_cam(rng, 10, 10);
    const ThresholdProfile prof;
    const CategoryGroups groups;
    const auto out = fuse(seg, logits, cam, prof, groups);
    CHECK(out.filtered == confidence_filter(logits, prof.tau_adapted));
    CHECK(out.step1 == step1_vote(seg, out.filtered));
    CHECK(out.step1_map == contours::rasterize(seg, out.step1));
    CHECK(out.pseudo == step2_integrate(seg, out.step1, cam, prof, groups));
    CHECK(fuse(seg, logits, cam, prof, groups).pseudo == out.pseudo);

    ThresholdProfile bad = prof;
    bad.tau_cam = 1.5;
    CHECK_THROWS_AS(fuse(seg, logits, cam, bad, groups), Error);
    bad = prof;
    bad.other.peak = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);
    CategoryGroups overlap;
    overlap.small.insert(kWall);
    CHECK_THROWS_AS(step2_integrate(seg, out.step1, cam, prof, overlap), Error);
    auto out_of_range = cam;
    out_of_range.at(0, 0) = 1.2;
    CHECK_THROWS_AS(step2_integrate(seg, out.step1, out_of_range, prof, groups), Error);
    CHECK_THROWS_AS(step2_integrate(seg, StepOneResult(seg.count + 1), cam, prof, groups), Error);
    CHECK_THROWS_AS(fuse(seg, random_logits(rng, 10, 9, 1.0), cam, prof, groups), Error);
}
