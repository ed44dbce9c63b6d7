// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "algorithm1_oracle.hpp"
#include "plf/depth_adapt.hpp"
#include "plf/eval.hpp"
#include "plf/fusion.hpp"
#include "plf/losses.hpp"
#include "plf/pipeline.hpp"
#include "plf/rng.hpp"
#include "plf/scene.hpp"

using namespace plf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

char buf[512];

template <typename... A>
std::string fmt(const char* f, A... a) {
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome eta_invariants() {
    Rng rng = make_rng(101, "acceptance/eta");
    std::size_t bad_range = 0;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto h = static_cast<std::size_t>(uniform_int(rng, 1, 24));
        const auto w = static_cast<std::size_t>(uniform_int(rng, 2, 24));
        Grid<double> d(h, w);
        for (auto& v : d.data()) v = uniform01(rng) < 0.1 ? 0.0 : uniform(rng, 0.3, 10.0);
        d[0] = 0.5;
        d[1] = 7.5;  // at least two distinct valid values
        const DepthMap dm(d);
        const auto n = depth::minmax_normalize(dm);
        double lo = 2, hi = -2;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (n.valid[i]) {
                lo = std::min(lo, n.values[i]);
                hi = std::max(hi, n.values[i]);
            }
        bad_range += !(lo == -1.0 && hi == 1.0);

        const double a = std::max(1e-3, uniform(rng, 0.0, 10.0));
        const double b = uniform(rng, -5.0, 5.0);
        Grid<double> ab(h, w);
        for (std::size_t i = 0; i < d.size(); ++i) ab[i] = a * d[i] + b;
        const auto n2 = depth::normalize_values(ab, &dm.valid);
        for (std::size_t i = 0; i < d.size(); ++i) worst = std::max(worst, std::abs(n2[i] - n.values[i]));
    }
    return {bad_range == 0 && worst < 1e-12,
            fmt("1000 maps, range violations %zu, max |eta(aI+b)-eta(I)| %.2e", bad_range, worst)};
}

Outcome adversarial_equilibrium() {
    const std::vector<double> half(16, 0.5);
    const double g = depth::gan_loss(half, half);
    const double err = std::abs(g - (-2.0 * std::log(2.0)));

    Rng rng = make_rng(102, "acceptance/cycle");
    std::vector<NormalizedDepthMap> syn, real, syn_rt, real_rt;
    const auto n_id = depth::MappingParams::identity(depth::MappingRole::Noise, 0);
    const auto r_id = depth::MappingParams::identity(depth::MappingRole::Restore, 0);
    for (int k = 0; k < 8; ++k) {
        Grid<double> a(6, 7), b(6, 7);
        for (auto& v : a.data()) v = uniform(rng, -1.0, 1.0);
        for (auto& v : b.data()) v = uniform(rng, -1.0, 1.0);
        syn.emplace_back(a);
        real.emplace_back(b);
        syn_rt.push_back(depth::apply_mapping(r_id, depth::apply_mapping(n_id, syn.back())));
        real_rt.push_back(depth::apply_mapping(n_id, depth::apply_mapping(r_id, real.back())));
    }
    const double cyc = depth::cycle_loss(syn, syn_rt, real, real_rt);
    return {err < 1e-9 && cyc == 0.0, fmt("gan_loss(0.5) + 2 ln 2 = %.2e, identity cycle loss %g", err, cyc)};
}

depth::AdaptationModel random_model(Rng& rng, std::size_t hidden, bool renorm) {
    depth::AdaptationModel m;
    m.noise = depth::MappingParams::random(depth::MappingRole::Noise, hidden, rng, 0.2);
    m.restore = depth::MappingParams::random(depth::MappingRole::Restore, hidden, rng, 0.2);
    for (auto& v : m.d_noise.w) v = uniform(rng, -1.0, 1.0);
    for (auto& v : m.d_restore.w) v = uniform(rng, -1.0, 1.0);
    m.renormalize = renorm;
    return m;
}

depth::AdaptationBatch random_batch(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
    depth::AdaptationBatch b;
    for (std::size_t k = 0; k < n; ++k)
        for (auto* set : {&b.syn, &b.real}) {
            Grid<double> g(h, w);
            for (auto& v : g.data()) v = uniform01(rng);
            set->push_back(depth::normalize_values(g, nullptr));
        }
    return b;
}

Outcome gradient_correctness() {
    Rng rng = make_rng(103, "acceptance/grad");
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto m = random_model(rng, t % 5 == 4 ? 2 : 0, t % 2 == 0);
        const auto eval = depth::objective_evaluator(m, random_batch(rng, 3, 3, 4));
        worst = std::max(worst, depth::grad_check(eval, m.flatten(), 1e-5));
    }

    // 10% fault on the largest gradient coordinate
    const auto m = random_model(rng, 0, true);
    const auto eval = depth::objective_evaluator(m, random_batch(rng, 3, 3, 4));
    const auto params = m.flatten();
    std::vector<double> g;
    eval(params, g);
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (std::abs(g[i]) > std::abs(g[k])) k = i;
    const depth::LossEvaluator faulty = [&](std::span<const double> p, std::vector<double>& out) {
        const double v = eval(p, out);
        out[k] *= 1.1;
        return v;
    };
    const double fault = depth::grad_check(faulty, params, 1e-5);
    return {worst < 1e-4 && fault >= 0.05,
            fmt("50 instances, max rel err %.2e; injected fault err %.3f (|g|=%.2f)", worst, fault, std::abs(g[k]))};
}

Outcome toy_training() {
    const auto train = depth::bias_shift_fixture(64, 16, 0.3, derive_seed(7, "toy-train"));
    const auto held = depth::bias_shift_fixture(64, 16, 0.3, derive_seed(7, "toy-held"));
    depth::TrainConfig cfg;
    cfg.steps = 2000;
    cfg.seed = 7;
    cfg.renormalize = false;
    const auto a = depth::train_minmax(train.syn, train.real, cfg);
    const auto b = depth::train_minmax(train.syn, train.real, cfg);
    bool identical = a.trace.size() == b.trace.size() && a.trace.size() == 2000;
    for (std::size_t i = 0; identical && i < a.trace.size(); ++i)
        identical = std::memcmp(&a.trace[i], &b.trace[i], sizeof(depth::TraceRecord)) == 0;
    const double acc = depth::discriminator_accuracy(a.model, held.syn, held.real);
    return {acc < 0.65 && identical,
            fmt("held-out D accuracy %.3f, learned offset %.3f, traces bit-identical: %s", acc,
                a.model.noise.values[9], identical ? "yes" : "no")};
}

contours::SegmentMap random_segments(Rng& rng, std::size_t h, std::size_t w) {
    Grid<std::uint32_t> raw(h, w, 0);
    const auto cuts = uniform_int(rng, 0, 4);
    for (int t = 0; t < cuts; ++t) {
        const auto r0 = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h) - 1));
        const auto c0 = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w) - 1));
        for (std::size_t r = r0; r < h; ++r)
            for (std::size_t c = c0; c < w; ++c) raw(r, c) = static_cast<std::uint32_t>(t + 1);
    }
    return contours::canonicalize(raw);
}

Outcome algorithm1_equivalence() {
    Rng rng = make_rng(105, "acceptance/algorithm1");
    const fusion::CategoryGroups groups;
    const std::vector<Label> sb{2, 4, 11}, small{1, 7};
    std::size_t mismatches = 0, replaced = 0;
    for (int t = 0; t < 200; ++t) {
        const auto h = static_cast<std::size_t>(uniform_int(rng, 1, 16));
        const auto w = static_cast<std::size_t>(uniform_int(rng, 1, 16));
        const auto seg = random_segments(rng, h, w);
        ScoreVolume cam(kNumClasses, h, w);
        for (auto& x : cam.data()) {
            const double u = uniform01(rng);
            x = u < 0.2 ? 0.0 : u > 0.9 ? 1.0 : uniform01(rng);
        }
        fusion::StepOneResult step1(seg.count);
        for (auto& l : step1) l = uniform01(rng) < 0.3 ? kUnknown : static_cast<Label>(uniform_int(rng, 0, 12));
        fusion::ThresholdProfile prof;
        prof.tau_cam = uniform(rng, 0.2, 0.8);
        for (auto* p : {&prof.unknown, &prof.scene_bounds, &prof.other}) *p = {uniform(rng, 0.3, 1.0), uniform(rng, 0.0, 0.8)};
        const auto got = fusion::step2_integrate(seg, step1, cam, prof, groups);
        const auto want = oracle::algorithm1(seg, step1, cam, prof, sb, small);
        for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != want[i];
        replaced += !(got == contours::rasterize(seg, step1));
    }
    return {mismatches == 0, fmt("200 instances, %zu pixel mismatches (%zu instances with replacements)", mismatches,
                                 replaced)};
}

Outcome small_object_tie_break() {
    constexpr Label books = 1, table = 9;
    const std::size_t h = 80, w = 100;
    Grid<std::uint32_t> raw(h, w, 0);
    for (std::size_t r = 20; r < 28; ++r)
        for (std::size_t c = 30; c < 40; ++c) raw(r, c) = 1;
    const auto seg = contours::canonicalize(raw);
    const fusion::StepOneResult step1{11, table};
    const fusion::ThresholdProfile prof;
    const fusion::CategoryGroups groups;

    // wide: responds over 5000 pixels covering the patch; narrow: the top
    // `rows` rows of the patch only
    auto build = [&](Label wide, Label narrow, std::size_t rows) {
        ScoreVolume cam(kNumClasses, h, w, 0.0);
        for (std::size_t i = 0; i < 5000; ++i) cam.at(wide, i) = 0.95;
        for (std::size_t r = 20; r < 20 + rows; ++r)
            for (std::size_t c = 30; c < 40; ++c) cam(narrow, r, c) = 0.99;
        return cam;
    };
    const auto cam = build(table, books, 4);
    const auto area = fusion::cam_area(cam, prof.tau_cam);
    const auto d = fusion::step2_decisions(seg, step1, cam, prof, groups);
    const bool both = d[1].electable == ClassSet{books, table};
    const bool books_wins = d[1].label == books;

    // books everywhere, table only on the patch (where it is the top proposal)
    const auto flipped = build(books, table, 8);
    const auto farea = fusion::cam_area(flipped, prof.tau_cam);
    const auto fd = fusion::step2_decisions(seg, step1, flipped, prof, groups);
    const bool flip_both = fd[1].electable == ClassSet{books, table};
    const bool table_wins = fd[1].label == table;
    return {both && books_wins && flip_both && table_wins,
            fmt("A_table=%zu A_books=%zu -> %s; flipped A_table=%zu A_books=%zu -> %s", area[table], area[books],
                std::string(class_name(d[1].label)).c_str(), farea[table], farea[books],
                std::string(class_name(fd[1].label)).c_str())};
}

Outcome table4_arithmetic() {
    eval::MetricReport r;
    r.ga = 0.8086;
    eval::CoverRatio cover;
    cover.global = 0.7277;
    cover.has_per_class = true;
    r.cover = cover;
    const double eff = 100.0 * eval::effective_metrics(r).ga;
    const bool arith = std::abs(eff - 58.84) <= 0.01;

    std::size_t unequal = 0;
    double ga = 0, ga_at = 0;
    const scene::SceneSpec spec;
    const fusion::ThresholdProfile prof;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto s = scene::generate_scene(derive_seed(5, "fixture", i), spec);
        const auto seg = contours::extract_segments(s.ucm, contours::kDefaultTauUcm);
        const auto pseudo = fusion::fuse(seg, s.logits, s.cam, prof, {}).pseudo;
        ga = eval::metrics(eval::confusion(pseudo, s.gt), {}, eval::AbstentionPolicy::Exclude).ga;
        ga_at = eval::restricted_metrics(pseudo, s.gt, pseudo).ga;
        unequal += ga != ga_at;
    }
    return {arith && unequal == 0,
            fmt("effective GA %.4f%%; GA == GA@pseudo on 10 fixtures (%zu unequal, last %.4f / %.4f)", eff, unequal, ga,
                ga_at)};
}

Outcome metric_oracle() {
    eval::ConfusionMatrix cm;
    cm.cells[0][0] = 3;
    cm.cells[0][1] = 1;
    cm.cells[1][0] = 1;
    cm.cells[1][1] = 3;
    const auto r = eval::metrics(cm);
    bool ok = std::abs(r.miou - 0.6) < 1e-12 && std::abs(r.ga - 0.75) < 1e-12 && std::abs(*r.iou[0] - 0.6) < 1e-12 &&
              std::abs(*r.iou[1] - 0.6) < 1e-12;

    eval::ConfusionMatrix diag;
    for (std::size_t c = 0; c < kNumClasses; ++c) diag.cells[c][c] = c + 1;
    const auto p = eval::metrics(diag);
    ok = ok && p.ga == 1.0 && p.miou == 1.0;

    // window errors: exclusion moves the mean only
    eval::ConfusionMatrix wcm;
    wcm.cells[0][0] = 5;
    wcm.cells[12][11] = 3;
    wcm.cells[12][12] = 1;
    wcm.cells[11][11] = 6;
    const auto a = eval::metrics(wcm);
    const auto b = eval::metrics(wcm, ClassSet{12});
    const bool excl = a.iou == b.iou && a.ga == b.ga && a.miou != b.miou &&
                      std::abs(b.miou - (1.0 + 6.0 / 9.0) / 2.0) < 1e-12 &&
                      std::abs(a.miou - (1.0 + 6.0 / 9.0 + 0.25) / 3.0) < 1e-12;
    return {ok && excl, fmt("[[3,1],[1,3]] -> mIoU %.12f GA %.12f; exclusion %s", r.miou, r.ga,
                            excl ? "affects only the mean" : "WRONG")};
}

Outcome loss_properties() {
    losses::ClassWeights ones{};
    ones.fill(1.0);
    const ScoreVolume flat(kNumClasses, 2, 3, 0.7);
    const double uniform_err = std::abs(losses::weighted_nll(flat, LabelMap(2, 3, 4), ones).loss - std::log(13.0));

    Rng rng = make_rng(109, "acceptance/loss");
    double shift_err = 0, grad_err = 0;
    bool mask_exact = true;
    for (int t = 0; t < 20; ++t) {
        ScoreVolume logits(kNumClasses, 2, 2);
        for (auto& x : logits.data()) x = uniform(rng, -3.0, 3.0);
        LabelMap labels(2, 2);
        for (auto& l : labels.data()) l = uniform01(rng) < 0.3 ? kUnknown : static_cast<Label>(uniform_int(rng, 0, 12));
        labels[0] = static_cast<Label>(uniform_int(rng, 0, 12));
        losses::ClassWeights w{};
        for (auto& x : w) x = uniform(rng, 0.5, 10.0);
        std::vector<double> g;
        const double base = losses::weighted_nll(logits, labels, w, &g).loss;

        auto shifted = logits;
        for (std::size_t i = 0; i < 4; ++i) {
            const double k = uniform(rng, -20.0, 20.0);
            for (std::size_t c = 0; c < kNumClasses; ++c) shifted.at(c, i) += k;
        }
        shift_err = std::max(shift_err, std::abs(losses::weighted_nll(shifted, labels, w).loss - base));

        auto masked = logits;
        for (std::size_t i = 0; i < 4; ++i)
            if (labels[i] == kUnknown)
                for (std::size_t c = 0; c < kNumClasses; ++c) masked.at(c, i) = uniform(rng, -50.0, 50.0);
        mask_exact = mask_exact && losses::weighted_nll(masked, labels, w).loss == base;

        for (std::size_t k = 0; k < g.size(); ++k) {
            auto probe = logits;
            probe.data()[k] += 1e-5;
            const double up = losses::weighted_nll(probe, labels, w).loss;
            probe.data()[k] -= 2e-5;
            const double down = losses::weighted_nll(probe, labels, w).loss;
            const double fd = (up - down) / 2e-5;
            grad_err = std::max(grad_err, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    return {uniform_err < 1e-10 && shift_err < 1e-10 && mask_exact && grad_err < 1e-6,
            fmt("ln13 err %.1e, shift err %.1e, masking %s, grad rel err %.1e", uniform_err, shift_err,
                mask_exact ? "exact" : "CHANGED", grad_err)};
}

Outcome complementarity() {
    const scene::SceneSpec spec;
    const fusion::ThresholdProfile prof;
    const fusion::CategoryGroups groups;
    std::size_t wins = 0;
    double margin = 1.0;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto s = scene::generate_scene(derive_seed(1, "fixture", i), spec);
        const auto seg = contours::extract_segments(s.ucm, contours::kDefaultTauUcm);
        const auto a = pipeline::ablate(seg, s.logits, s.cam, prof, groups);
        const double fused = eval::metrics(eval::confusion(a.fused, s.gt)).miou;
        const double d = eval::metrics(eval::confusion(a.depth_only, s.gt)).miou;
        const double c = eval::metrics(eval::confusion(a.cam_only, s.gt)).miou;
        wins += fused > d && fused > c;
        margin = std::min(margin, fused - std::max(d, c));
    }
    return {wins == 20, fmt("fused beats both ablations on %zu/20 fixtures, smallest margin %.4f", wins, margin)};
}

Outcome refine_idempotence() {
    Rng rng = make_rng(111, "acceptance/refine");
    std::size_t broken = 0;
    for (int t = 0; t < 100; ++t) {
        const auto h = static_cast<std::size_t>(uniform_int(rng, 1, 20));
        const auto w = static_cast<std::size_t>(uniform_int(rng, 1, 20));
        Grid<double> ucm(h, w);
        for (auto& v : ucm.data()) v = uniform01(rng) < 0.25 ? 1.0 : 0.0;
        const auto seg = contours::extract_segments(ucm, 0.5);
        LabelMap pred(h, w);
        for (auto& l : pred.data()) l = uniform01(rng) < 0.2 ? kUnknown : static_cast<Label>(uniform_int(rng, 0, 12));
        const auto once = eval::ucm_refine(pred, seg);
        broken += !(eval::ucm_refine(once, seg) == once);
    }
    return {broken == 0, fmt("100 instances, %zu not idempotent", broken)};
}

// ---------------------------------------------------------------------------
// CLI determinism

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + PLF_CLI_PATH + "\" " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

Outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "plf_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    if (run_cli("gen-fixture --seed 12 --count 2 --out " + q(root / "inputs")) != 0) return {false, "gen-fixture failed"};
    const fs::path in = root / "inputs" / "scene_0000";
    {
        std::ofstream cfg(root / "config.json");
        cfg << R"({"seed": 5, "workers": 3, "refine": true,
                   "noise": {"hole_rate": 0.05, "hole_blob_radius": 2, "quantization_step": 0.01,
                             "lateral_jitter_sigma": 0.7},
                   "fixture": {"count": 3, "height": 32, "width": 48}})";
    }
    const std::string cfg = " --config " + q(root / "config.json");

    // the second run writes into b/; files under a/ feed downstream stages
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-fixture", "gen-fixture --seed 12 --count 2"},
        {"normalize", "normalize --depth " + q(in / "depth.png")},
        {"simulate-noise", "simulate-noise --seed 9 --hole-rate 0.1 --hole-radius 1.5 --quant-step 0.02 "
                           "--jitter-sigma 0.6 --depth " + q(in / "depth.png")},
        {"train-toy", "train-toy --seed 3 --steps 300 --hidden 2"},
        {"cam", "cam --features " + q(in / "features.plf") + " --head " + q(in / "head.plf")},
        {"segment", "segment --ucm " + q(in / "ucm.plf")},
        {"filter", "filter --logits " + q(in / "logits.plf")},
        {"fuse", "fuse --segments @segment/segments.plf --logits " + q(in / "logits.plf") + " --cam @cam/cam.plf"},
        {"eval", "eval --pred @fuse/pseudo.png --gt " + q(in / "gt.png")},
        {"refine", "refine --pred @fuse/step1.png --segments @segment/segments.plf"},
        {"pipeline", "pipeline" + cfg},
    };
    std::size_t differing = 0, failed = 0, files = 0;
    std::string which;
    for (const auto& [name, args] : commands) {
        std::map<std::string, std::string> runs[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path out = root / (k == 0 ? "a" : "b") / name;
            std::string a = args;
            for (std::size_t at; (at = a.find('@')) != std::string::npos;) {
                const auto end = a.find(' ', at);
                const std::string ref = a.substr(at + 1, end == std::string::npos ? std::string::npos : end - at - 1);
                a.replace(at, ref.size() + 1, q(root / "a" / ref));
            }
            if (run_cli(a + " --out " + q(out)) != 0) {
                ++failed;
                which += " " + name + "(exit)";
                break;
            }
            runs[k] = tree(out);
        }
        if (runs[0].empty() || runs[0] != runs[1]) {
            ++differing;
            which += " " + name;
        }
        files += runs[0].size();
    }
    return {differing == 0 && failed == 0,
            fmt("%zu subcommands run twice, %zu output files compared, %zu differing%s", commands.size(), files,
                differing, which.c_str())};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
        double budget_s;  // 0 = no runtime bound
    };
    const std::vector<Criterion> criteria = {
        {1, "eta invariants", eta_invariants, 5},
        {2, "adversarial equilibrium", adversarial_equilibrium, 0},
        {3, "gradient correctness", gradient_correctness, 120},
        {4, "toy min-max training", toy_training, 180},
        {5, "replacement-rule oracle equivalence", algorithm1_equivalence, 30},
        {6, "small-object tie-break", small_object_tie_break, 0},
        {7, "effective and restricted GA", table4_arithmetic, 0},
        {8, "metric oracle", metric_oracle, 0},
        {9, "loss properties", loss_properties, 0},
        {10, "end-to-end complementarity", complementarity, 60},
        {11, "refine idempotence", refine_idempotence, 0},
        {12, "CLI determinism", cli_determinism, 0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs >= c.budget_s) {
            o.pass = false;
            o.detail += fmt("; over the %.0f s budget", c.budget_s);
        }
        std::printf("%s %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
