#pragma once
// Pipeline configuration (one JSON document) and end-to-end orchestration:
// normalize -> optional sensor noise -> confidence filter -> segments ->
// first / second integration step -> evaluation (+ optional refinement),
// with every intermediate written to disk.

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "plf/contours.hpp"
#include "plf/core.hpp"
#include "plf/depth_adapt.hpp"
#include "plf/eval.hpp"
#include "plf/fusion.hpp"
#include "plf/png_io.hpp"
#include "plf/scene.hpp"
#include "plf/tensor_io.hpp"
#include "plf/weak_local.hpp"

namespace plf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct InputPaths {
    fs::path depth;     // 16-bit PNG (mm) or TensorFile (m)
    fs::path logits;    // TensorFile 13 x H x W
    fs::path cam;       // TensorFile 13 x H x W, or
    fs::path features;  //   TensorFile d x h x w together with
    fs::path head;      //   TensorFile C x (d + 1), last column = bias
    fs::path ucm;       // PNG or TensorFile H x W
    fs::path gt;        // 8-bit label PNG or u8 TensorFile
};

struct FixtureConfig {
    std::size_t count = 4;
    std::uint64_t seed = 1;
    scene::SceneSpec spec;
};

struct PipelineConfig {
    InputPaths inputs;
    fusion::ThresholdProfile profile;
    fusion::CategoryGroups groups;
    double tau_ucm = contours::kDefaultTauUcm;
    std::optional<depth::NoiseParams> noise;
    ClassSet exclude;
    bool refine = false;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::optional<FixtureConfig> fixture;

    void validate() const {
        profile.validate();
        groups.validate();
        if (!(tau_ucm >= 0.0 && tau_ucm <= 1.0)) throw Error(ErrorCode::InvalidProfile, "tau_ucm must lie in [0,1]");
        if (noise) noise->validate();
        if (fixture) fixture->spec.validate();
        if (workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be positive");
    }
};

// ---------------------------------------------------------------------------
// JSON config
// ---------------------------------------------------------------------------

namespace detail {

inline ClassSet class_set_from_json(const json& j) {
    ClassSet s;
    for (const auto& v : j) {
        const auto l = class_from_name(v.get<std::string>());
        if (!l) throw Error(ErrorCode::InvalidArgument, "unknown class name " + v.get<std::string>());
        s.insert(*l);
    }
    return s;
}

inline void read_pair(const json& j, const char* key, fusion::ThresholdPair& p) {
    if (!j.contains(key)) return;
    p.peak = j[key].value("peak", p.peak);
    p.rate = j[key].value("rate", p.rate);
}

}  // namespace detail

inline scene::SceneSpec scene_spec_from_json(const json& j, scene::SceneSpec s = {}) {
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.objects = j.value("objects", s.objects);
    s.depth_error_rate = j.value("depth_error_rate", s.depth_error_rate);
    s.cam_error_rate = j.value("cam_error_rate", s.cam_error_rate);
    s.complementary = j.value("complementary", s.complementary);
    return s;
}

inline depth::NoiseParams noise_from_json(const json& j, depth::NoiseParams p = {}) {
    p.hole_rate = j.value("hole_rate", p.hole_rate);
    p.hole_blob_radius = j.value("hole_blob_radius", p.hole_blob_radius);
    p.quantization_step = j.value("quantization_step", p.quantization_step);
    p.lateral_jitter_sigma = j.value("lateral_jitter_sigma", p.lateral_jitter_sigma);
    p.seed = j.value("seed", p.seed);
    return p;
}

inline PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.refine = j.value("refine", c.refine);
        if (j.contains("thresholds")) {
            const auto& t = j["thresholds"];
            c.profile.tau_adapted = t.value("tau_adapted", c.profile.tau_adapted);
            c.profile.tau_cam = t.value("tau_cam", c.profile.tau_cam);
            c.tau_ucm = t.value("tau_ucm", c.tau_ucm);
            detail::read_pair(t, "unknown", c.profile.unknown);
            detail::read_pair(t, "scene_bounds", c.profile.scene_bounds);
            detail::read_pair(t, "other", c.profile.other);
        }
        if (j.contains("groups")) {
            const auto& g = j["groups"];
            if (g.contains("scene_bounds")) c.groups.scene_bounds = detail::class_set_from_json(g["scene_bounds"]);
            if (g.contains("small")) c.groups.small = detail::class_set_from_json(g["small"]);
        }
        if (j.contains("exclude")) c.exclude = detail::class_set_from_json(j["exclude"]);
        if (j.contains("noise")) {
            c.noise = noise_from_json(j["noise"]);
            if (!j["noise"].contains("seed")) c.noise->seed = c.seed;
        }
        if (j.contains("inputs")) {
            const auto& in = j["inputs"];
            auto path = [&](const char* key, fs::path& out) {
                if (in.contains(key)) out = in[key].get<std::string>();
            };
            path("depth", c.inputs.depth);
            path("logits", c.inputs.logits);
            path("cam", c.inputs.cam);
            path("features", c.inputs.features);
            path("head", c.inputs.head);
            path("ucm", c.inputs.ucm);
            path("gt", c.inputs.gt);
        }
        if (j.contains("fixture")) {
            FixtureConfig f;
            f.count = j["fixture"].value("count", f.count);
            f.seed = j["fixture"].value("seed", c.seed);
            f.spec = scene_spec_from_json(j["fixture"]);
            c.fixture = f;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
    return c;
}

inline json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Loading inputs by extension: .png or TensorFile otherwise
// ---------------------------------------------------------------------------

inline bool is_png(const fs::path& p) { return p.extension() == ".png"; }

inline void require_path(const fs::path& p, std::string_view what) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " path missing");
    if (!fs::exists(p)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + p.string());
}

inline DepthMap load_depth(const fs::path& p) {
    require_path(p, "depth");
    return is_png(p) ? read_depth_png(p) : tensor_to_depth(read_tensor(p));
}

inline LabelMap load_labels(const fs::path& p) {
    require_path(p, "label map");
    return is_png(p) ? read_label_png(p) : tensor_to_labels(read_tensor(p));
}

inline Grid<double> load_strength(const fs::path& p) {
    require_path(p, "ucm");
    return is_png(p) ? read_strength_png(p) : tensor_to_grid(read_tensor(p));
}

inline ScoreVolume load_volume(const fs::path& p, std::string_view what) {
    require_path(p, what);
    return tensor_to_volume(read_tensor(p));
}

inline weak::FeatureVolume load_features(const fs::path& p) {
    require_path(p, "features");
    const Tensor t = read_tensor(p);
    require_rank(t, 3, "features");
    return weak::FeatureVolume(t.shape[0], t.shape[1], t.shape[2], t.to_double());
}

inline Tensor head_tensor(const weak::HeadWeights& w) {
    std::vector<double> v;
    v.reserve(w.classes * (w.depth + 1));
    for (std::size_t c = 0; c < w.classes; ++c) {
        for (std::size_t d = 0; d < w.depth; ++d) v.push_back(w.w(c, d));
        v.push_back(w.bias[c]);
    }
    return Tensor::make<double>({static_cast<std::uint32_t>(w.classes), static_cast<std::uint32_t>(w.depth + 1)},
                                std::move(v));
}

inline weak::HeadWeights load_head(const fs::path& p) {
    require_path(p, "head");
    const Tensor t = read_tensor(p);
    require_rank(t, 2, "head");
    if (t.shape[1] < 2) throw Error(ErrorCode::ShapeMismatch, "head needs at least one weight column and a bias");
    const auto v = t.to_double();
    weak::HeadWeights w;
    w.classes = t.shape[0];
    w.depth = t.shape[1] - 1;
    for (std::size_t c = 0; c < w.classes; ++c) {
        for (std::size_t d = 0; d < w.depth; ++d) w.weights.push_back(v[c * (w.depth + 1) + d]);
        w.bias.push_back(v[c * (w.depth + 1) + w.depth]);
    }
    w.validate();
    return w;
}

inline Tensor segments_tensor(const contours::SegmentMap& seg) {
    if (!contours::fits_u16(seg)) throw Error(ErrorCode::InvalidArgument, "more than 65536 segments");
    std::vector<std::uint16_t> v(seg.ids.data().begin(), seg.ids.data().end());
    return Tensor::make<std::uint16_t>({static_cast<std::uint32_t>(seg.height()), static_cast<std::uint32_t>(seg.width())},
                                       std::move(v));
}

inline contours::SegmentMap load_segments(const fs::path& p) {
    require_path(p, "segments");
    const Tensor t = read_tensor(p);
    require_rank(t, 2, "segments");
    const auto& v = t.as<std::uint16_t>();
    return contours::canonicalize(Grid<std::uint32_t>(t.shape[0], t.shape[1], std::vector<std::uint32_t>(v.begin(), v.end())));
}

inline void save_features(const fs::path& p, const weak::FeatureVolume& f) {
    write_tensor(p, Tensor::make<double>({static_cast<std::uint32_t>(f.depth()), static_cast<std::uint32_t>(f.height()),
                                          static_cast<std::uint32_t>(f.width())},
                                         f.data()));
}

// Per-pixel argmax of a score volume (ties to the lowest class).
inline LabelMap argmax_labels(const ScoreVolume& v) {
    LabelMap out(v.height(), v.width());
    for (std::size_t i = 0; i < v.pixels(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < v.channels(); ++c)
            if (v.at(c, i) > v.at(best, i)) best = c;
        out[i] = static_cast<Label>(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct SceneInputs {
    DepthMap depth;
    ScoreVolume logits;
    ScoreVolume cam;
    Grid<double> ucm;
    std::optional<LabelMap> gt;
};

// Confusions and cover counts for one image; additive across images.
struct Tally {
    eval::ConfusionMatrix pseudo;
    eval::ConfusionMatrix pseudo_at_mask;  // pseudo evaluated where it is labeled
    eval::ConfusionMatrix step1;
    eval::ConfusionMatrix refined;
    eval::CoverCounts cover;
    bool refine = false;

    Tally& operator+=(const Tally& o) {
        pseudo += o.pseudo;
        pseudo_at_mask += o.pseudo_at_mask;
        step1 += o.step1;
        refined += o.refined;
        cover += o.cover;
        refine = refine || o.refine;
        return *this;
    }
};

struct SceneResult {
    fusion::FusionOutput fusion;
    contours::SegmentMap segments;
    std::optional<LabelMap> refined;
    std::optional<Tally> tally;
};

inline SceneInputs load_inputs(const InputPaths& in) {
    SceneInputs s;
    s.depth = load_depth(in.depth);
    s.logits = load_volume(in.logits, "logits");
    if (!in.cam.empty()) {
        s.cam = load_volume(in.cam, "cam");
    } else {
        const auto f = load_features(in.features);
        // CAMs are stored as f32; carry the same precision in memory so a
        // run from files and a run from features agree.
        s.cam = tensor_to_volume(volume_tensor(weak::compute_cam(f, load_head(in.head), s.depth.height(), s.depth.width())));
    }
    s.ucm = load_strength(in.ucm);
    if (!in.gt.empty()) s.gt = load_labels(in.gt);
    return s;
}

inline json report_json(const eval::ConfusionMatrix& cm, const ClassSet& exclude,
                        const std::optional<eval::CoverRatio>& cover = std::nullopt,
                        eval::AbstentionPolicy policy = eval::AbstentionPolicy::CountAsWrong) {
    eval::MetricReport r = eval::metrics(cm, exclude, policy);
    if (cover) eval::attach_cover(r, *cover);
    return eval::to_json(r);
}

// Metric document for a tally: pseudo labels under both abstention policies,
// restricted to the labeled pixels, and the step-1 / refined baselines.
inline json tally_json(const Tally& t, const ClassSet& exclude) {
    json j;
    const auto cover = t.cover.ratio();
    j["pseudo"] = report_json(t.pseudo, exclude, cover);
    j["pseudo_abstain_excluded"] = report_json(t.pseudo, exclude, cover, eval::AbstentionPolicy::Exclude);
    if (t.pseudo_at_mask.total() > 0) j["pseudo_at_pseudo"] = report_json(t.pseudo_at_mask, exclude);
    j["step1"] = report_json(t.step1, exclude);
    if (t.refine) j["refined"] = report_json(t.refined, exclude);
    return j;
}

inline std::string tally_table(const Tally& t, const ClassSet& exclude) {
    eval::MetricReport pseudo = eval::metrics(t.pseudo, exclude);
    eval::attach_cover(pseudo, t.cover.ratio());
    std::string out = eval::to_table(pseudo, "pseudo");
    out += eval::to_table(eval::metrics(t.step1, exclude), "step1");
    if (t.refine) out += eval::to_table(eval::metrics(t.refined, exclude), "refined");
    return out;
}

// Runs every stage on one scene and writes the intermediates into `out`.
inline SceneResult run_scene(const SceneInputs& in, const PipelineConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    DepthMap depth = in.depth;
    if (cfg.noise) {
        depth = depth::simulate_sensor_noise(depth, *cfg.noise);
        write_depth_png(out / "noisy_depth.png", depth);
    }
    const NormalizedDepthMap norm = depth::minmax_normalize(depth);
    write_tensor(out / "normalized.plf", grid_tensor(norm.values));
    write_tensor(out / "valid_mask.plf", grid_tensor(norm.valid));
    write_tensor(out / "cam.plf", volume_tensor(in.cam));

    SceneResult r;
    r.segments = contours::extract_segments(in.ucm, cfg.tau_ucm);
    write_tensor(out / "segments.plf", segments_tensor(r.segments));
    r.fusion = fusion::fuse(r.segments, in.logits, in.cam, cfg.profile, cfg.groups);
    write_label_png(out / "filtered.png", r.fusion.filtered);
    write_label_png(out / "step1.png", r.fusion.step1_map);
    write_label_png(out / "pseudo.png", r.fusion.pseudo);
    if (cfg.refine) {
        r.refined = eval::ucm_refine(argmax_labels(in.logits), r.segments);
        write_label_png(out / "refined.png", *r.refined);
    }

    if (in.gt) {
        Tally t;
        t.pseudo = eval::confusion(r.fusion.pseudo, *in.gt);
        t.pseudo_at_mask = eval::confusion(r.fusion.pseudo, *in.gt, {}, &r.fusion.pseudo);
        t.step1 = eval::confusion(r.fusion.step1_map, *in.gt);
        if (r.refined) t.refined = eval::confusion(*r.refined, *in.gt);
        t.refine = cfg.refine;
        t.cover = eval::cover_counts(r.fusion.pseudo, &*in.gt);
        write_json(out / "metrics.json", tally_json(t, cfg.exclude));
        r.tally = t;
    }
    return r;
}

// Depth-only and CAM-only ablations of the integration on one scene.
struct Ablation {
    LabelMap depth_only;  // rasterized first step
    LabelMap cam_only;    // second step with an all-unknown first step
    LabelMap fused;
};

inline Ablation ablate(const contours::SegmentMap& seg, const ScoreVolume& logits, const ScoreVolume& cam,
                       const fusion::ThresholdProfile& prof, const fusion::CategoryGroups& groups) {
    const auto full = fusion::fuse(seg, logits, cam, prof, groups);
    const fusion::StepOneResult none(seg.count, kUnknown);
    return {full.step1_map, fusion::step2_integrate(seg, none, cam, prof, groups), full.pseudo};
}

inline void write_scene_inputs(const scene::SyntheticScene& s, const fs::path& dir) {
    fs::create_directories(dir);
    write_depth_png(dir / "depth.png", s.depth);
    write_label_png(dir / "gt.png", s.gt);
    write_tensor(dir / "ucm.plf", grid_tensor(s.ucm));
    write_tensor(dir / "logits.plf", volume_tensor(s.logits));
    save_features(dir / "features.plf", s.features);
    write_tensor(dir / "head.plf", head_tensor(s.head));
}

inline InputPaths scene_input_paths(const fs::path& dir) {
    return {dir / "depth.png", dir / "logits.plf", {}, dir / "features.plf", dir / "head.plf", dir / "ucm.plf",
            dir / "gt.png"};
}

// Runs `fn(i)` for i in [0, n) on `workers` threads; the first exception
// (lowest index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t extra = std::min(workers, n) > 0 ? std::min(workers, n) - 1 : 0;
    for (std::size_t k = 0; k < extra; ++k) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct PipelineResult {
    std::optional<Tally> tally;
    json metrics;
};

// Single scene from cfg.inputs, or a generated fixture batch when
// cfg.fixture is set. Writes <out>/metrics.json and metrics.txt when ground
// truth is available.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const fs::path& out) {
    cfg.validate();
    fs::create_directories(out);
    PipelineResult res;

    if (!cfg.fixture) {
        const SceneResult r = run_scene(load_inputs(cfg.inputs), cfg, out);
        res.tally = r.tally;
        if (r.tally) {
            res.metrics = tally_json(*r.tally, cfg.exclude);
            write_text(out / "metrics.txt", tally_table(*r.tally, cfg.exclude));
        }
        return res;
    }

    const FixtureConfig& fx = *cfg.fixture;
    std::vector<Tally> tallies(fx.count);
    std::vector<std::array<eval::ConfusionMatrix, 3>> ablations(fx.count);
    parallel_for(fx.count, cfg.workers, [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04zu", i);
        const fs::path dir = out / name;
        const auto s = scene::generate_scene(derive_seed(fx.seed, "fixture", i), fx.spec);
        write_scene_inputs(s, dir / "inputs");
        PipelineConfig scene_cfg = cfg;
        if (scene_cfg.noise) scene_cfg.noise->seed = derive_seed(cfg.noise->seed, "fixture-noise", i);
        const SceneInputs in = load_inputs(scene_input_paths(dir / "inputs"));
        const SceneResult r = run_scene(in, scene_cfg, dir);
        tallies[i] = *r.tally;
        const Ablation a = ablate(r.segments, in.logits, in.cam, cfg.profile, cfg.groups);
        ablations[i] = {eval::confusion(a.depth_only, s.gt), eval::confusion(a.cam_only, s.gt),
                        eval::confusion(a.fused, s.gt)};
    });

    Tally total;
    std::array<eval::ConfusionMatrix, 3> abl{};
    for (std::size_t i = 0; i < fx.count; ++i) {
        total += tallies[i];
        for (std::size_t k = 0; k < 3; ++k) abl[k] += ablations[i][k];
    }
    res.tally = total;
    res.metrics = tally_json(total, cfg.exclude);
    res.metrics["scenes"] = fx.count;
    res.metrics["ablations"] = {{"depth_only", report_json(abl[0], cfg.exclude)},
                                {"cam_only", report_json(abl[1], cfg.exclude)},
                                {"fused", report_json(abl[2], cfg.exclude)}};
    write_json(out / "metrics.json", res.metrics);
    write_text(out / "metrics.txt", tally_table(total, cfg.exclude));
    return res;
}

}  // namespace plf::pipeline
