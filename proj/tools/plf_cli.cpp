// plf: command-line front end. Every subcommand writes into --out DIR and is
// a pure function of its inputs, configuration and seed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "plf/contours.hpp"
#include "plf/depth_adapt.hpp"
#include "plf/eval.hpp"
#include "plf/fusion.hpp"
#include "plf/pipeline.hpp"
#include "plf/png_io.hpp"
#include "plf/scene.hpp"
#include "plf/tensor_io.hpp"
#include "plf/weak_local.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plf;
namespace pl = plf::pipeline;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out;
    std::optional<double> tau_adapted, tau_ucm, tau_cam;
    std::vector<std::string> exclude;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "64-bit seed");
    app->add_option("--workers", c.workers, "worker threads for batch runs");
    app->add_option("--out", c.out, "output directory")->required();
    app->add_option("--tau-adapted", c.tau_adapted, "softmax confidence threshold");
    app->add_option("--tau-ucm", c.tau_ucm, "contour threshold");
    app->add_option("--tau-cam", c.tau_cam, "CAM activation threshold");
    app->add_option("--exclude-class", c.exclude, "class left out of mIoU (repeatable)");
}

// JSON first, flags on top.
pl::PipelineConfig resolve(const Common& c) {
    pl::PipelineConfig cfg = c.config.empty() ? pl::PipelineConfig{} : pl::config_from_json(pl::read_json_file(c.config));
    if (c.seed) cfg.seed = *c.seed;
    if (c.workers) cfg.workers = *c.workers;
    if (c.tau_adapted) cfg.profile.tau_adapted = *c.tau_adapted;
    if (c.tau_cam) cfg.profile.tau_cam = *c.tau_cam;
    if (c.tau_ucm) cfg.tau_ucm = *c.tau_ucm;
    for (const auto& name : c.exclude) {
        const auto l = class_from_name(name);
        if (!l) throw Error(ErrorCode::InvalidArgument, "unknown class name " + name);
        cfg.exclude.insert(*l);
    }
    cfg.validate();
    fs::create_directories(c.out);
    return cfg;
}

template <typename T>
void override_path(fs::path& dst, const T& src) {
    if (!src.empty()) dst = src;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pseudo-label fusion toolkit"};
    app.require_subcommand(1);
    Common common;
    std::string active;

    // normalize
    std::string depth_in;
    auto* normalize = app.add_subcommand("normalize", "per-image min-max normalization of a depth map");
    add_common(normalize, common);
    normalize->add_option("--depth", depth_in, "depth PNG (mm) or TensorFile (m)")->required();

    // simulate-noise
    std::optional<double> hole_rate, hole_radius, quant_step, jitter;
    auto* noise = app.add_subcommand("simulate-noise", "parametric depth-sensor noise");
    add_common(noise, common);
    noise->add_option("--depth", depth_in, "depth PNG (mm) or TensorFile (m)")->required();
    noise->add_option("--hole-rate", hole_rate);
    noise->add_option("--hole-radius", hole_radius);
    noise->add_option("--quant-step", quant_step, "meters");
    noise->add_option("--jitter-sigma", jitter, "pixels");

    // train-toy
    depth::TrainConfig tcfg;
    std::size_t toy_count = 64, toy_width = 16;
    double toy_bias = 0.3;
    auto* train = app.add_subcommand("train-toy", "toy cycle-consistent min-max training on the bias-shift set");
    add_common(train, common);
    train->add_option("--steps", tcfg.steps);
    train->add_option("--lr-generator", tcfg.lr_generator);
    train->add_option("--lr-discriminator", tcfg.lr_discriminator);
    train->add_option("--batch-size", tcfg.batch_size);
    train->add_option("--hidden", tcfg.hidden);
    train->add_option("--count", toy_count, "profiles per domain");
    train->add_option("--width", toy_width);
    train->add_option("--bias", toy_bias);
    bool toy_renorm = false;
    train->add_flag("--renormalize", toy_renorm, "apply eta to generator outputs");

    // cam
    std::string features_in, head_in;
    std::size_t cam_h = 0, cam_w = 0;
    auto* cam = app.add_subcommand("cam", "class activation maps from features and classifier weights");
    add_common(cam, common);
    cam->add_option("--features", features_in)->required();
    cam->add_option("--head", head_in)->required();
    cam->add_option("--height", cam_h, "output height (default: 2x feature height)");
    cam->add_option("--width", cam_w, "output width (default: 2x feature width)");

    // segment
    std::string ucm_in;
    auto* segment = app.add_subcommand("segment", "threshold a contour map into segments");
    add_common(segment, common);
    segment->add_option("--ucm", ucm_in)->required();

    // filter
    std::string logits_in;
    auto* filter = app.add_subcommand("filter", "softmax confidence filter on depth-based logits");
    add_common(filter, common);
    filter->add_option("--logits", logits_in)->required();

    // fuse
    std::string segments_in, cam_in;
    auto* fuse = app.add_subcommand("fuse", "two-step integration of depth predictions and CAMs");
    add_common(fuse, common);
    fuse->add_option("--segments", segments_in)->required();
    fuse->add_option("--logits", logits_in)->required();
    fuse->add_option("--cam", cam_in)->required();

    // eval
    std::string pred_in, gt_in, mask_in, policy = "count";
    auto* evaluate = app.add_subcommand("eval", "IoU / mIoU / GA with cover ratios");
    add_common(evaluate, common);
    evaluate->add_option("--pred", pred_in)->required();
    evaluate->add_option("--gt", gt_in)->required();
    evaluate->add_option("--mask", mask_in, "restrict to pixels labeled in this map");
    evaluate->add_option("--abstain", policy, "count | exclude")->check(CLI::IsMember({"count", "exclude"}));

    // refine
    auto* refine = app.add_subcommand("refine", "contour-wise majority vote of predictions");
    add_common(refine, common);
    refine->add_option("--pred", pred_in)->required();
    refine->add_option("--segments", segments_in)->required();

    // gen-fixture
    std::size_t fx_count = 1;
    std::optional<std::size_t> fx_h, fx_w, fx_objects;
    std::optional<double> fx_depth_err, fx_cam_err;
    std::optional<bool> fx_comp;
    auto* gen = app.add_subcommand("gen-fixture", "synthetic scenes with consistent cues");
    add_common(gen, common);
    gen->add_option("--count", fx_count);
    gen->add_option("--height", fx_h);
    gen->add_option("--width", fx_w);
    gen->add_option("--objects", fx_objects);
    gen->add_option("--depth-error", fx_depth_err);
    gen->add_option("--cam-error", fx_cam_err);
    gen->add_option("--complementary", fx_comp);

    // pipeline
    std::string p_depth, p_logits, p_cam, p_features, p_head, p_ucm, p_gt;
    std::optional<std::size_t> p_fixture;
    bool p_refine = false;
    auto* pipe = app.add_subcommand("pipeline", "all stages on one scene or a generated batch");
    add_common(pipe, common);
    pipe->add_option("--depth", p_depth);
    pipe->add_option("--logits", p_logits);
    pipe->add_option("--cam", p_cam);
    pipe->add_option("--features", p_features);
    pipe->add_option("--head", p_head);
    pipe->add_option("--ucm", p_ucm);
    pipe->add_option("--gt", p_gt);
    pipe->add_option("--fixture-count", p_fixture, "generate and process this many scenes");
    pipe->add_flag("--refine", p_refine, "also refine argmax predictions over segments");

    CLI11_PARSE(app, argc, argv);
    active = app.get_subcommands().front()->get_name();

    try {
        const fs::path out = common.out;
        if (active == "normalize") {
            resolve(common);
            const auto norm = depth::minmax_normalize(pl::load_depth(depth_in));
            write_tensor(out / "normalized.plf", grid_tensor(norm.values));
            write_tensor(out / "valid_mask.plf", grid_tensor(norm.valid));
        } else if (active == "simulate-noise") {
            const auto cfg = resolve(common);
            depth::NoiseParams p = cfg.noise.value_or(depth::NoiseParams{});
            if (!cfg.noise || common.seed) p.seed = cfg.seed;
            if (hole_rate) p.hole_rate = *hole_rate;
            if (hole_radius) p.hole_blob_radius = *hole_radius;
            if (quant_step) p.quantization_step = *quant_step;
            if (jitter) p.lateral_jitter_sigma = *jitter;
            write_depth_png(out / "noisy_depth.png", depth::simulate_sensor_noise(pl::load_depth(depth_in), p));
        } else if (active == "train-toy") {
            const auto cfg = resolve(common);
            tcfg.seed = cfg.seed;
            tcfg.renormalize = toy_renorm;
            const auto data = depth::bias_shift_fixture(toy_count, toy_width, toy_bias, derive_seed(cfg.seed, "toy-train"));
            const auto held = depth::bias_shift_fixture(toy_count, toy_width, toy_bias, derive_seed(cfg.seed, "toy-held"));
            const auto result = depth::train_minmax(data.syn, data.real, tcfg);
            pl::write_text(out / "trace.csv", depth::trace_csv(result.trace));
            json j;
            j["steps"] = tcfg.steps;
            j["params"] = result.model.flatten();
            j["heldout_discriminator_accuracy"] = depth::discriminator_accuracy(result.model, held.syn, held.real);
            pl::write_json(out / "model.json", j);
            auto flat = [](const std::vector<double>& v) {
                return Tensor::make<double>({static_cast<std::uint32_t>(v.size())}, v);
            };
            write_tensor(out / "model.plf", flat(result.model.flatten()));
            write_tensor(out / "mapping_noise.plf", flat(result.model.noise.values));
            write_tensor(out / "mapping_restore.plf", flat(result.model.restore.values));
        } else if (active == "cam") {
            resolve(common);
            const auto f = pl::load_features(features_in);
            const auto w = pl::load_head(head_in);
            const auto v = weak::compute_cam(f, w, cam_h ? cam_h : 2 * f.height(), cam_w ? cam_w : 2 * f.width());
            write_tensor(out / "cam.plf", volume_tensor(v));
        } else if (active == "segment") {
            const auto cfg = resolve(common);
            const auto seg = contours::extract_segments(pl::load_strength(ucm_in), cfg.tau_ucm);
            write_tensor(out / "segments.plf", pl::segments_tensor(seg));
        } else if (active == "filter") {
            const auto cfg = resolve(common);
            write_label_png(out / "filtered.png",
                            fusion::confidence_filter(pl::load_volume(logits_in, "logits"), cfg.profile.tau_adapted));
        } else if (active == "fuse") {
            const auto cfg = resolve(common);
            const auto r = fusion::fuse(pl::load_segments(segments_in), pl::load_volume(logits_in, "logits"),
                                        pl::load_volume(cam_in, "cam"), cfg.profile, cfg.groups);
            write_label_png(out / "filtered.png", r.filtered);
            write_label_png(out / "step1.png", r.step1_map);
            write_label_png(out / "pseudo.png", r.pseudo);
        } else if (active == "eval") {
            const auto cfg = resolve(common);
            const LabelMap pred = pl::load_labels(pred_in);
            const LabelMap gt = pl::load_labels(gt_in);
            const auto pol = policy == "exclude" ? eval::AbstentionPolicy::Exclude : eval::AbstentionPolicy::CountAsWrong;
            eval::MetricReport r;
            if (mask_in.empty()) {
                r = eval::metrics(eval::confusion(pred, gt), cfg.exclude, pol);
                eval::attach_cover(r, eval::cover_ratio(pred, &gt));
            } else {
                r = eval::restricted_metrics(pred, gt, pl::load_labels(mask_in), cfg.exclude, pol);
            }
            pl::write_json(out / "metrics.json", eval::to_json(r));
            pl::write_text(out / "metrics.txt", eval::to_table(r));
        } else if (active == "refine") {
            resolve(common);
            write_label_png(out / "refined.png", eval::ucm_refine(pl::load_labels(pred_in), pl::load_segments(segments_in)));
        } else if (active == "gen-fixture") {
            const auto cfg = resolve(common);
            scene::SceneSpec spec = cfg.fixture ? cfg.fixture->spec : scene::SceneSpec{};
            if (fx_h) spec.height = *fx_h;
            if (fx_w) spec.width = *fx_w;
            if (fx_objects) spec.objects = *fx_objects;
            if (fx_depth_err) spec.depth_error_rate = *fx_depth_err;
            if (fx_cam_err) spec.cam_error_rate = *fx_cam_err;
            if (fx_comp) spec.complementary = *fx_comp;
            const std::uint64_t seed = cfg.fixture && !common.seed ? cfg.fixture->seed : cfg.seed;
            for (std::size_t i = 0; i < fx_count; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "scene_%04zu", i);
                pl::write_scene_inputs(scene::generate_scene(derive_seed(seed, "fixture", i), spec), out / name);
            }
        } else if (active == "pipeline") {
            auto cfg = resolve(common);
            override_path(cfg.inputs.depth, p_depth);
            override_path(cfg.inputs.logits, p_logits);
            override_path(cfg.inputs.cam, p_cam);
            override_path(cfg.inputs.features, p_features);
            override_path(cfg.inputs.head, p_head);
            override_path(cfg.inputs.ucm, p_ucm);
            override_path(cfg.inputs.gt, p_gt);
            if (p_refine) cfg.refine = true;
            if (p_fixture) {
                if (!cfg.fixture) cfg.fixture = pl::FixtureConfig{};
                cfg.fixture->count = *p_fixture;
                if (common.seed) cfg.fixture->seed = cfg.seed;
            }
            pl::run_pipeline(cfg, out);
        }
    } catch (const Error& e) {
        json rec{{"error", std::string(error_name(e.code()))}, {"stage", active}, {"message", e.what()}};
        std::cerr << rec.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json rec{{"error", "Internal"}, {"stage", active}, {"message", e.what()}};
        std::cerr << rec.dump() << "\n";
        return 3;
    }
    return 0;
}
