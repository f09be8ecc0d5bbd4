#include "axrec/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "axrec/baselines.hpp"
#include "axrec/checkpoint.hpp"
#include "axrec/plot.hpp"

namespace axrec {

namespace fs = std::filesystem;
using nlohmann::json;

Method method_from_string(const std::string& s) {
    if (s == "microdiffusion") return Method::microdiffusion;
    if (s == "naive_diffusion") return Method::naive_diffusion;
    if (s == "inr_only") return Method::inr_only;
    if (s == "linear") return Method::linear;
    if (s == "cubic") return Method::cubic;
    throw ConfigError("unknown method: " + s);
}

std::string to_string(Method m) {
    switch (m) {
        case Method::microdiffusion: return "microdiffusion";
        case Method::naive_diffusion: return "naive_diffusion";
        case Method::inr_only: return "inr_only";
        case Method::linear: return "linear";
        case Method::cubic: return "cubic";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    if (s == "phantom") return Stage::phantom;
    if (s == "acquire") return Stage::acquire;
    if (s == "train-inr") return Stage::train_inr;
    if (s == "train-diff") return Stage::train_diff;
    if (s == "reconstruct") return Stage::reconstruct;
    if (s == "evaluate") return Stage::evaluate;
    throw ConfigError("unknown stage: " + s);
}

Encoding EncodingConfig::build(std::uint64_t seed) const {
    if (type == "gaussian") return GaussianEncoding(out_dim, sigma, seed ^ 0xE4C0D14BB4DD1E5ULL);
    if (type == "sincos") return SinCosEncoding(num_frequencies, include_input);
    throw ConfigError("unknown encoding type: " + type);
}

// ---- config (de)serialization -------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    int ver = j.value("schema_version", 1);
    if (ver != 1) throw ConfigError("unsupported schema_version: " + std::to_string(ver));
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = j.value("output_dir", std::string("out"));
    c.method = method_from_string(j.value("method", std::string("microdiffusion")));
    c.verbose = j.value("verbose", true);

    if (j.contains("phantom")) {
        const auto& p = j["phantom"];
        c.phantom.kind = phantom_kind_from_string(p.value("kind", std::string("tubes")));
        if (p.contains("dims")) {
            auto d = p["dims"].get<std::array<int, 3>>();
            c.phantom.depth = d[0]; c.phantom.height = d[1]; c.phantom.width = d[2];
        }
        c.phantom.density = p.value("density", c.phantom.density);
        c.phantom.seed = p.value("seed", c.seed);
        c.phantom.smoothness = p.value("smoothness", c.phantom.smoothness);
    } else {
        c.phantom.seed = c.seed;
    }
    if (j.contains("acquisition")) {
        const auto& a = j["acquisition"];
        c.acquisition.step_length = a.value("step_length", c.acquisition.step_length);
        c.acquisition.noise_sigma = a.value("noise_sigma", 0.0);
        c.acquisition.noise_seed = a.value("noise_seed", c.seed);
    }
    if (j.contains("encoding")) {
        const auto& e = j["encoding"];
        c.encoding.type = e.value("type", c.encoding.type);
        c.encoding.out_dim = e.value("out_dim", c.encoding.out_dim);
        c.encoding.sigma = e.value("sigma", c.encoding.sigma);
        c.encoding.num_frequencies = e.value("num_frequencies", c.encoding.num_frequencies);
        c.encoding.include_input = e.value("include_input", c.encoding.include_input);
    }
    c.inr.seed = c.seed;
    if (j.contains("inr")) {
        const auto& i = j["inr"];
        c.inr.learning_rate = i.value("learning_rate", c.inr.learning_rate);
        c.inr.epochs = i.value("epochs", c.inr.epochs);
        c.inr.batch_projections = i.value("batch_projections", c.inr.batch_projections);
        c.inr.pixels_per_step = i.value("pixels_per_step", c.inr.pixels_per_step);
        c.inr.seed = i.value("seed", c.seed);
    }
    c.diffusion_train.seed = c.seed;
    if (j.contains("diffusion")) {
        const auto& d = j["diffusion"];
        if (d.contains("schedule")) {
            c.schedule.T = d["schedule"].value("T", c.schedule.T);
            c.schedule.beta_start = d["schedule"].value("beta_start", c.schedule.beta_start);
            c.schedule.beta_end = d["schedule"].value("beta_end", c.schedule.beta_end);
        }
        if (d.contains("train")) {
            c.diffusion_train.learning_rate = d["train"].value("learning_rate", c.diffusion_train.learning_rate);
            c.diffusion_train.epochs = d["train"].value("epochs", c.diffusion_train.epochs);
            c.diffusion_train.batch_slices = d["train"].value("batch_slices", c.diffusion_train.batch_slices);
            c.diffusion_train.seed = d["train"].value("seed", c.seed);
        }
        if (d.contains("guidance")) {
            const auto& g = d["guidance"];
            c.guidance.w = g.value("w", c.guidance.w);
            c.guidance.gamma = g.value("gamma", c.guidance.gamma);
            c.guidance.p_uncond = g.value("p_uncond", c.guidance.p_uncond);
            c.guidance.prediction_target =
                prediction_target_from_string(g.value("prediction_target", std::string("epsilon")));
            c.guidance.prior_mode = prior_mode_from_string(g.value("prior_mode", std::string("neighboring")));
            c.guidance.fusion = fusion_mode_from_string(g.value("fusion", std::string("addition")));
            c.guidance.centered_offsets = g.value("centered_offsets", false);
            c.guidance.literal_alg2 = g.value("literal_alg2", false);
            c.guidance.inference_steps = g.value("inference_steps", c.guidance.inference_steps);
        }
        c.unet_base_channels = d.value("base_channels", c.unet_base_channels);
        c.unet_time_embed_dim = d.value("time_embed_dim", c.unet_time_embed_dim);
        if (d.contains("cond")) {
            const auto& cc = d["cond"];
            c.cond.img_base_channels = cc.value("img_base_channels", c.cond.img_base_channels);
            c.cond.img_out_dim = cc.value("img_out_dim", c.cond.img_out_dim);
            c.cond.pos_hidden = cc.value("pos_hidden", c.cond.pos_hidden);
            c.cond.pos_out_dim = cc.value("pos_out_dim", c.cond.pos_out_dim);
        }
    }
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    return json{
        {"schema_version", schema_version},
        {"seed", seed},
        {"output_dir", output_dir},
        {"method", to_string(method)},
        {"verbose", verbose},
        {"phantom", {{"kind", to_string(phantom.kind)},
                     {"dims", {phantom.depth, phantom.height, phantom.width}},
                     {"density", phantom.density},
                     {"seed", phantom.seed},
                     {"smoothness", phantom.smoothness}}},
        {"acquisition", {{"step_length", acquisition.step_length},
                         {"noise_sigma", acquisition.noise_sigma},
                         {"noise_seed", acquisition.noise_seed}}},
        {"encoding", {{"type", encoding.type},
                      {"out_dim", encoding.out_dim},
                      {"sigma", encoding.sigma},
                      {"num_frequencies", encoding.num_frequencies},
                      {"include_input", encoding.include_input}}},
        {"inr", {{"learning_rate", inr.learning_rate},
                 {"epochs", inr.epochs},
                 {"batch_projections", inr.batch_projections},
                 {"pixels_per_step", inr.pixels_per_step},
                 {"seed", inr.seed}}},
        {"diffusion",
         {{"schedule", {{"T", schedule.T}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
          {"train", {{"learning_rate", diffusion_train.learning_rate},
                     {"epochs", diffusion_train.epochs},
                     {"batch_slices", diffusion_train.batch_slices},
                     {"seed", diffusion_train.seed}}},
          {"guidance", {{"w", guidance.w},
                        {"gamma", guidance.gamma},
                        {"p_uncond", guidance.p_uncond},
                        {"prediction_target", to_string(guidance.prediction_target)},
                        {"prior_mode", to_string(guidance.prior_mode)},
                        {"fusion", to_string(guidance.fusion)},
                        {"centered_offsets", guidance.centered_offsets},
                        {"literal_alg2", guidance.literal_alg2},
                        {"inference_steps", guidance.inference_steps}}},
          {"base_channels", unet_base_channels},
          {"time_embed_dim", unet_time_embed_dim},
          {"cond", {{"img_base_channels", cond.img_base_channels},
                    {"img_out_dim", cond.img_out_dim},
                    {"pos_hidden", cond.pos_hidden},
                    {"pos_out_dim", cond.pos_out_dim}}}}}};
}

void ExperimentConfig::validate() const {
    phantom.validate();
    GuidanceConfig g = guidance;
    g.validate();
    if (method == Method::microdiffusion && guidance.prior_mode == PriorMode::off)
        throw ConfigError("method=microdiffusion requires a prior mode other than 'off'");
    if (method == Method::naive_diffusion && guidance.prior_mode != PriorMode::off)
        throw ConfigError("method=naive_diffusion requires prior_mode=off");
    if (phantom.depth % acquisition.step_length != 0 &&
        phantom.depth / acquisition.step_length < 1)
        throw ConfigError("step_length larger than phantom depth");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::uint64_t ExperimentConfig::config_hash() const {
    json j = to_json();
    j.erase("output_dir");  // results do not depend on where they are written
    j.erase("verbose");
    std::string s = j.dump();
    return fnv1a(s.data(), s.size());
}

// ---- pipeline ------------------------------------------------------------------

namespace {

struct PipelineCtx {
    const ExperimentConfig& cfg;
    fs::path dir;
    std::string hash;
    bool resume_ok = false;  // prior manifest exists with matching hash
    json artifacts = json::object();
    std::vector<std::string> skipped, executed;

    void log(const std::string& msg) const {
        if (cfg.verbose) std::printf("[pipeline] %s\n", msg.c_str());
    }

    bool can_skip(const std::string& stage, const std::vector<std::string>& files) {
        if (!resume_ok) return false;
        for (const auto& f : files)
            if (!fs::exists(dir / f)) return false;
        log("skip " + stage + " (artifacts present)");
        skipped.push_back(stage);
        return true;
    }

    void record(const std::string& file) {
        artifacts[file] = hash_hex(file_hash((dir / file).string()));
    }
};

void write_manifest(PipelineCtx& ctx) {
    json m{{"schema_version", 1},
           {"config_hash", ctx.hash},
           {"config", ctx.cfg.to_json()},
           {"artifacts", ctx.artifacts},
           {"stages_executed", ctx.executed},
           {"stages_skipped", ctx.skipped}};
    std::ofstream out(ctx.dir / "manifest.json");
    out << m.dump(2) << "\n";
}

}  // namespace

MetricReport run_pipeline(const ExperimentConfig& cfg, Stage through) {
    cfg.validate();
    PipelineCtx ctx{cfg, fs::path(cfg.output_dir), hash_hex(cfg.config_hash())};
    fs::create_directories(ctx.dir);

    // resume only against an identical configuration
    if (fs::exists(ctx.dir / "manifest.json")) {
        try {
            std::ifstream in(ctx.dir / "manifest.json");
            json m;
            in >> m;
            ctx.resume_ok = m.value("config_hash", "") == ctx.hash;
            if (!ctx.resume_ok) ctx.log("config changed; recomputing all stages");
        } catch (...) {
            ctx.resume_ok = false;
        }
    }

    auto path = [&](const char* base) { return (ctx.dir / base).string(); };

    // -- phantom
    Volume truth;
    if (ctx.can_skip("phantom", {"phantom.f32", "phantom.json"})) {
        truth = load_volume(path("phantom"));
    } else {
        ctx.log("phantom: generating " + to_string(cfg.phantom.kind));
        truth = generate_phantom(cfg.phantom);
        save_volume(truth, path("phantom"));
        ctx.executed.push_back("phantom");
    }
    ctx.record("phantom.f32");
    if (through == Stage::phantom) { write_manifest(ctx); return {}; }

    // -- acquire
    ProjectionStack stack;
    if (ctx.can_skip("acquire", {"stack.f32", "stack.json"})) {
        stack = load_stack(path("stack"));
    } else {
        ctx.log("acquire: projecting with n=" + std::to_string(cfg.acquisition.step_length));
        stack = project(truth, cfg.acquisition);
        save_stack(stack, path("stack"));
        ctx.executed.push_back("acquire");
    }
    ctx.record("stack.f32");
    if (through == Stage::acquire) { write_manifest(ctx); return {}; }

    Encoding enc = cfg.encoding.build(cfg.seed);
    const bool needs_inr = cfg.method == Method::microdiffusion || cfg.method == Method::inr_only;
    const bool needs_diff = cfg.method == Method::microdiffusion || cfg.method == Method::naive_diffusion;

    // -- train-inr
    InrField field;
    if (needs_inr) {
        if (ctx.can_skip("train-inr", {"inr.ckpt"})) {
            field = InrField::load(path("inr.ckpt"));
        } else {
            ctx.log("train-inr: " + std::to_string(cfg.inr.epochs) + " epochs");
            InrTrainConfig icfg = cfg.inr;
            if (cfg.verbose)
                icfg.on_epoch = [&](int e, double l) {
                    if ((e + 1) % 50 == 0) std::printf("[train-inr] epoch %d loss %.6f\n", e + 1, l);
                };
            field = train_inr(stack, enc, icfg);
            field.save(path("inr.ckpt"));
            ctx.executed.push_back("train-inr");
        }
        ctx.record("inr.ckpt");
    }
    if (through == Stage::train_inr) { write_manifest(ctx); return {}; }

    // -- train-diff
    DiffusionModel model;
    if (needs_diff) {
        if (ctx.can_skip("train-diff", {"diffusion.ckpt"})) {
            model = DiffusionModel::load(path("diffusion.ckpt"));
        } else {
            ctx.log("train-diff: " + std::to_string(cfg.diffusion_train.epochs) + " epochs");
            DenoiserConfig dcfg;
            dcfg.base_channels = cfg.unet_base_channels;
            dcfg.time_embed_dim = cfg.unet_time_embed_dim;
            auto sched = NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
            model = DiffusionModel(dcfg, cfg.cond, encoding_out_dim(enc), sched, cfg.guidance, cfg.seed);
            if (needs_inr) model.inr_checkpoint_hash = hash_hex(file_hash(path("inr.ckpt")));
            DiffusionTrainConfig tcfg = cfg.diffusion_train;
            if (cfg.verbose)
                tcfg.on_epoch = [&](int e, double l) {
                    if ((e + 1) % 25 == 0) std::printf("[train-diff] epoch %d loss %.6f\n", e + 1, l);
                };
            train_diffusion(model, enc, needs_inr ? &field : nullptr, truth, stack, tcfg);
            model.save(path("diffusion.ckpt"));
            ctx.executed.push_back("train-diff");
        }
        ctx.record("diffusion.ckpt");
    }
    if (through == Stage::train_diff) { write_manifest(ctx); return {}; }

    // -- reconstruct
    Volume recon;
    if (ctx.can_skip("reconstruct", {"recon.f32", "recon.json"})) {
        recon = load_volume(path("recon"));
    } else {
        ctx.log("reconstruct: method=" + to_string(cfg.method));
        int depth_out = stack.source_depth;
        switch (cfg.method) {
            case Method::linear: recon = interp_linear(stack, depth_out); break;
            case Method::cubic: recon = interp_cubic(stack, depth_out); break;
            case Method::inr_only: {
                PriorWeighting wgt = PriorWeighting::neighboring;
                if (cfg.guidance.prior_mode == PriorMode::uniform_mean) wgt = PriorWeighting::uniform_mean;
                if (cfg.guidance.prior_mode == PriorMode::no_neighboring) wgt = PriorWeighting::no_neighboring;
                recon = Volume(depth_out, stack.height(), stack.width(), 0.0f, "inr_recon");
                for (int k = 0; k < depth_out; ++k) {
                    Image img = infer_prior(field, slice_center_z(k, depth_out), stack.step_length,
                                            stack.source_depth, stack.height(), stack.width(), wgt,
                                            cfg.guidance.centered_offsets);
                    recon.set_slice(k, img.cwiseMax(0.0).cwiseMin(1.0));
                }
                break;
            }
            case Method::microdiffusion:
            case Method::naive_diffusion:
                recon = reconstruct_volume(model, enc, needs_inr ? &field : nullptr, stack,
                                           stack.source_depth, cfg.seed ^ 0x5A4B3C2D1E0F9A8BULL);
                break;
        }
        recon.name = "reconstruction";
        save_volume(recon, path("recon"));
        ctx.executed.push_back("reconstruct");
    }
    ctx.record("recon.f32");
    if (through == Stage::reconstruct) { write_manifest(ctx); return {}; }

    // -- evaluate
    MetricReport report;
    ctx.log("evaluate");
    report = evaluate(recon, truth);
    {
        std::string text = report.to_json();
        std::ofstream out(ctx.dir / "report.json");
        out << text;
    }
    ctx.record("report.json");
    ctx.executed.push_back("evaluate");
    write_manifest(ctx);
    return report;
}

// ---- sweep ------------------------------------------------------------------------

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (axis != "step_length" && axis != "gamma" && axis != "w")
        throw ConfigError("sweepable axes: step_length, gamma, w");

    fs::path root(base.output_dir);
    fs::create_directories(root);
    std::vector<SweepRow> rows;
    for (double v : values) {
        ExperimentConfig cfg = base;
        char tag[64];
        std::snprintf(tag, sizeof(tag), "%s_%g", axis.c_str(), v);
        cfg.output_dir = (root / tag).string();
        if (axis == "step_length") cfg.acquisition.step_length = static_cast<int>(v);
        if (axis == "gamma") cfg.guidance.gamma = v;
        if (axis == "w") cfg.guidance.w = v;
        SweepRow row;
        row.value = v;
        try {
            row.report = run_pipeline(cfg);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
            std::printf("[sweep] %s failed: %s\n", tag, e.what());
        }
        rows.push_back(std::move(row));
    }

    std::ofstream csv(root / "sweep.csv");
    csv << axis << ",mean_ssim,mean_psnr,mean_dice,volume_dice,status\n";
    for (const auto& r : rows) {
        if (r.ok)
            csv << r.value << "," << r.report.mean_ssim << "," << r.report.mean_psnr << ","
                << r.report.mean_dice << "," << r.report.volume_dice << ",ok\n";
        else
            csv << r.value << ",,,,," << "failed\n";
    }
    csv.close();

    const char* metrics[3] = {"ssim", "psnr", "dice"};
    for (int m = 0; m < 3; ++m) {
        std::vector<double> xs, ys;
        for (const auto& r : rows) {
            if (!r.ok) continue;
            double y = m == 0 ? r.report.mean_ssim : m == 1 ? r.report.mean_psnr : r.report.mean_dice;
            if (std::isfinite(y)) {
                xs.push_back(r.value);
                ys.push_back(y);
            }
        }
        if (!xs.empty())
            write_line_plot_png((root / (std::string("sweep_") + metrics[m] + ".png")).string(),
                                xs, ys, axis, metrics[m]);
    }
    return rows;
}

// ---- presets ----------------------------------------------------------------------

std::vector<std::string> preset_names() {
    return {"microdiffusion", "naive_diffusion", "inr_only", "linear", "cubic", "condition_concat"};
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;  // desk-scale defaults
    if (name == "condition_concat") {
        // prior fed to the network as an extra condition instead of input mixing
        c.method = Method::microdiffusion;
        c.guidance.prior_mode = PriorMode::condition_concat;
        c.guidance.gamma = 0.0;
    } else {
        c.method = method_from_string(name);
    }
    c.phantom.kind = PhantomKind::tubes;
    c.phantom.depth = 32; c.phantom.height = 64; c.phantom.width = 64;
    c.phantom.density = 0.05;
    c.phantom.smoothness = 1.0;
    c.acquisition.step_length = 4;
    c.encoding.out_dim = 256;
    c.encoding.sigma = 2.0;  // smooth desk-scale phantoms want low encoding bandwidth
    c.inr.epochs = 500;
    c.diffusion_train.epochs = 300;
    c.guidance.inference_steps = 100;
    if (c.method == Method::naive_diffusion) {
        c.guidance.prior_mode = PriorMode::off;
        c.guidance.gamma = 0.0;
    }
    c.output_dir = "out/" + name;
    return c;
}

}  // namespace axrec
