// suseg: two-stage infection segmentation pipeline
//
// Subcommands: gen-phantom, train-isnet, predict, train-aggregator,
// aggregate, evaluate, cross-validate, report.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 training/inference
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include "suseg/checkpoint.hpp"
#include "suseg/config.hpp"
#include "suseg/metrics.hpp"
#include "suseg/nifti_io.hpp"
#include "suseg/overlay.hpp"
#include "suseg/phantom.hpp"
#include "suseg/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace suseg;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_dir;
    std::string profile = "desk";
    uint64_t seed = 0;
    bool seed_set = false;
};

void addCommon(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--set", o.overrides, "key=value config override (repeatable)");
    cmd->add_option("--run-dir", o.run_dir, "run directory (default $SUSEG_RUN_DIR or ./runs/default)");
    cmd->add_option("--profile", o.profile, "config profile: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    auto* s = cmd->add_option("--seed", o.seed, "experiment seed");
    s->each([&o](const std::string&) { o.seed_set = true; });
}

std::string resolveRunDir(const CommonOpts& o) {
    if (!o.run_dir.empty()) return o.run_dir;
    if (const char* env = std::getenv("SUSEG_RUN_DIR")) return env;
    return "runs/default";
}

ExperimentConfig resolveConfig(const CommonOpts& o) {
    ExperimentConfig cfg =
        o.config_path.empty() ? default_config(o.profile) : load_config(o.config_path);
    for (const auto& kv : o.overrides) apply_override(cfg, kv);
    if (o.seed_set) cfg.seed = o.seed;
    cfg.validate();
    return cfg;
}

ScaleSetting parseScale(const std::string& s) {
    auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("scale must be VxP, e.g. 96x16");
    ScaleSetting out{std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    out.validate();
    return out;
}

int cmdGenPhantom(const CommonOpts& o, int count, const std::string& out_dir_flag) {
    std::string out_dir = out_dir_flag.empty() ? resolveRunDir(o) + "/phantoms" : out_dir_flag;
    fs::create_directories(out_dir);

    PhantomSpec base;
    if (!o.config_path.empty()) {
        std::ifstream f(o.config_path);
        if (!f) throw ConfigError("cannot open config file: " + o.config_path);
        json j;
        f >> j;
        if (j.contains("count")) count = j["count"];
        if (j.contains("shape")) base.shape = {j["shape"][0], j["shape"][1], j["shape"][2]};
        if (j.contains("spacing")) base.spacing = {j["spacing"][0], j["spacing"][1], j["spacing"][2]};
        if (j.contains("n_ggo")) base.n_ggo = j["n_ggo"];
        if (j.contains("n_consolidation")) base.n_consolidation = j["n_consolidation"];
        if (j.contains("lesion_radius_min_mm")) base.lesion_radius_min_mm = j["lesion_radius_min_mm"];
        if (j.contains("lesion_radius_max_mm")) base.lesion_radius_max_mm = j["lesion_radius_max_mm"];
        if (j.contains("noise_sd")) base.noise_sd = j["noise_sd"];
        if (j.contains("seed")) base.seed = j["seed"];
    }
    for (const auto& kv : o.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "count") count = std::stoi(val);
        else if (key == "shape") base.shape = {std::stoi(val), std::stoi(val), std::stoi(val)};
        else if (key == "n_ggo") base.n_ggo = std::stoi(val);
        else if (key == "n_consolidation") base.n_consolidation = std::stoi(val);
        else if (key == "lesion_radius_min_mm") base.lesion_radius_min_mm = std::stof(val);
        else if (key == "lesion_radius_max_mm") base.lesion_radius_max_mm = std::stof(val);
        else if (key == "noise_sd") base.noise_sd = std::stof(val);
        else if (key == "seed") base.seed = std::stoull(val);
        else throw ConfigError("unknown phantom override key: " + key);
    }
    if (o.seed_set) base.seed = o.seed;

    json manifest;
    manifest["cases"] = json::array();
    for (int i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        spec.seed = base.seed + static_cast<uint64_t>(i);
        char id[32];
        std::snprintf(id, sizeof(id), "phantom_%03d", i);
        PhantomPair pair = generate_phantom(spec);
        std::string ct_name = std::string(id) + "_ct.nii.gz";
        std::string gt_name = std::string(id) + "_gt.nii.gz";
        write_volume(pair.ct, out_dir + "/" + ct_name);
        write_volume(pair.gt, out_dir + "/" + gt_name);
        json e = {{"id", id},
                  {"ct", ct_name},
                  {"gt", gt_name},
                  {"seed", spec.seed},
                  {"n_ggo", spec.n_ggo},
                  {"n_consolidation", spec.n_consolidation},
                  {"noise_sd", spec.noise_sd},
                  {"shape", {spec.shape[0], spec.shape[1], spec.shape[2]}}};
        manifest["cases"].push_back(e);
        std::cerr << "wrote " << out_dir << "/" << ct_name << " (" << pair.lesions.size()
                  << " lesions)\n";
    }
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cerr << "wrote " << out_dir << "/manifest.json\n";
    return 0;
}

int cmdTrainIsnet(const CommonOpts& o, const std::string& manifest, const std::string& scale_str) {
    ExperimentConfig cfg = resolveConfig(o);
    ScaleSetting scale = parseScale(scale_str);
    std::vector<Case> cases = load_manifest(manifest);
    std::string run_dir = resolveRunDir(o);
    fs::create_directories(run_dir);

    LossCurve curve;
    ISNet model = train_isnet(cases, scale, cfg, &curve, &std::cerr);
    std::string ckpt =
        run_dir + "/isnet_v" + std::to_string(scale.v) + "_p" + std::to_string(scale.p) + ".ckpt";
    save_isnet(model, ckpt);
    std::ofstream lc(run_dir + "/loss_curves.csv");
    lc << "curve,epoch,loss\n";
    for (size_t e = 0; e < curve.epoch_mean_loss.size(); ++e)
        lc << "isnet,"<< e + 1 << "," << curve.epoch_mean_loss[e] << "\n";
    std::cerr << "saved " << ckpt << "\n";
    return 0;
}

int cmdPredict(const CommonOpts& o, const std::string& model_path, const std::string& ct_path,
               const std::string& out_path, bool overlays) {
    ExperimentConfig cfg = resolveConfig(o);
    ISNet model = load_isnet(model_path);
    Volume ct = read_volume(ct_path, VolumeKind::CT);
    PredictionVolume pred = predict_case(model, ct, cfg.prediction_stride_div);
    Volume orig = to_original_grid(pred.scaled, pred.meta);
    std::string out = out_path.empty() ? resolveRunDir(o) + "/prediction.nii.gz" : out_path;
    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path().string());
    write_volume(orig, out);
    std::cerr << "wrote " << out << "\n";
    if (overlays) {
        std::string odir = resolveRunDir(o) + "/overlays";
        int n = write_overlay_slices(ct, orig, cfg.threshold, odir,
                                     fs::path(ct_path).stem().stem().string());
        std::cerr << "wrote " << n << " overlay slices to " << odir << "\n";
    }
    return 0;
}

std::vector<ISNet> loadModels(const std::vector<std::string>& paths) {
    std::vector<ISNet> models;
    for (const auto& p : paths) models.push_back(load_isnet(p));
    return models;
}

int cmdTrainAggregator(const CommonOpts& o, const std::string& manifest,
                       const std::vector<std::string>& model_paths) {
    ExperimentConfig cfg = resolveConfig(o);
    std::vector<ISNet> models = loadModels(model_paths);
    std::vector<LoadedCase> cases;
    for (const auto& c : load_manifest(manifest))
        cases.push_back({c.id, read_volume(c.ct_path, VolumeKind::CT),
                         read_volume(c.gt_path, VolumeKind::Mask)});
    std::string run_dir = resolveRunDir(o);
    fs::create_directories(run_dir);
    LossCurve curve;
    Aggregator agg = train_aggregator(cases, models, cfg, &curve, &std::cerr);
    save_aggregator(agg, run_dir + "/aggregator.ckpt");
    std::cerr << "saved " << run_dir << "/aggregator.ckpt\n";
    return 0;
}

int cmdAggregate(const CommonOpts& o, const std::string& agg_path,
                 const std::vector<std::string>& model_paths, const std::string& ct_path,
                 const std::string& out_path) {
    ExperimentConfig cfg = resolveConfig(o);
    Aggregator agg = load_aggregator(agg_path);
    std::vector<ISNet> models = loadModels(model_paths);
    Volume ct = read_volume(ct_path, VolumeKind::CT);
    std::vector<PredictionVolume> preds = run_ensemble(models, ct, cfg.prediction_stride_div);
    AggregatorInput in = stack_predictions(preds, ct);
    if (in.channel_order != agg.channel_order)
        throw VolumeError("ensemble scales do not match the aggregator's channel order");
    Volume fused = aggregate_case(agg, in);
    std::string out = out_path.empty() ? resolveRunDir(o) + "/aggregated.nii.gz" : out_path;
    write_volume(fused, out);
    std::cerr << "wrote " << out << "\n";
    return 0;
}

int cmdEvaluate(const CommonOpts& o, const std::string& manifest, const std::string& pred_dir) {
    ExperimentConfig cfg = resolveConfig(o);
    std::vector<Case> cases = load_manifest(manifest);
    std::string run_dir = resolveRunDir(o);
    fs::create_directories(run_dir);

    // per-scale predictions are <id>_pred_v{v}_p{p}.nii.gz, the aggregated one
    // <id>_pred.nii.gz
    std::vector<MetricsReport> reports;
    std::vector<ScaleSetting> order = canonical_order(cfg.scale_settings);
    for (const auto& s : order) {
        MetricsReport r;
        r.label = "ISNet (" + std::to_string(s.v) + "," + std::to_string(s.p) + ")";
        bool any = false;
        for (const auto& c : cases) {
            std::string p = pred_dir + "/" + c.id + "_pred_v" + std::to_string(s.v) + "_p" +
                            std::to_string(s.p) + ".nii.gz";
            if (!fs::exists(p)) continue;
            any = true;
            MetricsTriple m = evaluate_case(binarize(read_volume(p, VolumeKind::Prediction), cfg.threshold),
                                            read_volume(c.gt_path, VolumeKind::Mask));
            r.per_case.push_back({c.id, m.precision, m.recall, m.dice});
        }
        if (any) {
            r.recompute();
            reports.push_back(r);
        }
    }
    MetricsReport agg;
    agg.label = "Aggregation FCN";
    for (const auto& c : cases) {
        std::string p = pred_dir + "/" + c.id + "_pred.nii.gz";
        if (!fs::exists(p)) continue;
        MetricsTriple m = evaluate_case(binarize(read_volume(p, VolumeKind::Prediction), cfg.threshold),
                                        read_volume(c.gt_path, VolumeKind::Mask));
        agg.per_case.push_back({c.id, m.precision, m.recall, m.dice});
    }
    if (!agg.per_case.empty()) {
        agg.recompute();
        reports.push_back(agg);
    }
    if (reports.empty()) throw VolumeError("no predictions found in " + pred_dir);

    std::cout << report_table(reports);
    std::ofstream mf(run_dir + "/metrics.json");
    mf << report_json(reports) << "\n";
    std::cerr << "wrote " << run_dir << "/metrics.json\n";
    return 0;
}

int cmdCrossValidate(const CommonOpts& o, const std::string& manifest) {
    ExperimentConfig cfg = resolveConfig(o);
    std::vector<Case> cases = load_manifest(manifest);
    std::string run_dir = resolveRunDir(o);
    CrossValResult res = cross_validate(cases, cfg, run_dir, &std::cerr);
    std::cout << report_table(res.reports);
    std::cerr << "artifacts in " << run_dir << "\n";
    return 0;
}

int cmdReport(const CommonOpts& o) {
    std::string run_dir = resolveRunDir(o);
    std::ifstream f(run_dir + "/metrics.json");
    if (!f) throw VolumeError("no metrics.json in " + run_dir);
    json j;
    f >> j;
    std::vector<MetricsReport> reports;
    for (const auto& rj : j) {
        MetricsReport r;
        r.label = rj.at("label");
        for (const auto& cj : rj.at("per_case"))
            r.per_case.push_back({cj.at("case"), cj.at("precision"), cj.at("recall"), cj.at("dice")});
        r.recompute();
        reports.push_back(r);
    }
    std::cout << report_table(reports);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale uncertainty-aware infection segmentation pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    int count = 12;
    std::string out_dir, manifest, scale_str, model_path, ct_path, out_path, agg_path, pred_dir;
    std::vector<std::string> model_paths;
    bool overlays = true;

    auto* gen = app.add_subcommand("gen-phantom", "generate synthetic CT/ground-truth pairs");
    addCommon(gen, opts);
    gen->add_option("--count", count, "number of phantoms");
    gen->add_option("--out", out_dir, "output directory");

    auto* ti = app.add_subcommand("train-isnet", "train one scale-specific ISNet");
    addCommon(ti, opts);
    ti->add_option("--manifest", manifest, "phantom manifest.json")->required();
    ti->add_option("--scale", scale_str, "scale setting VxP, e.g. 96x16")->required();

    auto* pr = app.add_subcommand("predict", "segment one CT volume with a trained ISNet");
    addCommon(pr, opts);
    pr->add_option("--model", model_path, "ISNet checkpoint")->required();
    pr->add_option("--ct", ct_path, "input CT volume")->required();
    pr->add_option("--out", out_path, "output prediction path");
    pr->add_flag("--overlays,!--no-overlays", overlays, "write per-slice overlay images");

    auto* ta = app.add_subcommand("train-aggregator", "train the prediction aggregation FCN");
    addCommon(ta, opts);
    ta->add_option("--manifest", manifest, "phantom manifest.json")->required();
    ta->add_option("--models", model_paths, "ISNet checkpoints (one per scale)")->required();

    auto* ag = app.add_subcommand("aggregate", "fuse ensemble predictions for one CT");
    addCommon(ag, opts);
    ag->add_option("--aggregator", agg_path, "aggregator checkpoint")->required();
    ag->add_option("--models", model_paths, "ISNet checkpoints")->required();
    ag->add_option("--ct", ct_path, "input CT volume")->required();
    ag->add_option("--out", out_path, "output prediction path");

    auto* ev = app.add_subcommand("evaluate", "score saved predictions against ground truth");
    addCommon(ev, opts);
    ev->add_option("--manifest", manifest, "phantom manifest.json")->required();
    ev->add_option("--pred-dir", pred_dir, "directory of prediction volumes")->required();

    auto* cv = app.add_subcommand("cross-validate", "run the full k-fold experiment");
    addCommon(cv, opts);
    cv->add_option("--manifest", manifest, "phantom manifest.json")->required();

    auto* rp = app.add_subcommand("report", "re-render the report table from metrics.json");
    addCommon(rp, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmdGenPhantom(opts, count, out_dir);
        if (ti->parsed()) return cmdTrainIsnet(opts, manifest, scale_str);
        if (pr->parsed()) return cmdPredict(opts, model_path, ct_path, out_path, overlays);
        if (ta->parsed()) return cmdTrainAggregator(opts, manifest, model_paths);
        if (ag->parsed()) return cmdAggregate(opts, agg_path, model_paths, ct_path, out_path);
        if (ev->parsed()) return cmdEvaluate(opts, manifest, pred_dir);
        if (cv->parsed()) return cmdCrossValidate(opts, manifest);
        if (rp->parsed()) return cmdReport(opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const VolumeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
