#include "suseg/pipeline.hpp"

#include "suseg/nifti_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace suseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Case> load_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw VolumeError("cannot open manifest: " + manifest_path);
    json j;
    f >> j;
    fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<Case> cases;
    for (const auto& e : j.at("cases"))
        cases.push_back({e.at("id"), (dir / e.at("ct").get<std::string>()).string(),
                         (dir / e.at("gt").get<std::string>()).string()});
    return cases;
}

namespace {

struct PreparedCase {
    ScaledVolumePair pair;
    Volume gt_scaled;
    PadRecord pad;
};

// Scaled, normalized and padded-to-patch training representation of a case.
PreparedCase prepareCase(const Volume& ct, const Volume& gt, const ScaleSetting& scale) {
    PreparedCase pc;
    pc.pair = preprocess_ct(ct, scale.v);
    pc.gt_scaled = preprocess_mask(gt, scale.v);
    PadRecord rec;
    pc.pair.wrange = pad_to_patch(pc.pair.wrange, scale.p, 0.f, rec);
    PadRecord tmp;
    pc.pair.nrange = pad_to_patch(pc.pair.nrange, scale.p, 0.f, tmp);
    pc.gt_scaled = pad_to_patch(pc.gt_scaled, scale.p, 0.f, tmp);
    pc.pad = rec;
    return pc;
}

double trainStep(ISNet& model, nn::Adam& opt, const std::vector<const PatchSample*>& batch) {
    model.params().zero_grad();
    double total = 0;
    const float inv = 1.f / static_cast<float>(batch.size());
    for (const PatchSample* s : batch) {
        nn::Tape tape;
        ISNet::Outputs out = model.forward(tape, s->wrange_patch, s->nrange_patch);
        const std::vector<float>& gt = *s->gt_patch;
        total += dice_loss(out.main->val.v, gt);
        dice_loss_grad(out.main->val.v, gt, out.main->grad.v, inv);
        if (out.sub_quarter) {
            total += dice_loss(out.sub_quarter->val.v, gt);
            dice_loss_grad(out.sub_quarter->val.v, gt, out.sub_quarter->grad.v, inv);
        }
        if (out.sub_half) {
            total += dice_loss(out.sub_half->val.v, gt);
            dice_loss_grad(out.sub_half->val.v, gt, out.sub_half->grad.v, inv);
        }
        tape.backward();
    }
    opt.step(model.params());
    return total / static_cast<double>(batch.size());
}

} // namespace

ISNet train_isnet_mem(const std::vector<LoadedCase>& cases, const ScaleSetting& scale,
                      const ExperimentConfig& cfg, LossCurve* curve, std::ostream* log) {
    if (cases.empty()) throw VolumeError("no training cases");
    ISNet model(cfg.isnet_config(scale), scale);
    model.train_seed = cfg.seed;
    model.trained_epochs = cfg.isnet_train.epochs;
    if (cfg.isnet_train.epochs == 0) return model;

    std::vector<PreparedCase> prepared;
    for (const auto& c : cases) prepared.push_back(prepareCase(c.ct, c.gt, scale));

    nn::Adam opt({cfg.isnet_train.lr, 0.9f, 0.999f, 1e-8f});
    std::mt19937_64 shuffler(cfg.seed ^ 0xABCDEFull);

    for (int epoch = 0; epoch < cfg.isnet_train.epochs; ++epoch) {
        std::vector<PatchSample> samples;
        for (size_t ci = 0; ci < prepared.size(); ++ci) {
            uint64_t s = cfg.seed + 1315423911ull * (epoch + 1) + 2654435761ull * (ci + 1) +
                         (static_cast<uint64_t>(scale.v) << 32) + scale.p;
            auto cs = sample_training_patches(prepared[ci].pair, prepared[ci].gt_scaled, scale,
                                              cfg.patches_per_volume_per_epoch, s);
            for (auto& x : cs) samples.push_back(std::move(x));
        }
        std::vector<const PatchSample*> order;
        for (const auto& x : samples) order.push_back(&x);
        std::shuffle(order.begin(), order.end(), shuffler);

        double epoch_loss = 0;
        int steps = 0;
        const int B = cfg.isnet_train.minibatch;
        for (size_t i = 0; i < order.size(); i += B) {
            std::vector<const PatchSample*> batch(
                order.begin() + i, order.begin() + std::min(order.size(), i + B));
            epoch_loss += trainStep(model, opt, batch);
            ++steps;
        }
        epoch_loss /= std::max(1, steps);
        if (curve) curve->epoch_mean_loss.push_back(epoch_loss);
        if (log)
            *log << "[isnet v=" << scale.v << " p=" << scale.p << "] epoch " << epoch + 1 << "/"
                 << cfg.isnet_train.epochs << " loss " << epoch_loss << "\n";
    }
    return model;
}

ISNet train_isnet(const std::vector<Case>& cases, const ScaleSetting& scale,
                  const ExperimentConfig& cfg, LossCurve* curve, std::ostream* log) {
    std::vector<LoadedCase> loaded;
    for (const auto& c : cases) {
        try {
            loaded.push_back({c.id, read_volume(c.ct_path, VolumeKind::CT),
                              read_volume(c.gt_path, VolumeKind::Mask)});
        } catch (const std::exception& e) {
            throw VolumeError("case " + c.id + ": " + e.what());
        }
    }
    return train_isnet_mem(loaded, scale, cfg, curve, log);
}

PredictionVolume predict_case_with(const PatchPredictor& fn, const ScaleSetting& scale,
                                   const Volume& ct, int stride_div) {
    scale.validate();
    ScaledVolumePair pair = preprocess_ct(ct, scale.v);

    PadRecord pad;
    Volume w = pad_to_patch(pair.wrange, scale.p, 0.f, pad);
    PadRecord tmp;
    Volume n = pad_to_patch(pair.nrange, scale.p, 0.f, tmp);
    ScaledVolumePair padded;
    padded.wrange = std::move(w);
    padded.nrange = std::move(n);

    const int stride = std::max(1, scale.p / std::max(1, stride_div));
    std::vector<PatchSample> tiles = tile_volume(padded, scale.p, stride);

    std::vector<std::pair<std::array<int, 3>, std::vector<float>>> preds(tiles.size());
    for (size_t i = 0; i < tiles.size(); ++i) {
        tiles[i].scale = scale;
        preds[i] = {tiles[i].origin, fn(tiles[i])};
    }
    Volume rec = reconstruct(preds, scale.p, padded.wrange.shape);
    rec = crop_pad(rec, pad);

    PredictionVolume out;
    out.scaled = std::move(rec);
    out.meta = pair.meta;
    out.scale = scale;
    return out;
}

PredictionVolume predict_case(const ISNet& model, const Volume& ct, int stride_div) {
    return predict_case_with(
        [&](const PatchSample& s) { return model.predict_patch(s); }, model.scale(), ct, stride_div);
}

std::vector<PredictionVolume> run_ensemble(const std::vector<ISNet>& models, const Volume& ct,
                                           int stride_div) {
    std::vector<ScaleSetting> scales;
    for (const auto& m : models) scales.push_back(m.scale());
    std::vector<ScaleSetting> order = canonical_order(scales);
    for (size_t i = 1; i < order.size(); ++i)
        if (order[i] == order[i - 1]) throw VolumeError("duplicate scale in ensemble");

    std::vector<PredictionVolume> out;
    for (const auto& s : order) {
        const ISNet* model = nullptr;
        for (const auto& m : models)
            if (m.scale() == s) model = &m;
        if (!model) throw VolumeError("missing scale in ensemble");
        out.push_back(predict_case(*model, ct, stride_div));
    }
    return out;
}

namespace {

// Pads a K-channel stack in-plane so slices divide 2^levels; output cropped back.
std::array<int, 2> paddedPlane(const std::array<int, 3>& shape, int levels) {
    int m = 1 << levels;
    auto up = [m](int v) { return (v + m - 1) / m * m; };
    return {up(shape[0]), up(shape[1])};
}

std::vector<float> paddedSlice(const AggregatorInput& in, int z, int PX, int PY) {
    const int X = in.shape[0], Y = in.shape[1];
    std::vector<float> out(in.channels.size() * static_cast<size_t>(PX) * PY, 0.f);
    for (size_t c = 0; c < in.channels.size(); ++c)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x)
                out[(c * PY + y) * PX + x] = in.channels[c].at(x, y, z);
    return out;
}

std::vector<float> paddedGtSlice(const Volume& gt, int z, int PX, int PY) {
    std::vector<float> out(static_cast<size_t>(PX) * PY, 0.f);
    for (int y = 0; y < gt.shape[1]; ++y)
        for (int x = 0; x < gt.shape[0]; ++x) out[static_cast<size_t>(y) * PX + x] = gt.at(x, y, z);
    return out;
}

} // namespace

Volume aggregate_case(const Aggregator& agg, const AggregatorInput& input) {
    if (static_cast<int>(input.channels.size()) != agg.config().in_channels)
        throw VolumeError("channel-count mismatch between input and aggregator");
    auto [PX, PY] = paddedPlane(input.shape, agg.config().levels);
    Volume out(input.shape, input.channels.front().spacing, VolumeKind::Prediction);
    for (int z = 0; z < input.shape[2]; ++z) {
        nn::Tape t;
        nn::Node* o = agg.forward(t, paddedSlice(input, z, PX, PY), PX, PY);
        for (int y = 0; y < input.shape[1]; ++y)
            for (int x = 0; x < input.shape[0]; ++x)
                out.at(x, y, z) = o->val.v[static_cast<size_t>(y) * PX + x];
    }
    return out;
}

Aggregator train_aggregator(const std::vector<LoadedCase>& train_cases,
                            const std::vector<ISNet>& models, const ExperimentConfig& cfg,
                            LossCurve* curve, std::ostream* log) {
    AggregatorConfig acfg = cfg.aggregator_config();
    acfg.in_channels = static_cast<int>(models.size());
    Aggregator agg(acfg);
    std::vector<ScaleSetting> scales;
    for (const auto& m : models) scales.push_back(m.scale());
    agg.channel_order = canonical_order(scales);
    agg.train_seed = cfg.seed;
    agg.trained_epochs = cfg.aggregator_train.epochs;
    if (cfg.aggregator_train.epochs == 0 || train_cases.empty()) return agg;

    struct SliceSample {
        std::vector<float> input;
        std::vector<float> target;
    };
    std::vector<SliceSample> slices;
    int PX = 0, PY = 0;
    for (const auto& c : train_cases) {
        std::vector<PredictionVolume> preds = run_ensemble(models, c.ct, cfg.prediction_stride_div);
        AggregatorInput in = stack_predictions(preds, c.ct);
        auto [px, py] = paddedPlane(in.shape, acfg.levels);
        PX = px;
        PY = py;
        for (int z = 0; z < in.shape[2]; ++z)
            slices.push_back({paddedSlice(in, z, px, py), paddedGtSlice(c.gt, z, px, py)});
        if (log) *log << "[aggregator] prepared case " << c.id << " (" << in.shape[2] << " slices)\n";
    }

    nn::Adam opt({cfg.aggregator_train.lr, 0.9f, 0.999f, 1e-8f});
    std::mt19937_64 shuffler(cfg.seed ^ 0x515CA11ull);
    const int B = cfg.aggregator_train.minibatch;

    for (int epoch = 0; epoch < cfg.aggregator_train.epochs; ++epoch) {
        std::vector<size_t> order(slices.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffler);
        double epoch_loss = 0;
        int steps = 0;
        for (size_t i = 0; i < order.size(); i += B) {
            agg.params().zero_grad();
            size_t hi = std::min(order.size(), i + B);
            const float inv = 1.f / static_cast<float>(hi - i);
            double batch_loss = 0;
            for (size_t k = i; k < hi; ++k) {
                const SliceSample& s = slices[order[k]];
                nn::Tape t;
                nn::Node* o = agg.forward(t, s.input, PX, PY);
                batch_loss += generalized_dice_loss(o->val.v, s.target);
                generalized_dice_loss_grad(o->val.v, s.target, o->grad.v, inv);
                t.backward();
            }
            opt.step(agg.params());
            epoch_loss += batch_loss / static_cast<double>(hi - i);
            ++steps;
        }
        epoch_loss /= std::max(1, steps);
        if (curve) curve->epoch_mean_loss.push_back(epoch_loss);
        if (log)
            *log << "[aggregator] epoch " << epoch + 1 << "/" << cfg.aggregator_train.epochs
                 << " gdl " << epoch_loss << "\n";
    }
    return agg;
}

FoldAssignment assign_folds(size_t n_cases, int folds, uint64_t seed) {
    std::vector<size_t> order(n_cases);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0xF01D5ull);
    std::shuffle(order.begin(), order.end(), rng);
    FoldAssignment fa;
    fa.fold_of_case.assign(n_cases, 0);
    for (size_t i = 0; i < n_cases; ++i) fa.fold_of_case[order[i]] = static_cast<int>(i % folds);
    return fa;
}

CrossValResult cross_validate(const std::vector<Case>& all_cases, const ExperimentConfig& cfg,
                              const std::string& run_dir, std::ostream* log) {
    cfg.validate();
    if (static_cast<int>(all_cases.size()) < cfg.folds)
        throw VolumeError("insufficient cases for the requested fold count");
    fs::create_directories(run_dir);

    std::vector<LoadedCase> loaded;
    for (const auto& c : all_cases)
        loaded.push_back({c.id, read_volume(c.ct_path, VolumeKind::CT),
                          read_volume(c.gt_path, VolumeKind::Mask)});

    CrossValResult res;
    res.folds = assign_folds(all_cases.size(), cfg.folds, cfg.seed);

    std::vector<ScaleSetting> order = canonical_order(cfg.scale_settings);
    std::vector<MetricsReport> scale_reports(order.size());
    for (size_t si = 0; si < order.size(); ++si)
        scale_reports[si].label =
            "ISNet (" + std::to_string(order[si].v) + "," + std::to_string(order[si].p) + ")";
    MetricsReport agg_report;
    agg_report.label = "Aggregation FCN";

    std::vector<LossCurve> curves;

    for (int fold = 0; fold < cfg.folds; ++fold) {
        std::vector<LoadedCase> train, test;
        for (size_t i = 0; i < loaded.size(); ++i)
            (res.folds.fold_of_case[i] == fold ? test : train).push_back(loaded[i]);
        if (train.empty() || test.empty()) throw VolumeError("empty fold split");
        fs::path fold_dir = fs::path(run_dir) / ("fold" + std::to_string(fold));
        fs::create_directories(fold_dir);
        if (log) *log << "=== fold " << fold << ": " << train.size() << " train / " << test.size()
                      << " test ===\n";

        std::vector<ISNet> models;
        for (const auto& s : order) {
            LossCurve curve;
            curve.label = "fold" + std::to_string(fold) + "_isnet_v" + std::to_string(s.v) + "_p" +
                          std::to_string(s.p);
            models.push_back(train_isnet_mem(train, s, cfg, &curve, log));
            curves.push_back(std::move(curve));
            save_isnet(models.back(), (fold_dir / ("isnet_v" + std::to_string(s.v) + "_p" +
                                                   std::to_string(s.p) + ".ckpt")).string());
        }

        LossCurve acurve;
        acurve.label = "fold" + std::to_string(fold) + "_aggregator";
        Aggregator agg = train_aggregator(train, models, cfg, &acurve, log);
        curves.push_back(std::move(acurve));
        save_aggregator(agg, (fold_dir / "aggregator.ckpt").string());

        for (const auto& tc : test) {
            std::vector<PredictionVolume> preds =
                run_ensemble(models, tc.ct, cfg.prediction_stride_div);
            AggregatorInput in = stack_predictions(preds, tc.ct);
            for (size_t si = 0; si < order.size(); ++si) {
                MetricsTriple m = evaluate_case(binarize(in.channels[si], cfg.threshold), tc.gt);
                scale_reports[si].per_case.push_back({tc.id, m.precision, m.recall, m.dice});
            }
            Volume fused = aggregate_case(agg, in);
            MetricsTriple m = evaluate_case(binarize(fused, cfg.threshold), tc.gt);
            agg_report.per_case.push_back({tc.id, m.precision, m.recall, m.dice});
            if (log) *log << "fold " << fold << " case " << tc.id << " aggregated dice " << m.dice
                          << "\n";
        }
    }

    for (auto& r : scale_reports) {
        r.recompute();
        res.reports.push_back(r);
    }
    agg_report.recompute();
    res.reports.push_back(agg_report);

    // artifacts
    {
        std::ofstream f(fs::path(run_dir) / "metrics.json");
        f << report_json(res.reports) << "\n";
    }
    {
        std::ofstream f(fs::path(run_dir) / "report.txt");
        f << report_table(res.reports);
    }
    {
        std::ofstream f(fs::path(run_dir) / "loss_curves.csv");
        f << "curve,epoch,loss\n";
        for (const auto& c : curves)
            for (size_t e = 0; e < c.epoch_mean_loss.size(); ++e)
                f << c.label << "," << e + 1 << "," << c.epoch_mean_loss[e] << "\n";
    }
    {
        json jf;
        jf["seed"] = cfg.seed;
        jf["folds"] = json::array();
        for (size_t i = 0; i < all_cases.size(); ++i)
            jf["folds"].push_back({{"case", all_cases[i].id}, {"fold", res.folds.fold_of_case[i]}});
        std::ofstream f(fs::path(run_dir) / "folds.json");
        f << jf.dump(2) << "\n";
    }
    return res;
}

} // namespace suseg
