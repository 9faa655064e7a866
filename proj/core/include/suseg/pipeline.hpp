#pragma once

#include "suseg/checkpoint.hpp"
#include "suseg/config.hpp"
#include "suseg/losses.hpp"
#include "suseg/metrics.hpp"

#include <functional>
#include <iosfwd>

namespace suseg {

struct Case {
    std::string id;
    std::string ct_path;
    std::string gt_path;
};

// Loads the <id>_ct / <id>_gt pairs listed in a phantom manifest.json.
std::vector<Case> load_manifest(const std::string& manifest_path);

struct LossCurve {
    std::string label;
    std::vector<double> epoch_mean_loss;
};

// Trains one scale-specific ISNet by minimizing the composite dice loss with
// Adam. Deterministic given config.seed.
ISNet train_isnet(const std::vector<Case>& cases, const ScaleSetting& scale,
                  const ExperimentConfig& cfg, LossCurve* curve = nullptr,
                  std::ostream* log = nullptr);

// In-memory variant for tests and the aggregator path.
struct LoadedCase {
    std::string id;
    Volume ct;
    Volume gt;
};
ISNet train_isnet_mem(const std::vector<LoadedCase>& cases, const ScaleSetting& scale,
                      const ExperimentConfig& cfg, LossCurve* curve = nullptr,
                      std::ostream* log = nullptr);

// Patch-wise prediction of a whole CT: preprocess, tile at stride
// p/stride_div, predict, reconstruct.
PredictionVolume predict_case(const ISNet& model, const Volume& ct, int stride_div = 2);

// Same plumbing with an arbitrary per-patch predictor (used by tests to push
// an oracle through the tiling path).
using PatchPredictor = std::function<std::vector<float>(const PatchSample&)>;
PredictionVolume predict_case_with(const PatchPredictor& fn, const ScaleSetting& scale,
                                   const Volume& ct, int stride_div = 2);

// One prediction volume per configured scale, canonical order.
std::vector<PredictionVolume> run_ensemble(const std::vector<ISNet>& models, const Volume& ct,
                                           int stride_div = 2);

Aggregator train_aggregator(const std::vector<LoadedCase>& train_cases,
                            const std::vector<ISNet>& models, const ExperimentConfig& cfg,
                            LossCurve* curve = nullptr, std::ostream* log = nullptr);

// Aggregation with slice padding to the required 2^levels multiple.
Volume aggregate_case(const Aggregator& agg, const AggregatorInput& input);

struct FoldAssignment {
    std::vector<int> fold_of_case; // parallel to the case list
};
FoldAssignment assign_folds(size_t n_cases, int folds, uint64_t seed);

struct CrossValResult {
    std::vector<MetricsReport> reports; // per-scale rows then "Aggregation FCN"
    FoldAssignment folds;
};

// Full k-fold driver; writes checkpoints, metrics.json, report.txt,
// loss_curves.csv and folds.json under run_dir (created if needed).
CrossValResult cross_validate(const std::vector<Case>& all_cases, const ExperimentConfig& cfg,
                              const std::string& run_dir, std::ostream* log = nullptr);

} // namespace suseg
