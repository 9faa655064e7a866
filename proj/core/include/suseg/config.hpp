#pragma once

#include "suseg/aggregator.hpp"
#include "suseg/isnet.hpp"

#include <string>

namespace suseg {

struct TrainParams {
    int minibatch = 16;
    float lr = 1e-5f;
    int epochs = 40;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::vector<ScaleSetting> scale_settings{{192, 32}, {128, 32}, {96, 16}};
    int folds = 3;
    TrainParams isnet_train{16, 1e-5f, 40};
    TrainParams aggregator_train{4, 1e-3f, 5};
    int patches_per_volume_per_epoch = 32;
    int prediction_stride_div = 2; // tiling stride = p / this
    uint64_t seed = 1234;

    // architecture knobs shared by every scale setting
    int isnet_levels = 3;
    int isnet_base_channels = 16;
    std::vector<int> dilation_rates{1, 2, 4};
    bool use_multi_encoder = true;
    bool use_deep_supervision = true;
    int aggregator_levels = 3;
    int aggregator_base_channels = 16;
    float threshold = 0.5f;

    void validate() const;
    ISNetConfig isnet_config(const ScaleSetting& s) const;
    AggregatorConfig aggregator_config() const;
};

// The 11 receptive-field settings used by the "paper" profile.
std::vector<ScaleSetting> paper_scale_settings();

// profile is "desk" or "paper"
ExperimentConfig default_config(const std::string& profile);

ExperimentConfig load_config(const std::string& path);

// "key=value"; unknown keys are rejected. See README for the schema.
void apply_override(ExperimentConfig& cfg, const std::string& kv);

} // namespace suseg
