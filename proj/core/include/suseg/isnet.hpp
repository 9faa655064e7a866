#pragma once

#include "suseg/nn/ops.hpp"
#include "suseg/patching.hpp"

#include <memory>

namespace suseg {

struct ISNetConfig {
    int p = 32;
    int levels = 3;          // encoder downsamplings
    int base_channels = 16;  // channels at the first level, doubled per level
    std::vector<int> dilation_rates{1, 2, 4};
    bool use_multi_encoder = true;   // ME: separate WRange/NRange encoders
    bool use_deep_supervision = true; // DS: two subscale output heads
    uint64_t init_seed = 7;

    void validate() const;
    bool operator==(const ISNetConfig&) const = default;
};

// Dual-encoder patch segmentation network. Encoders run dense pooling
// connections (mixed-pool chains) into a concatenating bottleneck; the
// decoder takes skip connections from the WRange encoder and carries
// dilated-convolution blocks at the bottleneck and first decoder level.
class ISNet {
  public:
    ISNet(const ISNetConfig& cfg, const ScaleSetting& scale);
    ~ISNet();
    ISNet(ISNet&&) noexcept;
    ISNet& operator=(ISNet&&) noexcept;

    struct Outputs {
        nn::Node* main = nullptr;       // p^3 probabilities
        nn::Node* sub_quarter = nullptr; // DS head from 1/4 resolution, upsampled
        nn::Node* sub_half = nullptr;    // DS head from 1/2 resolution, upsampled
    };

    // npatch may be empty when ME is off.
    Outputs forward(nn::Tape& tape, const std::vector<float>& wpatch,
                    const std::vector<float>& npatch) const;

    std::vector<float> predict_patch(const PatchSample& sample) const;

    nn::ParamStore& params();
    const nn::ParamStore& params() const;
    const ISNetConfig& config() const { return config_; }
    const ScaleSetting& scale() const { return scale_; }

    // training fingerprint, carried into checkpoints
    uint64_t train_seed = 0;
    uint64_t trained_epochs = 0;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ISNetConfig config_;
    ScaleSetting scale_;
};

} // namespace suseg
