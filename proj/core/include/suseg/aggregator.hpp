#pragma once

#include "suseg/nn/ops.hpp"
#include "suseg/patching.hpp"
#include "suseg/volume.hpp"

#include <memory>

namespace suseg {

struct AggregatorConfig {
    int in_channels = 11; // K, the ensemble size
    int levels = 3;
    int base_channels = 16;
    float threshold = 0.5f;
    uint64_t init_seed = 11;

    void validate() const;
    bool operator==(const AggregatorConfig&) const = default;
};

// One reconstructed ISNet prediction, tagged with its scale and carried at
// the scaled grid together with the mapping back to the original CT grid.
struct PredictionVolume {
    Volume scaled;        // (v, v, z) probabilities
    PreprocessMeta meta;  // recorded by preprocess_ct
    ScaleSetting scale;
};

// Canonical channel order: v descending, then p descending.
std::vector<ScaleSetting> canonical_order(std::vector<ScaleSetting> scales);

// K prediction volumes mapped onto the original CT grid, stacked per axial
// slice in canonical channel order.
struct AggregatorInput {
    std::vector<Volume> channels; // original-grid probability volumes
    std::vector<ScaleSetting> channel_order;
    std::array<int, 3> shape{};
};

AggregatorInput stack_predictions(const std::vector<PredictionVolume>& preds, const Volume& original);

// 2D encoder-decoder over K-channel axial slices.
class Aggregator {
  public:
    explicit Aggregator(const AggregatorConfig& cfg);
    ~Aggregator();
    Aggregator(Aggregator&&) noexcept;
    Aggregator& operator=(Aggregator&&) noexcept;

    // slice: K channels of (X, Y); returns the sigmoid output node.
    nn::Node* forward(nn::Tape& tape, const std::vector<float>& slice, int X, int Y) const;

    // Per-slice inference over the whole stack, restacked along Z.
    Volume aggregate(const AggregatorInput& input) const;

    nn::ParamStore& params();
    const nn::ParamStore& params() const;
    const AggregatorConfig& config() const { return config_; }

    std::vector<ScaleSetting> channel_order; // fixed at training, checked at load
    uint64_t train_seed = 0;
    uint64_t trained_epochs = 0;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    AggregatorConfig config_;
};

// Extracts one K-channel axial slice (z fixed) as contiguous floats.
std::vector<float> slice_channels(const AggregatorInput& input, int z);

} // namespace suseg
