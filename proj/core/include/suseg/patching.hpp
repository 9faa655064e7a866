#pragma once

#include "suseg/preprocess.hpp"
#include "suseg/volume.hpp"

#include <optional>

namespace suseg {

// Receptive-field configuration: scaled-volume resolution v and patch size p.
struct ScaleSetting {
    int v = 0;
    int p = 0;

    bool operator==(const ScaleSetting&) const = default;
    void validate() const {
        if (p < 8) throw VolumeError("patch size p must be >= 8");
        if (p % 8 != 0) throw VolumeError("patch size p must be divisible by 8");
        if (p > v) throw VolumeError("patch size p must not exceed v");
    }
};

struct PatchSample {
    std::vector<float> wrange_patch; // p^3, values in [0,1]
    std::vector<float> nrange_patch;
    std::optional<std::vector<float>> gt_patch; // p^3, values in {0,1}
    std::array<int, 3> origin{};                // voxel offset in the scaled volume
    ScaleSetting scale{};
};

// n patches at seeded-uniform random origins; W/N/GT clipped at identical
// positions. gt must be geometrically aligned with pair.
std::vector<PatchSample> sample_training_patches(const ScaledVolumePair& pair, const Volume& gt,
                                                 const ScaleSetting& scale, int n, uint64_t seed);

// Regular tiling covering every voxel; the last tile per axis is clamped to
// the volume border.
std::vector<PatchSample> tile_volume(const ScaledVolumePair& pair, int p, int stride);

// Mean-overlap reconstruction of patch predictions into a full volume.
Volume reconstruct(const std::vector<std::pair<std::array<int, 3>, std::vector<float>>>& patches,
                   int p, std::array<int, 3> scaled_shape);

// Symmetric padding applied when a scaled axis is smaller than p. Records how
// much was added so predictions in the pad can be cropped away.
struct PadRecord {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};
    bool any() const { return lo != std::array<int, 3>{0, 0, 0} || hi != std::array<int, 3>{0, 0, 0}; }
};

Volume pad_to_patch(const Volume& vol, int p, float fill, PadRecord& rec);
Volume crop_pad(const Volume& vol, const PadRecord& rec);

} // namespace suseg
