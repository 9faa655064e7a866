#pragma once

#include "suseg/volume.hpp"

namespace suseg {

struct PhantomSpec {
    std::array<int, 3> shape{96, 96, 96};
    std::array<double, 3> spacing{1, 1, 1};
    int n_ggo = 3;
    int n_consolidation = 2;
    double lesion_radius_min_mm = 3.0;
    double lesion_radius_max_mm = 12.0;
    uint64_t seed = 0;
    double noise_sd = 15.0; // HU
};

struct LesionInfo {
    std::array<double, 3> center; // voxels
    std::array<double, 3> semi_axes;
    double hu = 0;
    bool is_ggo = true;
};

struct PhantomPair {
    Volume ct;
    Volume gt;
    std::vector<LesionInfo> lesions;
};

// Synthetic chest-like CT: body ellipsoid ~40 HU, two lung ellipsoids
// ~-850 HU in -1000 HU air, with GGO blobs in [-800, 0] HU and consolidation
// blobs in [-300, 100] HU placed inside the lungs. Blob edges fall off with a
// ~1 voxel sigmoid; gt is the union of blob supports. Deterministic given
// spec.seed.
PhantomPair generate_phantom(const PhantomSpec& spec);

} // namespace suseg
