#pragma once

#include "suseg/volume.hpp"

namespace suseg {

enum class Interpolation { Trilinear, Nearest };

struct NormalizationRange {
    float lo;
    float hi;
    const char* name;
};

inline constexpr NormalizationRange kWRange{-1000.f, 950.f, "WRange"};
inline constexpr NormalizationRange kNRange{-1000.f, -400.f, "NRange"};

// Geometry bookkeeping needed to map a prediction at the scaled grid back to
// the original CT grid.
struct PreprocessMeta {
    std::array<int, 3> original_shape{};
    std::array<double, 3> original_spacing{};
    std::array<int, 3> iso_shape{};
    double iso_spacing = 1.0;
    int pad_lo_x = 0, pad_hi_x = 0; // in-plane square padding, iso voxels
    int pad_lo_y = 0, pad_hi_y = 0;
    double scale_factor = 1.0; // padded-iso voxels -> scaled voxels
    std::array<int, 3> scaled_shape{};
};

struct ScaledVolumePair {
    Volume wrange; // values in [0,1], shape (v, v, z)
    Volume nrange;
    PreprocessMeta meta;
};

// Resample to the given shape; voxel centers are aligned across grids.
Volume resample(const Volume& vol, std::array<int, 3> new_shape, Interpolation interp);

// Resample to cubic voxels of edge min(sx, sy, sz).
Volume resample_isotropic(const Volume& vol, Interpolation interp);

// Scale an isotropic volume to (v, v, round(Z*v/X)), padding the smaller
// in-plane axis to square first. `fill` is the pad intensity.
Volume scale_to_v(const Volume& vol, int v, Interpolation interp, float fill,
                  PreprocessMeta* meta = nullptr);

// clamp((hu - lo) / (hi - lo), 0, 1)
Volume normalize(const Volume& vol, const NormalizationRange& range);

// Full CT path: isotropic resample (trilinear), scale to v, normalize twice.
ScaledVolumePair preprocess_ct(const Volume& vol, int v);

// Ground-truth path: identical geometry with nearest interpolation.
Volume preprocess_mask(const Volume& gt, int v);

// Trilinear upsampling of a scaled-grid prediction back to the original grid;
// inverts the geometric part of preprocess_ct. Values clamped to [0,1].
Volume to_original_grid(const Volume& pred, const PreprocessMeta& meta);

} // namespace suseg
