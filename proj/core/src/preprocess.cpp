#include "suseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace suseg {
namespace {

float sampleTrilinear(const Volume& vol, double x, double y, double z) {
    const auto& sh = vol.shape;
    auto clampi = [](int i, int n) { return std::min(std::max(i, 0), n - 1); };
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y)),
        z0 = static_cast<int>(std::floor(z));
    double fx = x - x0, fy = y - y0, fz = z - z0;
    int x1 = clampi(x0 + 1, sh[0]), y1 = clampi(y0 + 1, sh[1]), z1 = clampi(z0 + 1, sh[2]);
    x0 = clampi(x0, sh[0]);
    y0 = clampi(y0, sh[1]);
    z0 = clampi(z0, sh[2]);
    double c00 = vol.at(x0, y0, z0) * (1 - fx) + vol.at(x1, y0, z0) * fx;
    double c10 = vol.at(x0, y1, z0) * (1 - fx) + vol.at(x1, y1, z0) * fx;
    double c01 = vol.at(x0, y0, z1) * (1 - fx) + vol.at(x1, y0, z1) * fx;
    double c11 = vol.at(x0, y1, z1) * (1 - fx) + vol.at(x1, y1, z1) * fx;
    double c0 = c00 * (1 - fy) + c10 * fy;
    double c1 = c01 * (1 - fy) + c11 * fy;
    return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

float sampleNearest(const Volume& vol, double x, double y, double z) {
    auto clampi = [](long i, int n) { return static_cast<int>(std::min<long>(std::max<long>(i, 0), n - 1)); };
    return vol.at(clampi(std::lround(x), vol.shape[0]), clampi(std::lround(y), vol.shape[1]),
                  clampi(std::lround(z), vol.shape[2]));
}

Volume padInPlane(const Volume& vol, float fill, int& plox, int& phix, int& ploy, int& phiy) {
    plox = phix = ploy = phiy = 0;
    if (vol.shape[0] == vol.shape[1]) return vol;
    int side = std::max(vol.shape[0], vol.shape[1]);
    int dx = side - vol.shape[0], dy = side - vol.shape[1];
    plox = dx / 2;
    phix = dx - plox;
    ploy = dy / 2;
    phiy = dy - ploy;
    Volume out({side, side, vol.shape[2]}, vol.spacing, vol.kind, fill);
    for (int z = 0; z < vol.shape[2]; ++z)
        for (int y = 0; y < vol.shape[1]; ++y)
            for (int x = 0; x < vol.shape[0]; ++x) out.at(x + plox, y + ploy, z) = vol.at(x, y, z);
    return out;
}

} // namespace

Volume resample(const Volume& vol, std::array<int, 3> new_shape, Interpolation interp) {
    if (new_shape == vol.shape) return vol;
    Volume out(new_shape, vol.spacing, vol.kind);
    double rx = static_cast<double>(vol.shape[0]) / new_shape[0];
    double ry = static_cast<double>(vol.shape[1]) / new_shape[1];
    double rz = static_cast<double>(vol.shape[2]) / new_shape[2];
    for (int a = 0; a < 3; ++a)
        out.spacing[a] = vol.spacing[a] * vol.shape[a] / new_shape[a];
#pragma omp parallel for
    for (int z = 0; z < new_shape[2]; ++z) {
        double sz = (z + 0.5) * rz - 0.5;
        for (int y = 0; y < new_shape[1]; ++y) {
            double sy = (y + 0.5) * ry - 0.5;
            for (int x = 0; x < new_shape[0]; ++x) {
                double sx = (x + 0.5) * rx - 0.5;
                out.at(x, y, z) = interp == Interpolation::Trilinear ? sampleTrilinear(vol, sx, sy, sz)
                                                                     : sampleNearest(vol, sx, sy, sz);
            }
        }
    }
    return out;
}

Volume resample_isotropic(const Volume& vol, Interpolation interp) {
    for (double s : vol.spacing)
        if (!(s > 0)) throw VolumeError("non-positive voxel spacing");
    double s = std::min({vol.spacing[0], vol.spacing[1], vol.spacing[2]});
    std::array<int, 3> sh;
    for (int a = 0; a < 3; ++a)
        sh[a] = std::max(1, static_cast<int>(std::lround(vol.shape[a] * vol.spacing[a] / s)));
    Volume out = resample(vol, sh, interp);
    out.spacing = {s, s, s};
    return out;
}

Volume scale_to_v(const Volume& vol, int v, Interpolation interp, float fill, PreprocessMeta* meta) {
    if (v < 8) throw VolumeError("degenerate target resolution v < 8");
    int plox, phix, ploy, phiy;
    Volume padded = padInPlane(vol, fill, plox, phix, ploy, phiy);
    double factor = static_cast<double>(v) / padded.shape[0];
    int z = std::max(1, static_cast<int>(std::lround(padded.shape[2] * factor)));
    Volume out = resample(padded, {v, v, z}, interp);
    if (meta) {
        meta->pad_lo_x = plox;
        meta->pad_hi_x = phix;
        meta->pad_lo_y = ploy;
        meta->pad_hi_y = phiy;
        meta->scale_factor = factor;
        meta->scaled_shape = {v, v, z};
    }
    return out;
}

Volume normalize(const Volume& vol, const NormalizationRange& range) {
    Volume out(vol.shape, vol.spacing, VolumeKind::Prediction);
    float span = range.hi - range.lo;
    for (size_t i = 0; i < vol.data.size(); ++i)
        out.data[i] = std::clamp((vol.data[i] - range.lo) / span, 0.f, 1.f);
    return out;
}

ScaledVolumePair preprocess_ct(const Volume& vol, int v) {
    if (vol.kind != VolumeKind::CT) throw VolumeError("preprocess_ct expects a CT volume");
    ScaledVolumePair pair;
    pair.meta.original_shape = vol.shape;
    pair.meta.original_spacing = vol.spacing;
    Volume iso = resample_isotropic(vol, Interpolation::Trilinear);
    pair.meta.iso_shape = iso.shape;
    pair.meta.iso_spacing = iso.spacing[0];
    Volume scaled = scale_to_v(iso, v, Interpolation::Trilinear, -1000.f, &pair.meta);
    pair.wrange = normalize(scaled, kWRange);
    pair.nrange = normalize(scaled, kNRange);
    return pair;
}

Volume preprocess_mask(const Volume& gt, int v) {
    if (gt.kind != VolumeKind::Mask) throw VolumeError("preprocess_mask expects a mask volume");
    Volume iso = resample_isotropic(gt, Interpolation::Nearest);
    Volume scaled = scale_to_v(iso, v, Interpolation::Nearest, 0.f);
    for (float& x : scaled.data) x = x > 0.5f ? 1.f : 0.f;
    scaled.kind = VolumeKind::Mask;
    return scaled;
}

Volume to_original_grid(const Volume& pred, const PreprocessMeta& meta) {
    if (pred.shape != meta.scaled_shape) throw VolumeError("prediction/meta shape mismatch");
    std::array<int, 3> padded_iso = {meta.iso_shape[0] + meta.pad_lo_x + meta.pad_hi_x,
                                     meta.iso_shape[1] + meta.pad_lo_y + meta.pad_hi_y,
                                     meta.iso_shape[2]};
    Volume up = resample(pred, padded_iso, Interpolation::Trilinear);
    Volume iso(meta.iso_shape, {meta.iso_spacing, meta.iso_spacing, meta.iso_spacing}, VolumeKind::Prediction);
    for (int z = 0; z < iso.shape[2]; ++z)
        for (int y = 0; y < iso.shape[1]; ++y)
            for (int x = 0; x < iso.shape[0]; ++x)
                iso.at(x, y, z) = up.at(x + meta.pad_lo_x, y + meta.pad_lo_y, z);
    Volume out = resample(iso, meta.original_shape, Interpolation::Trilinear);
    out.spacing = meta.original_spacing;
    out.kind = VolumeKind::Prediction;
    for (float& x : out.data) x = std::clamp(x, 0.f, 1.f);
    return out;
}

} // namespace suseg
