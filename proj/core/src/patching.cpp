#include "suseg/patching.hpp"

#include <random>

namespace suseg {
namespace {

std::vector<float> clipPatch(const Volume& vol, std::array<int, 3> origin, int p) {
    std::vector<float> out(static_cast<size_t>(p) * p * p);
    size_t i = 0;
    for (int z = 0; z < p; ++z)
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
                out[i++] = vol.at(origin[0] + x, origin[1] + y, origin[2] + z);
    return out;
}

void checkFits(const std::array<int, 3>& shape, int p) {
    for (int a = 0; a < 3; ++a)
        if (shape[a] < p) throw VolumeError("volume smaller than patch");
}

} // namespace

std::vector<PatchSample> sample_training_patches(const ScaledVolumePair& pair, const Volume& gt,
                                                 const ScaleSetting& scale, int n, uint64_t seed) {
    if (n < 1) throw VolumeError("patch count must be >= 1");
    scale.validate();
    const int p = scale.p;
    const auto& shape = pair.wrange.shape;
    if (gt.shape != shape) throw VolumeError("ground truth not aligned with scaled volume");
    checkFits(shape, p);

    std::mt19937_64 rng(seed);
    std::array<std::uniform_int_distribution<int>, 3> dist = {
        std::uniform_int_distribution<int>(0, shape[0] - p),
        std::uniform_int_distribution<int>(0, shape[1] - p),
        std::uniform_int_distribution<int>(0, shape[2] - p)};

    std::vector<PatchSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        PatchSample s;
        s.origin = {dist[0](rng), dist[1](rng), dist[2](rng)};
        s.scale = scale;
        s.wrange_patch = clipPatch(pair.wrange, s.origin, p);
        s.nrange_patch = clipPatch(pair.nrange, s.origin, p);
        s.gt_patch = clipPatch(gt, s.origin, p);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<PatchSample> tile_volume(const ScaledVolumePair& pair, int p, int stride) {
    if (stride < 1 || stride > p) throw VolumeError("stride must be in [1, p]");
    const auto& shape = pair.wrange.shape;
    checkFits(shape, p);

    std::array<std::vector<int>, 3> axes;
    for (int a = 0; a < 3; ++a) {
        for (int o = 0;; o += stride) {
            if (o + p >= shape[a]) {
                axes[a].push_back(shape[a] - p); // clamped tail
                break;
            }
            axes[a].push_back(o);
        }
    }

    std::vector<PatchSample> out;
    out.reserve(axes[0].size() * axes[1].size() * axes[2].size());
    for (int oz : axes[2])
        for (int oy : axes[1])
            for (int ox : axes[0]) {
                PatchSample s;
                s.origin = {ox, oy, oz};
                s.scale = {shape[0], p};
                s.wrange_patch = clipPatch(pair.wrange, s.origin, p);
                s.nrange_patch = clipPatch(pair.nrange, s.origin, p);
                out.push_back(std::move(s));
            }
    return out;
}

Volume reconstruct(const std::vector<std::pair<std::array<int, 3>, std::vector<float>>>& patches,
                   int p, std::array<int, 3> scaled_shape) {
    std::vector<double> sum(static_cast<size_t>(scaled_shape[0]) * scaled_shape[1] * scaled_shape[2], 0.0);
    std::vector<uint32_t> count(sum.size(), 0);
    auto idx = [&](int x, int y, int z) {
        return static_cast<size_t>(x) +
               static_cast<size_t>(scaled_shape[0]) * (y + static_cast<size_t>(scaled_shape[1]) * z);
    };
    for (const auto& [origin, pred] : patches) {
        if (pred.size() != static_cast<size_t>(p) * p * p) throw VolumeError("patch prediction size mismatch");
        for (int a = 0; a < 3; ++a)
            if (origin[a] < 0 || origin[a] + p > scaled_shape[a]) throw VolumeError("patch out of bounds");
        size_t i = 0;
        for (int z = 0; z < p; ++z)
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x, ++i) {
                    size_t j = idx(origin[0] + x, origin[1] + y, origin[2] + z);
                    sum[j] += pred[i];
                    ++count[j];
                }
    }
    Volume out(scaled_shape, {1, 1, 1}, VolumeKind::Prediction);
    for (size_t j = 0; j < sum.size(); ++j) {
        if (count[j] == 0) throw VolumeError("incomplete tiling");
        out.data[j] = static_cast<float>(sum[j] / count[j]);
    }
    return out;
}

Volume pad_to_patch(const Volume& vol, int p, float fill, PadRecord& rec) {
    rec = PadRecord{};
    std::array<int, 3> shape = vol.shape;
    bool need = false;
    for (int a = 0; a < 3; ++a)
        if (shape[a] < p) {
            int d = p - shape[a];
            rec.lo[a] = d / 2;
            rec.hi[a] = d - rec.lo[a];
            shape[a] = p;
            need = true;
        }
    if (!need) return vol;
    Volume out(shape, vol.spacing, vol.kind, fill);
    for (int z = 0; z < vol.shape[2]; ++z)
        for (int y = 0; y < vol.shape[1]; ++y)
            for (int x = 0; x < vol.shape[0]; ++x)
                out.at(x + rec.lo[0], y + rec.lo[1], z + rec.lo[2]) = vol.at(x, y, z);
    return out;
}

Volume crop_pad(const Volume& vol, const PadRecord& rec) {
    if (!rec.any()) return vol;
    std::array<int, 3> shape;
    for (int a = 0; a < 3; ++a) shape[a] = vol.shape[a] - rec.lo[a] - rec.hi[a];
    Volume out(shape, vol.spacing, vol.kind);
    for (int z = 0; z < shape[2]; ++z)
        for (int y = 0; y < shape[1]; ++y)
            for (int x = 0; x < shape[0]; ++x)
                out.at(x, y, z) = vol.at(x + rec.lo[0], y + rec.lo[1], z + rec.lo[2]);
    return out;
}

} // namespace suseg
