#include "suseg/volume.hpp"

namespace suseg {

void Volume::validate() const {
    for (double s : spacing)
        if (!(s > 0)) throw VolumeError("non-positive voxel spacing");
    if (static_cast<size_t>(shape[0]) * shape[1] * shape[2] != data.size())
        throw VolumeError("shape/data size mismatch");
    if (kind == VolumeKind::Mask) {
        for (float v : data)
            if (v != 0.f && v != 1.f) throw VolumeError("non-binary mask");
    } else if (kind == VolumeKind::Prediction) {
        for (float v : data)
            if (!(v >= 0.f && v <= 1.f)) throw VolumeError("prediction value outside [0,1]");
    }
}

} // namespace suseg
