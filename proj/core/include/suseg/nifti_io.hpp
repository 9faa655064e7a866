#pragma once

#include "suseg/volume.hpp"

namespace suseg {

// NIfTI-1 single-file (.nii / .nii.gz) I/O. Only 3D little-endian images are
// supported. Masks are written as uint8, CT as int16, predictions as float32.
Volume read_volume(const std::string& path, VolumeKind kind);
void write_volume(const Volume& vol, const std::string& path);

} // namespace suseg
