#pragma once

#include "suseg/volume.hpp"

#include <string>

namespace suseg {

// Writes per-axial-slice PPM images of the CT (WRange windowed grayscale)
// with the thresholded prediction contour drawn in red. Every `step`-th slice
// is emitted. Returns the number of images written.
int write_overlay_slices(const Volume& ct, const Volume& pred, float threshold,
                         const std::string& out_dir, const std::string& prefix, int step = 8);

} // namespace suseg
