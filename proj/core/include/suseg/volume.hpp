#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace suseg {

enum class VolumeKind { CT, Mask, Prediction };

// A 3D scalar grid with voxel spacing. Data is stored in x-fastest order:
// index = x + X*(y + Y*z). Z is the body axis.
struct Volume {
    std::vector<float> data;
    std::array<int, 3> shape{0, 0, 0};      // (X, Y, Z) voxels
    std::array<double, 3> spacing{1, 1, 1}; // mm per voxel
    VolumeKind kind = VolumeKind::CT;

    Volume() = default;
    Volume(std::array<int, 3> sh, std::array<double, 3> sp, VolumeKind k, float fill = 0.f)
        : data(static_cast<size_t>(sh[0]) * sh[1] * sh[2], fill), shape(sh), spacing(sp), kind(k) {}

    size_t size() const { return data.size(); }

    float& at(int x, int y, int z) {
        return data[static_cast<size_t>(x) + static_cast<size_t>(shape[0]) * (y + static_cast<size_t>(shape[1]) * z)];
    }
    float at(int x, int y, int z) const {
        return data[static_cast<size_t>(x) + static_cast<size_t>(shape[0]) * (y + static_cast<size_t>(shape[1]) * z)];
    }

    // Throws if spacing or voxel values violate the kind's invariants.
    void validate() const;
};

struct VolumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace suseg
