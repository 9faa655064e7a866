#include "suseg/overlay.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace suseg {

int write_overlay_slices(const Volume& ct, const Volume& pred, float threshold,
                         const std::string& out_dir, const std::string& prefix, int step) {
    if (ct.shape != pred.shape) throw VolumeError("overlay shape mismatch");
    std::filesystem::create_directories(out_dir);
    const int X = ct.shape[0], Y = ct.shape[1], Z = ct.shape[2];
    auto fg = [&](int x, int y, int z) { return pred.at(x, y, z) > threshold; };
    int written = 0;
    for (int z = 0; z < Z; z += std::max(1, step)) {
        std::string path = out_dir + "/" + prefix + "_z" + std::to_string(z) + ".ppm";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw VolumeError("cannot write overlay: " + path);
        f << "P6\n" << X << " " << Y << "\n255\n";
        std::vector<unsigned char> row(static_cast<size_t>(X) * 3);
        for (int y = 0; y < Y; ++y) {
            for (int x = 0; x < X; ++x) {
                float g = std::clamp((ct.at(x, y, z) + 1000.f) / 1950.f, 0.f, 1.f);
                unsigned char v = static_cast<unsigned char>(g * 255.f);
                unsigned char r = v, gg = v, b = v;
                if (fg(x, y, z)) {
                    // contour: foreground voxel with a background 4-neighbor
                    bool edge = x == 0 || y == 0 || x == X - 1 || y == Y - 1 || !fg(x - 1, y, z) ||
                                !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z);
                    if (edge) {
                        r = 255;
                        gg = 32;
                        b = 32;
                    }
                }
                row[3 * x] = r;
                row[3 * x + 1] = gg;
                row[3 * x + 2] = b;
            }
            f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
        ++written;
    }
    return written;
}

} // namespace suseg
