#include "suseg/phantom.hpp"

#include <cmath>
#include <random>

namespace suseg {
namespace {

constexpr double kAirHU = -1000.0;
constexpr double kBodyHU = 40.0;
constexpr double kLungHU = -850.0;

struct Ellipsoid {
    std::array<double, 3> c;
    std::array<double, 3> a;

    // normalized radius: <1 inside, 1 on the surface
    double q(double x, double y, double z) const {
        double dx = (x - c[0]) / a[0], dy = (y - c[1]) / a[1], dz = (z - c[2]) / a[2];
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    bool contains(double x, double y, double z) const { return q(x, y, z) < 1.0; }
};

} // namespace

PhantomPair generate_phantom(const PhantomSpec& spec) {
    if (spec.n_ggo < 0 || spec.n_consolidation < 0) throw VolumeError("negative lesion count");
    if (spec.lesion_radius_min_mm < spec.spacing[0])
        throw VolumeError("lesion radius below one voxel");

    const double X = spec.shape[0], Y = spec.shape[1], Z = spec.shape[2];
    Ellipsoid body{{X / 2, Y / 2, Z / 2}, {0.46 * X, 0.44 * Y, 0.52 * Z}};
    Ellipsoid lungs[2] = {{{0.32 * X, 0.5 * Y, 0.5 * Z}, {0.15 * X, 0.30 * Y, 0.40 * Z}},
                          {{0.68 * X, 0.5 * Y, 0.5 * Z}, {0.15 * X, 0.30 * Y, 0.40 * Z}}};

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Log-uniform radii cover both tiny and large lesions.
    auto drawRadiusVox = [&]() {
        double lo = std::log(spec.lesion_radius_min_mm), hi = std::log(spec.lesion_radius_max_mm);
        return std::exp(lo + (hi - lo) * unit(rng)) / spec.spacing[0];
    };

    std::vector<LesionInfo> lesions;
    auto placeLesion = [&](double hu_lo, double hu_hi, bool is_ggo) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            LesionInfo L;
            for (int a = 0; a < 3; ++a) {
                double r = drawRadiusVox();
                L.semi_axes[a] = r;
            }
            const Ellipsoid& lung = lungs[unit(rng) < 0.5 ? 0 : 1];
            for (int a = 0; a < 3; ++a)
                L.center[a] = lung.c[a] + (2 * unit(rng) - 1) * lung.a[a] * 0.8;
            L.hu = hu_lo + (hu_hi - hu_lo) * unit(rng);
            L.is_ggo = is_ggo;
            // the whole support must stay inside the lung
            bool ok = true;
            for (int a = 0; a < 3 && ok; ++a)
                for (int s = -1; s <= 1 && ok; s += 2) {
                    std::array<double, 3> p = L.center;
                    p[a] += s * L.semi_axes[a];
                    ok = lung.contains(p[0], p[1], p[2]);
                }
            if (ok) {
                lesions.push_back(L);
                return;
            }
        }
        throw VolumeError("lungs too small to place requested lesions");
    };

    for (int i = 0; i < spec.n_ggo; ++i) placeLesion(-800.0, 0.0, true);
    for (int i = 0; i < spec.n_consolidation; ++i) placeLesion(-300.0, 100.0, false);

    PhantomPair out;
    out.ct = Volume(spec.shape, spec.spacing, VolumeKind::CT);
    out.gt = Volume(spec.shape, spec.spacing, VolumeKind::Mask);
    out.lesions = lesions;

    for (int z = 0; z < spec.shape[2]; ++z)
        for (int y = 0; y < spec.shape[1]; ++y)
            for (int x = 0; x < spec.shape[0]; ++x) {
                double hu = kAirHU;
                if (body.contains(x, y, z)) hu = kBodyHU;
                if (lungs[0].contains(x, y, z) || lungs[1].contains(x, y, z)) hu = kLungHU;
                bool fg = false;
                for (const auto& L : lesions) {
                    Ellipsoid e{L.center, L.semi_axes};
                    double q = e.q(x, y, z);
                    if (q > 2.0) continue;
                    // soft edge roughly one voxel wide
                    double slope = std::min({L.semi_axes[0], L.semi_axes[1], L.semi_axes[2]});
                    double alpha = 1.0 / (1.0 + std::exp(-(1.0 - q) * 2.0 * slope));
                    hu = alpha * L.hu + (1.0 - alpha) * hu;
                    fg = fg || q < 1.0;
                }
                out.ct.at(x, y, z) = static_cast<float>(hu);
                out.gt.at(x, y, z) = fg ? 1.f : 0.f;
            }

    if (spec.noise_sd > 0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sd);
        for (float& v : out.ct.data) v = static_cast<float>(v + noise(rng));
    }
    return out;
}

} // namespace suseg
