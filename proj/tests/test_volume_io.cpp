#include <doctest.h>

#include "suseg/nifti_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace suseg;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    fs::path d = fs::temp_directory_path() / "suseg_io_test";
    fs::create_directories(d);
    return d;
}

Volume randomCT(uint64_t seed) {
    Volume v({7, 5, 9}, {0.7, 0.7, 1.25}, VolumeKind::CT);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(-1000, 400);
    for (float& x : v.data) x = static_cast<float>(d(rng));
    return v;
}

} // namespace

TEST_CASE("ct round trip, .nii and .nii.gz") {
    Volume v = randomCT(3);
    for (const char* name : {"rt_ct.nii", "rt_ct.nii.gz"}) {
        std::string path = (tmpdir() / name).string();
        write_volume(v, path);
        Volume r = read_volume(path, VolumeKind::CT);
        CHECK(r.shape == v.shape);
        for (int a = 0; a < 3; ++a) CHECK(r.spacing[a] == doctest::Approx(v.spacing[a]).epsilon(1e-6));
        REQUIRE(r.data.size() == v.data.size());
        for (size_t i = 0; i < v.data.size(); ++i) CHECK(r.data[i] == v.data[i]);
    }
}

TEST_CASE("mask round trip stays binary") {
    Volume m({6, 6, 4}, {1, 1, 1}, VolumeKind::Mask);
    std::mt19937_64 rng(5);
    for (float& x : m.data) x = static_cast<float>(rng() & 1u);
    std::string path = (tmpdir() / "rt_mask.nii.gz").string();
    write_volume(m, path);
    Volume r = read_volume(path, VolumeKind::Mask);
    REQUIRE(r.data.size() == m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) {
        CHECK(r.data[i] == m.data[i]);
        CHECK((r.data[i] == 0.f || r.data[i] == 1.f));
    }
}

TEST_CASE("prediction round trip keeps fractional values") {
    Volume p({4, 4, 4}, {1, 1, 1}, VolumeKind::Prediction, 0.5f);
    p.at(1, 2, 3) = 0.25f;
    std::string path = (tmpdir() / "rt_pred.nii.gz").string();
    write_volume(p, path);
    Volume r = read_volume(path, VolumeKind::Prediction);
    CHECK(r.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.at(1, 2, 3) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("4D image rejected") {
    Volume v = randomCT(7);
    std::string path = (tmpdir() / "dim4.nii").string();
    write_volume(v, path);
    // patch the header: dim[0] = 4 with a non-singleton 4th axis
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    int16_t dim0 = 4, dim4 = 2;
    f.seekp(40);
    f.write(reinterpret_cast<char*>(&dim0), 2);
    f.seekp(40 + 8);
    f.write(reinterpret_cast<char*>(&dim4), 2);
    f.close();
    CHECK_THROWS_WITH_AS(read_volume(path, VolumeKind::CT), doctest::Contains("non-3D image"),
                         VolumeError);
}

TEST_CASE("trailing singleton 4th dim tolerated") {
    Volume v = randomCT(11);
    std::string path = (tmpdir() / "dim4_singleton.nii").string();
    write_volume(v, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    int16_t dim0 = 4, dim4 = 1;
    f.seekp(40);
    f.write(reinterpret_cast<char*>(&dim0), 2);
    f.seekp(40 + 8);
    f.write(reinterpret_cast<char*>(&dim4), 2);
    f.close();
    Volume r = read_volume(path, VolumeKind::CT);
    CHECK(r.shape == v.shape);
}

TEST_CASE("non-binary mask rejected") {
    Volume v({3, 3, 3}, {1, 1, 1}, VolumeKind::CT, 0.f);
    v.at(1, 1, 1) = 2.f;
    std::string path = (tmpdir() / "mask_bad.nii").string();
    write_volume(v, path);
    CHECK_THROWS_WITH_AS(read_volume(path, VolumeKind::Mask), doctest::Contains("non-binary mask"),
                         VolumeError);
}

TEST_CASE("missing and malformed files rejected") {
    CHECK_THROWS_AS(read_volume((tmpdir() / "no_such_file.nii").string(), VolumeKind::CT),
                    VolumeError);
    std::string junk = (tmpdir() / "junk.nii").string();
    std::ofstream(junk) << "not a nifti file";
    CHECK_THROWS_AS(read_volume(junk, VolumeKind::CT), VolumeError);
}

TEST_CASE("validate enforces kind invariants") {
    Volume m({2, 2, 2}, {1, 1, 1}, VolumeKind::Mask, 0.f);
    CHECK_NOTHROW(m.validate());
    m.at(0, 0, 0) = 0.5f;
    CHECK_THROWS_AS(m.validate(), VolumeError);

    Volume p({2, 2, 2}, {1, 1, 1}, VolumeKind::Prediction, 0.5f);
    CHECK_NOTHROW(p.validate());
    p.at(0, 0, 0) = 1.5f;
    CHECK_THROWS_AS(p.validate(), VolumeError);

    Volume c({2, 2, 2}, {1, 1, -1}, VolumeKind::CT, 0.f);
    CHECK_THROWS_AS(c.validate(), VolumeError);
}
