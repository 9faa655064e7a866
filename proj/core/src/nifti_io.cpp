#include "suseg/nifti_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>

namespace suseg {
namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtInt32 = 8;
constexpr int16_t kDtFloat32 = 16;
constexpr int16_t kDtFloat64 = 64;
constexpr int16_t kDtUint16 = 512;

struct GzFile {
    gzFile f = nullptr;
    explicit GzFile(const std::string& path, const char* mode) { f = gzopen(path.c_str(), mode); }
    ~GzFile() {
        if (f) gzclose(f);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;
};

bool endsWith(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
void readTyped(gzFile f, std::vector<float>& out) {
    std::vector<T> raw(out.size());
    size_t bytes = raw.size() * sizeof(T);
    if (gzread(f, raw.data(), static_cast<unsigned>(bytes)) != static_cast<int>(bytes))
        throw VolumeError("truncated NIfTI voxel data");
    for (size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i]);
}

} // namespace

Volume read_volume(const std::string& path, VolumeKind kind) {
    GzFile gz(path, "rb");
    if (!gz.f) throw VolumeError("cannot open file: " + path);

    Nifti1Header hdr;
    if (gzread(gz.f, &hdr, sizeof(hdr)) != static_cast<int>(sizeof(hdr)))
        throw VolumeError("truncated NIfTI header: " + path);
    if (hdr.sizeof_hdr != 348)
        throw VolumeError("malformed NIfTI header (bad sizeof_hdr, big-endian files unsupported): " + path);
    if (std::strncmp(hdr.magic, "n+1", 3) != 0)
        throw VolumeError("malformed NIfTI header (bad magic): " + path);
    if (hdr.dim[0] != 3) {
        // A trailing singleton 4th dimension is tolerated.
        if (!(hdr.dim[0] == 4 && hdr.dim[4] == 1)) throw VolumeError("non-3D image: " + path);
    }

    Volume vol;
    vol.kind = kind;
    vol.shape = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
    for (int a = 0; a < 3; ++a) {
        if (vol.shape[a] <= 0) throw VolumeError("malformed NIfTI header (bad dims): " + path);
        vol.spacing[a] = std::abs(static_cast<double>(hdr.pixdim[a + 1]));
        if (vol.spacing[a] <= 0) throw VolumeError("malformed NIfTI header (bad pixdim): " + path);
    }
    vol.data.resize(static_cast<size_t>(vol.shape[0]) * vol.shape[1] * vol.shape[2]);

    long offset = static_cast<long>(hdr.vox_offset);
    if (offset < static_cast<long>(sizeof(hdr))) throw VolumeError("malformed NIfTI header (bad vox_offset)");
    for (long skip = offset - static_cast<long>(sizeof(hdr)); skip > 0; --skip) {
        char c;
        if (gzread(gz.f, &c, 1) != 1) throw VolumeError("truncated NIfTI file: " + path);
    }

    switch (hdr.datatype) {
        case kDtUint8: readTyped<uint8_t>(gz.f, vol.data); break;
        case kDtInt16: readTyped<int16_t>(gz.f, vol.data); break;
        case kDtUint16: readTyped<uint16_t>(gz.f, vol.data); break;
        case kDtInt32: readTyped<int32_t>(gz.f, vol.data); break;
        case kDtFloat32: readTyped<float>(gz.f, vol.data); break;
        case kDtFloat64: readTyped<double>(gz.f, vol.data); break;
        default: throw VolumeError("unsupported NIfTI datatype " + std::to_string(hdr.datatype));
    }
    if (hdr.scl_slope != 0.f && !(hdr.scl_slope == 1.f && hdr.scl_inter == 0.f))
        for (float& v : vol.data) v = v * hdr.scl_slope + hdr.scl_inter;

    vol.validate();
    return vol;
}

void write_volume(const Volume& vol, const std::string& path) {
    vol.validate();

    Nifti1Header hdr;
    std::memset(&hdr, 0, sizeof(hdr));
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<int16_t>(vol.shape[0]);
    hdr.dim[2] = static_cast<int16_t>(vol.shape[1]);
    hdr.dim[3] = static_cast<int16_t>(vol.shape[2]);
    for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
    hdr.pixdim[0] = 1.f;
    for (int a = 0; a < 3; ++a) hdr.pixdim[a + 1] = static_cast<float>(vol.spacing[a]);
    hdr.vox_offset = 352.f;
    hdr.scl_slope = 1.f;
    hdr.scl_inter = 0.f;
    hdr.sform_code = 1;
    hdr.srow_x[0] = static_cast<float>(vol.spacing[0]);
    hdr.srow_y[1] = static_cast<float>(vol.spacing[1]);
    hdr.srow_z[2] = static_cast<float>(vol.spacing[2]);
    std::memcpy(hdr.magic, "n+1", 4);

    switch (vol.kind) {
        case VolumeKind::Mask:
            hdr.datatype = kDtUint8;
            hdr.bitpix = 8;
            break;
        case VolumeKind::CT:
            hdr.datatype = kDtInt16;
            hdr.bitpix = 16;
            break;
        case VolumeKind::Prediction:
            hdr.datatype = kDtFloat32;
            hdr.bitpix = 32;
            break;
    }

    // Mode "wbT" writes without a gzip wrapper for plain .nii paths.
    GzFile gz(path, endsWith(path, ".gz") ? "wb" : "wbT");
    if (!gz.f) throw VolumeError("cannot open file for writing: " + path);

    auto put = [&](const void* p, size_t n) {
        if (gzwrite(gz.f, p, static_cast<unsigned>(n)) != static_cast<int>(n))
            throw VolumeError("write failure: " + path);
    };
    put(&hdr, sizeof(hdr));
    const char pad[4] = {0, 0, 0, 0};
    put(pad, 4);

    if (vol.kind == VolumeKind::Mask) {
        std::vector<uint8_t> raw(vol.data.size());
        for (size_t i = 0; i < raw.size(); ++i) raw[i] = vol.data[i] != 0.f ? 1 : 0;
        put(raw.data(), raw.size());
    } else if (vol.kind == VolumeKind::CT) {
        std::vector<int16_t> raw(vol.data.size());
        for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<int16_t>(std::lround(vol.data[i]));
        put(raw.data(), raw.size() * 2);
    } else {
        put(vol.data.data(), vol.data.size() * 4);
    }
}

} // namespace suseg
