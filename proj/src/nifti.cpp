#include "voxaug/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "voxaug/error.hpp"

namespace voxaug::nifti {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// Byte offsets within the NIfTI-1 header.
constexpr int kOffDim = 40;
constexpr int kOffDatatype = 70;
constexpr int kOffBitpix = 72;
constexpr int kOffPixdim = 76;
constexpr int kOffVoxOffset = 108;
constexpr int kOffSclSlope = 112;
constexpr int kOffSclInter = 116;
constexpr int kOffXyztUnits = 123;
constexpr int kOffQformCode = 252;
constexpr int kOffSformCode = 254;
constexpr int kOffSrowX = 280;
constexpr int kOffMagic = 344;

enum Datatype : int {
    kUint8 = 2,
    kInt16 = 4,
    kInt32 = 8,
    kFloat32 = 16,
    kFloat64 = 64,
    kInt8 = 256,
    kUint16 = 512,
};

int bytes_per_voxel(int datatype) {
    switch (datatype) {
    case kUint8:
    case kInt8:
        return 1;
    case kInt16:
    case kUint16:
        return 2;
    case kInt32:
    case kFloat32:
        return 4;
    case kFloat64:
        return 8;
    default:
        return 0;
    }
}

bool is_integer_type(int datatype) {
    return datatype == kUint8 || datatype == kInt8 || datatype == kInt16 || datatype == kUint16 ||
           datatype == kInt32;
}

bool is_gz(const std::filesystem::path& p) {
    return p.extension() == ".gz";
}

// Whole-file read; gzread passes uncompressed files through transparently.
std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) {
        fail("io_error", "cannot open '" + path.string() + "'");
    }
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    while (true) {
        const int n = gzread(f, buf, sizeof(buf));
        if (n < 0) {
            int err = 0;
            const std::string msg = gzerror(f, &err);
            gzclose(f);
            fail("io_error", "read failed for '" + path.string() + "': " + msg);
        }
        if (n == 0) {
            break;
        }
        out.insert(out.end(), buf, buf + n);
    }
    gzclose(f);
    return out;
}

template <typename T>
T load(const std::vector<unsigned char>& b, std::size_t off, bool swap) {
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    if (swap) {
        unsigned char tmp[sizeof(T)];
        std::memcpy(tmp, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
        }
        std::memcpy(&v, tmp, sizeof(T));
    }
    return v;
}

struct Parsed {
    HeaderInfo info;
    std::size_t data_offset = 0;
    double slope = 1.0;
    double inter = 0.0;
};

Parsed parse_header(const std::vector<unsigned char>& b, const std::filesystem::path& path) {
    const std::string where = "'" + path.string() + "'";
    if (b.size() < kHeaderSize) {
        fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset " +
                                     std::to_string(b.size()) + ": file shorter than 348-byte header");
    }
    Parsed p;
    const auto sizeof_hdr = load<std::int32_t>(b, 0, false);
    if (sizeof_hdr == kHeaderSize) {
        p.info.swapped = false;
    } else if (load<std::int32_t>(b, 0, true) == kHeaderSize) {
        p.info.swapped = true;
    } else {
        fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset 0: sizeof_hdr != 348");
    }
    const bool sw = p.info.swapped;
    if (std::memcmp(b.data() + kOffMagic, "n+1\0", 4) != 0) {
        fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset 344: magic is not \"n+1\"");
    }
    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) {
        dim[i] = load<std::int16_t>(b, kOffDim + 2 * i, sw);
    }
    if (dim[0] < 1 || dim[0] > 7) {
        fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset 40: dim[0] out of range");
    }
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[i] > 1) {
            fail("not_3d", "expected 3-D volume, " + where + " has " + std::to_string(dim[0]) + " dimensions");
        }
    }
    for (int a = 0; a < 3; ++a) {
        const int extent = a + 1 <= dim[0] ? dim[a + 1] : 1;
        if (extent < 1) {
            fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset " +
                                         std::to_string(kOffDim + 2 * (a + 1)) + ": non-positive dimension");
        }
        p.info.shape[a] = extent;
        const float pd = load<float>(b, kOffPixdim + 4 * (a + 1), sw);
        p.info.spacing[a] = (std::isfinite(pd) && pd > 0.0f) ? static_cast<double>(pd) : 1.0;
    }
    p.info.datatype = load<std::int16_t>(b, kOffDatatype, sw);
    if (bytes_per_voxel(p.info.datatype) == 0) {
        fail("unsupported_datatype", "unsupported NIfTI datatype " + std::to_string(p.info.datatype) + " in " +
                                         where + " (byte offset 70)");
    }
    const float vox = load<float>(b, kOffVoxOffset, sw);
    if (!(vox >= static_cast<float>(kHeaderSize)) || !std::isfinite(vox)) {
        fail("malformed_header", "malformed NIfTI header in " + where + " at byte offset 108: bad vox_offset");
    }
    p.data_offset = static_cast<std::size_t>(vox);
    const float slope = load<float>(b, kOffSclSlope, sw);
    const float inter = load<float>(b, kOffSclInter, sw);
    if (std::isfinite(slope) && slope != 0.0f) {
        p.slope = slope;
        p.inter = std::isfinite(inter) ? inter : 0.0;
    }
    const std::size_t need = p.data_offset + voxel_count(p.info.shape) * bytes_per_voxel(p.info.datatype);
    if (b.size() < need) {
        fail("truncated", "truncated NIfTI file " + where + ": expected " + std::to_string(need) +
                              " bytes, found " + std::to_string(b.size()));
    }
    return p;
}

std::vector<double> decode(const std::vector<unsigned char>& b, const Parsed& p) {
    const std::size_t n = voxel_count(p.info.shape);
    const int bpv = bytes_per_voxel(p.info.datatype);
    const bool sw = p.info.swapped;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = p.data_offset + i * bpv;
        switch (p.info.datatype) {
        case kUint8:
            out[i] = b[off];
            break;
        case kInt8:
            out[i] = static_cast<std::int8_t>(b[off]);
            break;
        case kInt16:
            out[i] = load<std::int16_t>(b, off, sw);
            break;
        case kUint16:
            out[i] = load<std::uint16_t>(b, off, sw);
            break;
        case kInt32:
            out[i] = load<std::int32_t>(b, off, sw);
            break;
        case kFloat32:
            out[i] = load<float>(b, off, sw);
            break;
        case kFloat64:
            out[i] = load<double>(b, off, sw);
            break;
        }
    }
    return out;
}

template <typename T>
void store(std::vector<unsigned char>& b, std::size_t off, T v) {
    std::memcpy(b.data() + off, &v, sizeof(T));
}

std::vector<unsigned char> make_header(const Shape& shape, const Spacing& spacing, int datatype) {
    static_assert(std::endian::native == std::endian::little, "NIfTI writer assumes a little-endian host");
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1 || shape[a] > 32767) {
            fail("invalid_shape", "NIfTI-1 extents must lie in [1, 32767], got " + to_string(shape));
        }
    }
    std::vector<unsigned char> b(kVoxOffset, 0);
    store<std::int32_t>(b, 0, kHeaderSize);
    store<std::int16_t>(b, kOffDim, 3);
    for (int a = 0; a < 3; ++a) {
        store<std::int16_t>(b, kOffDim + 2 * (a + 1), static_cast<std::int16_t>(shape[a]));
    }
    for (int a = 4; a < 8; ++a) {
        store<std::int16_t>(b, kOffDim + 2 * a, 1);
    }
    store<std::int16_t>(b, kOffDatatype, static_cast<std::int16_t>(datatype));
    store<std::int16_t>(b, kOffBitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
    store<float>(b, kOffPixdim, 1.0f); // qfac
    for (int a = 0; a < 3; ++a) {
        store<float>(b, kOffPixdim + 4 * (a + 1), static_cast<float>(spacing[a]));
    }
    store<float>(b, kOffVoxOffset, static_cast<float>(kVoxOffset));
    store<float>(b, kOffSclSlope, 1.0f);
    b[kOffXyztUnits] = 2; // mm
    store<std::int16_t>(b, kOffQformCode, 0);
    store<std::int16_t>(b, kOffSformCode, 1);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) {
            store<float>(b, kOffSrowX + 16 * r + 4 * c, r == c ? static_cast<float>(spacing[r]) : 0.0f);
        }
    }
    std::memcpy(b.data() + kOffMagic, "n+1\0", 4);
    return b;
}

void write_bytes(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    if (is_gz(path)) {
        // "wb6" writes a gzip header with zero mtime, so output is reproducible.
        gzFile f = gzopen(tmp.c_str(), "wb6");
        if (!f) {
            fail("io_error", "cannot write '" + path.string() + "'");
        }
        std::size_t done = 0;
        while (done < bytes.size()) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
            if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
                gzclose(f);
                fail("io_error", "write failed for '" + path.string() + "'");
            }
            done += chunk;
        }
        if (gzclose(f) != Z_OK) {
            fail("io_error", "write failed for '" + path.string() + "'");
        }
    } else {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            fail("io_error", "cannot write '" + path.string() + "'");
        }
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) {
            fail("io_error", "write failed for '" + path.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        fail("io_error", "cannot move output into place at '" + path.string() + "': " + ec.message());
    }
}

} // namespace

HeaderInfo read_header(const std::filesystem::path& path) {
    return parse_header(slurp(path), path).info;
}

Volume read_volume(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const Parsed p = parse_header(bytes, path);
    auto data = decode(bytes, p);
    if (p.slope != 1.0 || p.inter != 0.0) {
        for (double& v : data) {
            v = v * p.slope + p.inter;
        }
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            fail("non_finite", "non-finite voxel in '" + path.string() + "'");
        }
    }
    return Volume(p.info.shape, p.info.spacing, std::move(data));
}

LabelMap read_label_map(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const Parsed p = parse_header(bytes, path);
    if (!is_integer_type(p.info.datatype)) {
        fail("not_labels", "'" + path.string() + "' is not integer-typed (datatype " +
                               std::to_string(p.info.datatype) + ")");
    }
    const auto data = decode(bytes, p);
    std::vector<std::uint8_t> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i] < 0.0 || data[i] > 255.0) {
            fail("invalid_label", "label value " + std::to_string(static_cast<long long>(data[i])) +
                                      " at voxel index " + std::to_string(i) + " does not fit in [0, 255]");
        }
        labels[i] = static_cast<std::uint8_t>(data[i]);
    }
    return LabelMap(p.info.shape, p.info.spacing, std::move(labels));
}

void write_volume(const Volume& vol, const std::filesystem::path& path) {
    auto bytes = make_header(vol.shape(), vol.spacing(), kFloat32);
    const auto d = vol.data();
    const std::size_t base = bytes.size();
    bytes.resize(base + 4 * d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        store<float>(bytes, base + 4 * i, static_cast<float>(d[i]));
    }
    write_bytes(bytes, path);
}

void write_label_map(const LabelMap& labels, const std::filesystem::path& path) {
    auto bytes = make_header(labels.shape(), labels.spacing(), kUint8);
    const auto d = labels.data();
    bytes.insert(bytes.end(), d.begin(), d.end());
    write_bytes(bytes, path);
}

} // namespace voxaug::nifti
