#pragma once

// Deterministic random inputs shared by the unit and acceptance suites.

#include <cstdint>
#include <vector>

#include "voxaug/random.hpp"
#include "voxaug/volume.hpp"

namespace fixture {

using voxaug::RandomStream;
using voxaug::Shape;

// Union of a few random ellipsoids, with a sprinkle of isolated voxels.
inline std::vector<std::uint8_t> random_blob_mask(RandomStream& rng, const Shape& s) {
    std::vector<std::uint8_t> m(voxaug::voxel_count(s), 0);
    const int blobs = 1 + static_cast<int>(rng.uniform_int(3));
    for (int b = 0; b < blobs; ++b) {
        double c[3], r[3];
        for (int a = 0; a < 3; ++a) {
            c[a] = rng.uniform(0, s[a] - 1);
            r[a] = rng.uniform(1.0, 0.35 * s[a]);
        }
        for (int z = 0; z < s[2]; ++z) {
            for (int y = 0; y < s[1]; ++y) {
                for (int x = 0; x < s[0]; ++x) {
                    const double dx = (x - c[0]) / r[0], dy = (y - c[1]) / r[1], dz = (z - c[2]) / r[2];
                    if (dx * dx + dy * dy + dz * dz <= 1.0) {
                        m[voxaug::linear_index(s, x, y, z)] = 1;
                    }
                }
            }
        }
    }
    const int specks = static_cast<int>(rng.uniform_int(6));
    for (int i = 0; i < specks; ++i) {
        m[rng.uniform_int(m.size())] = 1;
    }
    return m;
}

// Grows every tumour label by one voxel (6-neighbourhood) into background,
// taking the label of the first labelled neighbour found.
inline voxaug::LabelMap dilate_labels(const voxaug::LabelMap& in) {
    voxaug::LabelMap out = in;
    const Shape s = in.shape();
    const int off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    for (int z = 0; z < s[2]; ++z) {
        for (int y = 0; y < s[1]; ++y) {
            for (int x = 0; x < s[0]; ++x) {
                if (in.at(x, y, z) != 0) {
                    continue;
                }
                for (const auto& o : off) {
                    const int a = x + o[0], b = y + o[1], c = z + o[2];
                    if (voxaug::in_bounds(s, a, b, c) && in.at(a, b, c) != 0) {
                        out.at(x, y, z) = in.at(a, b, c);
                        break;
                    }
                }
            }
        }
    }
    return out;
}

} // namespace fixture
