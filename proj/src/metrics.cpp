#include "voxaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxaug/error.hpp"

namespace voxaug {

std::string to_string(Region r) {
    switch (r) {
    case Region::ET:
        return "ET";
    case Region::WT:
        return "WT";
    case Region::TC:
        return "TC";
    }
    return "?";
}

Region region_from_string(const std::string& s) {
    for (auto r : kRegions) {
        if (to_string(r) == s) {
            return r;
        }
    }
    fail("invalid_region", "unknown region '" + s + "' (expected ET, WT or TC)");
}

std::size_t RegionMask::count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

const RegionMask& RegionMasks::get(Region r) const {
    switch (r) {
    case Region::ET:
        return et;
    case Region::WT:
        return wt;
    case Region::TC:
        return tc;
    }
    return wt;
}

namespace {

bool in_region(std::uint8_t label, Region r) {
    switch (r) {
    case Region::WT:
        return label == 1 || label == 2 || label == 4;
    case Region::TC:
        return label == 1 || label == 4;
    case Region::ET:
        return label == 4;
    }
    return false;
}

void check_same_grid(const RegionMask& a, const RegionMask& b) {
    if (a.shape != b.shape || a.mask.size() != b.mask.size()) {
        fail("shape_mismatch", "mask shapes differ: " + to_string(a.shape) + " vs " + to_string(b.shape));
    }
}

} // namespace

RegionMask region_mask(const LabelMap& raw_labels, Region region) {
    raw_labels.check_alphabet(kRawLabels);
    RegionMask m{region, raw_labels.shape(), raw_labels.spacing(), {}};
    const auto d = raw_labels.data();
    m.mask.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        m.mask[i] = in_region(d[i], region) ? 1 : 0;
    }
    return m;
}

RegionMasks region_masks(const LabelMap& raw_labels) {
    return {region_mask(raw_labels, Region::ET), region_mask(raw_labels, Region::WT),
            region_mask(raw_labels, Region::TC)};
}

double dice(const RegionMask& pred, const RegionMask& truth) {
    check_same_grid(pred, truth);
    std::size_t np = 0, nt = 0, both = 0;
    for (std::size_t i = 0; i < pred.mask.size(); ++i) {
        const bool p = pred.mask[i] != 0, t = truth.mask[i] != 0;
        np += p;
        nt += t;
        both += p && t;
    }
    if (np == 0 && nt == 0) {
        return 1.0;
    }
    if (np == 0 || nt == 0) {
        return 0.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(np + nt);
}

std::vector<std::size_t> surface_voxels(const RegionMask& m) {
    const Shape& s = m.shape;
    std::vector<std::size_t> out;
    auto inside = [&](int x, int y, int z) { return in_bounds(s, x, y, z) && m.mask[linear_index(s, x, y, z)]; };
    std::size_t i = 0;
    for (int z = 0; z < s[2]; ++z) {
        for (int y = 0; y < s[1]; ++y) {
            for (int x = 0; x < s[0]; ++x, ++i) {
                if (!m.mask[i]) {
                    continue;
                }
                if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
                    !inside(x, y, z - 1) || !inside(x, y, z + 1)) {
                    out.push_back(i);
                }
            }
        }
    }
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas h^2 (q - i)^2 + f[i],
// skipping sites with infinite f.
void edt_1d(std::span<const double> f, std::span<double> d, double h, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    const double h2 = h * h;
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) {
            continue;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = 0.0;
        // z[0] is -inf, so the loop always stops at k = 0.
        while (true) {
            const int p = v[k];
            s = ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
            if (s > z[k]) {
                break;
            }
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), kInf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) {
            ++j;
        }
        const double dq = h * (q - v[j]);
        d[q] = dq * dq + f[v[j]];
    }
}

} // namespace

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> feature, const Shape& shape,
                                               const Spacing& spacing) {
    const std::size_t n = voxel_count(shape);
    if (feature.size() != n) {
        fail("size_mismatch", "feature mask length does not match shape");
    }
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = feature[i] ? 0.0 : kInf;
    }
    std::vector<int> v;
    std::vector<double> z;
    const std::size_t strides[3] = {1, static_cast<std::size_t>(shape[0]),
                                    static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1])};
    for (int axis = 0; axis < 3; ++axis) {
        const int len = shape[axis];
        std::vector<double> line(len), out(len);
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (int j2 = 0; j2 < shape[a2]; ++j2) {
            for (int j1 = 0; j1 < shape[a1]; ++j1) {
                const std::size_t base = strides[a1] * j1 + strides[a2] * j2;
                for (int k = 0; k < len; ++k) {
                    line[k] = g[base + strides[axis] * k];
                }
                edt_1d(line, out, spacing[axis], v, z);
                for (int k = 0; k < len; ++k) {
                    g[base + strides[axis] * k] = out[k];
                }
            }
        }
    }
    return g;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) {
        fail("empty_input", "percentile of an empty list");
    }
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

double directed_percentile(const std::vector<std::size_t>& from, const RegionMask& to_mask,
                           const std::vector<std::size_t>& to_surface) {
    std::vector<std::uint8_t> feature(to_mask.mask.size(), 0);
    for (auto i : to_surface) {
        feature[i] = 1;
    }
    const auto d2 = squared_distance_transform(feature, to_mask.shape, to_mask.spacing);
    std::vector<double> d;
    d.reserve(from.size());
    for (auto i : from) {
        d.push_back(std::sqrt(d2[i]));
    }
    return percentile_linear(std::move(d), 95.0);
}

} // namespace

double hausdorff95(const RegionMask& pred, const RegionMask& truth) {
    check_same_grid(pred, truth);
    if (pred.spacing != truth.spacing) {
        fail("grid_mismatch", "mask spacings differ");
    }
    const bool pe = pred.empty(), te = truth.empty();
    if (pe && te) {
        return 0.0;
    }
    if (pe || te) {
        return kHausdorffSentinelMm;
    }
    const auto sp = surface_voxels(pred);
    const auto st = surface_voxels(truth);
    return std::max(directed_percentile(sp, truth, st), directed_percentile(st, pred, sp));
}

std::vector<RegionScores> evaluate_regions(const LabelMap& pred, const LabelMap& truth) {
    if (pred.shape() != truth.shape()) {
        fail("shape_mismatch", "prediction shape " + to_string(pred.shape()) + " differs from truth " +
                                   to_string(truth.shape()));
    }
    const auto pm = region_masks(pred);
    auto tm = region_masks(truth);
    std::vector<RegionScores> out;
    for (auto r : kRegions) {
        RegionMask p = pm.get(r);
        // Distances are measured on the truth grid.
        p.spacing = truth.spacing();
        const RegionMask& t = tm.get(r);
        out.push_back({r, dice(p, t), hausdorff95(p, t)});
    }
    return out;
}

double generalized_dice_loss(const ProbabilityVolume& probs, const ProbabilityVolume& truth) {
    if (probs.shape() != truth.shape() || probs.classes() != truth.classes()) {
        fail("shape_mismatch", "prediction and truth differ in shape or class count");
    }
    const std::size_t n = probs.voxels();
    const int classes = probs.classes();
    for (std::size_t v = 0; v < n; ++v) {
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
            const double p = probs.at(v, c);
            if (!(p >= 0.0) || !std::isfinite(p)) {
                fail("not_normalized", "probabilities must be finite and nonnegative (voxel " + std::to_string(v) + ")");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-4) {
            fail("not_normalized", "probabilities at voxel " + std::to_string(v) + " sum to " + std::to_string(sum));
        }
        int ones = 0;
        for (int c = 0; c < classes; ++c) {
            const double r = truth.at(v, c);
            if (r != 0.0 && r != 1.0) {
                fail("not_one_hot", "truth is not one-hot at voxel " + std::to_string(v));
            }
            ones += r == 1.0;
        }
        if (ones != 1) {
            fail("not_one_hot", "truth is not one-hot at voxel " + std::to_string(v));
        }
    }
    double numer = 0.0, denom = 0.0;
    for (int c = 0; c < classes; ++c) {
        double ref = 0.0, inter = 0.0, both = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            const double r = truth.at(v, c), p = probs.at(v, c);
            ref += r;
            inter += r * p;
            both += r + p;
        }
        const double w = 1.0 / (ref * ref + kGdlEpsilon);
        numer += w * inter;
        denom += w * both;
    }
    if (denom == 0.0) {
        return 0.0;
    }
    return 1.0 - 2.0 * numer / denom;
}

EnsembleResult ensemble_average(const std::vector<ProbabilityVolume>& members) {
    if (members.empty()) {
        fail("empty_input", "ensemble needs at least one member");
    }
    const auto& first = members.front();
    for (const auto& m : members) {
        if (m.shape() != first.shape() || m.classes() != first.classes()) {
            fail("shape_mismatch", "ensemble members differ in shape or class count");
        }
    }
    const std::size_t n = first.voxels();
    const int classes = first.classes();
    if (classes > 256) {
        fail("invalid_classes", "at most 256 classes fit a label map");
    }
    std::vector<double> mean(n * classes, 0.0);
    for (const auto& m : members) {
        const auto d = m.data();
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += d[i];
        }
    }
    const double inv = static_cast<double>(members.size());
    for (double& v : mean) {
        v /= inv;
    }
    LabelMap labels(first.shape(), first.spacing(), 0);
    auto ld = labels.data();
    for (std::size_t v = 0; v < n; ++v) {
        int best = 0;
        for (int c = 1; c < classes; ++c) {
            if (mean[v * classes + c] > mean[v * classes + best]) {
                best = c;
            }
        }
        ld[v] = static_cast<std::uint8_t>(best);
    }
    return {ProbabilityVolume(first.shape(), first.spacing(), classes, std::move(mean)), std::move(labels)};
}

} // namespace voxaug
