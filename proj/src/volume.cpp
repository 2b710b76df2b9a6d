#include "voxaug/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "voxaug/error.hpp"
#include "voxaug/random.hpp"

namespace voxaug {

std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << "(" << s[0] << "," << s[1] << "," << s[2] << ")";
    return os.str();
}

void check_grid(const Shape& shape, const Spacing& spacing) {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] <= 0) {
            fail("invalid_shape", "shape components must be positive, got " + to_string(shape));
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            fail("invalid_spacing", "spacing components must be positive and finite");
        }
    }
}

Volume::Volume(Shape shape, Spacing spacing, double fill)
    : shape_(shape), spacing_(spacing) {
    check_grid(shape_, spacing_);
    data_.assign(voxel_count(shape_), fill);
}

Volume::Volume(Shape shape, Spacing spacing, std::vector<double> data)
    : shape_(shape), spacing_(spacing), data_(std::move(data)) {
    check_grid(shape_, spacing_);
    if (data_.size() != voxel_count(shape_)) {
        fail("size_mismatch", "volume data length " + std::to_string(data_.size()) +
                                  " does not match shape " + to_string(shape_));
    }
}

LabelMap::LabelMap(Shape shape, Spacing spacing, std::uint8_t fill)
    : shape_(shape), spacing_(spacing) {
    check_grid(shape_, spacing_);
    data_.assign(voxel_count(shape_), fill);
}

LabelMap::LabelMap(Shape shape, Spacing spacing, std::vector<std::uint8_t> data)
    : shape_(shape), spacing_(spacing), data_(std::move(data)) {
    check_grid(shape_, spacing_);
    if (data_.size() != voxel_count(shape_)) {
        fail("size_mismatch", "label data length " + std::to_string(data_.size()) +
                                  " does not match shape " + to_string(shape_));
    }
}

void LabelMap::check_alphabet(std::span<const std::uint8_t> alphabet) const {
    std::array<bool, 256> allowed{};
    for (auto l : alphabet) {
        allowed[l] = true;
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!allowed[data_[i]]) {
            fail("invalid_label", "unknown label value " + std::to_string(data_[i]) +
                                      " at voxel index " + std::to_string(i));
        }
    }
}

std::vector<std::uint8_t> LabelMap::labels_present() const {
    const auto h = histogram();
    std::vector<std::uint8_t> out;
    for (int l = 0; l < 256; ++l) {
        if (h[l] > 0) {
            out.push_back(static_cast<std::uint8_t>(l));
        }
    }
    return out;
}

std::array<std::size_t, 256> LabelMap::histogram() const {
    std::array<std::size_t, 256> h{};
    for (auto v : data_) {
        ++h[v];
    }
    return h;
}

const Shape& Sample::shape() const {
    if (!channels.empty()) {
        return channels.front().shape();
    }
    if (labels) {
        return labels->shape();
    }
    fail("empty_sample", "sample has no channels and no labels");
}

const Spacing& Sample::spacing() const {
    if (!channels.empty()) {
        return channels.front().spacing();
    }
    if (labels) {
        return labels->spacing();
    }
    fail("empty_sample", "sample has no channels and no labels");
}

void Sample::check_consistent() const {
    const Shape& s = shape();
    const Spacing& sp = spacing();
    for (const auto& c : channels) {
        if (c.shape() != s || c.spacing() != sp) {
            fail("grid_mismatch", "sample '" + subject_id + "': channel grid " + to_string(c.shape()) +
                                      " differs from " + to_string(s));
        }
    }
    if (labels && (labels->shape() != s || labels->spacing() != sp)) {
        fail("grid_mismatch", "sample '" + subject_id + "': label grid " + to_string(labels->shape()) +
                                  " differs from " + to_string(s));
    }
}

ProbabilityVolume::ProbabilityVolume(Shape shape, Spacing spacing, int classes)
    : shape_(shape), spacing_(spacing), classes_(classes) {
    check_grid(shape_, spacing_);
    if (classes_ < 2) {
        fail("invalid_classes", "probability volume needs at least 2 classes");
    }
    data_.assign(voxel_count(shape_) * static_cast<std::size_t>(classes_), 0.0);
}

ProbabilityVolume::ProbabilityVolume(Shape shape, Spacing spacing, int classes, std::vector<double> data)
    : shape_(shape), spacing_(spacing), classes_(classes), data_(std::move(data)) {
    check_grid(shape_, spacing_);
    if (classes_ < 2) {
        fail("invalid_classes", "probability volume needs at least 2 classes");
    }
    if (data_.size() != voxel_count(shape_) * static_cast<std::size_t>(classes_)) {
        fail("size_mismatch", "probability data length does not match shape x classes");
    }
}

bool ProbabilityVolume::is_normalized(double tol) const {
    const std::size_t n = voxels();
    for (std::size_t v = 0; v < n; ++v) {
        double sum = 0.0;
        for (int c = 0; c < classes_; ++c) {
            const double p = at(v, c);
            if (!(p >= 0.0) || !std::isfinite(p)) {
                return false;
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > tol) {
            return false;
        }
    }
    return true;
}

ProbabilityVolume ProbabilityVolume::one_hot(const LabelMap& labels, int classes) {
    ProbabilityVolume out(labels.shape(), labels.spacing(), classes);
    const auto d = labels.data();
    for (std::size_t v = 0; v < d.size(); ++v) {
        if (d[v] >= classes) {
            fail("invalid_label", "label " + std::to_string(d[v]) + " at voxel index " + std::to_string(v) +
                                      " exceeds class count " + std::to_string(classes));
        }
        out.at(v, d[v]) = 1.0;
    }
    return out;
}

Volume normalize_minmax(const Volume& vol) {
    const auto d = vol.data();
    for (double v : d) {
        if (!std::isfinite(v)) {
            fail("non_finite", "non-finite voxel");
        }
    }
    Volume out(vol.shape(), vol.spacing(), 0.0);
    if (d.empty()) {
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (range == 0.0) {
        return out;
    }
    auto o = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        o[i] = (d[i] - lo) / range;
    }
    return out;
}

Shape center_patch_offset(const Shape& shape, const Shape& patch_shape) {
    Shape offset{};
    for (int a = 0; a < 3; ++a) {
        if (patch_shape[a] <= 0) {
            fail("invalid_shape", "patch shape components must be positive, got " + to_string(patch_shape));
        }
        if (patch_shape[a] > shape[a]) {
            fail("patch_exceeds_volume", "patch exceeds volume: patch " + to_string(patch_shape) +
                                             " vs volume " + to_string(shape));
        }
        offset[a] = (shape[a] - patch_shape[a]) / 2;
    }
    return offset;
}

namespace {

template <typename Grid, typename T>
std::vector<T> crop(const Grid& g, const Shape& off, const Shape& ps) {
    std::vector<T> out;
    out.reserve(voxel_count(ps));
    for (int z = 0; z < ps[2]; ++z) {
        for (int y = 0; y < ps[1]; ++y) {
            for (int x = 0; x < ps[0]; ++x) {
                out.push_back(g.at(x + off[0], y + off[1], z + off[2]));
            }
        }
    }
    return out;
}

} // namespace

Sample extract_center_patch(const Sample& sample, const Shape& patch_shape) {
    sample.check_consistent();
    const Shape off = center_patch_offset(sample.shape(), patch_shape);
    Sample out;
    out.subject_id = sample.subject_id;
    for (const auto& c : sample.channels) {
        out.channels.emplace_back(patch_shape, c.spacing(), crop<Volume, double>(c, off, patch_shape));
    }
    if (sample.labels) {
        out.labels.emplace(patch_shape, sample.labels->spacing(),
                           crop<LabelMap, std::uint8_t>(*sample.labels, off, patch_shape));
    }
    return out;
}

Sample make_phantom(std::uint64_t seed, const Shape& shape, std::string subject_id) {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 16) {
            fail("phantom_too_small", "phantom shape components must be >= 16, got " + to_string(shape));
        }
    }
    RandomStream rng = RandomStream(seed).spawn("phantom");

    std::array<double, 3> center{}, brain_axes{}, tumour_center{}, tumour_axes{}, phase{}, wavelength{};
    for (int a = 0; a < 3; ++a) {
        center[a] = 0.5 * (shape[a] - 1);
        brain_axes[a] = 0.40 * shape[a] * rng.uniform(0.95, 1.05);
    }
    for (int a = 0; a < 3; ++a) {
        // Integer centre so the innermost shell always contains a voxel.
        tumour_center[a] = std::round(center[a] + rng.uniform(-0.25, 0.25) * brain_axes[a]);
        tumour_axes[a] = 0.55 * brain_axes[a] * rng.uniform(0.9, 1.1);
        phase[a] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        wavelength[a] = rng.uniform(0.5, 1.0) * shape[a];
    }

    // Per channel: brain tissue level, and multipliers for labels 2, 1, 4.
    constexpr std::array<std::array<double, 4>, 4> kContrast{{
        {0.70, 0.80, 0.55, 0.60}, // T1
        {0.60, 0.75, 0.50, 1.60}, // T1Gd: enhancing rim bright
        {0.50, 1.70, 1.30, 1.20}, // T2: oedema bright
        {0.55, 1.80, 1.10, 1.00}, // FLAIR
    }};

    Sample s;
    s.subject_id = std::move(subject_id);
    const Spacing spacing{1.0, 1.0, 1.0};
    for (int c = 0; c < 4; ++c) {
        s.channels.emplace_back(shape, spacing, 0.0);
    }
    LabelMap labels(shape, spacing, 0);

    for (int z = 0; z < shape[2]; ++z) {
        for (int y = 0; y < shape[1]; ++y) {
            for (int x = 0; x < shape[0]; ++x) {
                const std::array<double, 3> p{double(x), double(y), double(z)};
                double rb = 0.0, rt = 0.0, texture = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double db = (p[a] - center[a]) / brain_axes[a];
                    const double dt = (p[a] - tumour_center[a]) / tumour_axes[a];
                    rb += db * db;
                    rt += dt * dt;
                    texture += std::sin(2.0 * std::numbers::pi * p[a] / wavelength[a] + phase[a]);
                }
                rb = std::sqrt(rb);
                rt = std::sqrt(rt);
                // Smooth skull-stripped boundary, exactly zero well outside.
                const double brain = rb >= 1.2 ? 0.0 : 0.5 * (1.0 - std::tanh((rb - 1.0) / 0.06));
                std::uint8_t label = 0;
                int tier = 0;
                if (brain > 0.5) {
                    if (rt <= 0.4) {
                        label = 4;
                        tier = 3;
                    } else if (rt <= 0.7) {
                        label = 1;
                        tier = 2;
                    } else if (rt <= 1.0) {
                        label = 2;
                        tier = 1;
                    }
                }
                labels.at(x, y, z) = label;
                for (int c = 0; c < 4; ++c) {
                    const auto& k = kContrast[c];
                    const double tissue = k[0] * (1.0 + 0.04 * texture);
                    const double mult = tier == 0 ? 1.0 : k[tier];
                    s.channels[c].at(x, y, z) = brain * tissue * mult;
                }
            }
        }
    }
    for (auto& c : s.channels) {
        c = normalize_minmax(c);
    }
    s.labels = std::move(labels);
    return s;
}

LabelMap raw_to_canonical_labels(const LabelMap& labels) {
    LabelMap out = labels;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        switch (d[i]) {
        case 0:
        case 1:
        case 2:
            break;
        case 4:
            d[i] = 3;
            break;
        default:
            fail("invalid_label", "unknown label value " + std::to_string(d[i]) + " at voxel index " +
                                      std::to_string(i));
        }
    }
    return out;
}

LabelMap canonical_to_raw_labels(const LabelMap& labels) {
    LabelMap out = labels;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        switch (d[i]) {
        case 0:
        case 1:
        case 2:
            break;
        case 3:
            d[i] = 4;
            break;
        default:
            fail("invalid_label", "unknown label value " + std::to_string(d[i]) + " at voxel index " +
                                      std::to_string(i));
        }
    }
    return out;
}

} // namespace voxaug
