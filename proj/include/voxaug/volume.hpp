#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace voxaug {

// Voxels per axis, (x, y, z).
using Shape = std::array<int, 3>;
// Millimetres per voxel along (x, y, z).
using Spacing = std::array<double, 3>;

// Memory layout used everywhere in the toolkit (and by NIfTI on disk):
// x varies fastest, then y, then z.
//   linear = x + nx * (y + ny * z)
inline std::size_t voxel_count(const Shape& s) {
    return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) *
           static_cast<std::size_t>(s[2]);
}

inline std::size_t linear_index(const Shape& s, int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(s[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(s[1]) * static_cast<std::size_t>(z));
}

inline bool in_bounds(const Shape& s, int x, int y, int z) {
    return x >= 0 && y >= 0 && z >= 0 && x < s[0] && y < s[1] && z < s[2];
}

std::string to_string(const Shape& s);

// Validates a shape/spacing pair; throws on non-positive components.
void check_grid(const Shape& shape, const Spacing& spacing);

// Dense scalar grid. Values are held as double; files store float32.
class Volume {
public:
    Volume() = default;
    Volume(Shape shape, Spacing spacing, double fill = 0.0);
    Volume(Shape shape, Spacing spacing, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    const Spacing& spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return data_.size(); }

    double at(int x, int y, int z) const { return data_[linear_index(shape_, x, y, z)]; }
    double& at(int x, int y, int z) { return data_[linear_index(shape_, x, y, z)]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const Volume&) const = default;

private:
    Shape shape_{0, 0, 0};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<double> data_;
};

// Raw BraTS alphabet {0, 1, 2, 4}; canonical class ids {0, 1, 2, 3}.
inline constexpr std::array<std::uint8_t, 4> kRawLabels{0, 1, 2, 4};
inline constexpr std::array<std::uint8_t, 4> kCanonicalLabels{0, 1, 2, 3};

class LabelMap {
public:
    LabelMap() = default;
    LabelMap(Shape shape, Spacing spacing, std::uint8_t fill = 0);
    LabelMap(Shape shape, Spacing spacing, std::vector<std::uint8_t> data);

    const Shape& shape() const noexcept { return shape_; }
    const Spacing& spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::uint8_t at(int x, int y, int z) const { return data_[linear_index(shape_, x, y, z)]; }
    std::uint8_t& at(int x, int y, int z) { return data_[linear_index(shape_, x, y, z)]; }

    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    // Throws naming the first voxel whose label is not in `alphabet`.
    void check_alphabet(std::span<const std::uint8_t> alphabet) const;
    // Sorted distinct labels present.
    std::vector<std::uint8_t> labels_present() const;
    // Voxel count per label value 0..255.
    std::array<std::size_t, 256> histogram() const;

    bool operator==(const LabelMap&) const = default;

private:
    Shape shape_{0, 0, 0};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> data_;
};

// Canonical channel order is T1, T1Gd, T2, FLAIR, but any count >= 1 is accepted.
struct Sample {
    std::vector<Volume> channels;
    std::optional<LabelMap> labels;
    std::string subject_id;

    const Shape& shape() const;
    const Spacing& spacing() const;
    // Throws unless all constituents share shape and spacing.
    void check_consistent() const;

    bool operator==(const Sample&) const = default;
};

// Per-voxel class distribution, class index fastest:
//   data[voxel * classes + c]
class ProbabilityVolume {
public:
    ProbabilityVolume() = default;
    ProbabilityVolume(Shape shape, Spacing spacing, int classes);
    ProbabilityVolume(Shape shape, Spacing spacing, int classes, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    const Spacing& spacing() const noexcept { return spacing_; }
    int classes() const noexcept { return classes_; }
    std::size_t voxels() const noexcept { return voxel_count(shape_); }

    double at(std::size_t voxel, int c) const { return data_[voxel * classes_ + c]; }
    double& at(std::size_t voxel, int c) { return data_[voxel * classes_ + c]; }
    std::span<const double> data() const noexcept { return data_; }

    // True when every vector is nonnegative and sums to 1 within `tol`.
    bool is_normalized(double tol = 1e-5) const;

    static ProbabilityVolume one_hot(const LabelMap& labels, int classes);

private:
    Shape shape_{0, 0, 0};
    Spacing spacing_{1.0, 1.0, 1.0};
    int classes_ = 0;
    std::vector<double> data_;
};

// (v - min) / (max - min); constant input maps to zeros.
Volume normalize_minmax(const Volume& vol);

// Crops the sub-grid starting at floor((shape - patch) / 2) on every axis.
Sample extract_center_patch(const Sample& sample, const Shape& patch_shape);
Shape center_patch_offset(const Shape& shape, const Shape& patch_shape);

// Synthetic 4-channel subject: smooth brain ellipsoid with three nested
// tumour shells labelled 4 (inner), 1 (middle), 2 (outer).
Sample make_phantom(std::uint64_t seed, const Shape& shape, std::string subject_id = "phantom");

LabelMap raw_to_canonical_labels(const LabelMap& labels);
LabelMap canonical_to_raw_labels(const LabelMap& labels);

} // namespace voxaug
