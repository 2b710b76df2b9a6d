#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxaug/volume.hpp"

namespace voxaug {

enum class Region { ET, WT, TC };

inline constexpr std::array<Region, 3> kRegions{Region::ET, Region::WT, Region::TC};

std::string to_string(Region r);
Region region_from_string(const std::string& s);

// Hausdorff value the evaluation portal reports when exactly one of the two
// masks is empty (paired with Dice 0).
inline constexpr double kHausdorffSentinelMm = 373.0;

struct RegionMask {
    Region region = Region::WT;
    Shape shape{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> mask; // 0 or 1, Volume layout

    std::size_t count() const;
    bool empty() const { return count() == 0; }
};

struct RegionMasks {
    RegionMask et, wt, tc;
    const RegionMask& get(Region r) const;
};

// Raw labels -> WT = {1,2,4}, TC = {1,4}, ET = {4}.
RegionMasks region_masks(const LabelMap& raw_labels);
RegionMask region_mask(const LabelMap& raw_labels, Region region);

// 2|P n T| / (|P| + |T|); both empty -> 1, exactly one empty -> 0.
double dice(const RegionMask& pred, const RegionMask& truth);

// Mask voxels with at least one 6-connected neighbour outside the mask
// (the volume border counts as outside). Linear indices in ascending order.
std::vector<std::size_t> surface_voxels(const RegionMask& m);

// Squared Euclidean distance (mm^2) from every voxel to the nearest voxel
// with feature[i] != 0, honouring anisotropic spacing. +inf when there are
// no features.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> feature, const Shape& shape,
                                               const Spacing& spacing);

// Linear-interpolated percentile (q in [0, 100]) of an unsorted list.
double percentile_linear(std::vector<double> values, double q);

// Symmetric 95th-percentile surface distance in mm: the max of the two
// directed percentiles. Both empty -> 0, exactly one empty -> 373.
double hausdorff95(const RegionMask& pred, const RegionMask& truth);

struct RegionScores {
    Region region;
    double dice;
    double hd95_mm;
};

// Dice and HD95 for ET, WT, TC (in that order) on raw label maps.
std::vector<RegionScores> evaluate_regions(const LabelMap& pred, const LabelMap& truth);

inline constexpr double kGdlEpsilon = 1e-7;

// 1 - 2 (sum_l w_l sum_n r_ln p_ln) / (sum_l w_l sum_n (r_ln + p_ln)),
// w_l = 1 / ((sum_n r_ln)^2 + eps).
double generalized_dice_loss(const ProbabilityVolume& probs, const ProbabilityVolume& truth);

struct EnsembleResult {
    ProbabilityVolume mean;
    LabelMap labels; // argmax class id, ties to the lowest index
};

EnsembleResult ensemble_average(const std::vector<ProbabilityVolume>& members);

} // namespace voxaug
