#pragma once

#include <filesystem>

#include "voxaug/volume.hpp"

namespace voxaug::nifti {

// NIfTI-1 single-file (.nii) or gzip-wrapped (.nii.gz) volumes.
//
// Reading accepts datatypes uint8, int8, int16, uint16, int32, float32 and
// float64 in either byte order; scl_slope/scl_inter are applied to images.
// Trailing dimensions of extent 1 are tolerated, anything larger is rejected.

Volume read_volume(const std::filesystem::path& path);
// Integer-typed files only; values must fit in [0, 255].
LabelMap read_label_map(const std::filesystem::path& path);

// Images are written as float32, labels as uint8. Output is gzip-compressed
// when the name ends in ".gz". The file is written to a temporary sibling
// and renamed into place.
void write_volume(const Volume& vol, const std::filesystem::path& path);
void write_label_map(const LabelMap& labels, const std::filesystem::path& path);

// Header fields of interest.
struct HeaderInfo {
    Shape shape{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    int datatype = 0;
    bool swapped = false;
};

HeaderInfo read_header(const std::filesystem::path& path);

} // namespace voxaug::nifti
