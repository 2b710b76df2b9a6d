#pragma once

#include <array>
#include <vector>

#include "voxaug/volume.hpp"

namespace voxaug {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
Mat3 multiply(const Mat3& a, const Mat3& b);
Vec3 multiply(const Mat3& m, const Vec3& v);
double determinant(const Mat3& m);
// Throws "non-invertible transform" when |det| <= 1e-9.
Mat3 inverse(const Mat3& m);

// Linear map applied about the geometric centre (shape - 1) / 2 in voxel
// coordinates. The output grid equals the input grid.
struct AffineTransform {
    Mat3 matrix = identity3();
};

enum class InterpMode { trilinear, nearest };

struct Sampling {
    InterpMode mode = InterpMode::trilinear;
    double pad = 0.0; // value read outside the grid
};

// Dense per-voxel displacement in voxel units, layout as Volume with the
// three components interleaved: data[3 * voxel + axis].
class DisplacementField {
public:
    DisplacementField() = default;
    explicit DisplacementField(Shape shape);

    const Shape& shape() const noexcept { return shape_; }
    Vec3 at(std::size_t voxel) const {
        return {data_[3 * voxel], data_[3 * voxel + 1], data_[3 * voxel + 2]};
    }
    double& component(std::size_t voxel, int axis) { return data_[3 * voxel + axis]; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

private:
    Shape shape_{0, 0, 0};
    std::vector<double> data_;
};

// Coarse control grid of 3-vectors, same interleaving as DisplacementField.
struct ControlGrid {
    Shape shape{0, 0, 0};
    std::vector<double> values;
};

// Point samplers. Voxel centres sit at integer coordinates; neighbours
// outside the grid read `pad`. Coordinates within 1e-9 of an integer are
// snapped so that exact permutations stay exact.
double sample_trilinear(const Volume& vol, const Vec3& p, double pad);
double sample_nearest(const Volume& vol, const Vec3& p, double pad);
std::uint8_t sample_nearest(const LabelMap& labels, const Vec3& p, std::uint8_t pad);

// output(x) = input(M^-1 (x - c) + c)
Volume resample_affine(const Volume& vol, const AffineTransform& t, const Sampling& s = {});
// Labels are always resampled nearest-neighbour with background padding.
LabelMap resample_affine(const LabelMap& labels, const AffineTransform& t);

// Interpolating cubic B-spline upsampling of a control grid onto a dense grid.
// Control points span the volume extent including both boundaries.
DisplacementField bspline_upsample(const ControlGrid& coarse, const Shape& target_shape);

// Natural-boundary interpolating cubic spline of samples `f` at positions
// 0..n-1, evaluated at `u` in [0, n-1]. Exposed for testing.
std::vector<double> bspline_coefficients(std::span<const double> f);
double bspline_evaluate(std::span<const double> coeffs, double u);

// output(x) = input(x + field(x))
Volume warp(const Volume& vol, const DisplacementField& field, const Sampling& s = {});
LabelMap warp(const LabelMap& labels, const DisplacementField& field);

} // namespace voxaug
