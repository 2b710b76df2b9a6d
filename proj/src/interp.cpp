#include "voxaug/interp.hpp"

#include <cmath>

#include "voxaug/error.hpp"

namespace voxaug {

Mat3 identity3() {
    return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    return r;
}

Vec3 multiply(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double determinant(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 inverse(const Mat3& m) {
    const double det = determinant(m);
    if (!(std::abs(det) > 1e-9)) {
        fail("non_invertible", "non-invertible transform");
    }
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

DisplacementField::DisplacementField(Shape shape) : shape_(shape) {
    data_.assign(3 * voxel_count(shape_), 0.0);
}

namespace {

inline double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

inline int nearest_index(double v) {
    return static_cast<int>(std::floor(snap(v) + 0.5));
}

Vec3 grid_center(const Shape& s) {
    return {0.5 * (s[0] - 1), 0.5 * (s[1] - 1), 0.5 * (s[2] - 1)};
}

} // namespace

double sample_trilinear(const Volume& vol, const Vec3& p, double pad) {
    const Shape& s = vol.shape();
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double q = snap(p[a]);
        if (!std::isfinite(q)) {
            return pad;
        }
        const double f = std::floor(q);
        // Entirely outside: every corner is padding.
        if (f < -1.0 || f > static_cast<double>(s[a])) {
            return pad;
        }
        base[a] = static_cast<int>(f);
        frac[a] = q - f;
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? frac[2] : 1.0 - frac[2];
        if (wz == 0.0) {
            continue;
        }
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? frac[1] : 1.0 - frac[1];
            if (wy == 0.0) {
                continue;
            }
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? frac[0] : 1.0 - frac[0];
                if (wx == 0.0) {
                    continue;
                }
                const int x = base[0] + dx, y = base[1] + dy, z = base[2] + dz;
                const double v = in_bounds(s, x, y, z) ? vol.at(x, y, z) : pad;
                acc += wx * wy * wz * v;
            }
        }
    }
    return acc;
}

double sample_nearest(const Volume& vol, const Vec3& p, double pad) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
        return pad;
    }
    const int x = nearest_index(p[0]), y = nearest_index(p[1]), z = nearest_index(p[2]);
    return in_bounds(vol.shape(), x, y, z) ? vol.at(x, y, z) : pad;
}

std::uint8_t sample_nearest(const LabelMap& labels, const Vec3& p, std::uint8_t pad) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
        return pad;
    }
    const int x = nearest_index(p[0]), y = nearest_index(p[1]), z = nearest_index(p[2]);
    return in_bounds(labels.shape(), x, y, z) ? labels.at(x, y, z) : pad;
}

namespace {

// Calls fn(linear_index, source_point) for every output voxel.
template <typename Fn>
void for_each_affine_source(const Shape& s, const AffineTransform& t, Fn&& fn) {
    const Mat3 inv = inverse(t.matrix);
    const Vec3 c = grid_center(s);
    std::size_t i = 0;
    for (int z = 0; z < s[2]; ++z) {
        for (int y = 0; y < s[1]; ++y) {
            for (int x = 0; x < s[0]; ++x, ++i) {
                const Vec3 d{x - c[0], y - c[1], z - c[2]};
                const Vec3 q = multiply(inv, d);
                fn(i, Vec3{q[0] + c[0], q[1] + c[1], q[2] + c[2]});
            }
        }
    }
}

} // namespace

Volume resample_affine(const Volume& vol, const AffineTransform& t, const Sampling& s) {
    Volume out(vol.shape(), vol.spacing(), 0.0);
    auto o = out.data();
    for_each_affine_source(vol.shape(), t, [&](std::size_t i, const Vec3& q) {
        o[i] = s.mode == InterpMode::trilinear ? sample_trilinear(vol, q, s.pad) : sample_nearest(vol, q, s.pad);
    });
    return out;
}

LabelMap resample_affine(const LabelMap& labels, const AffineTransform& t) {
    LabelMap out(labels.shape(), labels.spacing(), 0);
    auto o = out.data();
    for_each_affine_source(labels.shape(), t,
                           [&](std::size_t i, const Vec3& q) { o[i] = sample_nearest(labels, q, 0); });
    return out;
}

std::vector<double> bspline_coefficients(std::span<const double> f) {
    const std::size_t n = f.size();
    std::vector<double> c(f.begin(), f.end());
    if (n <= 2) {
        return c;
    }
    // End coefficients equal the end samples under the natural boundary;
    // interior rows solve c[j-1] + 4 c[j] + c[j+1] = 6 f[j] (Thomas algorithm).
    const std::size_t m = n - 2;
    std::vector<double> diag(m, 4.0), rhs(m);
    for (std::size_t j = 0; j < m; ++j) {
        rhs[j] = 6.0 * f[j + 1];
    }
    rhs[0] -= f[0];
    rhs[m - 1] -= f[n - 1];
    for (std::size_t j = 1; j < m; ++j) {
        const double w = 1.0 / diag[j - 1];
        diag[j] -= w;
        rhs[j] -= w * rhs[j - 1];
    }
    c[m] = rhs[m - 1] / diag[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) {
        c[j + 1] = (rhs[j] - c[j + 2]) / diag[j];
    }
    return c;
}

namespace {

struct SplineTap {
    int base = 0; // index of the first of four coefficients, may be -1
    std::array<double, 4> w{};
};

SplineTap spline_tap(int n, double u) {
    SplineTap tap;
    int i = static_cast<int>(std::floor(u));
    double t = u - i;
    if (i >= n - 1) {
        i = n - 2;
        t = 1.0;
    }
    if (i < 0) {
        i = 0;
        t = 0.0;
    }
    const double t2 = t * t, t3 = t2 * t, omt = 1.0 - t;
    tap.base = i - 1;
    tap.w = {omt * omt * omt / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
             (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
    return tap;
}

// Coefficient with point-symmetric extension by one sample on each side.
inline double extended(std::span<const double> c, int j) {
    const int n = static_cast<int>(c.size());
    if (j < 0) {
        return 2.0 * c[0] - c[1];
    }
    if (j >= n) {
        return 2.0 * c[n - 1] - c[n - 2];
    }
    return c[j];
}

double evaluate_tap(std::span<const double> c, const SplineTap& tap) {
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        acc += tap.w[k] * extended(c, tap.base + k);
    }
    return acc;
}

// Applies a 1-D line transform along `axis` of a 3-D array.
template <typename Fn>
std::vector<double> along_axis(const std::vector<double>& in, const std::array<int, 3>& dims, int axis,
                               int out_len, Fn&& fn) {
    std::array<int, 3> odims = dims;
    odims[axis] = out_len;
    std::vector<double> out(static_cast<std::size_t>(odims[0]) * odims[1] * odims[2]);
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    std::vector<double> line(dims[axis]), result(out_len);
    auto index = [](const std::array<int, 3>& d, std::array<int, 3> p) {
        return static_cast<std::size_t>(p[0]) + static_cast<std::size_t>(d[0]) *
                                                    (static_cast<std::size_t>(p[1]) +
                                                     static_cast<std::size_t>(d[1]) * p[2]);
    };
    for (int j2 = 0; j2 < dims[a2]; ++j2) {
        for (int j1 = 0; j1 < dims[a1]; ++j1) {
            std::array<int, 3> p{};
            p[a1] = j1;
            p[a2] = j2;
            for (int k = 0; k < dims[axis]; ++k) {
                p[axis] = k;
                line[k] = in[index(dims, p)];
            }
            fn(std::span<const double>(line), std::span<double>(result));
            for (int k = 0; k < out_len; ++k) {
                p[axis] = k;
                out[index(odims, p)] = result[k];
            }
        }
    }
    return out;
}

std::vector<SplineTap> axis_taps(int grid, int dense) {
    std::vector<SplineTap> taps(dense);
    for (int x = 0; x < dense; ++x) {
        const double u = dense > 1 ? static_cast<double>(x) * (grid - 1) / (dense - 1) : 0.0;
        taps[x] = spline_tap(grid, u);
    }
    return taps;
}

} // namespace

double bspline_evaluate(std::span<const double> coeffs, double u) {
    if (coeffs.size() < 2) {
        fail("invalid_grid", "spline needs at least 2 coefficients");
    }
    return evaluate_tap(coeffs, spline_tap(static_cast<int>(coeffs.size()), u));
}

DisplacementField bspline_upsample(const ControlGrid& coarse, const Shape& target_shape) {
    for (int a = 0; a < 3; ++a) {
        if (coarse.shape[a] < 2) {
            fail("invalid_grid", "control grid needs at least 2 points per axis, got " + to_string(coarse.shape));
        }
        if (target_shape[a] <= 0) {
            fail("invalid_shape", "target shape must be positive");
        }
    }
    if (coarse.values.size() != 3 * voxel_count(coarse.shape)) {
        fail("size_mismatch", "control grid value count does not match its shape");
    }
    DisplacementField field(target_shape);
    std::array<std::vector<SplineTap>, 3> taps;
    for (int a = 0; a < 3; ++a) {
        taps[a] = axis_taps(coarse.shape[a], target_shape[a]);
    }
    const std::size_t ncoarse = voxel_count(coarse.shape);
    for (int comp = 0; comp < 3; ++comp) {
        std::vector<double> values(ncoarse);
        for (std::size_t i = 0; i < ncoarse; ++i) {
            values[i] = coarse.values[3 * i + comp];
        }
        std::array<int, 3> dims = coarse.shape;
        // Prefilter: tensor-product interpolation coefficients.
        for (int a = 0; a < 3; ++a) {
            values = along_axis(values, dims, a, dims[a], [](std::span<const double> in, std::span<double> out) {
                const auto c = bspline_coefficients(in);
                std::copy(c.begin(), c.end(), out.begin());
            });
        }
        // Separable evaluation onto the dense grid.
        for (int a = 0; a < 3; ++a) {
            const auto& t = taps[a];
            values = along_axis(values, dims, a, target_shape[a],
                                [&t](std::span<const double> in, std::span<double> out) {
                                    for (std::size_t k = 0; k < out.size(); ++k) {
                                        out[k] = evaluate_tap(in, t[k]);
                                    }
                                });
            dims[a] = target_shape[a];
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            field.component(i, comp) = values[i];
        }
    }
    return field;
}

namespace {

template <typename Fn>
void for_each_warp_source(const Shape& s, const DisplacementField& field, Fn&& fn) {
    if (field.shape() != s) {
        fail("shape_mismatch", "displacement field shape " + to_string(field.shape()) +
                                   " does not match volume shape " + to_string(s));
    }
    std::size_t i = 0;
    for (int z = 0; z < s[2]; ++z) {
        for (int y = 0; y < s[1]; ++y) {
            for (int x = 0; x < s[0]; ++x, ++i) {
                const Vec3 d = field.at(i);
                fn(i, Vec3{x + d[0], y + d[1], z + d[2]});
            }
        }
    }
}

} // namespace

Volume warp(const Volume& vol, const DisplacementField& field, const Sampling& s) {
    Volume out(vol.shape(), vol.spacing(), 0.0);
    auto o = out.data();
    for_each_warp_source(vol.shape(), field, [&](std::size_t i, const Vec3& q) {
        o[i] = s.mode == InterpMode::trilinear ? sample_trilinear(vol, q, s.pad) : sample_nearest(vol, q, s.pad);
    });
    return out;
}

LabelMap warp(const LabelMap& labels, const DisplacementField& field) {
    LabelMap out(labels.shape(), labels.spacing(), 0);
    auto o = out.data();
    for_each_warp_source(labels.shape(), field,
                         [&](std::size_t i, const Vec3& q) { o[i] = sample_nearest(labels, q, 0); });
    return out;
}

} // namespace voxaug
