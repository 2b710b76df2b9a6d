#include "voxaug/augment.hpp"

#include <cmath>
#include <numbers>

#include "voxaug/error.hpp"

namespace voxaug {

std::string to_string(AugmentKind k) {
    switch (k) {
    case AugmentKind::flip:
        return "flip";
    case AugmentKind::rotation:
        return "rotation";
    case AugmentKind::scale:
        return "scale";
    case AugmentKind::brightness:
        return "brightness";
    case AugmentKind::elastic:
        return "elastic";
    }
    return "unknown";
}

AugmentKind augment_kind_from_string(const std::string& s) {
    for (auto k : {AugmentKind::flip, AugmentKind::rotation, AugmentKind::scale, AugmentKind::brightness,
                   AugmentKind::elastic}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    fail("invalid_config", "unknown augmentation kind '" + s + "'");
}

void AugmentSpec::validate() const {
    if (!(probability >= 0.0 && probability <= 1.0)) {
        fail("invalid_config", to_string(kind) + ": probability must lie in [0, 1]");
    }
    switch (kind) {
    case AugmentKind::rotation:
        if (!(max_deg > 0.0 && max_deg <= 180.0)) {
            fail("invalid_config", "rotation: max_deg must lie in (0, 180]");
        }
        break;
    case AugmentKind::scale:
        if (!(max_frac > 0.0 && max_frac <= 0.5)) {
            fail("invalid_config", "scale: max_frac must lie in (0, 0.5]");
        }
        break;
    case AugmentKind::elastic:
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
            fail("invalid_config", "elastic: sigma must be >= 0");
        }
        if (grid_size < 2) {
            fail("invalid_config", "elastic: grid_size must be >= 2");
        }
        break;
    case AugmentKind::flip:
    case AugmentKind::brightness:
        break;
    }
}

AugmentSpec AugmentSpec::flip(double p) {
    AugmentSpec s;
    s.kind = AugmentKind::flip;
    s.probability = p;
    return s;
}

AugmentSpec AugmentSpec::rotation(double max_deg, double p) {
    AugmentSpec s;
    s.kind = AugmentKind::rotation;
    s.max_deg = max_deg;
    s.probability = p;
    return s;
}

AugmentSpec AugmentSpec::scale(double max_frac, double p) {
    AugmentSpec s;
    s.kind = AugmentKind::scale;
    s.max_frac = max_frac;
    s.probability = p;
    return s;
}

AugmentSpec AugmentSpec::brightness(double p) {
    AugmentSpec s;
    s.kind = AugmentKind::brightness;
    s.probability = p;
    return s;
}

AugmentSpec AugmentSpec::elastic(double sigma, int grid_size, double p) {
    AugmentSpec s;
    s.kind = AugmentKind::elastic;
    s.sigma = sigma;
    s.grid_size = grid_size;
    s.probability = p;
    return s;
}

RandomStream sample_stream(std::uint64_t seed, const std::string& subject_id) {
    return RandomStream(seed).spawn(subject_id);
}

FlipParams draw_flip(RandomStream& rng) {
    return {static_cast<int>(rng.uniform_int(3))};
}

RotationParams draw_rotation(double max_deg, RandomStream& rng) {
    RotationParams p;
    for (int a = 0; a < 3; ++a) {
        const double magnitude = rng.uniform(0.0, max_deg);
        p.angles_deg[a] = rng.bernoulli(0.5) ? magnitude : -magnitude;
    }
    return p;
}

ScaleParams draw_scale(double max_frac, RandomStream& rng) {
    ScaleParams p;
    for (int a = 0; a < 3; ++a) {
        p.factors[a] = rng.uniform(1.0 - max_frac, 1.0 + max_frac);
    }
    return p;
}

BrightnessParams draw_brightness(RandomStream& rng) {
    BrightnessParams p;
    p.gain = rng.uniform(0.8, 1.2);
    p.gamma = rng.uniform(0.8, 1.2);
    return p;
}

ElasticParams draw_elastic(double sigma, int grid_size, RandomStream& rng) {
    if (grid_size < 2) {
        fail("invalid_grid", "elastic grid_size must be >= 2");
    }
    ElasticParams p;
    p.sigma = sigma;
    p.grid.shape = {grid_size, grid_size, grid_size};
    p.grid.values.resize(3 * voxel_count(p.grid.shape));
    for (auto& v : p.grid.values) {
        v = sigma * rng.normal();
    }
    return p;
}

OperatorParams draw_params(const AugmentSpec& spec, RandomStream& rng) {
    switch (spec.kind) {
    case AugmentKind::flip:
        return draw_flip(rng);
    case AugmentKind::rotation:
        return draw_rotation(spec.max_deg, rng);
    case AugmentKind::scale:
        return draw_scale(spec.max_frac, rng);
    case AugmentKind::brightness:
        return draw_brightness(rng);
    case AugmentKind::elastic:
        return draw_elastic(spec.sigma, spec.grid_size, rng);
    }
    fail("invalid_config", "unknown augmentation kind");
}

Mat3 rotation_matrix(const Vec3& angles_deg) {
    const double d2r = std::numbers::pi / 180.0;
    const double cx = std::cos(angles_deg[0] * d2r), sx = std::sin(angles_deg[0] * d2r);
    const double cy = std::cos(angles_deg[1] * d2r), sy = std::sin(angles_deg[1] * d2r);
    const double cz = std::cos(angles_deg[2] * d2r), sz = std::sin(angles_deg[2] * d2r);
    const Mat3 rx{{{1.0, 0.0, 0.0}, {0.0, cx, -sx}, {0.0, sx, cx}}};
    const Mat3 ry{{{cy, 0.0, sy}, {0.0, 1.0, 0.0}, {-sy, 0.0, cy}}};
    const Mat3 rz{{{cz, -sz, 0.0}, {sz, cz, 0.0}, {0.0, 0.0, 1.0}}};
    return multiply(multiply(rx, ry), rz);
}

namespace {

template <typename Grid>
Grid reversed(const Grid& g, int axis) {
    Grid out = g;
    const Shape& s = g.shape();
    for (int z = 0; z < s[2]; ++z) {
        for (int y = 0; y < s[1]; ++y) {
            for (int x = 0; x < s[0]; ++x) {
                std::array<int, 3> src{x, y, z};
                src[axis] = s[axis] - 1 - src[axis];
                out.at(x, y, z) = g.at(src[0], src[1], src[2]);
            }
        }
    }
    return out;
}

Sample apply_affine(const Sample& s, const AffineTransform& t) {
    Sample out;
    out.subject_id = s.subject_id;
    for (const auto& c : s.channels) {
        out.channels.push_back(resample_affine(c, t, Sampling{InterpMode::trilinear, 0.0}));
    }
    if (s.labels) {
        out.labels = resample_affine(*s.labels, t);
    }
    return out;
}

} // namespace

Sample apply_flip(const Sample& s, const FlipParams& p) {
    if (p.axis < 0 || p.axis > 2) {
        fail("invalid_params", "flip axis must be 0, 1 or 2");
    }
    Sample out;
    out.subject_id = s.subject_id;
    for (const auto& c : s.channels) {
        out.channels.push_back(reversed(c, p.axis));
    }
    if (s.labels) {
        out.labels = reversed(*s.labels, p.axis);
    }
    return out;
}

Sample apply_rotation(const Sample& s, const RotationParams& p) {
    return apply_affine(s, AffineTransform{rotation_matrix(p.angles_deg)});
}

Sample apply_scale(const Sample& s, const ScaleParams& p) {
    Mat3 m{};
    for (int a = 0; a < 3; ++a) {
        m[a][a] = p.factors[a];
    }
    return apply_affine(s, AffineTransform{m});
}

Sample apply_brightness(const Sample& s, const BrightnessParams& p) {
    Sample out = s;
    for (auto& c : out.channels) {
        for (double& v : c.data()) {
            if (v < 0.0) {
                fail("negative_intensity", "brightness requires nonnegative intensities - normalize first");
            }
            v = p.gain * std::pow(v, p.gamma);
        }
    }
    return out;
}

Sample apply_elastic(const Sample& s, const ElasticParams& p) {
    const DisplacementField field = bspline_upsample(p.grid, s.shape());
    Sample out;
    out.subject_id = s.subject_id;
    for (const auto& c : s.channels) {
        out.channels.push_back(warp(c, field, Sampling{InterpMode::trilinear, 0.0}));
    }
    if (s.labels) {
        out.labels = warp(*s.labels, field);
    }
    return out;
}

Sample apply_params(const Sample& s, const OperatorParams& p) {
    return std::visit(
        [&s](const auto& q) -> Sample {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, FlipParams>) {
                return apply_flip(s, q);
            } else if constexpr (std::is_same_v<T, RotationParams>) {
                return apply_rotation(s, q);
            } else if constexpr (std::is_same_v<T, ScaleParams>) {
                return apply_scale(s, q);
            } else if constexpr (std::is_same_v<T, BrightnessParams>) {
                return apply_brightness(s, q);
            } else {
                return apply_elastic(s, q);
            }
        },
        p);
}

Sample flip(const Sample& s, RandomStream& rng) {
    return apply_flip(s, draw_flip(rng));
}

Sample rotate(const Sample& s, double max_deg, RandomStream& rng) {
    return apply_rotation(s, draw_rotation(max_deg, rng));
}

Sample scale(const Sample& s, double max_frac, RandomStream& rng) {
    return apply_scale(s, draw_scale(max_frac, rng));
}

Sample brightness(const Sample& s, RandomStream& rng) {
    return apply_brightness(s, draw_brightness(rng));
}

Sample elastic(const Sample& s, double sigma, int grid_size, RandomStream& rng) {
    return apply_elastic(s, draw_elastic(sigma, grid_size, rng));
}

bool ProvenanceRecord::untouched() const {
    for (const auto& e : entries) {
        if (e.fired) {
            return false;
        }
    }
    return true;
}

AugmentResult apply_pipeline(const Sample& sample, const AugmentPipeline& pipeline, const RandomStream& rng) {
    sample.check_consistent();
    if (pipeline.patch_shape && sample.shape() != *pipeline.patch_shape) {
        fail("shape_mismatch", "sample '" + sample.subject_id + "' has shape " + to_string(sample.shape()) +
                                   ", expected patch shape " + to_string(*pipeline.patch_shape));
    }
    for (const auto& spec : pipeline.specs) {
        spec.validate();
    }
    AugmentResult result{sample, {}};
    result.provenance.subject_id = sample.subject_id;
    result.provenance.seed = rng.seed();
    result.provenance.stream_id = rng.stream_id();
    for (std::size_t i = 0; i < pipeline.specs.size(); ++i) {
        const AugmentSpec& spec = pipeline.specs[i];
        RandomStream sub = rng.spawn(static_cast<std::uint64_t>(i));
        ProvenanceEntry entry;
        entry.index = static_cast<int>(i);
        entry.spec = spec;
        entry.fired = sub.bernoulli(spec.probability);
        if (entry.fired) {
            entry.params = draw_params(spec, sub);
            result.sample = apply_params(result.sample, *entry.params);
        }
        result.provenance.entries.push_back(std::move(entry));
    }
    return result;
}

Sample replay_pipeline(const Sample& sample, const ProvenanceRecord& record) {
    Sample out = sample;
    for (const auto& e : record.entries) {
        if (e.fired) {
            if (!e.params) {
                fail("invalid_provenance", "fired entry " + std::to_string(e.index) + " has no parameters");
            }
            out = apply_params(out, *e.params);
        }
    }
    return out;
}

} // namespace voxaug
