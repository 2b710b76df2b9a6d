#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "voxaug/interp.hpp"
#include "voxaug/random.hpp"
#include "voxaug/volume.hpp"

namespace voxaug {

enum class AugmentKind { flip, rotation, scale, brightness, elastic };

std::string to_string(AugmentKind k);
AugmentKind augment_kind_from_string(const std::string& s);

// Declarative operator description. Only the fields relevant to `kind` are
// read; `validate` checks them against the operator's admissible range.
struct AugmentSpec {
    AugmentKind kind = AugmentKind::flip;
    double max_deg = 15.0;  // rotation: (0, 180]
    double max_frac = 0.10; // scale: (0, 0.5]
    double sigma = 2.0;     // elastic: >= 0, voxels
    int grid_size = 4;      // elastic: control points per axis, >= 2
    double probability = 0.5;

    void validate() const;

    static AugmentSpec flip(double p = 0.5);
    static AugmentSpec rotation(double max_deg, double p = 0.5);
    static AugmentSpec scale(double max_frac, double p = 0.5);
    static AugmentSpec brightness(double p = 0.5);
    static AugmentSpec elastic(double sigma, int grid_size = 4, double p = 0.5);

    bool operator==(const AugmentSpec&) const = default;
};

struct AugmentPipeline {
    std::vector<AugmentSpec> specs;
    // When set, apply_pipeline rejects samples of any other shape.
    std::optional<Shape> patch_shape;
};

// Drawn parameters, one struct per operator.
struct FlipParams {
    int axis = 0;
    bool operator==(const FlipParams&) const = default;
};
struct RotationParams {
    Vec3 angles_deg{}; // signed, about x, y, z
    bool operator==(const RotationParams&) const = default;
};
struct ScaleParams {
    Vec3 factors{1.0, 1.0, 1.0};
    bool operator==(const ScaleParams&) const = default;
};
struct BrightnessParams {
    double gain = 1.0;
    double gamma = 1.0;
    bool operator==(const BrightnessParams&) const = default;
};
struct ElasticParams {
    double sigma = 0.0;
    ControlGrid grid;
    bool operator==(const ElasticParams& o) const {
        return sigma == o.sigma && grid.shape == o.grid.shape && grid.values == o.grid.values;
    }
};

using OperatorParams = std::variant<FlipParams, RotationParams, ScaleParams, BrightnessParams, ElasticParams>;

// Per-sample stream keyed by (master seed, subject id).
RandomStream sample_stream(std::uint64_t seed, const std::string& subject_id);

FlipParams draw_flip(RandomStream& rng);
RotationParams draw_rotation(double max_deg, RandomStream& rng);
ScaleParams draw_scale(double max_frac, RandomStream& rng);
BrightnessParams draw_brightness(RandomStream& rng);
ElasticParams draw_elastic(double sigma, int grid_size, RandomStream& rng);
OperatorParams draw_params(const AugmentSpec& spec, RandomStream& rng);

// Rx * Ry * Rz for the given signed angles in degrees.
Mat3 rotation_matrix(const Vec3& angles_deg);

Sample apply_flip(const Sample& s, const FlipParams& p);
Sample apply_rotation(const Sample& s, const RotationParams& p);
Sample apply_scale(const Sample& s, const ScaleParams& p);
Sample apply_brightness(const Sample& s, const BrightnessParams& p);
Sample apply_elastic(const Sample& s, const ElasticParams& p);
Sample apply_params(const Sample& s, const OperatorParams& p);

// Draw-and-apply forms.
Sample flip(const Sample& s, RandomStream& rng);
Sample rotate(const Sample& s, double max_deg, RandomStream& rng);
Sample scale(const Sample& s, double max_frac, RandomStream& rng);
Sample brightness(const Sample& s, RandomStream& rng);
Sample elastic(const Sample& s, double sigma, int grid_size, RandomStream& rng);

struct ProvenanceEntry {
    int index = 0;
    AugmentSpec spec;
    bool fired = false;
    std::optional<OperatorParams> params; // present iff fired
};

struct ProvenanceRecord {
    std::string subject_id;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::vector<ProvenanceEntry> entries;

    // True when no spec fired.
    bool untouched() const;
};

struct AugmentResult {
    Sample sample;
    ProvenanceRecord provenance;
};

// Each spec i draws from rng.spawn(i): first its Bernoulli gate, then its
// parameters if it fired. Specs are applied in order.
AugmentResult apply_pipeline(const Sample& sample, const AugmentPipeline& pipeline, const RandomStream& rng);

// Re-applies recorded parameters without drawing anything.
Sample replay_pipeline(const Sample& sample, const ProvenanceRecord& record);

} // namespace voxaug
