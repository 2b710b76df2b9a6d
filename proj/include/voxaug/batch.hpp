#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "voxaug/augment.hpp"
#include "voxaug/stats.hpp"

namespace voxaug {

// File name suffixes identifying each constituent of a subject, matching the
// BraTS distribution naming: <subject><suffix>.nii[.gz].
struct ChannelSuffixes {
    std::vector<std::string> channels{"_t1", "_t1ce", "_t2", "_flair"};
    std::string labels = "_seg";
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    Shape patch_shape{128, 128, 128};
    bool normalize = true; // min-max each channel before patch extraction
    std::vector<AugmentSpec> specs;
    std::optional<std::filesystem::path> input_dir;
    std::optional<std::filesystem::path> output_dir;
    ChannelSuffixes suffixes;

    AugmentPipeline pipeline() const { return {specs, patch_shape}; }
    // Rejects every out-of-range parameter before anything runs.
    void validate() const;
};

PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& c);

// Provenance documents. Doubles are written with round-trip precision so a
// record replays bit-identically.
nlohmann::json to_json(const AugmentSpec& s);
AugmentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProvenanceRecord& r);
ProvenanceRecord provenance_from_json(const nlohmann::json& j);
std::string control_grid_hash(const ControlGrid& g);

struct SubjectFiles {
    std::string subject_id;
    std::vector<std::filesystem::path> channels;
    std::optional<std::filesystem::path> labels;
};

// Subjects in `dir` sorted by id. Every subject must provide all channels.
std::vector<SubjectFiles> discover_subjects(const std::filesystem::path& dir, const ChannelSuffixes& suffixes,
                                            bool require_channels = true);
Sample load_sample(const SubjectFiles& files);
void write_sample(const Sample& s, const std::filesystem::path& dir, const ChannelSuffixes& suffixes);

// Worker count from VOXAUG_THREADS, else hardware concurrency.
unsigned default_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers. If any call throws,
// the exception of the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

struct AugmentSummary {
    std::size_t subjects = 0;
    std::size_t untouched = 0;
};

AugmentSummary run_augment(const PipelineConfig& config, const std::filesystem::path& in_dir,
                           const std::filesystem::path& out_dir, unsigned threads);

// Writes `count` phantom subjects phantom_000 ... into `out_dir`.
std::vector<std::string> run_phantom(std::uint64_t seed, std::size_t count, const Shape& shape,
                                     const std::filesystem::path& out_dir, unsigned threads,
                                     const ChannelSuffixes& suffixes = {});

// Predictions are looked up as <id><label suffix>.nii[.gz] or <id>.nii[.gz].
MetricTable run_evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                         const std::string& model_id, unsigned threads, const ChannelSuffixes& suffixes = {});

nlohmann::json to_json(const TestResult& r);

} // namespace voxaug
