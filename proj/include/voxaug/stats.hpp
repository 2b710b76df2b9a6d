#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxaug/metrics.hpp"

namespace voxaug {

enum class Alternative { greater };

enum class FlipSampling {
    monte_carlo, // identity + (n_flips - 1) random sign vectors
    exhaustive,  // all 2^n sign vectors in mask order; n_flips is ignored
};

struct SignFlipOptions {
    std::uint64_t n_flips = 100000;
    std::uint64_t seed = 0;
    Alternative alternative = Alternative::greater;
    FlipSampling sampling = FlipSampling::monte_carlo;
    int bonferroni_m = 1;
    unsigned threads = 1; // result does not depend on this
};

struct TestResult {
    double observed_stat = 0.0; // mean(d)
    std::uint64_t n_extreme = 0; // flips with mean(s * d) >= observed
    std::uint64_t n_flips = 0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    std::uint64_t seed = 0;

    bool operator==(const TestResult&) const = default;
};

// One-sided paired sign-flipping permutation test of mean(d) > 0.
TestResult sign_flip_test(std::span<const double> d, const SignFlipOptions& opt = {});

// Full enumeration of the 2^n sign vectors; n <= 20.
TestResult sign_flip_test_exact(std::span<const double> d, int bonferroni_m = 1);

// min(1, m * p)
double bonferroni(double p_raw, int m);

enum class MetricKind { dice, hd95 };

std::string to_string(MetricKind m);
MetricKind metric_kind_from_string(const std::string& s);

struct MetricRecord {
    std::string subject_id;
    std::string model_id;
    Region region = Region::WT;
    double dice = 0.0;
    double hd95_mm = 0.0;

    double value(MetricKind m) const { return m == MetricKind::dice ? dice : hd95_mm; }
    bool operator==(const MetricRecord&) const = default;
};

// Sort key used for every serialized metric table.
bool record_less(const MetricRecord& a, const MetricRecord& b);

using MetricTable = std::vector<MetricRecord>;

// Subject-aligned differences value_a - value_b for one metric and region.
std::vector<double> paired_differences(const MetricTable& table, const std::string& model_a,
                                       const std::string& model_b, MetricKind metric, Region region);

struct MetricRegion {
    MetricKind metric;
    Region region;
};

// All six (metric, region) pairs: dice then hd95, each over ET, WT, TC.
std::vector<MetricRegion> all_metric_regions();

struct RankEntry {
    std::string model_id;
    double score = 0.0;    // mean rank, lower is better
    std::size_t cells = 0; // subject x metric-region cells averaged
};

using RankTable = std::vector<RankEntry>;

// Mid-ranks of `values` where `higher_is_better` decides the order; rank 1
// is the best value and ties share the mean of the positions they span.
std::vector<double> mid_ranks(std::span<const double> values, bool higher_is_better);

// Per subject and per metric-region pair, every model is ranked; a model's
// score is its mean rank. `normalize` divides scores by the model count.
RankTable rank_models(const MetricTable& table, const std::vector<MetricRegion>& metrics = all_metric_regions(),
                      bool normalize = false);

} // namespace voxaug
