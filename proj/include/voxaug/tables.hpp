#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "voxaug/stats.hpp"

namespace voxaug {

inline constexpr const char* kMetricsHeader = "subject_id,model_id,region,dice,hd95_mm";
inline constexpr const char* kRanksHeader = "position,model_id,rank_score,cells";

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

// Rows are validated (dice in [0,1], hd95 >= 0, region in {ET,WT,TC}) and
// written sorted by (subject_id, model_id, region).
void write_metrics_csv(std::ostream& os, MetricTable table);
void write_metrics_csv(const std::filesystem::path& path, MetricTable table);
MetricTable read_metrics_csv(std::istream& is, const std::string& source = "<stream>");
MetricTable read_metrics_csv(const std::filesystem::path& path);
void validate_record(const MetricRecord& r);

void write_ranks_csv(std::ostream& os, const RankTable& ranks);
void write_ranks_csv(const std::filesystem::path& path, const RankTable& ranks);

} // namespace voxaug
