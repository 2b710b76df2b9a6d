#include "voxaug/tables.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "voxaug/error.hpp"

namespace voxaug {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        fail("parse_error", context + ": cannot parse number '" + s + "'");
    }
    return v;
}

void validate_record(const MetricRecord& r) {
    if (r.subject_id.empty() || r.model_id.empty()) {
        fail("invalid_row", "empty subject_id or model_id");
    }
    if (!(r.dice >= 0.0 && r.dice <= 1.0)) {
        fail("invalid_row", "dice out of [0, 1] for subject '" + r.subject_id + "'");
    }
    if (!(r.hd95_mm >= 0.0) || !std::isfinite(r.hd95_mm)) {
        fail("invalid_row", "hd95_mm must be finite and >= 0 for subject '" + r.subject_id + "'");
    }
    for (const auto* s : {&r.subject_id, &r.model_id}) {
        if (s->find_first_of(",\"\n\r") != std::string::npos) {
            fail("invalid_row", "identifier '" + *s + "' contains a CSV delimiter");
        }
    }
}

void write_metrics_csv(std::ostream& os, MetricTable table) {
    for (const auto& r : table) {
        validate_record(r);
    }
    std::sort(table.begin(), table.end(), record_less);
    os << kMetricsHeader << '\n';
    for (const auto& r : table) {
        os << r.subject_id << ',' << r.model_id << ',' << to_string(r.region) << ',' << format_double(r.dice) << ','
           << format_double(r.hd95_mm) << '\n';
    }
}

namespace {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            fail("io_error", "cannot write '" + path.string() + "'");
        }
        fn(os);
        if (!os) {
            fail("io_error", "write failed for '" + path.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        fail("io_error", "cannot move output into place at '" + path.string() + "'");
    }
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void write_metrics_csv(const std::filesystem::path& path, MetricTable table) {
    write_file(path, [&](std::ostream& os) { write_metrics_csv(os, std::move(table)); });
}

MetricTable read_metrics_csv(std::istream& is, const std::string& source) {
    std::string line;
    if (!std::getline(is, line)) {
        fail("parse_error", source + ": empty metrics file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kMetricsHeader) {
        fail("parse_error", source + ": expected header '" + std::string(kMetricsHeader) + "'");
    }
    MetricTable table;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto f = split(line);
        const std::string ctx = source + ":" + std::to_string(lineno);
        if (f.size() != 5) {
            fail("parse_error", ctx + ": expected 5 fields, found " + std::to_string(f.size()));
        }
        MetricRecord r;
        r.subject_id = f[0];
        r.model_id = f[1];
        r.region = region_from_string(f[2]);
        r.dice = parse_double(f[3], ctx);
        r.hd95_mm = parse_double(f[4], ctx);
        validate_record(r);
        table.push_back(std::move(r));
    }
    return table;
}

MetricTable read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        fail("io_error", "cannot open '" + path.string() + "'");
    }
    return read_metrics_csv(is, path.string());
}

void write_ranks_csv(std::ostream& os, const RankTable& ranks) {
    os << kRanksHeader << '\n';
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        os << (i + 1) << ',' << ranks[i].model_id << ',' << format_double(ranks[i].score) << ',' << ranks[i].cells
           << '\n';
    }
}

void write_ranks_csv(const std::filesystem::path& path, const RankTable& ranks) {
    write_file(path, [&](std::ostream& os) { write_ranks_csv(os, ranks); });
}

} // namespace voxaug
