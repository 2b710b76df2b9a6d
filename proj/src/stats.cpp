#include "voxaug/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <thread>
#include <tuple>

#include "voxaug/error.hpp"
#include "voxaug/random.hpp"

namespace voxaug {

namespace {

constexpr std::uint64_t kChunk = 4096;

void check_differences(std::span<const double> d) {
    if (d.empty()) {
        fail("empty_input", "sign-flip test needs at least one paired difference");
    }
    for (double v : d) {
        if (!std::isfinite(v)) {
            fail("non_finite", "paired differences must be finite");
        }
    }
}

double observed_mean(std::span<const double> d) {
    double sum = 0.0;
    for (double v : d) {
        sum += v;
    }
    return sum / static_cast<double>(d.size());
}

// Mean of d with d[i] negated wherever `negate(i)` is true; same summation
// order as observed_mean.
template <typename Negate>
double flipped_mean(std::span<const double> d, Negate&& negate) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        sum += negate(i) ? -d[i] : d[i];
    }
    return sum / static_cast<double>(d.size());
}

// Random draws [begin, end) of the Monte-Carlo run; draw 0 is the identity.
std::uint64_t count_chunk(std::span<const double> d, double observed, std::uint64_t seed, std::uint64_t chunk,
                          std::uint64_t begin, std::uint64_t end) {
    RandomStream rng = RandomStream(seed).spawn("sign-flip").spawn(chunk);
    const std::size_t words = (d.size() + 63) / 64;
    std::vector<std::uint64_t> bits(words);
    std::uint64_t count = 0;
    for (std::uint64_t k = begin; k < end; ++k) {
        for (auto& w : bits) {
            w = rng.next_u64();
        }
        const double m = flipped_mean(d, [&](std::size_t i) { return (bits[i / 64] >> (i % 64)) & 1u; });
        count += m >= observed;
    }
    return count;
}

TestResult finish(double observed, std::uint64_t extreme, std::uint64_t n_flips, std::uint64_t seed, int m) {
    if (m < 1) {
        fail("invalid_argument", "Bonferroni multiplier must be >= 1");
    }
    TestResult r;
    r.observed_stat = observed;
    r.n_extreme = extreme;
    r.n_flips = n_flips;
    r.p_raw = static_cast<double>(extreme) / static_cast<double>(n_flips);
    r.p_adjusted = std::min(1.0, static_cast<double>(extreme * static_cast<std::uint64_t>(m)) /
                                     static_cast<double>(n_flips));
    r.seed = seed;
    return r;
}

} // namespace

TestResult sign_flip_test(std::span<const double> d, const SignFlipOptions& opt) {
    check_differences(d);
    const double observed = observed_mean(d);

    if (opt.sampling == FlipSampling::exhaustive) {
        if (d.size() > 30) {
            fail("invalid_argument", "exhaustive sign flipping limited to n <= 30");
        }
        const std::uint64_t total = std::uint64_t{1} << d.size();
        std::uint64_t count = 0;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            const double m = flipped_mean(d, [mask](std::size_t i) { return (mask >> i) & 1u; });
            count += m >= observed;
        }
        return finish(observed, count, total, opt.seed, opt.bonferroni_m);
    }

    if (opt.n_flips < 1) {
        fail("invalid_argument", "n_flips must be >= 1");
    }
    // Draw 0 is the identity vector, which always ties the observed value.
    const std::uint64_t random_draws = opt.n_flips - 1;
    const std::uint64_t chunks = (random_draws + kChunk - 1) / kChunk;
    std::vector<std::uint64_t> counts(chunks, 0);
    auto run = [&](std::uint64_t c) {
        const std::uint64_t begin = c * kChunk, end = std::min(random_draws, begin + kChunk);
        counts[c] = count_chunk(d, observed, opt.seed, c, begin, end);
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(chunks)));
    if (threads <= 1) {
        for (std::uint64_t c = 0; c < chunks; ++c) {
            run(c);
        }
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::uint64_t c = t; c < chunks; c += threads) {
                    run(c);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    std::uint64_t count = 1;
    for (auto c : counts) {
        count += c;
    }
    return finish(observed, count, opt.n_flips, opt.seed, opt.bonferroni_m);
}

TestResult sign_flip_test_exact(std::span<const double> d, int bonferroni_m) {
    check_differences(d);
    if (d.size() > 20) {
        fail("invalid_argument", "exact mode limited to n ≤ 20");
    }
    const double observed = observed_mean(d);
    const double n = static_cast<double>(d.size());
    std::uint64_t count = 0;
    // Depth-first over sign choices, sharing prefix sums.
    auto visit = [&](auto&& self, std::size_t i, double prefix) -> void {
        if (i == d.size()) {
            count += prefix / n >= observed;
            return;
        }
        self(self, i + 1, prefix + d[i]);
        self(self, i + 1, prefix + -d[i]);
    };
    visit(visit, 0, 0.0);
    return finish(observed, count, std::uint64_t{1} << d.size(), 0, bonferroni_m);
}

double bonferroni(double p_raw, int m) {
    if (m < 1) {
        fail("invalid_argument", "Bonferroni multiplier must be >= 1");
    }
    return std::min(1.0, static_cast<double>(m) * p_raw);
}

std::string to_string(MetricKind m) {
    return m == MetricKind::dice ? "dice" : "hd95";
}

MetricKind metric_kind_from_string(const std::string& s) {
    if (s == "dice") {
        return MetricKind::dice;
    }
    if (s == "hd95" || s == "hd95_mm") {
        return MetricKind::hd95;
    }
    fail("invalid_argument", "unknown metric '" + s + "' (expected dice or hd95)");
}

bool record_less(const MetricRecord& a, const MetricRecord& b) {
    return std::tuple(a.subject_id, a.model_id, to_string(a.region)) <
           std::tuple(b.subject_id, b.model_id, to_string(b.region));
}

std::vector<double> paired_differences(const MetricTable& table, const std::string& model_a,
                                       const std::string& model_b, MetricKind metric, Region region) {
    std::map<std::string, double> a, b;
    for (const auto& r : table) {
        if (r.region != region) {
            continue;
        }
        if (r.model_id == model_a) {
            a[r.subject_id] = r.value(metric);
        }
        if (r.model_id == model_b) {
            b[r.subject_id] = r.value(metric);
        }
    }
    if (a.empty()) {
        fail("missing_model", "no rows for model '" + model_a + "' in region " + to_string(region));
    }
    if (b.empty()) {
        fail("missing_model", "no rows for model '" + model_b + "' in region " + to_string(region));
    }
    std::vector<double> d;
    for (const auto& [subject, va] : a) {
        const auto it = b.find(subject);
        if (it == b.end()) {
            fail("missing_cells", "subject '" + subject + "' missing for model '" + model_b + "'");
        }
        d.push_back(va - it->second);
    }
    for (const auto& [subject, vb] : b) {
        if (!a.count(subject)) {
            fail("missing_cells", "subject '" + subject + "' missing for model '" + model_a + "'");
        }
    }
    return d;
}

std::vector<MetricRegion> all_metric_regions() {
    std::vector<MetricRegion> out;
    for (auto m : {MetricKind::dice, MetricKind::hd95}) {
        for (auto r : kRegions) {
            out.push_back({m, r});
        }
    }
    return out;
}

std::vector<double> mid_ranks(std::span<const double> values, bool higher_is_better) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return higher_is_better ? values[a] > values[b] : values[a] < values[b];
    });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        // Positions i+1 .. j share their mean.
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = r;
        }
        i = j;
    }
    return ranks;
}

RankTable rank_models(const MetricTable& table, const std::vector<MetricRegion>& metrics, bool normalize) {
    if (metrics.empty()) {
        fail("invalid_argument", "rank_models needs at least one metric-region pair");
    }
    std::set<std::string> models, subjects;
    std::map<std::tuple<std::string, std::string, Region>, const MetricRecord*> cells;
    for (const auto& r : table) {
        if (!std::isfinite(r.dice) || !std::isfinite(r.hd95_mm)) {
            fail("non_finite", "non-finite metric for subject '" + r.subject_id + "'");
        }
        models.insert(r.model_id);
        subjects.insert(r.subject_id);
        if (!cells.emplace(std::tuple(r.subject_id, r.model_id, r.region), &r).second) {
            fail("duplicate_cell", "duplicate row for subject '" + r.subject_id + "', model '" + r.model_id +
                                       "', region " + to_string(r.region));
        }
    }
    if (models.empty()) {
        fail("empty_input", "metric table is empty");
    }
    std::set<Region> regions;
    for (const auto& mr : metrics) {
        regions.insert(mr.region);
    }
    std::string missing;
    std::size_t n_missing = 0;
    for (const auto& s : subjects) {
        for (const auto& m : models) {
            for (auto r : regions) {
                if (!cells.count(std::tuple(s, m, r))) {
                    if (n_missing < 10) {
                        missing += (missing.empty() ? "" : "; ") + s + "/" + m + "/" + to_string(r);
                    }
                    ++n_missing;
                }
            }
        }
    }
    if (n_missing > 0) {
        fail("missing_cells", std::to_string(n_missing) + " missing cells: " + missing +
                                  (n_missing > 10 ? "; ..." : ""));
    }

    const std::vector<std::string> model_list(models.begin(), models.end());
    std::vector<double> sums(model_list.size(), 0.0);
    std::size_t n_cells = 0;
    std::vector<double> values(model_list.size());
    for (const auto& s : subjects) {
        for (const auto& mr : metrics) {
            for (std::size_t k = 0; k < model_list.size(); ++k) {
                values[k] = cells.at(std::tuple(s, model_list[k], mr.region))->value(mr.metric);
            }
            const auto ranks = mid_ranks(values, mr.metric == MetricKind::dice);
            for (std::size_t k = 0; k < model_list.size(); ++k) {
                sums[k] += ranks[k];
            }
            ++n_cells;
        }
    }
    RankTable out;
    for (std::size_t k = 0; k < model_list.size(); ++k) {
        double score = sums[k] / static_cast<double>(n_cells);
        if (normalize) {
            score /= static_cast<double>(model_list.size());
        }
        out.push_back({model_list[k], score, n_cells});
    }
    std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
        return a.score < b.score;
    });
    return out;
}

} // namespace voxaug
