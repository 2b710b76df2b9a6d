#include "voxaug/batch.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "voxaug/error.hpp"
#include "voxaug/metrics.hpp"
#include "voxaug/nifti.hpp"
#include "voxaug/tables.hpp"

namespace voxaug {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        fail("invalid_config", where + " must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            fail("invalid_config", where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail("invalid_config", where + ": bad value for '" + key + "': " + e.what());
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    if (s.empty() || s.size() > 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
        fail("invalid_provenance", "bad hex value '" + s + "'");
    }
    return std::stoull(s, nullptr, 16);
}

Vec3 vec3_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) {
        fail("invalid_provenance", where + " must be an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

void PipelineConfig::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (patch_shape[a] <= 0) {
            fail("invalid_config", "patch_shape components must be positive");
        }
    }
    for (const auto& s : specs) {
        s.validate();
    }
    if (suffixes.channels.empty()) {
        fail("invalid_config", "at least one channel suffix is required");
    }
    std::set<std::string> seen;
    for (const auto& s : suffixes.channels) {
        if (s.empty() || !seen.insert(s).second) {
            fail("invalid_config", "channel suffixes must be non-empty and distinct");
        }
    }
    if (suffixes.labels.empty() || seen.count(suffixes.labels)) {
        fail("invalid_config", "label suffix must be non-empty and differ from channel suffixes");
    }
}

json to_json(const AugmentSpec& s) {
    json j;
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
    case AugmentKind::rotation:
        j["max_deg"] = s.max_deg;
        break;
    case AugmentKind::scale:
        j["max_frac"] = s.max_frac;
        break;
    case AugmentKind::elastic:
        j["sigma"] = s.sigma;
        j["grid_size"] = s.grid_size;
        break;
    case AugmentKind::flip:
    case AugmentKind::brightness:
        break;
    }
    j["probability"] = s.probability;
    return j;
}

AugmentSpec spec_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
        fail("invalid_config", "augmentation spec needs a string 'kind'");
    }
    AugmentSpec s;
    s.kind = augment_kind_from_string(j["kind"].get<std::string>());
    const std::string where = "spec '" + to_string(s.kind) + "'";
    std::set<std::string> allowed{"kind", "probability"};
    switch (s.kind) {
    case AugmentKind::rotation:
        allowed.insert("max_deg");
        break;
    case AugmentKind::scale:
        allowed.insert("max_frac");
        break;
    case AugmentKind::elastic:
        allowed.insert({"sigma", "grid_size"});
        break;
    case AugmentKind::flip:
    case AugmentKind::brightness:
        break;
    }
    check_keys(j, allowed, where);
    s.probability = get_or(j, "probability", 0.5, where);
    s.max_deg = get_or(j, "max_deg", s.max_deg, where);
    s.max_frac = get_or(j, "max_frac", s.max_frac, where);
    s.sigma = get_or(j, "sigma", s.sigma, where);
    s.grid_size = get_or(j, "grid_size", s.grid_size, where);
    s.validate();
    return s;
}

PipelineConfig parse_config(const json& j) {
    check_keys(j, {"seed", "patch_shape", "normalize", "pipeline", "input_dir", "output_dir", "suffixes"}, "config");
    PipelineConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
    if (j.contains("patch_shape")) {
        const auto& p = j["patch_shape"];
        if (!p.is_array() || p.size() != 3) {
            fail("invalid_config", "patch_shape must be an array of 3 integers");
        }
        for (int a = 0; a < 3; ++a) {
            if (!p[a].is_number_integer() || p[a].get<long long>() < 1 || p[a].get<long long>() > 32767) {
                fail("invalid_config", "patch_shape entries must be integers in [1, 32767]");
            }
            c.patch_shape[a] = p[a].get<int>();
        }
    }
    c.normalize = get_or(j, "normalize", true, "config");
    if (j.contains("pipeline")) {
        if (!j["pipeline"].is_array()) {
            fail("invalid_config", "pipeline must be an array");
        }
        for (const auto& s : j["pipeline"]) {
            c.specs.push_back(spec_from_json(s));
        }
    }
    if (j.contains("input_dir")) {
        c.input_dir = get_or<std::string>(j, "input_dir", "", "config");
    }
    if (j.contains("output_dir")) {
        c.output_dir = get_or<std::string>(j, "output_dir", "", "config");
    }
    if (j.contains("suffixes")) {
        const auto& s = j["suffixes"];
        check_keys(s, {"channels", "labels"}, "suffixes");
        c.suffixes.channels = get_or(s, "channels", c.suffixes.channels, "suffixes");
        c.suffixes.labels = get_or(s, "labels", c.suffixes.labels, "suffixes");
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        fail("io_error", "cannot open config '" + path.string() + "'");
    }
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        fail("invalid_config", "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["patch_shape"] = c.patch_shape;
    j["normalize"] = c.normalize;
    j["pipeline"] = json::array();
    for (const auto& s : c.specs) {
        j["pipeline"].push_back(to_json(s));
    }
    j["suffixes"] = {{"channels", c.suffixes.channels}, {"labels", c.suffixes.labels}};
    return j;
}

std::string control_grid_hash(const ControlGrid& g) {
    std::string bytes(g.values.size() * sizeof(double), '\0');
    if (!g.values.empty()) {
        std::memcpy(bytes.data(), g.values.data(), bytes.size());
    }
    return hex64(fnv1a64(bytes));
}

namespace {

json params_to_json(const OperatorParams& p) {
    return std::visit(
        [](const auto& q) -> json {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, FlipParams>) {
                return {{"axis", q.axis}};
            } else if constexpr (std::is_same_v<T, RotationParams>) {
                return {{"angles_deg", q.angles_deg}};
            } else if constexpr (std::is_same_v<T, ScaleParams>) {
                return {{"factors", q.factors}};
            } else if constexpr (std::is_same_v<T, BrightnessParams>) {
                return {{"gain", q.gain}, {"gamma", q.gamma}};
            } else {
                return {{"sigma", q.sigma},
                        {"grid_shape", q.grid.shape},
                        {"control_values", q.grid.values},
                        {"control_hash", control_grid_hash(q.grid)}};
            }
        },
        p);
}

OperatorParams params_from_json(AugmentKind kind, const json& j) {
    switch (kind) {
    case AugmentKind::flip:
        return FlipParams{j.at("axis").get<int>()};
    case AugmentKind::rotation:
        return RotationParams{vec3_from(j.at("angles_deg"), "angles_deg")};
    case AugmentKind::scale:
        return ScaleParams{vec3_from(j.at("factors"), "factors")};
    case AugmentKind::brightness:
        return BrightnessParams{j.at("gain").get<double>(), j.at("gamma").get<double>()};
    case AugmentKind::elastic: {
        ElasticParams e;
        e.sigma = j.at("sigma").get<double>();
        e.grid.shape = j.at("grid_shape").get<Shape>();
        e.grid.values = j.at("control_values").get<std::vector<double>>();
        if (e.grid.values.size() != 3 * voxel_count(e.grid.shape)) {
            fail("invalid_provenance", "control_values length does not match grid_shape");
        }
        if (j.contains("control_hash") && j["control_hash"].get<std::string>() != control_grid_hash(e.grid)) {
            fail("invalid_provenance", "control_hash does not match control_values");
        }
        return e;
    }
    }
    fail("invalid_provenance", "unknown kind");
}

} // namespace

json to_json(const ProvenanceRecord& r) {
    json j;
    j["subject_id"] = r.subject_id;
    j["seed"] = r.seed;
    j["stream_id"] = hex64(r.stream_id);
    j["untouched"] = r.untouched();
    j["entries"] = json::array();
    for (const auto& e : r.entries) {
        json je;
        je["index"] = e.index;
        je["spec"] = to_json(e.spec);
        je["fired"] = e.fired;
        je["drawn"] = e.params ? params_to_json(*e.params) : json(nullptr);
        j["entries"].push_back(std::move(je));
    }
    return j;
}

ProvenanceRecord provenance_from_json(const json& j) {
    try {
        ProvenanceRecord r;
        r.subject_id = j.at("subject_id").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.stream_id = parse_hex64(j.at("stream_id").get<std::string>());
        for (const auto& je : j.at("entries")) {
            ProvenanceEntry e;
            e.index = je.at("index").get<int>();
            e.spec = spec_from_json(je.at("spec"));
            e.fired = je.at("fired").get<bool>();
            if (e.fired) {
                e.params = params_from_json(e.spec.kind, je.at("drawn"));
            }
            r.entries.push_back(std::move(e));
        }
        return r;
    } catch (const json::exception& e) {
        fail("invalid_provenance", std::string("malformed provenance document: ") + e.what());
    }
}

namespace {

bool nifti_name(const std::string& name, std::string& stem) {
    for (const char* ext : {".nii.gz", ".nii"}) {
        const std::size_t n = std::strlen(ext);
        if (name.size() > n && name.compare(name.size() - n, n, ext) == 0) {
            stem = name.substr(0, name.size() - n);
            return true;
        }
    }
    return false;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

std::vector<SubjectFiles> discover_subjects(const std::filesystem::path& dir, const ChannelSuffixes& suffixes,
                                            bool require_channels) {
    if (!std::filesystem::is_directory(dir)) {
        fail("io_error", "not a directory: '" + dir.string() + "'");
    }
    // Role -1 is the label map; longer suffixes are tried first so "_t1ce"
    // is not taken for "_t1".
    std::vector<std::pair<std::string, int>> roles;
    for (std::size_t i = 0; i < suffixes.channels.size(); ++i) {
        roles.emplace_back(suffixes.channels[i], static_cast<int>(i));
    }
    roles.emplace_back(suffixes.labels, -1);
    std::stable_sort(roles.begin(), roles.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    std::map<std::string, SubjectFiles> found;
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) {
            entries.push_back(e.path());
        }
    }
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
        std::string stem;
        if (!nifti_name(p.filename().string(), stem)) {
            continue;
        }
        for (const auto& [suffix, role] : roles) {
            if (!ends_with(stem, suffix)) {
                continue;
            }
            const std::string id = stem.substr(0, stem.size() - suffix.size());
            auto& sf = found[id];
            sf.subject_id = id;
            sf.channels.resize(suffixes.channels.size());
            const bool taken = role < 0 ? sf.labels.has_value() : !sf.channels[role].empty();
            if (taken) {
                fail("duplicate_file", "subject '" + id + "' has more than one '" + suffix + "' file");
            }
            if (role < 0) {
                sf.labels = p;
            } else {
                sf.channels[role] = p;
            }
            break;
        }
    }
    std::vector<SubjectFiles> out;
    for (auto& [id, sf] : found) {
        if (require_channels) {
            for (std::size_t i = 0; i < sf.channels.size(); ++i) {
                if (sf.channels[i].empty()) {
                    fail("missing_file", "subject '" + id + "' has no '" + suffixes.channels[i] + "' channel");
                }
            }
        }
        out.push_back(std::move(sf));
    }
    return out;
}

Sample load_sample(const SubjectFiles& files) {
    Sample s;
    s.subject_id = files.subject_id;
    for (const auto& p : files.channels) {
        s.channels.push_back(nifti::read_volume(p));
    }
    if (files.labels) {
        s.labels = nifti::read_label_map(*files.labels);
    }
    s.check_consistent();
    return s;
}

void write_sample(const Sample& s, const std::filesystem::path& dir, const ChannelSuffixes& suffixes) {
    if (s.channels.size() != suffixes.channels.size()) {
        fail("invalid_argument", "sample '" + s.subject_id + "' has " + std::to_string(s.channels.size()) +
                                     " channels, expected " + std::to_string(suffixes.channels.size()));
    }
    for (std::size_t i = 0; i < s.channels.size(); ++i) {
        nifti::write_volume(s.channels[i], dir / (s.subject_id + suffixes.channels[i] + ".nii.gz"));
    }
    if (s.labels) {
        nifti::write_label_map(*s.labels, dir / (s.subject_id + suffixes.labels + ".nii.gz"));
    }
}

unsigned default_threads() {
    if (const char* env = std::getenv("VOXAUG_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<unsigned>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
    if (t <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < t; ++k) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

namespace {

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            fail("io_error", "cannot write '" + path.string() + "'");
        }
        os << j.dump(2) << '\n';
        if (!os) {
            fail("io_error", "write failed for '" + path.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!std::filesystem::is_directory(dir)) {
        fail("io_error", "cannot create directory '" + dir.string() + "'");
    }
}

} // namespace

AugmentSummary run_augment(const PipelineConfig& config, const std::filesystem::path& in_dir,
                           const std::filesystem::path& out_dir, unsigned threads) {
    config.validate();
    const auto subjects = discover_subjects(in_dir, config.suffixes);
    if (subjects.empty()) {
        fail("no_subjects", "no subjects found in '" + in_dir.string() + "'");
    }
    ensure_dir(out_dir);
    const AugmentPipeline pipeline = config.pipeline();
    std::vector<char> untouched(subjects.size(), 0);
    parallel_for(subjects.size(), threads, [&](std::size_t i) {
        Sample s = load_sample(subjects[i]);
        if (config.normalize) {
            for (auto& c : s.channels) {
                c = normalize_minmax(c);
            }
        }
        s = extract_center_patch(s, config.patch_shape);
        auto result = apply_pipeline(s, pipeline, sample_stream(config.seed, s.subject_id));
        write_sample(result.sample, out_dir, config.suffixes);
        json prov = to_json(result.provenance);
        prov["patch_shape"] = config.patch_shape;
        prov["normalize"] = config.normalize;
        write_json_file(prov, out_dir / (s.subject_id + "_provenance.json"));
        untouched[i] = result.provenance.untouched();
    });
    AugmentSummary summary;
    summary.subjects = subjects.size();
    summary.untouched = static_cast<std::size_t>(std::count(untouched.begin(), untouched.end(), 1));
    return summary;
}

std::vector<std::string> run_phantom(std::uint64_t seed, std::size_t count, const Shape& shape,
                                     const std::filesystem::path& out_dir, unsigned threads,
                                     const ChannelSuffixes& suffixes) {
    if (count == 0) {
        fail("invalid_argument", "phantom count must be >= 1");
    }
    ensure_dir(out_dir);
    std::vector<std::string> ids(count);
    for (std::size_t i = 0; i < count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "phantom_%03zu", i);
        ids[i] = buf;
    }
    const RandomStream master(seed);
    parallel_for(count, threads, [&](std::size_t i) {
        const std::uint64_t subject_seed = master.spawn(static_cast<std::uint64_t>(i)).next_u64();
        write_sample(make_phantom(subject_seed, shape, ids[i]), out_dir, suffixes);
    });
    return ids;
}

MetricTable run_evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                         const std::string& model_id, unsigned threads, const ChannelSuffixes& suffixes) {
    if (model_id.empty()) {
        fail("invalid_argument", "model id must be non-empty");
    }
    auto truth_subjects = discover_subjects(truth_dir, suffixes, false);
    std::erase_if(truth_subjects, [](const SubjectFiles& s) { return !s.labels; });
    if (truth_subjects.empty()) {
        fail("no_subjects", "no '" + suffixes.labels + "' files found in '" + truth_dir.string() + "'");
    }
    if (!std::filesystem::is_directory(pred_dir)) {
        fail("io_error", "not a directory: '" + pred_dir.string() + "'");
    }
    std::vector<std::filesystem::path> pred_paths(truth_subjects.size());
    for (std::size_t i = 0; i < truth_subjects.size(); ++i) {
        const std::string& id = truth_subjects[i].subject_id;
        for (const auto& name : {id + suffixes.labels + ".nii.gz", id + suffixes.labels + ".nii", id + ".nii.gz",
                                 id + ".nii"}) {
            if (std::filesystem::is_regular_file(pred_dir / name)) {
                pred_paths[i] = pred_dir / name;
                break;
            }
        }
        if (pred_paths[i].empty()) {
            fail("missing_file", "no prediction for subject '" + id + "' in '" + pred_dir.string() + "'");
        }
    }
    std::vector<std::vector<MetricRecord>> rows(truth_subjects.size());
    parallel_for(truth_subjects.size(), threads, [&](std::size_t i) {
        const LabelMap truth = nifti::read_label_map(*truth_subjects[i].labels);
        const LabelMap pred = nifti::read_label_map(pred_paths[i]);
        for (const auto& s : evaluate_regions(pred, truth)) {
            rows[i].push_back({truth_subjects[i].subject_id, model_id, s.region, s.dice, s.hd95_mm});
        }
    });
    MetricTable table;
    for (auto& r : rows) {
        table.insert(table.end(), r.begin(), r.end());
    }
    std::sort(table.begin(), table.end(), record_less);
    return table;
}

json to_json(const TestResult& r) {
    return {{"observed_stat", r.observed_stat}, {"n_extreme", r.n_extreme}, {"n_flips", r.n_flips},
            {"p_raw", r.p_raw},                 {"p_adjusted", r.p_adjusted}, {"seed", r.seed}};
}

} // namespace voxaug
