#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "voxaug/batch.hpp"
#include "voxaug/error.hpp"
#include "voxaug/nifti.hpp"
#include "voxaug/tables.hpp"

using namespace voxaug;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("voxaug_io_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& s) const { return path / s; }
};

const TempDir& tmp() {
    static TempDir d;
    return d;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Minimal hand-rolled NIfTI-1 writer, independent of the library's.
template <typename T>
void put(std::vector<unsigned char>& b, std::size_t off, T v, bool big) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (big) {
        std::reverse(raw, raw + sizeof(T));
    }
    std::memcpy(b.data() + off, raw, sizeof(T));
}

std::vector<unsigned char> craft(std::array<short, 8> dim, std::array<float, 3> pixdim, short datatype, short bitpix,
                                 const std::vector<unsigned char>& payload, bool big) {
    std::vector<unsigned char> b(352, 0);
    put<int>(b, 0, 348, big);
    for (int i = 0; i < 8; ++i) {
        put<short>(b, 40 + 2 * i, dim[i], big);
    }
    put<short>(b, 70, datatype, big);
    put<short>(b, 72, bitpix, big);
    put<float>(b, 76, 1.0f, big);
    for (int a = 0; a < 3; ++a) {
        put<float>(b, 80 + 4 * a, pixdim[a], big);
    }
    put<float>(b, 108, 352.0f, big);
    std::memcpy(b.data() + 344, "n+1\0", 4);
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

Volume ramp(const Shape& s, const Spacing& sp) {
    Volume v(s, sp);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.data()[i] = static_cast<float>(0.001 * static_cast<double>(i) - 0.5);
    }
    return v;
}

} // namespace

TEST_CASE("NIfTI round trips") {
    for (const char* name : {"a.nii", "a.nii.gz"}) {
        const Volume v = ramp({7, 5, 3}, {1.0, 1.0, 2.5});
        nifti::write_volume(v, tmp() / name);
        const Volume r = nifti::read_volume(tmp() / name);
        CHECK(r == v);
        CHECK(r.spacing() == Spacing{1.0, 1.0, 2.5});
        const auto h = nifti::read_header(tmp() / name);
        CHECK(h.datatype == 16);
        CHECK(h.shape == Shape{7, 5, 3});
    }
    const auto gz = slurp(tmp() / "a.nii.gz");
    REQUIRE(gz.size() > 10);
    CHECK(gz[0] == 0x1f);
    CHECK(gz[1] == 0x8b);
    const auto plain = slurp(tmp() / "a.nii");
    CHECK(plain.size() == 352 + 4 * 7 * 5 * 3);
    CHECK(std::memcmp(plain.data() + 344, "n+1\0", 4) == 0);

    LabelMap l({6, 4, 5}, {0.9, 1.1, 3.0});
    for (std::size_t i = 0; i < l.size(); ++i) {
        l.data()[i] = kRawLabels[i % 4];
    }
    nifti::write_label_map(l, tmp() / "seg.nii.gz");
    const LabelMap lr = nifti::read_label_map(tmp() / "seg.nii.gz");
    CHECK(std::equal(lr.data().begin(), lr.data().end(), l.data().begin(), l.data().end()));
    CHECK(lr.shape() == l.shape());
    // pixdim is float32 on disk, so spacing comes back float-rounded.
    CHECK(lr.spacing() == Spacing{double(0.9f), double(1.1f), 3.0});
    CHECK(nifti::read_header(tmp() / "seg.nii.gz").datatype == 2);

    Volume brats({240, 240, 155}, {1, 1, 1}, 0.25);
    nifti::write_volume(brats, tmp() / "brats.nii.gz");
    const Volume br = nifti::read_volume(tmp() / "brats.nii.gz");
    CHECK(br.shape() == Shape{240, 240, 155});
    CHECK(br.spacing() == Spacing{1.0, 1.0, 1.0});
    CHECK(br == brats);

    // Writing twice gives byte-identical compressed files.
    nifti::write_volume(brats, tmp() / "brats2.nii.gz");
    CHECK(slurp(tmp() / "brats.nii.gz") == slurp(tmp() / "brats2.nii.gz"));
}

TEST_CASE("NIfTI reads hand-crafted files") {
    for (bool big : {false, true}) {
        std::vector<unsigned char> payload;
        const std::vector<short> values{-3, 0, 7, 1000, -32768, 32767};
        for (short v : values) {
            std::vector<unsigned char> tmpb(2);
            put<short>(tmpb, 0, v, big);
            payload.insert(payload.end(), tmpb.begin(), tmpb.end());
        }
        const auto file = craft({3, 3, 2, 1, 1, 1, 1, 1}, {0.5f, 2.0f, 4.0f}, 4, 16, payload, big);
        const fs::path p = tmp() / (big ? "i16_be.nii" : "i16_le.nii");
        spit(p, file);
        const Volume v = nifti::read_volume(p);
        CHECK(v.shape() == Shape{3, 2, 1});
        CHECK(v.spacing() == Spacing{0.5, 2.0, 4.0});
        for (std::size_t i = 0; i < values.size(); ++i) {
            CHECK(v.data()[i] == values[i]);
        }
        CHECK(nifti::read_header(p).swapped == big);
    }

    // Trailing unit dimensions are fine.
    std::vector<unsigned char> bytes{0, 1, 2, 4};
    spit(tmp() / "u8.nii", craft({4, 2, 2, 1, 1, 1, 1, 1}, {1, 1, 1}, 2, 8, bytes, false));
    const LabelMap l = nifti::read_label_map(tmp() / "u8.nii");
    CHECK(std::vector<std::uint8_t>(l.data().begin(), l.data().end()) == std::vector<std::uint8_t>{0, 1, 2, 4});

    // Float labels are refused.
    std::vector<unsigned char> f(16, 0);
    spit(tmp() / "f32.nii", craft({3, 2, 2, 1, 1, 1, 1, 1}, {1, 1, 1}, 16, 32, f, false));
    CHECK_THROWS_AS(nifti::read_label_map(tmp() / "f32.nii"), Error);
    CHECK_NOTHROW(nifti::read_volume(tmp() / "f32.nii"));
}

TEST_CASE("NIfTI errors") {
    const Volume v = ramp({4, 4, 4}, {1, 1, 1});
    nifti::write_volume(v, tmp() / "ok.nii");
    auto bytes = slurp(tmp() / "ok.nii");

    auto truncated = bytes;
    truncated.resize(bytes.size() - 10);
    spit(tmp() / "trunc.nii", truncated);
    CHECK_THROWS_AS(nifti::read_volume(tmp() / "trunc.nii"), Error);
    truncated.resize(100);
    spit(tmp() / "trunc_header.nii", truncated);
    CHECK_THROWS_AS(nifti::read_volume(tmp() / "trunc_header.nii"), Error);

    auto magic = bytes;
    magic[345] = 'X';
    spit(tmp() / "magic.nii", magic);
    try {
        nifti::read_volume(tmp() / "magic.nii");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("offset 344") != std::string::npos);
    }

    std::vector<unsigned char> payload(4 * 8 * 2, 0);
    spit(tmp() / "4d.nii", craft({4, 2, 2, 2, 2, 1, 1, 1}, {1, 1, 1}, 16, 32, payload, false));
    try {
        nifti::read_volume(tmp() / "4d.nii");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("expected 3-D volume") != std::string::npos);
    }

    std::vector<unsigned char> c64(16, 0);
    spit(tmp() / "complex.nii", craft({3, 1, 1, 1, 1, 1, 1, 1}, {1, 1, 1}, 32, 64, c64, false));
    CHECK_THROWS_AS(nifti::read_volume(tmp() / "complex.nii"), Error);

    CHECK_THROWS_AS(nifti::read_volume(tmp() / "missing.nii"), Error);
    CHECK_THROWS_AS(nifti::write_volume(v, tmp() / "no_such_dir" / "x.nii"), Error);
    CHECK_THROWS_AS(nifti::write_volume(Volume({40000, 1, 1}, {1, 1, 1}), tmp() / "wide.nii"), Error);

    LabelMap big({2, 1, 1}, {1, 1, 1});
    std::vector<unsigned char> neg(4);
    put<short>(neg, 0, -1, false);
    spit(tmp() / "neg_label.nii", craft({3, 2, 1, 1, 1, 1, 1, 1}, {1, 1, 1}, 4, 16, neg, false));
    CHECK_THROWS_AS(nifti::read_label_map(tmp() / "neg_label.nii"), Error);
}

TEST_CASE("metric CSV") {
    MetricTable t{
        {"s2", "B", Region::WT, 0.5, 3.0},
        {"s1", "B", Region::ET, 0.0, 373.0},
        {"s1", "A", Region::TC, 0.1 + 0.2, 1.0 / 3.0},
        {"s1", "A", Region::ET, 1.0, 0.0},
    };
    std::ostringstream os;
    write_metrics_csv(os, t);
    const std::string text = os.str();
    CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(text.find("s1,A,ET,1,0\n") != std::string::npos);
    CHECK(text.find("s1,B,ET,0,373\n") != std::string::npos);
    std::istringstream is(text);
    MetricTable back = read_metrics_csv(is);
    std::sort(t.begin(), t.end(), record_less);
    CHECK(back == t);
    CHECK(back[1].dice == 0.1 + 0.2);

    write_metrics_csv(tmp() / "m.csv", t);
    CHECK(read_metrics_csv(tmp() / "m.csv") == t);

    CHECK(format_double(0.1) == "0.1");
    CHECK(parse_double(format_double(1.0 / 3.0), "x") == 1.0 / 3.0);
    CHECK_THROWS_AS(parse_double("1.5x", "x"), Error);

    for (const MetricRecord& bad : {MetricRecord{"s", "m", Region::ET, 1.5, 0.0},
                                    MetricRecord{"s", "m", Region::ET, 0.5, -1.0},
                                    MetricRecord{"s", "m", Region::ET, NAN, 0.0}}) {
        CHECK_THROWS_AS(validate_record(bad), Error);
        std::ostringstream sink;
        CHECK_THROWS_AS(write_metrics_csv(sink, {bad}), Error);
    }
    for (const std::string& doc : {std::string("subject_id,model_id,region,dice\ns,m,ET,1\n"),
                                   std::string(kMetricsHeader) + "\ns,m,XX,1,0\n",
                                   std::string(kMetricsHeader) + "\ns,m,ET,1\n",
                                   std::string(kMetricsHeader) + "\ns,m,ET,2,0\n",
                                   std::string(kMetricsHeader) + "\ns,m,ET,abc,0\n"}) {
        std::istringstream in(doc);
        CHECK_THROWS_AS(read_metrics_csv(in), Error);
    }
}

TEST_CASE("ranks CSV") {
    const RankTable r{{"A", 1.25, 12}, {"B", 1.75, 12}};
    std::ostringstream os;
    write_ranks_csv(os, r);
    CHECK(os.str() == std::string(kRanksHeader) + "\n1,A,1.25,12\n2,B,1.75,12\n");
}

TEST_CASE("pipeline config") {
    const json j = json::parse(R"({
        "seed": 42,
        "patch_shape": [16, 16, 16],
        "normalize": false,
        "pipeline": [
            {"kind": "flip"},
            {"kind": "rotation", "max_deg": 30, "probability": 0.25},
            {"kind": "scale", "max_frac": 0.2},
            {"kind": "brightness"},
            {"kind": "elastic", "sigma": 5, "grid_size": 5}
        ],
        "suffixes": {"channels": ["_a", "_b"], "labels": "_lab"}
    })");
    const PipelineConfig c = parse_config(j);
    CHECK(c.seed == 42);
    CHECK(c.patch_shape == Shape{16, 16, 16});
    CHECK_FALSE(c.normalize);
    REQUIRE(c.specs.size() == 5);
    CHECK(c.specs[0].probability == 0.5);
    CHECK(c.specs[1].max_deg == 30);
    CHECK(c.specs[1].probability == 0.25);
    CHECK(c.specs[2].max_frac == 0.2);
    CHECK(c.specs[4].sigma == 5);
    CHECK(c.specs[4].grid_size == 5);
    CHECK(c.suffixes.channels == std::vector<std::string>{"_a", "_b"});
    CHECK(c.suffixes.labels == "_lab");
    CHECK(parse_config(to_json(c)).specs == c.specs);

    const PipelineConfig d = parse_config(json::object());
    CHECK(d.patch_shape == Shape{128, 128, 128});
    CHECK(d.normalize);
    CHECK(d.specs.empty());

    for (const char* bad : {R"({"seeds": 1})", R"({"patch_shape": [1, 2]})", R"({"patch_shape": ["a", 2, 3]})",
                            R"({"pipeline": [{"kind": "shear"}]})", R"({"pipeline": [{"kind": "rotation", "max_deg": 0}]})",
                            R"({"pipeline": [{"kind": "scale", "max_frac": 0.7}]})",
                            R"({"pipeline": [{"kind": "flip", "probability": 2}]})",
                            R"({"pipeline": [{"kind": "flip", "sigma": 2}]})",
                            R"({"pipeline": [{"kind": "elastic", "sigma": -1}]})", R"({"seed": "x"})",
                            R"({"pipeline": {"kind": "flip"}})"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_config(json::parse(bad)), Error);
    }

    std::ofstream(tmp() / "broken.json") << "{ not json";
    CHECK_THROWS_AS(load_config(tmp() / "broken.json"), Error);
    CHECK_THROWS_AS(load_config(tmp() / "absent.json"), Error);
}

TEST_CASE("provenance JSON replays bit-identically") {
    const Sample s = make_phantom(9, {20, 20, 20}, "subj");
    AugmentPipeline p;
    p.specs = {AugmentSpec::flip(1), AugmentSpec::rotation(30, 1), AugmentSpec::scale(0.2, 1),
               AugmentSpec::brightness(1), AugmentSpec::elastic(5, 4, 1), AugmentSpec::flip(0)};
    const auto res = apply_pipeline(s, p, sample_stream(123, "subj"));
    const std::string text = to_json(res.provenance).dump(2);
    const ProvenanceRecord back = provenance_from_json(json::parse(text));
    CHECK(back.subject_id == "subj");
    CHECK(back.seed == res.provenance.seed);
    CHECK(back.stream_id == res.provenance.stream_id);
    REQUIRE(back.entries.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(back.entries[i].fired == res.provenance.entries[i].fired);
        CHECK(back.entries[i].spec == res.provenance.entries[i].spec);
        CHECK(back.entries[i].params == res.provenance.entries[i].params);
    }
    CHECK(replay_pipeline(s, back) == res.sample);

    const json j = json::parse(text);
    CHECK(j["untouched"] == false);
    CHECK(j["entries"][5]["fired"] == false);
    CHECK(j["entries"][4]["drawn"]["control_hash"] ==
          control_grid_hash(std::get<ElasticParams>(*res.provenance.entries[4].params).grid));

    json tampered = j;
    tampered["entries"][4]["drawn"]["control_values"][0] = 0.123;
    CHECK_THROWS_AS(provenance_from_json(tampered), Error);
    json missing = j;
    missing["entries"][0].erase("drawn");
    CHECK_THROWS_AS(provenance_from_json(missing), Error);
}

TEST_CASE("subject discovery and sample files") {
    const fs::path dir = tmp() / "subjects";
    fs::create_directories(dir);
    const ChannelSuffixes suf;
    Sample a = make_phantom(1, {16, 16, 16}, "BraTS20_001");
    write_sample(a, dir, suf);
    CHECK(fs::exists(dir / "BraTS20_001_t1.nii.gz"));
    CHECK(fs::exists(dir / "BraTS20_001_t1ce.nii.gz"));
    CHECK(fs::exists(dir / "BraTS20_001_seg.nii.gz"));
    Sample b = make_phantom(2, {16, 16, 16}, "BraTS20_002");
    b.labels.reset();
    write_sample(b, dir, suf);
    std::ofstream(dir / "notes.txt") << "ignore me";

    const auto found = discover_subjects(dir, suf);
    REQUIRE(found.size() == 2);
    CHECK(found[0].subject_id == "BraTS20_001");
    CHECK(found[0].channels[0].filename() == "BraTS20_001_t1.nii.gz");
    CHECK(found[0].channels[1].filename() == "BraTS20_001_t1ce.nii.gz");
    CHECK(found[0].labels.has_value());
    CHECK_FALSE(found[1].labels.has_value());

    const Sample la = load_sample(found[0]);
    CHECK(*la.labels == *a.labels);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < la.channels[c].size(); ++i) {
            REQUIRE(la.channels[c].data()[i] == static_cast<float>(a.channels[c].data()[i]));
        }
    }

    fs::remove(dir / "BraTS20_002_flair.nii.gz");
    CHECK_THROWS_AS(discover_subjects(dir, suf), Error);
    CHECK(discover_subjects(dir, suf, false).size() == 2);

    nifti::write_volume(a.channels[0], dir / "BraTS20_001_t1.nii");
    CHECK_THROWS_AS(discover_subjects(dir, suf, false), Error);
}

TEST_CASE("parallel_for") {
    for (unsigned threads : {1u, 2u, 4u}) {
        std::vector<int> hits(100, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
        CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

        std::atomic<int> ran{0};
        try {
            parallel_for(50, threads, [&](std::size_t i) {
                ++ran;
                if (i == 7 || i == 31) {
                    throw Error("boom", "failed at " + std::to_string(i));
                }
            });
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()) == "failed at 7");
        }
        CHECK(ran.load() == 50);
    }
    setenv("VOXAUG_THREADS", "3", 1);
    CHECK(default_threads() == 3);
    unsetenv("VOXAUG_THREADS");
    CHECK(default_threads() >= 1);
}
