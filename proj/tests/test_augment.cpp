#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "voxaug/augment.hpp"
#include "voxaug/error.hpp"

using namespace voxaug;

namespace {

Sample tiny_sample() {
    Sample s;
    s.subject_id = "tiny";
    s.channels.emplace_back(Shape{2, 2, 2}, Spacing{1, 1, 1}, 0.5);
    s.labels = LabelMap({2, 2, 2}, {1, 1, 1}, 1);
    return s;
}

Volume as_real(const LabelMap& l) {
    Volume v(l.shape(), l.spacing());
    for (std::size_t i = 0; i < l.size(); ++i) {
        v.data()[i] = l.data()[i];
    }
    return v;
}

void check_matches_labels(const Volume& v, const LabelMap& l) {
    REQUIRE(v.shape() == l.shape());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        bad += v.data()[i] != l.data()[i];
    }
    CHECK(bad == 0);
}

std::size_t foreground(const LabelMap& l) {
    return std::count_if(l.data().begin(), l.data().end(), [](auto v) { return v != 0; });
}

std::size_t nonzero(const Volume& v) {
    return std::count_if(v.data().begin(), v.data().end(), [](double x) { return x != 0.0; });
}

} // namespace

TEST_CASE("spec validation") {
    CHECK_NOTHROW(AugmentSpec::rotation(90).validate());
    CHECK_NOTHROW(AugmentSpec::rotation(180).validate());
    CHECK_THROWS_AS(AugmentSpec::rotation(0).validate(), Error);
    CHECK_THROWS_AS(AugmentSpec::rotation(181).validate(), Error);
    CHECK_NOTHROW(AugmentSpec::scale(0.5).validate());
    CHECK_THROWS_AS(AugmentSpec::scale(0.0).validate(), Error);
    CHECK_THROWS_AS(AugmentSpec::scale(0.6).validate(), Error);
    CHECK_NOTHROW(AugmentSpec::elastic(0.0).validate());
    CHECK_THROWS_AS(AugmentSpec::elastic(-1.0).validate(), Error);
    CHECK_THROWS_AS(AugmentSpec::elastic(2.0, 1).validate(), Error);
    CHECK_THROWS_AS(AugmentSpec::flip(1.5).validate(), Error);
    CHECK_THROWS_AS(AugmentSpec::brightness(-0.1).validate(), Error);
    for (auto k : {AugmentKind::flip, AugmentKind::rotation, AugmentKind::scale, AugmentKind::brightness,
                   AugmentKind::elastic}) {
        CHECK(augment_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(augment_kind_from_string("shear"), Error);
}

TEST_CASE("flip") {
    const Sample s = make_phantom(4, {24, 20, 16});
    for (int axis = 0; axis < 3; ++axis) {
        const Sample once = apply_flip(s, {axis});
        CHECK_FALSE(once == s);
        CHECK(apply_flip(once, {axis}) == s);
        CHECK(once.labels->histogram() == s.labels->histogram());
        const auto& in = s.channels[0];
        const auto& out = once.channels[0];
        const Shape n = in.shape();
        for (int z = 0; z < n[2]; z += 3) {
            for (int y = 0; y < n[1]; y += 3) {
                for (int x = 0; x < n[0]; x += 3) {
                    std::array<int, 3> p{x, y, z};
                    p[axis] = n[axis] - 1 - p[axis];
                    CHECK(out.at(x, y, z) == in.at(p[0], p[1], p[2]));
                }
            }
        }
    }

    RandomStream rng(17);
    std::array<int, 3> counts{};
    for (int i = 0; i < 3000; ++i) {
        ++counts[draw_flip(rng).axis];
    }
    for (int c : counts) {
        CHECK(std::abs(c / 3000.0 - 1.0 / 3.0) < 0.03);
    }
}

TEST_CASE("rotation") {
    const Sample s = make_phantom(5, {32, 32, 32});
    CHECK(apply_rotation(s, {{0, 0, 0}}) == s);
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 a{};
        a[axis] = 90.0;
        const Sample r = apply_rotation(s, {a});
        for (std::size_t c = 0; c < s.channels.size(); ++c) {
            CHECK(r.channels[c] == oracle::rotate90(s.channels[c], axis));
        }
        CHECK(*r.labels == oracle::rotate90(*s.labels, axis));
    }

    RandomStream rng(6);
    for (int i = 0; i < 5; ++i) {
        const Sample r = rotate(s, 60.0, rng);
        CHECK_NOTHROW(r.labels->check_alphabet(kRawLabels));
    }

    // Angles are signed and bounded by max_deg.
    RandomStream draws(7);
    std::array<int, 3> negative{};
    for (int i = 0; i < 2000; ++i) {
        const auto p = draw_rotation(30.0, draws);
        for (int a = 0; a < 3; ++a) {
            CHECK(std::abs(p.angles_deg[a]) <= 30.0);
            negative[a] += p.angles_deg[a] < 0;
        }
    }
    for (int n : negative) {
        CHECK(std::abs(n / 2000.0 - 0.5) < 0.05);
    }
}

TEST_CASE("rotation matrix composition order") {
    const Mat3 x = rotation_matrix({20, 0, 0});
    const Mat3 y = rotation_matrix({0, -35, 0});
    const Mat3 z = rotation_matrix({0, 0, 50});
    const Mat3 all = rotation_matrix({20, -35, 50});
    const Mat3 expect = multiply(multiply(x, y), z);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(all[i][j] == doctest::Approx(expect[i][j]).epsilon(1e-14));
        }
    }
    CHECK(determinant(all) == doctest::Approx(1.0));
    const double c = std::cos(20 * M_PI / 180), s = std::sin(20 * M_PI / 180);
    CHECK(x[1][1] == doctest::Approx(c));
    CHECK(x[2][2] == doctest::Approx(c));
    CHECK(std::abs(x[1][2]) == doctest::Approx(s));
    CHECK(x[0][0] == 1.0);
}

TEST_CASE("scale") {
    const Sample s = make_phantom(8, {32, 32, 32});
    CHECK(apply_scale(s, {{1, 1, 1}}) == s);
    const Sample bigger = apply_scale(s, {{1.2, 1.2, 1.2}});
    CHECK(foreground(*bigger.labels) > foreground(*s.labels));
    CHECK(nonzero(bigger.channels[0]) > nonzero(s.channels[0]));
    CHECK_NOTHROW(bigger.labels->check_alphabet(kRawLabels));

    RandomStream rng(99);
    std::vector<double> f;
    for (int i = 0; i < 10000; ++i) {
        const auto p = draw_scale(0.2, rng);
        for (double v : p.factors) {
            CHECK(v >= 0.8);
            CHECK(v <= 1.2);
        }
        f.push_back(p.factors[0]);
    }
    std::sort(f.begin(), f.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double cdf = (f[i] - 0.8) / 0.4;
        ks = std::max({ks, std::abs(cdf - double(i) / f.size()), std::abs(cdf - double(i + 1) / f.size())});
    }
    CHECK(ks < 0.02);
}

TEST_CASE("brightness") {
    Sample s;
    s.subject_id = "b";
    s.channels.emplace_back(Shape{4, 1, 1}, Spacing{1, 1, 1}, std::vector<double>{0.0, 0.25, 0.5, 1.0});
    s.channels.emplace_back(Shape{4, 1, 1}, Spacing{1, 1, 1}, std::vector<double>{0.5, 0.5, 0.1, 0.9});
    s.labels = LabelMap({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{0, 1, 2, 4});

    CHECK(apply_brightness(s, {1.0, 1.0}) == s);

    const Sample b = apply_brightness(s, {1.2, 0.8});
    CHECK(b.channels[0].data()[2] == doctest::Approx(0.6892190129982209).epsilon(1e-15));
    CHECK(b.channels[0].data()[2] == doctest::Approx(1.2 * std::pow(0.5, 0.8)).epsilon(1e-15));
    CHECK(b.channels[1].data()[0] == b.channels[0].data()[2]);
    CHECK(b.channels[0].data()[0] == 0.0);
    CHECK(*b.labels == *s.labels);

    RandomStream rng(31);
    for (int i = 0; i < 200; ++i) {
        const auto p = draw_brightness(rng);
        CHECK(p.gain >= 0.8);
        CHECK(p.gain <= 1.2);
        CHECK(p.gamma >= 0.8);
        CHECK(p.gamma <= 1.2);
        const Sample o = apply_brightness(s, p);
        CHECK(o.channels[0].data()[0] == 0.0);
        for (int k = 0; k + 1 < 4; ++k) {
            CHECK(o.channels[0].data()[k] <= o.channels[0].data()[k + 1]);
        }
    }

    Sample neg = s;
    neg.channels[1].data()[3] = -0.01;
    CHECK_THROWS_WITH_AS(apply_brightness(neg, {1.0, 1.0}),
                         "brightness requires nonnegative intensities - normalize first", Error);
}

TEST_CASE("elastic") {
    const Sample s = make_phantom(12, {32, 32, 32});
    RandomStream zero_rng(1);
    const auto zp = draw_elastic(0.0, 4, zero_rng);
    CHECK(apply_elastic(s, zp) == s);
    CHECK(zp.grid.shape == Shape{4, 4, 4});
    CHECK(zp.grid.values.size() == 3 * 64);

    // Mild deformation bound over 20 seeds, at the default 128^3 patch shape.
    Sample patch = make_phantom(12, {128, 128, 128});
    patch.channels.resize(1);
    const auto h0 = patch.labels->histogram();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed);
        const Sample e = elastic(patch, 2.0, 4, rng);
        CHECK_NOTHROW(e.labels->check_alphabet(kRawLabels));
        const auto h = e.labels->histogram();
        for (int label : {1, 2, 4}) {
            REQUIRE(h0[label] > 0);
            const double rel = std::abs(double(h[label]) - double(h0[label])) / double(h0[label]);
            worst = std::max(worst, rel);
        }
    }
    MESSAGE("worst per-label relative count change at sigma 2: " << worst);
    CHECK(worst < 0.15);

    RandomStream rng(2024);
    std::vector<double> values;
    while (values.size() < 10000) {
        const auto p = draw_elastic(5.0, 4, rng);
        values.insert(values.end(), p.grid.values.begin(), p.grid.values.end());
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= values.size();
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(var / (values.size() - 1));
    CHECK(std::abs(sd - 5.0) / 5.0 < 0.03);
}

TEST_CASE("geometry operators keep channels and labels co-registered") {
    Sample s = make_phantom(3, {20, 20, 20});
    const Volume cast = as_real(*s.labels);
    const Sampling nearest{InterpMode::nearest, 0.0};

    for (int axis = 0; axis < 3; ++axis) {
        Sample t = s;
        t.channels = {cast};
        const Sample o = apply_flip(t, {axis});
        check_matches_labels(o.channels[0], *o.labels);
    }

    const RotationParams rp{{12.0, -40.0, 7.5}};
    const Sample r = apply_rotation(s, rp);
    check_matches_labels(resample_affine(cast, AffineTransform{rotation_matrix(rp.angles_deg)}, nearest), *r.labels);

    const ScaleParams sp{{0.85, 1.1, 1.17}};
    Mat3 m{};
    for (int a = 0; a < 3; ++a) {
        m[a][a] = sp.factors[a];
    }
    const Sample sc = apply_scale(s, sp);
    check_matches_labels(resample_affine(cast, AffineTransform{m}, nearest), *sc.labels);

    RandomStream rng(5);
    const auto ep = draw_elastic(5.0, 4, rng);
    const Sample e = apply_elastic(s, ep);
    check_matches_labels(warp(cast, bspline_upsample(ep.grid, s.shape()), nearest), *e.labels);
}

TEST_CASE("pipeline basics") {
    const Sample s = make_phantom(2, {16, 16, 16}, "case");
    const RandomStream rng = sample_stream(7, "case");

    const auto empty = apply_pipeline(s, {}, rng);
    CHECK(empty.sample == s);
    CHECK(empty.provenance.entries.empty());
    CHECK(empty.provenance.untouched());

    AugmentPipeline p;
    p.specs = {AugmentSpec::flip(), AugmentSpec::rotation(30), AugmentSpec::scale(0.1), AugmentSpec::brightness(),
               AugmentSpec::elastic(2.0)};
    const auto a = apply_pipeline(s, p, rng);
    const auto b = apply_pipeline(s, p, sample_stream(7, "case"));
    CHECK(a.sample == b.sample);
    REQUIRE(a.provenance.entries.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& ea = a.provenance.entries[i];
        const auto& eb = b.provenance.entries[i];
        CHECK(ea.index == int(i));
        CHECK(ea.spec == p.specs[i]);
        CHECK(ea.fired == eb.fired);
        CHECK(ea.params.has_value() == ea.fired);
        if (ea.fired) {
            CHECK(*ea.params == *eb.params);
        }
    }
    CHECK(replay_pipeline(s, a.provenance) == a.sample);

    // Different subjects get different streams.
    int differ = 0;
    for (int i = 0; i < 10; ++i) {
        const auto x = apply_pipeline(s, p, sample_stream(7, "case" + std::to_string(i)));
        differ += !(x.sample == a.sample);
    }
    CHECK(differ > 0);

    // Appending a spec leaves the draws of earlier specs unchanged.
    AugmentPipeline longer = p;
    longer.specs.push_back(AugmentSpec::flip(1.0));
    const auto l = apply_pipeline(s, longer, rng);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(l.provenance.entries[i].fired == a.provenance.entries[i].fired);
    }
    CHECK(l.provenance.entries[5].fired);

    AugmentPipeline always = p;
    for (auto& sp : always.specs) {
        sp.probability = 1.0;
    }
    CHECK_FALSE(apply_pipeline(s, always, rng).provenance.untouched());
    AugmentPipeline never = p;
    for (auto& sp : never.specs) {
        sp.probability = 0.0;
    }
    const auto n = apply_pipeline(s, never, rng);
    CHECK(n.provenance.untouched());
    CHECK(n.sample == s);
}

TEST_CASE("pipeline errors") {
    const Sample s = make_phantom(2, {16, 16, 16}, "case");
    AugmentPipeline p;
    p.patch_shape = Shape{16, 16, 17};
    CHECK_THROWS_AS(apply_pipeline(s, p, RandomStream(1)), Error);
    p.patch_shape = Shape{16, 16, 16};
    CHECK_NOTHROW(apply_pipeline(s, p, RandomStream(1)));
    p.specs = {AugmentSpec::flip(), AugmentSpec::rotation(200)};
    CHECK_THROWS_AS(apply_pipeline(s, p, RandomStream(1)), Error);

    Sample neg = s;
    neg.channels[0].data()[0] = -1.0;
    AugmentPipeline br;
    br.specs = {AugmentSpec::brightness(1.0)};
    CHECK_THROWS_AS(apply_pipeline(neg, br, RandomStream(1)), Error);
}

TEST_CASE("untouched fraction is 0.5^k") {
    const Sample s = tiny_sample();
    const std::vector<AugmentSpec> all{AugmentSpec::flip(), AugmentSpec::rotation(15), AugmentSpec::scale(0.1),
                                       AugmentSpec::brightness(), AugmentSpec::elastic(2.0)};
    struct Case {
        std::size_t k;
        double tol;
    };
    for (const Case c : {Case{1, 0.015}, Case{5, 0.005}}) {
        AugmentPipeline p;
        p.specs.assign(all.begin(), all.begin() + c.k);
        int untouched = 0;
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            untouched += apply_pipeline(s, p, sample_stream(2020, "patch_" + std::to_string(i))).provenance.untouched();
        }
        const double frac = double(untouched) / trials;
        MESSAGE("k=" << c.k << " untouched fraction " << frac);
        CHECK(std::abs(frac - std::pow(0.5, double(c.k))) <= c.tol);
    }
}
