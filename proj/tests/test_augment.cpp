#include <doctest.h>

#include "segadapt/augment.hpp"

using namespace sga;

namespace {

Tensor random_image(int H, int W, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> d(3 * H * W);
    for (auto& v : d) v = static_cast<float>(rng.uniform());
    return Tensor::leaf({3, H, W}, d);
}

}  // namespace

TEST_CASE("strength zero jitter is the exact identity") {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        auto spec = sample_photometric(0.0, rng, {PhotoKind::jitter});
        CHECK(spec.brightness == 1.0f);
        CHECK(spec.contrast == 1.0f);
        CHECK(spec.saturation == 1.0f);
        CHECK(spec.hue == 0.0f);
        auto img = random_image(8, 8, 100 + i);
        auto out = apply_photometric(spec, img);
        CHECK(out.value() == img.value());
    }
}

TEST_CASE("strength outside [0,1] is a config error") {
    Rng rng(2);
    CHECK_THROWS_AS(sample_photometric(-0.1, rng), ConfigError);
    CHECK_THROWS_AS(sample_photometric(1.5, rng), ConfigError);
}

TEST_CASE("grayscale of an already gray image is unchanged") {
    Rng rng(3);
    std::vector<float> d(3 * 16);
    for (int i = 0; i < 16; ++i) {
        float v = static_cast<float>(rng.uniform());
        d[i] = d[16 + i] = d[32 + i] = v;
    }
    auto img = Tensor::leaf({3, 4, 4}, d);
    PhotometricSpec spec;
    spec.kind = PhotoKind::grayscale;
    auto out = apply_photometric(spec, img);
    for (int i = 0; i < 48; ++i) CHECK(out.value()[i] == doctest::Approx(d[i]).epsilon(1e-6));

    SUBCASE("hue shift also leaves gray pixels untouched") {
        PhotometricSpec h;
        h.kind = PhotoKind::jitter;
        h.hue = 0.3f;
        auto out2 = apply_photometric(h, img);
        CHECK(out2.value() == img.value());
    }
}

TEST_CASE("jitter factor range at strength 0.75 spans [0.25, 1.75]") {
    Rng rng(4);
    float lo = 10, hi = -10;
    for (int i = 0; i < 10000; ++i) {
        auto spec = sample_photometric(0.75, rng, {PhotoKind::jitter});
        lo = std::min(lo, spec.brightness);
        hi = std::max(hi, spec.brightness);
        CHECK(spec.brightness >= 0.25f);
        CHECK(spec.brightness <= 1.75f);
        CHECK(std::abs(spec.hue) <= 0.5f);
    }
    CHECK(lo < 0.26f);
    CHECK(hi > 1.74f);
}

TEST_CASE("brightness factor zero blanks the image") {
    auto img = random_image(6, 6, 5);
    PhotometricSpec spec;
    spec.kind = PhotoKind::jitter;
    spec.brightness = 0.0f;
    auto out = apply_photometric(spec, img);
    for (float v : out.value()) CHECK(v == 0.0f);
}

TEST_CASE("blur kernel mass sums to one on an impulse") {
    std::vector<float> d(3 * 11 * 11, 0.0f);
    for (int c = 0; c < 3; ++c) d[c * 121 + 5 * 11 + 5] = 1.0f;
    auto img = Tensor::leaf({3, 11, 11}, d);
    PhotometricSpec spec;
    spec.kind = PhotoKind::blur;
    spec.sigma = 0.1f;
    auto out = apply_photometric(spec, img);
    for (int c = 0; c < 3; ++c) {
        double mass = 0;
        for (int i = 0; i < 121; ++i) mass += out.value()[c * 121 + i];
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("photometric transforms preserve shape and range") {
    Rng rng(6);
    auto img = random_image(16, 16, 7);
    for (int i = 0; i < 50; ++i) {
        auto spec = sample_photometric(0.75, rng);
        auto out = apply_photometric(spec, img);
        CHECK(out.shape() == img.shape());
        for (float v : out.value()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("apply_photometric rejects non-rgb input") {
    auto bad = Tensor::zeros({1, 4, 4});
    CHECK_THROWS_AS(apply_photometric(PhotometricSpec::identity(), bad), DimensionError);
}

TEST_CASE("full-ratio crop is the identity transform") {
    AugmentConfig cfg;
    cfg.crop_ratio = 1.0;
    cfg.geom_kinds = {GeomKind::crop};
    Rng rng(8);
    auto g = sample_geometric(cfg, 16, 16, rng);
    CHECK(g.top == 0);
    CHECK(g.left == 0);
    CHECK(g.height == 16);
    CHECK(g.width == 16);
    auto img = random_image(16, 16, 9);
    auto out = apply_geometric(g, img);
    CHECK(out.value() == img.value());
}

TEST_CASE("rotation group property: four quarter turns restore the input") {
    AugmentConfig cfg;
    cfg.geom_kinds = {GeomKind::rotate90};
    Rng rng(10);
    auto img = random_image(8, 8, 11);
    for (int i = 0; i < 10; ++i) {
        auto g = sample_geometric(cfg, 8, 8, rng);
        CHECK(g.turns >= 1);
        CHECK(g.turns <= 3);
        Tensor t = img;
        int reps = 4 / std::gcd(4, g.turns);
        for (int r = 0; r < reps; ++r) t = apply_geometric(g, t);
        CHECK(t.value() == img.value());
    }
}

TEST_CASE("shuffle permutation composed with its inverse is identity") {
    AugmentConfig cfg;
    cfg.patch_size = 4;
    cfg.geom_kinds = {GeomKind::shuffle};
    Rng rng(12);
    auto g = sample_geometric(cfg, 16, 16, rng);
    GeometricSpec ginv = g;
    for (size_t i = 0; i < g.perm.size(); ++i) ginv.perm[g.perm[i]] = static_cast<int>(i);
    auto img = random_image(16, 16, 13);
    auto out = apply_geometric(ginv, apply_geometric(g, img));
    CHECK(out.value() == img.value());
}

TEST_CASE("indivisible patch grid is a config error") {
    AugmentConfig cfg;
    cfg.patch_size = 5;
    cfg.geom_kinds = {GeomKind::shuffle};
    Rng rng(14);
    CHECK_THROWS_AS(sample_geometric(cfg, 16, 16, rng), ConfigError);
}

TEST_CASE("geometric action commutes with channel slicing") {
    Rng rng(15);
    AugmentConfig cfg;
    cfg.patch_size = 4;
    auto img = random_image(16, 16, 16);
    for (int i = 0; i < 12; ++i) {
        auto g = sample_geometric(cfg, 16, 16, rng);
        auto whole = apply_geometric(g, img);
        for (int c = 0; c < 3; ++c) {
            auto chan = slice(img, {c, 0, 0}, {1, 16, 16});
            auto part = apply_geometric(g, chan);
            auto ref = slice(whole, {c, 0, 0}, {1, whole.dim(-2), whole.dim(-1)});
            CHECK(part.value() == ref.value());
        }
    }
}

TEST_CASE("re-application of a spec is deterministic") {
    Rng rng(17);
    AugmentConfig cfg;
    cfg.patch_size = 4;
    auto img = random_image(16, 16, 18);
    auto g = sample_geometric(cfg, 16, 16, rng);
    auto a = apply_geometric(g, img);
    auto b = apply_geometric(g, img);
    CHECK(a.value() == b.value());

    auto p = sample_photometric(0.75, rng);
    auto pa = apply_photometric(p, img);
    auto pb = apply_photometric(p, img);
    CHECK(pa.value() == pb.value());
}

TEST_CASE("sampling with a fixed stream is replay-deterministic") {
    AugmentConfig cfg;
    auto draw = [&](uint64_t seed) {
        Rng rng(seed);
        std::vector<float> vals;
        for (int i = 0; i < 20; ++i) {
            auto p = sample_photometric(0.75, rng);
            auto g = sample_geometric(cfg, 64, 64, rng);
            vals.push_back(p.brightness);
            vals.push_back(p.hue);
            vals.push_back(static_cast<float>(g.top));
            vals.push_back(static_cast<float>(g.turns));
        }
        return vals;
    };
    CHECK(draw(42) == draw(42));
    CHECK(draw(42) != draw(43));
}

TEST_CASE("rotate 180 of a 2x2 block matches the hand result") {
    auto x = Tensor::leaf({1, 2, 2}, {1, 2, 3, 4});
    GeometricSpec g;
    g.kind = GeomKind::rotate90;
    g.turns = 2;
    auto out = apply_geometric(g, x);
    CHECK(out.value() == std::vector<float>({4, 3, 2, 1}));
}

TEST_CASE("half crop at origin of a ramp picks the top-left block") {
    std::vector<float> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[i] = static_cast<float>(i);
    auto x = Tensor::leaf({1, 4, 4}, ramp);
    GeometricSpec g;
    g.kind = GeomKind::crop;
    g.top = 0;
    g.left = 0;
    g.height = 2;
    g.width = 2;
    auto out = apply_geometric(g, x);
    CHECK(out.value() == std::vector<float>({0, 1, 4, 5}));
}
