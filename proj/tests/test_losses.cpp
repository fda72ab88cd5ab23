#include <doctest.h>

#include <cmath>

#include "segadapt/gradcheck.hpp"
#include "segadapt/losses.hpp"

using namespace sga;

namespace {

template <typename S>
TensorT<S> rnd(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0, bool rq = false) {
    Rng rng(seed);
    std::vector<S> d(shape_numel(shape));
    for (auto& x : d) x = static_cast<S>(rng.uniform(lo, hi));
    return TensorT<S>::leaf(std::move(shape), std::move(d), rq);
}

}  // namespace

TEST_CASE("cross entropy frozen values") {
    SUBCASE("one-hot-correct probabilities give zero") {
        auto p = Tensor::leaf({2, 1, 1}, {1.0f, 0.0f});
        CHECK(cross_entropy_probs(p, {0}).item() == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("uniform over five classes gives ln 5") {
        auto p = Tensor::full({5, 2, 2}, 0.2f);
        std::vector<uint8_t> y(4, 3);
        CHECK(cross_entropy_probs(p, y).item() == doctest::Approx(std::log(5.0)).epsilon(1e-5));
    }
    SUBCASE("p=[0.9,0.1], y=0 gives 0.10536") {
        auto p = Tensor::leaf({2, 1, 1}, {0.9f, 0.1f});
        CHECK(cross_entropy_probs(p, {0}).item() == doctest::Approx(0.10536).epsilon(1e-4));
    }
    SUBCASE("label out of range raises") {
        auto p = Tensor::full({2, 1, 1}, 0.5f);
        CHECK_THROWS_AS(cross_entropy_probs(p, {5}), DimensionError);
        CHECK_THROWS_AS(cross_entropy_logits(p, {5}), DimensionError);
    }
    SUBCASE("logits route equals probs route") {
        auto o = rnd<float>({4, 3, 3}, 1, -2, 2);
        std::vector<uint8_t> y(9);
        for (int i = 0; i < 9; ++i) y[i] = static_cast<uint8_t>(i % 4);
        float a = cross_entropy_logits(o, y).item();
        float b = cross_entropy_probs(softmax(o, 0), y).item();
        CHECK(a == doctest::Approx(b).epsilon(1e-5));
    }
    SUBCASE("gradcheck") {
        auto o = rnd<double>({3, 2, 2}, 2, -1, 1, true);
        std::vector<uint8_t> y = {0, 2, 1, 0};
        CHECK(gradcheck([&] { return cross_entropy_logits(o, y); }, {o}) < 1e-4);
        auto p = rnd<double>({3, 2, 2}, 3, 0.1, 0.9, true);
        CHECK(gradcheck([&] { return cross_entropy_probs(p, y); }, {p}) < 1e-4);
    }
}

TEST_CASE("min entropy frozen values") {
    SUBCASE("sharp one-hot logits give ~0") {
        auto o = Tensor::leaf({2, 1, 1}, {1000.0f, -1000.0f});
        CHECK(min_entropy(o).item() == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("uniform logits over four classes give ln 4") {
        auto o = Tensor::zeros({4, 3, 3});
        CHECK(min_entropy(o).item() == doctest::Approx(std::log(4.0)).epsilon(1e-5));
    }
    SUBCASE("random pixel matches hand computation") {
        auto o = Tensor::leaf({3, 1, 1}, {0.7f, -0.3f, 1.2f});
        double z = std::exp(0.7) + std::exp(-0.3) + std::exp(1.2);
        double h = 0;
        for (double v : {0.7, -0.3, 1.2}) {
            double p = std::exp(v) / z;
            h -= p * std::log(p);
        }
        CHECK(min_entropy(o).item() == doctest::Approx(h).epsilon(1e-6));
    }
    SUBCASE("gradcheck") {
        auto o = rnd<double>({3, 2, 2}, 4, -1, 1, true);
        CHECK(gradcheck([&] { return min_entropy(o); }, {o}) < 1e-4);
    }
}

TEST_CASE("max squares frozen values") {
    SUBCASE("uniform over four classes gives -1/8") {
        auto o = Tensor::zeros({4, 2, 2});
        CHECK(max_squares(o).item() == doctest::Approx(-0.125).epsilon(1e-6));
    }
    SUBCASE("one-hot gives -1/2") {
        auto o = Tensor::leaf({3, 1, 1}, {1000.0f, -1000.0f, -1000.0f});
        CHECK(max_squares(o).item() == doctest::Approx(-0.5).epsilon(1e-6));
    }
    SUBCASE("random pixel matches hand computation") {
        auto o = Tensor::leaf({3, 1, 1}, {0.2f, 0.9f, -1.1f});
        double z = std::exp(0.2) + std::exp(0.9) + std::exp(-1.1);
        double s = 0;
        for (double v : {0.2, 0.9, -1.1}) {
            double p = std::exp(v) / z;
            s += p * p;
        }
        CHECK(max_squares(o).item() == doctest::Approx(-s / 2).epsilon(1e-6));
    }
    SUBCASE("gradcheck") {
        auto o = rnd<double>({3, 2, 2}, 5, -1, 1, true);
        CHECK(gradcheck([&] { return max_squares(o); }, {o}) < 1e-4);
    }
}

TEST_CASE("selective cross entropy") {
    SUBCASE("all confidences below tau give zero") {
        auto p = Tensor::full({4, 2, 2}, 0.25f);
        CHECK(selective_ce(p, 0.8).item() == 0.0f);
    }
    SUBCASE("confident pixel contributes its pseudo-label CE") {
        auto p = Tensor::leaf({2, 1, 1}, {0.9f, 0.1f});
        CHECK(selective_ce(p, 0.8).item() == doctest::Approx(0.10536).epsilon(1e-4));
    }
    SUBCASE("confidence exactly at tau is excluded (strict inequality)") {
        auto p = Tensor::leaf({2, 1, 1}, {0.8f, 0.2f});
        CHECK(selective_ce(p, static_cast<double>(0.8f)).item() == 0.0f);
    }
    SUBCASE("zeros stay in the denominator") {
        // one confident pixel among four
        auto p = Tensor::leaf({2, 2, 2}, {0.9f, 0.5f, 0.5f, 0.5f, 0.1f, 0.5f, 0.5f, 0.5f});
        CHECK(selective_ce(p, 0.8).item() == doctest::Approx(0.10536 / 4).epsilon(1e-4));
    }
    SUBCASE("tau outside (0,1) is a config error") {
        auto p = Tensor::full({2, 1, 1}, 0.5f);
        CHECK_THROWS_AS(selective_ce(p, 1.0), ConfigError);
    }
}

TEST_CASE("special cross entropy") {
    SUBCASE("identical agreeing views reduce to pseudo-label CE") {
        auto p = Tensor::leaf({3, 1, 2}, {0.6f, 0.5f, 0.3f, 0.3f, 0.1f, 0.2f});
        std::vector<uint8_t> pseudo = argmax_classes(p);
        float a = special_ce(p, p).item();
        float b = cross_entropy_probs(p, pseudo).item();
        CHECK(a == doctest::Approx(b).epsilon(1e-5));
    }
    SUBCASE("disagreeing pixel uses exp(-(p-pt)^2) weights") {
        // argmax p = 0, argmax pt = 1; every class weight is exp(-0.16)
        auto p = Tensor::leaf({2, 1, 1}, {0.6f, 0.4f});
        auto pt = Tensor::leaf({2, 1, 1}, {0.2f, 0.8f});
        double w = std::exp(-0.16);
        CHECK(w == doctest::Approx(0.85214).epsilon(1e-4));
        double expect = -(w * std::log(0.2) + w * std::log(0.8));
        CHECK(special_ce(p, pt).item() == doctest::Approx(expect).epsilon(1e-4));
    }
    SUBCASE("equal class probabilities keep weight one under disagreement") {
        auto p = Tensor::leaf({3, 1, 1}, {0.5f, 0.3f, 0.2f});
        auto pt = Tensor::leaf({3, 1, 1}, {0.3f, 0.5f, 0.2f});
        double w01 = std::exp(-0.04);
        double expect = -(w01 * std::log(0.3) + w01 * std::log(0.5) + 1.0 * std::log(0.2));
        CHECK(special_ce(p, pt).item() == doctest::Approx(expect).epsilon(1e-4));
    }
    SUBCASE("shape mismatch raises") {
        CHECK_THROWS_AS(special_ce(Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 3, 3})), DimensionError);
    }
    SUBCASE("gradcheck through both views") {
        auto a = rnd<double>({3, 2, 2}, 6, -1, 1, true);
        auto b = rnd<double>({3, 2, 2}, 7, -1, 1, true);
        double err = gradcheck(
            [&] { return special_ce(softmax(a, 0), softmax(b, 0)); }, {a, b});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("discrepancy metrics") {
    auto a = rnd<float>({3, 2, 2}, 8);
    for (Metric m : {Metric::l2_logits, Metric::l1_logits, Metric::l2_probs, Metric::l1_probs,
                     Metric::kl_probs})
        CHECK(discrepancy(m, a, a).item() == doctest::Approx(0.0).epsilon(1e-7));

    auto x = Tensor::leaf({2, 1, 1}, {1.0f, 0.0f});
    auto y = Tensor::leaf({2, 1, 1}, {0.0f, 1.0f});
    CHECK(discrepancy(Metric::l1_logits, x, y).item() == doctest::Approx(1.0));
    CHECK(discrepancy(Metric::l2_logits, x, y).item() == doctest::Approx(1.0));

    SUBCASE("kl is directional") {
        auto p = Tensor::leaf({2, 1, 1}, {2.0f, 0.0f});
        auto q = Tensor::leaf({2, 1, 1}, {0.0f, 2.0f});
        float ab = discrepancy(Metric::kl_probs, p, q).item();
        float ba = discrepancy(Metric::kl_probs, q, p).item();
        CHECK(ab > 0.0f);
        CHECK(ab == doctest::Approx(ba));  // symmetric tensors here, but both positive
    }
    SUBCASE("gradcheck every metric") {
        auto u = rnd<double>({3, 2, 2}, 9, -1, 1, true);
        auto v = rnd<double>({3, 2, 2}, 10, -1, 1, true);
        for (Metric m : {Metric::l2_logits, Metric::l2_probs, Metric::kl_probs}) {
            CHECK(gradcheck([&] { return discrepancy(m, u, v); }, {u, v}) < 1e-4);
        }
    }
    SUBCASE("shape mismatch raises") {
        CHECK_THROWS_AS(discrepancy(Metric::l2_logits, Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 3, 3})),
                        DimensionError);
    }
}

TEST_CASE("consistency loss zero cases") {
    // deterministic toy forward: fixed conv then per-pixel logits
    auto w = rnd<float>({4, 3, 3, 3}, 11, -0.3, 0.3);
    auto fwd = [&](const Tensor& img) {
        auto x4 = reshape(img, {1, 3, img.dim(-2), img.dim(-1)});
        auto o = conv2d(x4, w, 1, 1);
        return reshape(o, {4, img.dim(-2), img.dim(-1)});
    };
    auto img = rnd<float>({3, 8, 8}, 12, 0.0, 1.0);

    SUBCASE("identity specs give exactly zero") {
        std::vector<PhotometricSpec> photo = {PhotometricSpec::identity()};
        std::vector<GeometricSpec> geom = {GeometricSpec::identity_crop(8, 8)};
        auto loss = consistency_loss_with_specs(fwd, img, photo, geom, Metric::l2_logits);
        CHECK(loss.item() == 0.0f);
    }
    SUBCASE("input-invariant constant model ignores photometric transforms") {
        auto const_fwd = [&](const Tensor& im) {
            return Tensor::full({4, im.dim(-2), im.dim(-1)}, 1.25f);
        };
        Rng rng(13);
        for (int i = 0; i < 10; ++i) {
            auto spec = sample_photometric(0.75, rng);
            auto loss = consistency_loss_with_specs(const_fwd, img, {spec}, {}, Metric::l2_logits);
            CHECK(loss.item() == 0.0f);
        }
    }
    SUBCASE("sampled losses are finite and non-negative for l2") {
        ConsistencySetup setup;
        setup.augment.patch_size = 2;
        setup.K = 2;
        Rng rng(14);
        auto loss = consistency_loss(fwd, img, setup, rng);
        CHECK(loss.item() >= 0.0f);
    }
    SUBCASE("crop term ignores pixels outside the cropped region") {
        // pointwise model: logits at (h,w) depend only on the input at (h,w)
        auto w1 = rnd<float>({4, 3, 1, 1}, 17, -0.5, 0.5);
        auto local_fwd = [&](const Tensor& im) {
            auto x4 = reshape(im, {1, 3, im.dim(-2), im.dim(-1)});
            return reshape(conv2d(x4, w1, 1, 0), {4, im.dim(-2), im.dim(-1)});
        };
        GeometricSpec g;
        g.kind = GeomKind::crop;
        g.top = 2;
        g.left = 2;
        g.height = 4;
        g.width = 4;
        auto base = consistency_loss_with_specs(local_fwd, img, {}, {g}, Metric::l2_logits);
        Tensor corrupted = img.detach();
        for (int c = 0; c < 3; ++c) corrupted.data()[c * 64] = 0.987f;  // (0,0), outside the crop
        auto modified = consistency_loss_with_specs(local_fwd, corrupted, {}, {g}, Metric::l2_logits);
        CHECK(base.item() == modified.item());
    }
}

TEST_CASE("consistency loss gradcheck on a tiny model") {
    auto w = rnd<double>({3, 3, 3, 3}, 15, -0.4, 0.4, true);
    auto fwd = [&](const TensorT<double>& img) {
        auto x4 = reshape(img, {1, 3, img.dim(-2), img.dim(-1)});
        return reshape(conv2d(x4, w, 1, 1), {3, img.dim(-2), img.dim(-1)});
    };
    auto img = rnd<double>({3, 8, 8}, 16, 0.0, 1.0);
    ConsistencySetup setup;
    setup.augment.patch_size = 4;
    double err = gradcheck(
        [&] {
            Rng rng(17);
            return consistency_loss(fwd, img, setup, rng);
        },
        {w}, {.max_entries_per_tensor = 30});
    CHECK(err < 1e-3);
}

TEST_CASE("total pretraining loss composition") {
    auto o_s = rnd<float>({5, 2, 2}, 18, -1, 1);
    std::vector<uint8_t> y = {0, 1, 2, 3};

    SUBCASE("lambda zero equals the plain cross entropy") {
        auto unsup = max_squares(o_s);
        float composed = total_pretrain_loss(o_s, y, 0.0, unsup).item();
        float plain = cross_entropy_logits(o_s, y).item();
        CHECK(composed == plain);
    }
    SUBCASE("uniform unsupervised logits with a perfect supervised head") {
        std::vector<float> sharp(5 * 4, -1000.0f);
        for (int p = 0; p < 4; ++p) sharp[y[p] * 4 + p] = 1000.0f;
        auto perfect = Tensor::leaf({5, 2, 2}, sharp);
        auto o_u = Tensor::zeros({5, 2, 2});
        float v = total_pretrain_loss(perfect, y, 0.1, max_squares(o_u)).item();
        CHECK(v == doctest::Approx(-0.01).epsilon(1e-6));
    }
    SUBCASE("terms evaluated separately sum to the composed value") {
        auto unsup = min_entropy(o_s);
        float composed = total_pretrain_loss(o_s, y, 1.0, unsup).item();
        float separate = cross_entropy_logits(o_s, y).item() + min_entropy(o_s).item();
        CHECK(composed == doctest::Approx(separate).epsilon(1e-7));
    }
}

TEST_CASE("losses are covariant under class permutation") {
    const std::vector<int> perm = {2, 0, 3, 1};  // new index -> old index
    auto o = rnd<float>({4, 3, 3}, 19, -1, 1);
    auto ot = rnd<float>({4, 3, 3}, 20, -1, 1);
    auto permute_classes = [&](const Tensor& t) {
        std::vector<float> d(t.size());
        int64_t P = 9;
        for (int c = 0; c < 4; ++c)
            for (int64_t p = 0; p < P; ++p) d[c * P + p] = t.value()[perm[c] * P + p];
        return Tensor::leaf(t.shape(), d);
    };
    std::vector<uint8_t> y = {0, 1, 2, 3, 0, 1, 2, 3, 0};
    std::vector<int> inv(4);
    for (int i = 0; i < 4; ++i) inv[perm[i]] = i;
    std::vector<uint8_t> yp(y.size());
    for (size_t i = 0; i < y.size(); ++i) yp[i] = static_cast<uint8_t>(inv[y[i]]);

    CHECK(cross_entropy_logits(o, y).item() ==
          doctest::Approx(cross_entropy_logits(permute_classes(o), yp).item()).epsilon(1e-6));
    CHECK(min_entropy(o).item() == doctest::Approx(min_entropy(permute_classes(o)).item()).epsilon(1e-6));
    CHECK(max_squares(o).item() == doctest::Approx(max_squares(permute_classes(o)).item()).epsilon(1e-6));
    CHECK(discrepancy(Metric::l2_logits, o, ot).item() ==
          doctest::Approx(discrepancy(Metric::l2_logits, permute_classes(o), permute_classes(ot)).item())
              .epsilon(1e-6));
    auto p = softmax(o, 0);
    auto pt = softmax(ot, 0);
    CHECK(selective_ce(p, 0.4).item() ==
          doctest::Approx(selective_ce(permute_classes(p), 0.4).item()).epsilon(1e-6));
    CHECK(special_ce(p, pt).item() ==
          doctest::Approx(special_ce(permute_classes(p), permute_classes(pt)).item()).epsilon(1e-6));
}

TEST_CASE("gradient descent on a frozen softmax strictly decreases entropy losses") {
    for (bool use_entropy : {true, false}) {
        auto logits = rnd<float>({3, 4, 4}, 21, -0.5, 0.5, true);
        float prev = 1e30f;
        for (int step = 0; step < 20; ++step) {
            logits.zero_grad();
            auto loss = use_entropy ? min_entropy(logits) : max_squares(logits);
            float v = loss.item();
            CHECK(v < prev);
            prev = v;
            loss.backward();
            for (int64_t i = 0; i < logits.size(); ++i)
                logits.data()[i] -= 0.5f * logits.grad()[i];
        }
    }
}
