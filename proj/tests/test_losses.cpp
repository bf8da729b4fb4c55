#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace raune;
using testutil::random_tensor;

namespace {

// Extractor with a deliberately wrong tap count, for the spec-error path.
struct ThreeTapExtractor : FeatureExtractor<double> {
    std::vector<Var<double>> features(const Var<double>& x) override { return {x, x, x}; }
    std::string name() const override { return "three-tap"; }
};

}  // namespace

TEST_CASE("pixel content loss: identity, constant offset, brute-force agreement") {
    Rng rng(1);
    Tensor<double> xt = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto x = constant(xt);
    REQUIRE(pixel_content_loss(x, x)->value[0] == 0.0);

    Tensor<double> yt = xt;
    for (auto& v : yt.data) v += 0.2;
    REQUIRE(pixel_content_loss(x, constant(yt))->value[0] == Catch::Approx(0.2).epsilon(1e-9));

    Tensor<double> zt = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    double direct = 0;
    for (int64_t i = 0; i < xt.numel(); ++i) direct += std::abs(xt[i] - zt[i]);
    direct /= double(xt.numel());
    REQUIRE(pixel_content_loss(x, constant(zt))->value[0] == Catch::Approx(direct).margin(1e-7));

    REQUIRE_THROWS_AS(pixel_content_loss(x, constant(Tensor<double>({1, 3, 4, 4}))), ShapeError);
}

TEST_CASE("ssim window: normalized gaussian and uniform") {
    SsimParams p;
    Tensor<double> w = ssim_window<double>(p);
    REQUIRE(w.shape == Shape{11, 11});
    REQUIRE(w.sum() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(w.at3(0, 5, 5) > w.at3(0, 0, 0));  // peaked at the center

    p.window = WindowKind::uniform;
    p.window_size = 5;
    Tensor<double> u = ssim_window<double>(p);
    REQUIRE(u[0] == Catch::Approx(1.0 / 25.0));
    REQUIRE(u.sum() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim index map: identity gives 1 everywhere") {
    Rng rng(2);
    Tensor<double> xt = random_tensor<double>({1, 3, 16, 16}, rng, 0.0, 1.0);
    auto map = ssim_index_map(constant(xt), constant(xt), SsimParams{});
    REQUIRE(map->value.shape == Shape{1, 3, 6, 6});
    for (int64_t i = 0; i < map->value.numel(); ++i) REQUIRE(map->value[i] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("ssim closed form: constant 0 vs constant 1") {
    SsimParams p;  // c1 = 1e-4 = (0.01 * L)^2 with L = 1
    Tensor<double> x({1, 1, 12, 12}, 0.0), y({1, 1, 12, 12}, 1.0);
    auto map = ssim_index_map(constant(x), constant(y), p);
    double expect = p.c1 / (1.0 + p.c1);
    for (int64_t i = 0; i < map->value.numel(); ++i) REQUIRE(map->value[i] == Catch::Approx(expect).margin(1e-9));
    REQUIRE(expect == Catch::Approx(9.999e-5).margin(1e-8));
}

TEST_CASE("ssim symmetry and agreement with the direct-formula oracle") {
    Rng rng(3);
    SsimParams p;
    for (auto kind : {WindowKind::gaussian, WindowKind::uniform}) {
        p.window = kind;
        Tensor<double> xt = random_tensor<double>({2, 3, 14, 14}, rng, 0.0, 1.0);
        Tensor<double> yt = random_tensor<double>({2, 3, 14, 14}, rng, 0.0, 1.0);
        double m_xy = ssim_mean(constant(xt), constant(yt), p)->value[0];
        double m_yx = ssim_mean(constant(yt), constant(xt), p)->value[0];
        REQUIRE(std::abs(m_xy - m_yx) <= 1e-7);
        REQUIRE(m_xy == Catch::Approx(testutil::naive_ssim_mean(xt, yt, p)).margin(1e-9));
    }
}

TEST_CASE("ssim window larger than image raises") {
    Tensor<double> xt({1, 3, 8, 8}, 0.5);
    REQUIRE_THROWS_AS(ssim_index_map(constant(xt), constant(xt), SsimParams{}), ShapeError);
}

TEST_CASE("ssim loss: identity, near-zero SSIM, and anti-correlated upper bound") {
    Rng rng(4);
    Tensor<double> xt = random_tensor<double>({1, 3, 16, 16}, rng, 0.0, 1.0);
    REQUIRE(ssim_loss(constant(xt), constant(xt), SsimParams{})->value[0] == Catch::Approx(0.0).margin(1e-9));

    // constant 0 vs constant 1: mean SSIM ~ 1e-4, loss ~ 0.5
    Tensor<double> z({1, 1, 12, 12}, 0.0), o({1, 1, 12, 12}, 1.0);
    REQUIRE(ssim_loss(constant(z), constant(o), SsimParams{})->value[0] == Catch::Approx(0.5).margin(1e-4));

    // inverted zero-window-mean pattern: mean SSIM -> -1, loss -> 1
    SsimParams p;
    p.window = WindowKind::uniform;
    p.window_size = 3;
    Tensor<double> a({1, 1, 9, 9});
    const double amp[3] = {10.0, -10.0, 0.0};  // columns repeat (a, -a, 0): every 3-wide window sums to 0
    for (int64_t h = 0; h < 9; ++h)
        for (int64_t w = 0; w < 9; ++w) a.at3(0, h, w) = amp[w % 3];
    Tensor<double> b = a;
    for (auto& v : b.data) v = -v;
    double loss = ssim_loss(constant(a), constant(b), p)->value[0];
    double oracle_mean = testutil::naive_ssim_mean(a, b, p);
    REQUIRE(loss == Catch::Approx((1.0 - oracle_mean) / 2.0).margin(1e-9));
    REQUIRE(loss >= 0.9999);
    REQUIRE(loss <= 1.0);
}

TEST_CASE("semantic content loss: identity stub substitutions") {
    Rng rng(5);
    Tensor<double> xt = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> yt = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    IdentityFeatureExtractor<double> stub;

    auto x = constant(xt);
    auto y = constant(yt);
    REQUIRE(semantic_content_loss(x, x, stub, {1, 1, 1, 1, 1})->value[0] == 0.0);

    double expected = 5.0 * pixel_content_loss(x, y)->value[0];
    REQUIRE(semantic_content_loss(x, y, stub, {1, 1, 1, 1, 1})->value[0] == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(semantic_content_loss(x, y, stub, {0, 0, 0, 0, 0})->value[0] == 0.0);

    ThreeTapExtractor bad;
    REQUIRE_THROWS_AS(semantic_content_loss(x, y, bad, {1, 1, 1, 1, 1}), ConfigError);
}

TEST_CASE("total loss: weighted combination, masking and component scaling") {
    Rng rng(6);
    Tensor<double> xt = random_tensor<double>({1, 3, 16, 16}, rng, -0.8, 0.8);
    Tensor<double> yt = random_tensor<double>({1, 3, 16, 16}, rng, -0.8, 0.8);
    auto x = constant(xt);
    auto y = constant(yt);
    IdentityFeatureExtractor<double> stub;
    SsimParams sp;

    LossWeights ones;
    auto full = total_loss(x, y, ones, sp, &stub);
    REQUIRE(full.value() ==
            Catch::Approx(full.pcont + full.ssim + full.scont).epsilon(1e-12));

    LossWeights scaled{2.0, 0.5, 3.0};
    auto s = total_loss(x, y, scaled, sp, &stub);
    REQUIRE(s.value() == Catch::Approx(2.0 * full.pcont + 0.5 * full.ssim + 3.0 * full.scont).epsilon(1e-9));

    LossWeights pixel_only{1.0, 0.0, 0.0};
    auto po = total_loss<double>(x, y, pixel_only, sp, nullptr);
    Var<double> x01 = add_scalar(mul_scalar(x, 0.5), 0.5);
    Var<double> y01 = add_scalar(mul_scalar(y, 0.5), 0.5);
    REQUIRE(po.value() == Catch::Approx(pixel_content_loss(x01, y01)->value[0]).epsilon(1e-12));
    REQUIRE(po.ssim == 0.0);
    REQUIRE(po.scont == 0.0);

    auto zero = total_loss(x, x, ones, sp, &stub);
    REQUIRE(zero.value() == Catch::Approx(0.0).margin(1e-9));

    LossWeights needs_backbone{1.0, 1.0, 1.0};
    REQUIRE_THROWS_AS(total_loss<double>(x, y, needs_backbone, sp, nullptr), ConfigError);
    LossWeights bad{-1.0, 0.0, 0.0};
    REQUIRE_THROWS_AS(total_loss<double>(x, y, bad, sp, nullptr), ConfigError);
}

TEST_CASE("loss gradients match finite differences (64-bit, 3x8x8)") {
    Rng rng(7);
    Tensor<double> yt = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);
    Tensor<double> rt = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);
    auto y_e = make_var(yt, true);
    auto y_ref = constant(rt);

    SECTION("pixel") {
        Rng pick(70);
        auto res = testutil::gradcheck(y_e, [&] { return pixel_content_loss(y_e, y_ref); }, 50, pick);
        REQUIRE(res.max_rel_err <= 1e-3);
    }
    SECTION("ssim (gaussian window 5)") {
        SsimParams p;
        p.window_size = 5;
        Rng pick(71);
        auto res = testutil::gradcheck(y_e, [&] { return ssim_loss(y_e, y_ref, p); }, 50, pick);
        REQUIRE(res.max_rel_err <= 1e-3);
    }
    SECTION("semantic (identity stub)") {
        IdentityFeatureExtractor<double> stub;
        Rng pick(72);
        auto res = testutil::gradcheck(
            y_e, [&] { return semantic_content_loss(y_e, y_ref, stub, {1, 0.5, 2, 1, 0.25}); }, 50, pick);
        REQUIRE(res.max_rel_err <= 1e-3);
    }
}

TEST_CASE("ssim params: range helper and validation") {
    SsimParams p2 = SsimParams::for_range(2.0);
    REQUIRE(p2.c1 == Catch::Approx(4e-4));
    REQUIRE(p2.c2 == Catch::Approx(36e-4));
    SsimParams bad;
    bad.window_size = 4;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = SsimParams{};
    bad.c1 = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}
