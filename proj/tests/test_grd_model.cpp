#include <doctest.h>

#include "grdsr/errors.hpp"
#include "grdsr/grad_check.hpp"
#include "grdsr/grd_model.hpp"
#include "support.hpp"

using namespace grdsr;
using testing::random_tensor;

namespace {

GrdConfig small_config(std::size_t guide = 4) {
    GrdConfig c;
    c.num_blocks = 2;
    c.layers_per_block = 2;
    c.base_channels = 4;
    c.growth_channels = 4;
    c.guide_channels = guide;
    return c;
}

// Full-gain reconstruction so the residual path is not numerically negligible.
void full_gain_reconstruction(GrdNetwork& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    net.reconstruction_layer = LayerParams::make(net.config.base_channels, 1, 3, false, rng);
}

void zero_reconstruction(GrdNetwork& net) {
    net.reconstruction_layer.weights.mutable_value().fill(0.0f);
    net.reconstruction_layer.bias.mutable_value().fill(0.0f);
}

std::size_t closed_form_count(std::size_t B, std::size_t L, std::size_t base, std::size_t growth, std::size_t guide) {
    auto conv_bn = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out + 2 * out; };
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    std::size_t n = conv_bn(1, base, 3);
    if (guide) n += conv_bn(1, guide, 3);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < L; ++k) n += conv_bn(base + k * growth + guide, growth, 3);
        n += conv(base + L * growth + guide, base, 1);
    }
    n += conv(B * base, base, 1);
    n += conv(base, 1, 3);
    return n;
}

} // namespace

TEST_CASE("config validation and channel arithmetic") {
    GrdConfig c;
    CHECK(c.num_blocks == 4);
    CHECK(c.layers_per_block == 4);
    CHECK(c.base_channels == 32);
    CHECK(c.growth_channels == 16);
    CHECK(c.guide_channels == 16);
    CHECK(c.layer_input_channels(2) == 32 + 2 * 16 + 16);
    GrdConfig bad = c;
    bad.num_blocks = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.growth_channels = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    nlohmann::json j = c;
    CHECK(j.get<GrdConfig>() == c);
}

TEST_CASE("build_network") {
    SUBCASE("deterministic per seed") {
        const GrdNetwork a = build_network(small_config(), 9), b = build_network(small_config(), 9);
        const auto ta = a.named_tensors(), tb = b.named_tensors();
        REQUIRE(ta.size() == tb.size());
        for (std::size_t i = 0; i < ta.size(); ++i) {
            CHECK(ta[i].name == tb[i].name);
            for (std::size_t k = 0; k < ta[i].tensor.numel(); ++k) CHECK(ta[i].tensor[k] == tb[i].tensor[k]);
        }
        const GrdNetwork c = build_network(small_config(), 10);
        CHECK(c.named_tensors()[0].tensor[0] != ta[0].tensor[0]);
    }
    SUBCASE("parameter count matches channel arithmetic") {
        GrdConfig c;
        c.num_blocks = 2;
        c.layers_per_block = 3;
        c.base_channels = 16;
        c.growth_channels = 8;
        c.guide_channels = 8;
        CHECK(build_network(c, 1).parameter_count() == closed_form_count(2, 3, 16, 8, 8));
        CHECK(build_network(GrdConfig{}, 1).parameter_count() == closed_form_count(4, 4, 32, 16, 16));
        c.guide_channels = 0;
        CHECK(build_network(c, 1).parameter_count() == closed_form_count(2, 3, 16, 8, 0));
        CHECK(closed_form_count(2, 3, 16, 8, 0) < closed_form_count(2, 3, 16, 8, 8));
    }
    SUBCASE("dense layers are 3x3 and fusions 1x1") {
        const GrdNetwork net = build_network(small_config(), 2);
        for (const auto& block : net.blocks) {
            for (std::size_t k = 0; k < block.layers.size(); ++k) {
                CHECK(block.layers[k].weights.shape() == Shape{4, net.config.layer_input_channels(k), 3, 3});
                CHECK(block.layers[k].has_bn);
            }
            CHECK(block.fusion.kernel_size() == 1);
            CHECK(block.fusion.out_channels() == 4);
        }
        CHECK(net.reconstruction_layer.out_channels() == 1);
    }
}

TEST_CASE("forward shapes and global residual") {
    GrdNetwork net = build_network(small_config(), 3);
    for (std::size_t n : {17u, 32u, 41u}) {
        const Var x(random_tensor({1, 1, n, n + 3}, n)), g(random_tensor({1, 1, n, n + 3}, n + 1));
        CHECK(forward(net, x, g, BnMode::Train).shape() == x.shape());
        CHECK(forward(net, x, g, BnMode::Eval).shape() == x.shape());
    }
    zero_reconstruction(net);
    const Var x(random_tensor({2, 1, 9, 11}, 5)), g(random_tensor({2, 1, 9, 11}, 6));
    const Tensor y = forward(net, x, g, BnMode::Train).value();
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == x.value()[i]);

    GrdNetwork plain = build_network(small_config(0), 3);
    zero_reconstruction(plain);
    const Tensor yu = forward_unguided(plain, x, BnMode::Eval).value();
    for (std::size_t i = 0; i < yu.numel(); ++i) CHECK(yu[i] == x.value()[i]);
}

TEST_CASE("forward argument errors") {
    GrdNetwork guided = build_network(small_config(), 4);
    GrdNetwork plain = build_network(small_config(0), 4);
    const Var x(random_tensor({1, 1, 8, 8}, 1));
    CHECK_THROWS_AS(forward_unguided(guided, x), ConfigError);
    CHECK_THROWS_AS(forward(plain, x, x), ConfigError);
    CHECK_THROWS_AS(forward(guided, x, Var()), ConfigError);
    CHECK_THROWS_AS(forward(guided, x, Var(random_tensor({1, 1, 8, 9}, 2))), ConfigError);
    CHECK_THROWS_AS(predict(guided, ImagePlane(8, 8), nullptr), ConfigError);
}

TEST_CASE("minimal topology runs") {
    GrdConfig c;
    c.num_blocks = 1;
    c.layers_per_block = 1;
    c.base_channels = 2;
    c.growth_channels = 1;
    c.guide_channels = 1;
    GrdNetwork net = build_network(c, 5);
    const Var x(random_tensor({1, 1, 6, 6}, 3));
    CHECK(forward(net, x, x, BnMode::Train).value().all_finite());
}

// Sign pattern of every ReLU in the last forward pass that used `probe`.
struct KinkGuard {
    std::vector<Tensor> acts;
    ForwardProbe probe;
    GradCheckOptions options;
    KinkGuard() {
        probe.activations = &acts;
        options.region_signature = [this] {
            std::uint64_t h = 1469598103934665603ull;
            for (const auto& t : acts)
                for (float v : t.data()) h = (h ^ static_cast<std::uint64_t>(v > 0.0f)) * 1099511628211ull;
            return h;
        };
    }
};

void require_checked(const GradCheckReport& r, std::size_t numel) {
    CHECK(r.max_relative_error < 1e-3);
    // Train-mode BN couples every pixel, so one perturbation can move many
    // units; still demand a meaningful share of coordinates.
    CHECK(r.checked * 8 >= numel);
}

constexpr std::uint64_t kGradSeeds[] = {11, 12, 13, 14};

TEST_CASE("forward gradient w.r.t. both inputs") {
    for (std::uint64_t seed : kGradSeeds) {
        CAPTURE(seed);
        GrdNetwork net = build_network(small_config(), seed);
        full_gain_reconstruction(net, seed + 100);
        const Tensor x = random_tensor({1, 1, 8, 8}, seed + 200, 0.0f, 1.0f);
        const Tensor g = random_tensor({1, 1, 8, 8}, seed + 300, 0.0f, 1.0f);
        for (BnMode mode : {BnMode::Train, BnMode::Eval}) {
            KinkGuard k;
            const Var gv(g), xv(x);
            require_checked(
                grad_check([&](const Var& in) { return forward(net, in, gv, mode, &k.probe); }, x, k.options), 64);
            require_checked(
                grad_check([&](const Var& in) { return forward(net, xv, in, mode, &k.probe); }, g, k.options), 64);
        }
    }
}

TEST_CASE("unguided forward gradient") {
    for (std::uint64_t seed : kGradSeeds) {
        CAPTURE(seed);
        GrdNetwork net = build_network(small_config(0), seed);
        full_gain_reconstruction(net, seed + 100);
        const Tensor x = random_tensor({1, 1, 8, 8}, seed + 200, 0.0f, 1.0f);
        for (BnMode mode : {BnMode::Train, BnMode::Eval}) {
            KinkGuard k;
            require_checked(
                grad_check([&](const Var& in) { return forward_unguided(net, in, mode, &k.probe); }, x, k.options),
                64);
        }
    }
}

TEST_CASE("forward gradient w.r.t. parameters") {
    for (std::uint64_t seed : kGradSeeds) {
        CAPTURE(seed);
        GrdNetwork net = build_network(small_config(), seed);
        full_gain_reconstruction(net, seed + 100);
        const Var x(random_tensor({1, 1, 8, 8}, seed + 200, 0.0f, 1.0f));
        const Var g(random_tensor({1, 1, 8, 8}, seed + 300, 0.0f, 1.0f));
        KinkGuard k;
        auto fn = [&] { return forward(net, x, g, BnMode::Train, &k.probe); };
        require_checked(grad_check_leaf(fn, net.blocks[0].layers[1].weights, k.options),
                        net.blocks[0].layers[1].weights.value().numel());
        require_checked(grad_check_leaf(fn, net.guide_feature_layer.bn_scale, k.options), 4);
        require_checked(grad_check_leaf(fn, net.blocks[1].fusion.weights, k.options),
                        net.blocks[1].fusion.weights.value().numel());
        require_checked(grad_check_leaf(fn, net.fusion_layer.bias, k.options), 4);
    }
}

TEST_CASE("guidance path is live") {
    GrdNetwork net = build_network(small_config(), 22);
    const Var x(random_tensor({1, 1, 10, 10}, 23));
    Var g(random_tensor({1, 1, 10, 10}, 24), true);
    forward(net, x, g, BnMode::Eval).backward();
    double norm = 0.0;
    for (float v : g.grad().data()) norm += std::abs(v);
    CHECK(norm > 0.0);
    Tensor g2 = g.value();
    g2[37] += 0.5f;
    const Tensor a = forward(net, x, g, BnMode::Eval).value(), b = forward(net, x, Var(g2), BnMode::Eval).value();
    bool differs = false;
    for (std::size_t i = 0; i < a.numel(); ++i) differs = differs || a[i] != b[i];
    CHECK(differs);
}

TEST_CASE("dense wiring") {
    GrdConfig c = small_config();
    c.layers_per_block = 4;
    GrdNetwork net = build_network(c, 25);
    const Var x(random_tensor({1, 1, 8, 8}, 26)), g(random_tensor({1, 1, 8, 8}, 27));
    std::vector<std::vector<Tensor>> base_inputs, ablated_inputs;
    ForwardProbe p1;
    p1.layer_inputs = &base_inputs;
    forward(net, x, g, BnMode::Eval, &p1);
    const std::size_t k = 1;
    ForwardProbe p2;
    p2.layer_inputs = &ablated_inputs;
    p2.zero_layer_output = std::pair<std::size_t, std::size_t>{0, k};
    forward(net, x, g, BnMode::Eval, &p2);
    for (std::size_t j = 0; j < c.layers_per_block; ++j) {
        const Tensor &a = base_inputs[0][j], &b = ablated_inputs[0][j];
        CHECK(a.dim(1) == c.layer_input_channels(j));
        bool differs = false;
        for (std::size_t i = 0; i < a.numel(); ++i) differs = differs || a[i] != b[i];
        CHECK(differs == (j > k));
    }
}

TEST_CASE("model file round trip") {
    testing::TempDir dir("model");
    GrdNetwork net = build_network(small_config(), 31);
    net.stage_factor = 1.2599;
    net.regime = "external_guided";
    net.blocks[0].layers[0].bn_running_var.fill(2.5f);
    save_network(dir / "net.grdp", net);
    GrdNetwork back = load_network(dir / "net.grdp");
    CHECK(back.config == net.config);
    CHECK(back.stage_factor == net.stage_factor);
    CHECK(back.regime == net.regime);
    const auto ta = net.named_tensors(), tb = back.named_tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i)
        for (std::size_t k = 0; k < ta[i].tensor.numel(); ++k) CHECK(ta[i].tensor[k] == tb[i].tensor[k]);
    const ImagePlane img = testing::random_plane(12, 12, 32);
    const ImagePlane p1 = predict(net, img, &img), p2 = predict(back, img, &img);
    CHECK(p1.pixels == p2.pixels);
}

TEST_CASE("predict scales intensities") {
    GrdNetwork net = build_network(small_config(), 33);
    zero_reconstruction(net);
    const ImagePlane img = testing::random_plane(9, 7, 34);
    const ImagePlane out = predict(net, img, &img);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-6));
}
