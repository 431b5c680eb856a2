#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "grdsr/errors.hpp"
#include "grdsr/grad_check.hpp"
#include "grdsr/log.hpp"
#include "grdsr/training.hpp"
#include "support.hpp"

using namespace grdsr;
using testing::pattern_plane;
using testing::random_plane;

namespace {

GrdConfig tiny_net(std::size_t guide = 0) {
    GrdConfig c;
    c.num_blocks = 1;
    c.layers_per_block = 2;
    c.base_channels = 4;
    c.growth_channels = 4;
    c.guide_channels = guide;
    return c;
}

double max_abs_diff(const ImagePlane& a, const ImagePlane& b) {
    REQUIRE(a.same_extents(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(double(a.pixels[i]) - b.pixels[i]));
    return m;
}

// Silences expected augmentation warnings for the lifetime of the guard.
struct QuietLog {
    QuietLog() {
        set_log_sink([](LogLevel, const std::string&) {});
    }
    ~QuietLog() { set_log_sink(nullptr); }
};

} // namespace

TEST_CASE("regime names") {
    for (Regime r : {Regime::Supervised, Regime::SupervisedGuided, Regime::Internal, Regime::InternalGuided,
                     Regime::ExternalUnguided, Regime::ExternalGuided}) {
        CHECK(regime_from_string(to_string(r)) == r);
    }
    CHECK(regime_is_guided(Regime::ExternalGuided));
    CHECK_FALSE(regime_is_guided(Regime::ExternalUnguided));
    CHECK(regime_uses_true_hr(Regime::SupervisedGuided));
    CHECK_FALSE(regime_uses_true_hr(Regime::InternalGuided));
    CHECK_THROWS_AS(regime_from_string("zssr"), ConfigError);
}

TEST_CASE("transform enumeration") {
    SUBCASE("default multiplicity matches an independent count") {
        const AugmentationSpec spec;
        std::set<double> angles(spec.right_angle_rotations.begin(), spec.right_angle_rotations.end());
        angles.insert(spec.extra_rotation_degrees.begin(), spec.extra_rotation_degrees.end());
        const std::size_t expected = angles.size() * 2 * spec.rescale_factors.size();
        const auto ts = enumerate_transforms(spec);
        CHECK(ts.size() == expected);
        CHECK(ts.front().is_identity());
        std::set<std::tuple<double, double, bool>> unique;
        for (const auto& t : ts) unique.insert({t.rescale, t.rotation_degrees, t.flip});
        CHECK(unique.size() == ts.size());
    }
    SUBCASE("right angles with flip give the dihedral group") {
        const auto ts = enumerate_transforms(AugmentationSpec::right_angles_and_flip());
        CHECK(ts.size() == 8);
        for (const auto& t : ts) CHECK(t.is_right_angle());
    }
    SUBCASE("none is the identity alone") {
        const auto ts = enumerate_transforms(AugmentationSpec::none());
        REQUIRE(ts.size() == 1);
        CHECK(ts[0].is_identity());
    }
    SUBCASE("validation") {
        AugmentationSpec bad;
        bad.rescale_factors = {1.2};
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = AugmentationSpec{};
        bad.extra_rotation_degrees = {360.0};
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("augment") {
    const ImagePlane img = random_plane(20, 20, 1);
    SUBCASE("right angles on a square image give 8 distinct variants, identity first") {
        const auto v = augment(img, AugmentationSpec::right_angles_and_flip());
        REQUIRE(v.size() == 8);
        CHECK(v[0].pixels == img.pixels);
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) CHECK(v[i].pixels != v[j].pixels);
    }
    SUBCASE("half turn is an involution") {
        const AugmentTransform half{1.0, 180.0, false};
        const ImagePlane once = *apply_transform(img, half);
        CHECK(apply_transform(once, half)->pixels == img.pixels);
        // An independent index oracle for the half turn.
        for (std::size_t y = 0; y < 20; ++y)
            for (std::size_t x = 0; x < 20; ++x) CHECK(once.at(x, y) == img.at(19 - x, 19 - y));
    }
    SUBCASE("quarter turn on a rectangle swaps extents and inverts") {
        const ImagePlane rect = random_plane(24, 18, 2);
        for (const auto& t : enumerate_transforms(AugmentationSpec::right_angles_and_flip())) {
            const ImagePlane v = *apply_transform(rect, t);
            const bool swapped = std::lround(t.rotation_degrees / 90.0) % 2 == 1;
            CHECK(v.width == (swapped ? 18u : 24u));
            CHECK(invert_right_angle_transform(v, t).pixels == rect.pixels);
        }
    }
    SUBCASE("oblique rotation crops to an interior rectangle") {
        const ImagePlane flat(40, 40, 7.0f);
        const ImagePlane v = *apply_transform(flat, AugmentTransform{1.0, 30.0, false});
        CHECK(v.width < 40);
        CHECK(v.width >= 16);
        // No padding leaks into the crop: a constant image stays constant.
        for (float p : v.pixels) CHECK(p == doctest::Approx(7.0f).epsilon(1e-5));
    }
    SUBCASE("rescale shrinks by the factor") {
        const ImagePlane v = apply_transform(img, AugmentTransform{0.5, 0.0, false}, 4).value();
        CHECK(v.width == 10);
        CHECK(v.height == 10);
        CHECK_FALSE(apply_transform(img, AugmentTransform{0.5, 0.0, false}, 16).has_value());
    }
    SUBCASE("variants under the minimum extent are skipped with a warning") {
        std::vector<std::string> warnings;
        set_log_sink([&](LogLevel l, const std::string& m) {
            if (l == LogLevel::Warning) warnings.push_back(m);
        });
        AugmentationSpec spec = AugmentationSpec::none();
        spec.rescale_factors = {1.0, 0.5};
        const auto v = augment(img, spec);
        set_log_sink(nullptr);
        CHECK(v.size() == 1);
        CHECK(warnings.size() == 1);
    }
}

TEST_CASE("supervised pairs") {
    const DegradationSpec spec = DegradationSpec::for_test(2.0);
    SUBCASE("constant image stays constant") {
        const auto pairs = make_supervised_pairs({ImagePlane(24, 24, 90.0f)}, nullptr, spec);
        REQUIRE(pairs.size() == 1);
        for (float p : pairs[0].input_lr_interp.pixels) CHECK(p == doctest::Approx(90.0f).epsilon(1e-5));
        for (float p : pairs[0].target.pixels) CHECK(p == 90.0f);
        CHECK_FALSE(pairs[0].has_guide());
    }
    SUBCASE("input is blur, decimate, then bicubic back") {
        const ImagePlane x = pattern_plane(32, 28);
        const auto pairs = make_supervised_pairs({x}, nullptr, spec);
        const ImagePlane low = decimate(blur(x, gaussian_kernel(spec.sigma, spec.kernel_radius)), 2, 16, 14);
        const ImagePlane oracle = resample_bicubic(low, 32, 28);
        CHECK(max_abs_diff(pairs[0].input_lr_interp, oracle) <= 1e-6 * 255.0);
        CHECK(pairs[0].target_source == TargetSource::TrueHighRes);
        CHECK(pairs[0].regime == Regime::Supervised);
    }
    SUBCASE("count is images times multiplicity, guide rides along at full resolution") {
        const std::vector<ImagePlane> xs{pattern_plane(24, 24), random_plane(24, 24, 3)};
        const std::vector<ImagePlane> gs{random_plane(24, 24, 4), random_plane(24, 24, 5)};
        const auto pairs = make_supervised_pairs(xs, &gs, spec, AugmentationSpec::right_angles_and_flip());
        REQUIRE(pairs.size() == 16);
        CHECK(pairs[0].regime == Regime::SupervisedGuided);
        CHECK(pairs[0].input_guide.pixels == gs[0].pixels);
        for (const auto& p : pairs) {
            CHECK(p.input_guide.same_extents(p.target));
            // Guide, input and target share the transform.
            CHECK(invert_right_angle_transform(p.input_guide, p.transform).pixels == gs[p.source_index].pixels);
            CHECK(invert_right_angle_transform(p.target, p.transform).pixels == xs[p.source_index].pixels);
            // The input is simulated from the transformed target.
            CHECK(max_abs_diff(p.input_lr_interp, resample_bicubic(degrade(p.target, spec), 24, 24)) == 0.0);
        }
    }
    SUBCASE("unregistered guide is a data error") {
        const std::vector<ImagePlane> gs{ImagePlane(20, 24)};
        CHECK_THROWS_AS(make_supervised_pairs({ImagePlane(24, 24)}, &gs, spec), DataError);
        const std::vector<ImagePlane> two{ImagePlane(24, 24), ImagePlane(24, 24)};
        CHECK_THROWS_AS(make_supervised_pairs({ImagePlane(24, 24)}, &two, spec), DataError);
    }
    SUBCASE("image too small to degrade is a data error") {
        CHECK_THROWS_AS(make_supervised_pairs({ImagePlane(5, 5)}, nullptr, DegradationSpec::for_test(4.0)),
                        DataError);
    }
}

TEST_CASE("external unsupervised pairs") {
    const ImagePlane hr = pattern_plane(64, 64);
    const ImagePlane guide_hr = random_plane(64, 64, 6);
    const ImagePlane lr = degrade(hr, DegradationSpec::for_test(2.0));
    SUBCASE("targets are the observed low-resolution images") {
        const std::vector<ImagePlane> ys{lr}, gs{guide_hr};
        const auto pairs = make_external_unsupervised_pairs(ys, &gs, DegradationSpec::for_cascade_stage(std::cbrt(2.0), 2.0),
                                                            AugmentationSpec::none());
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].target.pixels == lr.pixels);
        CHECK(pairs[0].target_source == TargetSource::ObservedLowRes);
        CHECK(pairs[0].regime == Regime::ExternalGuided);
        CHECK(pairs[0].input_guide.pixels == resample_guide(guide_hr, lr.width, lr.height).pixels);
    }
    SUBCASE("no pair ever carries a plane at the true high resolution") {
        const std::vector<ImagePlane> ys{lr}, gs{guide_hr};
        QuietLog quiet;
        for (const auto& p : make_external_unsupervised_pairs(ys, &gs, DegradationSpec::for_test(2.0), AugmentationSpec{})) {
            CHECK(p.target.width <= lr.width);
            CHECK(p.input_guide.width <= lr.width);
            CHECK(p.target_source == TargetSource::ObservedLowRes);
        }
    }
    SUBCASE("self-guidance type-checks") {
        const std::vector<ImagePlane> ys{lr};
        const auto pairs = make_external_unsupervised_pairs(ys, &ys, DegradationSpec::for_test(2.0), AugmentationSpec::none());
        CHECK(pairs[0].input_guide.pixels == lr.pixels);
    }
    SUBCASE("input and target extents agree for integral and fractional scales") {
        for (double s : {2.0, 4.0, std::cbrt(2.0)}) {
            for (std::size_t n : {33u, 48u, 61u}) {
                const std::vector<ImagePlane> ys{random_plane(n, n + 5, n)};
                const auto pairs = make_external_unsupervised_pairs(ys, nullptr, DegradationSpec::for_test(s),
                                                                    AugmentationSpec::none());
                CHECK(pairs[0].input_lr_interp.same_extents(pairs[0].target));
                CHECK(pairs[0].regime == Regime::ExternalUnguided);
            }
        }
    }
    SUBCASE("a guide smaller than its target is rejected") {
        const std::vector<ImagePlane> ys{lr}, gs{ImagePlane(20, 20)};
        CHECK_THROWS_AS(make_external_unsupervised_pairs(ys, &gs, DegradationSpec::for_test(2.0), AugmentationSpec::none()),
                        DataError);
    }
}

TEST_CASE("internal pairs") {
    const ImagePlane lr = degrade(pattern_plane(96, 96), DegradationSpec::for_test(2.0));
    const DegradationSpec spec = DegradationSpec::for_cascade_stage(std::cbrt(2.0), 2.0);
    SUBCASE("augmentation disabled gives one pair") {
        CHECK(make_internal_pairs(lr, nullptr, spec, AugmentationSpec::none()).size() == 1);
    }
    SUBCASE("default augmentation: every target is a transform of the test image") {
        const AugmentationSpec aug;
        const auto pairs = make_internal_pairs(lr, nullptr, spec, aug);
        std::set<double> angles(aug.right_angle_rotations.begin(), aug.right_angle_rotations.end());
        angles.insert(aug.extra_rotation_degrees.begin(), aug.extra_rotation_degrees.end());
        CHECK(pairs.size() == angles.size() * 2 * aug.rescale_factors.size());
        for (const auto& p : pairs) {
            CHECK(p.target.pixels == apply_transform(lr, p.transform, aug.min_extent)->pixels);
            CHECK(p.source_index == 0);
            CHECK(p.target_source == TargetSource::ObservedLowRes);
        }
    }
    SUBCASE("guided internal pairs share transforms") {
        const ImagePlane g = random_plane(96, 96, 8);
        const auto pairs = make_internal_pairs(lr, &g, spec, AugmentationSpec::right_angles_and_flip());
        const ImagePlane g_lr = resample_guide(g, lr.width, lr.height);
        for (const auto& p : pairs) {
            CHECK(p.regime == Regime::InternalGuided);
            CHECK(invert_right_angle_transform(p.input_guide, p.transform).pixels == g_lr.pixels);
        }
    }
    SUBCASE("too small to degrade") {
        CHECK_THROWS_AS(make_internal_pairs(ImagePlane(3, 3), nullptr, DegradationSpec::for_test(4.0), AugmentationSpec::none()),
                        DataError);
    }
}

TEST_CASE("lp loss") {
    const Tensor a = testing::random_tensor({2, 1, 4, 5}, 1);
    SUBCASE("zero at equality") {
        CHECK(lp_loss(Var(a), a, 1).value()[0] == 0.0f);
        CHECK(lp_loss(Var(a), a, 2).value()[0] == 0.0f);
    }
    SUBCASE("constant offset closed forms") {
        Tensor b = a;
        for (auto& v : b.data()) v -= 0.25f;
        CHECK(lp_loss(Var(a), b, 1).value()[0] == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(lp_loss(Var(a), b, 2).value()[0] == doctest::Approx(0.0625).epsilon(1e-5));
    }
    SUBCASE("L2 gradient") {
        // Central differences of a double-precision reference loss.
        const Tensor t = testing::random_tensor({2, 1, 4, 5}, 2);
        auto reference = [&](std::vector<double> x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - t[i]) * (x[i] - t[i]);
            return acc / static_cast<double>(x.size());
        };
        Var x(a, true);
        lp_loss(x, t, 2).backward();
        std::vector<double> base(a.data().begin(), a.data().end());
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) {
            auto plus = base, minus = base;
            plus[i] += 1e-3;
            minus[i] -= 1e-3;
            const double numeric = (reference(plus) - reference(minus)) / 2e-3;
            err = std::max(err, std::abs(numeric - x.grad()[i]));
            scale = std::max({scale, std::abs(numeric), std::abs(double(x.grad()[i]))});
        }
        CHECK(err / scale < 1e-4);
    }
    SUBCASE("L1 subgradient is sign over n, zero at ties") {
        Tensor t = a;
        t[3] += 0.5f;
        t[4] -= 0.5f;
        Var x(a, true);
        lp_loss(x, t, 1).backward();
        const double n = static_cast<double>(a.numel());
        CHECK(x.grad()[3] == doctest::Approx(-1.0 / n));
        CHECK(x.grad()[4] == doctest::Approx(1.0 / n));
        CHECK(x.grad()[0] == 0.0f);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(lp_loss(Var(a), testing::random_tensor({2, 1, 4, 4}, 3), 1), ConfigError);
        CHECK_THROWS_AS(lp_loss(Var(a), a, 3), ConfigError);
    }
}

TEST_CASE("plateau scheduler") {
    SUBCASE("hand-simulated trajectory on a flat loss") {
        PlateauScheduler s(1e-3, 10.0, 10, 1e-6);
        std::vector<double> lrs;
        while (!s.should_stop()) {
            lrs.push_back(s.lr());
            s.observe(1.0);
        }
        // First observation is the best so far; each further 10 flat ones divide once.
        std::vector<double> expected(11, 1e-3);
        for (double lr : {1e-4, 1e-5, 1e-6}) expected.insert(expected.end(), 10, lr);
        REQUIRE(lrs.size() == expected.size());
        for (std::size_t i = 0; i < lrs.size(); ++i) CHECK(lrs[i] == doctest::Approx(expected[i]).epsilon(1e-12));
        CHECK(s.reductions() == 4);
        CHECK(s.lr() == doctest::Approx(1e-7));
    }
    SUBCASE("improvements reset the counter") {
        PlateauScheduler s(1e-3, 10.0, 3, 1e-6, 1);
        for (double v : {5.0, 6.0, 6.0, 4.0, 6.0, 6.0}) s.observe(v);
        CHECK(s.reductions() == 0);
        s.observe(6.0);
        CHECK(s.reductions() == 1);
    }
    SUBCASE("window mean suppresses a single spike") {
        PlateauScheduler s(1e-3, 10.0, 2, 1e-6, 5);
        for (double v : {10.0, 9.0, 8.0, 7.0, 6.0}) s.observe(v);
        s.observe(5.9); // mean still falls despite the plateau in raw values
        s.observe(20.0); // spike: mean rises
        CHECK(s.reductions() == 0);
    }
}

TEST_CASE("train configuration") {
    TrainConfig c;
    CHECK(c.initial_lr == 1e-3);
    CHECK(c.lr_divisor == 10.0);
    CHECK(c.plateau_patience == 10);
    CHECK(c.stop_lr == 1e-6);
    CHECK(c.loss_norm == 1);
    CHECK(c.batch_size == 8);
    CHECK(c.patch_size == 64);
    CHECK(c.max_steps == 20000);
    c.seed = 99;
    c.patch_size = 40;
    nlohmann::json j = c;
    TrainConfig back;
    from_json(j, back);
    CHECK(back.seed == 99);
    CHECK(back.patch_size == 40);
    TrainConfig bad;
    bad.stop_lr = 1e-2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.lr_divisor = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.plateau_patience = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training loop") {
    const ImagePlane img = pattern_plane(24, 24);
    TrainingPair identity;
    identity.input_lr_interp = img;
    identity.target = img;
    const std::vector<TrainingPair> pairs{identity};

    SUBCASE("schedule on a mocked flat loss") {
        GrdNetwork net = build_network(tiny_net(), 1);
        TrainConfig c;
        c.batch_size = 1;
        TrainHooks hooks;
        hooks.observed_loss = [](std::size_t, double) { return 0.5; };
        const TrainResult r = train(net, pairs, c, hooks);
        CHECK(r.stop_reason == StopReason::LearningRateFloor);
        std::vector<double> distinct;
        for (const auto& h : r.history)
            if (distinct.empty() || h.lr != distinct.back()) distinct.push_back(h.lr);
        REQUIRE(distinct.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) CHECK(distinct[i] == doctest::Approx(1e-3 * std::pow(0.1, double(i))));
        CHECK(r.history.size() == 41);
        for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].lr <= r.history[i - 1].lr);
    }
    SUBCASE("zero-residual task is learned") {
        GrdNetwork net = build_network(tiny_net(), 2);
        TrainConfig c;
        c.max_steps = 200;
        const TrainResult r = train(net, pairs, c);
        REQUIRE_FALSE(r.history.empty());
        CHECK(r.history.back().loss < 1e-3);
        for (std::size_t t = 20; t + 50 < r.history.size(); ++t) CHECK(r.history[t + 50].loss < r.history[t].loss);
    }
    SUBCASE("identical seeds give identical histories") {
        const auto run = [&] {
            GrdNetwork net = build_network(tiny_net(), 3);
            TrainConfig c;
            c.max_steps = 15;
            c.batch_size = 2;
            c.patch_size = 16;
            return train(net, make_supervised_pairs({img}, nullptr, DegradationSpec::for_test(2.0)), c).history;
        };
        const auto a = run(), b = run();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].loss == b[i].loss);
    }
    SUBCASE("non-finite loss restores the last good parameters") {
        GrdNetwork net = build_network(tiny_net(), 4);
        const auto before = net.named_tensors();
        TrainingPair bad = identity;
        bad.target.pixels[5] = std::numeric_limits<float>::quiet_NaN();
        TrainConfig c;
        c.batch_size = 1;
        QuietLog quiet;
        const TrainResult r = train(net, {bad}, c);
        CHECK(r.stop_reason == StopReason::NonFinite);
        CHECK(r.history.empty());
        const auto after = net.named_tensors();
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::ranges::equal(before[i].tensor.data(), after[i].tensor.data()));
    }
    SUBCASE("checkpoints fire at the interval") {
        GrdNetwork net = build_network(tiny_net(), 5);
        TrainConfig c;
        c.max_steps = 10;
        c.batch_size = 1;
        c.checkpoint_interval = 4;
        std::vector<std::size_t> steps;
        TrainHooks hooks;
        hooks.on_checkpoint = [&](const GrdNetwork&, std::size_t s) { steps.push_back(s); };
        train(net, pairs, c, hooks);
        CHECK(steps == std::vector<std::size_t>{4, 8});
    }
    SUBCASE("pair and network mismatches") {
        GrdNetwork guided = build_network(tiny_net(2), 6);
        CHECK_THROWS_AS(train(guided, pairs, TrainConfig{}), ConfigError);
        GrdNetwork plain = build_network(tiny_net(), 6);
        CHECK_THROWS_AS(train(plain, {}, TrainConfig{}), DataError);
    }
    SUBCASE("loss history csv") {
        const std::string csv = loss_history_csv({{1, 1e-3, 0.5}, {2, 1e-4, 0.25}});
        CHECK(csv == "step,lr,loss\n1,0.001,0.5\n2,0.0001,0.25\n");
    }
}
