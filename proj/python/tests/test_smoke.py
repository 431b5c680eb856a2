import math

import numpy as np
import pytest

import grdsr


def pattern(h=32, w=32):
    y, x = np.mgrid[0:h, 0:w].astype(np.float32)
    return (100 + 60 * np.sin(x / 5.0) * np.cos(y / 7.0)).astype(np.float32)


def test_sigma_rule():
    for s in (2.0, 4.0):
        assert grdsr.sigma_for_test_degradation(s) == pytest.approx(s / (2 * math.sqrt(2 * math.log(2))))


def test_degrade_shape_and_constant():
    out = grdsr.degrade(np.full((40, 48), 7.0, dtype=np.float32), 2.0)
    assert out.shape == (20, 24)
    assert np.allclose(out, 7.0, atol=1e-4)


def test_blur_adjoint_pairing():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((12, 12)).astype(np.float32)
    y = rng.standard_normal((12, 12)).astype(np.float32)
    lhs = float(np.sum(grdsr.blur(x, 1.2).astype(np.float64) * y))
    rhs = float(np.sum(x.astype(np.float64) * grdsr.blur_adjoint(y, 1.2)))
    assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), abs(rhs))


def test_metrics():
    a = pattern()
    assert grdsr.psnr(a, a, 255.0) == math.inf
    assert grdsr.psnr(a, a + 10, 255.0) == pytest.approx(20 * math.log10(25.5), abs=1e-6)
    assert grdsr.ssim(a, a, 255.0) == pytest.approx(1.0)


def test_plan():
    plan = grdsr.plan_stages(2.0, 3, 256, 256)
    assert plan.stage_widths == [323, 406, 512]
    assert plan.symbolic_scale(0) == "2^(1/3)"


def test_ibp_fixed_point():
    x = pattern()
    y = grdsr.degrade(x, 2.0)
    refined, residuals = grdsr.ibp_refine(x, y, 2.0)
    assert np.max(np.abs(refined - x)) < 1e-6 * max(1.0, float(np.max(np.abs(x))))
    assert residuals[0] < 1e-6


def test_phantom_and_volume_io(tmp_path):
    target, guide = grdsr.generate_phantom({"seed": 3, "extents": [24, 20, 2]})
    assert target.shape == (2, 20, 24)
    assert guide.shape == target.shape
    grdsr.write_volume(tmp_path / "v.json", target)
    assert np.array_equal(grdsr.read_volume(tmp_path / "v.json"), target)


def test_network_round_trip(tmp_path):
    cfg = {"num_blocks": 1, "layers_per_block": 2, "base_channels": 4, "growth_channels": 4, "guide_channels": 4}
    net = grdsr.build_network(cfg, seed=2)
    assert net.guided
    x = pattern(24, 24)
    out = net.predict(x, x)
    assert out.shape == x.shape
    net.stage_factor = 2 ** (1 / 3)
    net.save(tmp_path / "m.params")
    again = grdsr.load_network(tmp_path / "m.params")
    assert again.parameter_count() == net.parameter_count()
    assert np.array_equal(again.predict(x, x), out)
    sr = again.super_resolve(grdsr.degrade(x, 2.0), x, scale=2.0, stages=3)
    assert sr.shape == (24, 24)


def test_errors_are_typed():
    with pytest.raises(grdsr.ConfigError):
        grdsr.sigma_for_test_degradation(1.0)
    with pytest.raises(grdsr.DataError):
        grdsr.read_volume("/nonexistent/volume.json")


def test_bicubic_only_experiment():
    out = grdsr.run_experiment(
        {"methods": ["bicubic"], "seeds": [1], "phantom": {"extents": [48, 48, 4]}, "test_slices": [2]}
    )
    assert list(out["means"]) == ["bicubic"]
    assert out["metrics_csv"].startswith("seed,method,label,slice,psnr_db,ssim\n")
