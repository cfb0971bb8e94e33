import numpy as np
import pytest

from zpolicy import ThresholdDistribution
from zpolicy.errors import NotADistribution


def test_step_function_evaluation():
    u = ThresholdDistribution.step_function([40.0, 80.0], [0.25, 1.0],
                                            (0.0, 100.0))
    assert float(u(10.0)) == 0.0
    assert float(u(40.0)) == 0.25      # right-continuous
    assert float(u.left_values(40.0)) == 0.0
    assert float(u(60.0)) == 0.25
    assert float(u(80.0)) == 1.0


def test_quantile_left_continuous_inverse():
    u = ThresholdDistribution.step_function([40.0, 80.0], [0.25, 1.0],
                                            (0.0, 100.0))
    assert float(u.quantile(0.1)) == 40.0
    assert float(u.quantile(0.25)) == 40.0
    assert float(u.quantile(0.26)) == 80.0
    assert float(u.quantile(1.0)) == 80.0


def test_from_quantiles_roundtrip():
    z = np.array([55.0, 55.0, 70.0, 90.0])
    u = ThresholdDistribution.from_quantiles(z, (0.0, 100.0))
    assert np.array_equal(u.sample_quantiles(4), np.sort(z))


def test_jumps_include_boundaries():
    u = ThresholdDistribution.step_function([50.0], [0.6], (0.0, 100.0))
    jumps = u.jumps
    locs = [j[0] for j in jumps]
    assert 50.0 in locs
    assert 100.0 in locs               # terminal jump to 1


def test_monotonicity_violations_rejected():
    with pytest.raises(NotADistribution):
        ThresholdDistribution(x=np.array([0.0, 50.0, 100.0]),
                              values=np.array([0.0, 0.8, 0.5]),
                              domain=(0.0, 100.0))
    with pytest.raises(NotADistribution):
        ThresholdDistribution(x=np.array([0.0, 100.0]),
                              values=np.array([0.0, 1.4]),
                              domain=(0.0, 100.0))


def test_regrid_preserves_jumps():
    u = ThresholdDistribution.step_function([50.0], [1.0], (0.0, 100.0))
    u2 = u.regrid(np.linspace(0.0, 100.0, 173))
    probe = np.linspace(0.0, 100.0, 1001)
    assert np.array_equal(u(probe), u2(probe))
    assert np.array_equal(u.left_values(probe), u2.left_values(probe))


def test_uniform_distribution():
    u = ThresholdDistribution.uniform((0.0, 100.0))
    assert float(u(50.0)) == 0.5
    assert float(u.quantile(0.3)) == pytest.approx(30.0)
