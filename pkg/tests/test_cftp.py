import numpy as np
import pytest

from zpolicy import (
    CftpConfig, LoadParams, ThresholdDistribution, cftp_sample,
    estimate_joint_cost, smooth_distribution, solve_stationary,
)
from zpolicy.errors import EmptySamples, NoCoalescence
from zpolicy.model import MarkovEnvironment


def _ref_cftp_config(set_points=(70.0, 90.0), seed=3):
    params = LoadParams(h=1.0, c=1.1, comfort_levels=(50.0, 100.0))
    return CftpConfig(wind_rates=(0.04, 0.04),
                      load_params=(params,) * len(set_points),
                      comfort_rates=((0.02, 0.02),) * len(set_points),
                      set_points=tuple(set_points), seed=seed)


def test_deterministic_environment_coalesces_immediately():
    # wind stuck off and a single fixed comfort level: both chains park at
    # min(Z, Theta) within the first horizon
    params = LoadParams(h=1.0, c=1.1, comfort_levels=(80.0,))
    cfg = CftpConfig(wind_rates=(1e-9, 1e9),   # wind effectively never on
                     load_params=(params, params),
                     comfort_rates=((), ()),
                     set_points=(30.0, 60.0), seed=1)
    sample = cftp_sample(cfg, np.random.default_rng(0))
    assert sample.temperatures == pytest.approx([30.0, 60.0], abs=1e-9)
    assert sample.horizon == pytest.approx(4.0 * 80.0 / 1.0)


def test_single_load_samples_match_analytic(ref_env, ref_params):
    cfg = CftpConfig(wind_rates=(0.04, 0.04), load_params=(ref_params,),
                     comfort_rates=((0.02, 0.02),), set_points=(100.0,), seed=2)
    temps = []
    for k in range(2500):
        s = cftp_sample(cfg, np.random.default_rng(
            np.random.SeedSequence([11, k]).generate_state(1)[0]))
        temps.append(s.temperatures[0])
    temps = np.array(temps)
    dist = solve_stationary(100.0, ref_env, ref_params)
    grid = np.linspace(0.0, 100.0, 51)
    emp = np.array([(temps <= g + 1e-9).mean() for g in grid])
    assert np.abs(emp - dist.cdf(grid)).max() <= 0.03


def test_identical_loads_equal_set_points_coincide():
    # identical coupling requires identical randomness: share the comfort chain
    base = _ref_cftp_config(set_points=(80.0, 80.0))
    cfg = CftpConfig(wind_rates=base.wind_rates, load_params=base.load_params,
                     comfort_rates=base.comfort_rates,
                     set_points=base.set_points, seed=base.seed,
                     shared_comfort=True)
    for k in range(30):
        s = cftp_sample(cfg, np.random.default_rng(
            np.random.SeedSequence([5, k]).generate_state(1)[0]))
        assert s.temperatures[0] == s.temperatures[1]
        assert s.comfort[0] == s.comfort[1]


def test_coupled_homogeneous_cost_matches_analytic(ref_env, ref_params, ref_curves):
    # shared comfort reproduces the homogeneous model, so the perfect-sample
    # cost estimate must agree with the dominance-based finite cost
    from zpolicy import finite_cost
    z = (60.0, 80.0)
    base = _ref_cftp_config(set_points=z)
    cfg = CftpConfig(wind_rates=base.wind_rates, load_params=base.load_params,
                     comfort_rates=base.comfort_rates, set_points=z,
                     seed=base.seed, shared_comfort=True)
    samples = [cftp_sample(cfg, np.random.default_rng(
        np.random.SeedSequence([31, k]).generate_state(1)[0]))
        for k in range(3000)]
    rep = estimate_joint_cost(samples, cfg, gamma=0.1)
    analytic = finite_cost(list(z), ref_env, ref_params, 0.1, curves=ref_curves)
    assert abs(rep.total - analytic.total) <= \
        max(2.0 * rep.std_error, 0.05 * analytic.total)


def test_coalescence_fraction_nondecreasing_in_horizon():
    cfg = _ref_cftp_config()
    horizons = (40.0, 80.0, 160.0, 320.0, 640.0)
    fractions = []
    for t_hor in horizons:
        hits = 0
        for k in range(40):
            c = CftpConfig(wind_rates=cfg.wind_rates, load_params=cfg.load_params,
                           comfort_rates=cfg.comfort_rates,
                           set_points=cfg.set_points, seed=cfg.seed,
                           initial_horizon=t_hor, max_doublings=1)
            rng = np.random.default_rng(np.random.SeedSequence([9, k]).generate_state(1)[0])
            try:
                cftp_sample(c, rng)
                hits += 1
            except NoCoalescence:
                pass
        fractions.append(hits / 40)
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] == 1.0


def test_no_coalescence_reports_horizon():
    cfg = CftpConfig(wind_rates=(0.04, 0.04),
                     load_params=(LoadParams(1.0, 1.1, (50.0, 100.0)),),
                     comfort_rates=((0.02, 0.02),), set_points=(90.0,),
                     seed=0, initial_horizon=0.25, max_doublings=1)
    with pytest.raises(NoCoalescence):
        cftp_sample(cfg, np.random.default_rng(1))


def test_estimate_joint_cost_empty():
    with pytest.raises(EmptySamples):
        estimate_joint_cost([], _ref_cftp_config(), gamma=0.1)


def test_estimate_joint_cost_free_samples_zero_power():
    from zpolicy.cftp import JointSample
    cfg = _ref_cftp_config()
    samples = [JointSample(temperatures=np.array([20.0, 30.0]), wind=0,
                           comfort=np.array([1, 1]), horizon=100.0)
               for _ in range(10)]
    rep = estimate_joint_cost(samples, cfg, gamma=0.1)
    assert rep.power_cost == 0.0
    assert rep.discomfort_cost == 0.0


def test_estimate_joint_cost_se_shrinks():
    cfg = _ref_cftp_config(set_points=(60.0, 70.0, 80.0, 90.0, 100.0))
    cfg = CftpConfig(wind_rates=cfg.wind_rates,
                     load_params=(cfg.load_params[0],) * 5,
                     comfort_rates=((0.02, 0.02),) * 5,
                     set_points=cfg.set_points, seed=1)
    samples = [cftp_sample(cfg, np.random.default_rng(
        np.random.SeedSequence([3, k]).generate_state(1)[0]))
        for k in range(400)]
    small = estimate_joint_cost(samples[:100], cfg, gamma=0.1)
    big = estimate_joint_cost(samples, cfg, gamma=0.1)
    assert big.total > 0
    assert big.std_error < small.std_error
    assert big.std_error == pytest.approx(small.std_error / 2.0, rel=0.5)


def test_smooth_box_kernel_gives_linear_ramp():
    u = ThresholdDistribution.step_function([50.0], [1.0], (0.0, 100.0))
    sm = smooth_distribution(u, bandwidth=10.0, kernel="box", n_grid=2001)
    probe = np.linspace(41.0, 59.0, 19)
    expect = np.clip((probe - 40.0) / 20.0, 0.0, 1.0)
    assert np.abs(sm(probe) - expect).max() <= 0.01
    assert float(sm(30.0)) == 0.0
    assert float(sm(70.0)) == 1.0


def test_smooth_small_bandwidth_approaches_input():
    u = ThresholdDistribution.step_function([40.0, 80.0], [0.3, 1.0],
                                            (0.0, 100.0))
    sm = smooth_distribution(u, bandwidth=0.25, n_grid=4001)
    probe = np.array([20.0, 60.0, 90.0])   # continuity points
    assert np.abs(sm(probe) - u(probe)).max() <= 0.01


def test_smooth_preserves_monotonicity():
    rng = np.random.default_rng(0)
    locs = np.sort(rng.uniform(5.0, 95.0, 6))
    vals = np.sort(rng.uniform(0.0, 1.0, 6))
    u = ThresholdDistribution.step_function(locs, vals, (0.0, 100.0))
    for kernel in ("box", "triangular"):
        sm = smooth_distribution(u, bandwidth=7.0, kernel=kernel)
        assert np.all(np.diff(sm.values) >= -1e-12)


def test_sandwich_never_violated():
    # the monotone flow asserts the sandwich internally; a battery of seeds
    # exercising long horizons must never trip it
    cfg = _ref_cftp_config(set_points=(55.0, 75.0, 95.0))
    cfg = CftpConfig(wind_rates=cfg.wind_rates,
                     load_params=(cfg.load_params[0],) * 3,
                     comfort_rates=((0.02, 0.02),) * 3,
                     set_points=cfg.set_points, seed=1)
    for k in range(50):
        cftp_sample(cfg, np.random.default_rng(
            np.random.SeedSequence([77, k]).generate_state(1)[0]))
