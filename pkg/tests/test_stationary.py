import numpy as np
import pytest

from zpolicy import (
    LoadParams, build_environment, point_mass_curves, simulate,
    SimulationConfig, solve_stationary, verify_conservation,
)
from zpolicy.errors import InvalidSetPoint
from zpolicy.model import MarkovEnvironment
from zpolicy.stationary import Segment


def test_reference_instance_structure(ref_env, ref_params):
    dist = solve_stationary(100.0, ref_env, ref_params)
    # three aggregate mass locations: floor, Theta_1, set-point
    assert dist.mass_locations() == [0.0, 50.0, 100.0]
    assert abs(dist.total_mass() - 1.0) <= 1e-8
    assert verify_conservation(dist) <= 1e-8
    # four densities whose only discontinuity sits at Theta_1: the parked
    # mass there leaks into every state reachable in one transition, and
    # the drift of state 00 switches sign; state 11 has no direct inflow
    # and stays continuous
    left, right = dist.segments
    gap = np.abs(left.densities[:, -1] - right.densities[:, 0])
    assert gap[0] > 1e-4                   # forced-cooling switch in state 00
    assert gap[3] < 1e-10                  # no 00 -> 11 transition
    # inside each open interval the densities are smooth (no other jumps)
    for seg in dist.segments:
        steps = np.abs(np.diff(seg.densities, axis=1)).max()
        assert steps < 5e-4


def test_reference_boundary_fluxes(ref_env, ref_params):
    # the flux jump at each mass location equals Q times the mass there
    dist = solve_stationary(100.0, ref_env, ref_params)
    q = ref_env.generator
    left, right = dist.segments
    d_left = np.diag(left.drift)
    d_right = np.diag(right.drift)
    # floor: Q[:,2] m2 + Q[:,3] m3 = D(0+) p(0+)
    m_floor = np.array([dist.mass_at(0.0, state=s) for s in (2, 3)])
    lhs = q[:, 2] * m_floor[0] + q[:, 3] * m_floor[1]
    assert np.abs(lhs - d_left @ left.densities[:, 0]).max() <= 1e-8
    # Theta_1: Q[:,0] m = D(+) p(+) - D(-) p(-)
    m1 = dist.mass_at(50.0, state=0)
    jump = d_right @ right.densities[:, 0] - d_left @ left.densities[:, -1]
    assert np.abs(q[:, 0] * m1 - jump).max() <= 1e-8
    # set-point: Q[:,1] m = -D(z-) p(z-)
    mz = dist.mass_at(100.0, state=1)
    assert np.abs(q[:, 1] * mz + d_right @ right.densities[:, -1]).max() <= 1e-8


def test_system_counting_binary(ref_env, ref_params):
    # C^2 W + WC unknowns, (C+1) WC relations plus normalization, rank
    # short exactly one
    dist = solve_stationary(100.0, ref_env, ref_params)
    n_unknowns = 2**2 * 2 + 2 * 2
    assert dist.system_shape == ((2 + 1) * 2 * 2 + 1, n_unknowns)
    assert dist.system_rank == n_unknowns


def test_system_counting_three_levels(env3, params3):
    dist = solve_stationary(100.0, env3, params3)
    c, w = 3, 2
    n_unknowns = c**2 * w + w * c
    assert dist.system_shape == ((c + 1) * w * c + 1, n_unknowns)
    assert dist.system_rank == n_unknowns


def test_invalid_set_point(ref_env, ref_params):
    with pytest.raises(InvalidSetPoint):
        solve_stationary(101.0, ref_env, ref_params)
    with pytest.raises(InvalidSetPoint):
        solve_stationary(-1.0, ref_env, ref_params)


def test_wind_never_blows_parks_everything():
    params = LoadParams(h=1.0, c=1.1, comfort_levels=(50.0,))
    env = MarkovEnvironment(wind_generator=np.array([[0.0, 1.0], [0.0, -1.0]]),
                            comfort_generator=np.zeros((1, 1)))
    dist = solve_stationary(50.0, env, params)
    assert dist.mass_at(50.0) == pytest.approx(1.0, abs=1e-10)
    assert dist.densities.max() <= 1e-10


def test_z_zero_pins_load_at_floor(ref_env, ref_params):
    dist = solve_stationary(0.0, ref_env, ref_params)
    assert dist.mass_at(0.0) == pytest.approx(1.0, abs=1e-12)
    assert dist.density_mass() == 0.0


def test_conservation_detects_perturbation(ref_env, ref_params):
    dist = solve_stationary(100.0, ref_env, ref_params)
    seg = dist.segments[0]
    bumped = seg.densities.copy()
    bumped[0] += 0.1
    perturbed = Segment(x=seg.x, densities=bumped, drift=seg.drift,
                        integral=seg.integral)
    forged = type(dist)(z=dist.z, env=dist.env, params=dist.params,
                        segments=(perturbed, dist.segments[1]),
                        point_masses=dist.point_masses,
                        system_shape=dist.system_shape,
                        system_rank=dist.system_rank)
    assert verify_conservation(forged) > 1e-3


def test_conservation_zero_for_degenerate(ref_env, ref_params):
    dist = solve_stationary(0.0, ref_env, ref_params)
    assert verify_conservation(dist) == 0.0


def test_point_mass_curves_reference(ref_env, ref_params):
    zg = np.linspace(0.5, 100.0, 201)
    curves = point_mass_curves(ref_env, ref_params, zg)
    # subadditivity: the three mass groups never exceed total probability
    total = curves.delta_z + curves.delta_theta.sum(axis=0)
    assert np.all(total <= 1.0 + 1e-9)
    assert np.all(curves.delta_z >= -1e-12)
    assert np.all(curves.delta_theta >= -1e-12)
    # below Theta_1 the set-point binds first: no mass at Theta_1
    assert np.abs(curves.delta_theta[0][zg <= 50.0]).max() <= 1e-12


def test_point_mass_curves_parallel_matches_serial(ref_env, ref_params):
    zg = np.linspace(55.0, 100.0, 10)
    serial = point_mass_curves(ref_env, ref_params, zg, workers=1)
    parallel = point_mass_curves(ref_env, ref_params, zg, workers=4)
    assert np.array_equal(serial.delta_z, parallel.delta_z)
    assert np.array_equal(serial.phi, parallel.phi)


def test_point_mass_curve_at_zero(ref_env, ref_params):
    curves = point_mass_curves(ref_env, ref_params, np.array([1e-9, 50.0]))
    pi = ref_env.stationary()
    wind_on = pi[2] + pi[3]
    assert curves.delta_z[0] == pytest.approx(1.0 - wind_on, abs=1e-6)


def test_curves_continuous_between_breakpoints(ref_env, ref_params):
    zg = np.concatenate([np.linspace(30.0, 50.0, 41),
                         np.linspace(50.5, 100.0, 100)])
    curves = point_mass_curves(ref_env, ref_params, zg)
    for arr in (curves.delta_z, curves.delta_theta[0], curves.phi):
        scale = max(arr.max() - arr.min(), 1e-12)
        below = arr[zg <= 50.0]
        above = arr[zg > 50.0]
        # steps of a continuous curve shrink with the grid; a jump would not
        assert np.abs(np.diff(below)).max() < 0.05 * scale
        assert np.abs(np.diff(above)).max() < 0.05 * scale


def test_low_set_point_mass_matches_simulation(ref_env, ref_params):
    # set-point below Theta_1: the load parks at z in both comfort states;
    # occupation fractions from a long simulation agree with the solver
    z = 40.0
    dist = solve_stationary(z, ref_env, ref_params)
    cfg = SimulationConfig(n_loads=1, horizon_jumps=1000000, seed=21,
                           set_points=np.array([z]), record_occupation=True)
    res = simulate(cfg, ref_env, ref_params, gamma=0.0)
    emp_at_z = sum(v for (load, loc), v in res.dwell_fractions.items()
                   if abs(loc - z) < 1e-6)
    assert emp_at_z == pytest.approx(dist.mass_at(z), abs=0.02)
    assert dist.mass_at(50.0) == 0.0


def test_analytic_cdf_matches_long_simulation(ref_env, ref_params):
    dist = solve_stationary(100.0, ref_env, ref_params)
    cfg = SimulationConfig(n_loads=1, horizon_jumps=400000, seed=2,
                           set_points=np.array([100.0]), record_occupation=True)
    res = simulate(cfg, ref_env, ref_params, gamma=0.0)
    edges = res.occupation_edges
    assert np.abs(res.occupation_cdf[0] - dist.cdf(edges)).max() <= 0.02
