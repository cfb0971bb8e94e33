"""Stationary distribution of a single load under a threshold policy.

The load temperature together with the discrete environment state is a
piecewise-deterministic Markov process.  Off the parking points its
stationary state densities p(x) (one per environment state) satisfy the
linear ODE system

    D(x) dp/dx = Q p(x),

with D(x) the diagonal drift matrix, plus point masses at the floor x=0
(one per wind-on state and comfort level), at every comfort level below
the set-point (wind off, that comfort level active) and at the set-point
itself (wind off, comfort levels at or above it).  Each mass is tied to a
unique environment state, and balances the flux jump of the densities:

    Q[:, s] * mass_s  =  D(x+) p(x+) - D(x-) p(x-)

at its location (one-sided at 0 and at the set-point).  Together with
normalization this yields a single global linear system; the conservation
law 1^T D(x) p(x) = 0 makes exactly one of its equations redundant.

D is constant and invertible on each open interval between breakpoints,
so densities propagate by matrix exponentials of D^-1 Q and the assembled
system is exact up to round-off; there is no shooting or ODE stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidSetPoint, SingularSystem
from .model import LoadParams, MarkovEnvironment

__all__ = [
    "StationaryDistribution",
    "Segment",
    "solve_stationary",
    "verify_conservation",
    "point_mass_curves",
    "PointMassCurves",
]

_NEG_DENSITY_TOL = 1e-10


@dataclass(frozen=True)
class Segment:
    """Densities on one open interval between breakpoints."""

    x: np.ndarray              # grid including both endpoints
    densities: np.ndarray      # shape (n_states, len(x))
    drift: np.ndarray          # diagonal of D on this interval, shape (n_states,)
    integral: np.ndarray       # exact per-state integral over the interval


@dataclass(frozen=True)
class StationaryDistribution:
    z: float
    env: MarkovEnvironment
    params: LoadParams
    segments: tuple[Segment, ...]
    point_masses: dict            # (location, state_index) -> mass
    system_shape: tuple[int, int]  # (n_equations, n_unknowns) of the assembled system
    system_rank: int

    @property
    def grid(self) -> np.ndarray:
        """Flattened grid; interior breakpoints appear once per adjacent segment."""
        if not self.segments:
            return np.array([self.z])
        return np.concatenate([s.x for s in self.segments])

    @property
    def densities(self) -> np.ndarray:
        if not self.segments:
            return np.zeros((self.env.n_states, 1))
        return np.concatenate([s.densities for s in self.segments], axis=1)

    def density_mass(self) -> float:
        return sum(float(s.integral.sum()) for s in self.segments)

    def total_mass(self) -> float:
        return self.density_mass() + sum(self.point_masses.values())

    def mass_at(self, location: float, state: int | None = None, atol: float = 1e-9) -> float:
        tot = 0.0
        for (loc, s), m in self.point_masses.items():
            if abs(loc - location) <= atol and (state is None or s == state):
                tot += m
        return tot

    def mass_locations(self, atol: float = 1e-9) -> list[float]:
        locs: list[float] = []
        for (loc, _s), m in sorted(self.point_masses.items()):
            if m <= atol:
                continue
            if not any(abs(loc - l0) <= atol for l0 in locs):
                locs.append(loc)
        return locs

    def cdf(self, x) -> np.ndarray:
        """P(X <= x) mixing densities and point masses (right-continuous)."""
        xq = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(xq)
        for seg in self.segments:
            total = seg.densities.sum(axis=0)
            cum = np.concatenate([[0.0], np.cumsum(
                0.5 * (total[1:] + total[:-1]) * np.diff(seg.x))])
            lo, hi = seg.x[0], seg.x[-1]
            idx = np.clip(np.searchsorted(seg.x, xq, side="right") - 1, 0, len(seg.x) - 1)
            inside = np.clip(xq, lo, hi)
            frac = cum[idx] + 0.5 * (np.interp(inside, seg.x, total) + total[idx]) * (inside - seg.x[idx])
            out += np.where(xq < lo, 0.0, np.where(xq >= hi, cum[-1], frac))
        for (loc, _s), m in self.point_masses.items():
            out += np.where(xq >= loc - 1e-9, m, 0.0)
        return out if np.ndim(x) else out  # array in, array out

    def tail_above(self, theta: float, states=None) -> float:
        """Integrated density mass strictly above ``theta`` for the given states."""
        tot = 0.0
        for seg in self.segments:
            if seg.x[-1] <= theta + 1e-12:
                continue
            sel = seg.densities if states is None else seg.densities[list(states)]
            dens = sel.sum(axis=0)
            if seg.x[0] >= theta - 1e-12:
                tot += float(np.trapezoid(dens, seg.x))
            else:
                mask = seg.x >= theta
                xs = np.concatenate([[theta], seg.x[mask]])
                ds = np.concatenate([[np.interp(theta, seg.x, dens)], dens[mask]])
                tot += float(np.trapezoid(ds, xs))
        return tot


def _drift_diagonal(env: MarkovEnvironment, params: LoadParams, z: float,
                    x_mid: float) -> np.ndarray:
    """Diagonal of D(x) at a point x_mid in the open interval containing it."""
    rates = params.wind_cooling_rates(env.n_wind)
    d = np.empty(env.n_states)
    for s in range(env.n_states):
        i, j = env.split_index(s)
        theta = params.comfort_levels[j]
        if x_mid > theta:
            d[s] = -params.c          # forced cooling above the active level
        elif i == 0:
            d[s] = params.h
        else:
            d[s] = -rates[i]
    return d


def _integral_expm(m: np.ndarray, length: float) -> np.ndarray:
    """Integral of expm(m*s) ds over [0, length] via the augmented block trick."""
    n = m.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = m
    blk[:n, n:] = np.eye(n)
    return expm(blk * length)[:n, n:]


def _propagate(m: np.ndarray, p_left: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Densities expm(m*(x-x0)) @ p_left along a local grid xs (xs[0] == 0)."""
    try:
        lam, vec = np.linalg.eig(m)
        coef = np.linalg.solve(vec, p_left)
        vals = np.real(vec @ (np.exp(np.outer(lam, xs)) * coef[:, None]))
        check = expm(m * xs[-1]) @ p_left
        if np.max(np.abs(vals[:, -1] - check)) <= 1e-9 * max(1.0, np.max(np.abs(check))):
            return vals
    except np.linalg.LinAlgError:
        pass
    return np.column_stack([expm(m * s) @ p_left for s in xs])


def solve_stationary(z: float, env: MarkovEnvironment, params: LoadParams,
                     grid_step: float | None = None) -> StationaryDistribution:
    """Solve the stationary density/mass system for set-point ``z``.

    Raises InvalidSetPoint for z outside [0, Theta_C] and SingularSystem if
    the assembled system loses rank beyond the single conservation
    redundancy or produces significantly negative densities.
    """
    theta_top = params.theta_max
    if not (0.0 <= z <= theta_top):
        raise InvalidSetPoint(f"z={z} outside [0, {theta_top}]")
    if grid_step is None:
        grid_step = theta_top / 400.0

    n_states = env.n_states
    n_wind, n_comfort = env.n_wind, env.n_comfort
    q = env.generator
    levels = params.comfort_levels

    # environment states the chain never visits (e.g. a stuck wind state)
    # destabilize the transfer matrices; the support is closed under Q, so
    # restrict the solve to it and report zeros elsewhere
    pi_env = env.stationary()
    support = np.where(pi_env > 1e-13)[0]

    if z == 0.0:
        # Degenerate policy: the load is pinned at the floor in every state.
        pi = env.stationary()
        masses = {(0.0, s): float(pi[s]) for s in range(n_states) if pi[s] > 0}
        return StationaryDistribution(z=z, env=env, params=params, segments=(),
                                      point_masses=masses,
                                      system_shape=(n_states + 1, n_states),
                                      system_rank=n_states)

    breakpoints = [0.0] + [t for t in levels if t < z] + [z]
    n_intervals = len(breakpoints) - 1
    n_sup = len(support)
    q_sup = q[np.ix_(support, support)]
    pos = {int(s): k for k, s in enumerate(support)}

    floor_states = [env.state_index(i, j)
                    for i in range(1, n_wind) for j in range(n_comfort)
                    if env.state_index(i, j) in pos]
    # parking mass of state (0, j) sits at min(z, Theta_j)
    park_states = [env.state_index(0, j) for j in range(n_comfort)
                   if env.state_index(0, j) in pos]
    park_locs = {s: min(z, levels[env.split_index(s)[1]]) for s in park_states}

    n_masses = len(floor_states) + len(park_states)
    n_unknowns = n_intervals * n_sup + n_masses
    mass_offset = n_intervals * n_sup

    mass_index = {}
    for k, s in enumerate(floor_states):
        mass_index[(0.0, s)] = mass_offset + k
    for j, s in enumerate(park_states):
        mass_index[(park_locs[s], s)] = mass_offset + len(floor_states) + j

    drifts, transfers, integrals, mats = [], [], [], []
    for k in range(n_intervals):
        lo, hi = breakpoints[k], breakpoints[k + 1]
        d = _drift_diagonal(env, params, z, 0.5 * (lo + hi))[support]
        m = q_sup / d[:, None]         # D^-1 Q row-scaled
        drifts.append(d)
        mats.append(m)
        transfers.append(expm(m * (hi - lo)))
        integrals.append(_integral_expm(m, hi - lo))

    n_equations = (n_intervals + 1) * n_sup + 1
    a = np.zeros((n_equations, n_unknowns))
    b = np.zeros(n_equations)

    def pcols(k: int) -> slice:
        return slice(k * n_sup, (k + 1) * n_sup)

    row = 0
    # floor: sum_s Q[:, s] mass_s = D(0+) p(0+)
    a[row:row + n_sup, pcols(0)] = -np.diag(drifts[0])
    for s in floor_states:
        a[row:row + n_sup, mass_index[(0.0, s)]] = q_sup[:, pos[s]]
    row += n_sup
    # interior breakpoints: Q[:, s] mass = D(b+) p(b+) - D(b-) p(b-)
    for k in range(n_intervals - 1):
        bpt = breakpoints[k + 1]
        a[row:row + n_sup, pcols(k)] = np.diag(drifts[k]) @ transfers[k]
        a[row:row + n_sup, pcols(k + 1)] = -np.diag(drifts[k + 1])
        for s in park_states:
            if abs(park_locs[s] - bpt) < 1e-12:
                a[row:row + n_sup, mass_index[(park_locs[s], s)]] = q_sup[:, pos[s]]
        row += n_sup
    # top: Q[:, s] mass = -D(z-) p(z-)
    a[row:row + n_sup, pcols(n_intervals - 1)] = \
        np.diag(drifts[-1]) @ transfers[-1]
    for s in park_states:
        if abs(park_locs[s] - z) < 1e-12:
            a[row:row + n_sup, mass_index[(park_locs[s], s)]] = q_sup[:, pos[s]]
    row += n_sup
    # normalization
    for k in range(n_intervals):
        a[row, pcols(k)] = np.ones(n_sup) @ integrals[k]
    a[row, mass_offset:] = 1.0
    b[row] = 1.0

    sol, _res, rank, _sv = np.linalg.lstsq(a, b, rcond=None)
    if rank < n_unknowns:
        raise SingularSystem(
            f"rank {rank} < {n_unknowns} unknowns (system {a.shape})")
    residual = float(np.max(np.abs(a @ sol - b)))
    if residual > 1e-7:
        raise SingularSystem(f"inconsistent stationary system, residual {residual:.2e}")

    masses = {}
    for (loc, s), col in mass_index.items():
        m = float(sol[col])
        if m < -_NEG_DENSITY_TOL:
            raise SingularSystem(f"negative point mass {m:.2e} at ({loc}, state {s})")
        masses[(loc, s)] = max(m, 0.0)

    segments = []
    for k in range(n_intervals):
        lo, hi = breakpoints[k], breakpoints[k + 1]
        n_pts = max(int(np.ceil((hi - lo) / grid_step)) + 1, 2)
        xs = np.linspace(0.0, hi - lo, n_pts)
        dens_sup = _propagate(mats[k], sol[pcols(k)], xs)
        if dens_sup.min() < -_NEG_DENSITY_TOL:
            raise SingularSystem(
                f"negative density {dens_sup.min():.2e} on interval [{lo}, {hi}]")
        dens = np.zeros((n_states, len(xs)))
        dens[support] = np.clip(dens_sup, 0.0, None)
        integ = np.zeros(n_states)
        integ[support] = integrals[k] @ sol[pcols(k)]
        drift_full = _drift_diagonal(env, params, z,
                                     0.5 * (breakpoints[k] + breakpoints[k + 1]))
        segments.append(Segment(x=lo + xs, densities=dens,
                                drift=drift_full, integral=integ))

    dist = StationaryDistribution(z=z, env=env, params=params,
                                  segments=tuple(segments), point_masses=masses,
                                  system_shape=a.shape, system_rank=int(rank))
    # round-off from the clamp above is renormalized away
    total = dist.total_mass()
    if abs(total - 1.0) > 1e-6:
        raise SingularSystem(f"total mass {total} far from 1")
    if abs(total - 1.0) > 1e-12:
        scale = 1.0 / total
        segments = tuple(Segment(x=s.x, densities=s.densities * scale, drift=s.drift,
                                 integral=s.integral * scale)
                         for s in segments)
        masses = {k: v * scale for k, v in masses.items()}
        dist = StationaryDistribution(z=z, env=env, params=params,
                                      segments=segments, point_masses=masses,
                                      system_shape=a.shape, system_rank=int(rank))
    return dist


def verify_conservation(dist: StationaryDistribution) -> float:
    """Max over the grid of |1^T D(x) p(x)| (exactly 0 for the true solution)."""
    worst = 0.0
    for seg in dist.segments:
        flux = seg.drift @ seg.densities
        worst = max(worst, float(np.max(np.abs(flux))))
    return worst


@dataclass(frozen=True)
class PointMassCurves:
    """Point-mass and occupation curves as functions of the set-point z.

    delta_z        : total mass parked exactly at the set-point
    delta_theta    : per comfort level j, mass parked at Theta_j (zero once
                     the set-point binds first, i.e. for z <= Theta_j)
    tail           : P(X > Theta_1), all states
    tail_wind_off  : P(X > active Theta, wind off) - the grid-(h+c) draw event
    tail_intermediate : per intermediate wind state i in 1..W-2, P(X above the
                     active comfort level in that wind state)
    phi            : discomfort integral E[((X - Theta_M)^+)^2]
    """

    z_grid: np.ndarray
    delta_z: np.ndarray
    delta_theta: np.ndarray       # shape (n_comfort, len(z_grid))
    tail: np.ndarray
    tail_wind_off: np.ndarray
    tail_intermediate: np.ndarray  # shape (max(n_wind-2, 0), len(z_grid))
    phi: np.ndarray
    env: MarkovEnvironment
    params: LoadParams

    @property
    def delta_z_plus_theta(self) -> np.ndarray:
        return self.delta_z + self.delta_theta.sum(axis=0)


def _violation_tail(dist: StationaryDistribution, env: MarkovEnvironment,
                    params: LoadParams, wind: int) -> float:
    """P(X above the active comfort level) restricted to one wind state."""
    tot = 0.0
    for j, theta in enumerate(params.comfort_levels):
        s = env.state_index(wind, j)
        tot += dist.tail_above(theta, states=[s])
    return tot


def _phi_value(dist: StationaryDistribution, env: MarkovEnvironment,
               params: LoadParams) -> float:
    """Discomfort integral sum_j int ((x - Theta_j)^+)^2 p_{.j}(x) dx."""
    tot = 0.0
    for seg in dist.segments:
        for j, theta in enumerate(params.comfort_levels):
            states = [env.state_index(i, j) for i in range(env.n_wind)]
            dens = seg.densities[states].sum(axis=0)
            excess = np.clip(seg.x - theta, 0.0, None)
            tot += float(np.trapezoid(excess * excess * dens, seg.x))
    return tot


def point_mass_curves(env: MarkovEnvironment, params: LoadParams, z_grid,
                      grid_step: float | None = None,
                      workers: int = 1) -> PointMassCurves:
    """One stationary solve per set-point in ``z_grid``; returns the mass curves.

    Solves for distinct z are independent; ``workers`` > 1 runs them in a
    thread pool (the heavy lifting is numpy/LAPACK).
    """
    z_grid = np.asarray(z_grid, dtype=float)
    if np.any(np.diff(z_grid) <= 0):
        raise ValueError("z_grid must be strictly ascending")

    n_c = env.n_comfort
    n_int = max(env.n_wind - 2, 0)

    def one(z: float):
        dist = solve_stationary(z, env, params, grid_step=grid_step)
        # parked exactly at the set-point: wind-off states only (under wind
        # the load is held at the floor, not at z)
        dz = sum(dist.mass_at(z, state=env.state_index(0, j))
                 for j in range(n_c))
        dth = np.zeros(n_c)
        for j, theta in enumerate(params.comfort_levels):
            if theta < z - 1e-12:
                dth[j] = dist.mass_at(theta, state=env.state_index(0, j))
        tail = dist.tail_above(params.comfort_levels[0])
        tail_off = _violation_tail(dist, env, params, wind=0)
        tail_mid = np.array([_violation_tail(dist, env, params, wind=i)
                             for i in range(1, env.n_wind - 1)])
        return dz, dth, tail, tail_off, tail_mid, _phi_value(dist, env, params)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, z_grid))
    else:
        rows = [one(z) for z in z_grid]

    return PointMassCurves(
        z_grid=z_grid,
        delta_z=np.array([r[0] for r in rows]),
        delta_theta=np.array([r[1] for r in rows]).T,
        tail=np.array([r[2] for r in rows]),
        tail_wind_off=np.array([r[3] for r in rows]),
        tail_intermediate=(np.array([r[4] for r in rows]).T
                           if n_int else np.zeros((0, len(z_grid)))),
        phi=np.array([r[5] for r in rows]),
        env=env, params=params,
    )
