"""Two-load finite-horizon HJB solver for the stochastic-threshold-variation
model, plus the coolest-first heuristic it motivates.

State: (x1, x2) on a square grid, times a discrete environment index over
wind x comfort (the comfort level matters because a down-switch strands
loads above the new limit, where grid power is forced at the maximum M).
Backward induction with an explicit monotone scheme: every candidate
control is scored with one-sided differences chosen by its own drift sign,
and the cell takes the cheapest candidate.  The admissible set reflects at
the boundaries (no cooling below 0, mandatory holding power at the active
comfort level) and forces P = M above it.

The minimizing structure matches the closed-form argmin of the quadratic
Hamiltonian: wind goes entirely to the load with the larger value-gradient
component, and free grid power is the clipped half-gradient on a single
load.  Regions where the cooler load receives the wind are the
desynchronizing part of the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnstableScheme
from .model import LoadParams, MarkovEnvironment, PowerDraw

__all__ = [
    "ValueGrid",
    "AllocationPolicy",
    "solve_hjb",
    "classify_policy",
    "coolest_first_heuristic",
    "simulate_policy",
]


@dataclass(frozen=True)
class ValueGrid:
    x: np.ndarray                    # shared axis for both loads
    values: np.ndarray               # (n_env, nx, nx) cost-to-go at t=0
    horizon: float
    time_step: float


@dataclass(frozen=True)
class AllocationPolicy:
    x: np.ndarray
    wind: np.ndarray                 # (n_env, nx, nx, 2) wind split
    grid: np.ndarray                 # (n_env, nx, nx, 2) grid power incl. forced
    wind_power: float
    forced_power: float


def _one_sided_gradients(v: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forward/backward differences along each axis, one-sided inward at edges."""
    fwd1 = np.empty_like(v)
    fwd1[:-1, :] = (v[1:, :] - v[:-1, :]) / dx
    fwd1[-1, :] = fwd1[-2, :]
    bwd1 = np.empty_like(v)
    bwd1[1:, :] = (v[1:, :] - v[:-1, :]) / dx
    bwd1[0, :] = bwd1[1, :]
    fwd2 = np.empty_like(v)
    fwd2[:, :-1] = (v[:, 1:] - v[:, :-1]) / dx
    fwd2[:, -1] = fwd2[:, -2]
    bwd2 = np.empty_like(v)
    bwd2[:, 1:] = (v[:, 1:] - v[:, :-1]) / dx
    bwd2[:, 0] = bwd2[:, 1]
    return fwd1, bwd1, fwd2, bwd2


def solve_hjb(env: MarkovEnvironment, params: LoadParams, horizon: float,
              grid_step: float, time_step: float,
              wind_power: float | None = None,
              forced_power: float | None = None) -> tuple[ValueGrid, AllocationPolicy]:
    """Backward induction on the two-load STV control problem.

    Raises UnstableScheme unless time_step <= grid_step / (h + c + W).
    """
    h, c = params.h, params.c
    w_pow = wind_power if wind_power is not None else h + c
    m_pow = forced_power if forced_power is not None else h + c
    if time_step > grid_step / (h + c + w_pow):
        raise UnstableScheme(
            f"time_step {time_step} > grid_step/(h+c+W) = {grid_step / (h + c + w_pow)}")

    top = params.theta_max
    x = np.arange(0.0, top + 0.5 * grid_step, grid_step)
    nx = len(x)
    n_env = env.n_states
    q = env.generator
    x1 = x[:, None] * np.ones((1, nx))
    x2 = np.ones((nx, 1)) * x[None, :]
    cap = h + c                                   # per-load total power cap

    n_steps = int(np.ceil(horizon / time_step))
    v = np.zeros((n_env, nx, nx))

    def step(v_next: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v_new = np.empty_like(v_next)
        wind_split = np.zeros((n_env, nx, nx, 2))
        grid_power = np.zeros((n_env, nx, nx, 2))
        for e in range(n_env):
            iw, jc = env.split_index(e)
            theta = params.comfort_levels[jc]
            ve = v_next[e]
            f1p, f1m, f2p, f2m = _one_sided_gradients(ve, grid_step)

            forced1 = x1 > theta + 1e-12
            forced2 = x2 > theta + 1e-12
            at_top1 = np.isclose(x1, theta) | np.isclose(x1, top)
            at_top2 = np.isclose(x2, theta) | np.isclose(x2, top)
            at_floor1 = x1 <= 1e-12
            at_floor2 = x2 <= 1e-12

            best = None
            wind_orders = [(0, 1), (1, 0)] if iw >= 1 else [(0, 1)]
            for order in wind_orders:
                # wind allocation with boundary caps, first-listed load first
                pw = [np.zeros((nx, nx)), np.zeros((nx, nx))]
                if iw >= 1:
                    remaining = np.full((nx, nx), w_pow)
                    for li in order:
                        cap_i = np.where([at_floor1, at_floor2][li], h, cap)
                        take = np.minimum(remaining, cap_i)
                        pw[li] = take
                        remaining = remaining - take
                # forced grid power
                base = [np.where(forced1, np.clip(m_pow - pw[0], 0.0, None), 0.0),
                        np.where(forced2, np.clip(m_pow - pw[1], 0.0, None), 0.0)]
                # mandatory holding power at the active top (f <= 0 there)
                lb = [np.where(at_top1 & ~forced1, np.clip(h - pw[0], 0.0, None), 0.0),
                      np.where(at_top2 & ~forced2, np.clip(h - pw[1], 0.0, None), 0.0)]
                g_base = [np.where(forced1, base[0], lb[0]),
                          np.where(forced2, base[1], lb[1])]
                f_total = g_base[0] + g_base[1]

                # free grid candidates: nothing extra, or the clipped
                # half-gradient total assigned to one load
                candidates = [(np.zeros((nx, nx)), np.zeros((nx, nx)))]
                for li, grad_m in ((0, f1m), (1, f2m)):
                    room = np.clip(cap - pw[li] - g_base[li], 0.0, None)
                    room = np.where([forced1, forced2][li], 0.0, room)
                    room = np.where([at_floor1, at_floor2][li],
                                    np.clip(h - pw[li] - g_base[li], 0.0, None), room)
                    extra = np.clip(0.5 * grad_m - f_total, 0.0, room)
                    g1 = extra if li == 0 else np.zeros((nx, nx))
                    g2 = extra if li == 1 else np.zeros((nx, nx))
                    candidates.append((g1, g2))

                for (e1, e2) in candidates:
                    g1 = g_base[0] + e1
                    g2 = g_base[1] + e2
                    p1 = pw[0] + g1
                    p2 = pw[1] + g2
                    # floor: never cool below 0
                    p1 = np.where(at_floor1, np.minimum(p1, h), p1)
                    p2 = np.where(at_floor2, np.minimum(p2, h), p2)
                    f1 = h - p1
                    f2 = h - p2
                    f1 = np.where(at_top1 & (f1 > 0) & ~forced1, 0.0, f1)
                    f2 = np.where(at_top2 & (f2 > 0) & ~forced2, 0.0, f2)
                    ham = (g1 + g2) ** 2 \
                        + np.maximum(f1, 0.0) * f1p + np.minimum(f1, 0.0) * f1m \
                        + np.maximum(f2, 0.0) * f2p + np.minimum(f2, 0.0) * f2m
                    if best is None:
                        best = (ham.copy(), pw[0].copy(), pw[1].copy(), g1.copy(), g2.copy())
                    else:
                        better = ham < best[0]
                        for arr, new in zip(best, (ham, pw[0], pw[1], g1, g2)):
                            np.copyto(arr, new, where=better)

            ham_best, pw1, pw2, g1b, g2b = best
            coupling = np.zeros((nx, nx))
            for e2 in range(n_env):
                if e2 != e:
                    coupling += q[e2, e] * (v_next[e2] - ve)
            v_new[e] = ve + time_step * (ham_best + coupling)
            wind_split[e, :, :, 0] = pw1
            wind_split[e, :, :, 1] = pw2
            grid_power[e, :, :, 0] = g1b
            grid_power[e, :, :, 1] = g2b
        return v_new, wind_split, grid_power

    wind_split = grid_power = None
    for _ in range(n_steps):
        v, wind_split, grid_power = step(v)

    grid_obj = ValueGrid(x=x, values=v, horizon=n_steps * time_step,
                         time_step=time_step)
    policy = AllocationPolicy(x=x, wind=wind_split, grid=grid_power,
                              wind_power=w_pow, forced_power=m_pow)
    return grid_obj, policy


def classify_policy(policy: AllocationPolicy, values: ValueGrid,
                    params: LoadParams, env: MarkovEnvironment) -> np.ndarray:
    """Label each cell synchronizing (-1), neutral (0) or desynchronizing (+1)
    by the sign of d|x1 - x2|/dt under the extracted policy."""
    h = params.h
    x = policy.x
    nx = len(x)
    labels = np.zeros((env.n_states, nx, nx), dtype=int)
    x1 = x[:, None] * np.ones((1, nx))
    x2 = np.ones((nx, 1)) * x[None, :]
    for e in range(env.n_states):
        p1 = policy.wind[e, :, :, 0] + policy.grid[e, :, :, 0]
        p2 = policy.wind[e, :, :, 1] + policy.grid[e, :, :, 1]
        f1 = h - p1
        f2 = h - p2
        gap_drift = np.sign(x1 - x2) * (f1 - f2)
        labels[e] = np.where(np.isclose(x1, x2), 0,
                             np.where(gap_drift > 1e-9, 1,
                                      np.where(gap_drift < -1e-9, -1, 0)))
    return labels


def coolest_first_heuristic(x, wind: int, comfort: int, params: LoadParams,
                            activation_threshold: float,
                            wind_power: float | None = None) -> list[PowerDraw]:
    """Allocate wind to the coolest load when the ensemble runs hot.

    With ample wind every load cools at full power.  When wind is scarce
    and the mean temperature exceeds the activation threshold, the entire
    wind budget goes to the coolest load still above the floor (hedging the
    next comfort down-switch); otherwise hottest-first.  Loads above the
    active comfort level always get forced cooling, grid-supplemented.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    h, c = params.h, params.c
    theta = params.comfort_levels[comfort]
    w_avail = (wind_power if wind_power is not None else h + c) if wind >= 1 else 0.0
    need = np.where(x > 1e-12, h + c, h)

    wind_alloc = np.zeros(n)
    if w_avail >= need.sum():
        wind_alloc[:] = need
    elif w_avail > 0:
        if x.mean() > activation_threshold:
            order = np.argsort(x, kind="stable")            # coolest first
        else:
            order = np.argsort(-x, kind="stable")           # hottest first
        rem = w_avail
        for i in order:
            take = min(rem, need[i])
            wind_alloc[i] = take
            rem -= take
            if rem <= 0:
                break
    grid_alloc = np.where(x > theta + 1e-12,
                          np.clip(h + c - wind_alloc, 0.0, None), 0.0)
    return [PowerDraw(wind_power=float(wind_alloc[i]), grid_power=float(grid_alloc[i]))
            for i in range(n)]


def simulate_policy(policy_fn, env: MarkovEnvironment, params: LoadParams,
                    n_loads: int, horizon_jumps: int, seed: int,
                    dt_max: float = 0.05, initial=None) -> dict:
    """Small fixed-step ensemble integrator for allocation-policy plug-ins.

    policy_fn(x, wind, comfort, params) -> list[PowerDraw].  Returns the
    time series of total grid power and its peak; intended for qualitative
    policy comparisons, not exact cost evaluation.
    """
    from .simulate import sample_environment_path

    rng = np.random.default_rng(seed)
    path = sample_environment_path(env, horizon_jumps, rng)
    x = np.array(initial, dtype=float) if initial is not None \
        else np.zeros(n_loads)
    times, grid_draw = [], []
    t = 0.0
    for k in range(len(path.start_times)):
        wind = int(path.wind[k])
        comfort = int(path.comfort[k])
        remaining = float(path.durations[k])
        theta = params.comfort_levels[comfort]
        while remaining > 1e-12:
            dt = min(dt_max, remaining)
            draws = policy_fn(x, wind, comfort, params)
            total_grid = sum(d.grid_power for d in draws)
            p = np.array([d.wind_power + d.grid_power for d in draws])
            x = np.clip(x + (params.h - p) * dt, 0.0, params.theta_max)
            times.append(t)
            grid_draw.append(total_grid)
            t += dt
            remaining -= dt
    grid_draw = np.array(grid_draw)
    return {"t": np.array(times), "grid_power": grid_draw,
            "peak_grid_power": float(grid_draw.max(initial=0.0))}
