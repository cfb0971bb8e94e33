"""Perfect sampling of the joint stationary state for heterogeneous loads
by monotone coupling from the past.

Loads share the wind process but own independent comfort-level chains and
physical parameters.  Given the environment path, each temperature
evolves by a deterministic monotone flow, so the coupling needs no
per-load randomness: the top chain starts every load at its highest
comfort level, the bottom chain at zero, and both replay the identical
environment from time -T, doubling T until the two flows meet at time 0.

The environment chains are birth-death and hence reversible, so the path
seen backward from a stationary time is again a chain with the same
generator: the state at time 0 is drawn from the stationary law and the
path is extended into the past by ordinary forward simulation in reversed
time.  Doubling the horizon prepends to the cached path and never alters
the randomness already used, which is exactly the replay discipline
coupling from the past requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostReport
from .distributions import ThresholdDistribution
from .errors import EmptySamples, NoCoalescence
from .model import LoadParams

__all__ = [
    "CftpConfig",
    "JointSample",
    "cftp_sample",
    "estimate_joint_cost",
    "smooth_distribution",
    "optimize_thresholds",
]

_COALESCE_TOL = 1e-9


@dataclass(frozen=True)
class CftpConfig:
    wind_rates: tuple[float, float]              # (q0 off->on, q1 on->off)
    load_params: tuple[LoadParams, ...]          # one per load
    comfort_rates: tuple                         # one rate spec per load
    set_points: tuple[float, ...]
    seed: int
    initial_horizon: float | None = None
    max_doublings: int = 24
    shared_comfort: bool = False                 # one comfort chain drives all

    @property
    def n_loads(self) -> int:
        return len(self.load_params)


@dataclass(frozen=True)
class JointSample:
    temperatures: np.ndarray
    wind: int
    comfort: np.ndarray          # per-load comfort level index
    horizon: float               # past horizon that achieved coalescence


class _BackwardChain:
    """Stationary chain extended lazily into the past.

    jump_ages[k] is the age (time before 0) of the k-th jump looking
    backward; states[k] is the state on the age interval
    (jump_ages[k-1], jump_ages[k]], with states[0] the state at time 0.
    """

    def __init__(self, generator: np.ndarray, rng: np.random.Generator):
        self.gen = generator
        self.rng = rng
        n = generator.shape[0]
        a = np.vstack([generator, np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        self.states = [int(rng.choice(n, p=pi))]
        self.jump_ages = [0.0]

    def extend(self, age: float):
        while self.jump_ages[-1] < age:
            s = self.states[-1]
            rate = -self.gen[s, s]
            if rate <= 0:
                self.jump_ages.append(np.inf)
                self.states.append(s)
                break
            self.jump_ages.append(self.jump_ages[-1] + self.rng.exponential(1.0 / rate))
            probs = np.clip(self.gen[:, s], 0.0, None)
            probs[s] = 0.0
            probs /= probs.sum()
            self.states.append(int(self.rng.choice(len(probs), p=probs)))

    def state_at_age(self, age: float) -> int:
        """State on the age interval [jump_ages[k], jump_ages[k+1]).

        states[k] holds from the k-th backward jump (age jump_ages[k])
        until the next one further in the past.
        """
        idx = int(np.searchsorted(self.jump_ages, age, side="left")) - 1
        return self.states[max(min(idx, len(self.states) - 1), 0)]

    def ages_in(self, horizon: float) -> list[float]:
        return [a for a in self.jump_ages[1:] if a < horizon and np.isfinite(a)]


def _advance_scalar(x: float, z: float, wind: int, theta: float,
                    params: LoadParams, dt: float) -> float:
    """Exact single-load flow over one constant-environment window.

    Monotone in x: cooling targets the hold point min(z, theta) from above
    (so extremal chains contract onto it), heating parks there from below.
    """
    h, c = params.h, params.c
    park = min(z, theta)
    if wind == 0:
        if x > park:
            return max(park, x - c * dt)
        if x < park:
            return min(park, x + h * dt)
        return x
    if x > theta:
        t_hit = (x - theta) / c
        if dt <= t_hit:
            return x - c * dt
        return max(0.0, theta - c * (dt - t_hit))
    return max(0.0, x - c * dt)


def cftp_sample(config: CftpConfig, rng: np.random.Generator | None = None) -> JointSample:
    """One exact draw from the joint stationary distribution.

    Raises NoCoalescence if max_doublings horizons are exhausted.
    """
    from .model import _birth_death_generator

    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.n_loads
    qw = _birth_death_generator(config.wind_rates)
    wind_chain = _BackwardChain(qw, rng)
    if config.shared_comfort:
        shared = _BackwardChain(_birth_death_generator(config.comfort_rates[0]), rng)
        comfort_chains = [shared] * n
    else:
        comfort_chains = [_BackwardChain(_birth_death_generator(config.comfort_rates[i]), rng)
                          for i in range(n)]

    if config.initial_horizon is not None:
        horizon = float(config.initial_horizon)
    else:
        slowest = max(p.theta_max / min(p.c, p.h) for p in config.load_params)
        horizon = 4.0 * slowest

    for _ in range(config.max_doublings):
        wind_chain.extend(horizon)
        for ch in comfort_chains:
            ch.extend(horizon)
        ages = sorted(set(wind_chain.ages_in(horizon)) |
                      set(a for ch in comfort_chains for a in ch.ages_in(horizon)),
                      reverse=True)
        boundaries = [horizon] + ages + [0.0]

        top = np.array([p.theta_max for p in config.load_params])
        bottom = np.zeros(n)
        for b0, b1 in zip(boundaries[:-1], boundaries[1:]):
            dt = b0 - b1
            if dt <= 0:
                continue
            mid_age = 0.5 * (b0 + b1)
            wind = wind_chain.state_at_age(mid_age)
            for i in range(n):
                ci = comfort_chains[i].state_at_age(mid_age)
                theta = config.load_params[i].comfort_levels[ci]
                zi = config.set_points[i]
                top[i] = _advance_scalar(top[i], zi, wind, theta,
                                         config.load_params[i], dt)
                bottom[i] = _advance_scalar(bottom[i], zi, wind, theta,
                                            config.load_params[i], dt)
                if bottom[i] > top[i] + 1e-12:
                    raise AssertionError("sandwich violated; flow is not monotone")
        if np.all(top - bottom <= _COALESCE_TOL):
            comfort0 = np.array([ch.state_at_age(0.0) for ch in comfort_chains])
            return JointSample(temperatures=top.copy(),
                               wind=wind_chain.state_at_age(0.0),
                               comfort=comfort0, horizon=horizon)
        horizon *= 2.0
    raise NoCoalescence(f"no coalescence by horizon {horizon}")


def estimate_joint_cost(samples: list[JointSample], config: CftpConfig,
                        gamma: float) -> CostReport:
    """Monte Carlo normalized cost from perfect samples.

    Each sample classifies loads into parked at the hold point (draws h),
    above the active comfort level with wind off (draws h+c) and free; the
    standard error of the combined cost is reported.
    """
    if not samples:
        raise EmptySamples("need at least one sample")
    n = config.n_loads
    power = np.empty(len(samples))
    disc = np.empty(len(samples))
    for k, smp in enumerate(samples):
        draw = 0.0
        pen = 0.0
        for i in range(n):
            p = config.load_params[i]
            theta = p.comfort_levels[int(smp.comfort[i])]
            xi = float(smp.temperatures[i])
            if xi > theta + 1e-9:
                pen += (xi - theta) ** 2
                if smp.wind == 0:
                    draw += p.h + p.c
            elif smp.wind == 0 and abs(xi - min(config.set_points[i], theta)) <= 1e-7:
                draw += p.h
        power[k] = (draw / n) ** 2
        disc[k] = pen / n
    totals = power + gamma * disc
    se = float(np.std(totals, ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else float("inf")
    return CostReport(power_cost=float(power.mean()),
                      discomfort_cost=float(disc.mean()),
                      gamma=gamma, std_error=se)


def smooth_distribution(u: ThresholdDistribution, bandwidth: float,
                        kernel: str = "box", n_grid: int = 801) -> ThresholdDistribution:
    """Convolve a (possibly discrete) threshold distribution with a
    symmetric unit-mass kernel, preventing set-point accumulation at jumps.

    The box kernel of half-width b turns a step into a linear ramp of width
    2b; the triangular kernel gives a smooth quadratic blend.  Monotonicity
    is preserved and the boundary values are re-pinned afterwards.
    """
    lo, hi = u.domain
    zg = np.linspace(lo, hi, n_grid)
    b = float(bandwidth)
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    # quadrature nodes over the kernel support
    s = np.linspace(-b, b, 201)
    if kernel == "box":
        g = np.full_like(s, 1.0 / (2 * b))
    elif kernel == "triangular":
        g = (1.0 - np.abs(s) / b) / b
    else:
        raise ValueError(f"unknown kernel '{kernel}'")
    g = g / np.trapezoid(g, s)
    # u extended by 0 below and 1 above its domain
    ext = np.where(zg[None, :] - s[:, None] < lo, 0.0,
                   np.where(zg[None, :] - s[:, None] > hi, 1.0,
                            u(np.clip(zg[None, :] - s[:, None], lo, hi))))
    vals = np.trapezoid(g[:, None] * ext, s, axis=0)
    vals = np.clip(vals, 0.0, 1.0)
    vals = np.maximum.accumulate(vals)
    return ThresholdDistribution.from_grid(zg, vals, domain=(lo, hi))


def optimize_thresholds(config: CftpConfig, gamma: float, n_samples: int = 200,
                        sweeps: int = 2, tol: float = 0.5,
                        golden_iters: int = 12) -> tuple[np.ndarray, CostReport]:
    """Approximate coordinate descent over the set-point vector.

    Each evaluation reuses the same seeds (common random numbers) so cost
    differences reflect the set-point change rather than sampling noise;
    a golden-section line search handles one coordinate at a time.  The
    result is approximate by construction.
    """
    z = np.array(config.set_points, dtype=float)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    def evaluate(zv: np.ndarray) -> float:
        cfg = CftpConfig(wind_rates=config.wind_rates, load_params=config.load_params,
                         comfort_rates=config.comfort_rates,
                         set_points=tuple(float(v) for v in zv), seed=config.seed,
                         initial_horizon=config.initial_horizon,
                         max_doublings=config.max_doublings)
        samples = [cftp_sample(cfg, np.random.default_rng(
            np.random.SeedSequence([config.seed, k]).generate_state(1)[0]))
            for k in range(n_samples)]
        return estimate_joint_cost(samples, cfg, gamma).total

    best = evaluate(z)
    for _ in range(sweeps):
        for i in range(len(z)):
            theta_top = config.load_params[i].theta_max
            theta_lo = config.load_params[i].comfort_levels[0]
            a, bnd = theta_lo, theta_top
            x1 = bnd - invphi * (bnd - a)
            x2 = a + invphi * (bnd - a)
            z1, z2 = z.copy(), z.copy()
            z1[i], z2[i] = x1, x2
            f1, f2 = evaluate(z1), evaluate(z2)
            for _ in range(golden_iters):
                if bnd - a <= tol:
                    break
                if f1 <= f2:
                    bnd, x2, f2 = x2, x1, f1
                    x1 = bnd - invphi * (bnd - a)
                    z1 = z.copy()
                    z1[i] = x1
                    f1 = evaluate(z1)
                else:
                    a, x1, f1 = x1, x2, f2
                    x2 = a + invphi * (bnd - a)
                    z2 = z.copy()
                    z2[i] = x2
                    f2 = evaluate(z2)
            zi = x1 if f1 <= f2 else x2
            fi = min(f1, f2)
            if fi < best:
                z[i] = zi
                best = fi
    final_cfg = CftpConfig(wind_rates=config.wind_rates, load_params=config.load_params,
                           comfort_rates=config.comfort_rates,
                           set_points=tuple(float(v) for v in z), seed=config.seed,
                           initial_horizon=config.initial_horizon,
                           max_doublings=config.max_doublings)
    samples = [cftp_sample(final_cfg, np.random.default_rng(
        np.random.SeedSequence([config.seed, k]).generate_state(1)[0]))
        for k in range(n_samples)]
    return z, estimate_joint_cost(samples, final_cfg, gamma)
