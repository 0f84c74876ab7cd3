"""Branching Brownian motion with a space-dependent branching rate.

Each particle carries a standard exponential threshold S and the integral of
g along its path since birth; when the integral passes S the particle is
replaced by two offspring at its position.  The probability that some
particle lies below 0 at time T, as a function of the starting point,
solves u_t = u_xx / 2 + g u (1 - u) with u(0, x) = 1 for x < 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from numba import njit, prange

from ._kernels import _series_point
from .errors import ExplosionError
from .periodic import PeriodicFunction
from .rd_solver import MovingFrame, ReactionSpec, run_nonlinear

__all__ = ["BbmConfig", "Population", "simulate", "trial_seed", "estimate_u", "BbmEstimate", "pde_reference",
           "population_sizes"]


@dataclass(frozen=True)
class BbmConfig:
    g: PeriodicFunction
    x0: float = 0.0
    T: float = 1.0
    dt: float = 0.01
    trials: int = 1000
    seed: int = 0
    max_particles: int = 2_000_000

    def __post_init__(self):
        if not self.dt > 0 or self.dt > 0.01:
            raise ValueError("dt must lie in (0, 0.01]")
        if int(self.trials) < 100:
            raise ValueError("at least 100 trials are required")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.max_particles) < 1:
            raise ValueError("max_particles must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.g.refined_min() < 0:
            raise ValueError("the branching rate g must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Population:
    positions: np.ndarray
    accumulated_rate: np.ndarray
    thresholds: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.positions.size
        if self.accumulated_rate.size != n or self.thresholds.size != n:
            raise ValueError("population arrays must have equal length")

    @property
    def size(self) -> int:
        return int(self.positions.size)

    def minimum(self) -> float:
        return float(self.positions.min())


def trial_seed(seed: int, trial: int) -> int:
    """32-bit stream seed of one trial, hashed from (seed, trial) by SeedSequence."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint32)[0])


@njit(cache=True)
def _trial(stream, x0, nsteps, dt, gm, gca, gsa, cap):
    """One trial; returns positions, accumulated rates, thresholds, steps done, exploded flag."""
    np.random.seed(stream)
    size = 64
    pos = np.empty(size)
    acc = np.empty(size)
    thr = np.empty(size)
    pos[0] = x0
    acc[0] = 0.0
    thr[0] = np.random.exponential(1.0)
    n = 1
    sq = math.sqrt(dt)
    for step in range(nsteps):
        n_old = n
        for i in range(n_old):
            gx = _series_point(gm, gca, gsa, pos[i])
            acc[i] += gx * dt
            pos[i] += sq * np.random.standard_normal()
            if acc[i] >= thr[i]:
                if n >= cap:
                    return pos[:n], acc[:n], thr[:n], step, True
                if n == size:
                    size *= 2
                    p2 = np.empty(size)
                    a2 = np.empty(size)
                    t2 = np.empty(size)
                    p2[:n] = pos[:n]
                    a2[:n] = acc[:n]
                    t2[:n] = thr[:n]
                    pos, acc, thr = p2, a2, t2
                acc[i] = 0.0
                thr[i] = np.random.exponential(1.0)
                pos[n] = pos[i]
                acc[n] = 0.0
                thr[n] = np.random.exponential(1.0)
                n += 1
    return pos[:n], acc[:n], thr[:n], nsteps, False


@njit(cache=True, parallel=True)
def _trial_minima(streams, x0, nsteps, dt, gm, gca, gsa, cap, mins, sizes, failed):
    for k in prange(streams.size):
        pos, acc, thr, steps, bad = _trial(streams[k], x0, nsteps, dt, gm, gca, gsa, cap)
        mins[k] = pos.min()
        sizes[k] = pos.size
        failed[k] = steps if bad else -1


def _g_args(g: PeriodicFunction):
    g = g.truncated()
    return g.mean, np.ascontiguousarray(g.cosine_coeffs), np.ascontiguousarray(g.sine_coeffs)


def simulate(cfg: BbmConfig, trial: int = 0) -> Population:
    """Run one trial to time T; deterministic in (cfg.seed, trial)."""
    gm, ca, sa = _g_args(cfg.g)
    pos, acc, thr, steps, bad = _trial(trial_seed(cfg.seed, trial), float(cfg.x0), cfg.n_steps, float(cfg.dt),
                                       gm, ca, sa, int(cfg.max_particles))
    if bad:
        raise ExplosionError(f"population reached {cfg.max_particles} particles", time_reached=steps * cfg.dt,
                             trial=trial)
    return Population(pos.copy(), acc.copy(), thr.copy(), cfg.n_steps * cfg.dt,
                      {"seed": int(cfg.seed), "trial": int(trial)})


def _run_trials(cfg: BbmConfig, x0: float, threads: Optional[int] = None):
    if threads:
        numba.set_num_threads(int(threads))
    streams = np.array([trial_seed(cfg.seed, k) for k in range(cfg.trials)], dtype=np.int64)
    mins = np.empty(cfg.trials)
    sizes = np.empty(cfg.trials, dtype=np.int64)
    failed = np.empty(cfg.trials, dtype=np.int64)
    gm, ca, sa = _g_args(cfg.g)
    _trial_minima(streams, float(x0), cfg.n_steps, float(cfg.dt), gm, ca, sa, int(cfg.max_particles), mins, sizes,
                  failed)
    bad = np.nonzero(failed >= 0)[0]
    if bad.size:
        k = int(bad[0])
        raise ExplosionError(f"population reached {cfg.max_particles} particles in trial {k}",
                             time_reached=float(failed[k]) * cfg.dt, trial=k)
    return mins, sizes


def population_sizes(cfg: BbmConfig, threads: Optional[int] = None) -> np.ndarray:
    """Final population size of every trial started at cfg.x0."""
    return _run_trials(cfg, cfg.x0, threads)[1]


@dataclass
class BbmEstimate:
    x: np.ndarray
    u_hat: np.ndarray
    stderr: np.ndarray
    u_pde: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def diff(self) -> Optional[np.ndarray]:
        return None if self.u_pde is None else np.abs(self.u_hat - self.u_pde)

    def as_rows(self):
        cols = [self.x, self.u_hat, self.stderr]
        if self.u_pde is not None:
            cols += [self.u_pde, self.diff]
        return np.column_stack(cols)


def estimate_u(cfg: BbmConfig, xs: Sequence[float], threads: Optional[int] = None, reference: bool = True,
               pde_kwargs: Optional[dict] = None) -> BbmEstimate:
    """Fraction of trials with a particle below 0 at time T, for each start in ``xs``.

    Trial k uses the stream of (cfg.seed, k) at every start point, so the
    estimates at different x share their random numbers and the result does
    not depend on the order in which trials run.  Standard errors are
    binomial.  With ``reference`` the PDE solution is attached.
    """
    xs = np.asarray(xs, dtype=float)
    u = np.empty(xs.size)
    for j, x0 in enumerate(xs):
        mins, _ = _run_trials(cfg, x0, threads)
        u[j] = np.mean(mins < 0.0)
    se = np.sqrt(np.maximum(u * (1.0 - u), 0.0) / cfg.trials)
    up = pde_reference(cfg.g, cfg.T, xs, **(pde_kwargs or {})) if reference else None
    meta = {"seed": int(cfg.seed), "trials": int(cfg.trials), "T": cfg.T, "dt": cfg.dt,
            "rng": "numba generator seeded per trial from SeedSequence([seed, trial])"}
    return BbmEstimate(xs, u, se, up, meta)


def pde_reference(g: PeriodicFunction, T: float, xs, left: float = -20.0, right: float = 30.0, h: float = 0.01,
                  dt: float = 0.0025) -> np.ndarray:
    """u(T, xs) for u_t = u_xx / 2 + g u (1 - u), u(0, x) = 1 for x <= 0, on a fixed window."""
    frame = MovingFrame(left_edge=left, speed=0.0, h=h, width=right - left, shift_policy="none")
    # the node at x = 0 takes the midpoint value of the jump
    def u0(x):
        return np.where(x < 0.0, 1.0, np.where(x == 0.0, 0.5, 0.0))

    run = run_nonlinear(u0, g, ReactionSpec.logistic(), frame, dt, T, trace_every=T, snapshot_times=(), D=0.5)
    return np.interp(np.asarray(xs, dtype=float), run.final.x, run.final.u)
