"""Time stepping for the nonlinear KPP equation and its linearisations.

Nonlinear problem: u_t = D u_xx + g(x) f(u) on a lab-frame window that is moved
forward by whole periods of the medium, so the sampled g never changes.

Linear problems live on the co-moving half line y = x - c* t >= 0 with a
Dirichlet condition at y = 0.  They are integrated in the variable
p = w exp(lambda* y) / psi(x), where the equation reads

    p_t = p_yy + (kappa(y + c* t) + c*) p_y,

and w is recovered afterwards.  The weights f and zeta are built on the same
grid.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad

from . import _kernels as K
from .errors import (
    DomainTooSmallError,
    IllPosedConfigError,
    InconsistentInputError,
    StabilityError,
)
from .periodic import PeriodicFunction
from .spectral import SpeedBundle, periodic_operators

__all__ = [
    "ReactionSpec",
    "MovingFrame",
    "SolverState",
    "NonlinearRun",
    "step_nonlinear",
    "advance_nonlinear",
    "run_nonlinear",
    "indicator",
    "solve_linear_dirichlet",
    "LinearRun",
    "extract_p",
    "conserved_integral",
    "weight_corrector",
    "FrameWeight",
    "linear_weight",
    "zeta_weight",
    "ShiftedFrameConfig",
    "solve_shifted_dirichlet",
    "ShiftedRun",
]

BOUND_TOL = 1e-12


# ---------------------------------------------------------------------------
# reaction term


@dataclass(frozen=True)
class ReactionSpec:
    """KPP nonlinearity f with f(0) = f(1) = 0 and f'(0) = 1.

    ``coeffs`` are ascending polynomial coefficients for the custom kind
    (``coeffs[0]`` is the constant term).  ``M`` and ``alpha_exp`` describe the
    lower bound f(s) >= s - M s^(1 + alpha_exp) on [0, s0].
    """

    kind: str = "logistic"
    coeffs: tuple = ()
    fprime0: float = 1.0
    M: float = 1.0
    alpha_exp: float = 1.0
    s0: float = 0.5

    def __post_init__(self):
        if self.kind not in ("logistic", "custom-polynomial"):
            raise ValueError(f"unknown reaction kind {self.kind!r}")
        if self.kind == "logistic":
            object.__setattr__(self, "coeffs", (0.0, 1.0, -1.0))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        self.validate()

    @classmethod
    def logistic(cls):
        return cls("logistic")

    @property
    def kind_code(self) -> int:
        return K.LOGISTIC if self.kind == "logistic" else K.POLYNOMIAL

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def validate(self, n_samples: int = 999):
        c = self.coeffs
        if len(c) < 2:
            raise ValueError("reaction polynomial must have degree >= 1")
        if abs(self(0.0)) > 1e-14 or abs(self(1.0)) > 1e-12:
            raise ValueError("reaction must vanish at 0 and 1")
        if abs(c[1] - self.fprime0) > 1e-12 or abs(self.fprime0 - 1.0) > 1e-12:
            raise ValueError("reaction must satisfy f'(0) = 1")
        s = np.linspace(0.0, 1.0, n_samples + 2)[1:-1]
        fs = self(s)
        if np.any(fs <= 0) or np.any(fs > s * (1 + 1e-12)):
            raise ValueError("reaction must satisfy 0 < f(s) <= s on (0, 1)")
        ss = s[s <= self.s0]
        if np.any(self(ss) < ss - self.M * ss ** (1.0 + self.alpha_exp) - 1e-14):
            raise ValueError("reaction violates f(s) >= s - M s^(1+alpha) on [0, s0]")
        return self


# ---------------------------------------------------------------------------
# frames and states


@dataclass(frozen=True)
class MovingFrame:
    """Placement of the computational window.

    Nodes are ``left_edge + j*h`` for ``j < n_nodes``; the point
    ``left_edge + width`` carries the right boundary condition.
    """

    left_edge: float
    speed: float
    h: float
    width: float
    shift_policy: str = "integer-cell"
    initial_left_edge: Optional[float] = None

    def __post_init__(self):
        if self.shift_policy not in ("none", "integer-cell"):
            raise ValueError(f"unknown shift policy {self.shift_policy!r}")
        if self.initial_left_edge is None:
            object.__setattr__(self, "initial_left_edge", self.left_edge)
        if self.shift_policy == "integer-cell":
            P = 1.0 / self.h
            if abs(P - round(P)) > 1e-9:
                raise ValueError("integer-cell shifts need 1/h to be an integer")
            off = self.left_edge - self.initial_left_edge
            if abs(off - round(off)) > 1e-9:
                raise ValueError("left edge moved by a non-integer number of periods")

    @property
    def n_nodes(self) -> int:
        return int(round(self.width / self.h))

    @property
    def nodes_per_period(self) -> int:
        return int(round(1.0 / self.h))

    @property
    def x(self) -> np.ndarray:
        return self.left_edge + self.h * np.arange(self.n_nodes)

    def shifted(self, periods: int) -> "MovingFrame":
        return dataclasses.replace(self, left_edge=self.left_edge + periods)


@dataclass(frozen=True, eq=False)
class SolverState:
    """Solution samples at time t on ``frame.x`` (or on the frame's y-grid for Dirichlet kinds).

    For ``linear-dirichlet`` states ``u`` holds w and ``p`` the transformed
    variable; for ``shifted-dirichlet`` states ``u`` holds p-tilde.
    """

    t: float
    frame: MovingFrame
    u: np.ndarray
    kind: str = "nonlinear"
    p: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.frame.x

    @property
    def y(self) -> np.ndarray:
        return self.frame.h * np.arange(self.frame.n_nodes)


def indicator(x, a=-1.0, b=1.0, height=1.0):
    """Height times the indicator of [a, b]."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= a) & (x <= b), float(height), 0.0)


# ---------------------------------------------------------------------------
# nonlinear problem


def _g_nodes(g: PeriodicFunction, frame: MovingFrame) -> np.ndarray:
    return np.ascontiguousarray(g(frame.x))


def _check_bounds(lo, hi, t, dt):
    if lo < -BOUND_TOL or hi > 1.0 + BOUND_TOL:
        raise StabilityError(
            f"u left [0, 1] at t = {t:.6g} (min {lo:.3e}, max {hi - 1:.3e} above 1); reduce dt below {dt:g}"
        )


def advance_nonlinear(state: SolverState, g: PeriodicFunction, f: ReactionSpec, dt: float, nsteps: int,
                      D: float = 1.0, n_startup: int = 0, gnodes=None) -> SolverState:
    """``nsteps`` Strang steps (half reaction, Crank-Nicolson diffusion, half reaction)."""
    if state.kind != "nonlinear":
        raise ValueError("advance_nonlinear needs a nonlinear state")
    if dt > state.frame.h:
        raise ValueError("dt must not exceed h")
    gn = gnodes if gnodes is not None else _g_nodes(g, state.frame)
    coeffs = np.asarray(f.coeffs, dtype=float)
    v, lo, hi = K.nonlinear_steps(np.ascontiguousarray(state.u, dtype=float), int(nsteps), float(dt),
                                  float(state.frame.h), float(D), gn, f.kind_code, coeffs, int(n_startup))
    t = state.t + nsteps * dt
    _check_bounds(lo, hi, t, dt)
    return SolverState(t, state.frame, v, "nonlinear")


def step_nonlinear(state: SolverState, g: PeriodicFunction, f: ReactionSpec, dt: float, D: float = 1.0) -> SolverState:
    """One IMEX step: explicit (exact for logistic) reaction half steps around a Crank-Nicolson solve."""
    return advance_nonlinear(state, g, f, dt, 1, D)


def shift_state(state: SolverState, periods: int) -> SolverState:
    """Move the window right by whole periods, padding with zeros on the right."""
    if periods == 0:
        return state
    k = periods * state.frame.nodes_per_period
    u = np.concatenate([state.u[k:], np.zeros(k)])
    return SolverState(state.t, state.frame.shifted(periods), u, state.kind)


@dataclass
class NonlinearRun:
    times: np.ndarray
    X: dict
    Y: dict
    snapshots: list
    final: SolverState
    meta: dict

    def trace(self, eps=0.5):
        from .analysis import FrontTrace

        return FrontTrace(eps, self.times, self.X[eps], self.Y[eps])


def run_nonlinear(u0, g: PeriodicFunction, f: ReactionSpec, frame: MovingFrame, dt: float, t_end: float,
                  trace_every: float = 1.0, eps: Sequence[float] = (0.5,), snapshot_times: Sequence[float] = (),
                  D: float = 1.0, lead: float = 40.0, lead_sqrt: float = 5.0, n_startup: int = 4,
                  callback: Optional[Callable[[SolverState], None]] = None) -> NonlinearRun:
    """Integrate the nonlinear equation and record level positions every ``trace_every``.

    With the integer-cell policy the window advances by whole periods whenever
    fewer than max(lead, lead_sqrt * sqrt(t)) units separate the last node with
    u > 1e-12 from the right boundary.  The square-root part keeps the
    absorbing boundary outside the diffusive leading edge, which otherwise
    slows the front measurably at late times.  Snapshots are taken at the requested times (rounded to the
    step grid).
    """
    from .analysis import level_positions_array

    dt = float(dt)
    u = u0(frame.x) if callable(u0) else np.asarray(u0, dtype=float)
    if u.shape != (frame.n_nodes,):
        raise ValueError("initial data does not match the frame grid")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("initial data must lie in [0, 1]")
    state = SolverState(0.0, frame, np.array(u, dtype=float), "nonlinear")
    chunk = max(1, int(round(trace_every / dt)))
    n_total = int(round(t_end / dt))
    snap_steps = sorted({int(round(s / dt)) for s in snapshot_times})
    gn = _g_nodes(g, frame)
    times, X, Y = [0.0], {e: [] for e in eps}, {e: [] for e in eps}
    snaps = []

    def record(st):
        for e in eps:
            xe, ye = level_positions_array(st.x, st.u, e)
            X[e].append(np.nan if xe is None else xe)
            Y[e].append(np.nan if ye is None else ye)

    record(state)
    if 0 in snap_steps:
        snaps.append(state)
    step = 0
    shifts = 0
    max_sponge = 0.0
    sponge_nodes = max(1, int(round(5.0 / frame.h)))
    startup_left = n_startup
    while step < n_total:
        nxt = min(n_total, (step // chunk + 1) * chunk)
        pending = [s for s in snap_steps if step < s < nxt]
        if pending:
            nxt = pending[0]
        n = nxt - step
        ns = min(startup_left, n)
        state = advance_nonlinear(state, g, f, dt, n, D, n_startup=ns, gnodes=gn)
        startup_left -= ns
        state = dataclasses.replace(state, t=nxt * dt)
        step = nxt
        # keep the right boundary far ahead of the front
        fr = state.frame
        above = np.nonzero(state.u > 1e-12)[0]
        tail = fr.x[above[-1]] if above.size else fr.x[0]
        margin = fr.left_edge + fr.width - tail
        need = max(lead, lead_sqrt * math.sqrt(state.t)) + 10.0
        if fr.shift_policy == "integer-cell" and margin < need:
            periods = int(math.ceil(need - margin)) + 5
            bulk = np.nonzero(state.u >= 0.5)[0]
            if bulk.size and fr.left_edge + periods > fr.x[bulk[-1]] - 5.0:
                raise DomainTooSmallError(
                    f"width {fr.width:g} cannot hold both the front and a leading margin of {need:.3g} "
                    f"at t = {state.t:.4g}", suggested_width=2.0 * fr.width)
            state = shift_state(state, periods)
            shifts += periods
        max_sponge = max(max_sponge, float(np.max(state.u[-sponge_nodes:])))
        if max_sponge >= 1e-10:
            raise DomainTooSmallError(
                f"u reached {max_sponge:.2e} near the right boundary at t = {state.t:.4g}",
                suggested_width=2.0 * fr.width,
            )
        if step % chunk == 0:
            times.append(state.t)
            record(state)
        if step in snap_steps:
            snaps.append(state)
        if callback is not None:
            callback(state)
    meta = {
        "scheme": "Strang split: exact/RK4 reaction half steps, Crank-Nicolson diffusion",
        "h": frame.h,
        "dt": dt,
        "D": D,
        "frame_policy": frame.shift_policy,
        "periods_shifted": shifts,
        "max_u_near_right_boundary": max_sponge,
        "rannacher_steps": n_startup,
    }
    return NonlinearRun(np.array(times), {e: np.array(v) for e, v in X.items()},
                        {e: np.array(v) for e, v in Y.items()}, snaps, state, meta)


# ---------------------------------------------------------------------------
# co-moving linear problems


class _FrameIntegrator:
    """Crank-Nicolson integration of U_s = scale (U_yy + (b + adv) U_y) on y = j h, 0 <= j < M.

    b is a periodic series evaluated at x = y + speed * t with t = t0 + tsign * s.
    Modes below ``MODE_TOL`` (relative to the largest coefficient, and as an
    absolute floor since the series are O(1)) are dropped first: round-off
    modes of a numerically constant drift would otherwise cost a full table
    row each.
    """

    MODE_TOL = 1e-12

    def __init__(self, h, M, drift: PeriodicFunction, speed, slope: Optional[PeriodicFunction] = None):
        self.h = float(h)
        self.M = int(M)
        self.y = self.h * np.arange(self.M)
        d = drift.truncated(self.MODE_TOL, self.MODE_TOL)
        self.drift = d
        self.speed = float(speed)
        kk = 2.0 * np.pi * np.arange(1, d.n_modes + 1)
        ph = np.outer(kk, self.y[1:])
        self.C = np.ascontiguousarray(np.cos(ph))
        self.S = np.ascontiguousarray(np.sin(ph))
        if slope is None:
            self.right_mode = K.RIGHT_DIRICHLET
            self.slope = PeriodicFunction.constant(0.0)
        else:
            self.right_mode = K.RIGHT_NEUMANN
            self.slope = slope.truncated(self.MODE_TOL, self.MODE_TOL)

    def run(self, U, nsteps, dt, t0, tsign, adv, scale):
        adv = np.ascontiguousarray(np.broadcast_to(adv, (nsteps + 1,)), dtype=float)
        scale = np.ascontiguousarray(np.broadcast_to(scale, (nsteps + 1,)), dtype=float)
        d, s = self.drift, self.slope
        return K.drift_cn_steps(np.ascontiguousarray(U, dtype=float), int(nsteps), float(dt), self.h, float(t0),
                                float(tsign), self.speed, d.mean, np.ascontiguousarray(d.cosine_coeffs),
                                np.ascontiguousarray(d.sine_coeffs), self.C, self.S, adv, scale,
                                self.right_mode, s.mean, np.ascontiguousarray(s.cosine_coeffs),
                                np.ascontiguousarray(s.sine_coeffs), float(self.y[-1]))


def _output_steps(output_times, t_end, dt):
    n_end = int(round(t_end / dt))
    if output_times is None:
        return [0, n_end]
    steps = sorted({int(round(t / dt)) for t in output_times if 0 <= t <= t_end + 1e-12})
    if not steps or steps[0] != 0:
        steps = [0] + steps
    return steps


def _frame_for(bundle, h, width, t=0.0):
    return MovingFrame(left_edge=bundle.c_star * t, speed=bundle.c_star, h=h, width=width, shift_policy="none")


@dataclass
class LinearRun:
    states: list
    meta: dict

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def sup_w(self):
        return np.array([np.max(np.abs(s.u)) for s in self.states])

    def p_at(self, y):
        """p(t, c* t + y) for each stored time, by linear interpolation."""
        return np.array([np.interp(y, s.y, s.p) for s in self.states])


def _check_width(p, width, t):
    n = max(3, p.size // 20)
    scale = max(np.max(np.abs(p)), 1e-300)
    edge = np.max(np.abs(p[-n:])) / scale
    if edge > 1e-10:
        raise DomainTooSmallError(f"solution reaches the right edge of the frame at t = {t:.4g} "
                                  f"(relative size {edge:.1e})", suggested_width=2.0 * width)


def solve_linear_dirichlet(g: PeriodicFunction, u0, bundle: SpeedBundle, t_end: float, dt: float = 0.01,
                           frame: Optional[MovingFrame] = None, output_times=None, h: float = 0.02,
                           width: float = 200.0) -> LinearRun:
    """w_t = w_xx + g w on x >= c* t with w(t, c* t) = 0, from compactly supported u0 >= 0.

    Returns states at the requested output times (rounded to the step grid).
    """
    if bundle.kappa_drift is None:
        raise ValueError("bundle needs kappa_drift")
    if g is not None and bundle.g is not None and np.max(np.abs(g(bundle.g.x) - bundle.g.samples)) > 1e-12:
        raise ValueError("g does not match the bundle's coefficient")
    frame = frame or _frame_for(bundle, h, width)
    M = frame.n_nodes
    y = frame.h * np.arange(M)
    w0 = u0(y) if callable(u0) else np.asarray(u0, dtype=float)
    if w0.shape != (M,) or np.any(w0 < 0):
        raise ValueError("u0 must be non-negative samples on the frame grid")
    if w0[0] != 0:
        raise ValueError("u0 must vanish at the boundary")
    lam, c = bundle.lambda_star, bundle.c_star
    psi = bundle.psi_star.truncated()
    p = w0 * np.exp(lam * y) / psi(y)
    integ = _FrameIntegrator(frame.h, M, bundle.kappa_drift, c)
    steps = _output_steps(output_times, t_end, dt)
    states = []
    cur = 0
    for s in steps:
        if s > cur:
            p = integ.run(p, s - cur, dt, cur * dt, 1.0, c, 1.0)
            cur = s
        t = cur * dt
        _check_width(p, frame.width, t)
        w = np.exp(-lam * y) * psi(y + c * t) * p
        fr = dataclasses.replace(frame, left_edge=c * t)
        states.append(SolverState(t, fr, w, "linear-dirichlet", p=p.copy()))
    return LinearRun(states, {"h": frame.h, "dt": dt, "width": frame.width,
                              "scheme": "Crank-Nicolson in p variables on the co-moving grid"})


def extract_p(state: SolverState, bundle: SpeedBundle) -> np.ndarray:
    """p = w exp(lambda* (x - c* t)) / psi(x)."""
    if state.kind != "linear-dirichlet":
        raise ValueError("extract_p needs a linear-dirichlet state")
    y = state.y
    x = y + bundle.c_star * state.t
    return state.u * np.exp(bundle.lambda_star * y) / bundle.psi_star.truncated()(x)


def conserved_integral(state: SolverState, weight_f, nu: PeriodicFunction) -> float:
    """I(t) = int nu(x) f(t, x) p(t, x) dx over the frame (trapezoid rule)."""
    p = state.p if state.p is not None else state.u
    y = state.y
    x = y + state.frame.speed * state.t
    F = weight_f(state.t)
    return float(np.trapezoid(nu(x) * F * p, y))


# ---------------------------------------------------------------------------
# weights f and zeta


def _flux_operator(nu: PeriodicFunction, N: int):
    """Matrix of v -> (nu v')' with nu at half nodes."""
    h = 1.0 / N
    x = np.arange(N) / N
    nh = nu(x + 0.5 * h)
    nhm = np.roll(nh, 1)
    i = np.arange(N)
    return sp.csr_matrix((np.concatenate([nh, nhm, -(nh + nhm)]) / h**2,
                          (np.concatenate([i, i, i]), np.concatenate([(i + 1) % N, (i - 1) % N, i]))),
                         shape=(N, N))


def weight_corrector(bundle: SpeedBundle, tol: float = 1e-8) -> PeriodicFunction:
    """Zero-mean periodic y with (nu y')' + c* y' = c* (nu - 1) - nu'.

    The right side integrates to zero, which is the solvability condition of
    this divergence-form operator; its discrete defect is checked against ``tol``.
    """
    nu = bundle.nu
    N = nu.N
    D1, _ = periodic_operators(N)
    L = _flux_operator(nu, N) + bundle.c_star * D1
    rhs = bundle.c_star * (nu.samples - 1.0) - nu.derivative().samples
    defect = float(np.mean(rhs))
    if abs(defect) > tol:
        raise InconsistentInputError(f"corrector right side has mean {defect:.3e}; nu is inconsistent")
    ones = np.ones((N, 1))
    B = sp.bmat([[L, sp.csr_matrix(ones)], [sp.csr_matrix(ones.T / N), None]], format="csc")
    sol = spla.spsolve(B, np.concatenate([rhs, [0.0]]))
    return PeriodicFunction.from_samples(sol[:N])


@dataclass
class FrameWeight:
    """A weight function sampled on the frame grid at a set of times.

    Calling it with a stored time returns the samples; ``corrector`` is the
    periodic part of the seed profile (y + corrector(x)).
    """

    times: np.ndarray
    values: dict
    y: np.ndarray
    corrector: PeriodicFunction
    c_star: float
    burn_in: float
    fixed_point_gap: float
    meta: dict = field(default_factory=dict)

    def __call__(self, t):
        key = _time_key(t)
        if key not in self.values:
            raise KeyError(f"weight not stored at t = {t}")
        return self.values[key]

    def seed(self, t):
        return self.y + self.corrector(self.y + self.c_star * t)


def _time_key(t):
    return round(float(t), 9)


def _weight_run(integ, seed, n_total, dt, t0, tsign, adv, out_steps):
    """Step from the seed and collect snapshots at the given step counts."""
    out = {}
    U = seed
    cur = 0
    for s in sorted(out_steps):
        if s > cur:
            U = integ.run(U, s - cur, dt, t0 + tsign * cur * dt, tsign, adv, 1.0)
            cur = s
        out[s] = U.copy()
    return out


def _build_weight(bundle, corrector, drift, adv, tsign, t_end, dt, h, width, output_times, burn_in,
                  tol, max_doublings, layer):
    """Relax a weight on the boundary-layer window [0, layer] and extend it by Y + d.

    The far field of the limit is Y + d with a constant d, so the window
    carries the slope of Y at its right end; beyond the window the profile is
    continued as Y + d(t), d read off at the last window node.
    """
    c = bundle.c_star
    M = int(round(width / h))
    y = h * np.arange(M)
    Mb = min(M, int(round(layer / h)) + 1)
    yb = y[:Mb]
    slope = corrector.derivative() + 1.0
    integ = _FrameIntegrator(h, Mb, drift, c, slope=slope)
    n_end = int(round(t_end / dt))
    want = _output_steps(output_times, t_end, dt)
    burn = burn_in if burn_in is not None else 50.0 / c
    prev = None
    gap = np.inf
    mask = yb >= 0.5
    history = []
    for _ in range(max_doublings + 1):
        nb = int(round(burn / dt))
        if tsign < 0:  # backward problem: start at t_end + burn and run down to 0
            t_start = (n_end + nb) * dt
            steps = {nb + (n_end - s): s for s in want}
        else:  # forward problem: start at -burn
            t_start = -nb * dt
            steps = {nb + s: s for s in want}
        seed = np.maximum(0.0, yb + corrector(yb + c * t_start))
        seed[0] = 0.0
        raw = _weight_run(integ, seed, None, dt, t_start, tsign, adv, steps.keys())
        vals = {_time_key(steps[k] * dt): v for k, v in raw.items()}
        if prev is not None:
            gap = max(float(np.max(np.abs(vals[k][mask] - prev[k][mask]))) for k in vals)
            history.append((burn, gap))
            if gap <= tol:
                break
        prev = vals
        burn *= 2.0
    out = {}
    for key, v in vals.items():
        full = y + corrector(y + c * key)
        d = v[-1] - full[Mb - 1]
        full += d
        full[:Mb] = v
        out[key] = full
    times = np.array(sorted(out))
    return FrameWeight(times, out, y, corrector, c, burn, gap,
                       {"h": h, "dt": dt, "width": width, "layer": float(yb[-1]), "burn_in_history": history,
                        "converged": bool(gap <= tol)})


def linear_weight(bundle: SpeedBundle, t_end: float, dt: float = 0.01, h: float = 0.02, width: float = 200.0,
                  output_times=None, burn_in: Optional[float] = None, tol: float = 1e-6,
                  max_doublings: int = 8, layer: float = 12.0) -> FrameWeight:
    """Backward-caloric weight f with f = 0 on x = c* t and linear growth.

    In the frame, F_s = F_yy + (kappa + 2 c*/nu - c*) F_y with s = T - t.  The
    integration starts from max(0, Y), Y = y + corrector(x), at T = t_end +
    burn-in, on the window y <= ``layer`` whose right end carries the slope
    of Y.  The burn-in doubles until two successive runs agree within ``tol``
    (or ``max_doublings`` is used up; the final gap is reported either way).
    """
    corr = weight_corrector(bundle)
    nu = bundle.nu
    drift = PeriodicFunction.from_samples(bundle.kappa_drift.samples + 2.0 * bundle.c_star / nu.samples
                                          - bundle.c_star)
    return _build_weight(bundle, corr, drift, 0.0, -1.0, t_end, dt, h, width, output_times, burn_in,
                         tol, max_doublings, layer)


def zeta_weight(bundle: SpeedBundle, t_end: float, dt: float = 0.01, h: float = 0.02, width: float = 200.0,
                output_times=None, burn_in: Optional[float] = None, tol: float = 1e-6,
                max_doublings: int = 8, layer: float = 12.0) -> FrameWeight:
    """Forward-caloric weight zeta (same operator as p), seeded by max(0, y + chi0(x))."""
    return _build_weight(bundle, bundle.chi0, bundle.kappa_drift, bundle.c_star, 1.0, t_end, dt, h, width,
                         output_times, burn_in, tol, max_doublings, layer)


# ---------------------------------------------------------------------------
# shifted frame


@dataclass(frozen=True)
class ShiftedFrameConfig:
    """Log-shifted time change tau <-> t with c* tau = c* t - r log((t + T)/T).

    omega(tau) = r/(c*(tau + T)) - beta(tau) equals r/(c*(t + T)).
    """

    c_star: float
    lambda_star: float
    r: Optional[float] = None
    T: Optional[float] = None

    def __post_init__(self):
        if self.r is None:
            object.__setattr__(self, "r", 1.5 / self.lambda_star)
        if self.T is None:
            object.__setattr__(self, "T", max(10.0, 4.0 * abs(self.r) / self.c_star))

    def t_of_tau(self, tau):
        """Newton solve of c* t - r log((t + T)/T) = c* tau."""
        tau = np.asarray(tau, dtype=float)
        c, r, T = self.c_star, self.r, self.T
        t = tau + (r / c) * np.log1p(np.maximum(tau, 0) / T)
        for _ in range(60):
            F = c * t - r * np.log((t + T) / T) - c * tau
            dF = c - r / (t + T)
            dt_ = F / dF
            t = t - dt_
            if np.all(np.abs(dt_) <= 1e-15 * (1 + np.abs(t))):
                break
        return t

    def beta(self, tau):
        tau = np.asarray(tau, dtype=float)
        c, r, T = self.c_star, self.r, self.T
        t = self.t_of_tau(tau)
        L = np.log((t + T) / T)
        return r**2 * L / (c * (tau + T) * (c * (tau + T) + r * L))

    def omega(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.r / (self.c_star * (tau + self.T)) - self.beta(tau)

    def h_prime(self, tau):
        return 1.0 / (1.0 - self.omega(tau))

    def alpha(self, tau):
        """exp(c* lambda* (h(tau) - tau)) = ((t + T)/T)^(r lambda*)."""
        t = self.t_of_tau(tau)
        return ((t + self.T) / self.T) ** (self.r * self.lambda_star)

    def alpha_quadrature(self, tau):
        """alpha from integrating alpha'/alpha = c* lambda* (h' - 1) numerically."""
        val, _ = quad(lambda s: self.c_star * self.lambda_star * (self.h_prime(s) - 1.0), 0.0, float(tau),
                      limit=200, epsabs=1e-13, epsrel=1e-12)
        return math.exp(val)

    def check(self, tau_end: float):
        taus = np.linspace(0.0, tau_end, 2001)
        with np.errstate(invalid="ignore"):  # an ill-posed map gives NaN, caught below
            om = self.omega(taus)
        if np.any(~(om < 1.0)):
            raise IllPosedConfigError("omega(tau) >= 1: the time change is not invertible")
        return float(np.max(om))


@dataclass
class ShiftedRun:
    states: list
    cfg: ShiftedFrameConfig
    meta: dict

    @property
    def taus(self):
        return np.array([s.t for s in self.states])

    def window_statistic(self, k: float = 1.0, y_min: float = 0.5):
        """For each tau the min and max of tau^(3/2) p(tau, c* tau + y) / y over y in [y_min, k sqrt(tau)]."""
        lo, hi = [], []
        for s in self.states:
            y = s.y
            m = (y >= y_min) & (y <= k * math.sqrt(max(s.t, 0.0)))
            if not np.any(m):
                lo.append(np.nan)
                hi.append(np.nan)
                continue
            W = s.t**1.5 * s.u[m] / y[m]
            lo.append(float(W.min()))
            hi.append(float(W.max()))
        return np.array(lo), np.array(hi)


def solve_shifted_dirichlet(g: PeriodicFunction, p0, bundle: SpeedBundle, cfg: ShiftedFrameConfig,
                            tau_end: float, dt: float = 0.02, h: float = 0.05, width: float = 300.0,
                            output_times=None, omega_override: Optional[Callable] = None) -> ShiftedRun:
    """(1 - omega) p_tau = p_xx + kappa p_x on x >= c* tau with p = 0 at x = c* tau.

    In the frame y = x - c* tau this reads
        P_tau = (P_yy + (kappa + (1 - omega) c*) P_y) / (1 - omega).
    ``omega_override`` replaces cfg.omega (e.g. ``lambda tau: 0 * tau``).
    """
    if cfg.r is not None and omega_override is None:
        cfg.check(tau_end)
    c = bundle.c_star
    M = int(round(width / h))
    y = h * np.arange(M)
    P = p0(y) if callable(p0) else np.asarray(p0, dtype=float)
    P = np.array(P, dtype=float)
    if P[0] != 0:
        raise ValueError("p0 must vanish at the boundary")
    om_fn = omega_override or cfg.omega
    integ = _FrameIntegrator(h, M, bundle.kappa_drift, c)
    steps = _output_steps(output_times, tau_end, dt)
    frame = MovingFrame(0.0, c, h, width, "none")
    states = []
    cur = 0
    for s in steps:
        if s > cur:
            taus = (cur + np.arange(s - cur + 1)) * dt
            om = np.asarray(om_fn(taus), dtype=float) * np.ones_like(taus)
            if np.any(om >= 1.0):
                raise IllPosedConfigError("omega(tau) >= 1 during the run")
            P = integ.run(P, s - cur, dt, cur * dt, 1.0, (1.0 - om) * c, 1.0 / (1.0 - om))
            cur = s
        tau = cur * dt
        _check_width(P, width, tau)
        states.append(SolverState(tau, dataclasses.replace(frame, left_edge=c * tau), P.copy(), "shifted-dirichlet"))
    return ShiftedRun(states, cfg, {"h": h, "dt": dt, "width": width})
