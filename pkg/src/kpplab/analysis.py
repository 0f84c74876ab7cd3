"""Front tracking and regression utilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from .errors import DataGapError

__all__ = [
    "FrontTrace",
    "FitResult",
    "level_positions",
    "level_positions_array",
    "delay_fit",
    "power_law_fit",
    "linear_fit",
    "SigmaScanRow",
    "sigma_scan",
]


@dataclass
class FrontTrace:
    """Level positions X_eps(t) (rightmost crossing) and Y_eps(t); NaN marks undefined values."""

    eps: float
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    def delay(self, c_star: float) -> np.ndarray:
        return c_star * self.times - self.X

    def window(self, t_min: float, t_max: float):
        m = (self.times >= t_min) & (self.times <= t_max)
        return self.times[m], self.X[m], self.Y[m]


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr_slope: float
    r_squared: float
    window: Tuple[float, float]
    n: int = 0

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "stderr_slope": self.stderr_slope,
                "r_squared": self.r_squared, "window": list(self.window), "n": self.n}


def level_positions_array(x, u, eps) -> Tuple[Optional[float], Optional[float]]:
    """(X, Y) for samples u on nodes x.

    X is the rightmost crossing of the level eps, linearly interpolated; Y is
    the leftmost x >= 0 with u <= 1 - eps, interpolated between the bracketing
    nodes.  Either is None when no such point exists on the grid.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    above = np.nonzero(u >= eps)[0]
    X = None
    if above.size and above[-1] < u.size - 1:
        i = above[-1]
        X = float(x[i] + (x[i + 1] - x[i]) * (u[i] - eps) / (u[i] - u[i + 1]))
    Y = None
    lev = 1.0 - eps
    right = np.nonzero(x >= 0)[0]
    if right.size:
        j0 = right[0]
        low = np.nonzero(u[j0:] <= lev)[0]
        if low.size:
            j = j0 + low[0]
            if j == j0:
                Y = float(x[j])
            else:
                Y = float(x[j - 1] + (x[j] - x[j - 1]) * (u[j - 1] - lev) / (u[j - 1] - u[j]))
                Y = max(Y, 0.0)
    return X, Y


def level_positions(state, eps):
    """(X_eps, Y_eps) of a nonlinear solver state."""
    if getattr(state, "kind", "nonlinear") != "nonlinear":
        raise ValueError("level positions are defined for nonlinear states")
    return level_positions_array(state.x, state.u, eps)


def linear_fit(xv, yv, window=None) -> FitResult:
    xv = np.asarray(xv, dtype=float)
    yv = np.asarray(yv, dtype=float)
    res = stats.linregress(xv, yv)
    r2 = float(min(1.0, max(0.0, res.rvalue**2)))
    w = window if window is not None else (float(xv.min()), float(xv.max()))
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), r2, tuple(w), int(xv.size))


def delay_fit(trace: FrontTrace, bundle, window=(100.0, 1500.0), min_samples: int = 20) -> FitResult:
    """Least-squares fit of c* t - X(t) against log t; the slope estimates 3/(2 lambda*)."""
    c = bundle.c_star if hasattr(bundle, "c_star") else float(bundle)
    t, X, _ = trace.window(*window)
    if t.size < min_samples:
        raise DataGapError(f"only {t.size} samples in window {window}, need {min_samples}")
    if np.any(~np.isfinite(X)):
        raise DataGapError("trace has undefined positions inside the fit window")
    return linear_fit(np.log(t), c * t - X, window)


def power_law_fit(times, values, window=None) -> FitResult:
    """Log-log least squares; the slope is the exponent."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, v = t[m], v[m]
    if t.size < 2:
        raise DataGapError("fewer than two samples in the fit window")
    if np.any(v <= 0) or np.any(t <= 0):
        raise ValueError("power-law fit needs positive times and values")
    w = window if window is not None else (float(t.min()), float(t.max()))
    return linear_fit(np.log(t), np.log(v), w)


@dataclass(frozen=True)
class SigmaScanRow:
    sigma: float
    minimum: float
    maximum: float

    @property
    def ratio(self) -> float:
        return self.maximum / self.minimum if self.minimum > 0 else float("inf")

    def as_dict(self):
        return {"sigma": self.sigma, "min": self.minimum, "max": self.maximum, "ratio": self.ratio}


def sigma_scan(run, sigmas, window=(50.0, 500.0), max_ratio: float = 25.0):
    """Scan t p(t, c* t + sigma sqrt(t)) over ``window`` for each sigma.

    ``run`` is a LinearRun.  Returns the rows, the sigma with the smallest
    max/min ratio, and the widest sigma whose row stays positive with
    ratio <= max_ratio (None when no sigma qualifies).
    """
    t_all = run.times
    m = (t_all >= window[0]) & (t_all <= window[1])
    if m.sum() < 2:
        raise DataGapError("fewer than two stored times in the scan window")
    states = [s for s, keep in zip(run.states, m) if keep]
    rows = []
    for sg in sigmas:
        vals = np.array([s.t * np.interp(sg * np.sqrt(s.t), s.y, s.p) for s in states])
        rows.append(SigmaScanRow(float(sg), float(vals.min()), float(vals.max())))
    best = min(rows, key=lambda r: r.ratio)
    ok = [r for r in rows if r.minimum > 0 and r.ratio <= max_ratio]
    widest = max(ok, key=lambda r: r.sigma) if ok else None
    return rows, best, widest
