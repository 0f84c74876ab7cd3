"""Multiscale approximate solution, Bramson position and pulsating fronts.

The approximate solution of (1 - omega) theta_tau = theta_xx + b theta_x,
b = kappa_drift, has the form

    theta = tau^-1 v0(z) + tau^-3/2 v1(z, x) + tau^-2 v2(z, x) + tau^-5/2 v3(z, x)

with z = (x - c* tau)/sqrt(tau).  Every v^k is a finite sum of products
Z(z) X(x) of a profile in z and a periodic cell function in x.  The cell
problems L w = F, L = d_xx + b d_x, are solved by Fourier collocation so that
their defects stay at rounding level; a second-order solve would leave an
O(N^-2) defect at order tau^-3/2 and hide the tau^-3 residual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.hermite import hermval
from scipy.interpolate import BPoly, CubicSpline
from scipy.optimize import minimize_scalar

from .analysis import level_positions_array, linear_fit
from .errors import ConsistencyError, RelaxationError
from .periodic import PeriodicFunction, grid
from .rd_solver import MovingFrame, ReactionSpec, ShiftedFrameConfig, run_nonlinear
from .spectral import AdjointKernel, SpeedBundle, adjoint_kernel

__all__ = [
    "CellSolver",
    "ThetaAppExpansion",
    "build_theta_app",
    "theta_app_residual",
    "residual_sweep",
    "leading_order_constant",
    "solve_p0",
    "v0_derivative",
    "bramson_position",
    "FrontProfile",
    "pulsating_front",
    "ConvergenceSeries",
    "convergence_to_front",
]


# ---------------------------------------------------------------------------
# cell problems by Fourier collocation


class CellSolver:
    """Periodic solutions of w'' + b w' = F - s, mean(w) = 0, by Fourier collocation.

    ``s`` is the solvability constant; it equals the eta-weighted mean of F
    for the adjoint null vector eta of the operator.
    """

    def __init__(self, b: PeriodicFunction, n: int = 128):
        if n % 2:
            raise ValueError("collocation size must be even")
        self.n = n
        self.x = grid(n)
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
        k1 = k.copy()
        k1[n // 2] = 0.0
        eye = np.eye(n)
        F = np.fft.fft(eye, axis=0)
        self.D1 = np.real(np.fft.ifft(1j * k1[:, None] * F, axis=0))
        self.D2 = np.real(np.fft.ifft(-(k**2)[:, None] * F, axis=0))
        self.b = b(self.x)
        L = self.D2 + self.b[:, None] * self.D1
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = L
        B[:n, n] = 1.0
        B[n, :n] = 1.0 / n
        self._lu = np.linalg.inv(B)  # n is small; the inverse is reused for every right side

    def samples(self, f) -> np.ndarray:
        return f(self.x) if callable(f) else np.asarray(f, dtype=float)

    def derivative(self, w: np.ndarray) -> np.ndarray:
        return self.D1 @ w

    def solve(self, rhs):
        r = self.samples(rhs)
        sol = self._lu @ np.concatenate([r, [0.0]])
        return sol[: self.n], float(sol[self.n])

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.D2 @ w + self.b * (self.D1 @ w)


def v0_derivative(z, D: float, k: int = 0):
    """k-th z-derivative of v0(z) = z exp(-z^2/(4D)), via Hermite polynomials."""
    z = np.asarray(z, dtype=float)
    sq = math.sqrt(D)
    s = z / (2.0 * sq)
    c = np.zeros(k + 2)
    c[k + 1] = 1.0
    return sq * (2.0 * sq) ** (-k) * (-1.0) ** k * hermval(s, c) * np.exp(-s * s)


def solve_p0(D: float, forcing, m_coef: float = 1.5, z_max: float = 12.0, dz: float = 1e-3):
    """RK4 for m p + (z/2) p' + D p'' = forcing(z), p(0) = p'(0) = 0, on [0, z_max].

    Returns (z, p, p') on the step grid.  ``forcing`` must accept arrays.
    """
    n = int(math.ceil(z_max / dz))
    z = np.linspace(0.0, n * dz, n + 1)
    h = z[1] - z[0]
    f0 = forcing(z)
    fh = forcing(z[:-1] + 0.5 * h)
    p = np.zeros(n + 1)
    q = np.zeros(n + 1)

    def acc(zz, pp, qq, ff):
        return (ff - m_coef * pp - 0.5 * zz * qq) / D

    pi, qi = 0.0, 0.0
    for i in range(n):
        zi = z[i]
        k1p, k1q = qi, acc(zi, pi, qi, f0[i])
        k2p, k2q = qi + 0.5 * h * k1q, acc(zi + 0.5 * h, pi + 0.5 * h * k1p, qi + 0.5 * h * k1q, fh[i])
        k3p, k3q = qi + 0.5 * h * k2q, acc(zi + 0.5 * h, pi + 0.5 * h * k2p, qi + 0.5 * h * k2q, fh[i])
        k4p, k4q = qi + h * k3q, acc(zi + h, pi + h * k3p, qi + h * k3q, f0[i + 1])
        pi = pi + h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0
        qi = qi + h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        p[i + 1] = pi
        q[i + 1] = qi
    return z, p, q


@dataclass
class ThetaAppExpansion:
    """Coefficient functions of the approximate solution.

    Periodic cell functions are stored as :class:`PeriodicFunction` series
    with the constant ``chi_bar`` already included in ``chi0``.  ``p0`` is a
    C^2 piecewise quintic built from the RK4 values and the ODE.
    """

    kappa_eff: float
    chi_bar: float
    beta1: float
    beta2: float
    c_star: float
    lambda_star: float
    r: float
    chi0: PeriodicFunction
    vhat2: PeriodicFunction
    w1: PeriodicFunction
    w3: PeriodicFunction
    w5: PeriodicFunction
    drift: PeriodicFunction
    p0_form: str
    z_max: float
    _p0: BPoly = field(repr=False)
    _p0_z: np.ndarray = field(repr=False)
    _p0_tail: tuple = field(repr=False)
    solvability: dict = field(default_factory=dict)

    @property
    def D(self) -> float:
        return 1.0 + self.kappa_eff

    # profiles in z -------------------------------------------------------
    def v0(self, z, k: int = 0):
        return v0_derivative(z, self.D, k)

    def p0(self, z, k: int = 0):
        """k-th derivative of p0 (k <= 2); beyond z_max the algebraic tail A z^-m is used."""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        inside = z <= self.z_max
        if np.any(inside):
            out[inside] = self._p0.derivative(k)(z[inside]) if k else self._p0(z[inside])
        if np.any(~inside):
            A, m = self._p0_tail
            zz = z[~inside]
            fac = {0: 1.0, 1: -m / zz, 2: m * (m + 1) / zz**2}[k]
            out[~inside] = A * zz ** (-m) * fac
        return out

    # full orders ----------------------------------------------------------
    def v1(self, z, x):
        return self.v0(z, 1) * self.chi0(x) - self.p0(z)

    def v2(self, z, x):
        return self.v0(z, 2) * self.vhat2(x) - self.p0(z, 1) * self.chi0(x)

    def v3(self, z, x):
        return (-1.5 * self.v0(z, 1) * self.w1(x) - 0.5 * z * self.v0(z, 2) * self.w1(x)
                + self.v0(z, 3) * self.w3(x) + self.p0(z, 2) * self.w5(x))

    def theta(self, tau, x, order: int = 3):
        """Approximate solution at physical points x (arrays broadcast)."""
        tau = np.asarray(tau, dtype=float)
        x = np.asarray(x, dtype=float)
        z = (x - self.c_star * tau) / np.sqrt(tau)
        out = self.v0(z) / tau
        if order >= 1:
            out = out + self.v1(z, x) / tau**1.5
        if order >= 2:
            out = out + self.v2(z, x) / tau**2
        if order >= 3:
            out = out + self.v3(z, x) / tau**2.5
        return out

    def leading_order(self, tau, x):
        """(x - c* tau + chi0(x)) tau^-3/2 exp(-(x - c* tau)^2 / (4 (1 + kappa) tau))."""
        y = np.asarray(x, dtype=float) - self.c_star * tau
        return (y + self.chi0(x)) * tau**-1.5 * np.exp(-(y * y) / (4.0 * self.D * tau))

    def dump_z(self, z):
        z = np.asarray(z, dtype=float)
        return np.column_stack([z, self.v0(z), self.p0(z)])

    def dump_zx(self, z, x):
        Z, X = np.meshgrid(np.asarray(z, float), np.asarray(x, float), indexing="ij")
        Z, X = Z.ravel(), X.ravel()
        return np.column_stack([Z, X, self.v1(Z, X), self.v2(Z, X), self.v3(Z, X)])


def build_theta_app(bundle: SpeedBundle, kernel: Optional[AdjointKernel] = None, chi_bar: float = 0.0,
                    sigma: float = 1.0, r: Optional[float] = None, n_colloc: int = 128,
                    p0_form: str = "derived", z_max: float = 12.0, dz: float = 1e-3,
                    tol: float = 1e-8, speed_tol: float = 1e-6) -> ThetaAppExpansion:
    """Assemble v0..v3, p0, beta1, beta2 for the drift of ``bundle``.

    ``p0_form`` selects the p0 equation.  "derived" (default) is the
    solvability condition of the order tau^-5/2 terms,
        (3/2) p + (z/2) p' + (1+kappa) p'' = beta1 v0''' + beta2 (z/2) v0'' + ((3/2) beta2 - r) v0',
    and "alternate" the variant 2 p + ... = ... + (r - 2 beta2) v0'.  Only
    the derived form cancels the tau^-5/2 residual; the other is kept so the
    difference can be measured.  ``sigma`` is the z-extent of interest and
    only widens ``z_max`` if needed.

    ``tol`` bounds the eta-means of the cell right sides after their
    solvability constants are removed.  The order R^-1 mean <b + c*>_eta is
    limited by the accuracy of c* and is checked against ``speed_tol``.
    """
    if p0_form not in ("derived", "alternate"):
        raise ValueError("p0_form must be 'derived' or 'alternate'")
    kernel = kernel or adjoint_kernel(bundle)
    c = bundle.c_star
    lam = bundle.lambda_star
    r = 1.5 / lam if r is None else float(r)
    b = bundle.kappa_drift.truncated(1e-15, 1e-15)
    cs = CellSolver(b, n_colloc)
    eta = kernel.eta(cs.x)
    eta = eta / eta.mean()

    def emean(f):
        return float(np.mean(eta * f))

    solv = {}

    def cell(F, name):
        w, s = cs.solve(F)
        solv[name] = abs(s - emean(F))
        return w, s

    bb = cs.b
    # order 1: chi with L chi = -(b + c), shifted by chi_bar
    chi, s1 = cell(-(bb + c), "chi")
    solv["order1_defect"] = abs(s1)
    chi0 = chi + chi_bar
    dchi = cs.derivative(chi0)
    F2 = (c + bb) * chi0 + 2.0 * dchi
    kappa = emean(F2)
    if not 1.0 + kappa > 0:
        raise ConsistencyError("1 + kappa must be positive", values=(kappa,))
    solv["kappa_vs_bundle"] = abs(kappa - bundle.kappa_eff) if bundle.kappa_eff is not None else float("nan")
    # order 2: L vhat2 = -(F2 - kappa)
    vh2, s2 = cell(-(F2 - kappa), "vhat2")
    solv["order2_defect"] = abs(s2)
    dvh2 = cs.derivative(vh2)
    beta2 = emean(chi0)
    beta1 = emean(chi0 + (c + bb) * vh2 + 2.0 * dvh2)
    # order 3 cell functions (each right side has zero eta-mean)
    w1, s3a = cell(chi0 - beta2, "w1")
    w3, s3b = cell(beta1 - chi0 - (c + bb) * vh2 - 2.0 * dvh2, "w3")
    w5, s3c = cell(F2 - kappa, "w5")
    solv["order3_defect"] = max(abs(s3a), abs(s3b), abs(s3c))
    orders = {"chi": "R^-1", "vhat2": "R^-2", "w1": "R^-3", "w3": "R^-3", "w5": "R^-3"}
    for name, order in orders.items():
        if solv[name] > tol:
            raise ConsistencyError(f"cell problem solvability residual {solv[name]:.3e} at order {order}",
                                   values=(order, solv[name]))
    for name, order in (("order2_defect", "R^-2"), ("order3_defect", "R^-3")):
        if solv[name] > tol:
            raise ConsistencyError(f"right side at order {order} has eta-mean {solv[name]:.3e}",
                                   values=(order, solv[name]))
    # <b + c*>_eta vanishes only up to the discretisation error of c*
    if solv["order1_defect"] > speed_tol:
        raise ConsistencyError(f"eta-mean of b + c* is {solv['order1_defect']:.3e} at order R^-1",
                               values=("R^-1", solv["order1_defect"]))
    D = 1.0 + kappa
    if p0_form == "derived":
        m_coef, a1 = 1.5, 1.5 * beta2 - r
    else:
        m_coef, a1 = 2.0, r - 2.0 * beta2

    def forcing(z):
        return (beta1 * v0_derivative(z, D, 3) + beta2 * 0.5 * z * v0_derivative(z, D, 2)
                + a1 * v0_derivative(z, D, 1))

    zm = max(z_max, 1.5 * sigma)
    z, p, q = solve_p0(D, forcing, m_coef, zm, dz)
    pzz = (forcing(z) - m_coef * p - 0.5 * z * q) / D
    poly = BPoly.from_derivatives(z, np.column_stack([p, q, pzz]))
    # algebraic tail A z^-m of the homogeneous equation, matched at z_max
    tail = (float(p[-1] * z[-1] ** m_coef), m_coef)

    def series(v):
        return PeriodicFunction.from_samples(v)

    return ThetaAppExpansion(kappa_eff=kappa, chi_bar=float(chi_bar), beta1=beta1, beta2=beta2, c_star=c,
                             lambda_star=lam, r=r, chi0=series(chi0), vhat2=series(vh2), w1=series(w1),
                             w3=series(w3), w5=series(w5), drift=b, p0_form=p0_form, z_max=float(z[-1]),
                             _p0=poly, _p0_z=z, _p0_tail=tail, solvability=solv)


def theta_app_residual(exp: ThetaAppExpansion, bundle: SpeedBundle, cfg: ShiftedFrameConfig, tau: float,
                       sigma: float = 1.0, hx: float = 5e-3, dx_sample: float = 0.02,
                       dz_tau: float = 1e-2, return_profile: bool = False):
    """Max over x in (c* tau, c* tau + sigma sqrt(tau)] of |(1 - omega) theta_tau - theta_xx - b theta_x|.

    Derivatives are fourth-order central differences: step ``hx`` in x, and
    in tau a step that moves z by about ``dz_tau``.  The residual is sampled every ``dx_sample``.
    """
    if tau < 10:
        raise ValueError("tau must be at least 10")
    c = exp.c_star
    n = max(2, int(math.ceil(sigma * math.sqrt(tau) / dx_sample)))
    x = c * tau + np.linspace(sigma * math.sqrt(tau) / n, sigma * math.sqrt(tau), n)
    th = exp.theta
    dtau = dz_tau * math.sqrt(tau) / c
    th_t = (-th(tau + 2 * dtau, x) + 8 * th(tau + dtau, x) - 8 * th(tau - dtau, x) + th(tau - 2 * dtau, x)) / (
        12.0 * dtau)
    f = [th(tau, x + k * hx) for k in (-2, -1, 0, 1, 2)]
    th_x = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12.0 * hx)
    th_xx = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12.0 * hx * hx)
    om = float(cfg.omega(tau))
    res = (1.0 - om) * th_t - th_xx - exp.drift(x) * th_x
    val = float(np.max(np.abs(res)))
    return (val, x, res) if return_profile else val


def residual_sweep(exp, bundle, cfg, taus, sigma: float = 1.0, **kw):
    """Residuals over ``taus`` and the fitted log-log exponent."""
    from .analysis import power_law_fit

    taus = np.asarray(taus, dtype=float)
    res = np.array([theta_app_residual(exp, bundle, cfg, t, sigma, **kw) for t in taus])
    fit = power_law_fit(taus, res)
    return res, fit


def leading_order_constant(exp: ThetaAppExpansion, taus, sigma: float = 1.0, n_z: int = 200, n_x: int = 64):
    """Smallest C with |theta - leading| <= C tau^-3/2 z^2 + tau^-2 M(tau) on the sampled set.

    M(tau) = sup |v2 + v3/sqrt(tau)| is the explicit O(tau^-2) part, so C is
    the constant of the z^2 term alone.  Returns (C, per-tau values).
    """
    z = np.linspace(sigma / n_z, sigma, n_z)
    per = []
    xs = np.arange(n_x) / n_x
    for tau in np.asarray(taus, dtype=float):
        best = 0.0
        Mt = 0.0
        rows = []
        for k in range(n_x):
            # points with fixed phase x mod 1 = xs[k] (to a good approximation) along the window
            xp = exp.c_star * tau + z * math.sqrt(tau)
            xp = xp - np.mod(xp, 1.0) + xs[k]
            zz = (xp - exp.c_star * tau) / math.sqrt(tau)
            ok = zz > 0
            xp, zz = xp[ok], zz[ok]
            d = np.abs(exp.theta(tau, xp) - exp.leading_order(tau, xp))
            m2 = np.abs(exp.v2(zz, xp) + exp.v3(zz, xp) / math.sqrt(tau))
            Mt = max(Mt, float(m2.max()))
            rows.append((zz, d))
        for zz, d in rows:
            q = np.maximum(d - Mt * tau**-2, 0.0) * tau**1.5 / zz**2
            best = max(best, float(q.max()))
        per.append(best)
    per = np.array(per)
    return float(per.max()), per


# ---------------------------------------------------------------------------
# Bramson position


def bramson_position(bundle, t):
    """m(t) = c* t - (3/(2 lambda*)) log t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValueError("t must be at least 1")
    out = bundle.c_star * t - 1.5 / bundle.lambda_star * np.log(t)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# pulsating front


@dataclass
class FrontProfile:
    """Pulsating front phi(s, x mod 1), s = x - c* t, sampled on per-phase s-grids.

    ``bins[k]`` holds the sorted s-samples (and values) for x mod 1 = k h.
    Outside the sampled s-range phi is continued by its end values.
    """

    bins_s: list
    bins_u: list
    h: float
    B: float
    lambda_star: float
    c_star: float
    fit: dict = field(default_factory=dict)
    periodicity_residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def n_bins(self) -> int:
        return len(self.bins_s)

    def phi(self, s, x):
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        s, x = np.broadcast_arrays(s, x)
        pos = np.mod(x, 1.0) / self.h
        k0 = np.floor(pos).astype(int) % self.n_bins
        wgt = pos - np.floor(pos)
        out = np.zeros(s.shape)
        for k in np.unique(np.concatenate([k0.ravel(), ((k0 + 1) % self.n_bins).ravel()])):
            any0 = k0 == k
            any1 = (k0 + 1) % self.n_bins == k
            if not (np.any(any0) or np.any(any1)):
                continue
            vals = np.interp(s, self.bins_s[k], self.bins_u[k])
            out = out + np.where(any0, (1.0 - wgt) * vals, 0.0) + np.where(any1, wgt * vals, 0.0)
        return out

    def U(self, t, x):
        """U(t, x) = phi(x - c* t, x)."""
        x = np.asarray(x, dtype=float)
        return self.phi(x - self.c_star * t, x)


def _decay_fit(s, logq):
    """Fit log(phi/psi) by a + log(s - s0) - lam s and by a - lam s.

    The front is defined up to translation, so the origin s0 of the linear
    prefactor is a free parameter.  Returns the two parameter vectors and
    residual sums of squares.
    """
    from scipy.optimize import curve_fit

    def model(ss, a, s0, lam):
        return a + np.log(ss - s0) - lam * ss

    lo = float(s.min())
    e = linear_fit(s, logq)
    p, _ = curve_fit(model, s, logq, p0=[e.intercept, 0.0, -e.slope],
                     bounds=([-np.inf, -50.0, 0.0], [np.inf, 0.9 * lo, np.inf]))
    rss_lin = float(np.sum((logq - model(s, *p)) ** 2))
    rss_exp = float(np.sum((logq - (e.intercept + e.slope * s)) ** 2))
    return p, e, rss_lin, rss_exp


def pulsating_front(g: PeriodicFunction, f: ReactionSpec, bundle: SpeedBundle, relax_horizon: float = 1500.0,
                    h: float = 0.02, n_phase: int = 50, width: float = 300.0, back: float = 30.0,
                    fit_window=(5.0, 15.0), tol: float = 1e-3) -> FrontProfile:
    """Relax the nonlinear equation from min(1, exp(-lambda* x)) and extract the pulsating profile.

    The time step is 1/(c* n_phase), so one period of the medium in time is
    exactly n_phase steps.  Over the last period the u = 1/2 crossings fix an
    anchor shift (their phase average), which removes the slow logarithmic
    drift; the snapshots are then binned by x mod 1.  B and the decay rate
    come from the fit of log(phi/psi) on ``fit_window`` (see _decay_fit).  The periodicity
    residual compares u(t + 1/c*, x) with u(t, x - 1 - d), d the anchored
    displacement of the level over that period.
    """
    c, lam = bundle.c_star, bundle.lambda_star
    P = 1.0 / c
    dt = P / n_phase
    n_per = int(round(1.0 / h))
    if abs(n_per * h - 1.0) > 1e-12:
        raise ValueError("1/h must be an integer")
    n_periods = int(math.ceil(relax_horizon / P))
    t_end = n_periods * P
    frame = MovingFrame(left_edge=-float(back), speed=c, h=h, width=width)
    cut = -math.log(1e-13) / lam

    def u0(x):
        return np.where(x < cut, np.minimum(1.0, np.exp(-lam * np.maximum(x, 0.0))), 0.0)

    snaps_t = [t_end - P + j * dt for j in range(n_phase + 1)]
    run = run_nonlinear(u0, g, f, frame, dt, t_end, trace_every=P, snapshot_times=snaps_t, n_startup=0)
    snaps = run.snapshots
    if len(snaps) != n_phase + 1:
        raise RelaxationError("snapshot schedule does not match the phase grid")
    Xs = []
    for st in snaps:
        X, _ = level_positions_array(st.x, st.u, 0.5)
        if X is None:
            raise RelaxationError("u = 1/2 level not found in the relaxed profile")
        Xs.append(X)
    Xs = np.array(Xs)
    anchor = float(np.mean(Xs[:n_phase] - c * np.array([s.t for s in snaps[:n_phase]])))
    # periodicity residual
    a, e = snaps[0], snaps[-1]
    d = Xs[-1] - Xs[0] - 1.0
    spl = CubicSpline(a.x, a.u)
    xq = e.x - 1.0 - d
    okq = (xq >= a.x[0]) & (xq <= a.x[-1])
    per_res = float(np.max(np.abs(e.u[okq] - spl(xq[okq]))))
    if per_res > tol:
        raise RelaxationError(f"profile not periodic after t = {t_end:.1f}: residual {per_res:.2e}")
    bins_s = [[] for _ in range(n_per)]
    bins_u = [[] for _ in range(n_per)]
    fit_s, fit_q = [], []
    psi = bundle.psi_star.truncated()
    for st in snaps[:n_phase]:
        k = np.rint(np.mod(st.x, 1.0) / h).astype(int) % n_per
        s = st.x - c * st.t - anchor
        for kk in range(n_per):
            m = k == kk
            bins_s[kk].append(s[m])
            bins_u[kk].append(st.u[m])
        m = (s >= fit_window[0]) & (s <= fit_window[1]) & (st.u > 0)
        fit_s.append(s[m])
        fit_q.append(np.log(st.u[m] / psi(st.x[m])))
    bs, bu = [], []
    for kk in range(n_per):
        s_ = np.concatenate(bins_s[kk])
        u_ = np.concatenate(bins_u[kk])
        o = np.argsort(s_)
        bs.append(s_[o])
        bu.append(u_[o])
    fs = np.concatenate(fit_s)
    fq = np.concatenate(fit_q)
    p_lin, m_exp, rss_lin, rss_exp = _decay_fit(fs, fq)
    fit = {
        "lambda_fit": float(p_lin[2]),
        "s0": float(p_lin[1]),
        "lambda_fit_pure_exponential": -m_exp.slope,
        "rss_s_exp": rss_lin,
        "rss_exp": rss_exp,
        "rss_ratio": rss_exp / max(rss_lin, 1e-300),
        "window": list(fit_window),
        "n": int(fs.size),
    }
    meta = dict(run.meta)
    meta.update({"t_end": t_end, "anchor": anchor, "n_phase": n_phase, "dt": dt})
    return FrontProfile(bs, bu, h, float(math.exp(p_lin[0])), lam, c, fit, per_res, meta)


# ---------------------------------------------------------------------------
# convergence to the shifted front


@dataclass
class ConvergenceSeries:
    times: np.ndarray
    xi: np.ndarray
    distance: np.ndarray
    window: tuple
    edge_hits: int = 0

    def as_rows(self):
        return np.column_stack([self.times, self.xi, self.distance])


def _front_distance(state, profile, bundle, t, xi):
    x = state.x
    m = x >= 0.0
    L = 1.5 / (bundle.c_star * bundle.lambda_star) * math.log(t)
    return float(np.max(np.abs(state.u[m] - profile.U(t - L + xi, x[m]))))


def convergence_to_front(u_run, profile: FrontProfile, bundle: SpeedBundle, shift_window=None,
                         n_scan: int = 81, max_widen: int = 3, t_min: float = 1.0) -> ConvergenceSeries:
    """distance(t) = min over xi of sup_{x >= 0} |u(t, x) - U(t - (3/(2 c* lambda*)) log t + xi, x)|.

    The minimum is located by a scan of ``n_scan`` points followed by a
    bounded scalar search in the best scan cell.  A minimiser on the window
    edge triggers a warning and the window is doubled (at most ``max_widen``
    times).
    """
    c = bundle.c_star
    lo, hi = shift_window if shift_window is not None else (-5.0 / c, 5.0 / c)
    states = [s for s in u_run.snapshots if s.t >= t_min]
    ts, xis, ds = [], [], []
    edges = 0
    for st in states:
        a, b = lo, hi
        for attempt in range(max_widen + 1):
            grid_xi = np.linspace(a, b, n_scan)
            vals = np.array([_front_distance(st, profile, bundle, st.t, v) for v in grid_xi])
            i = int(np.argmin(vals))
            l = grid_xi[max(i - 1, 0)]
            r = grid_xi[min(i + 1, n_scan - 1)]
            res = minimize_scalar(lambda v: _front_distance(st, profile, bundle, st.t, v), bounds=(l, r),
                                  method="bounded", options={"xatol": 1e-6})
            xi, dist = float(res.x), float(res.fun)
            if vals[i] < dist:
                xi, dist = float(grid_xi[i]), float(vals[i])
            at_edge = i == 0 or i == n_scan - 1
            if not at_edge:
                break
            edges += 1
            warnings.warn(f"shift minimiser on the window edge at t = {st.t:.4g}; widening", RuntimeWarning)
            half = b - a
            a, b = a - half / 2.0, b + half / 2.0
        ts.append(st.t)
        xis.append(xi)
        ds.append(dist)
    return ConvergenceSeries(np.array(ts), np.array(xis), np.array(ds), (lo, hi), edges)
