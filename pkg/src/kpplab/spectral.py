"""Periodic spectral objects of the KPP problem.

Everything is discretised on the uniform periodic grid x_i = i/N with second
order central differences.  Principal eigenpairs come from shifted inverse
iteration on the sparse (banded plus corner) operator; eigenvalues are read off
with a two-sided quotient written in summation-by-parts form, which keeps the
rounding noise of gamma(lambda) near machine precision instead of growing like
eps * N**2.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize_scalar

from .errors import (
    BracketingError,
    CoefficientDomainError,
    ConsistencyError,
    ConvergenceError,
    DegeneracyError,
    InconsistentInputError,
    SearchError,
)
from .periodic import PeriodicFunction, grid

__all__ = [
    "FloquetResult",
    "SpeedBundle",
    "AdjointKernel",
    "periodic_operators",
    "solve_floquet",
    "floquet_gamma",
    "minimal_speed",
    "richardson_speed",
    "drift_coefficient",
    "invariant_density",
    "solve_cell_problem",
    "chi_zero",
    "adjoint_kernel",
    "effective_diffusivity",
    "perturbed_eigenvalue",
    "conjugate_rate",
    "fit_mu0",
    "speed_bundle",
    "weighted_mean",
]


# ---------------------------------------------------------------------------
# discrete operators


@lru_cache(maxsize=32)
def periodic_operators(N: int):
    """Central first and second difference matrices on the periodic N-grid."""
    h = 1.0 / N
    i = np.arange(N)
    ip = (i + 1) % N
    im = (i - 1) % N
    rows = np.concatenate([i, i])
    D1 = sp.csr_matrix(
        (np.concatenate([np.full(N, 0.5 / h), np.full(N, -0.5 / h)]), (rows, np.concatenate([ip, im]))),
        shape=(N, N),
    )
    D2 = sp.csr_matrix(
        (np.concatenate([np.full(N, 1 / h**2), np.full(N, 1 / h**2), np.full(N, -2 / h**2)]),
         (np.concatenate([i, i, i]), np.concatenate([ip, im, i]))),
        shape=(N, N),
    )
    return D1, D2


def _fwd(v):
    return np.roll(v, -1) - v


def _cdiff(v, h):
    return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h)


def weighted_mean(f, w) -> float:
    """Grid quadrature of f*w divided by that of w (samples or PeriodicFunctions)."""
    f = f.samples if isinstance(f, PeriodicFunction) else np.asarray(f)
    w = w.samples if isinstance(w, PeriodicFunction) else np.asarray(w)
    return float(np.dot(f, w) / np.sum(w))


def _principal_eigenpair(A, sigma, quotient, W=None, rtol=1e-12, max_iter=500):
    """Principal eigenpair of A v = gamma W v by shifted inverse iteration.

    Returns (gamma, right, left, residual, iterations).  The left vector is
    iterated with the transposed factorisation so that ``quotient(left, right)``
    is a two-sided estimate, accurate to second order in the vector errors.
    """
    N = A.shape[0]
    Wm = sp.identity(N, format="csr") if W is None else sp.diags(W)
    lu = spla.splu((sigma * Wm - A).tocsc())
    wv = np.ones(N) if W is None else np.asarray(W)
    v = np.ones(N)
    u = np.ones(N)
    scale = float(abs(A).sum(axis=1).max()) + abs(sigma)
    gam_old = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        v = lu.solve(wv * v)
        v /= v[np.argmax(np.abs(v))]
        u = lu.solve(wv * u, trans="T")
        u /= u[np.argmax(np.abs(u))]
        gam = quotient(u, v)
        res = float(np.max(np.abs(A @ v - gam * wv * v)))
        if res <= rtol * scale and abs(gam - gam_old) <= 4e-16 * max(1.0, abs(gam)) * 10:
            return gam, v, u, res, it
        gam_old = gam
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps", residual=res)


# ---------------------------------------------------------------------------
# Floquet problem


@dataclass(frozen=True, eq=False)
class FloquetResult:
    """Principal eigenpair of psi'' - 2 lam psi' + (lam^2 + g) psi = gamma psi.

    ``psi`` has unit mean; ``left`` is the discrete left eigenvector scaled so
    that mean(left * psi) = 1, and ``gamma_prime`` is the exact derivative of
    the discrete eigenvalue in lambda (left/right eigenvector formula).
    """

    lam: float
    gamma: float
    psi: PeriodicFunction
    residual: float
    left: np.ndarray = field(repr=False, default=None)
    gamma_prime: float = np.nan
    iterations: int = 0


def _check_g(g: PeriodicFunction, N: int):
    if N < 32:
        raise ValueError("N must be at least 32")
    gs = g.resample(N)
    gs.require_positive("g")
    return gs


def solve_floquet(g: PeriodicFunction, lam: float, N: int = 512, rtol: float = 1e-12,
                  max_iter: int = 500) -> FloquetResult:
    """Principal Floquet eigenpair for decay rate ``lam`` on the N-point grid.

    The eigenvalue converges at second order in 1/N.  ``lam = 0`` is allowed.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    gs = _check_g(g, N)
    h = 1.0 / N
    D1, D2 = periodic_operators(N)
    diag = lam**2 + gs.samples
    A = D2 - 2.0 * lam * D1 + sp.diags(diag)

    def quotient(u, v):
        num = -np.dot(_fwd(u), _fwd(v)) / h**2 - 2.0 * lam * np.dot(u, _cdiff(v, h)) + np.dot(diag * u, v)
        return num / np.dot(u, v)

    sigma = lam**2 + float(gs.samples.max()) + 1.0
    gam, v, u, res, it = _principal_eigenpair(A, sigma, quotient, rtol=rtol, max_iter=max_iter)
    if np.any(v <= 0):
        raise ConvergenceError("principal eigenvector is not positive", residual=res)
    mean = v.mean()
    v = v / mean
    res = res / mean
    u = u / np.mean(u * v)
    gp = np.mean(u * (-2.0 * _cdiff(v, h) + 2.0 * lam * v))
    return FloquetResult(float(lam), float(gam), PeriodicFunction.from_samples(v), float(res),
                         left=u, gamma_prime=float(gp), iterations=it)


def floquet_gamma(g, lam, N=512) -> float:
    return solve_floquet(g, lam, N).gamma


def _gamma_prime_fd(g, lam, N, rel_step=1e-4):
    """Central difference of gamma in lambda, Richardson-refined over steps d and d/2."""
    d = rel_step * lam

    def D(s):
        return (floquet_gamma(g, lam + s, N) - floquet_gamma(g, lam - s, N)) / (2.0 * s)

    return (4.0 * D(d / 2) - D(d)) / 3.0


# ---------------------------------------------------------------------------
# bundle of derived quantities


@dataclass(frozen=True, eq=False)
class SpeedBundle:
    """Minimal speed data plus the derived periodic fields (filled stage by stage)."""

    lambda_star: float
    c_star: float
    psi_star: PeriodicFunction
    g: PeriodicFunction = None
    N: int = 512
    gamma_star: float = np.nan
    psi_left: np.ndarray = field(default=None, repr=False)
    kappa_drift: PeriodicFunction = None
    nu: PeriodicFunction = None
    chi0: PeriodicFunction = None
    eta: PeriodicFunction = None
    kappa_eff: float = None
    mu0: float = None
    residuals: dict = field(default_factory=dict)
    extrapolated: dict = None

    def replace(self, **kw) -> "SpeedBundle":
        res = dict(self.residuals)
        res.update(kw.pop("residuals", {}))
        return dataclasses.replace(self, residuals=res, **kw)

    @property
    def is_homogeneous(self) -> bool:
        return self.g is not None and self.g.is_constant()

    def summary(self) -> dict:
        """JSON-ready scalar summary."""
        return {
            "lambda_star": self.lambda_star,
            "c_star": self.c_star,
            "kappa_eff": self.kappa_eff,
            "mu0": self.mu0,
            "N": self.N,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "extrapolated": self.extrapolated,
        }


def minimal_speed(g: PeriodicFunction, N: int = 512, lam_range=(0.05, 20.0), n_scan: int = 49,
                  richardson: bool = False) -> SpeedBundle:
    """lambda* = argmin gamma(lambda)/lambda and c* = gamma(lambda*)/lambda*.

    A logarithmic scan brackets the minimiser, golden-section search refines
    it, and Newton's method on lambda*gamma'(lambda) - gamma(lambda) polishes
    it.  With ``richardson=True`` the values from N and N/2 are extrapolated
    and stored in ``bundle.extrapolated``.
    """
    gs = _check_g(g, N)
    lams = np.geomspace(lam_range[0], lam_range[1], n_scan)
    q = np.array([floquet_gamma(gs, l, N) / l for l in lams])
    i = int(np.argmin(q))
    if i == 0 or i == n_scan - 1:
        raise SearchError("minimiser of gamma/lambda not bracketed by the scan",
                          interval=(float(lams[0]), float(lams[-1])))
    res = minimize_scalar(lambda l: floquet_gamma(gs, l, N) / l, bracket=(lams[i - 1], lams[i], lams[i + 1]),
                          method="golden", tol=1e-10)
    lam_golden = float(res.x)

    lam = lam_golden
    for _ in range(30):
        fr = solve_floquet(gs, lam, N)
        F = lam * fr.gamma_prime - fr.gamma
        d = 1e-4 * lam
        gpp = (solve_floquet(gs, lam + d, N).gamma_prime - solve_floquet(gs, lam - d, N).gamma_prime) / (2 * d)
        step = F / (lam * gpp)
        lam -= step
        if abs(step) <= 1e-14 * lam:
            break
    fr = solve_floquet(gs, lam, N)
    c = fr.gamma / lam
    gp_fd = _gamma_prime_fd(gs, lam, N)
    residuals = {
        "gamma_prime_fd_minus_c": gp_fd - c,
        "gamma_prime_minus_c": fr.gamma_prime - c,
        "floquet_residual": fr.residual,
        "golden_newton_gap": abs(lam_golden - lam),
    }
    extrap = None
    if richardson:
        coarse = minimal_speed(gs.resample(N // 2), N // 2, lam_range, n_scan)
        extrap = {
            "lambda_star": (4.0 * lam - coarse.lambda_star) / 3.0,
            "c_star": (4.0 * c - coarse.c_star) / 3.0,
            "N_coarse": N // 2,
        }
    return SpeedBundle(lambda_star=float(lam), c_star=float(c), psi_star=fr.psi, g=gs, N=N,
                       gamma_star=fr.gamma, psi_left=fr.left, residuals=residuals, extrapolated=extrap)


def richardson_speed(g: PeriodicFunction, N: int = 256):
    """(lambda*, c*) Richardson-extrapolated from grids N and N/2."""
    b = minimal_speed(g, N, richardson=True)
    return b.extrapolated["lambda_star"], b.extrapolated["c_star"]


def drift_coefficient(bundle: SpeedBundle) -> PeriodicFunction:
    """kappa(x) = -2 lambda* + 2 psi'/psi, with psi' taken spectrally."""
    psi = bundle.psi_star
    if np.any(psi.samples <= 0):
        raise CoefficientDomainError("psi has non-positive samples")
    k = -2.0 * bundle.lambda_star + 2.0 * psi.derivative().samples / psi.samples
    return PeriodicFunction.from_samples(k)


def _adjoint_drift_operator(kappa: PeriodicFunction, N: int):
    D1, D2 = periodic_operators(N)
    return D2 - D1 @ sp.diags(kappa.resample(N).samples)


def invariant_density(kappa: PeriodicFunction, N: int | None = None, separation: float = 1e-6) -> PeriodicFunction:
    """Positive periodic nu with nu'' - (kappa nu)' = 0 and unit mean.

    Computed as the principal null vector of the transpose of the discrete
    operator d^2 + kappa d.  A second eigenvalue closer to 0 than
    ``separation`` times the operator scale is reported as degenerate.
    """
    N = N or kappa.N
    h = 1.0 / N
    M = _adjoint_drift_operator(kappa, N).tocsr()
    ks = kappa.resample(N).samples

    def quotient(u, v):
        # u^T (D2 - D1 diag(k)) v with the second difference in summed-by-parts form
        return (-np.dot(_fwd(u), _fwd(v)) / h**2 + np.dot(_cdiff(u, h) * ks, v)) / np.dot(u, v)

    gam, v, u, res, _ = _principal_eigenpair(M, 1.0, quotient)
    if np.any(v <= 0):
        raise DegeneracyError("null vector of the adjoint operator changes sign")
    # spectral gap: the two eigenvalues of M nearest to zero
    try:
        vals = spla.eigs(M.tocsc(), k=2, sigma=0.25, which="LM", v0=np.ones(N) + 0.1 * np.sin(2 * np.pi * grid(N)),
                         return_eigenvectors=False)
        second = float(np.max(np.abs(vals)))
    except spla.ArpackNoConvergence:  # gap check is advisory; the eigenvector is already validated
        second = np.inf
    if second < separation * (2 * np.pi) ** 2:
        raise DegeneracyError(f"second eigenvalue {second:.3e} is too close to zero")
    return PeriodicFunction.from_samples(v / v.mean())


def solve_cell_problem(kappa: PeriodicFunction, rhs, N: int | None = None):
    """Solve w'' + kappa w' = rhs - s with mean(w) = 0.

    ``s`` is returned alongside w: it is the solvability constant, i.e. the
    discrete nu-weighted average of ``rhs``.  Bordered sparse solve.
    """
    N = N or kappa.N
    D1, D2 = periodic_operators(N)
    L = D2 + sp.diags(kappa.resample(N).samples) @ D1
    r = rhs.resample(N).samples if isinstance(rhs, PeriodicFunction) else np.asarray(rhs, dtype=float)
    ones = np.ones((N, 1))
    B = sp.bmat([[L, sp.csr_matrix(ones)], [sp.csr_matrix(ones.T / N), None]], format="csc")
    sol = spla.spsolve(B, np.concatenate([r, [0.0]]))
    return PeriodicFunction.from_samples(sol[:N]), float(sol[N])


def chi_zero(kappa: PeriodicFunction, c_star: float, nu: PeriodicFunction | None = None,
             tol: float = 1e-6) -> PeriodicFunction:
    """Zero-mean periodic solution of chi'' + kappa chi' = -kappa - c*."""
    nu = nu if nu is not None else invariant_density(kappa)
    defect = weighted_mean(kappa.resample(nu.N).samples + c_star, nu)
    if abs(defect) > tol:
        raise InconsistentInputError(f"solvability defect {defect:.3e} exceeds {tol:.1e}")
    chi, _ = solve_cell_problem(kappa, -(kappa.samples + c_star))
    return chi


# ---------------------------------------------------------------------------
# adjoint kernel and effective constant


@dataclass(frozen=True, eq=False)
class AdjointKernel:
    """eta = phi^2 int_0^x phi^-2 + k2 phi^2 with phi^2 = exp(-rate x) psi^2.

    ``phi_hat_sq`` stores only the periodic factor psi^2; ``rate`` = 2 lambda*.
    """

    eta: PeriodicFunction
    k2: float
    phi_hat_sq: PeriodicFunction
    rate: float
    periodicity_gap: float = 0.0


def adjoint_kernel(bundle: SpeedBundle, n_gauss: int = 8, tol: float = 1e-10) -> AdjointKernel:
    """Build eta by quadrature of the closed-form expression."""
    psi = bundle.psi_star.truncated()
    N = bundle.N
    lam = bundle.lambda_star
    xg, wg = leggauss(n_gauss)
    h = 1.0 / N
    left = grid(N)
    nodes = left[:, None] + 0.5 * h * (xg[None, :] + 1.0)
    integrand = np.exp(2.0 * lam * nodes) / psi(nodes) ** 2
    cell = 0.5 * h * integrand @ wg
    I = np.concatenate([[0.0], np.cumsum(cell)])  # int_0^{x_i} for i = 0..N
    p0 = float(psi(0.0)) ** 2
    q = psi.samples**2 * np.exp(-2.0 * lam * left)
    q1 = p0 * np.exp(-2.0 * lam)
    if not p0 > q1:
        raise ConsistencyError("phi_hat^2(0) <= phi_hat^2(1); upstream data is corrupt", values=(p0, q1))
    k2 = q1 / (p0 - q1) * I[-1]
    eta = q * (I[:-1] + k2)
    gap = abs(q1 * (I[-1] + k2) - p0 * k2)
    if gap > tol * max(1.0, abs(eta).max()):
        raise ConsistencyError(f"eta is not periodic (gap {gap:.3e})", values=(gap,))
    eta_f = PeriodicFunction.from_samples(eta)
    eta_f.require_positive("eta")
    psi_sq = PeriodicFunction.from_samples(bundle.psi_star.samples**2)
    return AdjointKernel(eta_f, float(k2), psi_sq, 2.0 * lam, float(gap))


def effective_diffusivity(bundle: SpeedBundle, kernel: AdjointKernel, tol: float = 1e-6,
                          return_check: bool = False):
    """kappa_eff = <c* chi + 2 chi' + kappa chi>_eta, cross-checked by 1 + kappa_eff = <(1 + chi')^2>_eta."""
    chi = bundle.chi0
    kap = bundle.kappa_drift
    eta = kernel.eta
    dchi = chi.derivative().samples
    formula = weighted_mean((bundle.c_star + kap.samples) * chi.samples + 2.0 * dchi, eta)
    identity = weighted_mean((1.0 + dchi) ** 2, eta) - 1.0
    if abs(formula - identity) > tol:
        raise ConsistencyError(f"kappa_eff formula {formula!r} vs identity {identity!r}", values=(formula, identity))
    if not 1.0 + formula > 0:
        raise ConsistencyError("1 + kappa_eff must be positive", values=(formula, identity))
    return (formula, identity) if return_check else formula


# ---------------------------------------------------------------------------
# perturbed eigenvalue mu(alpha)


def perturbed_eigenvalue(nu: PeriodicFunction, c_star: float, alpha: float, N: int | None = None) -> float:
    """mu(alpha) = alpha^2 + gamma(alpha) for the alpha-perturbed weighted cell operator.

    The generalised problem
        (nu e')' + alpha (nu e)' + (c* + alpha nu) e' + c* alpha (1 - nu) e = gamma nu e
    is discretised in flux form with nu at half nodes, so constants give
    gamma(0) = 0 and, for nu = 1, gamma = 0 for every alpha.
    """
    if abs(alpha) > 0.5:
        raise ValueError("|alpha| must be at most 0.5")
    N = N or nu.N
    h = 1.0 / N
    x = grid(N)
    nv = nu.resample(N).samples
    nh = nu(x + 0.5 * h)  # nu_{i+1/2}
    nhm = np.roll(nh, 1)  # nu_{i-1/2}
    i = np.arange(N)
    ip, im = (i + 1) % N, (i - 1) % N
    K = sp.csr_matrix((np.concatenate([nh, nhm, -(nh + nhm)]) / h**2,
                       (np.concatenate([i, i, i]), np.concatenate([ip, im, i]))), shape=(N, N))
    D1, _ = periodic_operators(N)
    zero = c_star * alpha * (1.0 - nv)
    A = K + alpha * (D1 @ sp.diags(nv)) + sp.diags(c_star + alpha * nv) @ D1 + sp.diags(zero)

    def quotient(u, v):
        num = (-np.dot(nh * _fwd(u), _fwd(v)) / h**2 + alpha * np.dot(u, _cdiff(nv * v, h))
               + np.dot(u * (c_star + alpha * nv), _cdiff(v, h)) + np.dot(u * zero, v))
        return num / np.dot(u * nv, v)

    sigma = 1.0 + abs(c_star * alpha) * float(np.max(np.abs(1.0 - nv) / nv)) + alpha**2
    gam, *_ = _principal_eigenpair(A, sigma, quotient, W=nv)
    return float(alpha**2 + gam)


def conjugate_rate(nu: PeriodicFunction, c_star: float, alpha: float, N: int | None = None,
                   bracket=None, max_iter: int = 200) -> float:
    """beta > 0 with mu(-beta) = mu(alpha), by bisection."""
    if not 0 < alpha <= 0.2:
        raise ValueError("alpha must lie in (0, 0.2]")
    target = perturbed_eigenvalue(nu, c_star, alpha, N)

    def F(b):
        return perturbed_eigenvalue(nu, c_star, -b, N) - target

    a, b = bracket if bracket is not None else (0.5 * alpha, min(2.0 * alpha, 0.5))
    Fa, Fb = F(a), F(b)
    if Fa == 0:
        return a
    if Fb == 0:
        return b
    if np.sign(Fa) == np.sign(Fb):
        raise BracketingError(f"mu(-beta) - mu(alpha) has no sign change on [{a}, {b}]")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        Fm = F(m)
        if Fm == 0:
            return m
        if np.sign(Fm) == np.sign(Fa):
            a, Fa = m, Fm
        else:
            b, Fb = m, Fm
    return a if abs(Fa) <= abs(Fb) else b


def fit_mu0(nu: PeriodicFunction, c_star: float, alphas=None, N: int | None = None) -> dict:
    """Least-squares fit mu(alpha) = mu0 alpha^2 + mu3 alpha^3 over ``alphas``."""
    alphas = np.asarray(alphas if alphas is not None else np.arange(1, 9) * 0.01)
    mus = np.array([perturbed_eigenvalue(nu, c_star, a, N) for a in alphas])
    X = np.column_stack([alphas**2, alphas**3])
    (mu0, mu3), *_ = np.linalg.lstsq(X, mus, rcond=None)
    return {"mu0": float(mu0), "mu3": float(mu3), "alphas": alphas, "mu": mus}


# ---------------------------------------------------------------------------
# full pipeline


def speed_bundle(g: PeriodicFunction, N: int = 512, richardson: bool = False, mu_alphas=None,
                 identity_tol: float = 1e-6) -> SpeedBundle:
    """Run every stage and return a fully populated bundle."""
    b = minimal_speed(g, N, richardson=richardson)
    kap = drift_coefficient(b)
    nu = invariant_density(kap, N)
    chi = chi_zero(kap, b.c_star, nu)
    b = b.replace(kappa_drift=kap, nu=nu, chi0=chi)
    ker = adjoint_kernel(b)
    b = b.replace(eta=ker.eta)
    ke, ke_id = effective_diffusivity(b, ker, tol=identity_tol, return_check=True)
    fit = fit_mu0(nu, b.c_star, mu_alphas, N)
    nu_left = b.psi_left * b.psi_star.samples
    nu_left = nu_left / nu_left.mean()
    return b.replace(
        kappa_eff=ke,
        mu0=fit["mu0"],
        residuals={
            "kappa_nu_plus_c": float(np.mean(kap.samples * nu.samples) + b.c_star),
            "kappa_eff_identity_gap": ke - ke_id,
            "chi0_mean": chi.mean,
            "eta_periodicity_gap": ker.periodicity_gap,
            "nu_vs_left_right_product": float(np.max(np.abs(nu.samples - nu_left))),
            "mu3": fit["mu3"],
        },
    )
