"""Compiled inner loops for the time steppers.

Kept separate from the user-facing modules so that the numba signatures stay
simple: every argument is a scalar or a contiguous float64 array.
"""

import numpy as np
from numba import njit

LOGISTIC = 0
POLYNOMIAL = 1

RIGHT_DIRICHLET = 0
RIGHT_NEUMANN = 1


@njit(cache=True)
def _poly(coeffs, s):
    acc = 0.0
    for k in range(coeffs.size - 1, -1, -1):
        acc = acc * s + coeffs[k]
    return acc


@njit(cache=True)
def _react(u, gdt, kind, coeffs):
    """Advance u' = g f(u) over a substep; gdt = g * substep."""
    if kind == LOGISTIC:
        e = np.exp(gdt)
        return u * e / (1.0 - u + u * e)
    k1 = _poly(coeffs, u)
    k2 = _poly(coeffs, u + 0.5 * gdt * k1)
    k3 = _poly(coeffs, u + 0.5 * gdt * k2)
    k4 = _poly(coeffs, u + gdt * k3)
    return u + gdt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


@njit(cache=True)
def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; lower[0] and upper[-1] are ignored."""
    n = diag.size
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@njit(cache=True)
def _factor_neumann_dirichlet(n, r, theta):
    """Thomas factors of I - theta r Delta (Neumann at node 0, zero beyond node n-1)."""
    cp = np.empty(n)
    inv = np.empty(n)
    lo = -theta * r
    d = 1.0 + 2.0 * theta * r
    m = d
    inv[0] = 1.0 / m
    cp[0] = -2.0 * theta * r * inv[0]
    for i in range(1, n):
        m = d - lo * cp[i - 1]
        inv[i] = 1.0 / m
        cp[i] = lo * inv[i]
    return cp, inv


@njit(cache=True)
def _solve_factored(v, rhs, cp, inv, lo):
    n = v.size
    rhs[0] = rhs[0] * inv[0]
    for i in range(1, n):
        rhs[i] = (rhs[i] - lo * rhs[i - 1]) * inv[i]
    v[n - 1] = rhs[n - 1]
    for i in range(n - 2, -1, -1):
        v[i] = rhs[i] - cp[i] * v[i + 1]


@njit(cache=True)
def _react_all(v, eg, gh, kind, coeffs):
    n = v.size
    if kind == LOGISTIC:
        for i in range(n):
            ui = v[i]
            v[i] = ui * eg[i] / (1.0 - ui + ui * eg[i])
    else:
        for i in range(n):
            v[i] = _react(v[i], gh[i], kind, coeffs)


@njit(cache=True)
def nonlinear_steps(u, nsteps, dt, h, D, gnodes, kind, coeffs, n_startup):
    """Strang-split steps: half reaction, Crank-Nicolson diffusion, half reaction.

    The first ``n_startup`` steps replace the Crank-Nicolson solve by two
    backward-Euler half steps (Rannacher start) to damp rough initial data.
    Returns the new array and the extreme values seen.
    """
    n = u.size
    v = u.copy()
    rhs = np.empty(n)
    gh = 0.5 * dt * gnodes
    eg = np.exp(gh)
    lo_v = np.inf
    hi_v = -np.inf
    r = D * dt / (h * h)
    cp_cn, inv_cn = _factor_neumann_dirichlet(n, r, 0.5)
    cp_be, inv_be = _factor_neumann_dirichlet(n, 0.5 * r, 1.0)
    a = 0.5 * r
    for step in range(nsteps):
        _react_all(v, eg, gh, kind, coeffs)
        if step < n_startup:
            for rep in range(2):
                for i in range(n):
                    rhs[i] = v[i]
                _solve_factored(v, rhs, cp_be, inv_be, -0.5 * r)
        else:
            rhs[0] = v[0] + a * 2.0 * (v[1] - v[0])
            for i in range(1, n - 1):
                rhs[i] = v[i] + a * (v[i - 1] - 2.0 * v[i] + v[i + 1])
            rhs[n - 1] = v[n - 1] + a * (v[n - 2] - 2.0 * v[n - 1])
            _solve_factored(v, rhs, cp_cn, inv_cn, -0.5 * r)
        _react_all(v, eg, gh, kind, coeffs)
        for i in range(n):
            if v[i] < lo_v:
                lo_v = v[i]
            if v[i] > hi_v:
                hi_v = v[i]
    return v, lo_v, hi_v


@njit(cache=True)
def _series_at(mean, ca, sa, C, S, shift):
    """mean + sum_k ca_k cos(2 pi k (y + shift)) + sa_k sin(...) at the nodes tabulated in C, S."""
    K = ca.size
    n = C.shape[1]
    out = np.full(n, mean)
    for k in range(K):
        w = 2.0 * np.pi * (k + 1) * shift
        c = np.cos(w)
        s = np.sin(w)
        A = ca[k] * c + sa[k] * s
        B = -ca[k] * s + sa[k] * c
        for i in range(n):
            out[i] += A * C[k, i] + B * S[k, i]
    return out


@njit(cache=True)
def _series_point(mean, ca, sa, x):
    acc = mean
    for k in range(ca.size):
        w = 2.0 * np.pi * (k + 1) * x
        acc += ca[k] * np.cos(w) + sa[k] * np.sin(w)
    return acc


@njit(cache=True)
def _thomas_prefix(lower, diag, upper, rhs, n, cp, dp, x):
    """Thomas solve restricted to the first n unknowns, using work arrays."""
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]


# Values below TINY are far under any quantity of interest; the Dirichlet
# solver stops updating nodes beyond the last such value (plus a pad) so the
# arithmetic never enters the subnormal range, which is very slow.
TINY = 1e-250
ACTIVE_PAD = 64


@njit(cache=True)
def drift_cn_steps(U, nsteps, dt, h, t0, tsign, speed, dmean, dca, dsa, C, S,
                   adv, scale, right_mode, smean, sca, ssa, y_last):
    """Crank-Nicolson steps for U_s = scale * (U_yy + (b + adv) U_y) on a frame grid.

    b(t, y) is the series (dmean, dca, dsa) evaluated at x = y + speed * t, with
    physical time t = t0 + tsign * s.  ``adv`` and ``scale`` hold per-step
    values at the step times s_0..s_n.  U[0] is held at 0 (Dirichlet).  The
    right end is either U = 0 beyond the last node or a Neumann condition with
    slope given by the series (smean, sca, ssa) at x = y_last + speed * t.
    Table rows are cos/sin(2 pi k y) for the nodes y_1..y_{M-1}.

    With the Dirichlet right end only the active prefix of the grid is
    stepped: nodes past the last value above TINY (plus ACTIVE_PAD) stay 0.
    """
    M = U.size
    n = M - 1
    V = U.copy()
    ih2 = 1.0 / (h * h)
    ih = 0.5 / h
    t = t0
    b_old = _series_at(dmean, dca, dsa, C, S, speed * t)
    lower = np.empty(n)
    diag = np.empty(n)
    upper = np.empty(n)
    rhs = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    sol = np.empty(n)
    dirichlet = right_mode == RIGHT_DIRICHLET
    na = n
    if dirichlet:
        last = 0
        for i in range(M - 1, -1, -1):
            if abs(V[i]) > TINY:
                last = i
                break
        na = min(n, last + ACTIVE_PAD)
        for i in range(na + 1, M):
            V[i] = 0.0
    for step in range(nsteps):
        t_new = t0 + tsign * (step + 1) * dt
        b_new = _series_at(dmean, dca, dsa, C, S, speed * t_new)
        so = 0.5 * dt * scale[step]
        sn = 0.5 * dt * scale[step + 1]
        ao = adv[step]
        an = adv[step + 1]
        for j in range(na):
            i = j + 1
            bo = b_old[j] + ao
            um = V[i - 1]
            up = V[i + 1] if i + 1 < M else 0.0
            if i + 1 == M and right_mode == RIGHT_NEUMANN:
                slope = _series_point(smean, sca, ssa, y_last + speed * t)
                up = V[i - 1] + 2.0 * h * slope
            rhs[j] = V[i] + so * ((um - 2.0 * V[i] + up) * ih2 + bo * (up - um) * ih)
            bn = b_new[j] + an
            lower[j] = -sn * (ih2 - bn * ih)
            upper[j] = -sn * (ih2 + bn * ih)
            diag[j] = 1.0 + 2.0 * sn * ih2
        if right_mode == RIGHT_NEUMANN:
            slope_n = _series_point(smean, sca, ssa, y_last + speed * t_new)
            j = n - 1
            rhs[j] -= upper[j] * 2.0 * h * slope_n
            lower[j] += upper[j]
        _thomas_prefix(lower, diag, upper, rhs, na, cp, dp, sol)
        V[0] = 0.0
        for j in range(na):
            V[j + 1] = sol[j]
        if dirichlet:
            # grow the active prefix when the tail approaches its end
            if na < n and abs(V[na - ACTIVE_PAD // 2]) > TINY:
                na = min(n, na + ACTIVE_PAD)
        b_old = b_new
        t = t_new
    return V
