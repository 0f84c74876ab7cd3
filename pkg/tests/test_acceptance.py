"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Runs are shared through module fixtures, and each fixture reports its own
wall time so a criterion's budget covers the work it depends on.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpplab.analysis import FrontTrace, delay_fit, level_positions_array, power_law_fit, sigma_scan
from kpplab.asymptotics import (build_theta_app, convergence_to_front, leading_order_constant, pulsating_front,
                                residual_sweep)
from kpplab.bbm import BbmConfig, estimate_u
from kpplab.periodic import PeriodicFunction
from kpplab.rd_solver import (MovingFrame, ReactionSpec, ShiftedFrameConfig, SolverState, advance_nonlinear,
                              conserved_integral, indicator, linear_weight, run_nonlinear, solve_linear_dirichlet,
                              solve_shifted_dirichlet)
from kpplab.spectral import adjoint_kernel, minimal_speed, perturbed_eigenvalue, speed_bundle

from conftest import ACCEPTANCE_LINES, bump

MEDIA = {"homogeneous": PeriodicFunction.constant(1.0), "periodic": PeriodicFunction.from_coeffs(1.0, [0.5])}
LOGISTIC = ReactionSpec.logistic()


def record(n, ok, detail, elapsed, budget):
    fast = elapsed <= budget
    line = (f"criterion {n}: {'PASS' if ok and fast else 'FAIL'}  {detail}  "
            f"[{elapsed:.1f} s of {budget:g} s]")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert fast, line


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bundles():
    return {k: speed_bundle(g) for k, g in MEDIA.items()}


# --- 1-3: spectral ------------------------------------------------------


def test_criterion_01_spectral_exactness():
    b, el = timed(minimal_speed, MEDIA["homogeneous"], 256, richardson=True)
    lam, c = b.extrapolated["lambda_star"], b.extrapolated["c_star"]
    ok = abs(lam - 1) <= 1e-8 and abs(c - 2) <= 1e-8
    record(1, ok, f"lambda* - 1 = {lam - 1:.2e}, c* - 2 = {c - 2:.2e}", el, 1.0)


def test_criterion_02_identities():
    t0 = time.perf_counter()
    worst = {"gamma": 0.0, "nu": 0.0, "kappa": 0.0}
    positive = True
    for g in MEDIA.values():
        r = speed_bundle(g)
        worst["gamma"] = max(worst["gamma"], abs(r.residuals["gamma_prime_minus_c"]))
        worst["nu"] = max(worst["nu"], abs(r.residuals["kappa_nu_plus_c"]))
        worst["kappa"] = max(worst["kappa"], abs(r.residuals["kappa_eff_identity_gap"]))
        positive &= 1 + r.kappa_eff > 0
    el = time.perf_counter() - t0
    ok = worst["gamma"] <= 1e-6 and worst["nu"] <= 1e-8 and worst["kappa"] <= 1e-6 and positive
    record(2, ok, f"|gamma'-c*| {worst['gamma']:.1e}, |<kappa nu>+c*| {worst['nu']:.1e}, "
                  f"kappa gap {worst['kappa']:.1e}, 1+kappa > 0: {positive}", el, 5.0)


def test_criterion_03_mu_alpha():
    t0 = time.perf_counter()
    bh = speed_bundle(MEDIA["homogeneous"])
    err = max(abs(perturbed_eigenvalue(bh.nu, bh.c_star, a) - a * a) for a in (0.01, 0.05, 0.1))
    bp = speed_bundle(MEDIA["periodic"])
    rem = abs(bp.residuals["mu3"]) * 0.08**3
    quad = bp.mu0 * 0.08**2
    el = time.perf_counter() - t0
    ok = err <= 1e-8 and bp.mu0 > 0 and rem <= 0.1 * quad
    record(3, ok, f"homogeneous max error {err:.1e}; periodic mu0 = {bp.mu0:.6f}, cubic/quadratic = "
                  f"{rem / quad:.2e}", el, 10.0)


# --- 4, 5, 11: linear Dirichlet problem ---------------------------------

LIN_TIMES = np.linspace(50.0, 500.0, 91)


@pytest.fixture(scope="module")
def linear_runs(bundles):
    out = {}
    for k, g in MEDIA.items():
        out[k] = timed(solve_linear_dirichlet, g, bump, bundles[k], 500.0, dt=0.01, h=0.02, width=300.0,
                       output_times=LIN_TIMES)
    return out


def image_sup(t, y, nodes=200):
    """sup_y of the homogeneous solution w = e^-y p, p from the half-line heat kernel with images."""
    s, wq = np.polynomial.legendre.leggauss(nodes)
    s = 1.5 * (s + 1)
    wq = 1.5 * wq
    f = bump(s) * np.exp(s) * wq
    G = np.exp(-(y[:, None] - s) ** 2 / (4 * t)) - np.exp(-(y[:, None] + s) ** 2 / (4 * t))
    w = (G @ f) / np.sqrt(4 * np.pi * t) * np.exp(-y)
    return float(w.max())


def test_criterion_04_linear_decay(linear_runs):
    (rh, eh), (rp, ep) = linear_runs["homogeneous"], linear_runs["periodic"]
    t0 = time.perf_counter()
    fh = power_law_fit(rh.times, rh.sup_w(), (50, 500))
    fp = power_law_fit(rp.times, rp.sup_w(), (50, 500))
    keep = rh.times >= 50  # the initial state is stored too
    orc = np.array([image_sup(s.t, s.y[s.y <= 20 + 10 * np.sqrt(s.t)]) for s, k in zip(rh.states, keep) if k])
    fo = power_law_fit(rh.times[keep], orc)
    dev = float(np.max(np.abs(rh.sup_w()[keep] / orc - 1)))
    el = eh + ep + time.perf_counter() - t0
    ok = abs(fh.slope + 1.5) <= 0.05 and abs(fp.slope + 1.5) <= 0.10 and dev <= 1e-3
    record(4, ok, f"exponents {fh.slope:.4f} (oracle {fo.slope:.4f}, max relative gap {dev:.1e}) and "
                  f"{fp.slope:.4f} periodic", el, 120.0)


def test_criterion_05_lower_bound(linear_runs):
    parts = []
    ok = True
    el = 0.0
    for k in MEDIA:
        run, e = linear_runs[k]
        rows, best, widest = sigma_scan(run, [0.25, 0.5, 1, 1.5, 2, 3, 4], (50, 500))
        ok &= best.minimum > 0 and best.ratio <= 25
        el = max(el, e)
        parts.append(f"{k}: best sigma {best.sigma:g}, min {best.minimum:.4g}, ratio {best.ratio:.3f}, "
                     f"widest {widest.sigma if widest else None}")
    record(5, ok, "; ".join(parts), el, 120.0)


def test_criterion_11_conservation(bundles):
    t0 = time.perf_counter()
    ts = np.linspace(0.0, 200.0, 21)
    drifts = {}
    for k, g in MEDIA.items():
        b = bundles[k]
        F = linear_weight(b, 200.0, output_times=ts)
        run = solve_linear_dirichlet(g, bump, b, 200.0, output_times=ts)
        I = np.array([conserved_integral(s, F, b.nu) for s in run.states])
        drifts[k] = float(np.max(np.abs(I / I[0] - 1)))
    el = time.perf_counter() - t0
    record(11, max(drifts.values()) <= 1e-4,
           ", ".join(f"{k} max |I/I0 - 1| = {v:.2e}" for k, v in drifts.items()), el, 60.0)


# --- 6: shifted frame ----------------------------------------------------


def test_criterion_06_shifted_window(bundles):
    t0 = time.perf_counter()
    parts, ok = [], True
    for k, g in MEDIA.items():
        b = bundles[k]
        fc = ShiftedFrameConfig(b.c_star, b.lambda_star)
        run = solve_shifted_dirichlet(g, bump, b, fc, 1000.0, dt=0.02, h=0.05, width=400.0,
                                      output_times=np.linspace(100.0, 1000.0, 91))
        lo, hi = run.window_statistic(1.0, 0.5)
        m = run.taus >= 100
        ratio = float(hi[m].max() / lo[m].min())
        ok &= lo[m].min() > 0 and ratio <= 25
        parts.append(f"{k} in [{lo[m].min():.4g}, {hi[m].max():.4g}], ratio {ratio:.3f}")
    el = time.perf_counter() - t0
    record(6, ok, "; ".join(parts), el, 300.0)


# --- 7: theta-app --------------------------------------------------------


def test_criterion_07_theta_app(bundles):
    t0 = time.perf_counter()
    taus = np.geomspace(100.0, 1600.0, 6)
    parts, ok = [], True
    for k, g in MEDIA.items():
        b = bundles[k]
        kern = adjoint_kernel(b)
        fc = ShiftedFrameConfig(b.c_star, b.lambda_star)
        e = build_theta_app(b, kern)
        _, f_def = residual_sweep(e, b, fc, taus)
        e_fine = build_theta_app(b, kern, n_colloc=256)
        _, f_fine = residual_sweep(e_fine, b, fc, taus, hx=2.5e-3, dz_tau=5e-3, dx_sample=0.01)
        _, f_alternate = residual_sweep(build_theta_app(b, kern, p0_form="alternate"), b, fc, taus)
        b2 = speed_bundle(g, N=b.N // 2)
        e2 = build_theta_app(b2, adjoint_kernel(b2), n_colloc=64)
        tb = np.geomspace(100.0, 1000.0, 5)
        C1, _ = leading_order_constant(e, tb)
        C2, _ = leading_order_constant(e2, tb)
        rel = abs(C1 - C2) / C1
        improving = abs(f_fine.slope + 3) <= abs(f_def.slope + 3)
        ok &= f_def.slope <= -2.5 and improving and rel <= 0.2
        parts.append(f"{k}: exponent {f_def.slope:.4f} -> {f_fine.slope:.4f} refined "
                     f"(alternate p0 variant {f_alternate.slope:.3f}), C = {C1:.4f} vs {C2:.4f} ({rel:.1%})")
    el = time.perf_counter() - t0
    record(7, ok, "; ".join(parts), el, 300.0)


# --- 8: Bramson delay ----------------------------------------------------


def test_criterion_08_delay(bundles):
    t0 = time.perf_counter()
    parts, ok = [], True
    for k, g in MEDIA.items():
        b = bundles[k]
        frame = MovingFrame(left_edge=-30.0, speed=b.c_star, h=0.02, width=300.0)
        run = run_nonlinear(lambda x: indicator(x, -1, 1), g, LOGISTIC, frame, 0.01, 1500.0, trace_every=1.0)
        tr = run.trace(0.5)
        fit = delay_fit(tr, b, (100.0, 1500.0))
        fit_y = delay_fit(FrontTrace(0.5, tr.times, tr.Y, tr.Y), b, (100.0, 1500.0))
        target = 1.5 / b.lambda_star
        good = abs(fit.slope - 1.5) <= 0.25 if k == "homogeneous" else abs(fit.slope - target) <= 0.2 * target
        ok &= good
        parts.append(f"{k} slope {fit.slope:.4f} (prediction {target:.4f}), intercepts X {fit.intercept:.3f} "
                     f"Y {fit_y.intercept:.3f}")
    el = time.perf_counter() - t0
    record(8, ok, "; ".join(parts), el, 1800.0)


# --- 9, 10: pulsating front ---------------------------------------------


@pytest.fixture(scope="module")
def fronts(bundles):
    return {k: timed(pulsating_front, g, LOGISTIC, bundles[k], 1500.0, h=0.02, n_phase=50, width=300.0, back=30.0)
            for k, g in MEDIA.items()}


def test_criterion_09_pulsating_front(bundles, fronts):
    parts, ok, el = [], True, 0.0
    for k in MEDIA:
        prof, e = fronts[k]
        lam = bundles[k].lambda_star
        fit = prof.fit
        good = (prof.periodicity_residual <= 1e-3 and abs(fit["lambda_fit"] - lam) <= 0.02 * lam
                and fit["rss_ratio"] >= 2)
        ok &= good
        el += e
        parts.append(f"{k}: periodicity {prof.periodicity_residual:.1e}, decay {fit['lambda_fit']:.4f} "
                     f"vs {lam:.4f}, RSS ratio {fit['rss_ratio']:.1f}")
    record(9, ok, "; ".join(parts), el, 600.0)


def test_criterion_10_convergence(bundles, fronts):
    el = sum(e for _, e in fronts.values())
    t0 = time.perf_counter()
    parts, ok = [], True
    for k, g in MEDIA.items():
        b = bundles[k]
        prof, _ = fronts[k]
        frame = MovingFrame(left_edge=-30.0, speed=b.c_star, h=0.02, width=300.0)
        run = run_nonlinear(lambda x: indicator(x, -1, 1), g, LOGISTIC, frame, prof.meta["dt"], 1000.0,
                            trace_every=10.0, snapshot_times=np.linspace(200.0, 1000.0, 17))
        W = 5.0 / b.c_star
        cs = convergence_to_front(run, prof, b, (-W, W))
        tol = 0.02 if k == "homogeneous" else 0.05
        dec = bool(np.all(np.diff(cs.distance) <= 0))
        inside = bool(np.all((cs.xi > -W) & (cs.xi < W))) and cs.edge_hits == 0
        ok &= dec and inside and cs.distance[-1] <= tol
        parts.append(f"{k}: distance {cs.distance[0]:.2e} -> {cs.distance[-1]:.2e}, decreasing {dec}, "
                     f"xi in [{cs.xi.min():.3f}, {cs.xi.max():.3f}] inside +-{W:.3f}")
    el += time.perf_counter() - t0
    record(10, ok, "; ".join(parts), el, 1800.0)


# --- 12: branching Brownian motion --------------------------------------


def test_criterion_12_bbm():
    cfg = BbmConfig(PeriodicFunction.constant(1.0), T=4.0, dt=0.01, trials=20000, seed=2024)
    xs = np.linspace(0.0, 8.0, 9)
    est, el = timed(estimate_u, cfg, xs)
    excess = float(np.max(est.diff - 3 * est.stderr - 0.01))
    # determinism under the fixed seed, checked on a subset of the grid
    again = estimate_u(cfg, xs[[0, 4]], reference=False)
    same = bool(np.array_equal(again.u_hat, est.u_hat[[0, 4]]))
    record(12, excess <= 0 and same, f"max |u_hat - u_pde| = {est.diff.max():.4f}, margin to 3 SE + 0.01 = "
                                     f"{-excess:.4f}, repeat identical: {same}", el, 300.0)


# --- 13: property suites -------------------------------------------------

SMALL = MovingFrame(left_edge=-5.0, speed=0.0, h=0.05, width=10.0, shift_policy="none")
G13 = MEDIA["periodic"]
X13 = np.linspace(-10, 40, 501)


def _profile(vals, n):
    return np.clip(np.interp(np.linspace(0, 1, n), np.linspace(0, 1, len(vals)), vals), 0, 1)


@settings(max_examples=100, deadline=None, database=None)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=12), st.lists(st.floats(0, 0.5), min_size=4, max_size=12))
def _comparison(vals, gaps):
    u = _profile(vals, SMALL.n_nodes)
    v = np.minimum(1.0, u + _profile(gaps, SMALL.n_nodes))
    a = advance_nonlinear(SolverState(0.0, SMALL, u), G13, LOGISTIC, 0.01, 20, n_startup=2)
    b = advance_nonlinear(SolverState(0.0, SMALL, v), G13, LOGISTIC, 0.01, 20, n_startup=2)
    assert np.all(a.u <= b.u + 1e-10)


@settings(max_examples=100, deadline=None, database=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=16), st.sampled_from([0.01, 0.02, 0.05]))
def _invariant(vals, dt):
    s = advance_nonlinear(SolverState(0.0, SMALL, _profile(vals, SMALL.n_nodes)), G13, LOGISTIC, dt, 30,
                          n_startup=4)
    assert s.u.min() >= -1e-12 and s.u.max() <= 1 + 1e-12


@settings(max_examples=100, deadline=None, database=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=30), st.floats(0.05, 0.45), st.floats(0.5, 0.95))
def _monotone(vals, e1, e2):
    u = np.interp(X13, np.linspace(X13[0], X13[-1], len(vals)), sorted(vals, reverse=True))
    u = np.concatenate([[1.0], u[1:-1], [0.0]])
    X1, _ = level_positions_array(X13, u, e1)
    X2, _ = level_positions_array(X13, u, e2)
    if X1 is not None and X2 is not None:
        assert X2 <= X1 + 1e-12


@settings(max_examples=100, deadline=None, database=None)
@given(st.floats(0.5, 3.0), st.floats(-5, 5), st.floats(-100, 100))
def _equivariance(a, b, shift):
    t = np.linspace(100, 1500, 60)
    X = 2 * t - a * np.log(t) - b
    r1 = delay_fit(FrontTrace(0.5, t, X, X), 2.0)
    r2 = delay_fit(FrontTrace(0.5, t, X + shift, X), 2.0)
    assert abs(r2.slope - r1.slope) < 1e-9 and abs(r2.intercept - r1.intercept + shift) < 1e-7


def test_criterion_13_property_suites():
    t0 = time.perf_counter()
    status = {}
    for name, prop in (("comparison", _comparison), ("0<=u<=1", _invariant), ("monotone X_eps", _monotone),
                       ("fit equivariance", _equivariance)):
        try:
            prop()
            status[name] = True
        except AssertionError:
            status[name] = False
    el = time.perf_counter() - t0
    record(13, all(status.values()), ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in status.items())
           + " (100 cases each)", el, 120.0)
