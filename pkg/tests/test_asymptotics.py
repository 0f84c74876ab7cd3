import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from kpplab.asymptotics import (CellSolver, FrontProfile, bramson_position, build_theta_app, solve_p0,
                                v0_derivative)
from kpplab.errors import ConsistencyError
from kpplab.periodic import PeriodicFunction


@pytest.fixture(scope="module")
def exp_per(bundle_per, kernel_per):
    return build_theta_app(bundle_per, kernel_per)


@pytest.fixture(scope="module")
def cell_per(bundle_per):
    return CellSolver(bundle_per.kappa_drift.truncated(1e-15, 1e-15), 128)


# --- profiles -----------------------------------------------------------


@given(st.floats(0.5, 2.0), st.floats(-6.0, 6.0), st.integers(0, 3))
def test_v0_derivatives_match_finite_differences(D, z, k):
    d = 1e-3
    fd = (v0_derivative(z + d, D, k) - v0_derivative(z - d, D, k)) / (2 * d)
    assert abs(fd - v0_derivative(z, D, k + 1)) < 1e-5
    if k == 0:
        assert abs(v0_derivative(z, D) - z * np.exp(-z * z / (4 * D))) < 1e-13


@pytest.mark.parametrize("m", [1.5, 2.0])
def test_p0_manufactured_solution(m):
    # p = z^2 exp(-z^2) has p(0) = p'(0) = 0; its forcing is computed by hand
    D = 0.9
    p = lambda z: z**2 * np.exp(-z**2)
    dp = lambda z: (2 * z - 2 * z**3) * np.exp(-z**2)
    ddp = lambda z: (2 - 10 * z**2 + 4 * z**4) * np.exp(-z**2)
    forcing = lambda z: m * p(z) + 0.5 * z * dp(z) + D * ddp(z)
    z, pz, qz = solve_p0(D, forcing, m, z_max=6.0, dz=1e-3)
    assert np.max(np.abs(pz - p(z))) < 1e-10
    assert np.max(np.abs(qz - dp(z))) < 1e-10


def test_alternate_p0_homogeneous_against_ivp_oracle(bundle_hom):
    # 2 p + (z/2) p' + p'' = (3/(2 lambda*)) v0' with zero initial data, by an adaptive high-order integrator
    e = build_theta_app(bundle_hom, p0_form="alternate")
    r = 1.5 / bundle_hom.lambda_star

    def rhs(z, y):
        return [y[1], r * v0_derivative(z, 1.0, 1) - 2 * y[0] - 0.5 * z * y[1]]

    z = np.linspace(0, 4, 81)
    sol = solve_ivp(rhs, (0, 4), [0.0, 0.0], method="DOP853", t_eval=z, rtol=1e-13, atol=1e-15)
    assert np.max(np.abs(e.p0(z) - sol.y[0])) < 1e-8


# --- cell problems ------------------------------------------------------


@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5))
def test_cell_solver_property(bundle_per, kernel_per, cell_per, coeffs):
    cs = cell_per
    F = PeriodicFunction.from_coeffs(coeffs[0], coeffs[1:3], coeffs[3:5])(cs.x)
    w, s = cs.solve(F)
    assert np.max(np.abs(cs.apply(w) + s - F)) < 1e-10
    assert abs(w.mean()) < 1e-13
    eta = kernel_per.eta(cs.x)
    assert abs(s - np.mean(eta * F) / eta.mean()) < 1e-8


def test_cell_solver_constant_drift():
    cs = CellSolver(PeriodicFunction.constant(-2.0), 32)
    rhs = np.cos(2 * np.pi * cs.x) + 0.3
    w, s = cs.solve(rhs)
    k = 2 * np.pi
    exact = np.real(np.exp(1j * k * cs.x) / (-(k**2) - 2j * k))
    assert abs(s - 0.3) < 1e-13 and np.max(np.abs(w - exact)) < 1e-13
    with pytest.raises(ValueError):
        CellSolver(PeriodicFunction.constant(-2.0), 31)


# --- expansion ----------------------------------------------------------


def test_homogeneous_expansion(bundle_hom):
    e = build_theta_app(bundle_hom)
    assert abs(e.beta1) < 1e-12 and abs(e.beta2) < 1e-12 and abs(e.kappa_eff) < 1e-12
    x = np.linspace(0, 1, 9)
    for f in (e.chi0, e.vhat2, e.w1, e.w3, e.w5):
        assert np.max(np.abs(f(x))) < 1e-12
    z = np.linspace(0, 4, 9)
    assert np.allclose(e.theta(50.0, 2 * 50.0 + z * np.sqrt(50.0), order=0), e.v0(z) / 50.0, atol=1e-15)


def test_periodic_expansion(bundle_per, exp_per):
    e = exp_per
    s = e.solvability
    assert max(s[k] for k in ("chi", "vhat2", "w1", "w3", "w5", "order2_defect", "order3_defect")) <= 1e-8
    assert s["order1_defect"] <= 1e-6
    assert abs(e.kappa_eff - bundle_per.kappa_eff) < 1e-7
    assert abs(e.chi0.mean) < 1e-12
    # p0 is continued by its algebraic tail with continuous value
    zm = e.z_max
    assert abs(e.p0(np.array([zm]))[0] - e.p0(np.array([zm + 1e-9]))[0]) < 1e-9


def test_leading_order_matches_first_two_terms(exp_per):
    # v0/tau + v0' chi0 / tau^1.5 reproduces the leading-order profile up to O(tau^-2) inside the window
    e = exp_per
    tau = 400.0
    x = e.c_star * tau + np.linspace(0.1, 20, 50)
    z = (x - e.c_star * tau) / np.sqrt(tau)
    two = e.v0(z) / tau + e.v0(z, 1) * e.chi0(x) / tau**1.5
    assert np.max(np.abs(two - e.leading_order(tau, x))) < 5 * tau**-2


def test_consistency_error_names_order(bundle_per, kernel_per):
    off = dataclasses.replace(bundle_per, c_star=bundle_per.c_star + 1e-4)
    with pytest.raises(ConsistencyError, match="R\\^-1"):
        build_theta_app(off, kernel_per)


def test_p0_form_validation(bundle_hom):
    with pytest.raises(ValueError):
        build_theta_app(bundle_hom, p0_form="other")


# --- positions and fronts ----------------------------------------------


def test_bramson_position(bundle_hom):
    t = np.array([1.0, 100.0])
    assert np.allclose(bramson_position(bundle_hom, t), 2 * t - 1.5 * np.log(t))
    with pytest.raises(ValueError):
        bramson_position(bundle_hom, 0.5)


def test_front_profile_interpolation():
    s = np.linspace(-10, 10, 201)
    bins_s = [s, s]
    bins_u = [0.5 - 0.5 * np.tanh(s)] * 2
    prof = FrontProfile(bins_s, bins_u, 0.5, 1.0, 1.0, 2.0)
    v = prof.phi(np.array([0.0, 3.0]), np.array([0.2, 0.7]))
    assert np.allclose(v, 0.5 - 0.5 * np.tanh([0.0, 3.0]), atol=1e-3)
    assert prof.phi(-100.0, 0.3) == pytest.approx(bins_u[0][0])
    assert np.allclose(prof.U(1.0, np.array([2.0])), prof.phi(0.0, 2.0))
    # bilinear in the phase: halfway between two bins is the average
    prof2 = FrontProfile([s, s], [np.zeros_like(s), np.ones_like(s)], 0.5, 1.0, 1.0, 2.0)
    assert prof2.phi(0.0, 0.25) == pytest.approx(0.5)
