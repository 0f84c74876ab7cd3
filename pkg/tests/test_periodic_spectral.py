import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from kpplab.errors import CoefficientDomainError, InconsistentInputError
from kpplab.periodic import PeriodicFunction, grid
from kpplab.spectral import (adjoint_kernel, chi_zero, conjugate_rate, drift_coefficient, effective_diffusivity,
                             floquet_gamma, invariant_density, minimal_speed, perturbed_eigenvalue,
                             solve_cell_problem, solve_floquet, speed_bundle, weighted_mean)

# Values for g = 1 + 0.5 cos(2 pi x), computed by a Fourier-Galerkin (Hill) eigen
# solver with 65 modes and a bounded scalar minimisation of gamma/lambda.
LAMBDA_PER = 1.00170069864
C_PER = 2.0028719473


def hill_gamma(mean, cos, lam, K=32):
    """Principal eigenvalue of psi'' - 2 lam psi' + (lam^2 + g) psi in a Fourier basis."""
    k = np.arange(-K, K + 1)
    A = np.diag(-(2 * np.pi * k) ** 2 - 2j * lam * 2 * np.pi * k + lam**2 + mean).astype(complex)
    for m, a in enumerate(cos, start=1):
        A += np.diag(np.full(2 * K + 1 - m, a / 2), m) + np.diag(np.full(2 * K + 1 - m, a / 2), -m)
    return float(np.max(np.linalg.eigvals(A).real))


def small_series():
    return st.lists(st.floats(-0.3, 0.3), min_size=0, max_size=3)


# --- periodic functions -------------------------------------------------


@given(st.floats(-2, 2), small_series(), small_series(), st.sampled_from([32, 64, 128]))
def test_samples_match_series(mean, a, b, N):
    f = PeriodicFunction.from_coeffs(mean, a, b, N=N)
    assert np.allclose(f.samples, f(grid(N)), atol=1e-13)
    g = PeriodicFunction.from_samples(f.samples)
    xs = np.linspace(0, 1, 37)
    assert np.allclose(g(xs), f(xs), atol=1e-12)


def test_derivative_of_cosine():
    f = PeriodicFunction.from_coeffs(0.0, [1.0], N=64)
    x = np.linspace(0, 1, 11)
    assert np.allclose(f.derivative()(x), -2 * np.pi * np.sin(2 * np.pi * x), atol=1e-12)


def test_positivity_check():
    with pytest.raises(CoefficientDomainError):
        minimal_speed(PeriodicFunction.from_coeffs(0.2, [0.5]), 64)


# --- Floquet problem ----------------------------------------------------


@pytest.mark.parametrize("g0, lam, gamma", [(1.0, 1.0, 2.0), (4.0, 2.0, 8.0)])
def test_constant_coefficient_gamma(g0, lam, gamma):
    r = solve_floquet(PeriodicFunction.constant(g0), lam, 64)
    assert abs(r.gamma - gamma) < 1e-12
    assert np.allclose(r.psi.samples, 1.0, atol=1e-12)


@given(st.floats(0.05, 5.0), st.floats(0.2, 4.0))
def test_gamma_constant_medium_property(lam, g0):
    assert abs(floquet_gamma(PeriodicFunction.constant(g0), lam, 32) - (lam**2 + g0)) < 1e-10


@given(st.floats(0.1, 3.0), st.floats(-0.45, 0.45), st.floats(-0.3, 0.3))
def test_gamma_above_mean_bound(lam, a1, b1):
    # the uniform density is invariant for the drift part, so gamma >= lam^2 + mean(g)
    g = PeriodicFunction.from_coeffs(1.0, [a1], [b1])
    r = solve_floquet(g, lam, 64)
    assert r.gamma >= lam**2 + 1.0 - 1e-12
    assert np.all(r.psi.samples > 0)


def test_gamma_against_hill_oracle():
    g = PeriodicFunction.from_coeffs(1.0, [0.5])
    fine = floquet_gamma(g, 1.0, 2048)
    coarse = floquet_gamma(g, 1.0, 1024)
    extrap = (4 * fine - coarse) / 3
    assert abs(extrap - hill_gamma(1.0, [0.5], 1.0)) < 1e-8


def test_hellmann_feynman_derivative():
    g = PeriodicFunction.from_coeffs(1.0, [0.5], [0.2])
    lam, d = 0.8, 1e-5
    r = solve_floquet(g, lam, 256)
    fd = (floquet_gamma(g, lam + d, 256) - floquet_gamma(g, lam - d, 256)) / (2 * d)
    assert abs(r.gamma_prime - fd) < 1e-7


# --- minimal speed ------------------------------------------------------


@pytest.mark.parametrize("g0, c, lam", [(1.0, 2.0, 1.0), (4.0, 4.0, 2.0)])
def test_minimal_speed_constant(g0, c, lam):
    b = minimal_speed(PeriodicFunction.constant(g0), 64)
    assert abs(b.c_star - c) < 1e-10 and abs(b.lambda_star - lam) < 1e-8


def test_minimal_speed_against_hill_oracle():
    q = minimize_scalar(lambda l: hill_gamma(1.0, [0.5], l) / l, bounds=(0.5, 2.0), method="bounded",
                        options={"xatol": 1e-10})
    assert abs(q.fun - C_PER) < 1e-9
    b = minimal_speed(PeriodicFunction.from_coeffs(1.0, [0.5]), 512, richardson=True)
    assert abs(b.extrapolated["c_star"] - C_PER) < 1e-9
    assert abs(b.extrapolated["lambda_star"] - LAMBDA_PER) < 2e-8
    # the grid value is second order: N = 512 sits within 1e-7 of the limit
    assert abs(b.c_star - C_PER) < 1e-7


def test_golden_and_newton_agree(bundle_per):
    # golden section resolves the flat minimum of gamma/lambda only to about sqrt(eps)
    assert bundle_per.residuals["golden_newton_gap"] < 5e-8


@given(st.floats(-0.4, 0.4), st.floats(-0.3, 0.3))
def test_speed_bounds_property(a1, b1):
    g = PeriodicFunction.from_coeffs(1.0, [a1], [b1])
    b = minimal_speed(g, 32)
    gmax = g.refined_samples().max()
    assert 2.0 - 1e-9 <= b.c_star <= 2 * np.sqrt(gmax) + 1e-9
    assert abs(b.residuals["gamma_prime_minus_c"]) < 1e-8


# --- drift, density, corrector -----------------------------------------


def test_homogeneous_fields(bundle_hom):
    b = bundle_hom
    assert np.allclose(b.kappa_drift.samples, -2.0, atol=1e-10)
    assert np.allclose(b.nu.samples, 1.0, atol=1e-10)
    assert np.allclose(b.chi0.samples, 0.0, atol=1e-10)
    assert abs(b.kappa_eff) < 1e-12
    k = adjoint_kernel(b)
    assert np.allclose(k.eta.samples, 0.5, atol=1e-10)


def test_constant_g4_drift():
    b = minimal_speed(PeriodicFunction.constant(4.0), 64)
    assert np.allclose(drift_coefficient(b).samples, -4.0, atol=1e-9)


def test_solvability_identity(bundle_per):
    b = bundle_per
    assert abs(weighted_mean(b.kappa_drift.samples, np.ones(b.N)) - np.mean(b.kappa_drift.samples)) < 1e-14
    assert abs(np.mean(b.kappa_drift.samples * b.nu.samples) + b.c_star) < 1e-8
    assert b.nu.refined_min() > 0


def test_density_residual(bundle_per):
    # nu'' - (kappa nu)' evaluated spectrally on the series is small and shrinks like N^-2
    def resid(N):
        b = speed_bundle(PeriodicFunction.from_coeffs(1.0, [0.5]), N=N)
        nu, k = b.nu, b.kappa_drift
        flux = nu.derivative() - PeriodicFunction.from_samples(k.samples * nu.samples)
        return np.max(np.abs(flux.derivative().samples))
    r1, r2 = resid(256), resid(512)
    assert r2 < 1e-3 and r1 / r2 > 3.5


def test_chi0_residual(bundle_per):
    b = bundle_per
    chi = b.chi0
    assert abs(chi.mean) < 1e-12
    D = chi.derivative()
    r = D.derivative().samples + b.kappa_drift.samples * D.samples + b.kappa_drift.samples + b.c_star
    assert np.max(np.abs(r)) < 1e-3  # same O(N^-2) order as the cell discretisation


def test_chi_zero_rejects_inconsistent_speed(bundle_per):
    with pytest.raises(InconsistentInputError):
        chi_zero(bundle_per.kappa_drift, bundle_per.c_star + 0.01, bundle_per.nu)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_cell_solvability_constant_property(bundle_per, coeffs):
    b = bundle_per
    rhs = PeriodicFunction.from_coeffs(coeffs[0], [coeffs[1]], [coeffs[2]], N=b.N)
    w, s = solve_cell_problem(b.kappa_drift, rhs)
    assert abs(s - weighted_mean(rhs.samples, b.nu)) < 1e-8
    assert abs(w.mean) < 1e-12


# --- adjoint kernel and kappa_eff --------------------------------------


def test_eta_periodic_and_positive(kernel_per):
    assert kernel_per.periodicity_gap <= 1e-10
    assert kernel_per.eta.refined_min() > 0


def test_eta_solves_adjoint_equation(bundle_per, kernel_per):
    # (phi^2 (phi^-2 eta)_x)_x = 0 with phi^2 = exp(-2 lambda x) psi^2, i.e. eta'' - (b eta)' = 0
    eta, b = kernel_per.eta, bundle_per.kappa_drift
    flux = eta.derivative() - PeriodicFunction.from_samples(b.samples * eta.samples)
    assert np.max(np.abs(flux.derivative().samples)) < 1e-8 * np.max(np.abs(b.samples))


def test_kappa_eff_two_routes(bundle_per, kernel_per):
    f, i = effective_diffusivity(bundle_per, kernel_per, return_check=True)
    assert abs(f - i) <= 1e-6
    assert abs(f - (-1.66758e-4)) < 1e-8
    assert 1 + f > 0


# --- mu(alpha) ----------------------------------------------------------


@given(st.floats(-0.5, 0.5))
def test_mu_homogeneous_property(alpha):
    nu = PeriodicFunction.constant(1.0, N=64)
    assert abs(perturbed_eigenvalue(nu, 2.0, alpha) - alpha**2) < 1e-10


def test_mu_zero_alpha(bundle_per):
    assert abs(perturbed_eigenvalue(bundle_per.nu, bundle_per.c_star, 0.0)) < 1e-12


def test_mu0_matches_effective_diffusivity(bundle_per):
    # mu(alpha) = (1 + kappa_eff) alpha^2 + O(alpha^3): a second route to kappa_eff
    assert bundle_per.mu0 > 0
    assert abs(bundle_per.mu0 - (1 + bundle_per.kappa_eff)) < 1e-7


def test_conjugate_rate(bundle_per):
    nu, c = bundle_per.nu, bundle_per.c_star
    beta = conjugate_rate(nu, c, 0.05)
    assert abs(perturbed_eigenvalue(nu, c, -beta) - perturbed_eigenvalue(nu, c, 0.05)) < 1e-12
    assert abs(beta / 0.05 - 1) < 0.05
    assert abs(conjugate_rate(PeriodicFunction.constant(1.0, N=64), 2.0, 0.1) - 0.1) < 1e-12
