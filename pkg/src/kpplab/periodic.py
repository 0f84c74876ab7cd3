"""1-periodic scalar functions stored as finite Fourier series.

A :class:`PeriodicFunction` holds the real Fourier coefficients

    f(x) = mean + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x),   k = 1..K

together with its samples on a uniform N-point grid over [0, 1).  Fields that
come out of a grid computation (eigenvectors, cell-problem solutions) are
turned into series by trigonometric interpolation, so derivatives and
off-grid values are available spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoefficientDomainError

__all__ = ["PeriodicFunction", "grid", "ShiftedEvaluator"]


def grid(N: int) -> np.ndarray:
    """Uniform nodes i/N, i = 0..N-1."""
    return np.arange(N) / N


def _eval_series(mean, a, b, x, chunk=4096):
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    out = np.full(flat.shape, float(mean))
    K = len(a)
    if K == 0:
        return out.reshape(x.shape)
    k = 2.0 * np.pi * np.arange(1, K + 1)
    for start in range(0, flat.size, chunk):
        xs = flat[start:start + chunk]
        ph = np.outer(xs, k)
        out[start:start + chunk] += np.cos(ph) @ a + np.sin(ph) @ b
    return out.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class PeriodicFunction:
    """A real 1-periodic function given by its Fourier coefficients.

    ``samples`` are the values at ``grid(N)`` and are filled in automatically.
    """

    mean: float
    cosine_coeffs: np.ndarray
    sine_coeffs: np.ndarray
    N: int
    samples: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.cosine_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(self.sine_coeffs, dtype=float))
        if a.size == 0 and b.size == 0:
            a = b = np.zeros(0)
        K = max(a.size, b.size)
        a = np.concatenate([a, np.zeros(K - a.size)])
        b = np.concatenate([b, np.zeros(K - b.size)])
        if int(self.N) < 1:
            raise ValueError("N must be a positive integer")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "cosine_coeffs", a)
        object.__setattr__(self, "sine_coeffs", b)
        object.__setattr__(self, "N", int(self.N))
        if self.samples is None:
            object.__setattr__(self, "samples", _eval_series(self.mean, a, b, grid(self.N)))
        else:
            object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float).copy())
        self.samples.setflags(write=False)
        a.setflags(write=False)
        b.setflags(write=False)

    # construction -------------------------------------------------------
    @classmethod
    def from_coeffs(cls, mean, cos=(), sin=(), N=256):
        """Build from a short Fourier series, e.g. ``from_coeffs(1, [0.5])``."""
        return cls(mean, np.asarray(cos, dtype=float), np.asarray(sin, dtype=float), N)

    @classmethod
    def constant(cls, value, N=256):
        return cls(value, np.zeros(0), np.zeros(0), N)

    @classmethod
    def from_samples(cls, samples):
        """Trigonometric interpolant of samples on ``grid(len(samples))``.

        For even N the Nyquist mode is kept as a cosine term, so the series
        reproduces the samples exactly.
        """
        v = np.asarray(samples, dtype=float)
        N = v.size
        X = np.fft.rfft(v) / N
        mean = X[0].real
        a = 2.0 * X[1:].real
        b = -2.0 * X[1:].imag
        if N % 2 == 0:
            a[-1] = X[-1].real
            b[-1] = 0.0
        return cls(mean, a, b, N, samples=v)

    # evaluation ---------------------------------------------------------
    @property
    def n_modes(self) -> int:
        return self.cosine_coeffs.size

    @property
    def x(self) -> np.ndarray:
        return grid(self.N)

    def __call__(self, x):
        return _eval_series(self.mean, self.cosine_coeffs, self.sine_coeffs, x)

    def integral(self) -> float:
        """Integral over one period (the mean coefficient)."""
        return self.mean

    def derivative(self, order: int = 1) -> "PeriodicFunction":
        """Exact derivative of the series."""
        a, b = self.cosine_coeffs, self.sine_coeffs
        k = 2.0 * np.pi * np.arange(1, a.size + 1)
        for _ in range(order):
            a, b = k * b, -k * a
        return PeriodicFunction(0.0 if order > 0 else self.mean, a, b, self.N)

    def resample(self, N: int) -> "PeriodicFunction":
        """Same series, samples on a different grid."""
        return PeriodicFunction(self.mean, self.cosine_coeffs, self.sine_coeffs, N)

    def refined_samples(self, factor: int = 16) -> np.ndarray:
        return self(grid(factor * self.N))

    def refined_min(self, factor: int = 16) -> float:
        return float(np.min(self.refined_samples(factor)))

    def require_positive(self, name: str = "coefficient", factor: int = 16):
        """Raise :class:`CoefficientDomainError` unless min on a refined grid is > 0."""
        m = min(self.refined_min(factor), float(np.min(self.samples)))
        if not m > 0.0:
            raise CoefficientDomainError(f"{name} must be strictly positive (min {m:.3e})")
        return self

    def truncated(self, rel_tol: float = 1e-15, abs_tol: float = 0.0) -> "PeriodicFunction":
        """Drop the trailing modes whose amplitude is below ``rel_tol`` times the largest
        coefficient (mean included) and below ``abs_tol``.

        The retained series is what the time steppers evaluate at moving nodes.
        """
        amp = np.hypot(self.cosine_coeffs, self.sine_coeffs)
        scale = max(abs(self.mean), float(amp.max()) if amp.size else 0.0, 1e-300)
        keep = np.nonzero(amp > max(rel_tol * scale, abs_tol))[0]
        K = int(keep[-1]) + 1 if keep.size else 0
        return PeriodicFunction(self.mean, self.cosine_coeffs[:K], self.sine_coeffs[:K], self.N)

    def shifted_evaluator(self, y) -> "ShiftedEvaluator":
        return ShiftedEvaluator(self, y)

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, PeriodicFunction):
            return _combine(self, other, 1.0)
        return PeriodicFunction(self.mean + float(other), self.cosine_coeffs, self.sine_coeffs, self.N)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PeriodicFunction):
            return _combine(self, other, -1.0)
        return self + (-float(other))

    def __neg__(self):
        return self * -1.0

    def __mul__(self, other):
        if isinstance(other, PeriodicFunction):
            raise TypeError("multiply samples and re-interpolate instead (use product())")
        s = float(other)
        return PeriodicFunction(self.mean * s, self.cosine_coeffs * s, self.sine_coeffs * s, self.N)

    __rmul__ = __mul__

    def product(self, other: "PeriodicFunction", N: int | None = None) -> "PeriodicFunction":
        """Pointwise product, re-interpolated on an N-point grid (default: the finer of the two)."""
        N = N or max(self.N, other.N)
        return PeriodicFunction.from_samples(self.resample(N).samples * other.resample(N).samples)

    def is_constant(self, tol: float = 1e-13) -> bool:
        amp = np.hypot(self.cosine_coeffs, self.sine_coeffs)
        return bool(amp.size == 0 or amp.max() <= tol * max(1.0, abs(self.mean)))


def _combine(f, g, sign):
    K = max(f.n_modes, g.n_modes)
    a = np.zeros(K)
    b = np.zeros(K)
    a[:f.n_modes] += f.cosine_coeffs
    b[:f.n_modes] += f.sine_coeffs
    a[:g.n_modes] += sign * g.cosine_coeffs
    b[:g.n_modes] += sign * g.sine_coeffs
    return PeriodicFunction(f.mean + sign * g.mean, a, b, max(f.N, g.N))


class ShiftedEvaluator:
    """Fast repeated evaluation of f(y_i + s) on fixed nodes y_i for varying shifts s.

    The trigonometric tables for the nodes are built once; each call only
    rotates the K coefficients, so a call costs O(K * len(y)).
    """

    def __init__(self, f: PeriodicFunction, y):
        self.f = f
        self.y = np.asarray(y, dtype=float)
        K = f.n_modes
        self._k = 2.0 * np.pi * np.arange(1, K + 1)
        ph = np.outer(self._k, self.y)
        self._C = np.cos(ph)
        self._S = np.sin(ph)

    def __call__(self, s: float) -> np.ndarray:
        f = self.f
        if f.n_modes == 0:
            return np.full(self.y.shape, f.mean)
        cs = np.cos(self._k * s)
        sn = np.sin(self._k * s)
        A = f.cosine_coeffs * cs + f.sine_coeffs * sn
        B = -f.cosine_coeffs * sn + f.sine_coeffs * cs
        return f.mean + A @ self._C + B @ self._S
