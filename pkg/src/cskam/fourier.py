"""Periodic functions on the circle with a dual sample / Fourier representation.

Functions live on theta in [0, 2 pi) sampled at ``n`` equispaced points and are
expanded as ``f(theta) = sum_k c_k exp(i k theta)``.  Only real-valued functions
are represented, so the non-negative half of the spectrum (``rfft`` layout)
is stored; the negative modes follow from Hermitian symmetry.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import LambdaOnUnitCircle, NonZeroAverage

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
SOLVABILITY_TOL = 1e-10
UNIT_CIRCLE_TOL = 1e-8


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def wavenumbers(n: int) -> np.ndarray:
    """Non-negative wavenumbers 0..n/2 matching the rfft layout."""
    return np.arange(n // 2 + 1, dtype=float)


class PeriodicGridFunction:
    """Immutable real 2 pi-periodic function.

    Either ``samples`` or ``coefficients`` (rfft layout, already divided by
    ``n``) may be supplied; the other one is computed on first access.
    """

    __slots__ = ("n_modes", "_samples", "_coeffs")

    def __init__(self, samples=None, coefficients=None, n_modes: int | None = None):
        if samples is None and coefficients is None:
            raise ValueError("need samples or coefficients")
        if samples is not None:
            samples = np.array(samples, dtype=float)
            n = samples.shape[0]
        else:
            coefficients = np.array(coefficients, dtype=complex)
            n = n_modes if n_modes is not None else 2 * (coefficients.shape[0] - 1)
            if coefficients.shape[0] != n // 2 + 1:
                raise ValueError("coefficient array does not match n_modes")
        if not _is_power_of_two(n):
            raise ValueError(f"n_modes must be a power of two, got {n}")
        self.n_modes = n
        if samples is not None:
            samples.setflags(write=False)
        if coefficients is not None:
            coefficients.setflags(write=False)
        self._samples = samples
        self._coeffs = coefficients

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_callable(cls, func, n_modes: int) -> "PeriodicGridFunction":
        return cls(func(grid(n_modes)))

    @classmethod
    def constant(cls, value: float, n_modes: int) -> "PeriodicGridFunction":
        return cls(np.full(n_modes, float(value)))

    @classmethod
    def from_modes(cls, modes: dict, n_modes: int) -> "PeriodicGridFunction":
        """Build from ``{k: c_k}`` for k >= 0; negative modes are implied."""
        c = np.zeros(n_modes // 2 + 1, dtype=complex)
        for k, v in modes.items():
            c[int(k)] = v
        c[0] = c[0].real
        return cls(coefficients=c, n_modes=n_modes)

    # -- representations ----------------------------------------------------
    @property
    def samples(self) -> np.ndarray:
        if self._samples is None:
            s = np.fft.irfft(self._coeffs * self.n_modes, n=self.n_modes)
            s.setflags(write=False)
            self._samples = s
        return self._samples

    @property
    def half_coefficients(self) -> np.ndarray:
        """Coefficients c_0 .. c_{n/2}."""
        if self._coeffs is None:
            c = np.fft.rfft(self._samples) / self.n_modes
            c.setflags(write=False)
            self._coeffs = c
        return self._coeffs

    @property
    def coefficients(self) -> np.ndarray:
        """Full coefficient vector for k = -n/2+1 .. n/2."""
        c = self.half_coefficients
        return np.concatenate([np.conj(c[1:-1][::-1]), c])

    @property
    def mean(self) -> float:
        return float(self.half_coefficients[0].real)

    def coefficient(self, k: int) -> complex:
        c = self.half_coefficients
        if abs(k) > self.n_modes // 2:
            return 0j
        return complex(c[k]) if k >= 0 else complex(np.conj(c[-k]))

    def __call__(self, theta):
        """Evaluate the trigonometric interpolant at arbitrary angles."""
        theta = np.asarray(theta, dtype=float)
        c = self.half_coefficients
        k = wavenumbers(self.n_modes)
        phase = np.exp(1j * np.multiply.outer(theta, k))
        w = np.full(k.shape, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return (phase * (w * c)).real.sum(axis=-1)

    # -- arithmetic ---------------------------------------------------------
    def _other(self, other):
        if isinstance(other, PeriodicGridFunction):
            if other.n_modes != self.n_modes:
                raise ValueError("grid size mismatch")
            return other.samples
        return other

    def __add__(self, other):
        return PeriodicGridFunction(self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return PeriodicGridFunction(self.samples - self._other(other))

    def __rsub__(self, other):
        return PeriodicGridFunction(self._other(other) - self.samples)

    def __mul__(self, other):
        return PeriodicGridFunction(self.samples * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return PeriodicGridFunction(self.samples / self._other(other))

    def __neg__(self):
        return PeriodicGridFunction(-self.samples)

    def __repr__(self):
        return f"PeriodicGridFunction(n_modes={self.n_modes}, mean={self.mean:.6g})"

    def resample(self, n_modes: int) -> "PeriodicGridFunction":
        """Zero-pad or truncate the spectrum onto a grid of ``n_modes`` points."""
        return resample(self, n_modes)

    def to_record(self, threshold: float = 0.0) -> dict:
        """Sparse text-friendly record: ``{n_modes, coefficients: [(k, re, im)]}``."""
        c = self.half_coefficients
        rows = [(int(k), float(v.real), float(v.imag))
                for k, v in enumerate(c) if abs(v) > threshold]
        return {"n_modes": self.n_modes, "coefficients": rows}

    @classmethod
    def from_record(cls, record: dict) -> "PeriodicGridFunction":
        n = int(record["n_modes"])
        c = np.zeros(n // 2 + 1, dtype=complex)
        for k, re, im in record["coefficients"]:
            c[int(k)] = complex(re, im)
        return cls(coefficients=c, n_modes=n)


def grid(n_modes: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_modes) / n_modes


def to_coefficients(f: PeriodicGridFunction) -> np.ndarray:
    return f.coefficients


def to_samples(coefficients: np.ndarray) -> PeriodicGridFunction:
    """Inverse of :func:`to_coefficients` (full k = -n/2+1 .. n/2 layout)."""
    coefficients = np.asarray(coefficients, dtype=complex)
    n = coefficients.shape[0]
    half = coefficients[n // 2 - 1:].copy()
    half[0] = half[0].real
    half[-1] = half[-1].real
    return PeriodicGridFunction(coefficients=half, n_modes=n)


def _with_coeffs(f: PeriodicGridFunction, c: np.ndarray) -> PeriodicGridFunction:
    return PeriodicGridFunction(coefficients=c, n_modes=f.n_modes)


def derivative(f: PeriodicGridFunction) -> PeriodicGridFunction:
    k = wavenumbers(f.n_modes)
    c = 1j * k * f.half_coefficients
    c[-1] = 0.0
    return _with_coeffs(f, c)


def shift(f: PeriodicGridFunction, omega: float) -> PeriodicGridFunction:
    """Return ``theta -> f(theta + omega)``."""
    if omega == 0.0:
        return f
    k = wavenumbers(f.n_modes)
    c = f.half_coefficients * np.exp(1j * k * omega)
    c[-1] = 0.0
    return _with_coeffs(f, c)


def resample(f: PeriodicGridFunction, n_modes: int) -> PeriodicGridFunction:
    if n_modes == f.n_modes:
        return f
    c = f.half_coefficients
    out = np.zeros(n_modes // 2 + 1, dtype=complex)
    m = min(len(c), len(out))
    out[:m] = c[:m]
    if n_modes < f.n_modes:
        out[-1] = out[-1].real
    else:
        # the old Nyquist term splits evenly between +/- n/2 on the finer grid
        out[m - 1] = 0.5 * c[-1].real
    return PeriodicGridFunction(coefficients=out, n_modes=n_modes)


def sobolev_norm(f: PeriodicGridFunction, m: float) -> float:
    """``( sum_k |c_k|^2 (1 + k^2)^m )^(1/2)`` over the full spectrum."""
    c = f.half_coefficients
    k = wavenumbers(f.n_modes)
    w = (1.0 + k * k) ** m * np.abs(c) ** 2
    total = w[0] + 2.0 * w[1:-1].sum() + w[-1]
    return float(math.sqrt(total))


def tail_mass(f: PeriodicGridFunction, fraction: float = 0.5) -> float:
    """Relative l2 mass of the modes with ``|k| > fraction * n/2``."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    c = np.abs(f.half_coefficients) ** 2
    c[1:-1] *= 2.0
    total = c.sum()
    if total == 0.0:
        return 0.0
    cut = fraction * f.n_modes / 2
    k = wavenumbers(f.n_modes)
    return float(math.sqrt(c[k > cut].sum() / total))


def solve_small_divisor(q: PeriodicGridFunction, omega: float,
                        tol: float = SOLVABILITY_TOL) -> PeriodicGridFunction:
    """Zero-average solution of ``W(theta) - W(theta + omega) = q(theta)``."""
    c = q.half_coefficients
    scale = 1.0 + float(np.abs(c).max())
    if abs(c[0]) > tol * scale:
        raise NonZeroAverage(f"mean of right-hand side is {c[0].real:.3e}")
    k = wavenumbers(q.n_modes)
    div = 1.0 - np.exp(1j * k * omega)
    out = np.zeros_like(c)
    out[1:-1] = c[1:-1] / div[1:-1]
    return _with_coeffs(q, out)


def solve_contraction(q: PeriodicGridFunction, omega: float,
                      lam: float) -> PeriodicGridFunction:
    """Solve ``lam * U(theta) - U(theta + omega) = q(theta)`` for ``|lam| != 1``."""
    if abs(abs(lam) - 1.0) < UNIT_CIRCLE_TOL:
        raise LambdaOnUnitCircle(f"|lambda| = {abs(lam)} is on the unit circle")
    k = wavenumbers(q.n_modes)
    c = q.half_coefficients / (lam - np.exp(1j * k * omega))
    c[-1] = 0.0
    return _with_coeffs(q, c)


def solve_contraction_reversed(q: PeriodicGridFunction, omega: float,
                               lam: float) -> PeriodicGridFunction:
    """Solve ``U(theta) - lam * U(theta + omega) = q(theta)``."""
    if abs(abs(lam) - 1.0) < UNIT_CIRCLE_TOL:
        raise LambdaOnUnitCircle(f"|lambda| = {abs(lam)} is on the unit circle")
    k = wavenumbers(q.n_modes)
    c = q.half_coefficients / (1.0 - lam * np.exp(1j * k * omega))
    c[-1] = 0.0
    return _with_coeffs(q, c)


class DiophantineFrequency:
    """Rotation angle ``omega`` (radians per iterate) with a divisor diagnostic."""

    PRESETS = {
        "golden": 2.0 * math.pi * GOLDEN_MEAN,
        "silver": 2.0 * math.pi * (math.sqrt(2.0) - 1.0),
        "golden_complement": 2.0 * math.pi * (1.0 - GOLDEN_MEAN),
    }

    def __init__(self, omega: float, tau: float = 1.0, name: str | None = None):
        if tau < 1.0:
            raise ValueError("tau must be >= 1")
        self.omega = float(omega)
        self.tau = float(tau)
        self.name = name

    @classmethod
    def preset(cls, name: str = "golden") -> "DiophantineFrequency":
        try:
            return cls(cls.PRESETS[name], name=name)
        except KeyError:
            raise ValueError(f"unknown frequency preset {name!r}") from None

    @classmethod
    def parse(cls, spec) -> "DiophantineFrequency":
        if isinstance(spec, DiophantineFrequency):
            return spec
        if isinstance(spec, str) and spec in cls.PRESETS:
            return cls.preset(spec)
        return cls(float(spec))

    @property
    def rotation_number(self) -> float:
        return self.omega / (2.0 * math.pi)

    def min_divisor_profile(self, k_max: int = 1000) -> np.ndarray:
        """Running minimum of ``|1 - exp(i k omega)| * k**tau`` for k = 1..k_max."""
        k = np.arange(1, k_max + 1, dtype=float)
        vals = np.abs(1.0 - np.exp(1j * k * self.omega)) * k ** self.tau
        return np.minimum.accumulate(vals)

    def __repr__(self):
        label = f"{self.name}, " if self.name else ""
        return f"DiophantineFrequency({label}omega={self.omega!r})"
