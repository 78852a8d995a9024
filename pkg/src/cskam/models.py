"""Conformally symplectic map families on the cylinder R x T.

All maps act on *lifts*: the angle ``x`` is never reduced mod 2 pi, so that
rotation numbers and invariance errors can be read off directly.  States are
ordered ``(y, x)`` (action first) and the symplectic matrix is
``J = [[0, 1], [-1, 0]]``.  Every ``apply``/``jacobian`` call is vectorised
over numpy arrays of states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NoDriftParameter, StepTooLarge

TWO_PI = 2.0 * math.pi
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class CylinderState(NamedTuple):
    y: float
    x: float

    @property
    def angle(self) -> float:
        return self.x % TWO_PI


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    """``V(x) = sum_j a_j sin(j x)`` given as ``((j, a_j), ...)``."""

    harmonics: tuple = ((1, 1.0),)

    @classmethod
    def single_harmonic(cls) -> "Potential":
        return cls(((1, 1.0),))

    @classmethod
    def two_harmonic(cls, eps1: float, eps2: float) -> "Potential":
        return cls(((1, float(eps1)), (2, float(eps2))))

    def value(self, x):
        return sum(a * np.sin(j * x) for j, a in self.harmonics)

    def slope(self, x):
        return sum(a * j * np.cos(j * x) for j, a in self.harmonics)


# ---------------------------------------------------------------------------
# base class


class MapModel:
    """A family ``f_mu`` of maps of the cylinder (or of R^2 x T^2)."""

    family = "abstract"
    dimension = 2
    has_drift = True
    # converts the drift to "turns per iterate" units for reporting
    drift_scale = TWO_PI

    @property
    def conformal_factor(self) -> float:
        raise NotImplementedError

    @property
    def mu(self) -> float:
        return self.params.mu

    def with_mu(self, mu: float) -> "MapModel":
        if not self.has_drift:
            raise NoDriftParameter(f"{self.family} has no drift parameter")
        return type(self)(replace(self.params, mu=float(mu)))

    def with_params(self, **changes) -> "MapModel":
        return type(self)(replace(self.params, **changes))

    def apply(self, y, x):
        raise NotImplementedError

    def jacobian(self, y, x) -> np.ndarray:
        raise NotImplementedError

    def drift_derivative(self, y, x) -> np.ndarray:
        raise NotImplementedError

    def apply_with_jacobian(self, y, x):
        yn, xn = self.apply(y, x)
        return yn, xn, self.jacobian(y, x)

    def step(self, state: CylinderState) -> CylinderState:
        yn, xn = self.apply(state.y, state.x)
        return CylinderState(float(yn), float(xn))

    def describe(self) -> dict:
        out = {"family": self.family}
        for k, v in vars(self.params).items():
            out[k] = v.harmonics if isinstance(v, Potential) else v
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.params!r})"


def _stack_jacobian(a, b, c, d) -> np.ndarray:
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


# ---------------------------------------------------------------------------
# standard maps


@dataclass(frozen=True)
class StandardMapParams:
    lam: float = 1.0
    mu: float = 0.0
    epsilon: float = 0.0
    potential: Potential = field(default_factory=Potential.single_harmonic)

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.lam == 1.0 and self.mu != 0.0:
            raise ValueError("the conservative map (lambda = 1) requires mu = 0")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")


class StandardMap(MapModel):
    """``y' = lam y + mu + eps V(x)``, ``x' = x + y'``."""

    def __init__(self, params: StandardMapParams | None = None, **kw):
        self.params = params if params is not None else StandardMapParams(**kw)

    @property
    def family(self):
        return "conservative_sm" if self.params.lam == 1.0 else "dissipative_sm"

    @property
    def has_drift(self):
        return self.params.lam != 1.0

    @property
    def conformal_factor(self) -> float:
        return self.params.lam

    def apply(self, y, x):
        p = self.params
        yn = p.lam * y + p.mu + p.epsilon * p.potential.value(x)
        return yn, x + yn

    def jacobian(self, y, x):
        p = self.params
        dv = p.epsilon * p.potential.slope(x)
        lam = np.broadcast_to(p.lam, np.shape(dv))
        return _stack_jacobian(lam, dv, lam, 1.0 + dv)

    def drift_derivative(self, y, x):
        if not self.has_drift:
            raise NoDriftParameter("the conservative standard map has no drift")
        shape = np.broadcast(y, x).shape
        return np.ones(shape + (2,))

    def unperturbed(self, omega: float) -> tuple[float, float]:
        """Action and drift of the eps = 0 circle with rotation ``omega``."""
        return omega, (1.0 - self.params.lam) * omega


class NonTwistMap(MapModel):
    """``y' = lam y + eps V(x)``, ``x' = x + (y' - a)^2 + mu``."""

    family = "nontwist_sm"

    def __init__(self, params: "NonTwistMapParams | None" = None, **kw):
        self.params = params if params is not None else NonTwistMapParams(**kw)

    @property
    def conformal_factor(self) -> float:
        return self.params.lam

    def apply(self, y, x):
        p = self.params
        yn = p.lam * y + p.epsilon * p.potential.value(x)
        return yn, x + (yn - p.a) ** 2 + p.mu

    def jacobian(self, y, x):
        p = self.params
        dv = p.epsilon * p.potential.slope(x)
        yn = p.lam * y + p.epsilon * p.potential.value(x)
        two = 2.0 * (yn - p.a)
        lam = np.broadcast_to(p.lam, np.shape(two))
        return _stack_jacobian(lam, dv, two * p.lam, 1.0 + two * dv)

    def drift_derivative(self, y, x):
        shape = np.broadcast(y, x).shape
        out = np.zeros(shape + (2,))
        out[..., 1] = 1.0
        return out

    def unperturbed(self, omega: float) -> tuple[float, float]:
        p = self.params
        if p.lam == 1.0:
            # keep mu and pick the branch above the shearless line y = a
            return p.a + math.sqrt(max(omega - p.mu, 0.0)), p.mu
        return 0.0, omega - p.a ** 2


@dataclass(frozen=True)
class NonTwistMapParams:
    lam: float = 1.0
    mu: float = 0.0
    epsilon: float = 0.0
    a: float = 0.0
    potential: Potential = field(default_factory=Potential.single_harmonic)

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")


# ---------------------------------------------------------------------------
# four-dimensional two-factor map (not conformally symplectic if lam1 != lam2)


@dataclass(frozen=True)
class TwoFactorParams:
    lam1: float = 0.5
    lam2: float = 0.9
    mu1: float = 0.0
    mu2: float = 0.0
    epsilon: float = 0.0


class TwoFactorMap(MapModel):
    """State ``(y1, y2, x1, x2)`` with gradient forcing from
    ``U = -cos(x1 + x2) - cos(x2)``."""

    family = "two_factor_4d"
    dimension = 4

    def __init__(self, params: TwoFactorParams | None = None, **kw):
        self.params = params if params is not None else TwoFactorParams(**kw)

    @property
    def conformal_factor(self) -> float:
        p = self.params
        return p.lam1 if p.lam1 == p.lam2 else float("nan")

    def apply_state(self, z):
        p = self.params
        y1, y2, x1, x2 = np.moveaxis(np.asarray(z, dtype=float), -1, 0)
        y1n = p.lam1 * y1 + p.mu1 + p.epsilon * np.sin(x1 + x2)
        y2n = p.lam2 * y2 + p.mu2 + p.epsilon * (np.sin(x1 + x2) + np.sin(x2))
        return np.stack([y1n, y2n, x1 + y1n, x2 + y2n], -1)

    def jacobian_state(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        x1, x2 = z[..., 2], z[..., 3]
        c12 = p.epsilon * np.cos(x1 + x2)
        c2 = p.epsilon * np.cos(x2)
        out = np.zeros(z.shape[:-1] + (4, 4))
        out[..., 0, 0] = p.lam1
        out[..., 0, 2] = c12
        out[..., 0, 3] = c12
        out[..., 1, 1] = p.lam2
        out[..., 1, 2] = c12
        out[..., 1, 3] = c12 + c2
        out[..., 2, :] = out[..., 0, :]
        out[..., 2, 2] += 1.0
        out[..., 3, :] = out[..., 1, :]
        out[..., 3, 3] += 1.0
        return out


def symplectic_matrix(dim: int) -> np.ndarray:
    n = dim // 2
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


# ---------------------------------------------------------------------------
# conformality check


@dataclass
class ConformalityReport:
    max_defect: float
    lam: float
    passed: bool


def _jacobians_at(model: MapModel, states) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if model.dimension == 2:
        return model.jacobian(states[:, 0], states[:, 1])
    return model.jacobian_state(states)


def conformality_defect(model: MapModel, states, lam: float) -> float:
    """``max over states of max|Df^T J Df - lam J|`` (entrywise)."""
    D = _jacobians_at(model, states)
    J = symplectic_matrix(model.dimension)
    lhs = np.einsum("...ji,jk,...kl->...il", D, J, D)
    return float(np.abs(lhs - lam * J).max())


def verify_conformality(model: MapModel, states, tol: float = 1e-10,
                        lam: float | None = None) -> ConformalityReport:
    lam = model.conformal_factor if lam is None else lam
    if not np.isfinite(lam):
        lam = best_conformal_factor(model, states)[0]
        defect = conformality_defect(model, states, lam)
        return ConformalityReport(defect, lam, False if defect > tol else True)
    defect = conformality_defect(model, states, lam)
    return ConformalityReport(defect, lam, defect <= tol)


def best_conformal_factor(model: MapModel, states) -> tuple[float, float]:
    """Scalar ``lam`` minimising the defect, and that minimal defect.

    The defect is the max of ``|G_ij - lam J_ij|`` over the entries where
    ``J_ij != 0`` (a convex piecewise-linear function of ``lam``) plus the
    lam-independent remainder, so the optimum is the midrange of the
    relevant entries.
    """
    D = _jacobians_at(model, states)
    J = symplectic_matrix(model.dimension)
    G = np.einsum("...ji,jk,...kl->...il", D, J, D)
    mask = J != 0
    ratios = (G[..., mask] / J[mask]).ravel()
    lam = 0.5 * (ratios.max() + ratios.min())
    return float(lam), conformality_defect(model, states, lam)


def random_states(n: int, rng: np.random.Generator, y_scale: float = 3.0,
                  dim: int = 2) -> np.ndarray:
    half = dim // 2
    y = rng.uniform(-y_scale, y_scale, size=(n, half))
    x = rng.uniform(0.0, TWO_PI, size=(n, half))
    return np.concatenate([y, x], axis=1)


# ---------------------------------------------------------------------------
# spin-orbit problem


def kepler_state(e: float, t: float, tol: float = 1e-13) -> tuple[float, float]:
    """Orbital radius and true anomaly at mean anomaly ``t`` (semimajor axis 1)."""
    r, f, _ = _kepler(e, np.asarray(t, dtype=float), tol)
    if np.ndim(t) == 0:
        return float(r), float(f)
    return r, f


def eccentric_anomaly(e: float, t, tol: float = 1e-13):
    return _kepler(e, np.asarray(t, dtype=float), tol)[2]


def _kepler(e, t, tol):
    if not 0.0 <= e < 1.0:
        raise ValueError("eccentricity must lie in [0, 1)")
    m = np.mod(t, TWO_PI)
    E = m + e * np.sin(m) if e < 0.8 else np.full_like(m, math.pi)
    for _ in range(100):
        d = (E - e * np.sin(E) - m) / (1.0 - e * np.cos(E))
        E = E - d
        if np.all(np.abs(d) < tol):
            break
    r = 1.0 - e * np.cos(E)
    f = 2.0 * np.arctan2(math.sqrt(1.0 + e) * np.sin(E / 2.0),
                         math.sqrt(1.0 - e) * np.cos(E / 2.0))
    return r, f, E


def averaged_torque_coefficients(e: float) -> tuple[float, float]:
    """Orbit averages ``(Lbar, Nbar)`` of ``a^6/r^6`` and ``a^6 fdot / r^6``."""
    e2 = e * e
    lbar = (1.0 + 3.0 * e2 + 0.375 * e2 * e2) / (1.0 - e2) ** 4.5
    nbar = (1.0 + 7.5 * e2 + 5.625 * e2 * e2 + 0.3125 * e2 ** 3) / (1.0 - e2) ** 6
    return lbar, nbar


def dissipative_constant(n: float, k2: float, xi: float, Q: float,
                         radius_over_a: float, mass_ratio: float) -> float:
    """``K_d = 3 n k2/(xi Q) (R_e/a)^3 (M/m)``."""
    return 3.0 * n * k2 / (xi * Q) * radius_over_a ** 3 * mass_ratio


MOON_ECCENTRICITY = 0.0549
REALISTIC_EPSILON = 1e-4
REALISTIC_KD = 1e-8


@dataclass(frozen=True)
class SpinOrbitParams:
    e: float = 0.0
    epsilon: float = 0.0
    lambda_diss: float = 0.0
    mu_drift: float | None = None
    substeps: int = 512
    averaged: bool = True
    kd: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.e <= 0.5:
            raise ValueError("eccentricity must lie in [0, 0.5]")
        if self.substeps < 1:
            raise ValueError("2 pi / h must be a positive integer")
        if self.lambda_diss < 0.0:
            raise ValueError("lambda_diss must be non-negative")

    @property
    def h(self) -> float:
        return TWO_PI / self.substeps

    @property
    def mu(self) -> float:
        if self.mu_drift is not None:
            return self.mu_drift
        lbar, nbar = averaged_torque_coefficients(self.e)
        return nbar / lbar

    @classmethod
    def from_kd(cls, e: float, epsilon: float, kd: float, **kw) -> "SpinOrbitParams":
        lbar, _ = averaged_torque_coefficients(e)
        return cls(e=e, epsilon=epsilon, lambda_diss=kd * lbar, kd=kd, **kw)


class SpinOrbitMap(MapModel):
    """Time-2 pi map of the spin-orbit equation built from modified Euler steps.

    Sub-step (``g = (1/r)^3 sin(2x - 2f)``)::

        y <- (1 - lam h) y + lam mu h - eps g(x, t) h
        x <- x + y h

    With ``averaged=False`` the torque uses ``L(e,t) = 1/r^6`` and
    ``N(e,t) = fdot/r^6`` scaled by ``kd`` instead; that variant is meant for
    orbit iteration and has no scalar conformal factor.
    """

    family = "spin_orbit"
    drift_scale = 1.0

    def __init__(self, params: SpinOrbitParams | None = None, **kw):
        self.params = params if params is not None else SpinOrbitParams(**kw)
        p = self.params
        if p.lambda_diss * p.h >= 1.0:
            raise StepTooLarge(f"lambda_diss * h = {p.lambda_diss * p.h} >= 1")
        t = p.h * np.arange(p.substeps)
        r, f, E = _kepler(p.e, t, 1e-14)
        self._inv_r3 = r ** -3
        self._two_f = 2.0 * f
        if not p.averaged:
            if p.kd is None:
                raise ValueError("the time-dependent torque needs kd")
            fdot = math.sqrt(1.0 - p.e ** 2) / r ** 2
            self._L = r ** -6
            self._N = fdot * r ** -6

    @property
    def mu(self) -> float:
        return self.params.mu

    @property
    def has_drift(self) -> bool:
        return self.params.lambda_diss > 0.0 and self.params.averaged

    def with_mu(self, mu: float) -> "SpinOrbitMap":
        if not self.has_drift:
            raise NoDriftParameter("the conservative spin-orbit map has no drift")
        return SpinOrbitMap(replace(self.params, mu_drift=float(mu)))

    @property
    def conformal_factor(self) -> float:
        p = self.params
        if not p.averaged:
            return float("nan")
        return (1.0 - p.lambda_diss * p.h) ** p.substeps

    def _loop(self, y, x, want_jac=False, want_mu=False):
        p = self.params
        h = p.h
        y = np.array(y, dtype=float)
        x = np.array(x, dtype=float)
        shape = np.broadcast(y, x).shape
        y = np.broadcast_to(y, shape).copy()
        x = np.broadcast_to(x, shape).copy()
        if want_jac:
            a, b = np.ones(shape), np.zeros(shape)
            c, d = np.zeros(shape), np.ones(shape)
        if want_mu:
            vy, vx = np.zeros(shape), np.zeros(shape)
        damp = 1.0 - p.lambda_diss * h
        kick = p.lambda_diss * p.mu * h
        eh = p.epsilon * h
        for n in range(p.substeps):
            arg = 2.0 * x - self._two_f[n]
            force = eh * self._inv_r3[n]
            if p.averaged:
                yn = damp * y + kick - force * np.sin(arg)
                dyy = damp
            else:
                lk = h * p.kd * self._L[n]
                yn = (1.0 - lk) * y + h * p.kd * self._N[n] - force * np.sin(arg)
                dyy = 1.0 - lk
            if want_jac or want_mu:
                dyx = -2.0 * force * np.cos(arg)
            if want_jac:
                # row update for y then x = x + h y_new
                a_n, b_n = dyy * a + dyx * c, dyy * b + dyx * d
                c, d = c + h * a_n, d + h * b_n
                a, b = a_n, b_n
            if want_mu:
                vyn = dyy * vy + dyx * vx + p.lambda_diss * h
                vx = vx + h * vyn
                vy = vyn
            y = yn
            x = x + h * yn
        out = [y, x]
        if want_jac:
            out.append(_stack_jacobian(a, b, c, d))
        if want_mu:
            out.append(np.stack([vy, vx], -1))
        return out

    def apply(self, y, x):
        y, x = self._loop(y, x)
        return y, x

    def jacobian(self, y, x):
        return self._loop(y, x, want_jac=True)[2]

    def apply_with_jacobian(self, y, x):
        return tuple(self._loop(y, x, want_jac=True))

    def drift_derivative(self, y, x):
        if not self.has_drift:
            raise NoDriftParameter("the conservative spin-orbit map has no drift")
        return self._loop(y, x, want_mu=True)[2]

    def unperturbed(self, omega: float) -> tuple[float, float]:
        y = omega / TWO_PI
        return y, (y if self.has_drift else self.params.mu)


def stroboscopic_map(params: SpinOrbitParams) -> SpinOrbitMap:
    return SpinOrbitMap(params)


# ---------------------------------------------------------------------------
# construction from a config block


def build_model(family: str, **kw) -> MapModel:
    """Construct a model from a family name and flat keyword parameters."""
    kw = dict(kw)
    harmonics = kw.pop("harmonics", None)
    eps1 = kw.pop("eps1", None)
    eps2 = kw.pop("eps2", None)
    if "lambda" in kw:
        kw["lam"] = kw.pop("lambda")
    if eps1 is not None or eps2 is not None:
        pot = Potential.two_harmonic(eps1 or 0.0, eps2 or 0.0)
        kw.setdefault("epsilon", 1.0)
    elif harmonics is not None:
        pot = Potential(tuple((int(j), float(a)) for j, a in harmonics))
    else:
        pot = Potential.single_harmonic()
    if family == "conservative_sm":
        kw.setdefault("lam", 1.0)
        return StandardMap(StandardMapParams(potential=pot, **kw))
    if family in ("dissipative_sm", "two_harmonic"):
        return StandardMap(StandardMapParams(potential=pot, **kw))
    if family == "nontwist_sm":
        return NonTwistMap(NonTwistMapParams(potential=pot, **kw))
    if family == "spin_orbit":
        kw.pop("lam", None)
        if "kd" in kw and "lambda_diss" not in kw:
            kd = kw.pop("kd")
            return SpinOrbitMap(SpinOrbitParams.from_kd(kw.pop("e", 0.0),
                                                        kw.pop("epsilon", 0.0), kd, **kw))
        return SpinOrbitMap(SpinOrbitParams(**kw))
    if family == "two_factor_4d":
        return TwoFactorMap(TwoFactorParams(**kw))
    raise ValueError(f"unknown model family {family!r}")


FAMILIES: Sequence[str] = ("conservative_sm", "dissipative_sm", "two_harmonic",
                           "nontwist_sm", "spin_orbit", "two_factor_4d")
