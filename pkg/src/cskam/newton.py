"""Quasi-Newton solver for invariant circles of (conformally) symplectic maps.

The unknowns are an embedding ``K(theta) = (K_y(theta), theta + k_x(theta))``
and, for dissipative maps, the drift ``mu``, subject to

    f_mu(K(theta)) = K(theta + omega).

Each step uses the approximately reducing frame ``M = [DK | J^{-1} DK N]`` in
which the linearised equation becomes upper triangular with diagonal
``(1, lam)``.  What is left are two scalar cohomological equations plus a
2x2 linear system for the averages, all diagonal either on the grid or in
Fourier space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fourier as fo
from .errors import (DegenerateEmbedding, LiftDiscontinuity, MaxIterations,
                     NondegeneracyFailure, SmallDivisorOverflow)
from .fourier import DiophantineFrequency, PeriodicGridFunction
from .models import MapModel

log = logging.getLogger(__name__)

NONDEGENERACY_TOL = 1e-8
IMMERSION_TOL = 1e-8


def _pgf(samples) -> PeriodicGridFunction:
    return PeriodicGridFunction(samples)


def _drop_nyquist(f: PeriodicGridFunction) -> PeriodicGridFunction:
    c = f.half_coefficients.copy()
    c[-1] = 0.0
    return PeriodicGridFunction(coefficients=c, n_modes=f.n_modes)


@dataclass(frozen=True)
class TorusEmbedding:
    model: MapModel
    omega: DiophantineFrequency
    mu: float
    ky: PeriodicGridFunction
    kx_periodic: PeriodicGridFunction

    @property
    def n_modes(self) -> int:
        return self.ky.n_modes

    @property
    def lam(self) -> float:
        return self.model.conformal_factor

    @property
    def epsilon(self) -> float:
        return getattr(self.model.params, "epsilon", 0.0)

    @property
    def conservative(self) -> bool:
        return self.lam == 1.0

    @property
    def mu_normalized(self) -> float:
        """Drift in turns per iterate (``mu / 2 pi`` for the standard maps)."""
        return self.mu / self.model.drift_scale

    @property
    def bound_model(self) -> MapModel:
        """The model with its drift set to this torus' ``mu``."""
        if self.model.has_drift and not self.conservative:
            return self.model.with_mu(self.mu)
        return self.model

    @classmethod
    def unperturbed(cls, model: MapModel, omega, n_modes: int = 64) -> "TorusEmbedding":
        omega = DiophantineFrequency.parse(omega)
        y0, mu0 = model.unperturbed(omega.omega)
        return cls(model, omega, mu0,
                   PeriodicGridFunction.constant(y0, n_modes),
                   PeriodicGridFunction.constant(0.0, n_modes))

    def resample(self, n_modes: int) -> "TorusEmbedding":
        return replace(self, ky=self.ky.resample(n_modes),
                       kx_periodic=self.kx_periodic.resample(n_modes))

    def with_model(self, model: MapModel) -> "TorusEmbedding":
        return replace(self, model=model)

    def rotate(self, psi: float) -> "TorusEmbedding":
        """Reparametrise as ``theta -> K(theta + psi)``; drops the zero-mean gauge."""
        return replace(self, ky=fo.shift(self.ky, psi),
                       kx_periodic=fo.shift(self.kx_periodic, psi) + psi)

    def regauge(self) -> "TorusEmbedding":
        """Shift the parametrisation so that ``mean(kx_periodic) = 0``."""
        c = self.kx_periodic.mean
        if c == 0.0:
            return self
        return replace(self, ky=fo.shift(self.ky, -c),
                       kx_periodic=fo.shift(self.kx_periodic, -c) - c)

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.ky(theta), theta + self.kx_periodic(theta)

    def sobolev_norms(self, orders=(1, 2, 3)) -> dict:
        """``H^m`` norm of the periodic part ``(K_y - <K_y>, k_x)``."""
        ky0 = self.ky - self.ky.mean
        return {m: math.hypot(fo.sobolev_norm(ky0, m),
                              fo.sobolev_norm(self.kx_periodic, m))
                for m in orders}

    def tail(self, fraction: float = 0.5) -> float:
        ky0 = self.ky - self.ky.mean
        return max(fo.tail_mass(ky0, fraction), fo.tail_mass(self.kx_periodic, fraction))

    def min_immersion(self) -> float:
        dky = fo.derivative(self.ky).samples
        dkx = 1.0 + fo.derivative(self.kx_periodic).samples
        return float(np.sqrt(dky ** 2 + dkx ** 2).min())


# ---------------------------------------------------------------------------
# error and frame


def invariance_error(K: TorusEmbedding, check_lift: bool = True):
    """``E = f_mu(K(theta)) - K(theta + omega)`` on the grid as ``(E_y, E_x)``."""
    n = K.n_modes
    th = fo.grid(n)
    model = K.bound_model
    yn, xn = model.apply(K.ky.samples, th + K.kx_periodic.samples)
    ey = yn - fo.shift(K.ky, K.omega.omega).samples
    ex = xn - (th + K.omega.omega) - fo.shift(K.kx_periodic, K.omega.omega).samples
    if check_lift:
        jumps = np.abs(np.diff(np.append(ex, ex[0])))
        if jumps.max() > math.pi:
            raise LiftDiscontinuity(f"angle error jumps by {jumps.max():.3f}")
    return _pgf(ey), _pgf(ex)


def sup_error(E) -> float:
    return float(max(np.abs(E[0].samples).max(), np.abs(E[1].samples).max()))


def fine_grid_error(K: TorusEmbedding, factor: int = 4) -> float:
    """Invariance error of the Fourier interpolant on a grid ``factor`` times finer."""
    return sup_error(invariance_error(K.resample(K.n_modes * factor), check_lift=False))


@dataclass
class NewtonFrame:
    dky: np.ndarray
    dkx: np.ndarray
    N: np.ndarray
    P: tuple
    gamma: np.ndarray
    S: PeriodicGridFunction
    dky_shift: np.ndarray
    dkx_shift: np.ndarray
    N_shift: np.ndarray
    jac: np.ndarray
    lam: float
    reducibility_defect: float
    A_tilde: tuple | None = None

    def M(self) -> np.ndarray:
        """Frame matrices ``[DK | J^{-1} DK N]`` on the grid, shape (n, 2, 2)."""
        a, b = self.dky, -self.dkx * self.N
        c, d = self.dkx, self.dky * self.N
        return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)

    def M_inv_shifted(self) -> np.ndarray:
        """``M(theta + omega)^{-1}`` (``det M = 1`` identically)."""
        a, b = self.dky_shift * self.N_shift, self.dkx_shift * self.N_shift
        c, d = -self.dkx_shift, self.dky_shift
        return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)

    def to_frame(self, vy, vx):
        """Coordinates of a vector field in the shifted frame, ``M(theta+omega)^{-1} v``."""
        first = self.N_shift * (self.dky_shift * vy + self.dkx_shift * vx)
        second = -self.dkx_shift * vy + self.dky_shift * vx
        return first, second


def assemble_frame(K: TorusEmbedding) -> NewtonFrame:
    om = K.omega.omega
    dky_f = fo.derivative(K.ky)
    dkx_f = fo.derivative(K.kx_periodic) + 1.0
    dky, dkx = dky_f.samples, dkx_f.samples
    g = dky * dky + dkx * dkx
    if g.min() < IMMERSION_TOL:
        raise DegenerateEmbedding(f"|DK|^2 reaches {g.min():.3e}")
    N = 1.0 / g
    dky_s = fo.shift(dky_f, om).samples
    dkx_s = fo.shift(dkx_f, om).samples
    N_s = 1.0 / (dky_s ** 2 + dkx_s ** 2)

    th = fo.grid(K.n_modes)
    jac = K.bound_model.jacobian(K.ky.samples, th + K.kx_periodic.samples)
    lam = K.lam
    # V = J^{-1} DK N with J^{-1} = [[0, -1], [1, 0]]
    vy, vx = -dkx * N, dky * N
    dfv_y = jac[:, 0, 0] * vy + jac[:, 0, 1] * vx
    dfv_x = jac[:, 1, 0] * vy + jac[:, 1, 1] * vx
    # gamma = DK^T J^{-1} DK vanishes identically for one-dimensional tori
    gamma_s = dky_s * (-dkx_s) + dkx_s * dky_s
    if np.abs(gamma_s).max() != 0.0:
        raise AssertionError("gamma must vanish for circles")
    S = N_s * (dky_s * dfv_y + dkx_s * dfv_x) - N_s * gamma_s * N_s * lam

    # reducibility defect Df M - M(theta+omega) [[1, S], [0, lam]]
    dfdk_y = jac[:, 0, 0] * dky + jac[:, 0, 1] * dkx
    dfdk_x = jac[:, 1, 0] * dky + jac[:, 1, 1] * dkx
    vy_s, vx_s = -dkx_s * N_s, dky_s * N_s
    r1 = np.maximum(np.abs(dfdk_y - dky_s), np.abs(dfdk_x - dkx_s))
    r2 = np.maximum(np.abs(dfv_y - dky_s * S - lam * vy_s),
                    np.abs(dfv_x - dkx_s * S - lam * vx_s))
    defect = float(max(r1.max(), r2.max()))
    return NewtonFrame(dky=dky, dkx=dkx, N=N, P=(dky * N, dkx * N), gamma=gamma_s,
                       S=_pgf(S), dky_shift=dky_s, dkx_shift=dkx_s, N_shift=N_s,
                       jac=jac, lam=lam, reducibility_defect=defect)


# ---------------------------------------------------------------------------
# one step


@dataclass
class StepDiagnostics:
    nondegeneracy_det: float
    sigma: float
    projected_average: float
    w_sup: float


def _nondegeneracy_matrix(S, Bt, A1, A2, lam):
    return np.array([[S.mean, (S * Bt).mean + A1.mean],
                     [lam - 1.0, A2.mean]])


def newton_step(K: TorusEmbedding, frame: NewtonFrame | None = None, E=None):
    """One quasi-Newton correction; returns ``(K_new, sigma, diagnostics)``."""
    if frame is None:
        frame = assemble_frame(K)
    if E is None:
        E = invariance_error(K)
    om = K.omega.omega
    lam = frame.lam
    e1, e2 = frame.to_frame(E[0].samples, E[1].samples)
    E1, E2 = _pgf(e1), _pgf(e2)
    S = frame.S
    projected = 0.0

    if K.conservative:
        det = S.mean
        if abs(det) < NONDEGENERACY_TOL:
            raise NondegeneracyFailure(f"<S> = {det:.3e}")
        projected = E2.mean
        B0 = fo.solve_small_divisor(-(E2 - projected), om)
        w = -((S * B0).mean + E1.mean) / S.mean
        sigma = 0.0
        W2 = B0 + w
        Q1 = -E1 - S * W2
    else:
        th = fo.grid(K.n_modes)
        dmu = K.bound_model.drift_derivative(K.ky.samples, th + K.kx_periodic.samples)
        a1, a2 = frame.to_frame(dmu[:, 0], dmu[:, 1])
        A1, A2 = _pgf(a1), _pgf(a2)
        frame.A_tilde = (A1, A2)
        B0 = fo.solve_contraction(-(E2 - E2.mean), om, lam)
        Bt = fo.solve_contraction(-(A2 - A2.mean), om, lam)
        mat = _nondegeneracy_matrix(S, Bt, A1, A2, lam)
        det = float(np.linalg.det(mat))
        if abs(det) < NONDEGENERACY_TOL:
            raise NondegeneracyFailure(f"non-degeneracy determinant {det:.3e}")
        rhs = np.array([-(S * B0).mean - E1.mean, -E2.mean])
        w, sigma = np.linalg.solve(mat, rhs)
        W2 = B0 + sigma * Bt + w
        Q1 = -E1 - S * W2 - sigma * A1
    # the average of Q1 vanishes by construction up to round-off
    W1 = fo.solve_small_divisor(Q1 - Q1.mean, om)
    w1, w2 = W1.samples, W2.samples
    if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
        raise SmallDivisorOverflow("non-finite correction")
    dky = frame.dky * w1 - frame.dkx * frame.N * w2
    dkx = frame.dkx * w1 + frame.dky * frame.N * w2
    K_new = replace(K, ky=_drop_nyquist(K.ky + dky),
                    kx_periodic=_drop_nyquist(K.kx_periodic + dkx),
                    mu=K.mu + float(sigma)).regauge()
    diag = StepDiagnostics(nondegeneracy_det=float(det), sigma=float(sigma),
                           projected_average=float(projected),
                           w_sup=float(max(np.abs(w1).max(), np.abs(w2).max())))
    return K_new, float(sigma), diag


# ---------------------------------------------------------------------------
# the iteration


@dataclass
class IterationRecord:
    error_sup: float
    error_sobolev: float
    nondegeneracy_det: float
    sigma: float
    tail_mass: float
    n_modes: int


@dataclass
class NewtonReport:
    iterations: list = field(default_factory=list)
    converged: bool = False
    final_error: float = math.inf
    reason: str = ""
    initial_error: float = math.inf

    @property
    def errors(self) -> list:
        return [self.initial_error] + [r.error_sup for r in self.iterations]

    def convergence_order(self, lo: float = 1e-13, hi: float = 1e-3) -> float:
        """Least-squares slope of ``log e_{n+1}`` against ``log e_n``.

        Only pairs with ``e_n`` in ``[lo, hi]`` and ``e_{n+1}`` above the
        round-off floor take part.
        """
        e = self.errors
        pairs = [(a, b) for a, b in zip(e[:-1], e[1:])
                 if lo <= a <= hi and b > 1e-14 and b < a]
        if not pairs:
            return float("nan")
        if len(pairs) == 1:
            a, b = pairs[0]
            return math.log(b) / math.log(a)
        x = np.log([p[0] for p in pairs])
        y = np.log([p[1] for p in pairs])
        return float(np.polyfit(x, y, 1)[0])


@dataclass
class SolverOptions:
    tol: float = 1e-11
    tail_tol: float = 1e-9
    max_iter: int = 30
    max_modes: int = 2 ** 14
    m_sobolev: float = 2.0
    divergence_factor: float = 1e3
    stall_iterations: int = 5


def solve(model: MapModel, omega, initial: TorusEmbedding | str = "cold",
          options: SolverOptions | None = None, n_modes: int = 64,
          cold_threshold: float = 0.1, raise_on_failure: bool = False):
    """Run the Newton iteration to convergence.

    Returns ``(K, report)``; ``K`` is the best iterate when the run fails.
    """
    opts = options or SolverOptions()
    omega = DiophantineFrequency.parse(omega)
    if isinstance(initial, str):
        eps = getattr(model.params, "epsilon", 0.0)
        if eps > cold_threshold:
            log.warning("cold start at epsilon=%s beyond %s", eps, cold_threshold)
        K = TorusEmbedding.unperturbed(model, omega, n_modes)
    else:
        K = initial.with_model(model) if initial.model is not model else initial
        if K.omega.omega != omega.omega:
            K = replace(K, omega=omega)
    report = NewtonReport()
    try:
        E = invariance_error(K)
    except LiftDiscontinuity as exc:
        report.reason = str(exc)
        return K, report
    err = sup_error(E)
    report.initial_error = err
    best, best_err = K, err
    doubled = False
    since_best = 0
    for it in range(opts.max_iter + 1):
        tail = K.tail()
        if err < opts.tol and tail < opts.tail_tol:
            report.converged = True
            break
        if tail >= opts.tail_tol and K.n_modes < opts.max_modes and err < 1e-3:
            K = K.resample(2 * K.n_modes)
            E = invariance_error(K)
            err = sup_error(E)
            best, best_err = K, err
            continue
        if tail >= opts.tail_tol and K.n_modes >= opts.max_modes and err < 1e-3 and err < 10 * opts.tol:
            report.reason = "resource_cap"
            break
        if it == opts.max_iter:
            report.reason = "max_iterations"
            break
        try:
            K_new, sigma, diag = newton_step(K, None, E)
            E_new = invariance_error(K_new)
        except (NondegeneracyFailure, SmallDivisorOverflow, DegenerateEmbedding,
                LiftDiscontinuity, FloatingPointError) as exc:
            report.reason = f"{type(exc).__name__}: {exc}"
            break
        err_new = sup_error(E_new)
        if not math.isfinite(err_new) or err_new > opts.divergence_factor * max(best_err, 1e-10):
            report.reason = "diverged"
            break
        K, E, err = K_new, E_new, err_new
        report.iterations.append(IterationRecord(
            error_sup=err, error_sobolev=_error_sobolev(E, opts.m_sobolev),
            nondegeneracy_det=diag.nondegeneracy_det, sigma=sigma,
            tail_mass=K.tail(), n_modes=K.n_modes))
        if err < best_err:
            best, best_err, since_best = K, err, 0
        else:
            since_best += 1
            if since_best >= opts.stall_iterations:
                if not doubled and K.n_modes < opts.max_modes:
                    doubled = True
                    since_best = 0
                    K = best.resample(2 * best.n_modes)
                    E = invariance_error(K)
                    err = sup_error(E)
                    best, best_err = K, err
                    continue
                capped = K.n_modes >= opts.max_modes and K.tail() >= opts.tail_tol
                report.reason = "resource_cap" if capped else "no_contraction"
                break
    if report.converged:
        best, best_err = K, err
    elif not report.reason and K.n_modes >= opts.max_modes:
        report.reason = "resource_cap"
    report.final_error = best_err
    if raise_on_failure and not report.converged:
        raise MaxIterations(report.reason or "not converged")
    return best, report


def _error_sobolev(E, m: float) -> float:
    return math.hypot(fo.sobolev_norm(E[0], m), fo.sobolev_norm(E[1], m))


# ---------------------------------------------------------------------------
# uniqueness modulo translations


@dataclass
class UniquenessResult:
    match: bool
    psi: float
    distance: float
    mu_gap: float


def _phase_distance(Ka: TorusEmbedding, Kb: TorusEmbedding, psi: float) -> float:
    n = max(Ka.n_modes, Kb.n_modes)
    th = fo.grid(n)
    ya, xa = Ka.evaluate(th + psi)
    yb, xb = Kb.evaluate(th)
    return float(max(np.abs(yb - ya).max(), np.abs(xb - xa).max()))


def uniqueness_check(Ka: TorusEmbedding, Kb: TorusEmbedding, tol: float = 1e-10):
    """Find ``psi`` with ``K_b(theta) = K_a(theta + psi)`` and compare drifts.

    The angle component gives ``psi`` directly as the mean offset of the
    periodic parts; the first-harmonic phase of ``K_y`` serves as a fallback
    seed, and the estimate is polished by Newton on ``<x_b - x_a(. + psi)>``.
    """
    from scipy.optimize import minimize_scalar

    psi = Kb.kx_periodic.mean - Ka.kx_periodic.mean
    ca, cb = Ka.ky.coefficient(1), Kb.ky.coefficient(1)
    if abs(ca) > 1e-12 and abs(cb) > 1e-12 and abs(psi) < 1e-15:
        psi = float(np.angle(cb / ca))
    th = fo.grid(max(Ka.n_modes, Kb.n_modes))
    for _ in range(20):
        _, xa = Ka.evaluate(th + psi)
        _, xb = Kb.evaluate(th)
        # x_b(theta) - x_a(theta + psi) averaged; d/dpsi of x_a is <DK_x> = 1
        step = float(np.mean(xb - xa))
        psi += step
        if abs(step) < 1e-15:
            break
    dist = _phase_distance(Ka, Kb, psi)
    if dist > tol:
        res = minimize_scalar(lambda p: _phase_distance(Ka, Kb, p),
                              bounds=(psi - 1e-2, psi + 1e-2), method="bounded",
                              options={"xatol": 1e-14})
        if res.fun < dist:
            psi, dist = float(res.x), float(res.fun)
    psi = math.remainder(psi, 2.0 * math.pi)
    gap = abs(Ka.mu - Kb.mu)
    return UniquenessResult(match=dist < tol and gap < tol, psi=psi,
                            distance=dist, mu_gap=gap)
