"""Continuation of invariant circles in epsilon and Sobolev blow-up fits."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import fourier as fo
from .errors import InsufficientData
from .models import MapModel
from .newton import SolverOptions, TorusEmbedding, solve

log = logging.getLogger(__name__)


@dataclass
class ContinuationPolicy:
    step: float = 0.05
    grow: float = 1.3
    shrink: float = 0.5
    min_step: float = 1e-6
    max_step: float = 0.02
    easy_iterations: int = 4
    n_modes_init: int = 64
    max_modes: int = 2 ** 14
    sobolev_orders: tuple = (1, 2, 3)
    track_bundle: bool = False
    predictor: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class TraceRecord:
    epsilon: float
    mu: float
    mu_normalized: float
    n_modes: int
    sup_error: float
    sobolev: dict
    min_bundle_angle: float | None = None
    wall_time: float = 0.0
    iterations: int = 0

    def row(self, orders) -> list:
        angle = "" if self.min_bundle_angle is None else repr(self.min_bundle_angle)
        return ([repr(self.epsilon), repr(self.mu), repr(self.mu_normalized),
                 str(self.n_modes), repr(self.sup_error)]
                + [repr(self.sobolev[m]) for m in orders]
                + [angle, f"{self.wall_time:.3f}", str(self.iterations)])


@dataclass
class ContinuationTrace:
    records: list = field(default_factory=list)
    sobolev_orders: tuple = (1, 2, 3)
    failure_reason: str = ""
    tori: list = field(default_factory=list, repr=False)

    @property
    def last_converged_epsilon(self) -> float:
        return self.records[-1].epsilon if self.records else float("nan")

    @property
    def last_torus(self) -> TorusEmbedding | None:
        return self.tori[-1] if self.tori else None

    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    def norms(self, m) -> np.ndarray:
        return np.array([r.sobolev[m] for r in self.records])

    def append(self, K: TorusEmbedding, err: float, elapsed: float, iterations: int,
               angle: float | None = None, keep_torus: bool = True):
        norms = K.sobolev_norms(self.sobolev_orders)
        self.records.append(TraceRecord(
            epsilon=K.epsilon, mu=K.mu, mu_normalized=K.mu_normalized,
            n_modes=K.n_modes, sup_error=err, sobolev=norms,
            min_bundle_angle=angle, wall_time=elapsed, iterations=iterations))
        if keep_torus:
            self.tori.append(K)

    def anomalies(self, m=2, rel_tol: float = 0.01) -> list:
        """Indices where ``H^m`` or the mode count drops along the trace."""
        out = []
        for i in range(1, len(self.records)):
            a, b = self.records[i - 1], self.records[i]
            if b.sobolev[m] < a.sobolev[m] * (1.0 - rel_tol) or b.n_modes < a.n_modes:
                out.append(i)
        return out


def _extrapolate(K1: TorusEmbedding, K2: TorusEmbedding, e1: float, e2: float,
                 e3: float, model: MapModel) -> TorusEmbedding:
    """Secant predictor through the last two tori, evaluated at ``e3``."""
    n = max(K1.n_modes, K2.n_modes)
    K1, K2 = K1.resample(n), K2.resample(n)
    t = (e3 - e2) / (e2 - e1)
    return replace(K2, model=model,
                   ky=K2.ky + t * (K2.ky - K1.ky),
                   kx_periodic=K2.kx_periodic + t * (K2.kx_periodic - K1.kx_periodic),
                   mu=K2.mu + t * (K2.mu - K1.mu))


def _set_epsilon(model: MapModel, eps: float) -> MapModel:
    return model.with_params(epsilon=float(eps))


def continue_torus(model: MapModel, omega, eps_start: float, eps_end: float,
                   policy: ContinuationPolicy | None = None,
                   initial: TorusEmbedding | None = None,
                   trace: ContinuationTrace | None = None,
                   keep_tori: bool = True) -> ContinuationTrace:
    """Follow the circle of frequency ``omega`` from ``eps_start`` to ``eps_end``."""
    pol = policy or ContinuationPolicy()
    sopts = replace(pol.solver, max_modes=pol.max_modes)
    if trace is None:
        trace = ContinuationTrace(sobolev_orders=tuple(pol.sobolev_orders))
    omega = fo.DiophantineFrequency.parse(omega)

    def angle_of(K):
        if not pol.track_bundle or K.conservative:
            return None
        from .bundles import stable_bundle
        return stable_bundle(K).min_angle

    if initial is None and trace.tori:
        initial = trace.tori[-1]
    if initial is None:
        m0 = _set_epsilon(model, eps_start)
        t0 = time.perf_counter()
        K, rep = solve(m0, omega, "cold", sopts, n_modes=pol.n_modes_init,
                       cold_threshold=max(0.1, eps_start))
        if not rep.converged:
            trace.failure_reason = f"start: {rep.reason}"
            return trace
        trace.append(K, rep.final_error, time.perf_counter() - t0,
                     len(rep.iterations), angle_of(K), keep_tori)
    else:
        K = initial
        if not trace.records:
            from .newton import invariance_error, sup_error
            trace.append(K, sup_error(invariance_error(K)), 0.0, 0, angle_of(K), keep_tori)
    if eps_end <= K.epsilon:
        return trace

    prev = trace.tori[-2] if len(trace.tori) >= 2 else None
    eps = K.epsilon
    step = min(pol.step, pol.max_step)
    while eps < eps_end:
        target = min(eps + step, eps_end)
        m = _set_epsilon(model, target)
        if pol.predictor and prev is not None and prev.epsilon < eps:
            guess = _extrapolate(prev, K, prev.epsilon, eps, target, m)
        else:
            guess = K.with_model(m)
        t0 = time.perf_counter()
        try:
            K_new, rep = solve(m, omega, guess, sopts)
        except (ValueError, FloatingPointError) as exc:
            rep = None
            log.debug("solve failed at %s: %s", target, exc)
        ok = rep is not None and rep.converged
        if ok:
            prev, K, eps = K, K_new, target
            trace.append(K, rep.final_error, time.perf_counter() - t0,
                         len(rep.iterations), angle_of(K), keep_tori)
            if len(rep.iterations) <= pol.easy_iterations:
                step = min(step * pol.grow, pol.max_step)
            log.info("eps=%.8f n=%d H2=%.4g", eps, K.n_modes,
                     trace.records[-1].sobolev.get(2, float("nan")))
        else:
            reason = rep.reason if rep is not None else "exception"
            if reason == "resource_cap" or (rep is not None and K_new.n_modes >= pol.max_modes
                                            and "resource" in reason):
                trace.failure_reason = "resource_cap"
            step *= pol.shrink
            if step < pol.min_step:
                trace.failure_reason = trace.failure_reason or f"step_floor ({reason})"
                break
    return trace


# ---------------------------------------------------------------------------
# blow-up fit


@dataclass
class BreakdownEstimate:
    epsilon_crit: float
    beta: float
    fit_window: tuple
    fit_residual: float
    method: str
    amplitude: float = float("nan")
    n_points: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _fit_power_law(eps: np.ndarray, norms: np.ndarray, lower: float, upper: float):
    """Least-squares fit of ``log n = log A - beta log(ec - eps)`` over ``ec``."""
    y = np.log(norms)

    def resid(ec):
        x = np.log(ec - eps)
        X = np.column_stack([np.ones_like(x), -x])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ coef
        return float(np.sqrt(np.mean(r * r))), coef

    # coarse log-spaced scan, then polish
    gaps = np.geomspace(max(lower - eps[-1], 1e-9), upper - eps[-1], 200)
    vals = [resid(eps[-1] + g)[0] for g in gaps]
    i = int(np.argmin(vals))
    lo = eps[-1] + gaps[max(i - 1, 0)]
    hi = eps[-1] + gaps[min(i + 1, len(gaps) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda ec: resid(ec)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        ec = float(res.x)
    else:
        ec = float(eps[-1] + gaps[i])
    r, coef = resid(ec)
    return ec, float(coef[1]), float(math.exp(coef[0])), r


def fit_window(trace: ContinuationTrace, m: float, growth: float = 3.0):
    """Trailing records whose ``H^m`` norm exceeds ``growth`` times its value
    at ``eps = 0.5 * eps_last``."""
    eps = trace.epsilons()
    norms = trace.norms(m)
    ref = np.interp(0.5 * eps[-1], eps, norms)
    mask = norms >= growth * ref
    if not mask.any():
        return eps[:0], norms[:0]
    start = int(np.argmax(mask))
    return eps[start:], norms[start:]


def estimate_breakdown(trace: ContinuationTrace, m: float = 2, min_points: int = 6,
                       growth: float = 3.0, max_extrapolation: float = 0.2) -> BreakdownEstimate:
    """Fit ``||K||_{H^m} ~ A (eps_c - eps)^(-beta)`` to the tail of a trace."""
    if len(trace.records) < min_points:
        raise InsufficientData(f"need {min_points} records, have {len(trace.records)}")
    eps, norms = fit_window(trace, m, growth)
    last = trace.records[-1].epsilon
    if len(eps) < min_points:
        step = (trace.records[-1].epsilon - trace.records[-2].epsilon)
        log.warning("insufficient Sobolev growth; falling back to last converged epsilon")
        return BreakdownEstimate(epsilon_crit=last + step, beta=float("nan"),
                                 fit_window=(float(eps[0]) if len(eps) else last, last),
                                 fit_residual=float("nan"), method="last_converged",
                                 n_points=len(eps))
    ec, beta, amp, r = _fit_power_law(eps, norms, last, last + max_extrapolation)
    return BreakdownEstimate(epsilon_crit=ec, beta=beta, fit_window=(float(eps[0]), float(eps[-1])),
                             fit_residual=r, method="sobolev_fit", amplitude=amp,
                             n_points=len(eps))


# ---------------------------------------------------------------------------
# existence domain of the two-harmonic map


@dataclass
class ExistenceRegion:
    eps1: np.ndarray
    eps2: np.ndarray
    exists: np.ndarray
    ray_angles: np.ndarray
    radii: np.ndarray
    methods: list
    violations: list = field(default_factory=list)

    @property
    def boundary(self) -> np.ndarray:
        """Polyline ``(eps1, eps2)`` of the breakdown radius along the rays."""
        return np.column_stack([self.radii * np.cos(self.ray_angles),
                                self.radii * np.sin(self.ray_angles)])


def ray_breakdown(model: MapModel, omega, angle: float, r_max: float,
                  policy: ContinuationPolicy | None = None, m: float = 2):
    """Breakdown radius along ``(eps1, eps2) = r (cos angle, sin angle)``."""
    from .models import Potential
    pot = Potential(((1, math.cos(angle)), (2, math.sin(angle))))
    ray = model.with_params(potential=pot, epsilon=0.0)
    trace = continue_torus(ray, omega, 0.0, r_max, policy, keep_tori=False)
    if trace.last_converged_epsilon >= r_max:
        return r_max, "unbroken", trace
    try:
        est = estimate_breakdown(trace, m)
    except InsufficientData:
        return trace.last_converged_epsilon, "last_converged", trace
    return est.epsilon_crit, est.method, trace


def existence_region_scan(model: MapModel, omega, eps1_range=(-1.5, 1.5),
                          eps2_range=(-1.5, 1.5), n: int = 32, n_rays: int | None = None,
                          policy: ContinuationPolicy | None = None,
                          m: float = 2) -> ExistenceRegion:
    """Existence domain of ``V = eps1 sin x + eps2 sin 2x`` on an ``n x n`` grid.

    Rays from the origin are continued to breakdown; a cell exists when its
    radius is below the breakdown radius interpolated at its angle.  Rays
    whose continuation failed before the fitted radius dropped below that
    of both neighbours by more than 10% are listed as violations.
    """
    if n < 32:
        raise ValueError("the grid must be at least 32 x 32")
    e1 = np.linspace(*eps1_range, n)
    e2 = np.linspace(*eps2_range, n)
    E1, E2 = np.meshgrid(e1, e2)
    ang = np.arctan2(E2, E1)
    rad = np.hypot(E1, E2)
    corners = np.array([[a, b] for a in eps1_range for b in eps2_range])
    r_max = 1.05 * float(np.hypot(corners[:, 0], corners[:, 1]).max())
    if n_rays is None:
        n_rays = 2 * n
    nonzero = rad > 0
    a_lo, a_hi = float(ang[nonzero].min()), float(ang[nonzero].max())
    full = a_hi - a_lo > 1.5 * math.pi
    if full:
        angles = np.linspace(-math.pi, math.pi, n_rays, endpoint=False)
    else:
        angles = np.linspace(a_lo, a_hi, n_rays)
    radii, methods = [], []
    for a in angles:
        r, how, _ = ray_breakdown(model, omega, float(a), r_max, policy, m)
        radii.append(r)
        methods.append(how)
        log.info("ray angle=%.4f radius=%.5f (%s)", a, r, how)
    radii = np.array(radii)
    if full:
        r_at = np.interp(ang, angles, radii, period=2 * math.pi)
    else:
        r_at = np.interp(ang, angles, radii)
    exists = rad < r_at
    violations = []
    for i in range(1, n_rays - 1):
        if radii[i] < 0.9 * min(radii[i - 1], radii[i + 1]):
            violations.append(float(angles[i]))
    return ExistenceRegion(eps1=e1, eps2=e2, exists=exists, ray_angles=angles,
                           radii=radii, methods=methods, violations=violations)
