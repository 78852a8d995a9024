"""Periodic orbits, Arnold tongues and Greene-type breakdown estimates."""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from . import fourier as fo
from .errors import (IncompleteTongue, NewtonDiverged, SingularClosureJacobian,
                     UnresolvedCriterion)
from .models import TWO_PI, CylinderState, MapModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RationalApproximant:
    p: int
    q: int
    exact: bool = False

    @property
    def value(self) -> float:
        return TWO_PI * self.p / self.q

    def __str__(self):
        return f"{self.p}/{self.q}"


def approximants(omega, count: int, tol: float = 1e-12) -> list:
    """Continued-fraction convergents of ``omega / 2 pi`` with denominator >= 2.

    If the expansion terminates the last convergent is flagged ``exact``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rho = fo.DiophantineFrequency.parse(omega).omega / TWO_PI
    out = []
    h0, h1, k0, k1 = 1, math.floor(rho), 0, 1
    frac = rho - math.floor(rho)
    if frac < tol:
        return [RationalApproximant(h1, k1, True)]
    while len(out) < count:
        inv = 1.0 / frac
        a = math.floor(inv)
        frac = inv - a
        if frac > 1.0 - tol:
            a, frac = a + 1, 0.0
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        done = frac < tol * k1 * k1
        if k1 >= 2:
            out.append(RationalApproximant(h1, k1, done))
        if done:
            break
    return out


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass
class PeriodicOrbit:
    p: int
    q: int
    points: np.ndarray
    mu: float
    monodromy: np.ndarray
    eigenvalues: tuple
    log_det: float
    closure_defect: float
    iterations: int = 0

    @property
    def residue(self) -> float:
        return float((2.0 - np.trace(self.monodromy)) / 4.0)

    @property
    def states(self) -> list:
        return [CylinderState(float(y), float(x)) for y, x in self.points]

    def defect(self, lam: float) -> float:
        """Relative distance of the multipliers from ``(1, lam^q)``, in log space."""
        l1 = self.eigenvalues[0]
        d1 = abs(l1 - 1.0)
        if l1 == 0:
            return math.inf
        # Lambda_2 / lam^q = det / (lam^q Lambda_1)
        r = np.exp(self.log_det - self.q * math.log(lam)) / l1
        return float(max(d1, abs(r - 1.0)))


def _multipliers(jacs: np.ndarray):
    M = np.eye(2)
    for D in jacs:
        M = D @ M
    log_det = float(np.sum(np.log(np.abs(jacs[:, 0, 0] * jacs[:, 1, 1]
                                          - jacs[:, 0, 1] * jacs[:, 1, 0]))))
    det = math.exp(log_det)
    half = 0.5 * (M[0, 0] + M[1, 1])
    disc = half * half - det
    if disc >= 0.0:
        root = math.sqrt(disc)
        l1 = half + math.copysign(root, half) if half != 0.0 else root
        l2 = det / l1 if l1 != 0.0 else 0.0
        pair = (l1, l2) if abs(l1) >= abs(l2) else (l2, l1)
    else:
        l1 = complex(half, math.sqrt(-disc))
        pair = (l1, l1.conjugate())
    return M, pair, log_det


def _closure(model: MapModel, pts: np.ndarray, p: int) -> np.ndarray:
    yn, xn = model.apply(pts[:, 0], pts[:, 1])
    nxt = np.roll(pts, -1, axis=0)
    nxt[-1, 1] += TWO_PI * p
    return np.column_stack([yn, xn]) - nxt


def _shooting_matrix(model: MapModel, pts: np.ndarray, drift_col: bool):
    q = pts.shape[0]
    jac = model.jacobian(pts[:, 0], pts[:, 1])
    rows, cols, vals = [], [], []
    for a in range(2):
        for b in range(2):
            rows.append(2 * np.arange(q) + a)
            cols.append(2 * np.arange(q) + b)
            vals.append(jac[:, a, b])
        rows.append(2 * np.arange(q) + a)
        cols.append(2 * ((np.arange(q) + 1) % q) + a)
        vals.append(-np.ones(q))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * q, 2 * q)).tocsc()
    if drift_col:
        # x_0 is fixed by the caller; its column is replaced by d/dmu
        g = model.drift_derivative(pts[:, 0], pts[:, 1]).reshape(-1)
        A = A.tolil()
        A[:, 1] = g.reshape(-1, 1)
        A = A.tocsc()
    return A, jac


def find_periodic_orbit(model: MapModel, p: int, q: int, seed, x0: float | None = None,
                        mu: float | None = None, tol: float = 1e-12,
                        max_iter: int = 40) -> PeriodicOrbit:
    """Newton's method on the closure ``f^q(z_0) = z_0 + (0, 2 pi p)``.

    The orbit is represented by all of its ``q`` points (multiple shooting),
    which keeps the linear systems well conditioned for long periods.  For
    maps with a drift parameter pass ``x0``: the first angle is then held
    fixed and ``mu`` becomes an unknown.  ``seed`` is either a single state,
    which is iterated ``q - 1`` times, or an array of ``q`` states.
    """
    dissipative = x0 is not None
    if dissipative:
        model = model.with_mu(model.mu if mu is None else mu)
    seed = np.asarray(seed, dtype=float)
    if seed.ndim == 1:
        pts = np.empty((q, 2))
        pts[0] = seed
        for j in range(1, q):
            pts[j] = model.apply(*pts[j - 1])
    else:
        pts = seed.reshape(q, 2).copy()
    if dissipative:
        pts[:, 1] += x0 - pts[0, 1]
    scale = 1.0 + np.abs(pts).max()
    it = 0
    res = _closure(model, pts, p)
    err = np.abs(res).max()
    while err > tol * scale:
        if it >= max_iter or not np.isfinite(err) or err > 1e6 * scale:
            raise NewtonDiverged(f"{p}/{q}: closure defect {err:.3e} after {it} iterations")
        A, _ = _shooting_matrix(model, pts, dissipative)
        with np.errstate(all="ignore"):
            try:
                delta = spsolve(A, -res.reshape(-1))
            except RuntimeError as exc:
                raise SingularClosureJacobian(str(exc)) from exc
        if not np.all(np.isfinite(delta)):
            raise SingularClosureJacobian(f"{p}/{q}: singular closure Jacobian")
        delta = delta.reshape(q, 2)
        if dissipative:
            model = model.with_mu(model.mu + delta[0, 1])
            delta[0, 1] = 0.0
        pts += delta
        res = _closure(model, pts, p)
        new_err = np.abs(res).max()
        it += 1
        if it > 3 and new_err > 0.9 * err and new_err > 1e3 * tol * scale:
            raise NewtonDiverged(f"{p}/{q}: Newton stalled at {new_err:.3e}")
        err = new_err

    jac = model.jacobian(pts[:, 0], pts[:, 1])
    M, eig, log_det = _multipliers(jac)
    z = pts[0].copy()
    for _ in range(q):
        z = np.array(model.apply(z[0], z[1]))
    direct = float(np.abs(z - pts[0] - np.array([0.0, TWO_PI * p])).max())
    return PeriodicOrbit(p=p, q=q, points=pts, mu=float(model.mu) if model.has_drift else 0.0,
                         monodromy=M, eigenvalues=eig, log_det=log_det,
                         closure_defect=min(direct, float(err)), iterations=it)


def unperturbed_seed(model: MapModel, p: int, q: int, x0: float = 0.0):
    """Points of the ``eps = 0`` periodic orbit and the matching drift."""
    y, mu = model.unperturbed(TWO_PI * p / q)
    rho = TWO_PI * p / q
    pts = np.column_stack([np.full(q, y), x0 + rho * np.arange(q)])
    if model.family == "nontwist_sm":
        pts[:, 0] = 0.0
    return pts, mu


def torus_seed(K, p: int, q: int, x0: float):
    """Sample a nearby invariant circle at ``q`` points spaced by ``2 pi p / q``."""
    kx = K.kx_periodic
    bound = float(np.abs(kx.samples).max()) + 1e-9
    theta0 = brentq(lambda t: t + float(kx(t)) - x0, x0 - bound - 1e-9, x0 + bound + 1e-9)
    th = theta0 + TWO_PI * p / q * np.arange(q)
    ys, xs = K.evaluate(th)
    return np.column_stack([ys, xs]), K.mu


# ---------------------------------------------------------------------------
# Arnold tongues


@dataclass
class ArnoldTongue:
    p: int
    q: int
    epsilon: float
    lam: float
    mu_interval: tuple
    orbit_family: list = field(default_factory=list)
    sweep: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def width(self) -> float:
        return self.mu_interval[1] - self.mu_interval[0]

    @property
    def center(self) -> float:
        return 0.5 * (self.mu_interval[0] + self.mu_interval[1])

    def contains(self, mu: float) -> bool:
        return self.mu_interval[0] <= mu <= self.mu_interval[1]

    def center_orbits(self) -> list:
        """Family members nearest the tongue midpoint, one per branch.

        The branches are the two arcs of the sweep between the extreme
        drifts; when the tongue is narrower than rounding the choice
        degenerates and the member with the largest multiplier defect is
        returned instead, which sits mid-tongue for the harmonic forcings
        used here.
        """
        fam = self.orbit_family
        if not fam:
            return []
        mus = np.array([o.mu for o in fam])
        c = self.center
        i_lo, i_hi = int(np.argmin(mus)), int(np.argmax(mus))
        a, b = sorted((i_lo, i_hi))
        arc1 = list(range(a, b + 1))
        arc2 = list(range(b, len(fam))) + list(range(0, a + 1))
        out = []
        for arc in (arc1, arc2):
            k = min(arc, key=lambda i: abs(mus[i] - c))
            out.append(fam[k])
        return out


def _continue_from_zero(model: MapModel, p, q, eps, x0, n_steps: int):
    pts, mu = unperturbed_seed(model, p, q, x0)
    orbit = None
    for e in np.linspace(0.0, eps, n_steps + 1)[1:]:
        m = model.with_params(epsilon=float(e))
        orbit = find_periodic_orbit(m, p, q, pts, x0=x0, mu=mu)
        pts, mu = orbit.points, orbit.mu
    return orbit


def trace_tongue(model: MapModel, p: int, q: int, epsilon: float | None = None,
                 lam: float | None = None, n_samples: int = 32, seed=None,
                 eps_steps: int = 4) -> ArnoldTongue:
    """Sweep the fixed angle over ``[0, 2 pi)`` and record the drift of each orbit.

    ``seed`` maps an angle to ``(points, mu)``; by default orbits are followed
    from the unperturbed map in ``eps_steps`` increments of epsilon.
    """
    changes = {}
    if epsilon is not None:
        changes["epsilon"] = float(epsilon)
    if lam is not None:
        changes["lam"] = float(lam)
    if changes:
        model = model.with_params(**changes)
    eps = model.params.epsilon
    family, sweep = [], []
    prev = None
    for x0 in np.linspace(0.0, TWO_PI, n_samples, endpoint=False):
        orbit = None
        attempts = []
        if prev is not None:
            attempts.append((prev.points, prev.mu))
        if seed is not None:
            attempts.append(seed(x0))
        for pts, mu in attempts:
            try:
                orbit = find_periodic_orbit(model, p, q, pts, x0=x0, mu=mu)
                break
            except (NewtonDiverged, SingularClosureJacobian):
                continue
        if orbit is None and seed is None:
            try:
                orbit = (find_periodic_orbit(model, p, q, *unperturbed_seed(model, p, q, x0)[:1],
                                             x0=x0, mu=unperturbed_seed(model, p, q, x0)[1])
                         if eps == 0.0 else _continue_from_zero(model, p, q, eps, x0, eps_steps))
            except (NewtonDiverged, SingularClosureJacobian):
                orbit = None
        if orbit is not None:
            family.append(orbit)
            sweep.append(x0)
        prev = orbit
    if len(family) < n_samples / 2:
        raise IncompleteTongue(f"{p}/{q}: only {len(family)} of {n_samples} sweep points converged")
    mus = [o.mu for o in family]
    return ArnoldTongue(p=p, q=q, epsilon=eps, lam=model.conformal_factor,
                        mu_interval=(min(mus), max(mus)), orbit_family=family,
                        sweep=np.array(sweep))


# ---------------------------------------------------------------------------
# Greene estimate


@dataclass
class OrbitDiagnostic:
    epsilon: float
    p: int
    q: int
    value: float
    residue: float
    orbit: PeriodicOrbit | None = None


@dataclass
class GreeneEstimate:
    epsilon_crit: float
    bracket: tuple
    method: str
    diagnostics: list = field(default_factory=list)

    def per_orbit(self, epsilon: float) -> list:
        return [d for d in self.diagnostics if d.epsilon == epsilon]


class _OrbitBank:
    """Seeds periodic orbits at a new epsilon from the closest solved one."""

    def __init__(self, model, tori, lam):
        self.model = model
        self.lam = lam
        self.tori = sorted(tori or [], key=lambda K: K.epsilon)
        self.cache = {}

    def _torus_near(self, eps):
        if not self.tori:
            return None
        keys = [K.epsilon for K in self.tori]
        i = bisect.bisect_right(keys, eps + 1e-12) - 1
        if i < 0 or eps - keys[i] > 0.02:
            return None
        return self.tori[i]

    def orbit(self, p, q, eps, x0, max_jump: float = 2e-3):
        m = self.model.with_params(epsilon=float(eps))
        dissipative = self.lam != 1.0
        key = (p, q, round(x0, 12))
        known = self.cache.setdefault(key, {})
        if eps in known:
            return known[eps]
        candidates = []
        K = self._torus_near(eps)
        if K is not None:
            candidates.append((K.epsilon, "torus", K))
        if known:
            e_near = min(known, key=lambda e: abs(e - eps))
            candidates.append((e_near, "orbit", known[e_near]))
        candidates.sort(key=lambda c: abs(c[0] - eps))
        last_exc = None
        for e_from, kind, src in candidates:
            if kind == "torus":
                pts, mu = torus_seed(src, p, q, x0)
                path = [eps]
            else:
                pts, mu = src.points, src.mu
                n = max(1, int(math.ceil(abs(eps - e_from) / max_jump)))
                path = list(np.linspace(e_from, eps, n + 1)[1:])
            try:
                orb = None
                for e in path:
                    mm = self.model.with_params(epsilon=float(e))
                    orb = find_periodic_orbit(mm, p, q, pts, x0=x0 if dissipative else None,
                                              mu=mu if dissipative else None)
                    pts, mu = orb.points, orb.mu
                if not dissipative and orb.residue < 0.0 and kind == "torus":
                    # landed on the minimising orbit; retry half a spacing away
                    pts2, _ = torus_seed(src, p, q, x0 + math.pi / q)
                    alt = find_periodic_orbit(m, p, q, pts2)
                    if alt.residue > orb.residue:
                        orb = alt
                known[eps] = orb
                return orb
            except (NewtonDiverged, SingularClosureJacobian, ValueError) as exc:
                last_exc = exc
        raise last_exc or NewtonDiverged(f"no seed available for {p}/{q} at eps={eps}")


def _center_defect(bank: _OrbitBank, p, q, eps, n_samples):
    """Largest multiplier defect among orbits at the midpoint of the tongue.

    The family is sampled over one spacing of the fixed angle; crossings of
    the midpoint drift are then located by root finding along the sweep.
    """
    m = bank.model.with_params(epsilon=float(eps))
    xs = np.linspace(0.0, TWO_PI / q, n_samples, endpoint=False)
    fam = [bank.orbit(p, q, eps, float(x0)) for x0 in xs]
    mus = np.array([o.mu for o in fam])
    c = 0.5 * (mus.min() + mus.max())
    best, best_orb = -1.0, None
    h = xs[1] - xs[0]
    for i in range(n_samples):
        j = (i + 1) % n_samples
        a, b = mus[i] - c, mus[j] - c
        if a * b > 0.0 or a == b:
            continue
        seed = fam[i]
        cache = {}

        def g(x0):
            orb = find_periodic_orbit(m, p, q, seed.points, x0=x0, mu=seed.mu)
            cache[x0] = orb
            return orb.mu - c

        x_lo = xs[i]
        x_hi = x_lo + h
        if a == 0.0:
            orb = fam[i]
        elif b == 0.0:
            orb = fam[j]
        else:
            try:
                root = brentq(g, x_lo, x_hi, xtol=1e-6 * h, rtol=1e-12)
                orb = cache.get(root) or find_periodic_orbit(m, p, q, seed.points, x0=root,
                                                             mu=seed.mu)
            except (NewtonDiverged, SingularClosureJacobian, ValueError):
                orb = fam[i] if abs(a) < abs(b) else fam[j]
        d = orb.defect(bank.lam)
        if d > best:
            best, best_orb = d, orb
    if best_orb is None:
        # tongue narrower than rounding: every member sits at the midpoint
        k = int(np.argmin(np.abs(mus - c)))
        best_orb = fam[k]
        best = best_orb.defect(bank.lam)
    return best, best_orb


def _indicator(bank: _OrbitBank, p, q, eps, n_samples):
    if bank.lam == 1.0:
        orb = bank.orbit(p, q, eps, math.pi)
        return orb.residue, orb.residue, orb
    d, orb = _center_defect(bank, p, q, eps, n_samples)
    return d, orb.residue, orb


def greene_estimate(model: MapModel, omega, epsilon_grid, lam: float | None = None,
                    q_max: int = 233, q_min: int = 5, threshold: float | None = None,
                    persistence: int = 3, tol: float = 1e-3, n_samples: int = 8,
                    tori=None) -> GreeneEstimate:
    """Bracket the breakdown of the circle of frequency ``omega`` from periodic orbits.

    Conservative maps use the residues of the elliptic orbits of the
    convergents; the circle is declared broken at ``eps`` when the last
    ``persistence`` residues grow and exceed ``threshold`` (default 0.2).
    Dissipative maps use the relative defect of the multipliers from
    ``(1, lam^q)`` of the orbits at the middle of each tongue (default
    threshold 1.0); this indicator is heuristic.  ``tori`` is an
    optional list of converged circles used to seed orbits.
    """
    if lam is not None:
        model = model.with_params(lam=float(lam))
    lam = model.conformal_factor
    conservative = lam == 1.0
    if threshold is None:
        threshold = 0.2 if conservative else 1.0
    apps = [a for a in approximants(omega, 40) if q_min <= a.q <= q_max]
    bank = _OrbitBank(model, tori, lam)
    diags = []

    def broken(eps):
        vals = []
        for a in apps:
            v, r, orb = _indicator(bank, a.p, a.q, eps, n_samples)
            vals.append(v)
            diags.append(OrbitDiagnostic(eps, a.p, a.q, v, r, orb))
        tail = vals[-persistence:]
        if conservative:
            grows = all(b > a for a, b in zip(tail, tail[1:]))
            return grows and min(tail) > threshold
        return min(tail) > threshold

    grid = sorted(float(e) for e in epsilon_grid)
    lo = None
    hi = None
    for e in grid:
        if broken(e):
            hi = e
            break
        lo = e
    if hi is None:
        return GreeneEstimate(math.nan, (grid[-1], math.inf), "not_bracketed", diags)
    if lo is None:
        raise UnresolvedCriterion(f"criterion already met at the first grid point {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if broken(mid):
            hi = mid
        else:
            lo = mid
    method = "residue" if conservative else "multiplier_defect"
    return GreeneEstimate(0.5 * (lo + hi), (lo, hi), method, diags)
