"""Stable bundle, bundle angle and Lyapunov multipliers of invariant attractors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fourier as fo
from .errors import ConservativeCase
from .fourier import PeriodicGridFunction
from .newton import NewtonFrame, TorusEmbedding, assemble_frame, invariance_error, sup_error


@dataclass
class BundleData:
    B: PeriodicGridFunction
    alpha: PeriodicGridFunction
    alpha_direct: np.ndarray
    stable: tuple
    min_angle: float
    argmin_theta: float
    reducibility_residual: float
    invariance_residual: float
    invariance_residual_c1: float
    collinearity_defect: float
    contraction_defect: float
    multipliers: tuple | None = None

    @property
    def angle_agreement(self) -> float:
        return float(np.abs(self.alpha.samples - self.alpha_direct).max())


def stable_bundle(K: TorusEmbedding, frame: NewtonFrame | None = None) -> BundleData:
    """Solve ``B(theta) - lam B(theta + omega) = -S(theta)`` and assemble ``E^s``."""
    lam = K.lam
    if lam == 1.0:
        raise ConservativeCase("a conservative circle has no stable bundle")
    if frame is None:
        frame = assemble_frame(K)
    om = K.omega.omega
    B = fo.solve_contraction_reversed(-frame.S, om, lam)
    b = B.samples
    dky, dkx, N = frame.dky, frame.dkx, frame.N
    es_y = dky * b - dkx * N
    es_x = dkx * b + dky * N
    g = dky ** 2 + dkx ** 2

    alpha = PeriodicGridFunction(np.arctan(1.0 / (b * g)))
    dot = np.abs(dky * es_y + dkx * es_x)
    alpha_direct = np.arccos(np.clip(dot / (np.sqrt(g) * np.hypot(es_y, es_x)), 0.0, 1.0))

    # reducibility [DK | E^s] against diag(1, lam)
    jac = frame.jac
    shift = lambda a: fo.shift(PeriodicGridFunction(a), om).samples
    es_y_s, es_x_s = shift(es_y), shift(es_x)
    dfes_y = jac[:, 0, 0] * es_y + jac[:, 0, 1] * es_x
    dfes_x = jac[:, 1, 0] * es_y + jac[:, 1, 1] * es_x
    dfdk_y = jac[:, 0, 0] * dky + jac[:, 0, 1] * dkx
    dfdk_x = jac[:, 1, 0] * dky + jac[:, 1, 1] * dkx
    # each column relative to its own size; the DK column equals d(theta) E exactly
    r_dk = max(np.abs(dfdk_y - frame.dky_shift).max(), np.abs(dfdk_x - frame.dkx_shift).max())
    r_es = max(np.abs(dfes_y - lam * es_y_s).max(), np.abs(dfes_x - lam * es_x_s).max())
    resid = max(r_dk / max(np.sqrt(g).max(), 1.0), r_es / max(np.hypot(es_y, es_x).max(), 1.0))
    E = invariance_error(K)
    inv = sup_error(E)
    inv_c1 = max(inv, float(np.abs(fo.derivative(E[0]).samples).max()),
                 float(np.abs(fo.derivative(E[1]).samples).max()))

    # Df E^s(theta) should be parallel to E^s(theta + omega) with ratio lam
    norm_s = np.hypot(es_y_s, es_x_s)
    cross = (dfes_y * es_x_s - dfes_x * es_y_s) / (np.hypot(dfes_y, dfes_x) * norm_s)
    ratio = (dfes_y * es_y_s + dfes_x * es_x_s) / norm_s ** 2

    theta_min, a_min = _refine_min(alpha.samples)
    return BundleData(
        B=B, alpha=alpha, alpha_direct=alpha_direct, stable=(es_y, es_x),
        min_angle=a_min, argmin_theta=theta_min, reducibility_residual=float(resid),
        invariance_residual=inv, invariance_residual_c1=inv_c1,
        collinearity_defect=float(np.abs(cross).max()),
        contraction_defect=float(np.abs(ratio - lam).max()))


def _refine_min(values: np.ndarray) -> tuple[float, float]:
    """Parabolic interpolation around the grid minimum of a periodic sample set."""
    n = values.shape[0]
    i = int(np.argmin(values))
    a, b, c = values[(i - 1) % n], values[i], values[(i + 1) % n]
    h = 2.0 * math.pi / n
    denom = a - 2.0 * b + c
    if denom <= 0.0:
        return i * h, float(b)
    off = 0.5 * (a - c) / denom
    return float(((i + off) * h) % (2.0 * math.pi)), float(b - 0.25 * (a - c) * off)


def bundle_angle(data: BundleData) -> dict:
    return {"alpha": data.alpha, "alpha_direct": data.alpha_direct,
            "min_angle": data.min_angle, "argmin_theta": data.argmin_theta,
            "agreement": data.angle_agreement}


def _birkhoff_weights(n: int) -> np.ndarray:
    t = (np.arange(n) + 0.5) / n
    w = np.exp(-1.0 / (t * (1.0 - t)))
    return w / w.sum()


def lyapunov_multipliers(model, K: TorusEmbedding, n_iter: int = 10_000,
                         theta0: float = 0.0, transient: int = 100) -> tuple[float, float]:
    """Multipliers of the linearised dynamics along the orbit of ``K(theta0)``.

    The map is iterated directly and the products of its Jacobians are
    re-orthonormalised by QR at every step.  The frame starts from the
    tangent direction of the circle; the logarithmic stretch factors are
    combined with smooth Birkhoff weights.
    """
    m = K.bound_model if model is None else model
    y, x = (float(v[0]) for v in K.evaluate(np.array([theta0])))
    ys = np.empty(n_iter + transient)
    xs = np.empty(n_iter + transient)
    for j in range(n_iter + transient):
        ys[j], xs[j] = y, x
        y, x = m.apply(y, x)
        y, x = float(y), float(x)
    D = m.jacobian(ys, xs)
    dky = fo.derivative(K.ky)(theta0)
    dkx = 1.0 + fo.derivative(K.kx_periodic)(theta0)
    q = np.array([float(dky), float(dkx)])
    q /= np.linalg.norm(q)
    logs = np.empty((n_iter, 2))
    for j in range(n_iter + transient):
        v = D[j] @ q
        r11 = math.hypot(v[0], v[1])
        q = v / r11
        det = D[j, 0, 0] * D[j, 1, 1] - D[j, 0, 1] * D[j, 1, 0]
        if j >= transient:
            logs[j - transient] = (math.log(r11), math.log(abs(det)) - math.log(r11))
    w = _birkhoff_weights(n_iter)
    l1, l2 = np.exp(w @ logs)
    return tuple(sorted((float(l1), float(l2)), reverse=True))
