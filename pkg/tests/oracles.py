"""Reference computations that share no code with the package."""
import math
from fractions import Fraction

import numpy as np


def direct_fourier(samples, k):
    """Coefficient c_k by explicit summation over the grid."""
    n = len(samples)
    theta = 2 * np.pi * np.arange(n) / n
    return complex(np.sum(samples * np.exp(-1j * k * theta)) / n)


def eval_series(coeffs, theta):
    """Evaluate sum_k c_k e^{ik theta} for a dict {k: c_k} with k >= 0 (real function)."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k, c in coeffs.items():
        term = c * np.exp(1j * k * theta)
        out = out + (term.real if k == 0 else 2 * term.real)
    return out


def random_band_limited(rng, kmax, zero_mean=True):
    coeffs = {k: complex(rng.normal(), rng.normal()) * 0.5 ** (k / 4) for k in range(1, kmax + 1)}
    if not zero_mean:
        coeffs[0] = complex(rng.normal(), 0.0)
    return coeffs


def fd_jacobian(f, y, x, h=1e-6):
    """Central differences of (y, x) -> f(y, x)."""
    cols = []
    for dy, dx in ((h, 0.0), (0.0, h)):
        p = np.array(f(y + dy, x + dx))
        m = np.array(f(y - dy, x - dx))
        cols.append((p - m) / (2 * h))
    return np.array(cols).T


def kepler_bisection(e, t, tol=1e-13):
    """Eccentric anomaly by bisection on E - e sin E = t (t in [0, 2 pi))."""
    lo, hi = 0.0, 2 * math.pi
    m = t % (2 * math.pi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - e * math.sin(mid) < m:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def torque_averages_by_quadrature(e, n=20000):
    """Time averages of 1/r^6 and fdot/r^6 over one Kepler period (a = 1)."""
    t = 2 * np.pi * (np.arange(n) + 0.5) / n
    E = np.array([kepler_bisection(e, ti, 1e-14) for ti in t])
    r = 1 - e * np.cos(E)
    fdot = math.sqrt(1 - e * e) / r ** 2
    return float(np.mean(r ** -6)), float(np.mean(fdot / r ** 6))


def convergents(x, count):
    """Continued-fraction convergents p/q of x in [0, 1) via exact Fractions."""
    fr = Fraction(x).limit_denominator(10 ** 15)
    a = []
    while fr.denominator != 1 and len(a) < count + 2:
        ip = fr.numerator // fr.denominator
        a.append(ip)
        fr = 1 / (fr - ip)
    a.append(fr.numerator // fr.denominator)
    out = []
    p0, q0, p1, q1 = 1, 0, a[0], 1
    out.append((p1, q1))
    for ai in a[1:]:
        p0, q0, p1, q1 = p1, q1, ai * p1 + p0, ai * q1 + q0
        out.append((p1, q1))
    return out[:count]


def standard_map(y, x, lam, mu, eps):
    yn = lam * y + mu + eps * math.sin(x)
    return yn, x + yn


def fixed_point_residue(eps):
    """Residue of the 0/1 orbit at x = pi of the conservative map, by hand Jacobian."""
    c = math.cos(math.pi)
    D = np.array([[1.0, eps * c], [1.0, 1.0 + eps * c]])
    return (2.0 - np.trace(D)) / 4.0


def affine_invariance_error(lam, omega, dmu):
    """Error of the eps = 0 torus y = omega, x = theta when mu is off by dmu."""
    y = omega
    yn = lam * y + (1 - lam) * omega + dmu
    return yn - y, (y + yn) - (omega + y)
