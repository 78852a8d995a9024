import math

import numpy as np
import pytest

from cskam.bundles import bundle_angle, lyapunov_multipliers, stable_bundle
from cskam.errors import ConservativeCase
from cskam.models import StandardMap
from cskam.newton import TorusEmbedding, solve

from conftest import torus_at


@pytest.fixture(scope="module")
def flat(golden):
    return stable_bundle(TorusEmbedding.unperturbed(StandardMap(lam=0.9), golden, 32))


def test_closed_form_at_zero_eps(flat):
    assert np.abs(flat.B.samples - 9.0).max() < 1e-12
    assert np.abs(flat.alpha.samples - math.atan(1 / 9)).max() < 1e-12
    assert np.abs(flat.alpha_direct - math.atan(1 / 9)).max() < 1e-12
    assert flat.min_angle == pytest.approx(0.110657, abs=1e-6)
    assert flat.reducibility_residual < 1e-12


def test_multipliers_at_zero_eps(golden):
    K = TorusEmbedding.unperturbed(StandardMap(lam=0.9), golden, 32)
    m1, m2 = lyapunov_multipliers(None, K, n_iter=2000)
    assert m1 == pytest.approx(1.0, abs=1e-12) and m2 == pytest.approx(0.9, abs=1e-12)


def test_conservative_has_no_stable_bundle(golden):
    with pytest.raises(ConservativeCase):
        stable_bundle(TorusEmbedding.unperturbed(StandardMap(lam=1.0), golden, 32))


def test_angle_shrinks_toward_breakdown(trace_09):
    a5 = stable_bundle(torus_at(trace_09, 0.5)).min_angle
    a9 = stable_bundle(torus_at(trace_09, 0.9)).min_angle
    assert a9 < a5


def test_angle_monotone_beyond_08(trace_09):
    angles = [stable_bundle(K).min_angle for K in trace_09.tori if K.epsilon >= 0.8]
    assert len(angles) >= 5
    assert all(b <= a * 1.01 for a, b in zip(angles, angles[1:]))


def test_bundle_invariants_along_continuation(trace_09):
    for K in trace_09.tori[::4] + [trace_09.tori[-1]]:
        bd = stable_bundle(K)
        assert bd.angle_agreement < 1e-8
        assert bd.reducibility_residual <= 100 * bd.invariance_residual_c1 + 1e-15
        # pointwise invariance of E^s is limited by the derivative of the torus error
        bound = max(1e-8, bd.invariance_residual_c1)
        assert bd.collinearity_defect <= bound
        assert bd.contraction_defect <= 2 * bound
        assert np.all(bd.alpha.samples > 0) and np.all(bd.alpha.samples <= math.pi / 2)


def test_argmin_refinement(trace_09):
    K = torus_at(trace_09, 0.9)
    bd = stable_bundle(K)
    info = bundle_angle(bd)
    # refined minimum lies at or below the grid minimum and next to its grid point
    assert info["min_angle"] <= bd.alpha.samples.min() + 1e-15
    h = 2 * math.pi / K.n_modes
    i = int(np.argmin(bd.alpha.samples))
    assert abs(math.remainder(info["argmin_theta"] - i * h, 2 * math.pi)) <= h
    # the interpolant is not lower anywhere on a fine grid near the minimum
    t = info["argmin_theta"] + np.linspace(-h, h, 201)
    assert bd.alpha(t).min() >= info["min_angle"] - 1e-6


def test_multipliers_dissipative(trace_09):
    K = torus_at(trace_09, 0.5)
    m1, m2 = lyapunov_multipliers(None, K)
    assert m1 == pytest.approx(1.0, abs=1e-6) and m2 == pytest.approx(0.9, abs=1e-6)


def test_multipliers_conservative(golden):
    K, rep = solve(StandardMap(lam=1.0, epsilon=0.5), golden, n_modes=128, cold_threshold=1.0)
    assert rep.converged
    m1, m2 = lyapunov_multipliers(None, K)
    assert m1 == pytest.approx(1.0, abs=1e-5) and m2 == pytest.approx(1.0, abs=1e-5)
