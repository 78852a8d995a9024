import math
from dataclasses import replace

import numpy as np
import pytest

from cskam import fourier as fo
from cskam.models import StandardMap
from cskam.newton import (SolverOptions, TorusEmbedding, assemble_frame, fine_grid_error,
                          invariance_error, newton_step, solve, sup_error, uniqueness_check)

from conftest import torus_at
from oracles import affine_invariance_error

LAMS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def c1_error(K):
    E = invariance_error(K)
    return max(sup_error(E), *(np.abs(fo.derivative(e).samples).max() for e in E))


def test_offset_drift_gives_constant_error(golden):
    K = TorusEmbedding.unperturbed(StandardMap(lam=0.9), golden, 32)
    K = replace(K, mu=K.mu + 1e-3)
    ey, ex = invariance_error(K)
    oy, ox = affine_invariance_error(0.9, golden.omega, 1e-3)
    assert np.abs(ey.samples - oy).max() < 1e-15 and np.abs(ex.samples - ox).max() < 1e-14


def test_single_step_is_exact_for_affine_map(golden):
    K0 = TorusEmbedding.unperturbed(StandardMap(lam=0.9), golden, 32)
    K = replace(K0, mu=K0.mu + 1e-3)
    frame = assemble_frame(K)
    K1, sigma, diag = newton_step(K, frame)
    assert sigma == pytest.approx(-1e-3, abs=1e-12)
    assert diag.nondegeneracy_det == pytest.approx(1.0, abs=1e-12)
    a1, a2 = frame.A_tilde
    assert np.abs(a1.samples - 1.0).max() < 1e-12 and np.abs(a2.samples + 1.0).max() < 1e-12
    assert K1.mu == pytest.approx(K0.mu, abs=1e-15)


@pytest.mark.parametrize("lam", [0.9, 1.0])
def test_frame_closed_form(lam, golden):
    fr = assemble_frame(TorusEmbedding.unperturbed(StandardMap(lam=lam), golden, 32))
    assert np.abs(fr.S.samples + lam).max() < 1e-12
    assert np.abs(np.asarray(fr.gamma)).max() < 1e-12
    assert np.abs(np.asarray(fr.N) - 1.0).max() < 1e-12
    assert fr.reducibility_defect < 1e-12


def test_frame_defect_scales_with_error(trace_09):
    K = torus_at(trace_09, 0.5)
    fr = assemble_frame(K)
    # the DK column of the defect is exactly d(theta) E, so the scale is the C^1 error
    assert fr.reducibility_defect <= 10 * c1_error(K)


@pytest.mark.parametrize("lam", LAMS)
def test_exact_drift_at_zero_eps(lam, golden):
    K, rep = solve(StandardMap(lam=lam), golden)
    assert rep.converged
    assert K.mu == pytest.approx((1 - lam) * golden.omega, abs=1e-12)
    assert sup_error(invariance_error(K)) <= 1e-14


def test_drift_benchmark(golden):
    m = StandardMap(lam=0.9, epsilon=0.1)
    K0 = TorusEmbedding.unperturbed(m, golden, 64)
    K, rep = solve(m, golden, K0, options=SolverOptions(tol=1e-12))
    assert rep.converged and len(rep.iterations) <= 5
    assert sup_error(invariance_error(K)) < 1e-12
    assert K.mu_normalized == pytest.approx(0.0617984, abs=1e-6)


def test_converged_torus_independent_fine_check(trace_09):
    K = torus_at(trace_09, 0.5)
    assert sup_error(invariance_error(K)) < 1e-11
    th = np.linspace(0, 2 * np.pi, 4 * K.n_modes, endpoint=False)
    y, x = K.evaluate(th)
    yn, xn = K.bound_model.apply(y, x)
    ys, xs = K.evaluate(th + K.omega.omega)
    assert max(np.abs(yn - ys).max(), np.abs(xn - xs).max()) < 1e-10
    assert fine_grid_error(K) < 10 * 1e-11


def test_conservative_quadratic(golden):
    m = StandardMap(lam=1.0, epsilon=0.5)
    K, rep = solve(m, golden, n_modes=128, cold_threshold=1.0)
    assert rep.converged
    assert rep.convergence_order() >= 1.8


def test_near_breakdown_needs_more_modes(trace_09):
    K_hi = trace_09.tori[-1]
    K_mid = torus_at(trace_09, 0.5)
    assert K_hi.epsilon > 0.965
    assert K_hi.n_modes > K_mid.n_modes
    assert K_hi.sobolev_norms((2,))[2] > 10 * K_mid.sobolev_norms((2,))[2]


def test_beyond_breakdown_fails(golden):
    K, rep = solve(StandardMap(lam=0.9, epsilon=1.2), golden, cold_threshold=2.0)
    assert not rep.converged and rep.reason


def test_uniqueness_two_seeds(trace_09):
    K = torus_at(trace_09, 0.4)
    m = K.model
    seed_a = torus_at(trace_09, 0.3).with_model(m)
    seed_b = torus_at(trace_09, 0.5).with_model(m)
    Ka, ra = solve(m, K.omega, seed_a)
    Kb, rb = solve(m, K.omega, seed_b)
    assert ra.converged and rb.converged
    res = uniqueness_check(Ka, Kb)
    assert res.match and abs(Ka.mu - Kb.mu) < 1e-10


def test_uniqueness_distinguishes_eps(trace_09):
    res = uniqueness_check(torus_at(trace_09, 0.3), torus_at(trace_09, 0.5))
    assert not res.match and res.distance > 1e-3


@pytest.mark.parametrize("psi", [0.3, -1.1, 2.5])
def test_gauge_invariance(psi, trace_09):
    K = torus_at(trace_09, 0.5)
    seed = torus_at(trace_09, 0.45).with_model(K.model).rotate(psi)
    Kr, rep = solve(K.model, K.omega, seed)
    assert rep.converged
    # the solver returns the zero-mean gauge, so the rotation is undone
    res = uniqueness_check(K, Kr)
    assert res.match and abs(res.psi) < 1e-10
    assert Kr.mu == pytest.approx(K.mu, abs=1e-10)
    back = uniqueness_check(Kr, K.rotate(psi))
    assert back.match
    assert math.remainder(back.psi - psi, 2 * math.pi) == pytest.approx(0.0, abs=1e-10)


def test_conservative_limit(golden):
    eps = 0.05
    Kc, _ = solve(StandardMap(lam=1.0, epsilon=eps), golden)
    gaps, mus = [], []
    for lam in (0.9, 0.99, 0.999):
        K, rep = solve(StandardMap(lam=lam, epsilon=eps), golden)
        assert rep.converged
        d = max(np.abs(K.ky.samples - Kc.ky.samples).max(),
                np.abs(K.kx_periodic.samples - Kc.kx_periodic.samples).max())
        gaps.append(d / (eps * (1 - lam)))
        mus.append(K.mu)
    assert max(gaps) < 10 * min(gaps)
    assert mus[0] > mus[1] > mus[2] > 0 and mus[2] < 1e-2


def test_solver_options_resource_cap(golden):
    m = StandardMap(lam=0.9, epsilon=0.9)
    K, rep = solve(m, golden, n_modes=64, cold_threshold=1.0,
                   options=SolverOptions(max_modes=64))
    assert not rep.converged
