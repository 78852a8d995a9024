import math

import numpy as np
import pytest

from cskam.greene import (approximants, find_periodic_orbit, greene_estimate, trace_tongue,
                          unperturbed_seed)
from cskam.models import StandardMap
from cskam.newton import solve

from oracles import convergents, fixed_point_residue

FIB = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233]


def test_golden_approximants_are_fibonacci(golden):
    apps = approximants(golden, 10)
    for a, (p, q) in zip(apps, zip(FIB[1:], FIB[2:])):
        assert (a.p, a.q) == (p, q)
        assert math.gcd(a.p, a.q) == 1


def test_approximants_match_continued_fraction(rng):
    for _ in range(5):
        x = rng.uniform(0.05, 0.95)
        mine = [(a.p, a.q) for a in approximants(2 * math.pi * x, 6)]
        ref = [pq for pq in convergents(x, 12) if pq[1] >= 2][:len(mine)]
        assert mine == ref
        for a in approximants(2 * math.pi * x, 6):
            assert abs(x - a.p / a.q) < 1 / a.q ** 2


def test_rational_frequency_is_exact():
    apps = approximants(2 * math.pi / 3, 5)
    assert [(a.p, a.q, a.exact) for a in apps] == [(1, 3, True)]


def test_fixed_point_residue_hand_jacobian():
    m = StandardMap(lam=1.0, epsilon=0.4)
    seed, _ = unperturbed_seed(m, 0, 1, math.pi)
    orb = find_periodic_orbit(m, 0, 1, seed)
    assert orb.residue == pytest.approx(fixed_point_residue(0.4), abs=1e-14)
    assert orb.residue == pytest.approx(0.1, abs=1e-14)


@pytest.mark.parametrize("lam, p, q", [(1.0, 2, 5), (0.9, 1, 2), (0.9, 3, 8), (0.5, 5, 13)])
def test_orbit_closure_and_determinant(lam, p, q):
    m = StandardMap(lam=lam, epsilon=0.3)
    x0 = 0.0 if lam == 1.0 else 0.2
    seed, mu = unperturbed_seed(m, p, q, x0)
    kw = {} if lam == 1.0 else {"x0": x0, "mu": mu}
    orb = find_periodic_orbit(m, p, q, seed, **kw)
    assert orb.closure_defect < 1e-10
    assert orb.log_det == pytest.approx(q * math.log(lam), abs=1e-8)
    assert np.linalg.det(orb.monodromy) == pytest.approx(lam ** q, abs=1e-8)


@pytest.mark.parametrize("p, q", [(1, 3), (2, 5)])
def test_tongue_degenerate_at_zero_eps(p, q):
    t = trace_tongue(StandardMap(lam=0.9), p, q, epsilon=0.0)
    point = 0.1 * 2 * math.pi * p / q
    assert t.mu_interval[0] == pytest.approx(point, abs=1e-12)
    assert t.mu_interval[1] == pytest.approx(point, abs=1e-12)


@pytest.mark.parametrize("p, q", [(0, 1), (1, 2), (1, 3)])
def test_tongue_widths_grow_with_eps(p, q):
    tongues = [trace_tongue(StandardMap(lam=0.9), p, q, epsilon=e) for e in (0.05, 0.1, 0.2)]
    assert all(t.mu_interval[0] <= t.mu_interval[1] for t in tongues)
    widths = [t.width for t in tongues]
    assert widths[0] > 0 and widths[0] < widths[1] < widths[2]


def test_golden_drift_outside_tongues(golden):
    eps = 0.1
    K, rep = solve(StandardMap(lam=0.9, epsilon=eps), golden)
    assert rep.converged
    for a in approximants(golden, 5):
        t = trace_tongue(StandardMap(lam=0.9), a.p, a.q, epsilon=eps)
        assert not t.contains(K.mu)


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_conservative_residues_decay_deep_inside(eps, trace_cons):
    est = greene_estimate(StandardMap(lam=1.0), "golden", [eps], q_max=89,
                          tori=trace_cons.tori)
    assert est.method == "not_bracketed"
    vals = [abs(d.value) for d in est.diagnostics]
    assert max(vals) < 1e-2
    # geometric decay down to the round-off floor of the q-step monodromy
    above = [v for v in vals if v > 1e-9]
    assert len(above) >= 2
    assert all(b < a for a, b in zip(above, above[1:]))


def test_dissipative_center_eigenvalues_converge(trace_09):
    est = greene_estimate(StandardMap(lam=0.9), "golden", [0.5], q_max=89,
                          tori=trace_09.tori)
    assert est.method == "not_bracketed"
    vals = [d.value for d in est.diagnostics]
    assert vals[-1] < vals[0] and vals[-1] < 1e-2


def test_conservative_greene_matches_sobolev(trace_cons):
    grid = np.arange(0.90, 1.0001, 0.02)
    est = greene_estimate(StandardMap(lam=1.0), "golden", grid, tori=trace_cons.tori)
    assert est.method == "residue"
    assert est.epsilon_crit == pytest.approx(0.9716, abs=0.01)
    lo, hi = est.bracket
    assert lo < est.epsilon_crit <= hi


@pytest.mark.slow
def test_dissipative_greene_matches_sobolev(trace_09):
    grid = np.arange(0.90, 1.0001, 0.02)
    est = greene_estimate(StandardMap(lam=0.9), "golden", grid, tori=trace_09.tori)
    assert est.method == "multiplier_defect"
    assert est.epsilon_crit == pytest.approx(0.9721, abs=0.01)
