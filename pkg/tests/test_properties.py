import math

import numpy as np
from hypothesis import given, strategies as st

from cskam import fourier as fo
from cskam.config import config_from_dict, dump_config, parse_config
from cskam.dynamics import bucket_values
from cskam.fourier import PeriodicGridFunction as P
from cskam.models import (NonTwistMap, StandardMap, TwoFactorMap, build_model,
                          conformality_defect, random_states, verify_conformality)

from oracles import eval_series, random_band_limited

OMEGA = fo.DiophantineFrequency.preset("golden").omega

seeds = st.integers(0, 2 ** 32 - 1)
sizes = st.sampled_from([2 ** j for j in range(4, 13)])
angles = st.floats(-10.0, 10.0, allow_nan=False)


def band_limited(seed, n, zero_mean=True):
    rng = np.random.default_rng(seed)
    c = random_band_limited(rng, n // 4, zero_mean=zero_mean)
    return P(eval_series(c, fo.grid(n)))


@given(seeds, sizes)
def test_round_trip_any_size(seed, n):
    v = np.random.default_rng(seed).normal(size=n)
    back = fo.to_samples(fo.to_coefficients(P(v)))
    assert np.abs(back.samples - v).max() <= 1e-12 * max(1.0, np.abs(v).max())


@given(seeds, angles, angles)
def test_shift_composes(seed, a, b):
    f = band_limited(seed, 64, zero_mean=False)
    lhs = fo.shift(fo.shift(f, a), b)
    rhs = fo.shift(f, a + b)
    assert np.abs(lhs.samples - rhs.samples).max() < 1e-11


@given(seeds, sizes)
def test_sobolev_order_zero_is_l2(seed, n):
    v = np.random.default_rng(seed).normal(size=n)
    assert math.isclose(fo.sobolev_norm(P(v), 0), math.sqrt(np.mean(v ** 2)), rel_tol=1e-12)


@given(seeds, st.sampled_from([16, 32, 64]))
def test_small_divisor_residual_on_fine_grid(seed, n):
    q = band_limited(seed, n)
    w = fo.solve_small_divisor(q, OMEGA)
    wf, qf = fo.resample(w, 4 * n), fo.resample(q, 4 * n)
    r = wf - fo.shift(wf, OMEGA) - qf
    assert np.abs(r.samples).max() < 1e-10
    assert abs(w.mean) < 1e-14


@given(seeds, st.floats(0.05, 0.95), st.booleans())
def test_contraction_residuals_on_fine_grid(seed, lam, reversed_form):
    n = 32
    q = band_limited(seed, n, zero_mean=False)
    qf = fo.resample(q, 4 * n)
    if reversed_form:
        u = fo.resample(fo.solve_contraction_reversed(q, OMEGA, lam), 4 * n)
        r = u - lam * fo.shift(u, OMEGA) - qf
    else:
        u = fo.resample(fo.solve_contraction(q, OMEGA, lam), 4 * n)
        r = lam * u - fo.shift(u, OMEGA) - qf
    assert np.abs(r.samples).max() < 1e-10


two_d_models = st.sampled_from([
    StandardMap(lam=1.0, epsilon=0.7),
    StandardMap(lam=0.9, mu=0.3, epsilon=0.4),
    build_model("two_harmonic", lam=0.6, eps1=0.4, eps2=0.2),
    NonTwistMap(lam=0.8, a=0.3, mu=0.1, epsilon=0.2),
])


@given(two_d_models, st.floats(-5, 5), st.floats(0, 2 * math.pi), st.integers(-3, 3))
def test_lift_is_periodic(model, y, x, k):
    y1, x1 = model.apply(y, x)
    y2, x2 = model.apply(y, x + 2 * math.pi * k)
    assert abs(y2 - y1) < 1e-12 and abs(x2 - x1 - 2 * math.pi * k) < 1e-11


@given(two_d_models, seeds)
def test_conformal_on_random_states(model, seed):
    states = random_states(50, np.random.default_rng(seed))
    assert verify_conformality(model, states).passed


@given(seeds)
def test_spin_orbit_conformal(seed):
    m = build_model("spin_orbit", e=0.0549, epsilon=1e-3, kd=1e-3, substeps=64)
    states = random_states(5, np.random.default_rng(seed), y_scale=1.5)
    lam = m.conformal_factor
    assert conformality_defect(m, states, lam) < 1e-10


@given(seeds, st.floats(0.1, 0.95), st.floats(0.1, 0.95), st.floats(0.0, 0.5))
def test_four_dimensional_needs_equal_factors(seed, l1, l2, eps):
    states = random_states(20, np.random.default_rng(seed), dim=4)
    same = TwoFactorMap(lam1=l1, lam2=l1, epsilon=eps)
    assert verify_conformality(same, states).passed
    if abs(l1 - l2) > 1e-3:
        diff = TwoFactorMap(lam1=l1, lam2=l2, epsilon=eps)
        assert not verify_conformality(diff, states).passed


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=40), seeds)
def test_buckets_ignore_order(values, seed):
    v = np.array(values)
    perm = np.random.default_rng(seed).permutation(len(v))
    labels, buckets = bucket_values(v)
    labels_p, buckets_p = bucket_values(v[perm])
    assert buckets == buckets_p
    assert np.array_equal(labels[perm], labels_p)
    assert all(b - a > 1e-4 for a, b in zip(buckets, buckets[1:]))


@given(st.floats(0.0, 1.0), st.floats(-3, 3, allow_subnormal=False),
       st.sampled_from(["golden", "silver", 1.234]), st.integers(0, 10 ** 6))
def test_config_round_trip(lam, mu, omega, seed):
    cfg = config_from_dict({"omega": omega, "seed": seed,
                            "model": {"family": "dissipative_sm", "lam": lam, "mu": mu}})
    assert parse_config(dump_config(cfg)).to_dict() == cfg.to_dict()
