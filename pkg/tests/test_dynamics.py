import math

import numpy as np
import pytest

from cskam.dynamics import (birkhoff_weights, bucket_values, classification_agreement,
                            classify_basins, rotation_number, rotation_numbers,
                            rotation_vs_parameter)
from cskam.errors import Unbounded
from cskam.models import NonTwistMap, StandardMap

from conftest import torus_at

GOLDEN = math.pi * (math.sqrt(5) - 1)


def test_weights_normalised():
    w = birkhoff_weights(1000)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w[0] < 1e-100 and w[500] == w.max()


def test_integrable_rotation():
    s = rotation_number(StandardMap(lam=1.0), (0.3, 1.0), transient=0, kept=1000)
    assert s.rotation_number == pytest.approx(0.3, abs=1e-14)
    assert s.lift_displacement == pytest.approx(300.0, abs=1e-9)
    assert s.plain_average == pytest.approx(s.lift_displacement / s.kept)


def test_birkhoff_beats_plain_average():
    # eps = 0 dissipative map, started off the attracting circle y = omega
    lam = 0.9
    m = StandardMap(lam=lam, mu=(1 - lam) * GOLDEN)
    s = rotation_number(m, (GOLDEN + 0.5, 0.0), transient=0, kept=2000)
    err_w = abs(s.rotation_number - GOLDEN)
    err_p = abs(s.plain_average - GOLDEN)
    assert err_w * 100 <= err_p


def test_torus_orbit_matches_frequency(trace_09):
    K = torus_at(trace_09, 0.1)
    y, x = K.evaluate(np.array([0.0]))
    s = rotation_number(K.bound_model, (y[0], x[0]), transient=0, kept=10_000)
    assert s.rotation_number == pytest.approx(K.omega.omega, abs=1e-6)
    assert s.classification == "quasi_periodic"


def test_rounded_figure_drift():
    # the seven-digit drift moves rho by about |d mu| / (1 - lam)
    m = StandardMap(lam=0.9, mu=2 * math.pi * 0.0617984, epsilon=0.1)
    s = rotation_number(m, (0.5, 1.0), transient=3000, kept=10_000)
    assert s.rotation_number == pytest.approx(GOLDEN, abs=1e-5)


def test_point_attractor():
    s = rotation_number(StandardMap(lam=0.9, mu=0.0, epsilon=0.1), (1.0, 2.0), transient=2000)
    assert s.rotation_number == pytest.approx(0.0, abs=1e-12)
    assert s.periodic and s.period == (0, 1)


def test_escape_raises():
    with pytest.raises(Unbounded):
        rotation_number(StandardMap(lam=1.0), (2000.0, 0.0), transient=0, kept=10)
    rho = rotation_numbers(StandardMap(lam=1.0), np.array([0.1, 5000.0]), np.zeros(2), 0, 10)
    assert np.isfinite(rho[0]) and np.isnan(rho[1])


def test_bucket_values():
    labels, buckets = bucket_values(np.array([0.0, 1.0, 1.00001, np.nan, 0.5]))
    assert buckets == pytest.approx([0.0, 0.5, 1.000005])
    assert labels.tolist() == [0, 2, 2, -1, 1]


@pytest.fixture(scope="module")
def basin_model():
    lam = 0.91
    return StandardMap(lam=lam, epsilon=0.9, mu=2 * math.pi * (1 - lam) * (math.sqrt(5) - 1) / 2)


def test_coexisting_attractors(basin_model):
    a = classify_basins(basin_model, n=40, transient=1000, kept=2000)
    assert a.n_buckets >= 2
    assert sum(a.counts()) + a.unresolved == 1600
    b = classify_basins(basin_model, n=40, transient=2000, kept=2000)
    assert abs(a.n_buckets - b.n_buckets) <= 1
    assert classification_agreement(a, b) >= 0.99


def test_basins_deterministic(basin_model):
    a = classify_basins(basin_model, n=16, transient=300, kept=500)
    b = classify_basins(basin_model, n=16, transient=300, kept=500)
    assert np.array_equal(a.rho, b.rho, equal_nan=True)
    r1 = classify_basins(basin_model, n=16, transient=300, kept=500, mode="random", seed=3)
    r2 = classify_basins(basin_model, n=16, transient=300, kept=500, mode="random", seed=3)
    assert np.array_equal(r1.rho, r2.rho, equal_nan=True)


def test_basins_need_contraction():
    with pytest.raises(ValueError):
        classify_basins(StandardMap(lam=1.0, epsilon=0.5), n=4)


def test_nontwist_closed_form():
    m = NonTwistMap(lam=0.9, mu=0.0, epsilon=0.0)
    a = np.linspace(-1, 1, 11)
    c = rotation_vs_parameter(m, a, transient=300, kept=1000)
    assert np.abs(c.rho - a ** 2).max() < 1e-9
    assert c.decreasing == [(-1.0, 0.0)]
    assert not c.monotone


def test_nontwist_scan_has_fold():
    m = NonTwistMap(lam=0.9, mu=0.1, epsilon=0.1)
    c = rotation_vs_parameter(m, np.linspace(-1, 1, 41), transient=1000, kept=2000)
    assert c.decreasing


def test_locked_plateau():
    m = StandardMap(lam=0.9, epsilon=0.2)
    c = rotation_vs_parameter(m, np.linspace(-0.4, 0.4, 41), y0=0.0, x0=0.0, parameter="mu",
                              transient=2000, kept=2000)
    assert len(c.plateaus) == 1
    lo, hi = c.plateaus[0]
    # locking needs the 0/1 fixed point (|mu| <= eps); from this start it coexists
    # with a rotating attractor, so the plateau is narrower than the tongue
    assert -0.2 <= lo < 0.0 < hi <= 0.2
    inside = rotation_vs_parameter(m, np.linspace(lo, hi, 7), parameter="mu",
                                   transient=2000, kept=2000)
    assert np.ptp(inside.rho) < 1e-9
