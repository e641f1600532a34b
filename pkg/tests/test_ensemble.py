import math

import numpy as np
import pytest

from nearcrit import (
    Calibration,
    LatticeSpec,
    Window,
    build_geometry,
    calibrate_r,
    config_at,
    edge_lex_label,
    lambda_to_p,
    p_to_lambda,
    sample_labels,
)
from nearcrit.ensemble import binomial_interval, labels_from_array
from nearcrit.errors import InfiniteLambdaError, UsageError
from nearcrit.rng import derive_seed, uniform_block


@pytest.fixture(scope="module")
def tri():
    return build_geometry(LatticeSpec("triangular-site", 8, 1.0, "torus"))


def test_labels_are_reproducible_and_distinct(tri):
    a = sample_labels(tri, 7)
    b = sample_labels(tri, 7)
    assert np.array_equal(a.values, b.values)
    assert np.unique(a.values).size == a.values.size
    assert np.all((a.values > 0) & (a.values < 1))
    assert not np.array_equal(a.values, sample_labels(tri, 8).values)
    with pytest.raises(ValueError):
        a.values[0] = 0.5


def test_uniform_block_is_counter_based():
    whole = uniform_block(3, 100)
    tail = uniform_block(3, 40, start=60)
    assert np.array_equal(whole[60:], tail)
    assert 0.4 < whole.mean() < 0.6
    assert derive_seed(1, 0) != derive_seed(1, 1) != derive_seed(2, 1)


def test_threshold_view(tri):
    lab = sample_labels(tri, 1)
    view = config_at(lab, 0.5)
    assert np.array_equal(view.site_open, lab.values <= 0.5)
    hi, lo = lab.edge_hi_lo()
    assert np.array_equal(view.edge_open, hi <= 0.5)
    assert np.all(hi >= lo)
    # monotone coupling: more open carriers at larger p
    assert np.all(config_at(lab, 0.4).open <= config_at(lab, 0.6).open)


def test_edge_lex_label(tri):
    lab = labels_from_array(tri, np.linspace(0.01, 0.99, tri.site_count))
    x, y = 0, tri.nbr[0, 0]
    e = edge_lex_label(lab, (x, y))
    assert e.hi == max(lab.values[x], lab.values[y])
    assert e.lo == min(lab.values[x], lab.values[y])
    with pytest.raises(UsageError):
        edge_lex_label(lab, (0, tri.site_at(3, 3)))


def test_lambda_p_roundtrip():
    cal = Calibration("theoretical", 0.125)
    assert lambda_to_p(0.0, cal) == 0.5
    for lam in (-3.0, -0.5, 0.25, 2.0):
        assert p_to_lambda(lambda_to_p(lam, cal), cal) == pytest.approx(lam)
    # p(lambda) = 1/2 + 1 - exp(-lambda r) for lambda > 0
    assert lambda_to_p(1.0, cal) == pytest.approx(0.5 + 1 - math.exp(-0.125))
    assert lambda_to_p(1e9, cal) == 1.0
    with pytest.raises(InfiniteLambdaError):
        p_to_lambda(1.0, cal)
    with pytest.raises(UsageError):
        Window(1.0, 1.0)


def test_theoretical_calibration():
    assert Calibration.theoretical(1 / 16).r_eta == pytest.approx((1 / 16) ** 0.75)


def test_measured_calibration():
    g = build_geometry(LatticeSpec("triangular-site", 8, 1.0, "torus"))
    cal = calibrate_r(g, 2000, seed=3)
    assert cal.mode == "measured" and 0 < cal.alpha4 < 1
    assert cal.r_eta == pytest.approx(g.eta ** 2 / cal.alpha4)
    lo, hi = cal.interval
    assert lo <= cal.alpha4 <= hi
    assert calibrate_r(g, 2000, seed=3) == cal


def test_binomial_interval_edges():
    assert binomial_interval(0, 10)[0] == 0.0
    assert binomial_interval(10, 10)[1] == 1.0
    lo, hi = binomial_interval(50, 100)
    assert lo < 0.5 < hi
