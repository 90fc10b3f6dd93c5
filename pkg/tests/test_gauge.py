from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qclab.gauge import (
    GaugeSpec,
    PsiProfile,
    borderline_growth,
    check_doubling,
    check_G1,
    check_G2,
    constant_gauge,
    custom_gauge,
    default_g1_samples,
    default_g2_samples,
    h_gauge,
    lemtec1_bound,
    measure_gauge,
    psi,
)
from qclab.measures import DiscreteMeasure


def test_psi_values():
    prof = PsiProfile(1.0, 1.0)
    assert psi(prof, 0.0) == 1.0
    assert psi(prof, 1.0) == 0.5
    assert psi(prof, 2.0) == pytest.approx(1 / 5)
    assert np.allclose(prof([0.0, 3.0]), [1.0, 1 / 10])
    with pytest.raises(ValueError):
        psi(prof, -1.0)
    with pytest.raises(ValueError):
        PsiProfile(0.0, 1.0)


def test_measure_gauge_single_atom_by_hand():
    mu = DiscreteMeasure(np.array([0j]), np.array([2.0]))
    g = measure_gauge(mu, 1.0, 1.0)
    # eps(x, r) = r**-t * m / ((|x|/r)**(t+a) + 1)
    assert g.eps(3 + 0j, 1.0) == pytest.approx(2 / 10)
    assert g.eps(3j, 2.0) == pytest.approx(0.5 * 2 / (1.5**2 + 1))
    assert h_gauge(g, 3 + 0j, 2.0) == pytest.approx(2 / (1.5**2 + 1))
    with pytest.raises(ValueError):
        g.eps(0j, 0.0)


def test_measure_gauge_is_additive_in_mu():
    a = DiscreteMeasure(np.array([0j, 1 + 1j]), np.array([1.0, 0.5]))
    b = DiscreteMeasure(np.array([2j]), np.array([3.0]))
    ab = DiscreteMeasure(np.concatenate([a.points, b.points]), np.concatenate([a.masses, b.masses]))
    z, r = np.array([0.3 + 0.1j, -1 + 0j]), np.array([0.2, 5.0])
    lhs = measure_gauge(ab, 0.7, 1.3).eps(z, r)
    rhs = measure_gauge(a, 0.7, 1.3).eps(z, r) + measure_gauge(b, 0.7, 1.3).eps(z, r)
    assert np.allclose(lhs, rhs, rtol=1e-14)


def test_gauge_spec_validation():
    with pytest.raises(ValueError):
        constant_gauge(2.0)
    with pytest.raises(ValueError):
        GaugeSpec(t=1.0, kind="weird", epsilon=lambda z, r: 1.0)


def test_gauge_json_roundtrip(tmp_path):
    mu = DiscreteMeasure(np.array([0.2 + 0.1j, 0.5j]), np.array([1.0, 2.0]))
    path = tmp_path / "mu.csv"
    mu.to_csv(path)
    g = measure_gauge(mu, 0.4, 1.2)
    data = json.loads(g.to_json())
    data["measure_ref"] = str(path)
    back = GaugeSpec.from_json(json.dumps(data))
    z, r = np.array([0.1 + 0.1j, 1 + 0j]), np.array([0.3, 2.0])
    assert np.allclose(back.eps(z, r), g.eps(z, r), rtol=1e-15)
    assert GaugeSpec.from_json(constant_gauge(0.5).to_json()).t == 0.5


@pytest.mark.parametrize("t", [0.3, 1.0, 1.8])
def test_G2_constant_gauge_is_geometric(t):
    q = 2.0 ** -(2 - t)
    for k_max in (5, 20):
        rep = check_G2(constant_gauge(t), [(0j, 0.5), (1 + 1j, 1e-3)], k_max)
        assert rep.estimated_constant == pytest.approx((1 - q ** (k_max + 1)) / (1 - q), rel=1e-13)
        assert rep.tail_bound == pytest.approx(q ** (k_max + 1) / (1 - q), rel=1e-10)
        assert not rep.unbounded


def test_G1_constant_and_measure():
    assert check_G1(constant_gauge(1.0), default_g1_samples(None, 32)).estimated_constant == 1.0
    mu = DiscreteMeasure(np.array([0j, 0.5 + 0j]), np.array([1.0, 1.0]))
    rep = check_G1(measure_gauge(mu, 0.5, 1.0), default_g1_samples(mu, 256, seed=3))
    assert 1.0 < rep.estimated_constant < math.inf
    with pytest.raises(ValueError):
        check_G1(constant_gauge(1.0), [(0j, 1.0, 3 + 0j, 1.0)])


def test_G1_zero_conventions():
    zero = custom_gauge(1.0, lambda z, r: np.zeros(np.shape(z)))
    assert check_G1(zero, [(0j, 1.0, 0j, 1.5)]).estimated_constant == 1.0
    step = custom_gauge(1.0, lambda z, r: (r >= 1).astype(float))
    rep = check_G1(step, [(0j, 0.8, 0j, 1.2)])
    assert rep.unbounded and rep.estimated_constant == math.inf


def test_G2_measure_gauge_stable_in_kmax():
    mu = DiscreteMeasure(np.array([0j, 0.3 + 0.4j, 1 + 0j]), np.array([1.0, 0.5, 2.0]))
    t = 1.2
    g = measure_gauge(mu, (2 - t) / 2, t)
    s = default_g2_samples(mu, 64, seed=1)
    c20, c40 = check_G2(g, s, 20), check_G2(g, s, 40)
    assert c40.estimated_constant == pytest.approx(c20.estimated_constant, rel=0.1)
    assert c20.tail_bound >= c40.tail_bound


def test_borderline_growth_is_logarithmic():
    # with a = 2 - t and the atom at distance 1, each octave between r and 1 adds one unit
    t = 0.8
    g = measure_gauge(DiscreteMeasure(np.array([0j]), np.array([1.0])), 2 - t, t)
    slope, r2, ratios = borderline_growth(g, 1 + 0j, 2.0 ** -np.arange(4, 24), 60)
    assert slope == pytest.approx(1.0, abs=0.05)
    assert r2 > 0.99
    assert np.all(np.diff(ratios) > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 1.9), st.floats(0.05, 2.0), st.integers(0, 1000))
def test_doubling_bound(t, a, seed):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(rng.normal(size=5) + 1j * rng.normal(size=5), rng.uniform(0.1, 1, 5))
    x = rng.normal(size=50) + 1j * rng.normal(size=50)
    r = 2.0 ** rng.uniform(-15, 5, 50)
    ok, worst = check_doubling(measure_gauge(mu, a, t), x, r)
    assert ok and worst <= 2 ** (t + a) * (1 + 1e-12)


def test_lemtec1_bound_cases():
    s, bound = lemtec1_bound(1.0, 2.0, 3.0, 0)
    assert s == pytest.approx(1 / 4) and bound == pytest.approx(1 / 4)
    for alpha, beta in ((0.5, 1.5), (2.0, 0.7)):
        ratios = [lemtec1_bound(alpha, beta, x, 200)[0] / lemtec1_bound(alpha, beta, x, 200)[1]
                  for x in np.geomspace(1e-3, 1e6, 30)]
        assert max(ratios) < 1 / (1 - 2 ** -abs(alpha - beta)) + 1 / (1 - 2 ** -beta) + 1
    with pytest.raises(ValueError):
        lemtec1_bound(1.0, 1.0, 2.0, 10)
