from __future__ import annotations

import json
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from qclab.cantor import (
    CantorParams,
    DiskAddress,
    PackingInfeasible,
    block_mass,
    check_lemtec5,
    dart_throw,
    derive_sigma,
    discretize,
    place_disks,
    sharp_multipliers,
    sharp_radius,
    sharpness_harness,
    source_radius,
    target_radius,
    tree_csv,
    wolff_on_cantor,
)
from qclab.exponents import t_prime
from qclab.measures import DiscreteMeasure
from qclab.potentials import RieszIndex


def small_map(seed=0, K=2.0, t=1.0, R=1e-4, M=(4, 3)):
    return place_disks(CantorParams.uniform(K, t, len(M), R, disks_per_level=M), seed)


def test_derive_sigma_formula_and_limits():
    assert derive_sigma(1e-4, 1.0, 2.0) == pytest.approx(1e-2)
    assert derive_sigma(1e-6, 0.5, 3.0, 1.5) == pytest.approx(1e-6 ** (1.5 / 1.5) * 1.5)
    with pytest.raises(ValueError):
        derive_sigma(1e-2, 1.0, 2.0)
    with pytest.raises(ValueError):
        derive_sigma(0.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        derive_sigma(1e-6, 1.0, 1.0, 2.5)


def test_sharp_multipliers_and_radius():
    d = sharp_multipliers(4, 0.5)
    assert np.allclose(d, [(2 / 1) ** 0.5, (3 / 2) ** 0.5, (4 / 3) ** 0.5, (5 / 4) ** 0.5], rtol=1e-15)
    R = sharp_radius(1.0, 2.0, 2.0)
    assert R ** 0.5 * 2 == pytest.approx(0.01)
    assert sharp_radius(1.0, 1.0, 1.0) == 0.01


def test_params_validation():
    with pytest.raises(ValueError):
        CantorParams.uniform(2.0, 1.0, 3, 1e-2)  # sigma = 0.1
    with pytest.raises(ValueError):
        CantorParams.uniform(2.0, 1.0, 2, 1e-4, disks_per_level=(2 * 10**8, 1))
    with pytest.raises(ValueError):
        CantorParams.uniform(2.0, 1.0, 2, 1e-4, disks_per_level=(4, 4), fill_deficit=[0.5, 0.5])
    with pytest.raises(ValueError):
        CantorParams.uniform(2.0, 1.0, 2, 1e-4, d_mode="sharp")
    p = CantorParams.uniform(2.0, 1.0, 2, 1e-4, disks_per_level=(4, 4))
    assert np.allclose(p.fill_deficit, 1 - 4e-8)
    with pytest.raises(ValueError):
        p.check_address(DiskAddress((4,)))
    with pytest.raises(ValueError):
        p.check_address(DiskAddress((0,), (1,)))


def test_params_json_roundtrip():
    p = CantorParams.uniform(2.0, 1.0, 5, 2.5e-5, "sharp", 1.0)
    q = CantorParams.from_json(p.to_json())
    assert np.array_equal(p.R, q.R) and np.array_equal(p.d, q.d)
    assert q.d_mode == "sharp" and q.delta == 1.0
    assert json.loads(q.to_json()) == json.loads(p.to_json())


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 5.0), st.floats(0.2, 1.8), st.integers(1, 8), st.integers(0, 10**6))
def test_dimensional_identity(K, t, N, pos):
    # exponent tK/(2-t) keeps sigma at the 1/100 limit
    R = min(1e-2, 1e-2 ** (t * K / (2 - t)))
    p = CantorParams.uniform(K, t, 8, R)
    addr = DiskAddress((pos,) * N)
    m = block_mass(p, addr)
    assert source_radius(p, addr) ** t == pytest.approx(m, rel=1e-10)
    assert target_radius(p, addr) ** t_prime(t, K) == pytest.approx(m, rel=1e-10)


def test_worked_radii_example():
    p = CantorParams.uniform(2.0, 1.0, 3, 1e-4)
    a = DiskAddress((0, 0))
    assert block_mass(p, a) == pytest.approx(1e-16)
    assert source_radius(p, a) == pytest.approx(1e-16)
    assert target_radius(p, a) == pytest.approx(1e-12)


def test_deficit_renormalises_mass():
    eps = np.array([0.5, 0.25])
    p = CantorParams.uniform(2.0, 1.0, 2, 1e-4, fill_deficit=eps)
    # total mass prod(1 - eps); a level-1 block keeps the deeper factor
    assert p.total_mass() == pytest.approx(0.5 * 0.75)
    assert block_mass(p, DiskAddress((0,))) == pytest.approx(1e-8 * 0.75)


def test_dart_throw_disjoint_inside():
    rng = np.random.default_rng(3)
    r = math.sqrt(0.3 / 7)  # seven disks filling 30% of the unit disk
    c = dart_throw(7, r, rng)
    assert len(c) == 7
    assert np.all(np.abs(c) <= 1 - r + 1e-15)
    d = np.abs(c[:, None] - c[None, :]) + np.eye(7) * 10
    assert d.min() >= 2 * r
    with pytest.raises(PackingInfeasible):
        dart_throw(30, 0.2, rng)
    with pytest.raises(PackingInfeasible):
        dart_throw(20, 0.21, np.random.default_rng(0), max_attempts=50)


def test_placement_is_seeded():
    a, b = small_map(5), small_map(5)
    assert all(np.array_equal(x, y) for x, y in zip(a.positions, b.positions))
    assert not np.array_equal(small_map(6).positions[0], a.positions[0])


def test_map_identity_outside_and_continuity():
    cmap = small_map(1)
    p = cmap.params
    for z in (1.5 + 0j, -2j, 0.9 + 0.9j):
        assert cmap.map_point(z) == z
    addr = DiskAddress((2,))
    cs, ct = cmap.centers(addr)
    # protecting circle (radius R) and generating circle (radius sigma**K R) in the source
    for theta in np.linspace(0, 2 * np.pi, 7):
        e = np.exp(1j * theta)
        outer = cmap.map_point(cs + p.R[0] * e * (1 + 1e-12))
        assert outer == pytest.approx(ct + p.R[0] * e, abs=1e-12)
        inner = cmap.map_point(cs + source_radius(p, addr) * e * (1 - 1e-9))
        assert abs(inner - ct) == pytest.approx(target_radius(p, addr), rel=1e-8)


def test_image_ball_radius_bracket():
    cmap = small_map(2)
    cs, _ = cmap.centers(DiskAddress((1,)))
    lo, hi = cmap.image_ball_radius(cs + 3e-4, 1e-4)
    assert 0 < lo <= hi
    far = cmap.image_ball_radius(5 + 0j, 0.5)
    assert far == pytest.approx((0.5, 0.5))


def test_tree_and_discretize():
    cmap = small_map(0)
    rows = tree_csv(cmap).splitlines()
    assert rows[0] == "address,source_radius,target_radius,mass,center_x,center_y"
    assert len(rows) == 1 + 1 + 4 + 12
    with pytest.warns(RuntimeWarning, match="double precision"):
        mu, nu = discretize(cmap, 2)
    assert len(mu) == len(nu) == 12
    assert mu.total == pytest.approx(cmap.params.total_mass())
    with pytest.raises(ValueError):
        discretize(cmap, 3)


@pytest.mark.parametrize("K,t", [(1.0, 1.0), (2.0, 1.0), (3.0, 0.6)])
def test_generation_sums_count_levels_at_matched_index(K, t):
    # with d = 1 and no deficit every generation contributes (m / r**dim)**(p'-1) = 1
    R = min(1e-2, 1e-2 ** (t * K / (2 - t)))
    p = CantorParams.uniform(K, t, 50, R)
    src = wolff_on_cantor(p, RieszIndex((2 - t) / 2, 2.0), "source")
    tp = t_prime(t, K)
    tgt = wolff_on_cantor(p, RieszIndex((2 - tp) / 1.5, 1.5), "target")
    assert np.allclose(src, np.arange(1, 51), rtol=1e-10)
    assert np.allclose(tgt, np.arange(1, 51), rtol=1e-10)


def test_sharpness_exact_exponents():
    res = sharpness_harness(1, 2, 2, 3, N=10**4)
    # delta = 1/(tK(p~' - 1)) = 1, target exponent t'(q'-1) delta = 4/3
    assert res.indices.delta == 1
    assert res.target_exponent == sympy.Rational(4, 3)
    assert res.source_exponent == 1
    assert res.verdicts == {"target": "converges", "source": "diverges"}
    assert res.indices.beta * res.indices.q == 2 - res.indices.t_prime
    with pytest.raises(ValueError):
        sharpness_harness(1, 2, 2, sympy.Rational(5, 2), numeric=False)


def test_lemtec5_reports_finite_constant():
    cmap = small_map(4, M=(4,))
    base = DiscreteMeasure(np.array([0j, 0.5 + 0.5j]), np.array([1.0, 1.0]))
    cs, _ = cmap.centers(DiskAddress((0,)))
    probes = [(cs + 0.02, 0.01), (0.3 + 0.1j, 0.05), (2 + 0j, 0.5)]
    rep = check_lemtec5(cmap, base, 0.5, 1.0, 1.0, 1.5, probes)
    assert math.isfinite(rep.C) and rep.C >= 1
    assert rep.g2_finite
