from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from qclab.cantor import CantorParams, place_disks, sharp_radius
from qclab.distortion import (
    capacity_comparison,
    generation_capacity,
    indices_from_target,
    sharp_capacity_ratios,
    verify_thm11_on_cantor,
    verify_thm12_on_cantor,
)
from qclab.exponents import t_prime
from qclab.measures import DiscreteMeasure
from qclab.potentials import RieszIndex, WolffOptions


def test_generation_capacity_unit_construction():
    # every generation term is 1, root included, so W = N + 1 and Cap = (N+1)**(-1/(p'-1))
    p = CantorParams.uniform(2.0, 1.0, 20, 1e-4)
    idx = RieszIndex(0.5, 2.0)
    for N in (0, 5, 20):
        cap, W = generation_capacity(p, idx, "source", N)
        assert W == pytest.approx(N + 1)
        assert cap == pytest.approx((N + 1) ** -1.0)


@pytest.mark.parametrize("K,t", [(2.0, 1.0), (3.0, 0.5), (1.5, 1.2)])
def test_thm12_identity_unit_construction(K, t):
    R = min(1e-2, 1e-2 ** (t * K / (2 - t)))
    p = CantorParams.uniform(K, t, 8, R)
    for N in range(9):
        r = verify_thm12_on_cantor(p, N, root_radius=3.0)
        assert r.lhs == pytest.approx(1.0, abs=1e-10)
        assert r.rhs == pytest.approx(1.0, abs=1e-10)


def test_thm12_half_deficit_direction():
    p = CantorParams.uniform(2.0, 1.0, 12, 1e-4, fill_deficit=np.full(12, 0.5))
    tp = t_prime(1.0, 2.0)
    for N in (3, 6, 12):
        r = verify_thm12_on_cantor(p, N)
        assert r.lhs <= r.C * r.rhs
        # counts carry (1/2)**N; lhs sees it once, rhs through the power t'/(Kt)
        assert r.lhs / r.rhs == pytest.approx(0.5 ** (N * (1 - tp / 2.0)), rel=1e-10)
    with pytest.raises(ValueError):
        verify_thm12_on_cantor(CantorParams.uniform(2.0, 1.0, 3, 2.5e-5, "sharp", 1.0), 2)


def test_thm11_conformal_ratio_one():
    idx = indices_from_target(Fraction(1, 2), Fraction(2), Fraction(1))
    p = CantorParams.uniform(1.0, 1.0, 30, 1e-2)
    r = verify_thm11_on_cantor(p, idx, 30)
    assert r.ratio == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        verify_thm11_on_cantor(CantorParams.uniform(2.0, 1.0, 3, 1e-4), idx, 3)


def test_thm11_atomic_matches_generation_for_k1():
    idx = indices_from_target(0.5, 2.0, 1.0)
    p = CantorParams.uniform(1.0, 1.0, 2, 1e-2, disks_per_level=(4, 4))
    cmap = place_disks(p, 3)
    r = verify_thm11_on_cantor(p, idx, 2, "atomic", cmap, WolffOptions(-30, 3))
    assert 0.25 <= r.ratio <= 4
    assert r.seed == 3


def test_thm11_sharp_ratio_stable():
    idx = indices_from_target(Fraction(1, 3), 2, 2)
    delta = 1.0
    p = CantorParams.uniform(2.0, 1.0, 2000, sharp_radius(1.0, 2.0, 2.0), "sharp", delta)
    ratios = [verify_thm11_on_cantor(p, idx, N).ratio for N in (250, 500, 1000, 2000)]
    assert all(0 < r < math.inf for r in ratios)
    assert max(ratios) / min(ratios) < 1.2


def test_capacity_comparison_requires_matching_indices():
    rng = np.random.default_rng(0)
    mus = [DiscreteMeasure(rng.uniform(0, 1, 8) + 1j * rng.uniform(0, 1, 8), np.ones(8)) for _ in range(3)]
    cmp = capacity_comparison(RieszIndex(0.5, 2.0), RieszIndex(2 / 3, 1.5), mus)
    assert len(cmp.ratios) == 3 and all(r > 0 for r in cmp.ratios)
    assert cmp.max_ratio == max(cmp.ratios)
    with pytest.raises(ValueError):
        capacity_comparison(RieszIndex(0.5, 2.0), RieszIndex(0.5, 1.5), mus)
    with pytest.raises(ValueError):
        capacity_comparison(RieszIndex(2 / 3, 1.5), RieszIndex(0.5, 2.0), mus)


def test_sharp_capacity_ratios_decay():
    r = sharp_capacity_ratios(1.0, 2.0, 2.0, 3.0, [10, 100, 1000, 10000])
    assert all(a > b > 0 for a, b in zip(r, r[1:]))
    with pytest.raises(ValueError):
        sharp_capacity_ratios(1.0, 2.0, 2.0, 2.5, [10])
