"""Seeded small cover instances shared by the content tests."""

from __future__ import annotations

import numpy as np

from qclab.gauge import constant_gauge, measure_gauge
from qclab.measures import Ball, DiscreteMeasure, DyadicCellSet


def cover_instance(seed: int):
    """3x3 block at level 3, its 9 circumscribed balls plus 11 random balls, random gauge."""
    rng = np.random.default_rng(seed)
    i0, j0 = rng.integers(0, 6, 2)
    target = DyadicCellSet.block(3, int(i0), int(j0), 3, 3)
    side = target.side
    lo = complex(i0 * side, j0 * side)
    balls = list(target.circumscribed_balls())
    for _ in range(11):
        c = lo + complex(*rng.uniform(-0.25, 3.25, 2)) * side
        balls.append(Ball(c, float(rng.uniform(0.7, 2.6)) * side))
    if seed % 2:
        gauge = constant_gauge(float(rng.uniform(0.5, 1.8)))
    else:
        pts = lo + (rng.uniform(0, 3, 6) + 1j * rng.uniform(0, 3, 6)) * side
        gauge = measure_gauge(DiscreteMeasure(pts, rng.uniform(0.1, 1, 6)), float(rng.uniform(0.2, 1.0)),
                              float(rng.uniform(0.5, 1.8)))
    return target, gauge, balls
