"""Atomic measures, dyadic cell sets and Carathéodory-type contents.

Compact sets are finite unions of closed dyadic cells.  The infimum over all
ball coverings is replaced by the infimum over an explicit candidate family,
which is what ``content_upper`` and ``content_oracle`` compute.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .gauge import GaugeSpec

__all__ = [
    "Ball",
    "DiscreteMeasure",
    "DyadicCellSet",
    "UncoverableError",
    "CoverResult",
    "FrostmanResult",
    "LemmaCheck",
    "measure_of_ball",
    "coverage_matrix",
    "best_cover",
    "content_upper",
    "content_oracle",
    "hausdorff_h_delta",
    "dyadic_candidates",
    "frostman_construct",
    "frostman_report",
    "check_lemma_Mmu",
]

# relative slack for closed-set membership tests
_CLOSED_TOL = 1e-12


class UncoverableError(ValueError):
    """No subfamily of the candidate balls covers the target."""

    def __init__(self, missing: Sequence[tuple[int, int]]):
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} target cell(s) not covered by any candidate, e.g. {self.missing[:3]}")


@dataclass(frozen=True)
class Ball:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, z) -> np.ndarray:
        """Closed-ball membership, vectorised over ``z``."""
        return np.abs(np.asarray(z) - self.center) <= self.radius * (1 + _CLOSED_TOL)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite atomic measure: complex points carrying positive masses."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex)).copy()
        m = np.atleast_1d(np.asarray(self.masses, dtype=float)).copy()
        if pts.shape != m.shape or pts.ndim != 1:
            raise ValueError("points and masses must be 1-d arrays of equal length")
        if np.any(~np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("atom masses must be finite and > 0")
        if np.any(~np.isfinite(pts)):
            raise ValueError("atom positions must be finite")
        pts.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    @classmethod
    def empty(cls) -> DiscreteMeasure:
        return cls(np.zeros(0, complex), np.zeros(0))

    @classmethod
    def from_atoms(cls, points, masses, drop_zero: bool = True) -> DiscreteMeasure:
        """Build a measure, silently dropping zero-mass atoms if asked."""
        pts = np.atleast_1d(np.asarray(points, dtype=complex))
        m = np.atleast_1d(np.asarray(masses, dtype=float))
        if drop_zero:
            keep = m > 0
            pts, m = pts[keep], m[keep]
        return cls(pts, m)

    @cached_property
    def total(self) -> float:
        return math.fsum(self.masses.tolist())

    def __len__(self) -> int:
        return self.points.size

    def scaled(self, factor: float) -> DiscreteMeasure:
        if factor == 0:
            return DiscreteMeasure.empty()
        return DiscreteMeasure(self.points, self.masses * factor)

    def translated(self, shift: complex) -> DiscreteMeasure:
        return DiscreteMeasure(self.points + shift, self.masses)

    def restricted(self, mask) -> DiscreteMeasure:
        mask = np.asarray(mask, dtype=bool)
        return DiscreteMeasure(self.points[mask], self.masses[mask])

    def diameter(self) -> float:
        if len(self) < 2:
            return 0.0
        p = self.points
        return float(np.max(np.abs(p[:, None] - p[None, :])))

    def min_separation(self) -> float:
        """Smallest distance between distinct atoms (inf for < 2 atoms)."""
        if len(self) < 2:
            return math.inf
        p = self.points
        d = np.abs(p[:, None] - p[None, :])
        d[np.diag_indices_from(d)] = np.inf
        d[d == 0] = np.inf
        return float(d.min())

    # CSV: header re_x,im_x,mass
    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["re_x", "im_x", "mass"])
        for z, m in zip(self.points, self.masses):
            w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> DiscreteMeasure:
        p = Path(source)
        text = p.read_text(encoding="utf-8") if p.exists() else str(source)
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            return cls.empty()
        pts = [complex(float(r["re_x"]), float(r["im_x"])) for r in rows]
        return cls(np.array(pts), np.array([float(r["mass"]) for r in rows]))


def measure_of_ball(mu: DiscreteMeasure, ball: Ball) -> float:
    """Mass of the closed ball."""
    if len(mu) == 0:
        return 0.0
    return float(mu.masses[ball.contains(mu.points)].sum())


@dataclass(frozen=True)
class DyadicCellSet:
    """Closed dyadic cells ``[i, i+1] x [j, j+1] * 2**-level``."""

    level: int
    cells: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset((int(i), int(j)) for i, j in self.cells))
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def from_indices(cls, level: int, cells: Iterable[tuple[int, int]]) -> DyadicCellSet:
        return cls(level, frozenset(cells))

    @classmethod
    def segment(cls, level: int, start: int = 0, stop: int | None = None, row: int = 0) -> DyadicCellSet:
        """A horizontal row of cells, by default covering ``[0, 1]``."""
        stop = 2**level if stop is None else stop
        return cls(level, frozenset((i, row) for i in range(start, stop)))

    @classmethod
    def block(cls, level: int, i0: int, j0: int, ni: int, nj: int) -> DyadicCellSet:
        return cls(level, frozenset((i0 + a, j0 + b) for a in range(ni) for b in range(nj)))

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def __len__(self) -> int:
        return len(self.cells)

    def index_array(self) -> np.ndarray:
        """Cells as a sorted (m, 2) integer array."""
        if not self.cells:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.cells), dtype=np.int64)

    def centers(self) -> np.ndarray:
        idx = self.index_array()
        return (idx[:, 0] + 0.5 + 1j * (idx[:, 1] + 0.5)) * self.side

    def corners(self) -> np.ndarray:
        """(m, 4) complex array of cell corners."""
        idx = self.index_array().astype(float)
        s = self.side
        ll = (idx[:, 0] + 1j * idx[:, 1]) * s
        offs = np.array([0, s, 1j * s, s + 1j * s])
        return ll[:, None] + offs[None, :]

    def circumscribed_balls(self) -> list[Ball]:
        r = self.side / math.sqrt(2)
        return [Ball(c, r) for c in self.centers()]

    def ancestors(self, level: int) -> DyadicCellSet:
        """The cells at a coarser ``level`` containing at least one cell of self."""
        if level > self.level:
            raise ValueError("ancestor level must not exceed the set's level")
        shift = self.level - level
        return DyadicCellSet(level, frozenset((i >> shift, j >> shift) for i, j in self.cells))

    def union(self, other: DyadicCellSet) -> DyadicCellSet:
        if other.level != self.level:
            raise ValueError("union requires cells at the same level")
        return DyadicCellSet(self.level, self.cells | other.cells)

    def contains_points(self, z) -> np.ndarray:
        """Closed-cell membership of points (vectorised)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if not self.cells:
            return np.zeros(z.shape, dtype=bool)
        s = self.side
        out = np.zeros(z.shape, dtype=bool)
        # a point on a shared edge may sit in up to 4 closed cells
        x, y = z.real / s, z.imag / s
        for dx in (0, -1):
            for dy in (0, -1):
                i = np.floor(x).astype(np.int64) + dx
                j = np.floor(y).astype(np.int64) + dy
                inside = (x >= i - _CLOSED_TOL) & (x <= i + 1 + _CLOSED_TOL)
                inside &= (y >= j - _CLOSED_TOL) & (y <= j + 1 + _CLOSED_TOL)
                hit = np.fromiter(((a, b) in self.cells for a, b in zip(i.tolist(), j.tolist())), bool, z.size)
                out |= inside & hit
        return out

    def to_json(self) -> str:
        return json.dumps({"level": self.level, "cells": [list(c) for c in sorted(self.cells)]})

    @classmethod
    def from_json(cls, text: str | dict) -> DyadicCellSet:
        data = json.loads(text) if isinstance(text, str) else text
        return cls(int(data["level"]), frozenset(tuple(c) for c in data["cells"]))


def coverage_matrix(target: DyadicCellSet, candidates: Sequence[Ball]) -> np.ndarray:
    """Boolean (n_candidates, n_cells): ball contains the whole closed cell.

    A closed ball contains a square iff it contains the four corners.
    """
    corners = target.corners()
    if not candidates:
        return np.zeros((0, len(target)), dtype=bool)
    c = np.array([b.center for b in candidates])
    r = np.array([b.radius for b in candidates])
    d = np.abs(corners[None, :, :] - c[:, None, None])
    return np.all(d <= r[:, None, None] * (1 + _CLOSED_TOL), axis=2)


def _ball_costs(gauge: GaugeSpec, candidates: Sequence[Ball]) -> np.ndarray:
    if not candidates:
        return np.zeros(0)
    c = np.array([b.center for b in candidates])
    r = np.array([b.radius for b in candidates])
    return np.asarray(gauge.h(c, r), dtype=float)


@dataclass(frozen=True)
class CoverResult:
    value: float
    chosen: tuple[int, ...]
    balls: tuple[Ball, ...]


def _bitmasks(cov: np.ndarray) -> list[int]:
    return [int("".join("1" if v else "0" for v in row[::-1]) or "0", 2) for row in cov]


# candidate families up to this size also try adding two sets per move
_PAIR_MOVES_MAX = 40


def _prune(chosen: Sequence[int], masks: Sequence[int], cost: np.ndarray) -> list[int]:
    """Drop redundant sets, most expensive first."""
    keep = sorted(set(chosen), key=lambda i: (-cost[i], i))
    for k in list(keep):
        rest = 0
        for j in keep:
            if j != k:
                rest |= masks[j]
        if masks[k] & ~rest == 0:
            keep.remove(k)
    return sorted(keep)


def _greedy(masks: Sequence[int], cost: np.ndarray, full: int, start: Sequence[int] = (),
            power: float = 1.0, banned: frozenset = frozenset()) -> list[int] | None:
    """Cost-effectiveness greedy (cost / gain**power) completing ``start``; None if stuck."""
    chosen = list(start)
    covered = 0
    for j in chosen:
        covered |= masks[j]
    while covered != full:
        best, best_score = -1, math.inf
        for k, m in enumerate(masks):
            if k in banned:
                continue
            gain = bin(m & ~covered).count("1")
            if gain and cost[k] / gain**power < best_score:
                best, best_score = k, cost[k] / gain**power
        if best < 0:
            return None
        chosen.append(best)
        covered |= masks[best]
    return _prune(chosen, masks, cost)


def _local_search(chosen: list[int], masks: Sequence[int], cost: np.ndarray, full: int,
                  max_rounds: int = 200) -> list[int]:
    """First-improvement search: swap one set for up to two others, or drop one and repair greedily."""
    best = sorted(chosen)
    best_cost = math.fsum(cost[best].tolist())
    n = len(masks)
    for _ in range(max_rounds):
        # an added set that survives pruning must be cheaper than the incumbent
        out = [c for c in range(n) if c not in best and cost[c] < best_cost]
        moves = [[c] for c in out]
        if n <= _PAIR_MOVES_MAX:
            moves += [[c, e] for i, c in enumerate(out) for e in out[i + 1 :] if cost[c] + cost[e] < best_cost]
        found = None
        # add up to two sets, optionally dropping one, then prune
        for drop in [None] + best:
            base = [c for c in best if c != drop]
            covered = 0
            for j in base:
                covered |= masks[j]
            # cells only k covers within base; k can be pruned only if the move covers them
            uniq = []
            for k in base:
                rest = 0
                for j in base:
                    if j != k:
                        rest |= masks[j]
                uniq.append((masks[k] & ~rest, cost[k]))
            credit = 0.0 if drop is None else cost[drop]
            for add in moves:
                am = 0
                for j in add:
                    am |= masks[j]
                if covered | am != full:
                    continue
                removable = sum(c for m, c in uniq if m & ~am == 0)
                if sum(cost[j] for j in add) >= credit + removable:
                    continue
                trial = _prune(base + add, masks, cost)
                if math.fsum(cost[trial].tolist()) < best_cost * (1 - 1e-12):
                    found = trial
                    break
            if found is not None:
                break
        if found is None:
            for k in best:
                trial = _greedy(masks, cost, full, [c for c in best if c != k], banned=frozenset([k]))
                if trial is not None and math.fsum(cost[trial].tolist()) < best_cost * (1 - 1e-12):
                    found = trial
                    break
        if found is None:
            break
        best, best_cost = found, math.fsum(cost[found].tolist())
    return best


def best_cover(target: DyadicCellSet, gauge: GaugeSpec, candidates: Sequence[Ball]) -> CoverResult:
    """Heuristic minimum-cost cover: weighted greedy followed by add/drop local search."""
    candidates = list(candidates)
    if len(target) == 0:
        return CoverResult(0.0, (), ())
    cov = coverage_matrix(target, candidates)
    missing = ~cov.any(axis=0) if cov.size else np.ones(len(target), dtype=bool)
    if missing.any():
        idx = target.index_array()
        raise UncoverableError([tuple(map(int, idx[i])) for i in np.flatnonzero(missing)])
    cost = _ball_costs(gauge, candidates)
    masks = _bitmasks(cov)
    full = (1 << len(target)) - 1
    # a few greedy starts, each polished by local search
    runs = [_local_search(_greedy(masks, cost, full, power=pw), masks, cost, full) for pw in (1.0, 0.5, 2.0)]
    chosen = min(runs, key=lambda c: (math.fsum(cost[c].tolist()), c))
    value = math.fsum(cost[chosen].tolist())
    return CoverResult(value, tuple(chosen), tuple(candidates[i] for i in chosen))


def content_upper(target: DyadicCellSet, gauge: GaugeSpec, candidates: Sequence[Ball]) -> float:
    """Upper estimate of the h-content of ``target`` over the candidate family."""
    return best_cover(target, gauge, candidates).value


def content_oracle(
    target: DyadicCellSet, gauge: GaugeSpec, candidates: Sequence[Ball], max_candidates: int = 20
) -> float:
    """Exact minimum of sum h(B) over every covering subfamily (exhaustive, 2**n subsets)."""
    candidates = list(candidates)
    n = len(candidates)
    if max_candidates > 20 or n > max_candidates:
        raise ValueError(f"exhaustive oracle limited to 20 candidates (got {n}, limit {max_candidates})")
    if len(target) == 0:
        return 0.0
    cov = coverage_matrix(target, candidates)
    m = cov.shape[1]
    words = -(-m // 64)
    packed = np.zeros((n, words), dtype=np.uint64)
    for w in range(words):
        chunk = cov[:, 64 * w : 64 * (w + 1)]
        weights = np.left_shift(np.uint64(1), np.arange(chunk.shape[1], dtype=np.uint64))
        packed[:, w] = (chunk.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    full = np.zeros(words, dtype=np.uint64)
    for w in range(words):
        k = min(64, m - 64 * w)
        full[w] = np.uint64((1 << k) - 1)
    cost = _ball_costs(gauge, candidates)
    union = np.zeros((1 << n, words), dtype=np.uint64)
    total = np.zeros(1 << n)
    for i in range(n):
        lo, hi = 1 << i, 1 << (i + 1)
        union[lo:hi] = union[:lo] | packed[i]
        total[lo:hi] = total[:lo] + cost[i]
    ok = np.all(union == full, axis=1)
    if not ok.any():
        missing = ~cov.any(axis=0)
        idx = target.index_array()
        raise UncoverableError([tuple(map(int, idx[i])) for i in np.flatnonzero(missing)])
    return float(total[ok].min())


def hausdorff_h_delta(
    target: DyadicCellSet, gauge: GaugeSpec, delta: float, candidates: Sequence[Ball]
) -> float:
    """``content_upper`` restricted to candidates of radius strictly below ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    small = [b for b in candidates if b.radius < delta]
    return content_upper(target, gauge, small)


def dyadic_candidates(target: DyadicCellSet, coarsest_level: int = 0) -> list[Ball]:
    """Circumscribed balls of every dyadic ancestor of the target cells."""
    balls: list[Ball] = []
    for lev in range(target.level, coarsest_level - 1, -1):
        balls.extend(target.ancestors(lev).circumscribed_balls())
    return balls


@dataclass(frozen=True)
class FrostmanResult:
    """Output of the dyadic capping sweep.

    ``level_ratio[k]`` is max nu(Q)/h(Q) over the level-k cells (<= 1 by
    construction), ``ball_slack`` the largest nu(B)/h(B) over circumscribed
    balls of the swept cells, and ``mass_ratio`` is content/nu(F) for the
    dyadic candidate family (the constant c with nu(F) >= content/c).
    """

    measure: DiscreteMeasure
    levels: tuple[int, ...]
    level_ratio: dict
    ball_slack: float
    content: float
    mass_ratio: float


def frostman_construct(target: DyadicCellSet, gauge: GaugeSpec, max_level: int | None = None) -> DiscreteMeasure:
    """The capped measure only; see ``frostman_report`` for the certificate."""
    return frostman_report(target, gauge, max_level).measure


def frostman_report(
    target: DyadicCellSet, gauge: GaugeSpec, max_level: int | None = None
) -> FrostmanResult:
    """Top-down mass capping over dyadic levels.

    Every finest cell starts with mass h(circumscribed ball); moving to
    coarser levels, any cell whose mass exceeds its cap is rescaled onto the
    cap.  ``max_level`` is the number of coarser levels swept above
    ``target.level``; by default the sweep stops once one cell holds the
    whole target.
    """
    L = target.level
    idx = target.index_array()
    if idx.shape[0] == 0:
        return FrostmanResult(DiscreteMeasure.empty(), (L,), {L: 0.0}, 0.0, 0.0, math.inf)
    if max_level is None:
        max_level = 0
        while len(target.ancestors(L - max_level)) > 1:
            max_level += 1
    levels = tuple(range(L, L - max_level - 1, -1))

    def caps_at(level: int, cells: np.ndarray) -> np.ndarray:
        s = 2.0**-level
        c = (cells[:, 0] + 0.5 + 1j * (cells[:, 1] + 0.5)) * s
        return np.asarray(gauge.h(c, np.full(c.shape, s / math.sqrt(2))), dtype=float)

    mass = caps_at(L, idx).copy()
    for lev in levels[1:]:
        parents = idx >> (L - lev)
        uniq, inv = np.unique(parents, axis=0, return_inverse=True)
        inv = inv.ravel()
        sums = np.bincount(inv, weights=mass, minlength=len(uniq))
        cap = caps_at(lev, uniq)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(sums > cap, cap / sums, 1.0)
        mass = mass * factor[inv]

    level_ratio = {}
    for lev in levels:
        parents = idx >> (L - lev)
        uniq, inv = np.unique(parents, axis=0, return_inverse=True)
        sums = np.bincount(inv.ravel(), weights=mass, minlength=len(uniq))
        cap = caps_at(lev, uniq)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(cap > 0, sums / cap, np.where(sums > 0, np.inf, 0.0))
        level_ratio[lev] = float(ratio.max())

    nu = DiscreteMeasure.from_atoms(target.centers(), mass)
    slack = 0.0
    balls: list[Ball] = []
    for lev in levels:
        balls.extend(target.ancestors(lev).circumscribed_balls())
    if len(nu):
        for b in balls:
            hb = float(gauge.h(np.array([b.center]), np.array([b.radius]))[0])
            nb = measure_of_ball(nu, b)
            if nb > 0:
                slack = max(slack, nb / hb if hb > 0 else math.inf)
    content = content_upper(target, gauge, balls)
    total = nu.total if len(nu) else 0.0
    mass_ratio = content / total if total > 0 else math.inf
    return FrostmanResult(nu, levels, level_ratio, slack, content, mass_ratio)


@dataclass(frozen=True)
class LemmaCheck:
    ok: bool
    mass: float
    content: float
    cover: tuple[Ball, ...]

    def __bool__(self) -> bool:
        return self.ok


def check_lemma_Mmu(
    mu: DiscreteMeasure, a: float, t: float, target_cells: DyadicCellSet, candidates: Sequence[Ball]
) -> LemmaCheck:
    """Check mu(A) <= 2 * content of A for the smoothed gauge built from mu itself."""
    from .gauge import measure_gauge

    if not (0 < t < 2 and a > 0):
        raise ValueError("need 0 < t < 2 and a > 0")
    mass = float(mu.masses[target_cells.contains_points(mu.points)].sum()) if len(mu) else 0.0
    cover = best_cover(target_cells, measure_gauge(mu, a, t), candidates)
    ok = mass <= 2 * cover.value * (1 + 1e-12)
    return LemmaCheck(ok, mass, cover.value, cover.balls)
