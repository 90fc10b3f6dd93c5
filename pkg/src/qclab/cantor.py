"""Parametric Cantor construction in the source and target planes.

Each generation replaces a generating disk by ``M_n`` protecting disks of
normalised radius ``R_n`` (the same placement in source and target), and
each protecting disk holds a concentric generating disk of normalised
radius ``sigma_n**K * R_n`` in the source and ``sigma_n * R_n`` in the
target.  The map between the two is a similarity on the parts of a
generating disk outside its children and the radial stretch
``u -> u**(1/K)`` on every protecting annulus.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy
from scipy.special import zeta

from .exponents import conjugate, t_prime
from .gauge import cantor_gauge, check_G2, measure_gauge
from .measures import DiscreteMeasure
from .potentials import RieszIndex

__all__ = [
    "PackingInfeasible",
    "CantorParams",
    "DiskAddress",
    "CantorMap",
    "derive_sigma",
    "sharp_multipliers",
    "source_radius",
    "target_radius",
    "block_mass",
    "dart_throw",
    "place_disks",
    "discretize",
    "tree_csv",
    "wolff_on_cantor",
    "SharpnessIndices",
    "SharpnessResult",
    "sharpness_harness",
    "sharp_radius",
    "Lemtec5Report",
    "check_lemtec5",
]

SIGMA_MAX = 0.01
R_MAX = 0.01
_TOL = 1e-12


class PackingInfeasible(ValueError):
    """The requested disks cannot be placed disjointly inside the unit disk."""


def derive_sigma(R: float, t: float, K: float, d: float = 1.0) -> float:
    """sigma = R**((2-t)/(tK)) * d, rejected above 1/100."""
    if not 0 < R <= R_MAX * (1 + _TOL):
        raise ValueError(f"R must lie in (0, 1/100], got {R}")
    if not 1 - _TOL <= d <= 2 + _TOL:
        raise ValueError(f"d must lie in [1, 2], got {d}")
    sigma = R ** ((2 - t) / (t * K)) * d
    if sigma > SIGMA_MAX * (1 + _TOL):
        raise ValueError(f"sigma = {sigma:.6g} exceeds 1/100")
    return sigma


def sharp_multipliers(depth: int, delta: float) -> np.ndarray:
    """d_j = ((j+1)/j)**delta for j = 1..depth."""
    j = np.arange(1, depth + 1, dtype=float)
    return np.exp(delta * np.log1p(1 / j))


def sharp_radius(t: float, K: float, d_max: float = 2.0) -> float:
    """Largest R with R**((2-t)/(tK)) * d_max <= 1/100, capped at 1/100."""
    return min(R_MAX, (SIGMA_MAX / d_max) ** (t * K / (2 - t)))


@dataclass(frozen=True, eq=False)
class CantorParams:
    """Per-level construction data.

    ``fill_deficit[n]`` is the fraction of the parent's area left unfilled at
    level n+1; when ``disks_per_level`` is given it is derived as
    1 - M * R**2 (and checked against any explicit value).
    """

    K: float
    t: float
    R: np.ndarray
    d: np.ndarray
    disks_per_level: tuple | None = None
    fill_deficit: np.ndarray | None = None
    d_mode: str = "custom"
    delta: float | None = None

    def __post_init__(self):
        if not self.K >= 1:
            raise ValueError("K must be >= 1")
        if not 0 < self.t < 2:
            raise ValueError("t must lie in (0, 2)")
        R = np.atleast_1d(np.asarray(self.R, dtype=float)).copy()
        d = np.atleast_1d(np.asarray(self.d, dtype=float)).copy()
        if R.ndim != 1 or R.size < 1 or d.shape != R.shape:
            raise ValueError("R and d must be 1-d arrays of the same positive length")
        if np.any(~(R > 0)) or np.any(R > R_MAX * (1 + _TOL)):
            raise ValueError("every R must lie in (0, 1/100]")
        if np.any(d < 1 - _TOL) or np.any(d > 2 + _TOL):
            raise ValueError("every d must lie in [1, 2]")
        sigma = R ** ((2 - self.t) / (self.t * self.K)) * d
        if np.any(sigma > SIGMA_MAX * (1 + _TOL)):
            n = int(np.argmax(sigma > SIGMA_MAX * (1 + _TOL)))
            raise ValueError(f"sigma at level {n + 1} is {sigma[n]:.6g} > 1/100")
        eps = None if self.fill_deficit is None else np.broadcast_to(
            np.asarray(self.fill_deficit, dtype=float), R.shape).copy()
        M = self.disks_per_level
        if M is not None:
            M = tuple(int(m) for m in np.broadcast_to(np.asarray(M), R.shape))
            if any(m < 1 for m in M):
                raise ValueError("disks_per_level must be >= 1")
            derived = 1 - np.array(M, dtype=float) * R**2
            if np.any(derived < -_TOL):
                raise ValueError("M * R**2 exceeds the parent area at some level")
            derived = np.clip(derived, 0, None)
            if eps is not None and not np.allclose(eps, derived, rtol=0, atol=1e-12):
                raise ValueError("fill_deficit inconsistent with disks_per_level")
            eps = derived
        if eps is None:
            eps = np.zeros_like(R)
        if np.any(eps < 0) or np.any(eps >= 1):
            raise ValueError("fill_deficit must lie in [0, 1)")
        for arr in (R, d, eps):
            arr.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "fill_deficit", eps)
        object.__setattr__(self, "disks_per_level", M)

    @classmethod
    def uniform(
        cls,
        K: float,
        t: float,
        depth: int,
        R: float | Sequence[float],
        d_mode: str = "unit",
        delta: float | None = None,
        disks_per_level=None,
        fill_deficit=None,
    ) -> CantorParams:
        """``d_mode`` 'unit' gives d = 1; 'sharp' gives d_j = ((j+1)/j)**delta."""
        Rs = np.broadcast_to(np.asarray(R, dtype=float), (depth,))
        if d_mode == "unit":
            d = np.ones(depth)
        elif d_mode == "sharp":
            if delta is None or not delta > 0:
                raise ValueError("sharp mode needs delta > 0")
            d = sharp_multipliers(depth, delta)
        else:
            raise ValueError(f"unknown d_mode {d_mode!r}")
        return cls(K, t, Rs, d, disks_per_level, fill_deficit, d_mode, delta)

    @classmethod
    def from_json(cls, text: str | dict) -> CantorParams:
        c = json.loads(text) if isinstance(text, str) else dict(text)
        depth = int(c["depth"])
        R = c["R"]
        if isinstance(R, list) and len(R) not in (1, depth):
            raise ValueError("R must have one entry or one per level")
        R = R[0] if isinstance(R, list) and len(R) == 1 else R
        return cls.uniform(
            c["K"], c["t"], depth, R, c.get("d_mode", "unit"), c.get("delta"),
            c.get("disks_per_level"), c.get("fill_deficit"),
        )

    def to_json(self) -> str:
        return json.dumps({
            "K": self.K, "t": self.t, "depth": self.depth, "R": self.R.tolist(),
            "d_mode": self.d_mode, "delta": self.delta,
            "disks_per_level": None if self.disks_per_level is None else list(self.disks_per_level),
            "fill_deficit": self.fill_deficit.tolist(),
        })

    @property
    def depth(self) -> int:
        return self.R.size

    @cached_property
    def sigma(self) -> np.ndarray:
        return self.R ** ((2 - self.t) / (self.t * self.K)) * self.d

    @property
    def t_prime(self) -> float:
        return t_prime(self.t, self.K)

    @cached_property
    def source_factor(self) -> np.ndarray:
        """sigma_n**K * R_n."""
        return self.sigma**self.K * self.R

    @cached_property
    def target_factor(self) -> np.ndarray:
        return self.sigma * self.R

    @cached_property
    def _log_deficit_tail(self) -> np.ndarray:
        """log prod_{n > N} (1 - eps_n) for N = 0..depth."""
        lg = np.log1p(-self.fill_deficit)
        tail = np.concatenate([np.cumsum(lg[::-1])[::-1], [0.0]])
        return tail

    def log_source_radius(self, N: int) -> float:
        return float(np.sum(np.log(self.source_factor[:N])))

    def log_target_radius(self, N: int) -> float:
        return float(np.sum(np.log(self.target_factor[:N])))

    def log_block_mass(self, N: int) -> float:
        return float(2 * np.sum(np.log(self.R[:N])) + self._log_deficit_tail[N])

    def check_address(self, addr) -> DiskAddress:
        addr = addr if isinstance(addr, DiskAddress) else DiskAddress(tuple(addr))
        N = len(addr.positions)
        if N > self.depth:
            raise ValueError(f"address of length {N} exceeds depth {self.depth}")
        if any(j != 0 for j in addr.js):
            raise ValueError("only one radius class per level is built (all js must be 0)")
        if any(i < 0 for i in addr.positions):
            raise ValueError("position indices are nonnegative")
        if self.disks_per_level is not None:
            for n, i in enumerate(addr.positions):
                if i >= self.disks_per_level[n]:
                    raise ValueError(f"position {i} at level {n + 1} exceeds {self.disks_per_level[n]} disks")
        return addr

    def total_mass(self) -> float:
        return float(np.exp(self._log_deficit_tail[0]))


@dataclass(frozen=True)
class DiskAddress:
    positions: tuple
    js: tuple | None = None

    def __post_init__(self):
        pos = tuple(int(i) for i in self.positions)
        js = tuple(0 for _ in pos) if self.js is None else tuple(int(j) for j in self.js)
        if len(js) != len(pos):
            raise ValueError("js and positions must have equal length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "js", js)

    def __len__(self) -> int:
        return len(self.positions)

    def label(self) -> str:
        return ".".join(map(str, self.positions)) or "root"


def source_radius(params: CantorParams, addr) -> float:
    """prod_{n<=N} sigma_n**K R_n."""
    N = len(params.check_address(addr))
    return float(np.prod(params.source_factor[:N]))


def target_radius(params: CantorParams, addr) -> float:
    """prod_{n<=N} sigma_n R_n."""
    N = len(params.check_address(addr))
    return float(np.prod(params.target_factor[:N]))


def block_mass(params: CantorParams, addr) -> float:
    """prod_{n<=N} R_n**2 times the deficit renormalisation prod_{n>N} (1 - eps_n)."""
    N = len(params.check_address(addr))
    return float(np.prod(params.R[:N] ** 2) * np.exp(params._log_deficit_tail[N]))


def dart_throw(count: int, radius: float, rng: np.random.Generator, max_attempts: int = 100_000) -> np.ndarray:
    """Centres of ``count`` disjoint disks of ``radius`` inside the closed unit disk."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 < radius <= 1:
        raise PackingInfeasible("radius must lie in (0, 1]")
    if count == 1:
        return np.zeros(1, dtype=complex)
    if count * radius**2 > 1 or radius > 0.5:
        raise PackingInfeasible(f"{count} disks of radius {radius} cannot fit in the unit disk")
    placed: list[complex] = []
    attempts = 0
    reach = 1 - radius
    while len(placed) < count:
        attempts += 1
        if attempts > max_attempts:
            raise PackingInfeasible(f"placed {len(placed)} of {count} disks in {max_attempts} attempts")
        z = complex(reach * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform()))
        if all(abs(z - w) >= 2 * radius for w in placed):
            placed.append(z)
    return np.array(placed)


@dataclass(frozen=True, eq=False)
class CantorMap:
    """Placed construction; ``positions[n]`` are the normalised centres at level n+1."""

    params: CantorParams
    positions: tuple
    seed: int

    @property
    def depth(self) -> int:
        return self.params.depth

    def centers(self, addr) -> tuple[complex, complex]:
        """(source centre, target centre) of the generating disk at ``addr``."""
        addr = self.params.check_address(addr)
        p = self.params
        cs = ct = 0j
        rs = rt = 1.0
        for n, i in enumerate(addr.positions):
            z = self.positions[n][i]
            cs, ct = cs + rs * z, ct + rt * z
            rs, rt = rs * p.source_factor[n], rt * p.target_factor[n]
        return cs, ct

    def _locate(self, z: complex):
        """Walk down the generating disks containing z.

        Returns (level, cs, ct, rs, rt, annulus) where annulus is None when z
        ends inside the generating disk at ``level`` (or outside all its
        children), else (child centre source, child centre target, p, R_n).
        """
        p = self.params
        cs = ct = 0j
        rs = rt = 1.0
        if abs(z) > 1:
            return 0, cs, ct, rs, rt, None, False
        for n in range(self.depth):
            w = (z - cs) / rs
            pos = self.positions[n]
            dist = np.abs(w - pos)
            i = int(np.argmin(dist))
            if dist[i] > p.R[n]:
                return n, cs, ct, rs, rt, None, False
            ccs, cct = cs + rs * pos[i], ct + rt * pos[i]
            s_child = rs * p.source_factor[n]
            if abs(z - ccs) > s_child:
                return n, cs, ct, rs, rt, (ccs, cct, rs * p.R[n], rt * p.R[n]), False
            cs, ct, rs, rt = ccs, cct, s_child, rt * p.target_factor[n]
        return self.depth, cs, ct, rs, rt, None, True

    def map_point(self, z) -> complex:
        z = complex(z)
        if abs(z) > 1:
            return z
        level, cs, ct, rs, rt, ann, _ = self._locate(z)
        if ann is not None:
            ccs, cct, ps, pt = ann
            u = abs(z - ccs)
            direction = (z - ccs) / u
            return cct + direction * pt * (u / ps) ** (1 / self.params.K)
        return ct + rt * (z - cs) / rs

    def image_ball_radius(self, center, radius: float, n_boundary: int = 128) -> tuple[float, float]:
        """(r_lo, r_hi): min and max of |phi(y) - phi(x)| over the boundary circle of B(x, r)."""
        x = complex(center)
        if not radius > 0:
            raise ValueError("radius must be positive")
        if radius < 1e-11 * max(1.0, abs(x)):
            raise ValueError("ball below floating-point resolution of absolute coordinates")
        level, cs, ct, rs, rt, ann, deepest = self._locate(x)
        if deepest and radius < rs * (1 - 1e-9) and abs(x - cs) + radius <= rs:
            raise ValueError("ball lies inside a generating disk of the deepest built generation")
        fx = self.map_point(x)
        theta = 2 * math.pi * np.arange(n_boundary) / n_boundary
        ys = x + radius * np.exp(1j * theta)
        d = np.array([abs(self.map_point(y) - fx) for y in ys])
        return float(d.min()), float(d.max())


def place_disks(params: CantorParams, seed: int) -> CantorMap:
    """Seeded placement of each level's protecting disks inside the unit disk."""
    if params.disks_per_level is None:
        raise ValueError("placement needs disks_per_level")
    rng = np.random.default_rng(seed)
    pos = tuple(dart_throw(m, float(r), rng) for m, r in zip(params.disks_per_level, params.R))
    for arr in pos:
        arr.flags.writeable = False
    return CantorMap(params, pos, seed)


def _addresses(params: CantorParams, N: int):
    if params.disks_per_level is None:
        raise ValueError("enumerating addresses needs disks_per_level")
    return itertools.product(*(range(m) for m in params.disks_per_level[:N]))


def discretize(cmap: CantorMap, N: int) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """(mu, nu): one atom per generation-N disk, at target and source centres, equal masses."""
    p = cmap.params
    if not 0 <= N <= p.depth:
        raise ValueError("N must lie in [0, depth]")
    if N and float(np.prod(p.source_factor[:N])) < 1e-13:
        warnings.warn("generation radii below double precision; nearby atoms may coincide", RuntimeWarning,
                      stacklevel=2)
    src, tgt = [], []
    for a in _addresses(p, N):
        cs, ct = cmap.centers(DiskAddress(a))
        src.append(cs)
        tgt.append(ct)
    m = block_mass(p, DiskAddress((0,) * N))
    masses = np.full(len(src), m)
    return DiscreteMeasure(np.array(tgt), masses), DiscreteMeasure(np.array(src), masses)


def tree_csv(cmap: CantorMap, N: int | None = None) -> str:
    """Rows address, source_radius, target_radius, mass, center_x, center_y (source centres)."""
    p = cmap.params
    N = p.depth if N is None else N
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["address", "source_radius", "target_radius", "mass", "center_x", "center_y"])
    for n in range(0, N + 1):
        for a in _addresses(p, n):
            addr = DiskAddress(a)
            cs, _ = cmap.centers(addr)
            w.writerow([addr.label(), repr(source_radius(p, addr)), repr(target_radius(p, addr)),
                        repr(block_mass(p, addr)), repr(float(cs.real)), repr(float(cs.imag))])
    return buf.getvalue()


def wolff_on_cantor(params: CantorParams, idx: RieszIndex, side: str, addr_path=None, N_max: int | None = None
                    ) -> np.ndarray:
    """Partial sums S_N = sum_{n<=N} (mass_n / radius_n**(2 - alpha p))**(p'-1), N = 1..N_max.

    Evaluated in log space from per-level increments, so deep constructions
    (N_max ~ 1e6) stay accurate.
    """
    if side not in ("source", "target"):
        raise ValueError("side must be 'source' or 'target'")
    N_max = params.depth if N_max is None else N_max
    if addr_path is not None:
        addr = params.check_address(addr_path)
        if len(addr) != N_max:
            raise ValueError("addr_path length must equal N_max")
    if not 1 <= N_max <= params.depth:
        raise ValueError("N_max must lie in [1, depth]")
    fac = params.source_factor if side == "source" else params.target_factor
    gap = idx.dim_gap
    # log of R_n**2 / factor_n**gap, accumulated level by level
    inc = 2 * np.log(params.R[:N_max]) - gap * np.log(fac[:N_max])
    log_terms = (idx.p_prime - 1) * (np.cumsum(inc) + params._log_deficit_tail[1 : N_max + 1])
    return np.cumsum(np.exp(log_terms))


def _exact(x):
    if isinstance(x, sympy.Basic):
        return x
    if isinstance(x, Fraction):
        return sympy.Rational(x.numerator, x.denominator)
    if isinstance(x, int):
        return sympy.Integer(x)
    return sympy.Rational(repr(float(x)))


@dataclass(frozen=True)
class SharpnessIndices:
    """beta q = 2 - t' and alpha_t p_t = 2 - t; p is the matched source index."""

    beta: sympy.Expr
    q: sympy.Expr
    alpha_t: sympy.Expr
    p_t: sympy.Expr
    delta: sympy.Expr
    t: sympy.Expr
    K: sympy.Expr
    t_prime: sympy.Expr
    p: sympy.Expr


@dataclass(frozen=True)
class SharpnessResult:
    indices: SharpnessIndices
    target_exponent: sympy.Expr
    source_exponent: sympy.Expr
    verdicts: dict
    numeric: dict


def sharpness_harness(t, K, q, p_tilde, N: int = 10**6, numeric: bool = True) -> SharpnessResult:
    """Tune d_j = ((j+1)/j)**delta so the target potential converges and the source one diverges.

    The symbolic exponent comparison decides the verdicts; the numeric block
    records the partial-sum evidence: the target remainder against its
    zeta-tail bound and the log-slope of the source sums over N in [1e3, N].
    """
    t, K, q, p_tilde = map(_exact, (t, K, q, p_tilde))
    tp = sympy.nsimplify(2 * K * t / (2 + (K - 1) * t))
    p = 1 + (K * t / tp) * (q - 1)
    if not p_tilde > p:
        raise ValueError(f"p_tilde = {p_tilde} must exceed p = {p}")
    delta = 1 / (t * K * (conjugate(p_tilde) - 1))
    idx = SharpnessIndices(
        beta=(2 - tp) / q, q=q, alpha_t=(2 - t) / p_tilde, p_t=p_tilde, delta=sympy.nsimplify(delta),
        t=t, K=K, t_prime=tp, p=sympy.nsimplify(p),
    )
    target_exp = sympy.nsimplify(tp * (conjugate(q) - 1) * delta)
    source_exp = sympy.nsimplify(t * K * (conjugate(p_tilde) - 1) * delta)
    verdicts = {
        "target": "converges" if bool(target_exp > 1) else "diverges",
        "source": "converges" if bool(source_exp > 1) else "diverges",
    }
    info: dict = {}
    if numeric:
        R = sharp_radius(float(t), float(K), 2.0 ** float(delta))
        params = CantorParams.uniform(float(K), float(t), N, R, "sharp", float(delta))
        tgt = wolff_on_cantor(params, RieszIndex(float(idx.beta), float(q)), "target")
        src = wolff_on_cantor(params, RieszIndex(float(idx.alpha_t), float(p_tilde)), "source")
        s = float(target_exp)
        remainder = float(zeta(s) - 1 - tgt[-1])
        bound = (N + 1) ** (1 - s) / (s - 1)
        Ns = np.unique(np.round(np.logspace(3, math.log10(N), 61)).astype(int))
        slope = float(np.polyfit(np.log(Ns), src[Ns - 1], 1)[0])
        info = {"N": N, "R": R, "target_partial": float(tgt[-1]), "target_remainder": remainder,
                "target_tail_bound": bound, "target_remainder_ratio": remainder / bound,
                "source_partial": float(src[-1]), "source_log_slope": slope}
    return SharpnessResult(idx, target_exp, source_exp, verdicts, info)


@dataclass(frozen=True)
class Lemtec5Report:
    C: float
    ratios: np.ndarray
    tail_rel_max: float
    C1_effective: float
    g2_constant: float
    g2_finite: bool


def check_lemtec5(cmap: CantorMap, base_mu: DiscreteMeasure, a: float, t: float, d: float, b: float,
                  probes: Sequence[tuple], j_max: int = 40) -> Lemtec5Report:
    """sum_j eps(phi(B(x, 2**j r)))**d / 2**(b j) against eps(phi(B(x, r)))**d.

    phi(B) is replaced by the ball about phi(x) with the outer bracket
    radius.  ``C1_effective`` = 1/C2 where 2**C2 is the largest measured
    image expansion over one octave.
    """
    if not (d > 0 and b > 0 and a > 0):
        raise ValueError("a, b and d must be positive")
    g = measure_gauge(base_mu, a, t)
    total = base_mu.total if len(base_mu) else 0.0
    ratios, tails, expansions = [], [], []
    j = np.arange(j_max + 1)
    for x, r in probes:
        x = complex(x)
        fx = cmap.map_point(x)
        rad = np.array([cmap.image_ball_radius(x, r * 2.0**k)[1] for k in j])
        expansions.append(float(np.max(np.log2(rad[1:] / rad[:-1]))))
        e = np.asarray(g.eps(np.full(rad.shape, fx), rad)) ** d
        head = float((e * 2.0 ** (-b * j)).sum())
        ratios.append(head / e[0] if e[0] > 0 else (math.inf if head > 0 else 1.0))
        # beyond the unit disk phi is the identity, so the image radius is >= 2**k r - 2
        rho = r * 2.0 ** (j_max + 1)
        rate = 2.0 ** (-(t * d + b))
        tail = total**d * max(rho - 2, rho / 2) ** (-t * d) * 2.0 ** (-b * (j_max + 1)) / (1 - rate)
        tails.append(tail / head if head > 0 else 0.0)
    tail_max = max(tails)
    if tail_max > 0.01:
        warnings.warn(f"truncation tail up to {tail_max:.3g} of the head sum", RuntimeWarning, stacklevel=2)
    C2 = max(expansions)
    comp = cantor_gauge(g, cmap, d, t)
    rep = check_G2(comp, list(probes), k_max=min(j_max, 30))
    return Lemtec5Report(max(ratios), np.array(ratios), tail_max, 1 / C2 if C2 > 0 else math.inf,
                         rep.estimated_constant, not rep.unbounded and math.isfinite(rep.estimated_constant))
