"""Dyadic Wolff potentials, capacity lower bounds and gauge admissibility sums.

All capacity values are reported with Wolff's comparability constant set to 1.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

from .gauge import GaugeSpec, measure_gauge
from .measures import Ball, DiscreteMeasure, DyadicCellSet, content_upper

if TYPE_CHECKING:
    from .cantor import CantorMap

__all__ = [
    "RieszIndex",
    "WolffOptions",
    "WolffTruncationWarning",
    "wolff_potential",
    "wolff_tail_bound",
    "wolff_sweep_csv",
    "default_probes",
    "CapacityEstimate",
    "capacity_lower",
    "gauge_normalization",
    "GaugeContent",
    "capacity_via_contents",
    "LemcgReport",
    "check_lemcg",
    "LemdensPreconditionError",
    "LemdensReport",
    "check_lemdens",
]

LN2 = math.log(2.0)
_CHUNK = 2_000_000


class WolffTruncationWarning(RuntimeWarning):
    """Mass sits inside the smallest ball of the window; the sum is cut from below."""


@dataclass(frozen=True)
class RieszIndex:
    alpha: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not 0 < self.alpha * self.p < 2:
            raise ValueError("need 0 < alpha*p < 2")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1)

    @property
    def dim_gap(self) -> float:
        """2 - alpha*p, the dimension t matched to this index."""
        return 2 - self.alpha * self.p


@dataclass(frozen=True)
class WolffOptions:
    k_min: int
    k_max: int

    def __post_init__(self):
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be < k_max")

    @classmethod
    def default_for(cls, mu: DiscreteMeasure) -> WolffOptions:
        """[atom resolution / 4, 4 * diameter] rounded outward to powers of two."""
        sep = mu.min_separation() if len(mu) else math.inf
        diam = mu.diameter() if len(mu) else 0.0
        k_min = math.floor(math.log2(sep / 4)) if math.isfinite(sep) else -20
        k_max = math.ceil(math.log2(4 * diam)) if diam > 0 else 2
        if k_max <= k_min:
            k_max = k_min + 1
        return cls(k_min, k_max)


def _ball_masses(mu: DiscreteMeasure, x: np.ndarray, opts: WolffOptions) -> np.ndarray:
    """mu(B(x, 2**k)) for k in the window, shape (len(x), k_max-k_min+1)."""
    nk = opts.k_max - opts.k_min + 1
    out = np.zeros((x.size, nk))
    if len(mu) == 0:
        return out
    step = max(1, _CHUNK // len(mu))
    for lo in range(0, x.size, step):
        xx = x[lo : lo + step]
        dist = np.abs(xx[:, None] - mu.points[None, :])
        with np.errstate(divide="ignore"):
            k0 = np.ceil(np.log2(dist / (1 + 1e-12)))
        # atom enters the closed ball B(x, 2**k) for every k >= k0
        k0 = np.clip(k0, opts.k_min, opts.k_max + 1).astype(np.int64) - opts.k_min
        rows = np.repeat(np.arange(xx.size), len(mu))
        binned = np.zeros((xx.size, nk + 1))
        np.add.at(binned, (rows, k0.ravel()), np.broadcast_to(mu.masses, dist.shape).ravel())
        out[lo : lo + step] = np.cumsum(binned[:, :nk], axis=1)
    return out


def wolff_potential(mu: DiscreteMeasure, idx: RieszIndex, x, opts: WolffOptions | None = None, warn: bool = True):
    """Dyadic sum of (mu(B(x, 2**k)) / 2**(k(2-alpha p)))**(p'-1) over the window.

    Scalar ``x`` gives a float; array-like ``x`` gives an array.
    """
    opts = opts or WolffOptions.default_for(mu)
    xa = np.atleast_1d(np.asarray(x, dtype=complex)).ravel()
    M = _ball_masses(mu, xa, opts)
    if warn and np.any(M[:, 0] > 0):
        warnings.warn(
            f"mass inside B(x, 2**{opts.k_min}) at {int((M[:, 0] > 0).sum())} probe(s); potential truncated from below",
            WolffTruncationWarning,
            stacklevel=2,
        )
    k = np.arange(opts.k_min, opts.k_max + 1)
    terms = (M * 2.0 ** (-k * idx.dim_gap)[None, :]) ** (idx.p_prime - 1)
    vals = terms.sum(axis=1)
    return float(vals[0]) if np.ndim(x) == 0 else vals.reshape(np.shape(x))


def wolff_tail_bound(mu: DiscreteMeasure, idx: RieszIndex, opts: WolffOptions) -> float:
    """Bound on the omitted terms k > k_max, using mu(B) <= mu(C)."""
    total = mu.total if len(mu) else 0.0
    e = idx.dim_gap * (idx.p_prime - 1)
    return total ** (idx.p_prime - 1) * 2.0 ** (-(opts.k_max + 1) * e) / (1 - 2.0**-e)


def wolff_sweep_csv(mu: DiscreteMeasure, idx: RieszIndex, probes, opts: WolffOptions) -> str:
    """CSV rows probe_x, probe_y, k_min, k_max, value, tail_bound."""
    probes = np.atleast_1d(np.asarray(probes, dtype=complex))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WolffTruncationWarning)
        vals = wolff_potential(mu, idx, probes, opts)
    tail = wolff_tail_bound(mu, idx, opts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["probe_x", "probe_y", "k_min", "k_max", "value", "tail_bound"])
    for z, v in zip(probes, vals):
        w.writerow([repr(float(z.real)), repr(float(z.imag)), opts.k_min, opts.k_max, repr(float(v)), repr(tail)])
    return buf.getvalue()


def default_probes(mu: DiscreteMeasure) -> np.ndarray:
    """Atoms plus midpoints to each atom's nearest neighbour."""
    pts = mu.points
    if len(pts) < 2:
        return pts.copy()
    d = np.abs(pts[:, None] - pts[None, :])
    d[np.diag_indices_from(d)] = np.inf
    nn = pts[np.argmin(d, axis=1)]
    return np.concatenate([pts, (pts + nn) / 2])


@dataclass(frozen=True)
class CapacityEstimate:
    """lambda * mu(C) with lambda = W_sup**(-1/(p'-1)); value 0 when diverged."""

    value: float
    w_sup: float
    scale: float
    diverged: bool

    def __float__(self) -> float:
        return self.value


def capacity_lower(
    mu: DiscreteMeasure, idx: RieszIndex, probe_points=None, opts: WolffOptions | None = None
) -> CapacityEstimate:
    """Rescale mu so its sup potential over the probes is 1 and return the rescaled mass."""
    if len(mu) == 0:
        return CapacityEstimate(0.0, 0.0, math.inf, False)
    opts = opts or WolffOptions.default_for(mu)
    probes = default_probes(mu) if probe_points is None else np.atleast_1d(np.asarray(probe_points, dtype=complex))
    if probes.size == 0:
        raise ValueError("need at least one probe point")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WolffTruncationWarning)
        w = np.asarray(wolff_potential(mu, idx, probes, opts))
    w_sup = float(w.max())
    if not math.isfinite(w_sup):
        return CapacityEstimate(0.0, w_sup, 0.0, True)
    if w_sup == 0:
        return CapacityEstimate(math.inf, 0.0, math.inf, False)
    lam = w_sup ** (-1 / (idx.p_prime - 1))
    return CapacityEstimate(lam * mu.total, w_sup, lam, False)


def gauge_normalization(spec: GaugeSpec, p: float, x, opts: WolffOptions) -> float:
    """ln 2 * sum_k eps(x, 2**k)**(p'-1), the dyadic form of the admissibility integral."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    pp = p / (p - 1)
    r = 2.0 ** np.arange(opts.k_min, opts.k_max + 1)
    e = np.asarray(spec.eps(np.full(r.shape, complex(x)), r), dtype=float)
    return LN2 * math.fsum((e ** (pp - 1)).tolist())


@dataclass(frozen=True)
class GaugeContent:
    content: float
    normalization: float
    admissible: bool


def capacity_via_contents(
    target: DyadicCellSet,
    idx: RieszIndex,
    gauges: Sequence[GaugeSpec],
    candidates: Sequence[Ball],
    probe_points=None,
    opts: WolffOptions | None = None,
) -> tuple[float, list[GaugeContent]]:
    """Max content over the gauges whose admissibility sum is <= 1 at every probe."""
    opts = opts or WolffOptions(-30, 30)
    probes = target.centers() if probe_points is None else np.atleast_1d(np.asarray(probe_points, dtype=complex))
    best = 0.0
    per: list[GaugeContent] = []
    for g in gauges:
        if abs(g.t - idx.dim_gap) > 1e-12:
            raise ValueError(f"gauge dimension {g.t} differs from 2 - alpha*p = {idx.dim_gap}")
        norm = max((gauge_normalization(g, idx.p, z, opts) for z in probes), default=0.0)
        ok = norm <= 1 + 1e-12
        c = content_upper(target, g, candidates) if ok else math.nan
        per.append(GaugeContent(c, norm, ok))
        if ok:
            best = max(best, c)
    return best, per


class LemcgReport(NamedTuple):
    lhs: float
    rhs: float
    ratio: float


def check_lemcg(cmap: CantorMap, base: GaugeSpec, s: float, x, opts: WolffOptions) -> LemcgReport:
    """Compare ln2*sum eps0(phi(B(x, 2**k)))**s against ln2*sum eps0(phi(x), 2**k)**s.

    The image of B(x, r) is replaced by the ball about phi(x) whose radius is
    the map's outer bracket.  Radii below the built depth raise ValueError.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    fx = complex(cmap.map_point(complex(x)))
    ks = np.arange(opts.k_min, opts.k_max + 1)
    r = 2.0**ks
    r_img = np.array([cmap.image_ball_radius(complex(x), float(rr))[1] for rr in r])
    lhs = LN2 * math.fsum((np.asarray(base.eps(np.full(r.shape, fx), r_img)) ** s).tolist())
    rhs = LN2 * math.fsum((np.asarray(base.eps(np.full(r.shape, fx), r)) ** s).tolist())
    return LemcgReport(lhs, rhs, lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 1.0))


class LemdensPreconditionError(ValueError):
    def __init__(self, radii):
        self.radii = list(radii)
        super().__init__(f"mu(B(x,r))/r**s exceeds theta1 at {len(self.radii)} radii, e.g. {self.radii[:3]}")


@dataclass(frozen=True)
class LemdensReport:
    delta_prime: float
    theta2: float
    empirical_C: float
    bound_C: float


def check_lemdens(
    mu: DiscreteMeasure, s: float, a: float, theta1: float, delta: float, x, radii=None
) -> LemdensReport:
    """Density-to-smoothed-density transfer at one point.

    delta' solves delta'**a * mu(C) / delta**(s+a) = theta1.  ``theta2`` is the
    largest eps_{mu,a,s}(x, r) over the sampled r <= delta', ``empirical_C``
    is theta2/theta1 and ``bound_C = 2**(s+a) * 2 / (1 - 2**-a)`` the
    constant that falls out of the annular decomposition.
    """
    if not 0 < s <= 2:
        raise ValueError("s must lie in (0, 2]")
    if not (a > 0 and theta1 > 0 and delta > 0):
        raise ValueError("a, theta1 and delta must be positive")
    x = complex(x)
    bound_C = 2.0 ** (s + a) * 2 / (1 - 2.0**-a)
    if radii is None:
        radii = delta * 2.0 ** -np.linspace(0, 30, 121)
    radii = np.asarray(radii, dtype=float)
    total = mu.total if len(mu) else 0.0
    if total == 0:
        return LemdensReport(math.inf, 0.0, 0.0, bound_C)
    pre = radii[radii <= delta]
    dist = np.abs(mu.points - x)
    mass = np.array([mu.masses[dist <= r * (1 + 1e-12)].sum() for r in pre])
    bad = pre[mass / pre**s > theta1 * (1 + 1e-12)]
    if bad.size:
        raise LemdensPreconditionError(bad.tolist())
    dp = (theta1 * delta ** (s + a) / total) ** (1 / a)
    g = measure_gauge(mu, a, s) if s < 2 else None
    rr = dp * 2.0 ** -np.linspace(0, 30, 121)
    if g is not None:
        eps = np.asarray(g.eps(np.full(rr.shape, x), rr))
    else:
        u = np.abs(x - mu.points)[None, :] / rr[:, None]
        eps = (mu.masses[None, :] / (u ** (s + a) + 1)).sum(axis=1) / rr**s
    theta2 = float(eps.max())
    return LemdensReport(dp, theta2, theta2 / theta1, bound_C)
