"""Smoothed gauge functions h(x, r) = r**t * eps(x, r) and sampled class checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .measures import DiscreteMeasure

if TYPE_CHECKING:
    from .cantor import CantorMap

__all__ = [
    "PsiProfile",
    "psi",
    "GaugeSpec",
    "measure_gauge",
    "constant_gauge",
    "custom_gauge",
    "cantor_gauge",
    "h_gauge",
    "RegularityReport",
    "check_G1",
    "check_G2",
    "check_doubling",
    "borderline_growth",
    "default_g1_samples",
    "default_g2_samples",
    "lemtec1_bound",
]

# atoms x points per vectorised block
_CHUNK = 2_000_000


@dataclass(frozen=True)
class PsiProfile:
    a: float
    t: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("decay surplus a must be positive")
        if not 0 < self.t < 2:
            raise ValueError("t must lie in (0, 2)")

    def __call__(self, x):
        return psi(self, x)


def psi(profile: PsiProfile, x):
    """1 / (x**(t+a) + 1), elementwise."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("psi is defined for x >= 0")
    with np.errstate(over="ignore"):
        out = 1.0 / (x ** (profile.t + profile.a) + 1.0)
    return out if out.ndim else float(out)


def _measure_eps(mu: DiscreteMeasure, a: float, t: float) -> Callable:
    e = t + a
    pts, ms = mu.points, mu.masses

    def eps(z, r):
        z, r = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(r, dtype=float))
        shape = z.shape
        zf, rf = z.ravel(), r.ravel()
        out = np.zeros(zf.size)
        if pts.size == 0:
            return out.reshape(shape)
        step = max(1, _CHUNK // pts.size)
        for lo in range(0, zf.size, step):
            zz, rr = zf[lo : lo + step], rf[lo : lo + step]
            u = np.abs(zz[:, None] - pts[None, :]) / rr[:, None]
            with np.errstate(over="ignore"):
                h = (ms[None, :] / (u**e + 1.0)).sum(axis=1)
            out[lo : lo + step] = h / rr**t
        return out.reshape(shape)

    return eps


@dataclass(frozen=True, eq=False)
class GaugeSpec:
    """A gauge h(x, r) = r**t * epsilon(x, r).

    ``epsilon`` takes broadcastable arrays (complex centers, radii) and
    returns nonnegative values.  ``eps_upper(r)``, when known, bounds
    epsilon(., r) from above and is used for truncation-tail bounds.
    """

    t: float
    kind: str
    epsilon: Callable
    a: float | None = None
    d: float | None = None
    mu: DiscreteMeasure | None = None
    base: GaugeSpec | None = None
    cmap: CantorMap | None = None
    value: float | None = None
    eps_upper: Callable | None = None
    measure_ref: str | None = None

    def __post_init__(self):
        if not 0 < self.t < 2:
            raise ValueError("t must lie in (0, 2)")
        if self.kind not in ("measure", "cantor", "constant", "custom"):
            raise ValueError(f"unknown gauge kind {self.kind!r}")

    def eps(self, z, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(~(r_arr > 0)):
            raise ValueError("radius must be positive")
        out = np.asarray(self.epsilon(z, r_arr), dtype=float)
        return out if out.ndim else float(out)

    def h(self, z, r):
        r_arr = np.asarray(r, dtype=float)
        out = np.asarray(self.eps(z, r_arr)) * r_arr**self.t
        return out if out.ndim else float(out)

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "kind": self.kind, "a": self.a, "d": self.d, "measure_ref": self.measure_ref}
        )

    @classmethod
    def from_json(cls, text: str | dict, mu: DiscreteMeasure | None = None) -> GaugeSpec:
        """Rebuild a measure or constant gauge; the measure is loaded from ``measure_ref`` unless given."""
        data = json.loads(text) if isinstance(text, str) else dict(text)
        kind = data["kind"]
        if kind == "constant":
            return constant_gauge(data["t"])
        if kind == "measure":
            if mu is None:
                mu = DiscreteMeasure.from_csv(data["measure_ref"])
            g = measure_gauge(mu, data["a"], data["t"])
            return GaugeSpec(**{**g.__dict__, "measure_ref": data.get("measure_ref")})
        raise ValueError(f"gauge kind {kind!r} cannot be rebuilt from JSON alone")


def measure_gauge(mu: DiscreteMeasure, a: float, t: float) -> GaugeSpec:
    """eps(x, r) = r**-t * sum_atoms m * psi(|x - y| / r)."""
    PsiProfile(a, t)
    total = mu.total if len(mu) else 0.0
    return GaugeSpec(
        t=t, kind="measure", epsilon=_measure_eps(mu, a, t), a=a, mu=mu,
        eps_upper=lambda r: total * np.asarray(r, dtype=float) ** (-t),
    )


def constant_gauge(t: float, value: float = 1.0) -> GaugeSpec:
    if value < 0:
        raise ValueError("gauge values are nonnegative")

    def eps(z, r):
        z, r = np.broadcast_arrays(np.asarray(z), np.asarray(r, dtype=float))
        return np.full(z.shape, float(value))

    return GaugeSpec(t=t, kind="constant", epsilon=eps, value=float(value),
                     eps_upper=lambda r: np.full(np.shape(r), float(value)))


def custom_gauge(t: float, fn: Callable, eps_upper: Callable | None = None) -> GaugeSpec:
    """Wrap an arbitrary vectorised eps(z, r)."""

    def eps(z, r):
        z, r = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(r, dtype=float))
        return np.asarray(fn(z, r), dtype=float)

    return GaugeSpec(t=t, kind="custom", epsilon=eps, eps_upper=eps_upper)


def cantor_gauge(base: GaugeSpec, cmap: CantorMap, d: float, t: float) -> GaugeSpec:
    """eps(B) = base_eps(phi(B))**d, the image ball bracketed by the map's outer radius."""
    if not d > 0:
        raise ValueError("exponent d must be positive")

    def eps(z, r):
        z, r = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(r, dtype=float))
        zf, rf = z.ravel(), r.ravel()
        img = np.array([cmap.map_point(w) for w in zf], dtype=complex)
        rad = np.array([cmap.image_ball_radius(w, s)[1] for w, s in zip(zf, rf)])
        return (np.asarray(base.eps(img, rad), dtype=float) ** d).reshape(z.shape)

    return GaugeSpec(t=t, kind="cantor", epsilon=eps, d=d, base=base, cmap=cmap, a=base.a)


def h_gauge(spec: GaugeSpec, center, radius):
    if np.any(~(np.asarray(radius, dtype=float) > 0)):
        raise ValueError("radius must be positive")
    return spec.h(center, radius)


@dataclass(frozen=True)
class RegularityReport:
    cls: str
    estimated_constant: float
    samples_checked: int
    worst_ratio_location: tuple
    tail_bound: float = 0.0
    unbounded: bool = False
    ratios: np.ndarray | None = None

    def __post_init__(self):
        if self.cls not in ("G1", "G2"):
            raise ValueError("class must be G1 or G2")


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den with 0/0 = 1 and positive/0 = inf."""
    out = np.ones_like(num, dtype=float)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def check_G1(spec: GaugeSpec, sample_points: Sequence[tuple]) -> RegularityReport:
    """Smallest C2 >= 1 with eps(y, s)/eps(x, r) in [1/C2, C2] over the samples."""
    if len(sample_points) == 0:
        raise ValueError("need at least one sample")
    arr = np.array([[complex(x), r, complex(y), s] for x, r, y, s in sample_points], dtype=complex)
    x, r, y, s = arr[:, 0], arr[:, 1].real, arr[:, 2], arr[:, 3].real
    bad = (np.abs(x - y) > 2 * r * (1 + 1e-12)) | (s < r / 2 * (1 - 1e-12)) | (s > 2 * r * (1 + 1e-12))
    if bad.any():
        raise ValueError(f"{int(bad.sum())} sample(s) violate |x-y| <= 2r, r/2 <= s <= 2r; first at index {int(np.argmax(bad))}")
    ex = np.asarray(spec.eps(x, r), dtype=float)
    ey = np.asarray(spec.eps(y, s), dtype=float)
    ratio = np.maximum(_safe_ratio(ey, ex), _safe_ratio(ex, ey))
    k = int(np.argmax(ratio))
    C = max(1.0, float(ratio[k]))
    return RegularityReport("G1", C, len(x), (complex(x[k]), float(r[k])), unbounded=not math.isfinite(C), ratios=ratio)


def check_G2(spec: GaugeSpec, sample_points: Sequence[tuple], k_max: int) -> RegularityReport:
    """sup of sum_{k<=k_max} 2**(-k(2-t)) eps(x, 2**k r) / eps(x, r), with a tail bound.

    ``tail_bound`` bounds the omitted terms k > k_max relative to eps(x, r)
    (NaN when the gauge carries no upper bound); the geometric cap beyond
    the 60 extra octaves assumes eps_upper is nonincreasing in r.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    t = spec.t
    x = np.array([complex(p[0]) for p in sample_points])
    r = np.array([float(p[1]) for p in sample_points])
    ks = np.arange(k_max + 1)
    w = 2.0 ** (-ks * (2 - t))
    E = np.asarray(spec.eps(x[:, None], r[:, None] * 2.0**ks[None, :]), dtype=float)
    num = (E * w[None, :]).sum(axis=1)
    den = E[:, 0]
    ratio = _safe_ratio(num, den)
    unbounded = bool(np.any(np.isinf(ratio)))
    if spec.eps_upper is not None:
        # sum over k > k_max of 2**(-k(2-t)) eps_upper(2**k r), 60 extra octaves then geometric cap
        kk = np.arange(k_max + 1, k_max + 61)
        up = np.asarray(spec.eps_upper(r[:, None] * 2.0**kk[None, :]), dtype=float)
        tail = (up * 2.0 ** (-kk * (2 - t))[None, :]).sum(axis=1)
        last = up[:, -1] * 2.0 ** (-kk[-1] * (2 - t))
        q = 2.0 ** (-(2 - t))
        tail = tail + last * q / (1 - q)
        rel = _safe_ratio(tail, den)
        rel[(den == 0) & (tail == 0)] = 0.0
        tail_bound = float(np.max(rel))
    else:
        tail_bound = math.nan
    k = int(np.argmax(ratio))
    return RegularityReport("G2", float(ratio[k]), len(x), (complex(x[k]), float(r[k])),
                            tail_bound=tail_bound, unbounded=unbounded, ratios=ratio)


def check_doubling(spec: GaugeSpec, x, r, factor: float | None = None) -> tuple[bool, float]:
    """Check eps(x, 2r) <= factor * eps(x, r); default factor 2**(t+a). Returns (ok, worst ratio)."""
    if factor is None:
        factor = 2.0 ** (spec.t + (spec.a or 0.0))
    e1 = np.asarray(spec.eps(x, r), dtype=float)
    e2 = np.asarray(spec.eps(x, 2 * np.asarray(r, dtype=float)), dtype=float)
    ratio = _safe_ratio(e2, e1)
    worst = float(np.max(ratio))
    return bool(np.all(e2 <= factor * e1 * (1 + 1e-12))), worst


def borderline_growth(spec: GaugeSpec, x: complex, radii, k_max: int) -> tuple[float, float, np.ndarray]:
    """Fit the G2 ratio against log2(1/r); returns (slope, R**2, ratios)."""
    radii = np.asarray(radii, dtype=float)
    ratios = np.array([check_G2(spec, [(x, r)], k_max).estimated_constant for r in radii])
    X = np.log2(1 / radii)
    slope, icpt = np.polyfit(X, ratios, 1)
    resid = ratios - (slope * X + icpt)
    ss_tot = float(((ratios - ratios.mean()) ** 2).sum())
    r2 = 1 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2, ratios


def _sample_centers(mu: DiscreteMeasure | None, n: int, rng: np.random.Generator, spread: float) -> np.ndarray:
    if mu is None or len(mu) == 0:
        return (rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)) * spread
    base = mu.points[rng.integers(0, len(mu), n)]
    off = spread * rng.uniform(0, 1, n) ** 2 * np.exp(2j * np.pi * rng.uniform(0, 1, n))
    return base + off


def default_g2_samples(mu: DiscreteMeasure | None, n: int = 256, seed: int = 0,
                       r_top: float = 1.0, octaves: int = 12) -> list[tuple[complex, float]]:
    """Centres near atoms, radii log-uniform over ``octaves`` octaves below ``r_top``."""
    rng = np.random.default_rng(seed)
    r = r_top * 2.0 ** (-octaves * rng.uniform(0, 1, n))
    z = _sample_centers(mu, n, rng, r_top)
    return list(zip(z.tolist(), r.tolist()))


def default_g1_samples(mu: DiscreteMeasure | None, n: int = 256, seed: int = 0,
                       r_top: float = 1.0, octaves: int = 12) -> list[tuple[complex, float, complex, float]]:
    """Quadruples (x, r, y, s) with |x-y| <= 2r and r/2 <= s <= 2r."""
    rng = np.random.default_rng(seed)
    base = default_g2_samples(mu, n, seed, r_top, octaves)
    out = []
    for x, r in base:
        y = x + 2 * r * math.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        s = r * 2.0 ** rng.uniform(-1, 1)
        out.append((x, r, complex(y), float(s)))
    return out


def lemtec1_bound(alpha: float, beta: float, x: float, k_max: int) -> tuple[float, float]:
    """Truncated sum_{k<=k_max} 2**(-beta k) / ((2**-k x)**alpha + 1) and 1/(x**min(alpha,beta) + 1)."""
    if alpha == beta:
        raise ValueError("alpha == beta is the logarithmic case; use check_G2 on the borderline gauge")
    if not (alpha > 0 and beta > 0 and x > 0):
        raise ValueError("alpha, beta and x must be positive")
    k = np.arange(k_max + 1)
    terms = 2.0 ** (-beta * k) / ((2.0 ** (-k) * x) ** alpha + 1)
    return math.fsum(terms.tolist()), 1.0 / (x ** min(alpha, beta) + 1)
