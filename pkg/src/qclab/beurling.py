"""Grid Beurling transforms, packing weights, maximal functions and weighted-norm statistics.

Fields are sampled at pixel centres of an n x n grid; row index is y,
column index is x.  L^p norms are Riemann sums (sum |f|**p * weight * h**2).
"""

from __future__ import annotations

import csv
import io
import math
import struct
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from .gauge import GaugeSpec, check_G2, default_g2_samples

__all__ = [
    "GridField",
    "SupportWarning",
    "beurling_full",
    "beurling_truncated",
    "beurling_maximal",
    "default_eps_ladder",
    "disk_indicator",
    "disk_transform_exact",
    "truncated_disk_quadrature",
    "DiskSelfTest",
    "disk_selftest",
    "PackingFamily",
    "build_packing",
    "packing_constant",
    "Weight",
    "UnresolvableSquares",
    "build_weight",
    "packing_grid",
    "maximal_functions",
    "check_local_A1",
    "HarnessResult",
    "weighted_norm_harness",
    "GAMMAS",
]

_HEADER = struct.Struct("<dddQ")
GAMMAS = tuple(2.0**-k for k in range(9))


class SupportWarning(RuntimeWarning):
    """Input support reaches the outer half of the grid, where wrap-around is not controlled."""


@dataclass(frozen=True, eq=False)
class GridField:
    origin: complex
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square 2-d array")
        n = v.shape[0]
        if n < 2 or n & (n - 1):
            raise ValueError("grid size must be a power of two")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "origin", complex(self.origin))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def square(cls, lo: float, hi: float, n: int, values=None) -> GridField:
        """Grid covering [lo, hi]**2 with n pixels per side."""
        h = (hi - lo) / n
        v = np.zeros((n, n), dtype=complex) if values is None else values
        return cls(complex(lo, lo), h, v)

    def coords(self) -> np.ndarray:
        k = (np.arange(self.n) + 0.5) * self.spacing
        return self.origin + k[None, :] + 1j * k[:, None]

    def with_values(self, values) -> GridField:
        return GridField(self.origin, self.spacing, values)

    def norm(self, p: float = 2.0, weight=None) -> float:
        a = np.abs(self.values) ** p
        if weight is not None:
            a = a * weight
        return float(a.sum() * self.spacing**2) ** (1 / p)

    def to_bytes(self) -> bytes:
        v = np.ascontiguousarray(self.values, dtype="<c16")
        return _HEADER.pack(self.origin.real, self.origin.imag, self.spacing, self.n) + v.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> GridField:
        ox, oy, h, n = _HEADER.unpack_from(data)
        payload = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
        if payload.size != n * n:
            raise ValueError("payload length does not match header")
        return cls(complex(ox, oy), h, payload.reshape(n, n).astype(complex))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> GridField:
        return cls.from_bytes(Path(path).read_bytes())


def _freqs(m: int, h: float):
    k = 2 * np.pi * np.fft.fftfreq(m, d=h)
    return k[None, :], k[:, None]


def beurling_full(f: GridField, pad: int = 4) -> GridField:
    """Spectral Beurling transform: multiplier conj(xi)/xi on a grid zero-padded ``pad`` times per side."""
    n = f.n
    q = n // 4
    inner = np.zeros((n, n), dtype=bool)
    inner[q : n - q, q : n - q] = True
    if np.any(f.values[~inner] != 0):
        warnings.warn("support extends beyond the inner half of the grid", SupportWarning, stacklevel=2)
    m = pad * n
    big = np.zeros((m, m), dtype=complex)
    big[:n, :n] = f.values
    kx, ky = _freqs(m, f.spacing)
    xi = kx + 1j * ky
    with np.errstate(invalid="ignore", divide="ignore"):
        sym = np.conj(xi) / xi
    sym[0, 0] = 0.0
    out = np.fft.ifft2(np.fft.fft2(big) * sym)[:n, :n]
    return f.with_values(out)


class _KernelCache:
    """Spectra of truncated discrete kernels keyed by (n, spacing, eps)."""

    def __init__(self, maxsize: int = 16):
        self.maxsize = maxsize
        self._d: OrderedDict = OrderedDict()

    def get(self, n: int, h: float, eps: float) -> np.ndarray:
        key = (n, h, eps)
        if key in self._d:
            self._d.move_to_end(key)
            return self._d[key]
        m = 2 * n
        off = np.fft.fftfreq(m, d=1.0 / m) * h
        w = off[None, :] + 1j * off[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ker = -(h * h) / (np.pi * w * w)
        ker[np.abs(w) <= eps] = 0.0
        spec = np.fft.fft2(ker)
        self._d[key] = spec
        while len(self._d) > self.maxsize:
            self._d.popitem(last=False)
        return spec


_KERNELS = _KernelCache()


def _check_eps(f: GridField, eps: float) -> None:
    if eps < 2 * f.spacing * (1 - 1e-12):
        raise ValueError(f"eps = {eps} is below twice the grid spacing {f.spacing}")


def _padded_fft(f: GridField) -> np.ndarray:
    n = f.n
    big = np.zeros((2 * n, 2 * n), dtype=complex)
    big[:n, :n] = f.values
    return np.fft.fft2(big)


def beurling_truncated(f: GridField, eps: float, _fhat: np.ndarray | None = None) -> GridField:
    """Direct discrete sum -h**2/pi * sum_{|z-w| > eps} f(w)/(z-w)**2, via exact linear convolution."""
    _check_eps(f, eps)
    fhat = _padded_fft(f) if _fhat is None else _fhat
    out = np.fft.ifft2(fhat * _KERNELS.get(f.n, f.spacing, float(eps)))[: f.n, : f.n]
    return f.with_values(out)


def beurling_maximal(f: GridField, eps_set: Sequence[float]) -> GridField:
    """Pointwise max over eps of |S_eps f|."""
    eps_set = list(eps_set)
    if not eps_set:
        raise ValueError("eps_set must be non-empty")
    for e in eps_set:
        _check_eps(f, e)
    fhat = _padded_fft(f)
    out = np.zeros((f.n, f.n))
    for e in eps_set:
        np.maximum(out, np.abs(beurling_truncated(f, e, fhat).values), out=out)
    return f.with_values(out)


def default_eps_ladder(f: GridField, ratio: float = 2.0) -> list[float]:
    """2h, 2h*ratio, ... up to the grid diameter."""
    diam = f.n * f.spacing * math.sqrt(2)
    out, e = [], 2 * f.spacing
    while e < diam:
        out.append(e)
        e *= ratio
    return out


def disk_indicator(grid: GridField, center: complex = 0j, radius: float = 1.0, sub: int = 8) -> GridField:
    """Pixel area fractions of the closed disk, estimated on a sub x sub subgrid."""
    h = grid.spacing
    z = grid.coords()
    d = np.abs(z - center)
    out = (d <= radius).astype(float)
    edge = np.abs(d - radius) <= h * math.sqrt(2)
    if edge.any():
        zs = z[edge]
        o = (np.arange(sub) + 0.5) / sub - 0.5
        offs = (o[None, :] + 1j * o[:, None]).ravel() * h
        out[edge] = (np.abs(zs[:, None] + offs[None, :] - center) <= radius).mean(axis=1)
    return grid.with_values(out.astype(complex))


def disk_transform_exact(z) -> np.ndarray:
    """S of the unit-disk indicator: 0 inside, -1/z**2 outside."""
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(z) > 1, -1 / z**2, 0)


def truncated_disk_quadrature(z: complex, eps: float) -> complex:
    """S_eps of the unit-disk indicator by 1-d quadrature over the radius |z - w|.

    For fixed rho the chord of directions hitting the disk is an arc of
    half-width phi(rho) about arg z, which integrates e^{-2i theta} to
    e^{-2i arg z} sin(2 phi).
    """
    z = complex(z)
    rz = abs(z)
    if rz == 0:
        return 0j

    def integrand(rho):
        c = (rho * rho + rz * rz - 1) / (2 * rho * rz)
        if c >= 1 or c <= -1:
            return 0.0
        return math.sin(2 * math.acos(c)) / rho

    lo, hi = max(eps, abs(rz - 1)), rz + 1
    if lo >= hi:
        return 0j
    val, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-11)
    return -np.exp(-2j * math.atan2(z.imag, z.real)) * val / math.pi


@dataclass(frozen=True)
class DiskSelfTest:
    n: int
    interior_max: float
    interior_radius: float
    exterior_rel_err: float
    plancherel_rel_err: float
    truncated_max_rel_err: float
    eps_used: tuple
    probes: tuple

    def passed(self) -> bool:
        return self.interior_max <= 0.05 and self.exterior_rel_err <= 0.05 and \
            self.plancherel_rel_err <= 0.01 and self.truncated_max_rel_err <= 0.02

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()} | {"passed": self.passed()}


def _probe_points(count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.6, 1.8, count)
    return r * np.exp(2j * np.pi * rng.uniform(0, 1, count))


def disk_selftest(n: int = 1024, interior_radius: float = 0.9, eps_set=(0.5, 0.75), probes: int = 20,
                  seed: int = 0) -> DiskSelfTest:
    """Unit-disk checks on [-2, 2]**2: interior/exterior accuracy, Plancherel, truncated vs quadrature."""
    grid = GridField.square(-2.0, 2.0, n)
    chi = disk_indicator(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupportWarning)
        S = beurling_full(chi).values
    z = grid.coords()
    inside = np.abs(z) <= interior_radius
    interior_max = float(np.abs(S[inside]).max())
    outside = np.abs(z) >= 1.5
    exact = disk_transform_exact(z[outside])
    ext_err = float(np.max(np.abs(S[outside] - exact) / np.abs(exact)))
    # band-limited, mean-zero test field supported well inside the inner half
    g = np.exp(-np.abs(z) ** 2 / (2 * 0.15**2)) * (z.real / 0.15) * np.cos(3 * z.imag)
    g[np.abs(z) > 0.95] = 0
    Sg = beurling_full(grid.with_values(g.astype(complex)))
    planch = abs(Sg.norm() / grid.with_values(g).norm() - 1)
    # truncated transform at pixel-centre probes against quadrature
    pts = _probe_points(probes, seed)
    fhat = _padded_fft(chi)
    worst = 0.0
    idx = []
    for i, w in enumerate(pts):
        e = eps_set[i % len(eps_set)]
        T = beurling_truncated(chi, e, fhat).values
        col = int(np.clip(np.floor((w.real - grid.origin.real) / grid.spacing), 0, n - 1))
        row = int(np.clip(np.floor((w.imag - grid.origin.imag) / grid.spacing), 0, n - 1))
        zc = z[row, col]
        ref = truncated_disk_quadrature(zc, e)
        worst = max(worst, abs(T[row, col] - ref) / abs(ref))
        idx.append(complex(zc))
    return DiskSelfTest(n, interior_max, interior_radius, ext_err, planch, worst, tuple(eps_set), tuple(idx))


# ---------------------------------------------------------------- packings


def _square_center(level: int, i: int, j: int) -> complex:
    s = 2.0**-level
    return complex((i + 0.5) * s, (j + 0.5) * s)


def _square_h(gauge: GaugeSpec, level: int, i: int, j: int) -> float:
    """h of the circumscribed ball of the dyadic square."""
    s = 2.0**-level
    return float(gauge.h(np.array([_square_center(level, i, j)]), np.array([s / math.sqrt(2)]))[0])


def _triples_disjoint(a: tuple, b: tuple) -> bool:
    """Closed triples 3P, 3P' share no point."""
    (la, ia, ja), (lb, ib, jb) = a, b
    sa, sb = 2.0**-la, 2.0**-lb
    ax0, ax1 = (ia - 1) * sa, (ia + 2) * sa
    ay0, ay1 = (ja - 1) * sa, (ja + 2) * sa
    bx0, bx1 = (ib - 1) * sb, (ib + 2) * sb
    by0, by1 = (jb - 1) * sb, (jb + 2) * sb
    return ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0


def packing_constant(squares: Sequence[tuple], h_values: Sequence[float], gauge: GaugeSpec,
                     root_level: int = 0) -> float:
    """max over dyadic Q of sum_{P in family, P subset Q} h(P) / h(Q); Q ranges over ancestors up to the root."""
    sums: dict = {}
    for (lev, i, j), hv in zip(squares, h_values):
        for a in range(lev, root_level - 1, -1):
            key = (a, i >> (lev - a), j >> (lev - a))
            sums[key] = sums.get(key, 0.0) + hv
    best = 0.0
    for (a, i, j), s in sums.items():
        hq = _square_h(gauge, a, i, j)
        best = max(best, s / hq if hq > 0 else math.inf)
    return best


@dataclass(frozen=True, eq=False)
class PackingFamily:
    squares: tuple
    h_values: tuple
    C_pack: float
    gauge: GaugeSpec
    g2_constant: float = math.nan

    def __len__(self) -> int:
        return len(self.squares)


def build_packing(gauge: GaugeSpec, level_range: tuple[int, int], budget: int, seed: int,
                  c_pack_max: float | None = None, max_tries: int = 20_000) -> PackingFamily:
    """Seeded random selection of dyadic squares in [0,1]**2 with pairwise disjoint closed triples.

    A candidate is kept when its triple misses every kept triple and, if
    ``c_pack_max`` is set, the packing constant stays below it.  The
    returned ``C_pack`` is measured over every dyadic ancestor up to the
    unit square.
    """
    lo, hi = level_range
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= min level <= max level")
    g2 = check_G2(gauge, default_g2_samples(gauge.mu, 64, seed), k_max=30)
    if g2.unbounded or not math.isfinite(g2.estimated_constant):
        raise ValueError("gauge failed the sampled summability check")
    rng = np.random.default_rng(seed)
    kept: list[tuple] = []
    hv: list[float] = []
    tries = 0
    while len(kept) < budget and tries < max_tries:
        tries += 1
        lev = int(rng.integers(lo, hi + 1))
        i, j = (int(v) for v in rng.integers(0, 2**lev, 2))
        cand = (lev, i, j)
        if not all(_triples_disjoint(cand, k) for k in kept):
            continue
        hc = _square_h(gauge, *cand)
        if c_pack_max is not None and packing_constant(kept + [cand], hv + [hc], gauge) > c_pack_max:
            continue
        kept.append(cand)
        hv.append(hc)
    C = packing_constant(kept, hv, gauge) if kept else 0.0
    return PackingFamily(tuple(kept), tuple(hv), C, gauge, g2.estimated_constant)


class UnresolvableSquares(ValueError):
    def __init__(self, squares):
        self.squares = list(squares)
        super().__init__(f"{len(self.squares)} square(s) narrower than 4 grid spacings: {self.squares[:3]}")


@dataclass(frozen=True, eq=False)
class Weight:
    family: PackingFamily
    gauge: GaugeSpec
    grid: GridField
    values: np.ndarray
    masks: tuple = field(default=())

    def omega_of_square(self, center: complex, half_side: float) -> float:
        """Exact omega(Q) for the axis-parallel square of side 2*half_side."""
        x0, x1 = center.real - half_side, center.real + half_side
        y0, y1 = center.imag - half_side, center.imag + half_side
        tot = 0.0
        for (lev, i, j), hv in zip(self.family.squares, self.family.h_values):
            s = 2.0**-lev
            ox = max(0.0, min(x1, (i + 1) * s) - max(x0, i * s))
            oy = max(0.0, min(y1, (j + 1) * s) - max(y0, j * s))
            tot += hv / s**2 * ox * oy
        return tot

    def at(self, z: complex) -> float:
        """omega at a point (half-open squares)."""
        for (lev, i, j), hv in zip(self.family.squares, self.family.h_values):
            s = 2.0**-lev
            if i * s <= z.real < (i + 1) * s and j * s <= z.imag < (j + 1) * s:
                return hv / s**2
        return 0.0


def packing_grid(n: int) -> GridField:
    """Grid on [-1/2, 3/2]**2 with spacing 2/n, aligned with the dyadic squares of [0,1]**2."""
    return GridField.square(-0.5, 1.5, n)


def build_weight(family: PackingFamily, gauge: GaugeSpec, grid: GridField) -> Weight:
    """omega = sum_P h(P)/l(P)**2 on P, rasterised at pixel centres."""
    h = grid.spacing
    bad = [sq for sq in family.squares if 2.0 ** -sq[0] < 4 * h * (1 - 1e-12)]
    if bad:
        raise UnresolvableSquares(bad)
    z = grid.coords()
    x, y = z.real, z.imag
    vals = np.zeros((grid.n, grid.n))
    masks = []
    for (lev, i, j), hv in zip(family.squares, family.h_values):
        s = 2.0**-lev
        m = (x >= i * s) & (x < (i + 1) * s) & (y >= j * s) & (y < (j + 1) * s)
        vals[m] = hv / s**2
        masks.append(m)
    return Weight(family, gauge, grid, vals, tuple(masks))


def _window_sums(a: np.ndarray, m: int) -> np.ndarray:
    """Sum of ``a`` over the (2m+1)**2 window centred at each pixel (zero outside)."""
    n = a.shape[0]
    S = np.zeros((n + 1, n + 1))
    S[1:, 1:] = a.cumsum(0).cumsum(1)
    idx = np.arange(n)
    lo = np.clip(idx - m, 0, n)
    hi = np.clip(idx + m + 1, 0, n)
    return S[hi[:, None], hi[None, :]] - S[lo[:, None], hi[None, :]] - S[hi[:, None], lo[None, :]] + S[lo[:, None], lo[None, :]]


def _ladder(n: int) -> list[int]:
    out, m = [0, 1], 2
    while m < n:
        out.append(m)
        m *= 2
    return out


def maximal_functions(f: GridField, w: Weight, ladder: Sequence[int] | None = None):
    """(Mf, M_w f, undefined): centred-square maximal functions over half-sides m*h, m on a dyadic ladder.

    ``undefined`` marks pixels where every window has zero omega-mass; M_w f is NaN there.
    """
    a = np.abs(f.values).astype(float)
    wv = w.values
    ladder = _ladder(f.n) if ladder is None else list(ladder)
    Mf = np.zeros_like(a)
    Mw = np.full_like(a, -np.inf)
    aw = a * wv
    for m in ladder:
        area = (2 * m + 1) ** 2
        np.maximum(Mf, _window_sums(a, m) / area, out=Mf)
        den = _window_sums(wv, m)
        num = _window_sums(aw, m)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, num / np.where(den > 0, den, 1), -np.inf)
        np.maximum(Mw, r, out=Mw)
    undefined = ~np.isfinite(Mw)
    Mw[undefined] = np.nan
    return f.with_values(Mf), f.with_values(Mw), undefined


def check_local_A1(w: Weight, probes: Sequence[tuple]) -> float:
    """sup over (x, (center, half_side)) of [omega(Q)/l(Q)**2] / omega(x), for x in the family's union and Q."""
    best = 0.0
    for x, (c, r) in probes:
        x, c = complex(x), complex(c)
        if not (abs(x.real - c.real) <= r and abs(x.imag - c.imag) <= r):
            raise ValueError("probe point must lie in its square")
        wx = w.at(x)
        if wx <= 0:
            raise ValueError("probe point must lie on the support of the weight")
        best = max(best, w.omega_of_square(c, r) / (2 * r) ** 2 / wx)
    return best


@dataclass(frozen=True)
class HarnessResult:
    ratio_max: float
    weak11_max: float
    goodlambda: dict
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\r\n")
        wr.writerow(["trial", "p", "ratio", "weak11", "gamma", "goodlambda_ratio"])
        for r in self.rows:
            wr.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), repr(r[4]), repr(r[5])])
        return buf.getvalue()


def _trial_fields(w: Weight, trials: int, seed: int, spikes: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        amp = rng.uniform(0, 1, len(w.masks)) * rng.choice([-1.0, 1.0], len(w.masks))
        f = np.zeros(w.values.shape)
        for a, m in zip(amp, w.masks):
            f[m] = a
        out.append(f)
    for k in range(min(spikes, len(w.masks))):
        i = int(rng.integers(0, len(w.masks)))
        out.append(w.masks[i].astype(float))
    return out


def weighted_norm_harness(w: Weight, p: float, trials: int, seed: int, spikes: int = 3,
                          eps_ratio: float = 2.0) -> HarnessResult:
    """Empirical L^p(omega) ratio, weak (1,1) and good-lambda statistics of S_* on the family's union.

    Random fields are piecewise constant on the packing squares; spike
    trials put all mass on one square.  S_* is the max over the eps ladder
    2h, 2h*eps_ratio, ... .
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not p > 1:
        raise ValueError("p must exceed 1")
    grid = w.grid
    h2 = grid.spacing**2
    wv = w.values
    eps = default_eps_ladder(grid, eps_ratio)
    ratio_max = weak_max = 0.0
    gl = {g: 0.0 for g in GAMMAS}
    rows = []
    for t, f in enumerate(_trial_fields(w, trials, seed, spikes)):
        fnorm_p = float((np.abs(f) ** p * wv).sum() * h2) ** (1 / p)
        fnorm_1 = float((np.abs(f) * wv).sum() * h2)
        if fnorm_1 == 0:
            rows.extend((t, p, 0.0, 0.0, g, 0.0) for g in GAMMAS)
            continue
        fg = grid.with_values(f.astype(complex))
        Ss = beurling_maximal(fg, eps).values.real
        ratio = float((Ss**p * wv).sum() * h2) ** (1 / p) / fnorm_p
        _, Mw, undef = maximal_functions(fg, w)
        Mwv = np.where(undef, np.inf, Mw.values.real)
        on = wv > 0
        s_on, w_on, m_on = Ss[on], wv[on] * h2, Mwv[on]
        lam = np.geomspace(max(s_on.max(), 1e-300) * 1e-3, s_on.max(), 40)
        weak = max(float(l * w_on[s_on > l].sum() / fnorm_1) for l in lam)
        trial_gl = {}
        for g in GAMMAS:
            best = 0.0
            for l in lam:
                den = w_on[s_on > l].sum()
                if den > 0:
                    best = max(best, float(w_on[(s_on > 10 * l) & (m_on <= g * l)].sum() / den))
            trial_gl[g] = best
            gl[g] = max(gl[g], best)
        ratio_max, weak_max = max(ratio_max, ratio), max(weak_max, weak)
        rows.extend((t, p, ratio, weak, g, trial_gl[g]) for g in GAMMAS)
    return HarnessResult(ratio_max, weak_max, gl, tuple(rows))
