"""Capacity and Hausdorff-content distortion checks on the Cantor family.

Generation sums stand in for Wolff potentials and Hausdorff measures: along
any branch of the construction the potential is comparable to the sum of
(mass / radius**(2 - alpha p))**(p'-1) over generations, and generation
covers are exact for the d = 1 construction.  Normalising lengths are the
root radius, which is 1 in both planes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .cantor import CantorMap, CantorParams, discretize, sharp_radius, wolff_on_cantor
from .exponents import DistortionIndices, conjugate, indices_from_target, t_from_t_prime, t_prime
from .measures import DiscreteMeasure
from .potentials import RieszIndex, WolffOptions, capacity_lower

__all__ = [
    "t_prime",
    "t_from_t_prime",
    "conjugate",
    "DistortionIndices",
    "indices_from_target",
    "generation_capacity",
    "Thm11Report",
    "verify_thm11_on_cantor",
    "Thm12Report",
    "verify_thm12_on_cantor",
    "CapacityComparison",
    "capacity_comparison",
    "sharp_capacity_ratios",
]


def generation_capacity(params: CantorParams, idx: RieszIndex, side: str, N: int) -> tuple[float, float]:
    """(capacity estimate, W) from the generation-sum potential truncated at N.

    W includes the root term (total mass / 1)**(p'-1); the capacity estimate
    is total_mass * W**(-1/(p'-1)), i.e. the mass of the measure rescaled to
    unit potential.
    """
    total = params.total_mass()
    W = total ** (idx.p_prime - 1)
    if N > 0:
        W += float(wolff_on_cantor(params, idx, side, None, N)[-1])
    return total * W ** (-1 / (idx.p_prime - 1)), W


@dataclass(frozen=True)
class Thm11Report:
    lhs: float
    rhs: float
    ratio: float
    N: int
    cap_target: float
    cap_source: float
    method: str
    indices: dict = field(default_factory=dict)
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def verify_thm11_on_cantor(
    params: CantorParams,
    idx: DistortionIndices,
    N: int,
    method: str = "generation",
    cmap: CantorMap | None = None,
    opts: WolffOptions | None = None,
) -> Thm11Report:
    """lhs = Cap_{beta,q}(target) / 1**t', rhs = (Cap_{alpha,p}(source) / 1**t)**(t'/(K t)).

    ``method='generation'`` uses generation sums to depth N;
    ``method='atomic'`` discretises a placed map at generation N and probes
    the dyadic Wolff potential of the atoms (shallow N only).
    """
    if abs(float(idx.K) - params.K) > 1e-12 or abs(float(idx.t) - params.t) > 1e-12:
        raise ValueError("indices and construction disagree on K or t")
    if not 0 <= N <= params.depth:
        raise ValueError("N must lie in [0, depth]")
    tgt_idx = RieszIndex(float(idx.beta), float(idx.q))
    src_idx = RieszIndex(float(idx.alpha), float(idx.p))
    if method == "generation":
        cap_t, _ = generation_capacity(params, tgt_idx, "target", N)
        cap_s, _ = generation_capacity(params, src_idx, "source", N)
        seed = None
    elif method == "atomic":
        if cmap is None:
            raise ValueError("atomic method needs a placed CantorMap")
        mu, nu = discretize(cmap, N)
        cap_t = capacity_lower(mu, tgt_idx, opts=opts).value
        cap_s = capacity_lower(nu, src_idx, opts=opts).value
        seed = cmap.seed
    else:
        raise ValueError(f"unknown method {method!r}")
    lhs = cap_t
    rhs = cap_s ** float(idx.capacity_exponent)
    ratio = lhs / rhs if rhs > 0 else math.inf
    return Thm11Report(lhs, rhs, ratio, N, cap_t, cap_s, method, idx.as_dict(), seed)


@dataclass(frozen=True)
class Thm12Report:
    """Normalised generation-cover sums; ``C`` is the largest lhs/rhs over generations 0..N."""

    lhs: float
    rhs: float
    C: float
    N: int
    ratios: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def verify_thm12_on_cantor(params: CantorParams, N: int, root_radius: float = 1.0) -> Thm12Report:
    """lhs = sum over generation-N target disks of (t_N/diam)**t', rhs = (sum (s_N/diam)**t)**(t'/(K t)).

    ``root_radius`` rescales every radius and the normalising length
    together, so the report does not depend on it.
    """
    if not np.allclose(params.d, 1.0, rtol=0, atol=1e-15):
        raise ValueError("Hausdorff check needs the d = 1 construction")
    if not 0 <= N <= params.depth:
        raise ValueError("N must lie in [0, depth]")
    K, t = params.K, params.t
    tp = t_prime(t, K)
    if params.disks_per_level is not None:
        counts = np.array(params.disks_per_level[:N], dtype=float)
    else:
        counts = (1 - params.fill_deficit[:N]) / params.R[:N] ** 2
    if not root_radius > 0:
        raise ValueError("root_radius must be positive")
    log_norm = math.log(root_radius)
    lhs_n, rhs_n = [1.0], [1.0]
    log_count = 0.0
    log_s = log_t = log_norm
    for n in range(N):
        log_count += math.log(counts[n])
        log_s += math.log(params.source_factor[n])
        log_t += math.log(params.target_factor[n])
        lt = log_count + tp * (log_t - log_norm)
        ls = log_count + t * (log_s - log_norm)
        lhs_n.append(math.exp(lt))
        rhs_n.append(math.exp(ls * tp / (K * t)))
    ratios = tuple(a / b for a, b in zip(lhs_n, rhs_n))
    return Thm12Report(lhs_n[-1], rhs_n[-1], max(ratios), N, ratios)


@dataclass(frozen=True)
class CapacityComparison:
    ratios: tuple
    cap1: tuple
    cap2: tuple
    max_ratio: float


def capacity_comparison(
    idx1: RieszIndex, idx2: RieszIndex, target_measures: Sequence[DiscreteMeasure], opts: WolffOptions | None = None
) -> CapacityComparison:
    """Cap(idx1)/Cap(idx2) per measure, for idx1 = (beta, q), idx2 = (alpha, p), beta q = alpha p, p <= q."""
    if abs(idx1.alpha * idx1.p - idx2.alpha * idx2.p) > 1e-12:
        raise ValueError("indices must share alpha*p")
    if idx2.p > idx1.p + 1e-15:
        raise ValueError("need p <= q")
    r, c1s, c2s = [], [], []
    for mu in target_measures:
        o = opts or WolffOptions.default_for(mu)
        c1 = capacity_lower(mu, idx1, opts=o)
        c2 = capacity_lower(mu, idx2, opts=o)
        if c1.diverged or c2.diverged:
            raise FloatingPointError("potential diverged on a comparison measure")
        c1s.append(c1.value)
        c2s.append(c2.value)
        r.append(c1.value / c2.value if c2.value > 0 else math.inf)
    return CapacityComparison(tuple(r), tuple(c1s), tuple(c2s), max(r, default=math.nan))


def sharp_capacity_ratios(t: float, K: float, q: float, p_tilde: float, depths: Sequence[int]) -> list[float]:
    """Cap_{alpha~,p~}(E) / Cap_{alpha,p}(E) on the tuned construction, per truncation depth.

    The p~ potential diverges logarithmically while the p potential
    converges, so the ratio tends to 0.
    """
    tp = t_prime(t, K)
    p = 1 + (K * t / tp) * (q - 1)
    if not p_tilde > p:
        raise ValueError("p_tilde must exceed p")
    delta = 1 / (t * K * (conjugate(p_tilde) - 1))
    depth = max(depths)
    params = CantorParams.uniform(K, t, depth, sharp_radius(t, K, 2.0**delta), "sharp", delta)
    out = []
    for N in depths:
        c_tilde, _ = generation_capacity(params, RieszIndex((2 - t) / p_tilde, p_tilde), "source", N)
        c_p, _ = generation_capacity(params, RieszIndex((2 - t) / p, p), "source", N)
        out.append(c_tilde / c_p)
    return out
