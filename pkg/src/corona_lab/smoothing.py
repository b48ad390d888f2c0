"""Bounded-geometry covers, hat partitions of unity, and smoothing.

Given a bounded function f whose variation is controlled up to an additive
constant, ``g(x) = sum_a pi_a(x) f(x_a)`` is a continuous function with a
genuine sublinear Higson bound, and ``f - g`` vanishes at infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, EmptyScaleError, InputError
from .functions import SampledFunction, loglog_slope, pair_sup, sublinear_higson_constant


@dataclass
class CoverData:
    """Members are open balls ``B(center, 2r)`` around an r-separated net."""

    members: list = field(repr=False)
    anchors: np.ndarray
    r: float
    lebesgue_L: float
    diameter_d: float
    degree_N: int

    def to_json(self) -> dict:
        return {"r": self.r, "anchors": self.anchors.tolist(),
                "members": [m.tolist() for m in self.members],
                "lebesgue_L": self.lebesgue_L, "diameter_d": self.diameter_d,
                "degree_N": self.degree_N}


@dataclass
class PartitionOfUnity:
    values: np.ndarray = field(repr=False)
    lipschitz_D: float
    D_bound: float
    witness: tuple | None

    def to_json(self) -> dict:
        return {"lipschitz_D": self.lipschitz_D, "D_bound": self.D_bound,
                "values": self.values.tolist()}


def greedy_net(space, r: float) -> np.ndarray:
    """Maximal r-separated set, greedy in ascending point id."""
    all_ids = np.arange(space.n)
    gap = np.full(space.n, np.inf)
    centers = []
    for i in range(space.n):
        if gap[i] >= r:
            centers.append(i)
            gap = np.minimum(gap, space.distances([i], all_ids)[0])
    return np.array(centers, dtype=np.int64)


def greedy_net_cover(space, r: float) -> CoverData:
    """Cover by open balls of radius 2r around a greedy r-net.

    The Lebesgue number ``L = min_x max_a dist(x, X \\ U_a)``, the member
    diameter bound ``d`` and the degree ``N`` are computed exactly on the
    sample.  A cover with a single member that is the whole sample has no
    complement; its L is recorded as infinity.
    """
    if r <= 0:
        raise InputError("r must be positive")
    if space.n > 1 and r < space.mesh:
        raise InputError(f"r = {r} is below the sampling mesh {space.mesh}")
    all_ids = np.arange(space.n)
    centers = greedy_net(space, r)
    dc = space.distances(centers, all_ids)
    inside = dc < 2 * r
    members = [np.flatnonzero(row) for row in inside]
    degree = int(inside.sum(axis=0).max())
    diam = 0.0
    depth = np.zeros(space.n)
    for m in members:
        if len(m) > 1:
            diam = max(diam, float(space.distances(m, m).max()))
        out = np.setdiff1d(all_ids, m, assume_unique=True)
        if len(out) == 0:
            depth[m] = np.inf
            continue
        to_out = space.distances(m, out).min(axis=1)
        depth[m] = np.maximum(depth[m], to_out)
    if not np.all(inside.any(axis=0)):
        raise ConstructionError("net cover misses a point")
    return CoverData(members, centers, float(r), float(depth.min()), diam, degree)


def hat_partition(cover: CoverData, space) -> PartitionOfUnity:
    """``pi_a = tau_a / sum tau`` with ``tau_a(x) = max(0, 1 - d(x, x_a)/(2r))``.

    The Lipschitz constant D is the exact sup over all sampled pairs and
    members; ``D_bound = (2N+1) / (2r * min_x sum_b tau_b(x))``.
    """
    all_ids = np.arange(space.n)
    two_r = 2 * cover.r
    tau = np.maximum(0.0, 1.0 - space.distances(cover.anchors, all_ids) / two_r)
    total = tau.sum(axis=0)
    if np.any(total <= 0):
        hole = int(np.flatnonzero(total <= 0)[0])
        raise ConstructionError(f"partition has a hole at point {hole}")
    pi = tau / total[None, :]
    best, witness = 0.0, None
    for a in range(len(cover.anchors)):
        supp = np.flatnonzero(pi[a] > 0)
        if len(supp) == 0 or space.n < 2:
            continue
        d = space.distances(supp, all_ids)
        diff = np.abs(pi[a, supp][:, None] - pi[a][None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, diff / d, 0.0)
        m = float(ratio.max())
        if m > best:
            best = m
            i, j = np.unravel_index(int(ratio.argmax()), ratio.shape)
            witness = (a, int(supp[i]), int(j))
    bound = (2 * cover.degree_N + 1) / (two_r * float(total.min()))
    return PartitionOfUnity(pi, best, bound, witness)


def b_hl_constant(f: SampledFunction, R: float):
    """``sup R*|f(x) - f(x')| / (d(x, x') + 1)`` over pairs outside B(R)."""
    if R <= 0:
        raise InputError("R must be positive")
    return pair_sup(f.space, f.values, R, offset=1.0)


def smooth(f: SampledFunction, pou: PartitionOfUnity, cover: CoverData) -> SampledFunction:
    """``g(x) = sum_a pi_a(x) f(x_a)``."""
    if pou.values.shape != (len(cover.anchors), f.space.n):
        raise InputError("partition does not match the function's space")
    return SampledFunction(f.space, pou.values.T @ f.values[cover.anchors])


def annulus_sups(f: SampledFunction, min_k: int = 0):
    """``(lower radii, sup |f|)`` over complete dyadic annuli with ``k >= min_k``."""
    space = f.space
    ks = [k for k in space.full_annuli() if k >= min_k]
    mags = np.abs(f.values)
    return [2.0 ** k for k in ks], [float(mags[space.annuli[k]].max()) for k in ks]


def truncate(f: SampledFunction, eps: float):
    """Compactly supported approximant: zero ``f`` beyond the first radius
    after which every annulus sup of ``|f|`` stays below ``eps``.

    Returns ``(R, truncated, sup error)``.
    """
    lows, sups = annulus_sups(f)
    R = 0.0
    for lo, s in zip(lows, sups):
        if s >= eps:
            R = 2 * lo
    vals = np.where(f.space.norms < R, f.values, 0.0)
    h = SampledFunction(f.space, vals)
    return R, h, float(np.abs(f.values - vals).max())


@dataclass
class BoundReport:
    C_f: float
    bound: float
    N: int
    D: float
    d: float
    C_X: float
    rows: list
    skipped: list
    decay_slope: float
    decay_ok: bool
    bound_ok: bool

    @property
    def passed(self) -> bool:
        return self.bound_ok and self.decay_ok


def verify_appendix_bound(f: SampledFunction, g: SampledFunction, cover: CoverData,
                          pou: PartitionOfUnity, C_X: float, scales,
                          C_f: float | None = None, rel_tol: float = 0.10,
                          slope_max: float = -0.8) -> BoundReport:
    """Check ``C_g(R) <= 4 N D C_f (C_X + 2d)`` for sampled ``R > 2d`` and that
    ``|f - g|`` decays at least like ``R**slope_max`` over annuli beyond 2d.

    ``C_f`` defaults to the largest additive-variation constant of f over
    ``scales``.
    """
    d = cover.diameter_d
    scales = [float(R) for R in scales]
    if C_f is None:
        C_f = 0.0
        for R in scales:
            try:
                C_f = max(C_f, b_hl_constant(f, R)[0])
            except EmptyScaleError:
                pass
    bound = 4 * cover.degree_N * pou.lipschitz_D * C_f * (C_X + 2 * d)
    rows, skipped = [], []
    for R in scales:
        if R <= 2 * d:
            skipped.append(R)
            continue
        try:
            cg, w = sublinear_higson_constant(g, R)
        except EmptyScaleError:
            skipped.append(R)
            continue
        ok = cg <= bound * (1 + rel_tol)
        rows.append({"R": R, "C_g": cg, "bound": bound, "margin": bound - cg,
                     "pass": bool(ok), "witness_i": w[0], "witness_j": w[1]})
    k0 = int(math.floor(math.log2(2 * d))) + 1 if d > 0 else 0
    lows, sups = annulus_sups(f - g, min_k=k0)
    slope = loglog_slope(lows, sups, floor=1e-300) if len(lows) >= 2 else math.nan
    decay_ok = bool(len(lows) >= 2 and slope <= slope_max)
    bound_ok = bool(rows) and all(r["pass"] for r in rows)
    return BoundReport(C_f, bound, cover.degree_N, pou.lipschitz_D, d, C_X, rows,
                       skipped, slope, decay_ok, bound_ok)
