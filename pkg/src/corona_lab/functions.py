"""Bounded functions on samples and their sublinear-Higson diagnostics.

The central quantity is the scale constant

    C(R) = sup { R * |phi(x) - phi(x')| / d(x, x') : x != x', |x|, |x'| > R }

computed exactly over sampled pairs.  A function is sublinear Higson when
C(R) stays bounded; on a finite sample we look at its log-log growth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._mix import hash_sign
from .errors import ConstructionError, EmptyScaleError, InputError, PreconditionError
from .spaces import DENSE_CAP, annulus_index

BLOCK_ENTRIES = 4_000_000

SUBLINEAR = "sublinear_higson"
CLASSICAL_ONLY = "classical_higson_only"
NEITHER = "neither"


@dataclass(frozen=True, eq=False)
class SampledFunction:
    space: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.space.n,):
            raise InputError(f"expected {self.space.n} values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def space_ref(self) -> str:
        return self.space.ref

    @cached_property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if len(self.values) else 0.0

    def _other(self, other):
        if isinstance(other, SampledFunction):
            if other.space is not self.space:
                raise InputError("functions live on different spaces")
            return other.values
        return other

    def __add__(self, other):
        return SampledFunction(self.space, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SampledFunction(self.space, self.values - self._other(other))

    def __mul__(self, other):
        return SampledFunction(self.space, self.values * self._other(other))

    __rmul__ = __mul__

    def conj(self):
        return SampledFunction(self.space, self.values.conj())

    def to_json(self) -> dict:
        return {"space_ref": self.space_ref,
                "values": [[float(v.real), float(v.imag)] for v in self.values]}

    @classmethod
    def from_json(cls, doc, space):
        if doc["space_ref"] != space.ref:
            raise InputError("space_ref does not match the supplied space")
        vals = np.array([complex(re, im) for re, im in doc["values"]])
        return cls(space, vals)


def from_callable(space, fn) -> SampledFunction:
    """Evaluate ``fn(norms, coords)`` on every sample point."""
    return SampledFunction(space, fn(space.norms, getattr(space, "coords", None)))


# ---------------------------------------------------------------------------
# pair sups


def absdiff(a, b):
    """``|a - b|``; complex moduli go through C ``hypot`` for reproducible rounding."""
    d = np.asarray(a) - np.asarray(b)
    if np.iscomplexobj(d):
        return np.hypot(d.real, d.imag)
    return np.abs(d)


def _is_line(space) -> bool:
    coords = getattr(space, "coords", None)
    return coords is not None and coords.shape[1] == 1


def _line_order(space):
    cache = space.__dict__
    if "_line_order" not in cache:
        cache["_line_order"] = np.argsort(space.coords[:, 0], kind="stable")
    return cache["_line_order"]


def _pair_sup_line(space, values, idx, R, offset):
    # On the line, chord slopes are dominated by slopes between neighbours
    # in sorted order, so the sup over pairs is a sup over neighbours.
    # This holds for offset == 0 only.
    order = _line_order(space)
    ids = order[space.norms[order] > R]
    x = space.coords[ids, 0]
    v = values[ids]
    d = np.abs(x[1:] - x[:-1])
    ok = d > 0
    val = np.full(len(d), -np.inf)
    val[ok] = R * absdiff(v[1:][ok], v[:-1][ok]) / d[ok]
    m = float(val.max())
    hits = np.flatnonzero(val == m)
    a = np.minimum(ids[hits], ids[hits + 1])
    b = np.maximum(ids[hits], ids[hits + 1])
    k = np.lexsort((b, a))[0]
    return m, (int(a[k]), int(b[k]))


def pair_sup(space, values, R: float, offset: float = 0.0, exact: bool = False):
    """Exact ``sup R*|v(x)-v(x')|/(d(x,x') + offset)`` over pairs outside B(R).

    Returns ``(value, (i, j))`` with ``i < j``; ties go to the
    lexicographically smallest pair.  On one-dimensional coordinate spaces
    larger than the dense cap, the neighbour reduction is used; its value is
    exact, its witness is the smallest tied neighbour pair.
    """
    idx = np.flatnonzero(space.norms > R)
    if len(idx) < 2:
        raise EmptyScaleError(f"fewer than two points outside B({R})")
    values = np.asarray(values)
    if offset == 0.0 and not exact and _is_line(space) and len(idx) > DENSE_CAP:
        return _pair_sup_line(space, values, idx, R, offset)
    m = len(idx)
    block = max(1, BLOCK_ENTRIES // m)
    best, witness = -np.inf, None
    vcols = values[idx]
    pos = np.arange(m)
    for start in range(0, m, block):
        stop = min(m, start + block)
        rows = idx[start:stop]
        d = space.distances(rows, idx)
        diff = absdiff(values[rows][:, None], vcols[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            val = R * diff / (d + offset)
        valid = (pos[None, :] > pos[start:stop][:, None]) & (d > 0)
        val = np.where(valid, val, -np.inf)
        bm = float(val.max())
        if bm > best:
            best = bm
            r, c = np.unravel_index(int(np.argmax(val == bm)), val.shape)
            witness = (int(rows[r]), int(idx[c]))
    if witness is None:
        raise EmptyScaleError(f"no pair at positive distance outside B({R})")
    return best, witness


def sublinear_higson_constant(phi: SampledFunction, R: float):
    """``(C(R), witness_pair)`` for the sublinear Higson condition at scale R."""
    if R <= 0:
        raise InputError("R must be positive")
    return pair_sup(phi.space, phi.values, R)


def _diam(vals):
    if len(vals) < 2:
        return 0.0
    if not np.any(vals.imag):
        return float(vals.real.max() - vals.real.min())
    return float(absdiff(vals[:, None], vals[None, :]).max())


def _modulus_line(space, values, idx, r):
    order = _line_order(space)
    xs = space.coords[order, 0]
    vs = values[order]
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    centers = rank[idx]
    lo = np.searchsorted(xs, xs[centers] - r, side="left")
    hi = np.searchsorted(xs, xs[centers] + r, side="right")
    width = int((hi - lo).max())
    if width > 64:
        return None
    diam = np.zeros(len(idx))
    n = len(xs)
    for a in range(width):
        ia = np.minimum(lo + a, n - 1)
        for b in range(a + 1, width):
            ib = np.minimum(lo + b, n - 1)
            ok = lo + b < hi
            diam = np.where(ok, np.maximum(diam, absdiff(vs[ib], vs[ia])), diam)
    return diam


def classical_higson_modulus(phi: SampledFunction, r: float, R: float):
    """``sup_{|x| > R} diam phi(B(x, r))`` with the smallest attaining centre."""
    space = phi.space
    idx = np.flatnonzero(space.norms > R)
    if len(idx) == 0:
        raise EmptyScaleError(f"no points outside B({R})")
    diam = None
    if _is_line(space) and len(idx) > DENSE_CAP:
        diam = _modulus_line(space, phi.values, idx, r)
    if diam is None:
        diam = np.empty(len(idx))
        all_ids = np.arange(space.n)
        block = max(1, BLOCK_ENTRIES // space.n)
        for start in range(0, len(idx), block):
            rows = idx[start:start + block]
            d = space.distances(rows, all_ids)
            for k, row in enumerate(d):
                diam[start + k] = _diam(phi.values[row <= r])
    m = float(diam.max())
    return m, int(idx[int(np.argmax(diam == m))])


# ---------------------------------------------------------------------------
# classification


@dataclass
class HigsonReport:
    scales: list
    constants: list
    witnesses: list
    classical_moduli: list
    classical_witnesses: list
    r: float
    slope: float
    classification: str

    def rows(self):
        for R, C, w, cm, cw in zip(self.scales, self.constants, self.witnesses,
                                   self.classical_moduli, self.classical_witnesses):
            yield {"R": R, "C": C, "witness_i": w[0], "witness_j": w[1],
                   "classical_modulus": cm, "classical_witness": cw}

    def to_json(self) -> dict:
        return {"scales": self.scales, "constants": self.constants,
                "witnesses": [list(w) for w in self.witnesses],
                "classical_moduli": self.classical_moduli,
                "classical_witnesses": self.classical_witnesses, "r": self.r,
                "slope": self.slope, "classification": self.classification}


def loglog_slope(xs, ys, floor: float = 0.0) -> float:
    """Least-squares slope of ``log(max(y, floor))`` against ``log x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.maximum(np.asarray(ys, dtype=float), floor)
    ok = ys > 0
    if ok.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def classify(phi: SampledFunction, scales, r: float | None = None,
             slope_max: float = 0.1, decay: float = 0.1,
             c_floor: float = 1.0) -> HigsonReport:
    """Classify ``phi`` from its constants over ``scales``.

    ``sublinear_higson`` when the log-log slope of C(R) is at most
    ``slope_max`` and C at the top scale is finite.  Constants below
    ``c_floor`` enter the fit as ``c_floor``: variation already below
    distance/R counts as flat.  ``classical_higson_only`` when the slope is
    too steep but the classical modulus at fixed ``r`` drops below
    ``decay`` times its first value.
    """
    scales = sorted(float(s) for s in scales)
    if len(scales) < 3 or scales[-1] < 4 * scales[0]:
        raise InputError("need >= 3 scales spanning >= 2 octaves")
    if r is None:
        r = 2.0 * getattr(phi.space, "mesh", 1.0) or 1.0
    consts, wits, mods, mwits = [], [], [], []
    for R in scales:
        c, w = sublinear_higson_constant(phi, R)
        consts.append(c)
        wits.append(w)
        m, mw = classical_higson_modulus(phi, r, R)
        mods.append(m)
        mwits.append(mw)
    slope = loglog_slope(scales, consts, c_floor)
    if slope <= slope_max and math.isfinite(consts[-1]):
        label = SUBLINEAR
    elif mods[0] > 0 and mods[-1] < decay * mods[0]:
        label = CLASSICAL_ONLY
    else:
        label = NEITHER
    return HigsonReport(scales, consts, wits, mods, mwits, r, slope, label)


def dyadic_scales(space, lo: float = 1.0, keep: int = 2) -> list:
    """Powers of two from ``lo`` while at least ``keep`` points lie outside."""
    out = []
    R = lo
    while (space.norms > R).sum() >= keep:
        out.append(R)
        R *= 2
    return out


# ---------------------------------------------------------------------------
# named builders


def constant(space, value=1.0):
    return SampledFunction(space, np.full(space.n, complex(value)))


def norm_ratio(space):
    return SampledFunction(space, space.norms / (1.0 + space.norms))


def identity_norm(space):
    return SampledFunction(space, space.norms.astype(complex))


def sqrt_norm(space, s=1.0):
    return SampledFunction(space, np.sqrt(s * space.norms))


def exp_sqrt(space, s=1.0):
    """The covering map e(t) = exp(i t) composed with t = sqrt(s |x|)."""
    return SampledFunction(space, np.exp(1j * np.sqrt(s * space.norms)))


def cos_log(space):
    return SampledFunction(space, np.cos(np.log1p(space.norms)))


def log_phase(space):
    """``exp(i log(1 + |x|))``, a complex sublinear Higson function."""
    return SampledFunction(space, np.exp(1j * np.log1p(space.norms)))


def hash_noise(space, seed=0):
    return SampledFunction(space, hash_sign(np.arange(space.n), seed))


def decaying_noise(space, seed=0, amplitude=8.0):
    """``+-min(1, amplitude/|x|)`` with signs from the point-id mixer."""
    with np.errstate(divide="ignore"):
        mag = np.minimum(1.0, amplitude / space.norms)
    return SampledFunction(space, hash_sign(np.arange(space.n), seed) * mag)


def higson_plus_noise(space, seed=0, amplitude=8.0):
    return cos_log(space) + decaying_noise(space, seed, amplitude)


def unit_step(space, at=1.0):
    return SampledFunction(space, (space.norms >= at).astype(float))


def square_wave(space, period=4.0):
    """``+-1`` alternating every ``period/2`` in norm: jumps at every scale."""
    return SampledFunction(space, np.where(np.floor(2 * space.norms / period) % 2 == 0, 1.0, -1.0))


def disk_pullback(space, phi="identity"):
    """``phi(z/(1+|z|))`` on a planar sample, for phi continuous on the disk."""
    if space.coords is None or space.coords.shape[1] != 2:
        raise InputError("disk pullback needs planar coordinates")
    z = space.coords[:, 0] + 1j * space.coords[:, 1]
    w = z / (1.0 + np.abs(z))
    table = {
        "identity": lambda w: w,
        "real": lambda w: w.real,
        "abs2": lambda w: np.abs(w) ** 2,
        "poly": lambda w: w ** 2 - 0.5 * np.conj(w),
    }
    if phi not in table:
        raise InputError(f"unknown disk function {phi!r}")
    return SampledFunction(space, table[phi](w))


BUILDERS = {
    "constant": constant,
    "norm_ratio": norm_ratio,
    "identity_norm": identity_norm,
    "sqrt_norm": sqrt_norm,
    "exp_sqrt": exp_sqrt,
    "cos_log": cos_log,
    "log_phase": log_phase,
    "hash_noise": hash_noise,
    "decaying_noise": decaying_noise,
    "higson_plus_noise": higson_plus_noise,
    "unit_step": unit_step,
    "square_wave": square_wave,
    "disk_pullback": disk_pullback,
}


def build_function(space, name: str, **params) -> SampledFunction:
    if name not in BUILDERS:
        raise InputError(f"unknown function {name!r}")
    return BUILDERS[name](space, **params)


# ---------------------------------------------------------------------------
# witness families


@dataclass
class BumpFamily:
    anchors: np.ndarray
    functions: list = field(repr=False)

    def __len__(self):
        return len(self.functions)


def bump(space, center: int, radius: float) -> np.ndarray:
    d = space.distances([center], np.arange(space.n))[0]
    return np.maximum(0.0, 1.0 - d / radius)


def bump_family(space, count: int, start_norm: float | None = None) -> BumpFamily:
    """Bumps ``max(0, 1 - 4 d(x, x_n)/|x_n|)`` with ``|x_n| > 2 |x_{n-1}|``.

    Anchors are chosen greedily: the first is the smallest-norm point with
    norm >= ``start_norm`` (default: smallest positive norm), each next one
    the smallest-norm point beating twice the previous norm.
    """
    keys = annulus_index(space.norms)
    if len([k for k in np.unique(keys) if k >= 0]) < count:
        raise ConstructionError(f"fewer than {count} nonempty annuli")
    order = np.argsort(space.norms, kind="stable")
    sorted_norms = space.norms[order]
    if start_norm is None:
        start_norm = float(sorted_norms[sorted_norms > 0][0])
    anchors = []
    ok = (sorted_norms >= start_norm) & (sorted_norms > 0)
    for _ in range(count):
        cand = order[ok]
        if len(cand) == 0:
            raise ConstructionError("ran out of points for bump anchors")
        a = int(cand[0])
        anchors.append(a)
        ok = sorted_norms > 2 * space.norms[a]
    funcs = [SampledFunction(space, bump(space, a, space.norms[a] / 4.0)) for a in anchors]
    return BumpFamily(np.array(anchors), funcs)


def psi_P(selector, family: BumpFamily) -> SampledFunction:
    selector = list(selector)
    if len(selector) != len(family):
        raise InputError("selector length must equal the family size")
    space = family.functions[0].space
    vals = np.zeros(space.n, dtype=complex)
    for bit, f in zip(selector, family.functions):
        if bit:
            vals = vals + f.values
    return SampledFunction(space, vals)


def extend_from_anchors(anchor_values, family: BumpFamily) -> SampledFunction:
    """``sum_n psi(x_n) phi_n``; restricts back to ``psi`` on the anchors."""
    anchor_values = np.asarray(anchor_values, dtype=complex)
    if anchor_values.shape != (len(family),):
        raise InputError("one value per anchor required")
    space = family.functions[0].space
    vals = np.zeros(space.n, dtype=complex)
    for a, f in zip(anchor_values, family.functions):
        vals = vals + a * f.values
    return SampledFunction(space, vals)


def separating_witness(f, g, sequence, c: float) -> SampledFunction:
    """Sublinear Higson function on the codomain with 1 on f(x_n), 0 on g(x_n).

    Requires ``d(f(x_n), g(x_n)) >= c |x_n|``; bumps of radius ``c|x_n|/4``
    sit at ``f(x_n)`` and the result is their pointwise maximum.
    """
    if c <= 0:
        raise InputError("c must be positive")
    Y = f.codomain
    seq = np.asarray(sequence, dtype=np.int64)
    fx = f.assignment[seq]
    gx = g.assignment[seq]
    gap = Y.pair_distances(fx, gx)
    need = c * f.domain.norms[seq]
    bad = np.flatnonzero(~(gap >= need) | (need <= 0))
    if len(bad):
        k = int(bad[0])
        raise PreconditionError(
            f"d(f(x), g(x)) = {gap[k]:.6g} < c|x| = {need[k]:.6g} at x = {int(seq[k])}",
            witness=int(seq[k]))
    vals = np.zeros(Y.n)
    for center, rad in zip(fx, need / 4.0):
        vals = np.maximum(vals, bump(Y, int(center), rad))
    phi = SampledFunction(Y, vals)
    hit = phi.values[gx].real
    if np.any(hit != 0):
        k = int(np.flatnonzero(hit != 0)[0])
        raise PreconditionError("a bump reaches some g(x_n); use a sparser sequence",
                                witness=int(seq[k]))
    return phi


@dataclass
class GrowthReport:
    s: float
    t: float
    annuli: list
    sups: list
    slope: float
    bounded: bool


def sqrt_difference_growth(s: float, t: float, space) -> GrowthReport:
    """Per-annulus sup of ``|sqrt(s x) - sqrt(t x)|`` on a half-line sample."""
    if s <= 0 or t <= 0:
        raise InputError("s and t must be positive")
    diff = np.abs(np.sqrt(s * space.norms) - np.sqrt(t * space.norms))
    ks = space.full_annuli() or [k for k in sorted(space.annuli) if k >= 0]
    sups = [float(diff[space.annuli[k]].max()) for k in ks]
    lows = [2.0 ** k for k in ks]
    slope = loglog_slope(lows, sups)
    bounded = sups[-1] <= 1.05 * sups[0]
    return GrowthReport(s, t, ks, sups, slope, bool(bounded))
