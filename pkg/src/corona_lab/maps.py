"""Coarse maps, sublinear closeness, GL+ paths and cone homotopies.

Maps between sampled spaces land on sample points.  Whenever a map is
defined by coordinates, the image is snapped to the nearest codomain sample
and the displacement is recorded so verdicts can carry it as slack.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, logm, polar
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .cone import ConeSpace, build_cone
from .errors import InputError, PreconditionError
from .functions import SampledFunction, loglog_slope
from .spaces import annulus_index, build_euclidean_grid, build_interval, build_sphere_graph

COARSE = "coarse"
NOT_COARSE = "not_coarse"
CLOSE = "sublinearly_close"
NOT_CLOSE = "not_sublinearly_close"

EPS_GRID = tuple(2.0 ** -k for k in range(7))


@dataclass(frozen=True, eq=False)
class SampledMap:
    """Total map from domain point ids to codomain point ids."""

    domain: object
    codomain: object
    assignment: np.ndarray = field(repr=False)
    snap: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.shape != (self.domain.n,):
            raise InputError("assignment must have one entry per domain point")
        if len(a) and (a.min() < 0 or a.max() >= self.codomain.n):
            raise InputError("assignment leaves the codomain sample")
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "snap", np.broadcast_to(
            np.asarray(self.snap, dtype=float), a.shape).copy())

    @property
    def max_snap(self) -> float:
        return float(self.snap.max()) if len(self.snap) else 0.0

    def to_json(self) -> dict:
        return {"domain_ref": self.domain.ref, "codomain_ref": self.codomain.ref,
                "assignment": self.assignment.tolist()}

    @classmethod
    def from_json(cls, doc, domain, codomain):
        if doc["domain_ref"] != domain.ref or doc["codomain_ref"] != codomain.ref:
            raise InputError("map document does not match the given spaces")
        return cls(domain, codomain, doc["assignment"], 0.0)


def identity(space) -> SampledMap:
    return SampledMap(space, space, np.arange(space.n), 0.0)


def map_from_coords(domain, codomain, coords) -> SampledMap:
    """Snap target coordinates to the nearest codomain sample point."""
    if codomain.coords is None:
        raise InputError("codomain has no coordinates to snap to")
    coords = np.asarray(coords, dtype=float).reshape(domain.n, -1)
    dist, idx = cKDTree(codomain.coords).query(coords)
    return SampledMap(domain, codomain, idx, dist)


def map_from_callable(domain, codomain, fn) -> SampledMap:
    """``fn`` takes a coordinate array of shape (n, dim) and returns targets."""
    return map_from_coords(domain, codomain, fn(domain.coords))


def compose(g: SampledMap, f: SampledMap) -> SampledMap:
    """``g o f``; snapping of the outer map is carried along."""
    if f.codomain is not g.domain and f.codomain.ref != g.domain.ref:
        raise InputError("maps are not composable")
    return SampledMap(f.domain, g.codomain, g.assignment[f.assignment],
                      g.snap[f.assignment] + f.snap)


# ---------------------------------------------------------------------------
# coarse constants


def _rows(space, src):
    if isinstance(space, ConeSpace):
        return space.rows(src, cache=False)
    return space.distances(src, np.arange(space.n))


def _pair_rows(space, a, b):
    """Distances between ``a[i]`` and every ``b[j]``."""
    if isinstance(space, ConeSpace):
        ua, inv = np.unique(a, return_inverse=True)
        return space.rows(ua, cache=False)[inv][:, b]
    return space.distances(a, b)


def _stratified_sources(norms, max_sources):
    n = len(norms)
    if max_sources is None or n <= max_sources:
        return np.arange(n)
    keys = annulus_index(norms)
    groups = [np.flatnonzero(keys == k) for k in np.unique(keys)]
    quota = max(1, max_sources // len(groups))
    picks = []
    for g in groups:
        if len(g) <= quota:
            picks.append(g)
        else:
            picks.append(g[np.unique(np.linspace(0, len(g) - 1, quota).round().astype(np.int64))])
    return np.sort(np.concatenate(picks))


@dataclass
class CoarseMapReport:
    A_lower: float
    A_exact: float
    verdict: str
    norm_witness: int
    pair_witness: tuple
    norm_requirement: float
    pair_requirement: float
    annulus_requirements: list
    growth_slope: float
    coverage: float
    violations_below: int

    @property
    def coarse(self) -> bool:
        return self.verdict == COARSE

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @property
    def witness(self):
        return {"norm": self.norm_witness, "pair": self.pair_witness}


def _requirements(f: SampledMap, sources, block=256):
    """Per-point and per-source minimal A for the two coarse conditions."""
    dom, cod = f.domain, f.codomain
    x = np.asarray(dom.norms, dtype=float)
    fx = np.asarray(cod.norms, dtype=float)[f.assignment]
    # |f(x)| >= |x|/A - A  <=>  A^2 + |f(x)| A - |x| >= 0
    need1 = (-fx + np.sqrt(fx * fx + 4 * x)) / 2
    need2 = np.zeros(len(sources))
    partner = np.zeros(len(sources), dtype=np.int64)
    for start in range(0, len(sources), block):
        src = sources[start:start + block]
        d = _rows(dom, src)
        D = _pair_rows(cod, f.assignment[src], f.assignment)
        ratio = D / (d + 1.0)
        ratio[np.arange(len(src)), src] = 0.0
        partner[start:start + len(src)] = ratio.argmax(axis=1)
        need2[start:start + len(src)] = ratio.max(axis=1)
    return need1, need2, partner


def coarse_constant(f: SampledMap, resolution: float = 1e-3, a_max: float = 1e6,
                    max_sources: int | None = 1024, growth_max: float = 0.25,
                    min_annuli: int = 3) -> CoarseMapReport:
    """Minimal A >= 1 with ``|f(x)| >= |x|/A - A`` at every sampled point and
    ``d(f(x), f(x')) <= A d(x, x') + A`` on every sampled pair.

    Both conditions are monotone in A and each point or pair imposes a
    closed-form lower bound, so the minimum is exact; it is reported on the
    ``resolution`` grid (rounded up).  Pairs use every domain point as a
    target and a stratified subset of at most ``max_sources`` sources.

    A finite sample always admits some A, so the verdict is also ``not_coarse``
    when the per-annulus requirement keeps growing (log-log slope above
    ``growth_max``), which is how a divergent constant shows up at desk scale.
    """
    dom = f.domain
    norms = np.asarray(dom.norms, dtype=float)
    sources = _stratified_sources(norms, max_sources)
    need1, need2, partner = _requirements(f, sources)
    i1 = int(np.argmax(need1))
    i2 = int(np.argmax(need2))
    r1, r2 = float(need1[i1]), float(need2[i2])
    exact = max(1.0, r1, r2)
    a, b = int(sources[i2]), int(partner[i2])
    pair = (min(a, b), max(a, b)) if r2 > 0 else None

    keys = annulus_index(norms)
    top = float(norms.max())
    rows = []
    for k in sorted(set(keys.tolist())):
        if k < 0 or 2.0 ** (k + 1) > top:
            continue
        m1 = need1[keys == k]
        m2 = need2[keys[sources] == k]
        req = max(float(m1.max()), float(m2.max()) if len(m2) else 0.0)
        rows.append({"k": int(k), "lower": 2.0 ** k, "requirement": req})
    slope = math.nan
    if len(rows) >= min_annuli:
        slope = loglog_slope([r["lower"] for r in rows],
                             [max(r["requirement"], 1.0) for r in rows])
    growing = len(rows) >= min_annuli and slope > growth_max
    if exact > a_max or growing:
        verdict, A = NOT_COARSE, math.inf
    else:
        verdict = COARSE
        A = math.ceil(exact / resolution - 1e-9) * resolution
        A = max(A, 1.0)
    below = A - resolution if math.isfinite(A) else exact
    viol = int((need1 > below).sum() + (need2 > below).sum())
    return CoarseMapReport(float(A), exact, verdict, i1, pair, r1, r2, rows, slope,
                           len(sources) / max(1, dom.n), viol)


def passes_at(f: SampledMap, A: float, max_sources: int | None = 1024) -> bool:
    sources = _stratified_sources(np.asarray(f.domain.norms, dtype=float), max_sources)
    need1, need2, _ = _requirements(f, sources)
    return bool(need1.max() <= A + 1e-12 and need2.max() <= A + 1e-12)


# ---------------------------------------------------------------------------
# sublinear closeness


def _pointwise_distance(space, a, b, limit=None):
    if not isinstance(space, ConeSpace):
        return space.pair_distances(a, b)
    out = np.zeros(len(a))
    todo = np.flatnonzero(a != b)
    ua, inv = np.unique(a[todo], return_inverse=True)
    for start in range(0, len(ua), 512):
        src = ua[start:start + 512]
        rows = dijkstra(space.graph, directed=False, indices=src,
                        limit=np.inf if limit is None else limit)
        sel = (inv >= start) & (inv < start + len(src))
        out[todo[sel]] = rows[inv[sel] - start, b[todo[sel]]]
    miss = ~np.isfinite(out)
    if miss.any():
        out[miss] = space.pair_distances(a[miss], b[miss])
    return out


@dataclass
class ClosenessReport:
    eps: list
    C_eps: list
    annulus_lower: list
    annulus_ratio: list
    displacement: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    verdict: str
    threshold: float

    @property
    def close(self) -> bool:
        return self.verdict == CLOSE

    def rows(self):
        return [{"eps": e, "C_eps": c} for e, c in zip(self.eps, self.C_eps)]

    def annulus_rows(self):
        return [{"lower": lo, "ratio": r}
                for lo, r in zip(self.annulus_lower, self.annulus_ratio)]


def closeness(f: SampledMap, g: SampledMap, eps_grid=EPS_GRID, threshold: float = 0.05,
              slack=None, limit: float | None = None) -> ClosenessReport:
    """``C_eps = max_x (d(f(x), g(x)) - eps |x|)`` and per-annulus sups of
    ``max(0, d - slack) / |x|``.

    ``slack`` defaults to the sum of both maps' snapping displacements.  The
    verdict is ``sublinearly_close`` when the last annulus ratio is below
    ``threshold`` and no larger than the first.
    """
    if f.domain.ref != g.domain.ref or f.codomain.ref != g.codomain.ref:
        raise InputError("maps must share domain and codomain")
    d = _pointwise_distance(f.codomain, f.assignment, g.assignment, limit)
    norms = np.asarray(f.domain.norms, dtype=float)
    if slack is None:
        slack = f.snap + g.snap
    resid = np.maximum(0.0, d - np.broadcast_to(slack, d.shape))
    eps = [float(e) for e in sorted(eps_grid, reverse=True)]
    c_eps = [float(np.max(d - e * norms)) for e in eps]
    keys = annulus_index(norms)
    top = float(norms.max())
    lows, ratios = [], []
    for k in sorted(set(keys.tolist())):
        if k < 0 or 2.0 ** (k + 1) > top:
            continue
        sel = keys == k
        lows.append(2.0 ** k)
        ratios.append(float(np.max(resid[sel] / norms[sel])))
    ok = bool(ratios) and ratios[-1] < threshold and ratios[-1] <= ratios[0]
    return ClosenessReport(eps, c_eps, lows, ratios, d, resid,
                           CLOSE if ok else NOT_CLOSE, threshold)


@dataclass
class ExtensionReport:
    lower: list
    sups: list
    slope: float
    decreasing: bool


def pullback_difference(f: SampledMap, g: SampledMap, phi: SampledFunction) -> ExtensionReport:
    """Annulus sups of ``|phi o f - phi o g|`` over the domain."""
    if phi.space.ref != f.codomain.ref:
        raise InputError("phi must live on the common codomain")
    diff = np.abs(phi.values[f.assignment] - phi.values[g.assignment])
    norms = np.asarray(f.domain.norms, dtype=float)
    keys = annulus_index(norms)
    top = float(norms.max())
    lows, sups = [], []
    for k in sorted(set(keys.tolist())):
        if k >= 0 and 2.0 ** (k + 1) <= top:
            lows.append(2.0 ** k)
            sups.append(float(diff[keys == k].max()))
    slope = loglog_slope(lows, sups, floor=1e-300) if len(lows) >= 2 else math.nan
    ok = len(sups) >= 2 and sups[-1] <= sups[0] and (sups[-1] == 0 or slope < 0)
    return ExtensionReport(lows, sups, slope, bool(ok))


# ---------------------------------------------------------------------------
# GL+ paths and cone homotopies


@dataclass
class HomotopyPath:
    ts: np.ndarray
    matrices: np.ndarray = field(repr=False)
    dets: np.ndarray
    speed_bound: float
    max_step: float

    @property
    def T(self):
        return self.matrices[0]

    @property
    def steps_ok(self) -> bool:
        h = self.ts[1] - self.ts[0] if len(self.ts) > 1 else 0.0
        return self.max_step <= h * self.speed_bound * (1 + 1e-9) + 1e-12


def _path_parts(T):
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or not 1 <= T.shape[0] <= 4:
        raise InputError("T must be a square matrix of size at most 4")
    det = float(np.linalg.det(T))
    if not det > 0:
        raise PreconditionError("T must have positive determinant", witness=det)
    Q, S = polar(T)
    K = np.real(logm(Q))
    K = (K - K.T) / 2
    lam, V = np.linalg.eigh((S + S.T) / 2)
    return T, K, lam, V


def theta_at(T, t: float) -> np.ndarray:
    """``Theta(t) = exp((1-t) K) V diag(lam^(1-t)) V^T`` with ``T = e^K S``."""
    T, K, lam, V = _path_parts(T)
    if t == 0:
        return T.copy()
    if t == 1:
        return np.eye(len(T))
    s = 1.0 - t
    return expm(s * K) @ (V * lam ** s) @ V.T


def glplus_path(T, steps: int = 64) -> HomotopyPath:
    """Sample the polar-decomposition path from T to I on ``steps`` points."""
    if steps < 2:
        raise InputError("need at least two grid points")
    T, K, lam, V = _path_parts(T)
    n = len(T)
    ts = np.linspace(0.0, 1.0, steps)
    mats = np.empty((steps, n, n))
    for k, t in enumerate(ts):
        s = 1.0 - t
        mats[k] = expm(s * K) @ (V * lam ** s) @ V.T
    mats[0] = T
    mats[-1] = np.eye(n)
    dets = np.linalg.det(mats)
    k_norm = float(np.linalg.norm(K, 2))
    log_norm = float(np.abs(np.log(lam)).max())
    speed = (k_norm + log_norm) * max(1.0, float(lam.max()))
    jumps = np.linalg.norm(np.diff(mats, axis=0), ord=2, axis=(1, 2))
    return HomotopyPath(ts, mats, dets, speed, float(jumps.max()))


@dataclass
class HomotopyReport:
    path: HomotopyPath
    coarse: CoarseMapReport
    start_slice_error: float
    end_slice_error: float
    snap_max: float
    codomain_mesh: float

    @property
    def passed(self) -> bool:
        tol = self.codomain_mesh * (1 + 1e-9)
        return (self.coarse.coarse and bool(np.all(self.path.dets > 0))
                and self.start_slice_error <= tol and self.end_slice_error <= tol)


def cone_homotopy_check(T, cone: ConeSpace, codomain=None, steps: int = 64,
                        max_sources: int | None = 512) -> HomotopyReport:
    """``H(t, x) = Theta(t) x`` on ``[0,1] x_cone X`` into a Euclidean sample.

    The default codomain is a lattice with the same spacing as X reaching
    radius ``max_t |Theta(t)| * |X|``, so snapping stays within one spacing.
    """
    X = cone.x_space
    if X.coords is None or cone.p_space.kind != "interval":
        raise InputError("cone must be an interval over a Euclidean sample")
    path = glplus_path(T, steps)
    tp = cone.p_space.positions[:, 0]
    coords = np.empty((cone.n, X.coords.shape[1]))
    for p, t in enumerate(tp):
        coords[p * X.n:(p + 1) * X.n] = X.coords @ theta_at(T, float(t)).T
    if codomain is None:
        reach = max(np.linalg.norm(m, 2) for m in path.matrices) * X.max_norm
        sp = X.params.get("spacing", X.mesh)
        codomain = build_euclidean_grid(X.coords.shape[1], float(math.ceil(reach + sp)),
                                        X.params.get("density", 8), spacing=sp)
    H = map_from_coords(cone.with_norm("cone"), codomain, coords)
    rep = coarse_constant(H, max_sources=max_sources)
    first = slice(0, X.n)
    last = slice((cone.n_p - 1) * X.n, cone.n)
    tx = X.coords @ np.asarray(T, dtype=float).T
    start_err = float(np.linalg.norm(codomain.coords[H.assignment[first]] - tx, axis=1).max())
    end_err = float(np.linalg.norm(codomain.coords[H.assignment[last]] - X.coords, axis=1).max())
    return HomotopyReport(path, rep, start_err, end_err, H.max_snap, float(codomain.mesh))


# ---------------------------------------------------------------------------
# S^(n-1) x_cone N versus R^n


@dataclass
class EquivalenceReport:
    f: SampledMap
    g: SampledMap
    f_report: CoarseMapReport
    g_report: CoarseMapReport
    gf: ClosenessReport
    fg: ClosenessReport
    gf_bound: np.ndarray = field(repr=False)
    fg_bound: np.ndarray = field(repr=False)
    sphere_mesh: float
    grid_mesh: float

    @property
    def gf_within(self) -> bool:
        return bool(np.all(self.gf.displacement <= self.gf_bound + 1e-9))

    @property
    def fg_within(self) -> bool:
        return bool(np.all(self.fg.displacement <= self.fg_bound + 1e-9))

    @property
    def verdict(self) -> str:
        return CLOSE if self.gf.close and self.fg.close else NOT_CLOSE

    @property
    def passed(self) -> bool:
        return (self.f_report.coarse and self.g_report.coarse and self.gf_within
                and self.fg_within and self.verdict == CLOSE)


def equivalence_witness_Rn(n: int = 2, radius: int = 64, sphere_mesh: float = 0.05,
                           density: int = 32, max_sources: int | None = 1024,
                           threads: int = 1) -> EquivalenceReport:
    """Coarse equivalence between the cone over the sphere and the plane/space.

    ``f(p, k) = k p`` snapped to the grid and ``g(x) = (snap(x/|x|), round|x|)``
    with ``g(0) = (p_0, 0)``.  The composites are compared with identities;
    a point's allowed displacement is ``1 + mesh_X + max(1, |x|) mesh_P``.
    """
    if n not in (2, 3):
        raise InputError("n must be 2 or 3")
    from .spaces import build_halfline

    S = build_sphere_graph(n, sphere_mesh)
    N = build_halfline(int(radius))
    cone = build_cone(S, N, threads=threads)
    grid = build_euclidean_grid(n, float(radius), density)
    mesh_p = float(S.max_edge)
    mesh_x = float(grid.mesh)

    p_idx, k_idx = np.divmod(np.arange(cone.n), N.n)
    k = N.norms[k_idx]
    f = map_from_coords(cone, grid, k[:, None] * S.positions[p_idx])

    r = grid.norms
    unit = np.divide(grid.coords, r[:, None], out=np.zeros_like(grid.coords),
                     where=r[:, None] > 0)
    unit[r == 0] = S.positions[0]
    ang, p_of = cKDTree(S.positions).query(unit)
    ang = 2 * np.arcsin(np.clip(ang / 2, 0, 1))
    k_of = np.minimum(np.rint(r), radius).astype(np.int64)
    snap_g = np.abs(k_of - r) + np.maximum(1.0, r) * ang
    snap_g[r == 0] = 0.0
    g = SampledMap(grid, cone, p_of * N.n + k_of, snap_g)

    f_rep = coarse_constant(f, max_sources=max_sources)
    g_rep = coarse_constant(g, max_sources=max_sources)
    gf_bound = 1 + mesh_x + np.maximum(1.0, cone.cone_norms) * mesh_p
    fg_bound = 1 + mesh_x + np.maximum(1.0, r) * mesh_p
    gf = closeness(compose(g, f), identity(cone), slack=gf_bound - 1,
                   limit=float(gf_bound.max()) * 2)
    fg = closeness(compose(f, g), identity(grid), slack=fg_bound - 1)
    return EquivalenceReport(f, g, f_rep, g_rep, gf, fg, gf_bound, fg_bound,
                             mesh_p, mesh_x)


def interval_grid_cone(interval_mesh: float = 0.125, radius: float = 64.0,
                       density: int = 32, threads: int = 1) -> ConeSpace:
    """``[0,1] x_cone (plane sample)``, the domain of a cone homotopy."""
    return build_cone(build_interval(interval_mesh), build_euclidean_grid(2, radius, density),
                      threads=threads)
