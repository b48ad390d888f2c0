"""The Euclidean cone P x_cone X as a weighted product graph.

A path moves either in P at fixed x, paying ``max(1, |x|) * d_P``, or in X
at fixed p, paying ``d_X``.  Mixed moves split into these two at no extra
cost, so graph distances bound the continuum cone metric from above and
decrease as the meshes are refined.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import ConnectivityError, EmptyScaleError, InputError, ResourceError
from .spaces import (
    build_halfline,
    build_interval,
    build_point,
    build_sphere_graph,
    params_hash,
)

MAX_VERTICES = 100_000


def _x_edges(X, radius):
    if radius == "complete":
        i, j = np.triu_indices(X.n, k=1)
    elif X.coords is not None:
        pairs = np.array(sorted(cKDTree(X.coords).query_pairs(radius)), dtype=np.int64)
        pairs = pairs.reshape(-1, 2)
        i, j = pairs[:, 0], pairs[:, 1]
    else:
        d = X.dense()
        i, j = np.nonzero(np.triu(d <= radius, k=1))
    return i, j, X.pair_distances(i, j)


def default_adjacency(X) -> float:
    """X-edge radius: nearest neighbours on a line, knight moves in a lattice."""
    if X.n < 2:
        return 0.0
    if X.dim == 1:
        return 1.01 * X.mesh
    return 2.3 * X.mesh


@dataclass(frozen=True, eq=False)
class ConeSpace:
    """Product vertex set P x X with cached single-source distances.

    Vertex ``(p, x)`` has id ``p * n_x + x``.  ``norm_kind`` picks the norm
    used by scale-restricted sups: ``"cone"`` is the distance to the base
    vertex ``(0, e)``, ``"x"`` is ``|x|`` in X.
    """

    p_space: object
    x_space: object
    graph: csr_matrix = field(repr=False)
    adjacency: object = None
    norm_kind: str = "cone"
    threads: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_p(self) -> int:
        return self.p_space.n

    @property
    def n_x(self) -> int:
        return self.x_space.n

    @property
    def n(self) -> int:
        return self.n_p * self.n_x

    coords = None
    dim = None

    @property
    def base_point(self) -> int:
        return self.vertex(0, self.x_space.base_point)

    @property
    def ref(self) -> str:
        return f"cone:{params_hash([self.p_space.ref, self.x_space.ref, str(self.adjacency)])}"

    @property
    def mesh(self) -> float:
        return max(self.x_space.mesh, self.p_space.max_edge)

    def vertex(self, p: int, x: int) -> int:
        if not (0 <= p < self.n_p and 0 <= x < self.n_x):
            raise InputError(f"no vertex ({p}, {x})")
        return int(p) * self.n_x + int(x)

    def split(self, v):
        v = np.asarray(v)
        return v // self.n_x, v % self.n_x

    def with_norm(self, kind: str) -> "ConeSpace":
        if kind not in ("cone", "x"):
            raise InputError("norm kind must be 'cone' or 'x'")
        return ConeSpace(self.p_space, self.x_space, self.graph, self.adjacency, kind,
                         self.threads, self._cache)

    @property
    def x_norms(self) -> np.ndarray:
        return np.tile(self.x_space.norms, self.n_p)

    @property
    def cone_norms(self) -> np.ndarray:
        return self.row(self.base_point)

    @property
    def norms(self) -> np.ndarray:
        return self.x_norms if self.norm_kind == "x" else self.cone_norms

    def _run(self, sources):
        sources = np.asarray(sources, dtype=np.int64)
        if self.threads > 1 and len(sources) > 1:
            chunks = np.array_split(sources, self.threads)
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(
                    lambda c: dijkstra(self.graph, directed=False, indices=c), chunks))
            return np.vstack([p.reshape(len(c), -1) for p, c in zip(parts, chunks)])
        return dijkstra(self.graph, directed=False, indices=sources).reshape(len(sources), -1)

    def rows(self, sources, cache: bool = True) -> np.ndarray:
        sources = np.asarray(sources, dtype=np.int64)
        missing = [int(s) for s in dict.fromkeys(sources.tolist()) if s not in self._cache]
        if not cache:
            out = np.empty((len(sources), self.n))
            have = {int(s) for s in sources} - set(missing)
            got = dict(zip(missing, self._run(missing))) if missing else {}
            for k, s in enumerate(sources):
                out[k] = self._cache[int(s)] if int(s) in have else got[int(s)]
            return out
        if missing:
            for s, r in zip(missing, self._run(missing)):
                self._cache[s] = r
        return np.stack([self._cache[int(s)] for s in sources])

    def row(self, v: int) -> np.ndarray:
        return self.rows([v])[0]

    def distances(self, rows, cols) -> np.ndarray:
        return self.rows(rows)[:, np.asarray(cols, dtype=np.int64)]

    def pair_distances(self, a, b, chunk: int = 512) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = np.empty(len(a))
        uniq = np.unique(a)
        for start in range(0, len(uniq), chunk):
            src = uniq[start:start + chunk]
            block = self.rows(src, cache=False)
            where = {int(s): k for k, s in enumerate(src)}
            sel = np.isin(a, src)
            out[sel] = block[[where[int(s)] for s in a[sel]], b[sel]]
        return out

    def distance(self, i: int, j: int) -> float:
        return float(self.row(i)[j])


def build_cone(P, X, adjacency="auto", max_vertices: int = MAX_VERTICES,
               threads: int = 1) -> ConeSpace:
    """Product graph with P-moves weighted ``max(1, |x|) d_P`` and X-moves ``d_X``.

    ``adjacency`` is an X-edge radius, ``"complete"`` for all X pairs, or
    ``"auto"`` for :func:`default_adjacency`.
    """
    n_p, n_x = P.n, X.n
    if n_p * n_x > max_vertices:
        raise ResourceError(f"{n_p * n_x} product vertices exceed the cap {max_vertices}",
                            required=n_p * n_x)
    if adjacency == "auto":
        adjacency = default_adjacency(X)
    xi, xj, xw = _x_edges(X, adjacency)
    pi, pj, pw = P.edges[:, 0], P.edges[:, 1], P.lengths

    p_off = np.arange(n_p)[:, None] * n_x
    src = [(p_off + xi[None, :]).ravel()]
    dst = [(p_off + xj[None, :]).ravel()]
    wts = [np.broadcast_to(xw[None, :], (n_p, len(xw))).ravel()]
    if len(pi):
        scale = np.maximum(1.0, X.norms)
        xs = np.arange(n_x)
        src.append((pi[:, None] * n_x + xs[None, :]).ravel())
        dst.append((pj[:, None] * n_x + xs[None, :]).ravel())
        wts.append((pw[:, None] * scale[None, :]).ravel())
    src, dst, wts = (np.concatenate(a) for a in (src, dst, wts))
    wts = np.maximum(wts, 1e-300)
    n = n_p * n_x
    graph = csr_matrix((np.concatenate([wts, wts]),
                        (np.concatenate([src, dst]), np.concatenate([dst, src]))),
                       shape=(n, n))
    return ConeSpace(P, X, graph, adjacency, "cone", threads)


def polyline_length(cone: ConeSpace, points) -> float:
    """``sum d_X(x_j, x_{j+1}) + max(1, |x_j|, |x_{j+1}|) d_P(p_j, p_{j+1})``."""
    points = list(points)
    if not points:
        raise InputError("empty polyline")
    X, P = cone.x_space, cone.p_space
    total = 0.0
    for (p0, x0), (p1, x1) in zip(points[:-1], points[1:]):
        total += X.distance(x0, x1)
        total += max(1.0, X.norms[x0], X.norms[x1]) * P.dist[p0, p1]
    return float(total)


def cone_distance(cone: ConeSpace, a, b) -> float:
    d = cone.distance(cone.vertex(*a), cone.vertex(*b))
    if not math.isfinite(d):
        raise ConnectivityError(f"{a} and {b} are not connected in the product graph")
    return d


@dataclass
class LowerBoundReport:
    R: float
    pairs: int
    tol: float
    worst_margin: float
    witness: tuple | None
    passed: bool
    literal_worst_margin: float
    literal_witness: tuple | None

    def rows(self):
        yield {"R": self.R, "pairs": self.pairs, "tol": self.tol,
               "worst_margin": self.worst_margin, "passed": self.passed,
               "literal_worst_margin": self.literal_worst_margin}


def verify_lower_bound(cone: ConeSpace, R: float, tol: float | None = None,
                       max_vertices: int = 5000) -> LowerBoundReport:
    """Check ``d_X(x,x') + R d_P(p,p') <= d_cone + tol`` over pairs beyond R.

    Also records the worst margin of the version with ``max(|x|, |x'|)``
    in place of R; that version is reported, never enforced.  Margins are
    ``d_cone - lhs``, so negative means violated.
    """
    X, P = cone.x_space, cone.p_space
    if tol is None:
        tol = X.mesh + P.max_edge
    xn = cone.x_norms
    ids = np.flatnonzero(xn > R)
    if len(ids) < 2:
        raise EmptyScaleError(f"no cone pairs with |x| > {R}")
    if len(ids) > max_vertices:
        raise ResourceError(f"{len(ids)} vertices beyond R; cap is {max_vertices}",
                            required=len(ids))
    dc = cone.distances(ids, ids)
    pv, xv = cone.split(ids)
    dx = X.distances(xv, xv)
    dp = P.dist[np.ix_(pv, pv)]
    margin = dc - (dx + R * dp)
    np.fill_diagonal(margin, np.inf)
    k = int(np.argmin(margin))
    i, j = np.unravel_index(k, margin.shape)
    worst = float(margin[i, j])
    big = np.maximum(xn[ids][:, None], xn[ids][None, :])
    lit = dc - (dx + big * dp)
    np.fill_diagonal(lit, np.inf)
    li, lj = np.unravel_index(int(np.argmin(lit)), lit.shape)
    return LowerBoundReport(
        R, len(ids) * (len(ids) - 1) // 2, tol, worst,
        (int(ids[i]), int(ids[j])), worst >= -tol,
        float(lit[li, lj]), (int(ids[li]), int(ids[lj])))


def build_p(spec: dict):
    kind = spec["kind"]
    if kind == "point":
        return build_point()
    if kind == "interval":
        return build_interval(spec["mesh"], spec.get("length", 1.0))
    if kind == "sphere":
        return build_sphere_graph(spec.get("dim", 2), spec["mesh"])
    raise InputError(f"unknown P kind {kind!r}")


@dataclass
class ConvergenceReport:
    levels: list
    meshes: list
    probes: list
    distances: list
    differences: list
    monotone: bool
    final_relative_change: float
    complete: bool


def _locate_p(P, position):
    pos = np.asarray(position, dtype=float).reshape(-1)
    if P.positions.shape[1] == 1:
        return int(np.argmin(np.abs(P.positions[:, 0] - pos[0])))
    return int(np.argmin(((P.positions - pos) ** 2).sum(axis=1)))


def refinement_convergence(p_params: dict, x_params: dict, levels: int, probes,
                           max_vertices: int = MAX_VERTICES) -> ConvergenceReport:
    """Recompute probe cone distances with P mesh and X step halved per level.

    ``probes`` are pairs of ``(p_position, x_norm)`` points; they sit on
    vertices present at every level.  Distances must not increase from one
    level to the next, since finer graphs only add paths.
    """
    if levels < 2:
        raise InputError("need at least two levels")
    if x_params.get("kind", "halfline") != "halfline":
        raise InputError("refinement is implemented for half-line X")
    dists, meshes, done = [], [], []
    complete = True
    for lev in range(levels):
        pp = dict(p_params)
        if pp["kind"] != "point":
            pp["mesh"] = p_params["mesh"] / 2 ** lev
        step = x_params.get("step", 1.0) / 2 ** lev
        n_max = int(round(x_params["n_max"] * 2 ** lev))
        try:
            P = build_p(pp)
            X = build_halfline(n_max, step)
            cone = build_cone(P, X, max_vertices=max_vertices)
        except ResourceError:
            complete = False
            break
        row = []
        for (pa, xa), (pb, xb) in probes:
            a = (_locate_p(P, pa), int(round(xa / step)))
            b = (_locate_p(P, pb), int(round(xb / step)))
            row.append(cone_distance(cone, a, b))
        dists.append(row)
        meshes.append((pp.get("mesh", 0.0), step))
        done.append(lev)
    arr = np.array(dists)
    diffs = (arr[1:] - arr[:-1]).tolist() if len(arr) > 1 else []
    monotone = bool(np.all(arr[1:] <= arr[:-1] + 1e-9)) if len(arr) > 1 else True
    if len(arr) > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(arr[-1] - arr[-2]) / np.where(arr[-2] > 0, arr[-2], 1.0)
        final = float(rel.max())
    else:
        final = math.nan
    return ConvergenceReport(done, meshes, [list(map(list, p)) for p in probes],
                             arr.tolist(), diffs, monotone, final, complete)
