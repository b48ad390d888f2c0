"""Finite samples of pointed proper metric spaces.

A :class:`SampledSpace` stands in for a coarse space X with base point e.
Properness is modelled by dyadic annuli ``{x : 2**k <= |x| < 2**(k+1)}``
that each carry a guaranteed number of sample points.  A
:class:`CompactGraph` stands in for the compact path metric space P of the
cone construction.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ._mix import hash_uniform
from .errors import (
    ConnectivityError,
    ConstructionError,
    DegenerateSpaceError,
    InputError,
)

SCHEMA_VERSION = 1

# dense pair matrices are materialised up to this many points
DENSE_CAP = 5000

CORE = -1  # annulus key for the unit core {|x| < 1}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def params_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:12]


def annulus_index(norms) -> np.ndarray:
    """Dyadic annulus key per norm; ``CORE`` for norms below 1."""
    norms = np.asarray(norms, dtype=float)
    out = np.full(norms.shape, CORE, dtype=np.int64)
    big = norms >= 1.0
    out[big] = np.floor(np.log2(norms[big])).astype(np.int64)
    # guard against log2 rounding at exact powers of two
    lo = np.ldexp(1.0, out[big])
    fix = norms[big] < lo
    out_big = out[big]
    out_big[fix] -= 1
    out[big] = out_big
    return out


@dataclass(frozen=True, eq=False)
class SampledSpace:
    """Finite sample of a pointed metric space.

    Distances come either from Euclidean ``coords`` or from an explicit
    symmetric ``matrix``.  Point ids are the row indices.
    """

    kind: str
    params: dict
    norms: np.ndarray
    base_point: int = 0
    coords: np.ndarray | None = None
    matrix: np.ndarray | None = None
    quasi_geodesic_C: float = 1.0

    @property
    def n(self) -> int:
        return len(self.norms)

    @property
    def dim(self) -> int | None:
        return None if self.coords is None else self.coords.shape[1]

    @cached_property
    def ref(self) -> str:
        return f"{self.kind}:{params_hash(self.params)}"

    @cached_property
    def _dense(self):
        if self.matrix is not None:
            return self.matrix
        if self.n > DENSE_CAP:
            return None
        return self._coord_block(np.arange(self.n), np.arange(self.n))

    def _coord_block(self, rows, cols):
        a = self.coords[rows]
        b = self.coords[cols]
        if a.shape[1] == 1:
            return np.abs(a[:, 0][:, None] - b[:, 0][None, :])
        return cdist(a, b)

    def distances(self, rows, cols) -> np.ndarray:
        """Distance block ``d(rows[i], cols[j])``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        dense = self._dense
        if dense is not None:
            return dense[np.ix_(rows, cols)]
        return self._coord_block(rows, cols)

    def pair_distances(self, a, b) -> np.ndarray:
        """Elementwise ``d(a[k], b[k])``."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        dense = self._dense
        if dense is not None:
            return dense[a, b]
        if self.coords.shape[1] == 1:
            return np.abs(self.coords[a, 0] - self.coords[b, 0])
        return np.sqrt(((self.coords[a] - self.coords[b]) ** 2).sum(axis=1))

    def distance(self, i: int, j: int) -> float:
        self._check_id(i)
        self._check_id(j)
        return float(self.distances([i], [j])[0, 0])

    def dense(self) -> np.ndarray:
        if self._dense is None:
            raise InputError(f"{self.n} points exceed the dense cap {DENSE_CAP}")
        return self._dense

    def _check_id(self, x):
        if not (0 <= int(x) < self.n):
            raise InputError(f"unknown point id {x}")

    @cached_property
    def annuli(self) -> dict[int, np.ndarray]:
        keys = annulus_index(self.norms)
        return {int(k): np.flatnonzero(keys == k) for k in np.unique(keys)}

    @cached_property
    def mesh(self) -> float:
        """Largest nearest-neighbour distance in the sample."""
        if self.n < 2:
            return 0.0
        if self.coords is not None:
            dd, _ = cKDTree(self.coords).query(self.coords, k=2)
            return float(dd[:, 1].max())
        d = self.dense().copy()
        np.fill_diagonal(d, np.inf)
        return float(d.min(axis=1).max())

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())

    def full_annuli(self) -> list[int]:
        """Annulus keys ``k >= 0`` lying entirely inside the sampled ball."""
        top = self.max_norm
        return [k for k in sorted(self.annuli) if k >= 0 and 2.0 ** (k + 1) <= top]


def norm(space: SampledSpace, x: int) -> float:
    space._check_id(x)
    return float(space.norms[x])


def ball(space: SampledSpace, R: float) -> np.ndarray:
    if R < 0:
        raise InputError("radius must be nonnegative")
    return np.flatnonzero(space.norms <= R)


def outside_ball(space, R: float) -> np.ndarray:
    return np.flatnonzero(space.norms > R)


def from_coords(coords, kind="points", params=None, base_point=0, C=1.0) -> SampledSpace:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    norms = np.sqrt(((coords - coords[base_point]) ** 2).sum(axis=1))
    if coords.shape[1] == 1:
        norms = np.abs(coords[:, 0] - coords[base_point, 0])
    if params is None:
        params = {"coords": coords.tolist(), "base_point": base_point}
    return SampledSpace(kind, params, norms, base_point, coords=coords, quasi_geodesic_C=C)


def from_matrix(matrix, kind="matrix", params=None, base_point=0, C=1.0) -> SampledSpace:
    matrix = np.asarray(matrix, dtype=float)
    if params is None:
        params = {"matrix_hash": hashlib.sha256(matrix.tobytes()).hexdigest()}
    return SampledSpace(kind, params, matrix[base_point].copy(), base_point,
                        matrix=matrix, quasi_geodesic_C=C)


def build_halfline(n_max: int, step: float = 1.0) -> SampledSpace:
    """Points ``0, step, ..., n_max*step`` with the line metric."""
    if n_max < 1:
        raise DegenerateSpaceError("half-line needs n_max >= 1")
    if step <= 0:
        raise InputError("step must be positive")
    coords = (np.arange(n_max + 1, dtype=float) * step)[:, None]
    return SampledSpace("halfline", {"n_max": int(n_max), "step": float(step)},
                        coords[:, 0].copy(), 0, coords=coords, quasi_geodesic_C=1.0)


def _lattice(dim, h, radius):
    m = int(math.floor(radius / h + 1e-9))
    axis = np.arange(-m, m + 1, dtype=float) * h
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[np.sqrt((pts ** 2).sum(axis=1)) <= radius + 1e-12]


def build_euclidean_grid(dim: int, max_radius: float, density: int,
                         spacing: float | None = None, jitter: float = 0.0,
                         seed: int = 0) -> SampledSpace:
    """Quasi-uniform lattice sample of the closed ball of radius ``max_radius``.

    The bulk is a cubic lattice of step ``spacing`` (default ``max_radius/32``
    in dimension <= 2, ``max_radius/8`` above).  Inner dyadic annuli that
    would get fewer than ``density`` lattice points are resampled on a
    lattice refined by powers of two, and the unit core uses the finest step.
    Optional ``jitter`` displaces non-base points by up to ``jitter*step``
    per axis through the 64-bit mixer, keyed by ``seed``.
    """
    if dim not in (1, 2, 3, 4):
        raise InputError("dim must be in 1..4")
    if density < dim + 1:
        raise InputError("density must be at least dim+1")
    if max_radius <= 2:
        raise InputError("max_radius must exceed 2")
    if spacing is None:
        spacing = max_radius / (32.0 if dim <= 2 else 8.0)
    params = {"dim": dim, "max_radius": float(max_radius), "density": int(density),
              "spacing": float(spacing), "jitter": float(jitter), "seed": int(seed)}

    bulk = _lattice(dim, spacing, max_radius)
    r_bulk = np.sqrt((bulk ** 2).sum(axis=1))
    k_top = int(math.floor(math.log2(max_radius))) - 1
    keep = np.ones(len(bulk), dtype=bool)
    pieces = []
    finest = spacing
    for k in range(0, k_top + 1):
        lo, hi = 2.0 ** k, 2.0 ** (k + 1)
        in_ann = (r_bulk >= lo) & (r_bulk < hi)
        if in_ann.sum() >= density:
            continue
        keep &= ~in_ann
        h = spacing
        for _ in range(16):
            h /= 2.0
            fine = _lattice(dim, h, hi)
            rf = np.sqrt((fine ** 2).sum(axis=1))
            fine = fine[(rf >= lo) & (rf < hi)]
            if len(fine) >= density:
                break
        else:
            raise ConstructionError(f"annulus k={k} cannot reach density {density}")
        pieces.append(fine)
        finest = min(finest, h)
    core_mask = r_bulk < 1.0
    keep &= ~core_mask
    core = _lattice(dim, finest, 1.0)
    core = core[np.sqrt((core ** 2).sum(axis=1)) < 1.0]
    pts = np.concatenate([bulk[keep], core] + pieces, axis=0)

    if jitter > 0:
        ids = np.arange(len(pts) * dim).reshape(len(pts), dim)
        pts = pts + (hash_uniform(ids, seed) - 0.5) * 2.0 * jitter * spacing
        pts[np.all(np.abs(pts) < jitter * spacing + 1e-15, axis=1)] = 0.0

    r = np.sqrt((pts ** 2).sum(axis=1))
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(dim))) + (r,))
    pts = pts[order]
    norms = np.sqrt((pts ** 2).sum(axis=1))
    if norms[0] != 0.0:
        raise ConstructionError("origin missing from the sample")
    space = SampledSpace("euclidean_grid", params, norms, 0, coords=pts,
                         quasi_geodesic_C=1.0)
    ann = space.annuli
    for k in range(0, k_top + 1):
        if len(ann.get(k, ())) < density:
            raise ConstructionError(f"annulus k={k} has fewer than {density} points")
    return space


# ---------------------------------------------------------------------------
# compact path metric spaces


@dataclass(frozen=True, eq=False)
class CompactGraph:
    """Weighted graph whose shortest-path metric models a compact P."""

    kind: str
    params: dict
    positions: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    dist: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @property
    def max_edge(self) -> float:
        return float(self.lengths.max()) if len(self.lengths) else 0.0

    @property
    def mesh(self) -> float:
        return float(self.params.get("mesh", self.max_edge))

    @cached_property
    def ref(self) -> str:
        return f"{self.kind}:{params_hash(self.params)}"

    def as_space(self) -> SampledSpace:
        return from_matrix(self.dist, kind=self.kind, params=self.params, base_point=0)


def _graph_from_edges(kind, params, positions, edges, lengths) -> CompactGraph:
    n = len(positions)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lengths = np.asarray(lengths, dtype=float)
    adj = csr_matrix((np.concatenate([lengths, lengths]),
                      (np.concatenate([edges[:, 0], edges[:, 1]]),
                       np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n))
    if n > 1:
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp > 1:
            raise ConstructionError(f"mesh too coarse: graph has {ncomp} components")
    dist = shortest_path(adj, method="D", directed=False) if n > 1 else np.zeros((1, 1))
    return CompactGraph(kind, params, np.asarray(positions, dtype=float), edges, lengths, dist)


def build_point() -> CompactGraph:
    """One-vertex P, the degenerate cone factor."""
    return CompactGraph("point", {}, np.zeros((1, 1)), np.zeros((0, 2), dtype=np.int64),
                        np.zeros(0), np.zeros((1, 1)))


def build_interval(mesh: float, length: float = 1.0) -> CompactGraph:
    """``[0, length]`` as a path graph with ``ceil(length/mesh)`` equal segments."""
    if not (0 < mesh < length):
        raise ConstructionError("interval mesh must lie in (0, length)")
    m = int(math.ceil(length / mesh - 1e-12))
    pos = np.linspace(0.0, length, m + 1)
    edges = np.stack([np.arange(m), np.arange(1, m + 1)], axis=1)
    return _graph_from_edges("interval", {"mesh": float(mesh), "length": float(length)},
                             pos[:, None], edges, np.diff(pos))


def _arc(u, v):
    return np.arccos(np.clip((u * v).sum(axis=-1), -1.0, 1.0))


def build_sphere_graph(dim: int, mesh: float) -> CompactGraph:
    """Geodesic graph on the unit sphere S^(dim-1), dim in {2, 3}.

    S^1 is a regular polygon whose edges carry exact arc lengths.  S^2 uses a
    Fibonacci point set of spacing about ``mesh`` with edges between points
    at arc distance at most ``2*mesh``.
    """
    if not (0 < mesh < math.pi):
        raise ConstructionError("sphere mesh must lie in (0, pi)")
    params = {"dim": int(dim), "mesh": float(mesh)}
    if dim == 2:
        m = int(math.ceil(2 * math.pi / mesh - 1e-12))
        m = max(m, 3)
        ang = 2 * math.pi * np.arange(m) / m
        pos = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        edges = np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1)
        lengths = np.full(m, 2 * math.pi / m)
        return _graph_from_edges("sphere", params, pos, edges, lengths)
    if dim == 3:
        count = int(math.ceil(4 * math.pi / mesh ** 2))
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = math.pi * (1 + 5 ** 0.5) * i
        rad = np.sqrt(1 - z ** 2)
        pos = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
        pairs = np.array(sorted(cKDTree(pos).query_pairs(2 * math.sin(mesh))), dtype=np.int64)
        if len(pairs) == 0:
            raise ConstructionError("mesh too coarse: no edges")
        return _graph_from_edges("sphere", params, pos, pairs,
                                 _arc(pos[pairs[:, 0]], pos[pairs[:, 1]]))
    raise InputError("sphere dim must be 2 or 3")


# ---------------------------------------------------------------------------
# diagnostics


def validate_metric(space, max_triples: int = 2_000_000, tol: float = 1e-9,
                    seed: int = 0) -> dict:
    """Check symmetry, identity and the triangle inequality.

    Exhaustive when ``n**3 <= max_triples``, otherwise on a seeded sample
    of triples.  Returns a dict with ``passed`` and the worst violation.
    """
    n = space.n
    ids = np.arange(n)
    d = space.distances(ids, ids) if n <= DENSE_CAP else None
    report = {"n": n, "symmetric": True, "identity": True, "triangle_worst": 0.0}
    if d is not None:
        report["symmetric"] = bool(np.array_equal(d, d.T))
        report["identity"] = bool(np.all(np.diag(d) == 0))
    if n ** 3 <= max_triples and d is not None:
        worst = 0.0
        witness = None
        for k in range(n):
            viol = d - (d[:, k][:, None] + d[k, :][None, :])
            m = float(viol.max())
            if m > worst:
                worst = m
                i, j = np.unravel_index(int(viol.argmax()), viol.shape)
                witness = (int(i), int(j), k)
        report["exhaustive"] = True
    else:
        rng = np.random.default_rng(seed)
        t = rng.integers(0, n, size=(max(1, max_triples // 10), 3))
        dij = space.pair_distances(t[:, 0], t[:, 1])
        dik = space.pair_distances(t[:, 0], t[:, 2])
        dkj = space.pair_distances(t[:, 2], t[:, 1])
        viol = dij - dik - dkj
        worst = float(max(viol.max(), 0.0))
        witness = tuple(int(v) for v in t[int(viol.argmax())]) if worst > 0 else None
        report["exhaustive"] = False
    report["triangle_worst"] = worst
    report["triangle_witness"] = witness
    report["passed"] = report["symmetric"] and report["identity"] and worst <= tol
    return report


@dataclass
class QuasiGeodesicReport:
    C: float
    trials: int
    worst_violation: float
    witness: tuple | None
    disconnected: bool
    passed: bool


def _step_graph(space, C):
    n = space.n
    if space.coords is not None:
        pairs = np.array(sorted(cKDTree(space.coords).query_pairs(C + 1e-12)), dtype=np.int64)
        pairs = pairs.reshape(-1, 2)
        w = space.pair_distances(pairs[:, 0], pairs[:, 1])
    else:
        d = space.dense()
        i, j = np.nonzero(np.triu(d <= C, k=1))
        pairs = np.stack([i, j], axis=1)
        w = d[i, j]
    w = np.maximum(w, 1e-300)
    return csr_matrix((np.concatenate([w, w]),
                       (np.concatenate([pairs[:, 0], pairs[:, 1]]),
                        np.concatenate([pairs[:, 1], pairs[:, 0]]))), shape=(n, n))


def _chain_violation(space, chain, C):
    """Worst violation of the two-sided inequality for the step map of a chain.

    The chain ``c_0..c_m`` is parametrised proportionally to its length on
    ``[0, d(c_0, c_m)]``; ``f`` is constant on each piece ``[t_i, t_{i+1})``.
    Returns (violation, (i, j)).
    """
    chain = np.asarray(chain)
    m = len(chain) - 1
    if m == 0:
        return 0.0, None
    steps = space.pair_distances(chain[:-1], chain[1:])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    D = space.distance(int(chain[0]), int(chain[-1]))
    t = D * cum / cum[-1]
    t_next = np.concatenate([t[1:], [t[-1]]])
    d = space.distances(chain, chain)
    i, j = np.triu_indices(m + 1, k=0)
    upper = d[i, j] - (C * np.maximum(0.0, t[j] - t_next[i]) + C)
    upper[i == j] = -np.inf
    lower = (t_next[j] - t[i]) / C - C - d[i, j]
    viol = np.maximum(upper, lower)
    k = int(viol.argmax())
    return float(viol[k]), (int(chain[i[k]]), int(chain[j[k]]))


def quasi_geodesic_check(space: SampledSpace, C: float, trials: int = 64,
                         seed: int = 0, tol: float = 1e-9) -> QuasiGeodesicReport:
    """Sample pairs and test the C-quasi-geodesic inequality along chains.

    Chains are shortest paths in the graph joining sample points at distance
    at most C.  A pair that this graph cannot connect fails the check.
    """
    if C < 1:
        raise InputError("C must be at least 1")
    g = _step_graph(space, C)
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, space.n, size=(trials, 2))
    worst, witness, disconnected = -np.inf, None, False
    for src in np.unique(pairs[:, 0]):
        dist, pred = dijkstra(g, directed=False, indices=int(src), return_predecessors=True)
        for dst in pairs[pairs[:, 0] == src, 1]:
            if not np.isfinite(dist[dst]):
                return QuasiGeodesicReport(C, trials, math.inf, (int(src), int(dst)), True, False)
            chain = [int(dst)]
            while chain[-1] != src:
                chain.append(int(pred[chain[-1]]))
            v, w = _chain_violation(space, chain[::-1], C)
            if v > worst:
                worst, witness = v, w
    worst = max(worst, 0.0) if worst != -np.inf else 0.0
    return QuasiGeodesicReport(C, trials, worst, witness, disconnected, worst <= tol)


# ---------------------------------------------------------------------------
# serialization

SPACE_BUILDERS = {
    "halfline": lambda p: build_halfline(p["n_max"], p["step"]),
    "euclidean_grid": lambda p: build_euclidean_grid(
        p["dim"], p["max_radius"], p["density"], p.get("spacing"),
        p.get("jitter", 0.0), p.get("seed", 0)),
}


def build_space(spec: dict) -> SampledSpace:
    """Build from ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "halfline":
        return build_halfline(int(spec["n_max"]), float(spec.get("step", 1.0)))
    if kind == "euclidean_grid":
        return build_euclidean_grid(int(spec["dim"]), float(spec["max_radius"]),
                                    int(spec["density"]), spec.get("spacing"),
                                    float(spec.get("jitter", 0.0)), int(spec.get("seed", 0)))
    raise InputError(f"unknown space kind {kind!r}")


def space_to_json(space: SampledSpace) -> dict:
    points = []
    for i in range(space.n):
        entry = {"id": i, "norm": float(space.norms[i])}
        if space.coords is not None:
            entry["coords"] = [float(c) for c in space.coords[i]]
        points.append(entry)
    return {"schema_version": SCHEMA_VERSION, "kind": space.kind, "params": space.params,
            "points": points, "base_point": int(space.base_point)}


def space_from_json(doc: dict) -> SampledSpace:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported schema_version {doc.get('schema_version')}")
    if doc["kind"] not in SPACE_BUILDERS:
        raise InputError(f"kind {doc['kind']!r} cannot be rebuilt from params")
    space = SPACE_BUILDERS[doc["kind"]](doc["params"])
    if space.n != len(doc["points"]):
        raise InputError("point count does not match the rebuilt space")
    norms = np.array([p["norm"] for p in doc["points"]])
    if not np.array_equal(norms, space.norms):
        raise InputError("norms do not match the rebuilt space")
    return space


def connected_at_scale(space: SampledSpace, scale: float) -> bool:
    g = _step_graph(space, scale)
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


__all__ = [
    "SampledSpace", "CompactGraph", "norm", "ball", "outside_ball", "build_halfline",
    "build_euclidean_grid", "build_interval", "build_sphere_graph", "build_point",
    "from_coords", "from_matrix", "validate_metric", "quasi_geodesic_check",
    "space_to_json", "space_from_json", "build_space", "annulus_index", "DENSE_CAP",
    "ConnectivityError",
]
