import math

import numpy as np
import pytest

from corona_lab.cone import (
    build_cone,
    build_p,
    cone_distance,
    polyline_length,
    refinement_convergence,
    verify_lower_bound,
)
from corona_lab.errors import InputError, ResourceError
from corona_lab.spaces import build_halfline, build_interval, build_point, build_sphere_graph

import oracles


def _oracle_rows(cone, sources):
    X, P = cone.x_space, cone.p_space
    xe = [(i, i + 1) for i in range(X.n - 1)]
    xl = [float(X.norms[i + 1] - X.norms[i]) for i in range(X.n - 1)]
    adj = oracles.cone_adjacency(P.edges.tolist(), P.lengths.tolist(), P.n, xe, xl,
                                 X.norms.tolist())
    return [oracles.dijkstra(cone.n, adj, s) for s in sources]


@pytest.mark.parametrize("P", [build_sphere_graph(2, math.pi / 4), build_interval(0.25, 2.0)])
def test_dijkstra_matches_heap_oracle(P):
    cone = build_cone(P, build_halfline(12))
    sources = [0, 5, cone.n // 2, cone.n - 1]
    got = cone.rows(sources)
    want = np.array(_oracle_rows(cone, sources))
    assert np.allclose(got, want, rtol=1e-12, atol=0)


def test_interval_example_against_closed_form():
    cone = build_cone(build_interval(0.125, 3.0), build_halfline(32))
    d = cone_distance(cone, (0, 20), (24, 20))
    # descend to radius r, cross at weight max(1, r), climb back
    brute = min(2 * (20 - r) + 3 * max(1, r) for r in range(21))
    assert d == brute == 41.0


def test_circle_antipodes_go_through_the_tip():
    cone = build_cone(build_sphere_graph(2, math.pi / 16), build_halfline(40))
    d = cone_distance(cone, (0, 30), (16, 30))
    assert abs(d - (2 * 29 + math.pi)) < 1e-9


def test_point_factor_is_x():
    X = build_halfline(50)
    cone = build_cone(build_point(), X)
    assert cone_distance(cone, (0, 3), (0, 41)) == 38.0


def test_polyline_is_an_upper_bound():
    cone = build_cone(build_interval(0.25), build_halfline(10))
    pts = [(0, 5), (4, 5)]
    assert cone_distance(cone, *pts) <= polyline_length(cone, pts) + 1e-12


def test_vertex_cap():
    with pytest.raises(ResourceError) as err:
        build_cone(build_interval(0.01), build_halfline(2000), max_vertices=10_000)
    assert err.value.required == 101 * 2001


def test_vertex_ids_and_norm_views():
    cone = build_cone(build_interval(0.5), build_halfline(4))
    v = cone.vertex(2, 3)
    assert v == 13 and tuple(map(int, cone.split(v))) == (2, 3)
    with pytest.raises(InputError):
        cone.vertex(3, 0)
    xv = cone.with_norm("x")
    assert np.array_equal(xv.norms, np.tile(np.arange(5.0), 3))
    assert xv._cache is cone._cache
    with pytest.raises(InputError):
        cone.with_norm("bogus")


def test_lower_bound_reports_literal_version():
    cone = build_cone(build_interval(0.125), build_halfline(32))
    lb = verify_lower_bound(cone, 4.0)
    assert lb.passed and lb.worst_margin >= -lb.tol
    assert lb.literal_worst_margin < 0


def test_refinement_never_increases():
    # 16, 32, 64 polygon vertices: both probes are vertices at every level
    probes = [((1.0, 0.0), 6), ((-1.0, 0.0), 6)]
    rc = refinement_convergence({"kind": "sphere", "mesh": 2 * math.pi / 16},
                                {"kind": "halfline", "n_max": 8}, 3, [probes])
    assert rc.monotone and len(rc.distances) == 3


def test_build_p_rejects_unknown():
    with pytest.raises(InputError):
        build_p({"kind": "torus"})
