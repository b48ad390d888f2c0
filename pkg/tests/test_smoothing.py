import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corona_lab import functions as F
from corona_lab.errors import InputError
from corona_lab.smoothing import (
    annulus_sups,
    b_hl_constant,
    greedy_net_cover,
    hat_partition,
    smooth,
    truncate,
    verify_appendix_bound,
)
from corona_lab.spaces import build_euclidean_grid, build_halfline, from_coords


def _brute_cover_stats(space, members):
    n = space.n
    d = [[space.distance(i, j) for j in range(n)] for i in range(n)]
    sets = [set(m.tolist()) for m in members]
    diam = max(max(d[i][j] for i in m for j in m) for m in sets)
    degree = max(sum(x in m for m in sets) for x in range(n))
    L = math.inf
    for x in range(n):
        best = 0.0
        for m in sets:
            if x not in m:
                continue
            out = [y for y in range(n) if y not in m]
            best = max(best, min(d[x][y] for y in out) if out else math.inf)
        L = min(L, best)
    return L, diam, degree


def test_halfline_cover_constants():
    X = build_halfline(200)
    cover = greedy_net_cover(X, 2.0)
    L, d, N = _brute_cover_stats(X, cover.members)
    assert (cover.lebesgue_L, cover.diameter_d, cover.degree_N) == (L, d, N) == (3.0, 6.0, 4)


def test_grid_cover_constants_match_brute_force():
    G = build_euclidean_grid(2, 8, 6, spacing=1.0)
    cover = greedy_net_cover(G, 1.0)
    assert (cover.lebesgue_L, cover.diameter_d, cover.degree_N) == \
        _brute_cover_stats(G, cover.members)


def test_cover_rejects_sub_mesh_radius():
    with pytest.raises(InputError):
        greedy_net_cover(build_halfline(10), 0.5)


def test_single_member_cover_has_infinite_lebesgue_number():
    cover = greedy_net_cover(build_halfline(3), 10.0)
    assert len(cover.members) == 1 and cover.lebesgue_L == math.inf


def test_partition_properties():
    X = build_halfline(300)
    cover = greedy_net_cover(X, 2.0)
    pou = hat_partition(cover, X)
    assert np.allclose(pou.values.sum(axis=0), 1.0) and np.all(pou.values >= 0)
    for a, m in enumerate(cover.members):
        support = np.flatnonzero(pou.values[a] > 0)
        assert set(support) <= set(m.tolist())
    assert 0 < pou.lipschitz_D <= pou.D_bound


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60), st.floats(1.0, 4.0))
def test_partition_on_random_clouds(seed, n, r):
    pts = np.sort(np.random.default_rng(seed).uniform(0, 30, n))
    pts = np.concatenate([[0.0], pts])
    s = from_coords(pts)
    r = max(r, s.mesh)
    cover = greedy_net_cover(s, r)
    pou = hat_partition(cover, s)
    assert np.allclose(pou.values.sum(axis=0), 1.0)
    assert pou.lipschitz_D <= pou.D_bound * (1 + 1e-12)


def test_smoothing_pipeline_passes():
    X = build_halfline(2048)
    f = F.higson_plus_noise(X, seed=3)
    cover = greedy_net_cover(X, 2.0)
    pou = hat_partition(cover, X)
    g = smooth(f, pou, cover)
    rep = verify_appendix_bound(f, g, cover, pou, 1.0, [16, 64, 256, 1024])
    assert rep.passed
    assert rep.skipped == []


def test_square_wave_fails_decay():
    X = build_halfline(2048)
    f = F.square_wave(X, 4.0)
    cover = greedy_net_cover(X, 2.0)
    pou = hat_partition(cover, X)
    rep = verify_appendix_bound(f, smooth(f, pou, cover), cover, pou, 1.0, [16, 64, 256])
    assert not rep.decay_ok
    lows, sups = annulus_sups(f - smooth(f, pou, cover), min_k=4)
    assert min(sups) > 0.3


def test_unit_step_constant_grows_linearly():
    X = build_halfline(1024)
    f = F.unit_step(X, 500.0)
    cs = [b_hl_constant(f, R)[0] for R in (16, 32, 64)]
    assert cs == [8.0, 16.0, 32.0]


def test_truncate():
    X = build_halfline(1024)
    f = F.decaying_noise(X, seed=1, amplitude=8.0)
    R, h, err = truncate(f, 0.1)
    assert err < 0.1 and np.all(h.values[X.norms >= R] == 0)
