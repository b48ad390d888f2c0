"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion lines are
printed in the terminal summary (and inline with ``-s``).
"""
import functools
import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from corona_lab import functions as F
from corona_lab.cli import main as cli_main
from corona_lab.cone import build_cone, cone_distance, refinement_convergence, verify_lower_bound
from corona_lab.maps import cone_homotopy_check, equivalence_witness_Rn, glplus_path, interval_grid_cone
from corona_lab.smoothing import b_hl_constant, greedy_net_cover, hat_partition, smooth, verify_appendix_bound
from corona_lab.spaces import (
    build_euclidean_grid,
    build_halfline,
    build_interval,
    build_point,
    build_sphere_graph,
    from_coords,
)
from corona_lab.tensor import (
    FunctionFamily,
    omega,
    psi_approx,
    roundtrip,
    verify_lambda_bound,
    verify_omega_bound,
)

import oracles
from conftest import random_space

# pinned tolerances and limits
ORACLE_SPACES = 24
ORACLE_MAX_POINTS = 500
ORACLE_RUNTIME_S = 10.0
WITNESS_RUNTIME_S = 30.0
APPENDIX_REL_TOL = 0.10
APPENDIX_DECAY_SLOPE = -0.8
APPENDIX_RUNTIME_S = 60.0
CONE_LEVELS = 3
CONE_FINAL_CHANGE = 0.05
CONE_RUNTIME_S = 120.0
CONE_MAX_VERTICES = 100_000
OMEGA_REL_TOL = 0.10
ROUNDTRIP_TOL = 1e-12
HALVING_REL_TOL = 0.10
EQUIV_A_MAX = 3.0
EQUIV_SPHERE_MESH = 0.05
SLOPE_TARGET, SLOPE_TOL = 0.5, 0.1
HOMOTOPY_STEPS = 64
HOMOTOPY_A_MAX = 6.0

RESULTS = {}


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                line = f"FAIL criterion {number:2d}: {title} ({type(exc).__name__})"
                RESULTS[number] = line
                print(line)
                raise
            line = (f"PASS criterion {number:2d}: {title} "
                    f"[{time.perf_counter() - t0:.1f}s]" + (f" {detail}" if detail else ""))
            RESULTS[number] = line
            print(line)
        return run
    return wrap


def _oracle_inputs(seed):
    space = random_space(seed)
    rng = np.random.default_rng(1000 + seed)
    n = space.n
    if seed % 4 == 0:
        vals = np.round(rng.uniform(-2, 2, n))  # heavy ties
    elif seed % 4 == 1:
        vals = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    else:
        vals = np.sin(space.norms) + 0.1 * rng.normal(size=n)
    R = float(np.quantile(space.norms, 0.3)) + 1e-7
    nn = np.sort(space.distances(np.arange(n), np.arange(n)), axis=1)[:, 1]
    r = float(np.median(nn)) * 1.5
    return space, F.SampledFunction(space, vals), R, r


@criterion(1, "exact oracle agreement of C(R), classical modulus and B_hL constant")
def test_criterion_1_oracle_equivalence():
    cases = [_oracle_inputs(seed) for seed in range(ORACLE_SPACES)]
    assert len(cases) >= 20 and all(c[0].n <= ORACLE_MAX_POINTS for c in cases)
    t0 = time.perf_counter()
    got = []
    for space, phi, R, r in cases:
        got.append((F.sublinear_higson_constant(phi, R),
                    F.classical_higson_modulus(phi, r, R),
                    b_hl_constant(phi, R)))
    elapsed = time.perf_counter() - t0
    for (space, phi, R, r), (c, m, b) in zip(cases, got):
        dist = oracles.make_dist(space.coords, space.matrix)
        vals = phi.values.tolist() if np.any(phi.values.imag) else phi.values.real.tolist()
        norms = space.norms.tolist()
        assert c == oracles.pair_sup(dist, vals, norms, R)
        assert m == oracles.modulus(dist, vals, norms, r, R)
        assert b == oracles.pair_sup(dist, vals, norms, R, offset=1.0)
    assert elapsed < ORACLE_RUNTIME_S
    return f"{len(cases)} spaces, toolkit time {elapsed:.2f}s"


@criterion(2, "256 psi_P at mutual sup-distance 1, all sublinear Higson")
def test_criterion_2_witness_family():
    t0 = time.perf_counter()
    X = build_halfline(2 ** 14)
    fam = F.bump_family(X, 8)
    scales = [2.0 ** k for k in range(2, 13)]
    vals, labels = [], []
    for sel in itertools.product([0, 1], repeat=8):
        f = F.psi_P(sel, fam)
        vals.append(f.values.real)
        labels.append(F.classify(f, scales).classification)
    V = np.array(vals)
    live = np.flatnonzero(np.any(V != 0, axis=0))  # elsewhere every psi_P vanishes
    W = V[:, live]
    D = np.abs(W[:, None, :] - W[None, :, :]).max(axis=2)
    elapsed = time.perf_counter() - t0
    assert len(V) == 256
    assert np.all(D[~np.eye(256, dtype=bool)] == 1.0)
    assert labels.count(F.SUBLINEAR) == 256
    assert elapsed < WITNESS_RUNTIME_S


@criterion(3, "appendix bound C_g <= 4NDC_f(C_X+2d) and decay of f - g")
def test_criterion_3_appendix_bound():
    t0 = time.perf_counter()
    X = build_halfline(4096)
    f = F.higson_plus_noise(X, seed=0)
    cover = greedy_net_cover(X, 2.0)
    pou = hat_partition(cover, X)
    g = smooth(f, pou, cover)
    scales = [2.0 ** k for k in range(4, 12)]
    rep = verify_appendix_bound(f, g, cover, pou, X.quasi_geodesic_C, scales,
                                rel_tol=APPENDIX_REL_TOL, slope_max=APPENDIX_DECAY_SLOPE)
    elapsed = time.perf_counter() - t0
    assert rep.rows and all(R > 2 * rep.d for R in (r["R"] for r in rep.rows))
    assert all(r["C_g"] <= r["bound"] * (1 + APPENDIX_REL_TOL) for r in rep.rows)
    assert rep.decay_slope <= APPENDIX_DECAY_SLOPE
    assert elapsed < APPENDIX_RUNTIME_S
    return f"max C_g {max(r['C_g'] for r in rep.rows):.3g} vs bound {rep.bound:.3g}, " \
           f"decay slope {rep.decay_slope:.3f}"


@criterion(4, "cone metric: point factor, refinement, weakened lower bound")
def test_criterion_4_cone_metric():
    t0 = time.perf_counter()
    X = build_halfline(200)
    cone = build_cone(build_point(), X)
    ids = np.arange(X.n)
    assert np.array_equal(cone.distances(ids, ids), X.distances(ids, ids))
    rng = np.random.default_rng(4)
    cloud = from_coords(np.vstack([[0.0, 0.0], rng.uniform(-30, 30, size=(150, 2))]))
    cone2 = build_cone(build_point(), cloud, adjacency="complete")
    ids = np.arange(cloud.n)
    assert np.array_equal(cone2.distances(ids, ids), cloud.distances(ids, ids))

    probes = [((0.0, 20), (3.0, 20)), ((0.0, 4), (1.5, 12)), ((1.0, 30), (2.0, 1))]
    rc = refinement_convergence({"kind": "interval", "mesh": 0.125, "length": 3.0},
                                {"kind": "halfline", "n_max": 32}, CONE_LEVELS, probes)
    assert rc.complete and len(rc.distances) == CONE_LEVELS
    assert rc.monotone and rc.final_relative_change < CONE_FINAL_CHANGE

    lb_cone = build_cone(build_interval(0.125), build_halfline(32))
    lb = verify_lower_bound(lb_cone, 4.0, tol=lb_cone.mesh)
    assert lb.passed

    big = build_cone(build_interval(1 / 29), build_euclidean_grid(2, 64, 32),
                     max_vertices=CONE_MAX_VERTICES)
    assert big.n <= CONE_MAX_VERTICES
    d = cone_distance(big, (0, 0), (big.n_p - 1, big.n_x - 1))
    assert math.isfinite(d) and d > 0
    elapsed = time.perf_counter() - t0
    assert elapsed < CONE_RUNTIME_S
    return f"lower-bound margin {lb.worst_margin:.3g}, {big.n} vertices"


def _circle_inputs():
    S = build_sphere_graph(2, math.pi / 16)
    X = build_halfline(64)
    cone = build_cone(S, X)
    th = np.arctan2(S.positions[:, 1], S.positions[:, 0])
    phis = [np.cos(th), np.sin(th), np.cos(2 * th), 0.5 + 0.5 * np.sin(th),
            (np.cos(th) + 1j * np.sin(2 * th)) / 1.5]
    fam = F.bump_family(X, 3)
    psis = [F.constant(X), F.cos_log(X), F.norm_ratio(X), F.psi_P([1, 0, 1], fam),
            F.log_phase(X)]
    return cone, phis, psis


@criterion(5, "Omega and Lambda bounds on S^1 x_cone half-line, exact roundtrip")
def test_criterion_5_omega_lambda():
    cone, phis, psis = _circle_inputs()
    scales = [1, 2, 4, 8, 16, 32]
    worst = 0.0
    for phi in phis:
        for psi in psis:
            rep = verify_omega_bound(phi, psi, cone, scales, rel_tol=OMEGA_REL_TOL)
            assert rep.passed
            worst = max(worst, max(r["measured"] / r["bound"] for r in rep.rows))
    for phi, psi in zip(phis, psis[1:] + psis[:1]):
        lam = verify_lambda_bound(omega(phi, psi, cone))
        assert lam.rows and lam.passed
    terms = list(zip(phis, psis))
    assert roundtrip(terms, cone) <= ROUNDTRIP_TOL
    assert roundtrip(terms[:1], cone) <= ROUNDTRIP_TOL
    return f"25 products, worst measured/bound {worst:.3f}"


@criterion(6, "Psi approximation halves with n and meets modulus/n")
def test_criterion_6_psi_approx():
    P = build_interval(1 / 1024)
    X = build_halfline(16)
    p = P.positions[:, 0]
    smooth_fam = FunctionFamily.from_products(
        P, X, [(np.sin(1.3 * p), F.cos_log(X)), (p ** 2, F.norm_ratio(X))])
    errs = [psi_approx(smooth_fam, n).error for n in (4, 8, 16, 32)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(abs(r - 2) <= 2 * HALVING_REL_TOL for r in ratios)
    linear = FunctionFamily.from_products(P, X, [(p, F.cos_log(X))])
    for n in (4, 8, 16, 32):
        approx = psi_approx(linear, n)
        assert approx.error <= linear.modulus / n
    return "halving ratios " + ", ".join(f"{r:.3f}" for r in ratios)


@criterion(7, "S^1 x_cone N coarsely equivalent to R^2")
def test_criterion_7_equivalence():
    e = equivalence_witness_Rn(2, 64, EQUIV_SPHERE_MESH)
    assert e.sphere_mesh <= EQUIV_SPHERE_MESH
    assert e.f_report.coarse and e.f_report.A_lower <= EQUIV_A_MAX
    assert e.g_report.coarse and e.g_report.A_lower <= EQUIV_A_MAX
    assert e.gf_within and e.fg_within
    assert e.verdict == "sublinearly_close"
    return f"A_f {e.f_report.A_lower}, A_g {e.g_report.A_lower}"


@criterion(8, "exp o phi_s classical only; sqrt differences bounded iff s = t")
def test_criterion_8_discrimination():
    X = build_halfline(2 ** 14)
    rep = F.classify(F.exp_sqrt(X, 1.0), [2.0 ** k for k in range(4, 14)])
    assert rep.classification == F.CLASSICAL_ONLY
    assert abs(rep.slope - SLOPE_TARGET) <= SLOPE_TOL
    for s, t in [(1, 1), (1, 4), (1, 1.21)]:
        assert F.sqrt_difference_growth(s, t, X).bounded == (s == t)
    return f"slope {rep.slope:.3f}"


@criterion(9, "GL+ paths and cone homotopies for 2I, rotation, diag(3,1/3)")
def test_criterion_9_homotopy():
    cone = interval_grid_cone(0.125, 64.0, 32)
    As = []
    for T in (2 * np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]), np.diag([3.0, 1 / 3])):
        path = glplus_path(T, HOMOTOPY_STEPS)
        assert len(path.dets) == HOMOTOPY_STEPS and np.all(path.dets > 0)
        assert np.array_equal(path.matrices[0], T)
        assert np.array_equal(path.matrices[-1], np.eye(2))
        rep = cone_homotopy_check(T, cone, steps=HOMOTOPY_STEPS)
        assert math.isfinite(rep.coarse.A_lower) and rep.coarse.A_lower <= HOMOTOPY_A_MAX
        assert rep.passed
        As.append(rep.coarse.A_lower)
    return "A_lower " + ", ".join(f"{a:.3f}" for a in As)


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@criterion(10, "identical configs give byte-identical CSVs")
def test_criterion_10_determinism(tmp_path):
    names = ["cone_interval", "classify_exp_sqrt", "map_sqrt_close", "equivalence_r2",
             "smooth_noise"]
    count = 0
    for name in names:
        cfg = CONFIGS / f"{name}.json"
        kind = json.loads(cfg.read_text())["experiment"]
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}-{rep}"
            assert cli_main([kind, "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out)
        csvs = sorted(p.name for p in outs[0].glob("*.csv"))
        assert csvs
        for c in csvs:
            assert (outs[0] / c).read_bytes() == (outs[1] / c).read_bytes()
            count += 1
        assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()
    return f"{count} CSVs compared"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
