"""Experiment runners behind the command line.

Each runner takes an :class:`ExperimentConfig` and returns a
:class:`RunResult` holding a JSON-able summary, named CSV tables and the
pass/fail verdict of its asserted checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import functions as F
from .cone import build_cone, build_p, cone_distance, refinement_convergence, verify_lower_bound
from .config import ExperimentConfig
from .errors import ConfigError
from .maps import (
    closeness,
    coarse_constant,
    cone_homotopy_check,
    equivalence_witness_Rn,
    interval_grid_cone,
    map_from_coords,
)
from .smoothing import annulus_sups, greedy_net_cover, hat_partition, smooth, verify_appendix_bound
from .spaces import (
    build_halfline,
    build_interval,
    build_space,
    canonical_json,
    quasi_geodesic_check,
    validate_metric,
)
from .tensor import (
    FunctionFamily,
    omega,
    psi_approx,
    roundtrip,
    verify_lambda_bound,
    verify_omega_bound,
)


@dataclass
class RunResult:
    summary: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    passed: bool = True
    failures: list = field(default_factory=list)

    def check(self, name: str, ok: bool, witness=None):
        self.summary.setdefault("checks", {})[name] = bool(ok)
        if not ok:
            self.passed = False
            self.failures.append({"check": name, "witness": witness})


def _space(spec):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("space spec must be an object with a 'kind'")
    return build_space(spec)


def make_function(space, spec) -> F.SampledFunction:
    """``{"name": builder, **params}``; ``psi_P`` takes ``selector`` and ``count``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name == "psi_P":
        fam = F.bump_family(space, int(spec.get("count", len(spec["selector"]))))
        return F.psi_P(spec["selector"], fam)
    if name not in F.BUILDERS:
        raise ConfigError(f"unknown function {name!r}")
    return F.build_function(space, name, **spec)


def p_function(P, spec) -> np.ndarray:
    """Functions on the vertices of P: ``cos``/``sin`` of ``k`` times the
    angle on a circle, ``position`` on an interval, ``sum`` of terms.
    Every form takes ``scale`` (may be ``[re, im]``) and ``offset``."""
    name = spec.get("name")
    scale = spec.get("scale", 1.0)
    scale = complex(*scale) if isinstance(scale, list) else complex(scale)
    offset = complex(spec.get("offset", 0.0))
    if name in ("cos", "sin"):
        if P.positions.shape[1] != 2:
            raise ConfigError("cos/sin need a circle P")
        th = np.arctan2(P.positions[:, 1], P.positions[:, 0])
        base = (np.cos if name == "cos" else np.sin)(spec.get("k", 1) * th)
    elif name == "position":
        base = P.positions[:, 0]
    elif name == "sum":
        base = sum(p_function(P, t) for t in spec["terms"])
    else:
        raise ConfigError(f"unknown P function {name!r}")
    return scale * base + offset


def _scales(space, spec):
    if spec in (None, "dyadic"):
        return F.dyadic_scales(space)
    return [float(s) for s in spec]


# ---------------------------------------------------------------------------


def run_build_space(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    space = _space(cfg.require("space"))
    res = RunResult({"ref": space.ref, "n": space.n, "mesh": space.mesh,
                     "max_norm": space.max_norm})
    header = ["id", "norm"] + ([f"c{j}" for j in range(space.coords.shape[1])]
                               if space.coords is not None else [])
    rows = []
    for i in range(space.n):
        row = [i, float(space.norms[i])]
        if space.coords is not None:
            row += [float(c) for c in space.coords[i]]
        rows.append(row)
    res.tables["points"] = (header, rows)
    res.tables["annuli"] = (["k", "count"], [[k, len(v)] for k, v in sorted(space.annuli.items())])
    if cfg.get("validate", True):
        rep = validate_metric(space, seed=cfg.seed)
        res.summary["metric"] = {k: v for k, v in rep.items() if k != "triangle_witness"}
        res.check("metric", rep["passed"], rep.get("triangle_witness"))
    if "quasi_geodesic_C" in cfg.params:
        q = quasi_geodesic_check(space, float(cfg.params["quasi_geodesic_C"]),
                                 int(cfg.get("trials", 64)), seed=cfg.seed)
        res.summary["quasi_geodesic"] = {"C": q.C, "worst_violation": q.worst_violation,
                                         "disconnected": q.disconnected}
        res.check("quasi_geodesic", q.passed, q.witness)
    return res


def run_cone_distance(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    P = build_p(cfg.require("p"))
    xs = cfg.require("x")
    X = _space(xs)
    cone = build_cone(P, X, max_vertices=int(cfg.get("max_vertices", 100_000)), threads=threads)
    res = RunResult({"ref": cone.ref, "vertices": cone.n})
    rows = []
    for a, b in cfg.get("pairs", []):
        rows.append([a[0], a[1], b[0], b[1], cone_distance(cone, tuple(a), tuple(b))])
    res.tables["distances"] = (["p_a", "x_a", "p_b", "x_b", "distance"], rows)
    if "lower_bound_R" in cfg.params:
        lb = verify_lower_bound(cone, float(cfg.params["lower_bound_R"]))
        res.summary["lower_bound"] = {"R": lb.R, "pairs": lb.pairs, "tol": lb.tol,
                                      "worst_margin": lb.worst_margin,
                                      "literal_worst_margin": lb.literal_worst_margin}
        res.check("lower_bound", lb.passed, lb.witness)
    ref = cfg.get("refinement")
    if ref:
        rc = refinement_convergence(cfg.require("p"), xs, int(ref.get("levels", 3)),
                                    ref["probes"])
        rows = [[lev, m[0], m[1], *d] for lev, m, d in zip(rc.levels, rc.meshes, rc.distances)]
        header = ["level", "p_mesh", "x_step"] + [f"probe{j}" for j in range(len(ref["probes"]))]
        res.tables["refinement"] = (header, rows)
        res.summary["refinement"] = {"monotone": rc.monotone,
                                     "final_relative_change": rc.final_relative_change}
        res.check("refinement_monotone", rc.monotone)
        res.check("refinement_converged",
                  rc.final_relative_change < float(ref.get("max_change", 0.05)))
    return res


def run_classify_function(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    space = _space(cfg.require("space"))
    phi = make_function(space, cfg.require("function"))
    rep = F.classify(phi, _scales(space, cfg.get("scales")), cfg.get("r"))
    res = RunResult({"classification": rep.classification, "slope": rep.slope, "r": rep.r})
    res.tables["scales"] = (
        ["R", "C", "witness_i", "witness_j", "classical_modulus", "classical_witness"],
        [[r["R"], r["C"], r["witness_i"], r["witness_j"], r["classical_modulus"],
          r["classical_witness"]] for r in rep.rows()])
    if "expect" in cfg.params:
        res.check("classification", rep.classification == cfg.params["expect"],
                  rep.classification)
    return res


def run_smooth_verify(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    space = _space(cfg.require("space"))
    f = make_function(space, cfg.require("function"))
    cover = greedy_net_cover(space, float(cfg.get("r", 2.0)))
    pou = hat_partition(cover, space)
    g = smooth(f, pou, cover)
    C_X = float(cfg.get("C_X", space.quasi_geodesic_C))
    rep = verify_appendix_bound(f, g, cover, pou, C_X, _scales(space, cfg.get("scales")))
    res = RunResult({"C_f": rep.C_f, "bound": rep.bound, "N": rep.N, "D": rep.D,
                     "D_bound": pou.D_bound, "d": rep.d, "L": cover.lebesgue_L, "C_X": C_X,
                     "decay_slope": rep.decay_slope, "skipped": rep.skipped})
    res.tables["bounds"] = (["R", "C_g", "bound", "margin", "pass", "witness_i", "witness_j"],
                            [[r["R"], r["C_g"], r["bound"], r["margin"], r["pass"],
                              r["witness_i"], r["witness_j"]] for r in rep.rows])
    lows, sups = annulus_sups(f - g)
    res.tables["annuli"] = (["lower", "sup_abs_f_minus_g"], [list(p) for p in zip(lows, sups)])
    if cfg.get("expect_pass", True):
        bad = next((r for r in rep.rows if not r["pass"]), None)
        res.check("bound", rep.bound_ok, bad)
        res.check("decay", rep.decay_ok, rep.decay_slope)
    else:
        res.check("decay_fails", not rep.decay_ok, rep.decay_slope)
    return res


def _map_coords(space, spec):
    kind = spec.get("kind")
    c = space.coords
    if c is None:
        raise ConfigError("maps by formula need coordinate spaces")
    if kind == "identity":
        return c
    if kind == "scale":
        return float(spec.get("factor", 1.0)) * c
    if kind == "affine":
        return c @ np.asarray(spec["matrix"], dtype=float).T + np.asarray(spec.get("offset", 0.0))
    if kind == "constant":
        return np.broadcast_to(np.asarray(spec.get("point", 0.0), dtype=float), c.shape)
    if kind == "power":
        e = float(spec["exponent"])
        return np.sign(c) * np.abs(c) ** e
    if kind == "sqrt_shift":
        return c + float(spec.get("factor", 1.0)) * np.sqrt(np.abs(c))
    raise ConfigError(f"unknown map kind {kind!r}")


def run_check_map(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    dom = _space(cfg.require("domain"))
    cod = _space(cfg.get("codomain", cfg.require("domain")))
    f = map_from_coords(dom, cod, _map_coords(dom, cfg.require("map")))
    rep = coarse_constant(f, max_sources=cfg.get("max_sources", 1024))
    res = RunResult({"A_lower": rep.A_lower, "A_exact": rep.A_exact, "verdict": rep.verdict,
                     "growth_slope": rep.growth_slope, "coverage": rep.coverage,
                     "norm_witness": rep.norm_witness, "pair_witness": rep.pair_witness,
                     "max_snap": f.max_snap})
    res.tables["annuli"] = (["k", "lower", "requirement"],
                            [[r["k"], r["lower"], r["requirement"]]
                             for r in rep.annulus_requirements])
    expect = bool(cfg.get("expect_coarse", True))
    res.check("coarse", rep.coarse == expect, rep.witness)
    if "compare" in cfg.params:
        g = map_from_coords(dom, cod, _map_coords(dom, cfg.params["compare"]))
        cr = closeness(f, g)
        res.summary["closeness"] = {"verdict": cr.verdict, "C_eps": dict(zip(map(str, cr.eps),
                                                                              cr.C_eps))}
        res.tables["closeness"] = (["eps", "C_eps"], [[e, c] for e, c in zip(cr.eps, cr.C_eps)])
        res.tables["closeness_annuli"] = (["lower", "ratio"],
                                          [[lo, r] for lo, r in zip(cr.annulus_lower,
                                                                   cr.annulus_ratio)])
        res.check("close", cr.close == bool(cfg.get("expect_close", True)), cr.verdict)
    return res


def run_homotopy(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    T = np.asarray(cfg.require("T"), dtype=float)
    cone = interval_grid_cone(float(cfg.get("interval_mesh", 0.125)),
                              float(cfg.get("radius", 64.0)), int(cfg.get("density", 32)),
                              threads=threads)
    rep = cone_homotopy_check(T, cone, steps=int(cfg.get("steps", 64)),
                              max_sources=cfg.get("max_sources", 512))
    A_max = float(cfg.get("A_max", 6.0))
    path = rep.path
    res = RunResult({"A_lower": rep.coarse.A_lower, "verdict": rep.coarse.verdict,
                     "min_det": float(path.dets.min()), "speed_bound": path.speed_bound,
                     "max_step": path.max_step, "start_slice_error": rep.start_slice_error,
                     "end_slice_error": rep.end_slice_error,
                     "codomain_mesh": rep.codomain_mesh, "cone_vertices": cone.n,
                     "coverage": rep.coarse.coverage})
    n = T.shape[0]
    res.tables["path"] = (["t", "det"] + [f"m{i}{j}" for i in range(n) for j in range(n)],
                          [[float(t), float(d), *m.ravel().tolist()]
                           for t, d, m in zip(path.ts, path.dets, path.matrices)])
    res.tables["annuli"] = (["k", "lower", "requirement"],
                            [[r["k"], r["lower"], r["requirement"]]
                             for r in rep.coarse.annulus_requirements])
    res.check("det_positive", bool(np.all(path.dets > 0)))
    res.check("endpoints", bool(np.array_equal(path.matrices[0], T)
                                and np.array_equal(path.matrices[-1], np.eye(n))))
    res.check("step_speed", path.steps_ok, path.max_step)
    res.check("homotopy", rep.passed, rep.coarse.witness)
    res.check("A_max", rep.coarse.A_lower <= A_max, rep.coarse.A_lower)
    return res


def run_equivalence_rn(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    e = equivalence_witness_Rn(int(cfg.get("n", 2)), int(cfg.get("radius", 64)),
                               float(cfg.get("sphere_mesh", 0.05)), int(cfg.get("density", 32)),
                               threads=threads)
    A_max = float(cfg.get("A_max", 3.0))
    res = RunResult({"A_f": e.f_report.A_lower, "A_g": e.g_report.A_lower,
                     "sphere_mesh": e.sphere_mesh, "grid_mesh": e.grid_mesh,
                     "verdict": e.verdict,
                     "gf_max_displacement": float(e.gf.displacement.max()),
                     "fg_max_displacement": float(e.fg.displacement.max()),
                     "gf_worst_slack": float((e.gf.displacement - e.gf_bound).max()),
                     "fg_worst_slack": float((e.fg.displacement - e.fg_bound).max())})
    res.tables["coarse"] = (["map", "A_lower", "A_exact", "growth_slope"],
                            [["f", e.f_report.A_lower, e.f_report.A_exact,
                              e.f_report.growth_slope],
                             ["g", e.g_report.A_lower, e.g_report.A_exact,
                              e.g_report.growth_slope]])
    rows = []
    for name, cr in (("g_f", e.gf), ("f_g", e.fg)):
        rows += [[name, lo, r] for lo, r in zip(cr.annulus_lower, cr.annulus_ratio)]
    res.tables["closeness"] = (["composite", "lower", "ratio"], rows)
    res.check("f_coarse", e.f_report.coarse and e.f_report.A_lower <= A_max, e.f_report.A_lower)
    res.check("g_coarse", e.g_report.coarse and e.g_report.A_lower <= A_max, e.g_report.A_lower)
    res.check("gf_bounded", e.gf_within)
    res.check("fg_bounded", e.fg_within)
    res.check("sublinearly_close", e.verdict == "sublinearly_close", e.verdict)
    return res


def run_tensor_check(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    P = build_p(cfg.get("p", {"kind": "sphere", "dim": 2, "mesh": math.pi / 16}))
    X = build_halfline(int(cfg.get("x_n_max", 64)))
    cone = build_cone(P, X, threads=threads)
    phis = cfg.require("phis")
    psis = cfg.require("psis")
    scales = [float(s) for s in cfg.get("scales", [1, 2, 4, 8, 16, 32])]
    pv = {json_key(s): p_function(P, s) for s in phis}
    qv = {json_key(s): make_function(X, s) for s in psis}
    res = RunResult({"cone_vertices": cone.n})
    rows, worst = [], 0.0
    for a, p in pv.items():
        for b, q in qv.items():
            rep = verify_omega_bound(p, q, cone, scales,
                                     rel_tol=float(cfg.get("rel_tol", 0.10)))
            for r in rep.rows:
                rows.append([a, b, r["R"], r["measured"], r["bound"], r["margin"], r["pass"]])
                if r["bound"] > 0:
                    worst = max(worst, r["measured"] / r["bound"])
            res.check(f"omega[{a}|{b}]", rep.passed)
    res.tables["omega"] = (["phi", "psi", "R", "measured", "bound", "margin", "pass"], rows)
    res.summary["omega_worst_ratio"] = worst

    first_psi = next(iter(qv.values()))
    lrows = []
    for a, p in pv.items():
        lam = verify_lambda_bound(omega(p, first_psi, cone))
        for r in lam.rows:
            lrows.append([a, r["level"], r["measured"], r["bound"], r["margin"], r["pass"]])
        res.check(f"lambda[{a}]", lam.passed)
    res.tables["lambda"] = (["phi", "level", "measured", "bound", "margin", "pass"], lrows)

    terms = [(p, q) for p, q in zip(pv.values(), qv.values())]
    resid = roundtrip(terms, cone)
    res.summary["roundtrip_residual"] = resid
    res.check("roundtrip", resid <= 1e-12, resid)

    pa = cfg.get("psi_approx")
    if pa:
        PI = build_interval(float(pa.get("interval_mesh", 1 / 1024)))
        XS = build_halfline(int(pa.get("x_n_max", 16)))
        fam_terms = [(p_function(PI, t["p"]), make_function(XS, t["x"]).values)
                     for t in pa["terms"]]
        fam = FunctionFamily.from_products(PI, XS, fam_terms)
        errs = [psi_approx(fam, int(n)) for n in pa.get("ns", [4, 8, 16, 32])]
        res.tables["psi_approx"] = (["n", "error", "bound"],
                                    [[e.n, e.error, e.bound] for e in errs])
        res.check("psi_within_bound", all(e.within_bound for e in errs))
        res.check("psi_monotone", all(a.error >= b.error for a, b in zip(errs, errs[1:])))
        if pa.get("check_halving", True):
            ratios = [a.error / b.error for a, b in zip(errs, errs[1:]) if b.error > 0]
            res.summary["psi_halving_ratios"] = ratios
            res.check("psi_halving", all(abs(r - 2) <= 0.2 for r in ratios), ratios)
    return res


def json_key(spec) -> str:
    return canonical_json(spec)


RUNNERS = {
    "build-space": run_build_space,
    "cone-distance": run_cone_distance,
    "classify-function": run_classify_function,
    "smooth-verify": run_smooth_verify,
    "check-map": run_check_map,
    "homotopy": run_homotopy,
    "equivalence-rn": run_equivalence_rn,
    "tensor-check": run_tensor_check,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    try:
        return RUNNERS[cfg.experiment](cfg, threads)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{cfg.experiment}: bad parameters ({exc})") from exc
