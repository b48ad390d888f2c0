"""Slice (Lambda) and product (Omega) operators on a cone, and the
partition-of-unity approximation Psi on the compact factor.

Functions on ``P x_cone X`` are stored as flat arrays indexed by cone vertex
``p * n_x + x``, so a family of slices is the same data reshaped to
``(n_p, n_x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cone import ConeSpace
from .errors import EmptyScaleError, InputError
from .functions import SampledFunction, pair_sup, sublinear_higson_constant
from .smoothing import greedy_net_cover, hat_partition


@dataclass
class FunctionFamily:
    """``p -> phi_p``: one sampled function on X per vertex of P."""

    p_space: object
    x_space: object
    slices: np.ndarray = field(repr=False)
    modulus: float = 0.0
    witness: tuple | None = None

    @classmethod
    def from_slices(cls, P, X, slices):
        slices = np.asarray(slices, dtype=complex)
        if slices.shape != (P.n, X.n):
            raise InputError(f"slices must have shape ({P.n}, {X.n})")
        mod, wit = slice_modulus(P, slices)
        return cls(P, X, slices, mod, wit)

    @classmethod
    def from_products(cls, P, X, terms):
        """``sum_i phi_i(p) psi_i`` for ``terms = [(phi_i on P, psi_i on X)]``."""
        slices = np.zeros((P.n, X.n), dtype=complex)
        for phi, psi in terms:
            slices += np.outer(_vals(phi, P.n), _vals(psi, X.n))
        return cls.from_slices(P, X, slices)

    def slice(self, p: int) -> SampledFunction:
        return SampledFunction(self.x_space, self.slices[p])

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.slices).max()) if self.slices.size else 0.0


def _vals(f, n):
    v = np.asarray(f.values if isinstance(f, SampledFunction) else f, dtype=complex)
    if v.shape != (n,):
        raise InputError(f"expected {n} values, got shape {v.shape}")
    return v


def slice_modulus(P, slices):
    """``max ||phi_p - phi_p'||_sup / d_P(p, p')`` and its vertex pair.

    P carries a shortest-path metric, so the maximum over all pairs is
    attained on an edge; edges are scanned and ties go to the smallest pair.
    """
    if P.n < 2 or len(P.edges) == 0:
        return 0.0, None
    a, b = P.edges[:, 0], P.edges[:, 1]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    gap = np.abs(slices[lo] - slices[hi]).max(axis=1) / P.lengths
    best = float(gap.max())
    tied = np.flatnonzero(gap == best)
    k = tied[np.lexsort((hi[tied], lo[tied]))[0]]
    return best, (int(lo[k]), int(hi[k]))


def _check_cone(f):
    if not isinstance(f.space, ConeSpace):
        raise InputError("function must live on a cone")
    return f.space


def lambda_(phi: SampledFunction) -> FunctionFamily:
    """Re-index a cone function as the slice family ``p -> phi(p, .)``."""
    cone = _check_cone(phi)
    return FunctionFamily.from_slices(cone.p_space, cone.x_space,
                                      phi.values.reshape(cone.n_p, cone.n_x))


def omega(phi, psi, cone: ConeSpace) -> SampledFunction:
    """``(p, x) -> phi(p) psi(x)``."""
    if isinstance(psi, SampledFunction) and psi.space_ref != cone.x_space.ref:
        raise InputError("psi does not live on the cone's X factor")
    vals = np.outer(_vals(phi, cone.n_p), _vals(psi, cone.n_x)).ravel()
    return SampledFunction(cone, vals)


def lipschitz_on_p(P, values):
    """Exact Lipschitz constant of a function on the vertices of P."""
    v = np.asarray(values, dtype=complex)
    return slice_modulus(P, v[:, None])


@dataclass
class LambdaReport:
    modulus: float
    witness: tuple | None
    rows: list
    C_unit: float | None
    shell_modulus: float

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def verify_lambda_bound(phi: SampledFunction, rel_tol: float = 1e-9) -> LambdaReport:
    """Check ``max_{|x| = s, p != p'} |phi(p,x) - phi(p',x)| / d_P <= C_phi(R)``
    for each sampled norm level ``s >= 1`` with ``R`` just below ``s``.

    Both slice points lie outside ``B(R)`` and their cone distance is at most
    ``s d_P``, so the inequality holds exactly on the sample.  Levels inside
    the unit shell are reported separately and never asserted.
    """
    cone = _check_cone(phi).with_norm("cone")
    fam = lambda_(phi)
    P, X = cone.p_space, cone.x_space
    a, b = P.edges[:, 0], P.edges[:, 1]
    gaps = np.abs(fam.slices[a] - fam.slices[b]) / P.lengths[:, None]
    per_x = gaps.max(axis=0) if len(a) else np.zeros(X.n)
    xn = X.norms
    rows = []
    for s in np.unique(xn[xn >= 1.0]):
        R = float(s) * (1 - 1e-9)
        try:
            c, _ = sublinear_higson_constant(SampledFunction(cone, phi.values), R)
        except EmptyScaleError:
            continue
        measured = float(per_x[xn == s].max())
        bound = c / (1 - 1e-9)
        rows.append({"level": float(s), "R": R, "measured": measured, "bound": bound,
                     "margin": bound - measured,
                     "pass": bool(measured <= bound * (1 + rel_tol) + 1e-12)})
    try:
        c_unit = sublinear_higson_constant(SampledFunction(cone, phi.values), 1.0)[0]
    except EmptyScaleError:
        c_unit = None
    shell = float(per_x[xn < 1.0].max()) if np.any(xn < 1.0) else 0.0
    return LambdaReport(fam.modulus, fam.witness, rows, c_unit, shell)


@dataclass
class OmegaReport:
    C_phi: float
    phi_norm: float
    psi_norm: float
    rows: list

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r["pass"] for r in self.rows)


def verify_omega_bound(phi, psi: SampledFunction, cone: ConeSpace, scales,
                       rel_tol: float = 0.10, slack: float = 0.0) -> OmegaReport:
    """``C_Omega(R) <= C_phi ||psi|| + C_psi(R) ||phi||`` at each scale.

    Scale restriction on the cone uses the X norm, matching the hypothesis
    ``|x|, |x'| >= R`` under which the weakened lower bound
    ``d_X + R d_P <= d_cone`` is applied.
    """
    pv = _vals(phi, cone.n_p)
    c_phi, _ = lipschitz_on_p(cone.p_space, pv)
    phi_norm = float(np.abs(pv).max())
    psi_norm = psi.sup_norm
    prod = omega(pv, psi, cone)
    xcone = cone.with_norm("x")
    rows = []
    for R in scales:
        R = float(R)
        try:
            c_psi, _ = sublinear_higson_constant(psi, R)
        except EmptyScaleError:
            continue
        c_om, w = pair_sup(xcone, prod.values, R)
        bound = c_phi * psi_norm + c_psi * phi_norm
        rows.append({"R": R, "measured": c_om, "bound": bound, "margin": bound - c_om,
                     "pass": bool(c_om <= bound * (1 + rel_tol) + slack),
                     "witness_i": w[0], "witness_j": w[1]})
    return OmegaReport(c_phi, phi_norm, psi_norm, rows)


def roundtrip(terms, cone: ConeSpace) -> float:
    """Max pointwise residual of ``Lambda(Omega(sum phi_i x psi_i))`` against
    the slice family ``sum phi_i(p) psi_i``."""
    total = np.zeros(cone.n, dtype=complex)
    for phi, psi in terms:
        total = total + omega(phi, psi, cone).values
    fam = lambda_(SampledFunction(cone, total))
    ref = FunctionFamily.from_products(cone.p_space, cone.x_space, terms)
    return float(np.abs(fam.slices - ref.slices).max()) if total.size else 0.0


@dataclass
class PsiApprox:
    n: int
    r: float
    anchors: np.ndarray
    approx: np.ndarray = field(repr=False)
    error: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.error <= self.bound * (1 + 1e-12) + 1e-15


def psi_approx(family: FunctionFamily, n: int) -> PsiApprox:
    """``Psi(psi_n)(p) = sum_i h_i(p) psi(p_i)`` for a hat partition on P whose
    members have diameter below ``1/n``.

    Members are open balls of radius ``2r`` with ``r = 1/(4n)``; every ``h_i``
    with ``h_i(p) > 0`` has its anchor within ``2r`` of p, so the sup error is
    at most ``modulus * 2r <= modulus / n``.
    """
    if n < 1:
        raise InputError("n must be positive")
    P = family.p_space
    space = P.as_space()
    r = 1.0 / (4 * n)
    cover = greedy_net_cover(space, r)
    pou = hat_partition(cover, space)
    approx = pou.values.T @ family.slices[cover.anchors]
    err = float(np.abs(approx - family.slices).max())
    return PsiApprox(n, r, cover.anchors, approx, err, family.modulus / n)
