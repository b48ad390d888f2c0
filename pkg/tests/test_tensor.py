import math

import numpy as np
import pytest

from corona_lab import functions as F
from corona_lab.cone import build_cone
from corona_lab.errors import InputError
from corona_lab.spaces import build_halfline, build_interval, build_sphere_graph
from corona_lab.tensor import (
    FunctionFamily,
    lambda_,
    lipschitz_on_p,
    omega,
    psi_approx,
    roundtrip,
    verify_lambda_bound,
    verify_omega_bound,
)


@pytest.fixture(scope="module")
def circle_cone():
    return build_cone(build_sphere_graph(2, math.pi / 8), build_halfline(32))


def _angle(P):
    return np.arctan2(P.positions[:, 1], P.positions[:, 0])


def test_lambda_is_star_homomorphism_and_isometric(circle_cone):
    rng = np.random.default_rng(0)
    a = F.SampledFunction(circle_cone, rng.normal(size=circle_cone.n) + 1j * rng.normal(size=circle_cone.n))
    b = F.SampledFunction(circle_cone, rng.normal(size=circle_cone.n))
    la, lb = lambda_(a), lambda_(b)
    assert np.array_equal(lambda_(a * b).slices, la.slices * lb.slices)
    assert np.array_equal(lambda_(a.conj()).slices, np.conj(la.slices))
    assert la.sup_norm == a.sup_norm


def test_p_independent_function_has_zero_modulus(circle_cone):
    psi = F.cos_log(circle_cone.x_space)
    fam = lambda_(omega(np.ones(circle_cone.n_p), psi, circle_cone))
    assert fam.modulus == 0.0


def test_product_modulus(circle_cone):
    P = circle_cone.p_space
    phi = np.cos(_angle(P))
    psi = F.cos_log(circle_cone.x_space)
    fam = lambda_(omega(phi, psi, circle_cone))
    lip, _ = lipschitz_on_p(P, phi)
    assert abs(fam.modulus - lip * psi.sup_norm) < 1e-12


def test_lambda_bound_on_non_product(circle_cone):
    P, X = circle_cone.p_space, circle_cone.x_space
    th = np.repeat(_angle(P), X.n)
    r = np.tile(X.norms, P.n)
    phi = F.SampledFunction(circle_cone, np.cos(th + np.log1p(r)))
    rep = verify_lambda_bound(phi)
    assert rep.passed and rep.rows


def test_omega_with_constant_phi_is_lifted_psi(circle_cone):
    X = circle_cone.x_space
    psi = F.cos_log(X)
    rep = verify_omega_bound(np.ones(circle_cone.n_p), psi, circle_cone, [1, 4, 16])
    for row in rep.rows:
        assert row["measured"] <= F.sublinear_higson_constant(psi, row["R"])[0] + 1e-12


def test_omega_rejects_foreign_psi(circle_cone):
    with pytest.raises(InputError):
        omega(np.ones(circle_cone.n_p), F.cos_log(build_halfline(31)), circle_cone)


def test_roundtrip_three_terms(circle_cone):
    P, X = circle_cone.p_space, circle_cone.x_space
    th = _angle(P)
    terms = [(np.cos(th), F.cos_log(X)), (np.sin(2 * th), F.log_phase(X)),
             (np.ones(P.n), F.norm_ratio(X))]
    assert roundtrip(terms, circle_cone) <= 1e-12


def test_lambda_rejects_non_cone():
    with pytest.raises(InputError):
        lambda_(F.constant(build_halfline(4)))


def test_psi_approx_constant_and_monotone():
    P = build_interval(1 / 256)
    X = build_halfline(8)
    const = FunctionFamily.from_products(P, X, [(np.ones(P.n), F.cos_log(X))])
    assert all(psi_approx(const, n).error < 1e-14 for n in (2, 4, 8))
    p = P.positions[:, 0]
    fam = FunctionFamily.from_products(P, X, [(np.cos(3 * p), F.log_phase(X))])
    errs = [psi_approx(fam, n).error for n in (2, 4, 8, 16)]
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    assert all(psi_approx(fam, n).within_bound for n in (2, 4, 8, 16))


def test_psi_approx_members_are_small():
    P = build_interval(1 / 256)
    X = build_halfline(4)
    fam = FunctionFamily.from_products(P, X, [(P.positions[:, 0], F.constant(X))])
    approx = psi_approx(fam, 8)
    gaps = np.diff(P.positions[approx.anchors, 0])
    assert np.allclose(gaps, approx.r)
