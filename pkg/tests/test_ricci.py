import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conecd.cones import ConeKind
from conecd.errors import DomainError
from conecd.metric_space import circle, product, sphere
from conecd.ricci import (
    CirclePotential,
    ConeTangent,
    SpherePotential,
    WeightedManifoldPoint,
    base_ricci,
    euclid_cone_ricci,
    hess_v_cross_check,
    hess_w_fd_check,
    identity_suite,
    n_ricci,
    product_sphere_curvature_table,
    spherical_cone_ricci,
    unit_tangents,
    w_combo_closed_form,
)

E, S = ConeKind.euclidean(), ConeKind.spherical()
A3 = 1 / math.sqrt(3)


def test_base_ricci_table():
    assert base_ricci(circle(1.0), 0.7) == 0.0
    assert base_ricci(sphere(2, 1.0), [0, 0.5, 0]) == pytest.approx(0.25)
    assert base_ricci(sphere(3, 2.0), [1.0, 0, 0, 0]) == pytest.approx(0.5)
    prod = product(sphere(2, A3), sphere(2, A3))
    assert base_ricci(prod, ([1.0, 0, 0], [0, 0, 0])) == pytest.approx(3.0, abs=1e-14)
    assert base_ricci(prod, ([0.6, 0, 0], [0, 0.8, 0])) == pytest.approx(3.0, abs=1e-14)


def test_n_ricci_on_circle():
    V = CirclePotential((1.0,))
    for th in (0.0, 0.7, 2.0):
        p = WeightedManifoldPoint(circle(1.0), th, V)
        assert n_ricci(p, 1.0, 3.0) == pytest.approx(-math.cos(th) - math.sin(th) ** 2 / 2, abs=1e-15)
    with pytest.raises(DomainError):
        n_ricci(WeightedManifoldPoint(circle(1.0), 0.0, V), 1.0, 1.0)
    assert n_ricci(WeightedManifoldPoint(circle(1.0), 0.0), 1.0, 1.0) == 0.0


def test_products_reject_potentials():
    with pytest.raises(DomainError):
        WeightedManifoldPoint(product(circle(1.0), circle(1.0)), (0.0, 0.0), CirclePotential((1.0,)))


def test_sphere_potential_against_mpmath_derivatives():
    rng = np.random.default_rng(4)
    for a in (1.0, 0.6):
        V = SpherePotential(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, (3, 3)), a)
        x = rng.standard_normal(3)
        x *= a / np.linalg.norm(x)
        u = rng.standard_normal(3)
        u -= (u @ x) / (x @ x) * x
        u /= np.linalg.norm(u)
        c, A = [mp.mpf(float(z)) for z in V.c], [[mp.mpf(float(z)) for z in row] for row in V.A]

        def f(s):
            y = [mp.cos(s / a) * float(x[i]) + a * mp.sin(s / a) * float(u[i]) for i in range(3)]
            return sum(c[i] * y[i] for i in range(3)) + sum(y[i] * A[i][j] * y[j] for i in range(3) for j in range(3))

        mp.mp.dps = 30
        assert V.grad(x, u) == pytest.approx(float(mp.diff(f, 0)), abs=1e-13)
        assert V.hess(x, u) == pytest.approx(float(mp.diff(f, 0, 2)), abs=1e-13)
        assert WeightedManifoldPoint(sphere(2, a), x, V).grad_agreement(u) <= 1e-8


def test_unweighted_identities():
    tan = ConeTangent(1.3, 0.4, -0.2)
    ev = euclid_cone_ricci(0.5, 2, 2.0, tan)
    assert ev.ric_cone == pytest.approx(0.5 - 0.16)
    assert ev.residual <= 1e-15
    sv = spherical_cone_ricci(0.5, 2, 2.0, 1.3, tan)
    assert sv.ric_cone == pytest.approx(0.5 + (1 - 2 * math.cos(1.3) ** 2) * 0.16 + 2 * 0.04)
    assert sv.residual <= 1e-14


def test_identity_boundaries():
    tan = ConeTangent(1.0, 0.3, 0.2)
    for r in (0.0, math.pi, -0.1):
        with pytest.raises(DomainError):
            spherical_cone_ricci(0.0, 1, 2.0, r, tan)
    with pytest.raises(DomainError):
        euclid_cone_ricci(0.0, 2, 1.5, tan)
    with pytest.raises(DomainError):
        euclid_cone_ricci(0.0, 2, 2.0, tan, 1.0, 0.5)
    with pytest.raises(DomainError):
        euclid_cone_ricci(0.0, 1, 2.0, ConeTangent(0.0, 0.3, 0.2))


@pytest.mark.parametrize("kind", [E, S])
@pytest.mark.parametrize("n,N", [(1, 2.0), (2, 3.5), (3, 3.2)])
def test_w_combo_by_finite_differences(kind, n, N):
    for r in (0.3, 1.0, 2.5):
        for vn, t in ((0.7, 0.0), (0.2, -0.9), (1.1, 0.4)):
            chk = hess_w_fd_check(kind, n, N, r, ConeTangent(r, vn, t))
            assert chk.residual <= 1e-5


def test_fd_step_bounds():
    tan = ConeTangent(1.0, 0.3, 0.2)
    with pytest.raises(DomainError):
        hess_w_fd_check(E, 1, 2.0, 1.0, tan, h_fd=1e-2)
    with pytest.raises(DomainError):
        hess_w_fd_check(E, 1, 2.0, 1.0, tan, h_fd=1e-8)
    with pytest.raises(DomainError):
        hess_w_fd_check(E, 2, 2.0, 1.0, tan)


@pytest.mark.parametrize("kind", [E, S])
def test_cone_hessian_of_base_potential(kind):
    V = CirclePotential((0.4, -0.3), (0.8,))
    for r, t in ((0.5, 0.3), (1.2, -0.7), (2.0, 0.0)):
        chk = hess_v_cross_check(kind, V, 0.9, 0.6, r, t)
        assert chk.residual <= 1e-5
        assert chk.extra["cross_residual"] <= 1e-7


@settings(max_examples=50)
@given(r=st.floats(0.1, 3.0), vn=st.floats(0, 2), t=st.floats(-2, 2), lam=st.floats(0.1, 5))
def test_w_combo_is_quadratic(r, vn, t, lam):
    tan = ConeTangent(r, vn, t)
    for kind in (E, S):
        base = w_combo_closed_form(kind, 1, 2.5, tan)
        assert w_combo_closed_form(kind, 1, 2.5, tan.scaled(lam)) == pytest.approx(lam ** 2 * base, abs=1e-12)


def test_threshold_equality_case():
    # base N-Ricci exactly N - 1 in direction v: weighted cone Ricci is >= 0 with equality on base directions
    N, n = 3.0, 2
    for r in (0.5, 1.5):
        lows = [euclid_cone_ricci((N - 1) * tg.v_norm ** 2, n, N, tg).ric_cone_weighted
                for tg in unit_tangents(E, r, 181)]
        assert min(lows) == pytest.approx(0.0, abs=1e-12)
        slows = [spherical_cone_ricci((N - 1) * tg.v_norm ** 2, n, N, r, tg).ric_cone_weighted - N * tg.norm2(S)
                 for tg in unit_tangents(S, r, 181)]
        assert min(slows) == pytest.approx(0.0, abs=1e-12)


def test_unit_tangents_have_unit_norm():
    for kind in (E, S):
        for tg in unit_tangents(kind, 0.8, 31):
            assert tg.norm2(kind) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("r", [0.1, 1.0, 10.0])
def test_product_sphere_table(r):
    tab = product_sphere_curvature_table(r)
    assert tab["base_ric"] == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(tab["sec"], [2 / r ** 2, -1 / r ** 2, -1 / r ** 2, 0.0], atol=1e-12, rtol=0)
    assert abs(tab["cone_ric"]) <= 1e-12
    with pytest.raises(DomainError):
        product_sphere_curvature_table(0.0)


def test_identity_suite_small():
    out = identity_suite(draws=60, seed=3, n_angles=61)
    assert out["max_residual_analytic"] <= 1e-9
    assert out["max_residual_fd"] <= 1e-5
    assert out["threshold_cases"] == 30 and out["threshold_counterexamples"] == 0
