import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conecd.cones import ConeKind, build_cone
from conecd.errors import DomainError, NumericalFailure
from conecd.metric_space import FiniteMetricMeasureSpace, build_space, circle, interval
from conecd.spectral import build_laplacian, fill_distance, poincare_check, spectral_gap, spectrum


@pytest.fixture(scope="module")
def sphere_cone_L():
    cone = build_cone(build_space(circle(1.0, 32)), ConeKind.spherical(), 1.0, radial_cells=16)
    return build_laplacian(cone.as_mms)


def test_constants_in_kernel(sphere_cone_L):
    L = sphere_cone_L
    assert np.array_equal(L.apply(np.full(L.cells.size, 3.7)), np.zeros(L.cells.size))
    assert L.cells.size == 32 * 16  # apexes dropped


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_self_adjoint_and_nonnegative(seed):
    L = build_laplacian(build_space(interval(2.0, 25)))
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, 25))
    assert L.inner(f, L.apply(g)) == pytest.approx(L.inner(L.apply(f), g), abs=1e-10)
    assert L.dirichlet(f) >= -1e-12


def test_sym_matches_matrix(sphere_cone_L):
    L = sphere_cone_L
    sw = np.sqrt(L.w)
    assert np.allclose(L.sym, sw[:, None] * L.matrix() / sw[None, :], atol=1e-10)
    assert np.allclose(L.sym, L.sym.T, atol=1e-12)


def test_circle_gap_approaches_one():
    gaps = [spectral_gap(build_laplacian(build_space(circle(1.0, n)))) for n in (32, 64, 128)]
    errs = [abs(g - 1) for g in gaps]
    assert errs[2] < 0.01
    assert errs[0] >= errs[2]


def test_eigenfunction_rayleigh_quotient(sphere_cone_L):
    L = sphere_cone_L
    vals, vecs = spectrum(L, 4)
    assert abs(vals[0]) <= 1e-10
    for k in range(1, 4):
        f = vecs[:, k]
        assert L.inner(f, f) == pytest.approx(1.0, abs=1e-10)
        assert L.dirichlet(f) == pytest.approx(vals[k], rel=1e-9)
    # coordinate functions of the sphere are the first eigenfunctions, eigenvalue 2
    assert 1.8 <= vals[1] <= 2.2
    assert vals[3] - vals[1] < 0.1


def test_poincare_on_random_and_constant(sphere_cone_L):
    L = sphere_cone_L
    vals, vecs = spectrum(L, 2)
    rng = np.random.default_rng(0)
    funcs = [np.ones(L.cells.size), vecs[:, 1]] + list(rng.standard_normal((10, L.cells.size)))
    rep = poincare_check(L, funcs, N=1.0, slack=0.1)
    assert rep.ratios[0] is None
    assert rep.ratios[1] == pytest.approx(1 / vals[1], rel=1e-9)
    # white noise sits high in the spectrum, far below the bound
    assert max(rep.ratios[2:]) < 0.1
    assert rep.passed and rep.to_dict()["pass"] is True


def test_poincare_flags_large_ratio():
    L = build_laplacian(build_space(circle(1.0, 64)))
    th = np.arange(64) * 2 * math.pi / 64
    rep = poincare_check(L, [np.cos(th)], N=1.0)
    # circle gap is 1, so the ratio is near 1, above the bound 1/2
    assert rep.flagged == [0]


def test_disconnected_graph_raises():
    X = np.r_[np.linspace(0, 1, 10), np.linspace(10, 11, 10)]
    s = FiniteMetricMeasureSpace(np.abs(X[:, None] - X[None]), np.full(20, 0.1))
    with pytest.raises(NumericalFailure):
        build_laplacian(s, eps=0.5)
    with pytest.raises(DomainError):
        build_laplacian(s, eps=0.0)


def test_fill_distance():
    s = build_space(circle(1.0, 16))
    assert fill_distance(s) == pytest.approx(2 * math.pi / 16)


def test_restrict_rejects_bad_length(sphere_cone_L):
    with pytest.raises(DomainError):
        sphere_cone_L.apply(np.ones(5))
