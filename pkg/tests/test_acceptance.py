"""Exit criteria, each at its stated tolerance; one PASS/FAIL line per criterion.

Run with ``pytest -m acceptance -s`` to see the lines as they are produced;
they are also collected into a summary section at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from conftest import VERDICTS
from conecd.cd_checker import counterexample_run, loglog_slope, run_cd_check, tau
from conecd.cones import ConeKind, build_cone, cone_distance
from conecd.metric_space import DiscreteMeasure, FiniteMetricMeasureSpace, build_space, circle
from conecd.ricci import identity_suite, product_sphere_curvature_table
from conecd.spectral import build_laplacian, poincare_check, spectrum
from conecd.transport import apex_mass, check_cyclic_monotonicity, solve_ot

from oracles import assignment_min, composition, mp_tau

pytestmark = pytest.mark.acceptance


def verdict(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    VERDICTS.append(line)
    assert ok, line


def _planar(cone):
    th = 2 * math.pi * np.maximum(cone.base_of, 0) / cone.base.n_points
    r = cone.radius_of
    return np.c_[r * np.cos(th), r * np.sin(th)]


def _bump(cone, c, sig):
    X = _planar(cone)
    f = np.exp(-((X - np.asarray(c)) ** 2).sum(1) / (2 * sig ** 2))
    f[cone.as_mms.weight == 0] = 0
    return DiscreteMeasure.from_density(cone.as_mms, f)


def test_c01_isometry_golden():
    t0 = time.perf_counter()
    base = build_space(circle(1.0, 64))
    ec = build_cone(base, ConeKind.euclidean(), 1.0, radial_cells=32)
    X = _planar(ec)
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    err_e = float(np.abs(D - ec.as_mms.dist).max())
    sc = build_cone(base, ConeKind.spherical(), 1.0, radial_cells=32)
    th = 2 * math.pi * np.maximum(sc.base_of, 0) / 64
    r = sc.radius_of
    U = np.c_[np.sin(r) * np.cos(th), np.sin(r) * np.sin(th), np.cos(r)]
    cross = np.linalg.norm(np.cross(U[:, None], U[None]), axis=-1)
    G = np.arctan2(cross, U @ U.T)
    err_s = float(np.abs(G - sc.as_mms.dist).max())
    dt = time.perf_counter() - t0
    verdict(1, err_e <= 1e-12 and err_s <= 1e-12 and dt < 5,
            f"euclidean err {err_e:.2e}, spherical err {err_s:.2e}, {dt:.2f} s")


def test_c02_distortion_coefficients():
    rng = np.random.default_rng(2)
    t = rng.uniform(0, 1, 50)
    exact = bool(np.all(tau(0.0, 3.0, t, rng.uniform(0, 10, 50)) == t))
    cut = tau(2.0, 3.0, 0.4, math.sqrt(2 / 2.0) * math.pi) == math.inf
    worst = 0.0
    for _ in range(1000):
        K = float(rng.uniform(-5, 5))
        N = float(rng.uniform(1.05, 8))
        s = float(rng.uniform(0, 1))
        top = math.pi * math.sqrt((N - 1) / K) if K > 0 else 6.0
        th = float(rng.uniform(0, 0.98 * top))
        worst = max(worst, abs(tau(K, N, s, th) - float(mp_tau(K, N, s, th))))
    verdict(2, exact and cut and worst <= 1e-12,
            f"K=0 exact {exact}, cutoff inf {cut}, oracle err {worst:.2e}")


def test_c03_ricci_identities():
    t0 = time.perf_counter()
    out = identity_suite(draws=1000, seed=0)
    dt = time.perf_counter() - t0
    ok = (out["max_residual_analytic"] <= 1e-9 and out["max_residual_fd"] <= 1e-5
          and out["threshold_counterexamples"] == 0 and dt < 10)
    verdict(3, ok, f"analytic {out['max_residual_analytic']:.2e}, fd {out['max_residual_fd']:.2e}, "
                   f"threshold {out['threshold_counterexamples']}/{out['threshold_cases']} bad, {dt:.2f} s")


def test_c04_product_sphere_table():
    worst = 0.0
    for r in (0.1, 1.0, 10.0):
        tab = product_sphere_curvature_table(r)
        want = np.array([2, -1, -1, 0]) / r ** 2
        worst = max(worst, abs(tab["base_ric"] - 3), float(np.abs(np.array(tab["sec"]) - want).max()),
                    abs(tab["cone_ric"]))
    verdict(4, worst <= 1e-12, f"max error {worst:.2e}")


def test_c05_counterexample():
    t0 = time.perf_counter()
    eps = [0.02, 0.01, 0.005]
    recs = [counterexample_run(0.2, e, 1.0, 35) for e in eps]
    dt = time.perf_counter() - t0
    s_end = loglog_slope(eps, [r.endpoint_entropy for r in recs])
    s_mid = loglog_slope(eps, [r.midpoint_entropy_bound for r in recs])
    cells = max(r.n_cells for r in recs)
    ok = (all(r.violated for r in recs) and abs(s_end - 0.5) <= 0.05 and abs(s_mid - 1) <= 0.1
          and cells <= 1200 and dt < 60)
    gaps = ", ".join(f"{r.convexity_gap:.4f}" for r in recs)
    verdict(5, ok, f"gaps [{gaps}], slopes {s_end:.3f} / {s_mid:.3f}, {cells} cells, {dt:.2f} s")


def _plane_deficit(nb, nr):
    cone = build_cone(build_space(circle(1.0, nb)), ConeKind.euclidean(), 1.0, radial_cells=nr)
    mu0, mu1 = _bump(cone, (-0.3, 0.0), 0.2), _bump(cone, (0.3, 0.1), 0.2)
    _, _, reps = run_cd_check(cone.as_mms, mu0, mu1, 0.0, [2.0], (0.5,), L=1)
    return reps[0].deficit[0]


def test_c06_plane_cd_sanity():
    coarse, fine = _plane_deficit(32, 16), _plane_deficit(64, 32)
    tol = 5 * max(fine, 0.0)
    within = coarse <= tol
    shrink = coarse / fine if fine > 0 else math.inf
    verdict(6, within and (fine <= 0 or shrink >= 1.5),
            f"deficit {coarse:.4f} (32x16) vs {fine:.4f} (64x32), tol {tol:.4f}, shrink {shrink:.2f}x")


def test_c07_apex_mass_trend():
    masses = []
    for nb, nr in ((16, 8), (32, 16), (64, 32)):
        cone = build_cone(build_space(circle(1.0, nb)), ConeKind.euclidean(), 1.0, radial_cells=nr)
        mu0, mu1 = _bump(cone, (-0.45, 0.3), 0.12), _bump(cone, (0.45, 0.3), 0.12)
        masses.append(apex_mass(solve_ot(cone.as_mms, mu0, mu1), cone))
    # the largest reference-measure cell is the stricter of the two readings of
    # "mass of one grid cell"; the largest mu0 cell mass is reported alongside
    cell = float(cone.as_mms.weight.max())
    decreasing = masses[0] > masses[1] > masses[2]
    verdict(7, decreasing and masses[2] <= 2 * cell,
            f"apex mass {[round(m, 5) for m in masses]}, finest cell weight {cell:.5f}, "
            f"finest mu0 cell mass {float(mu0.mass.max()):.5f}")


def test_c08_transport_exactness():
    worst, viol = 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-1, 1, (12, 2))
        s = FiniteMetricMeasureSpace(np.linalg.norm(X[:, None] - X[None], axis=-1), np.ones(12))
        a, b = composition(rng, 6, 6), composition(rng, 6, 6)
        mu0 = DiscreteMeasure.from_masses(s, np.r_[a, np.zeros(6)] / 6)
        mu1 = DiscreteMeasure.from_masses(s, np.r_[np.zeros(6), b] / 6)
        plan = solve_ot(s, mu0, mu1)
        # unit masses on repeated points: the Birkhoff vertices are permutations
        src, dst = np.repeat(np.arange(6), a), np.repeat(np.arange(6, 12), b)
        ref = assignment_min(s.dist[np.ix_(src, dst)] ** 2) / 6
        worst = max(worst, abs(plan.cost - ref))
        viol += len(check_cyclic_monotonicity(plan, 3, 1e-9))
    verdict(8, worst <= 1e-12 and viol == 0, f"max cost gap {worst:.2e}, cycle violations {viol}")


def test_c09_spectral_gap():
    t0 = time.perf_counter()
    cone = build_cone(build_space(circle(1.0, 64)), ConeKind.spherical(), 1.0, radial_cells=32)
    L = build_laplacian(cone.as_mms)
    vals, vecs = spectrum(L, 10)
    rng = np.random.default_rng(0)
    # smooth test functions from the low modes sit close to the bound; white noise would not
    fs = rng.standard_normal((50, 9)) @ vecs[:, 1:].T
    rep = poincare_check(L, fs, N=1.0, slack=0.05)
    dt = time.perf_counter() - t0
    lam = float(vals[1])
    worst = max(r for r in rep.ratios if r is not None)
    verdict(9, 1.8 <= lam <= 2.2 and rep.passed and dt < 30,
            f"lambda1 {lam:.4f}, worst ratio {worst:.4f} (bound 0.5), {dt:.2f} s")


def test_c10_rescaling_law():
    rng = np.random.default_rng(10)
    worst = 0.0
    for kappa in (0.25, 4.0):
        k = math.sqrt(kappa)
        d = rng.uniform(0, math.pi, 2000)
        s, t = rng.uniform(0, math.pi / k, (2, 2000))
        a = cone_distance(ConeKind.with_kappa(kappa), d, s, t)
        b = cone_distance(ConeKind.spherical(), d, k * s, k * t) / k
        worst = max(worst, float(np.abs(a - b).max()))
    verdict(10, worst <= 1e-12, f"max error {worst:.2e}")
