"""N-Ricci tensors of weighted model spaces and their cones.

Tangent vectors of a cone at (x, r) are pairs (v, t) with v tangent to the
base and t radial.  Their squared norm is r^2 |v|^2 + t^2 on the Euclidean
cone and sin^2(r) |v|^2 + t^2 on the spherical cone.  Cones carry the extra
radial potential W = -(N - n) log r, respectively -(N - n) log sin r, so that
exp(-W) reproduces the radial weight r^(N - n) (sin^(N - n) r) on top of the
Riemannian volume of the (n + 1)-dimensional cone.

Every closed-form Hessian term has a finite-difference counterpart computed
from an explicit curve through the point, with central differences and one
Richardson step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cones import ConeKind
from .errors import DomainError
from .metric_space import ManifoldDescriptor

H_FD = 1e-4


# -- potentials ---------------------------------------------------------------


class Potential:
    """Potential V on a base manifold.

    Subclasses supply the value along unit-speed geodesics,
    ``along(x, u, sigma) = V(exp_x(sigma u))``, and analytic ``grad(x, v)``
    (the differential applied to v) and ``hess(x, v)`` (Hess V(v, v)).
    """

    def along(self, x, u, sigma: float) -> float:
        raise NotImplementedError

    def grad(self, x, v) -> float:
        raise NotImplementedError

    def hess(self, x, v) -> float:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False


class ZeroPotential(Potential):
    def along(self, x, u, sigma):
        return 0.0

    def grad(self, x, v):
        return 0.0

    def hess(self, x, v):
        return 0.0

    @property
    def is_constant(self):
        return True


@dataclass
class CirclePotential(Potential):
    """Trigonometric polynomial V(theta) = sum a_k cos(k theta) + b_k sin(k theta), k >= 1.

    Base points are angles; tangent vectors are signed arc-length speeds on a
    circle of the given radius.
    """

    cos_coeffs: tuple[float, ...] = (1.0,)
    sin_coeffs: tuple[float, ...] = ()
    radius: float = 1.0

    def _derivs(self, theta):
        v = d1 = d2 = 0.0
        for k, a in enumerate(self.cos_coeffs, start=1):
            v += a * math.cos(k * theta)
            d1 -= a * k * math.sin(k * theta)
            d2 -= a * k * k * math.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            v += b * math.sin(k * theta)
            d1 += b * k * math.cos(k * theta)
            d2 -= b * k * k * math.sin(k * theta)
        return v, d1, d2

    def value(self, theta):
        return self._derivs(theta)[0]

    def along(self, x, u, sigma):
        return self.value(x + sigma * float(np.sign(u)) / self.radius)

    def grad(self, x, v):
        return self._derivs(x)[1] * v / self.radius

    def hess(self, x, v):
        return self._derivs(x)[2] * v * v / self.radius**2

    @property
    def is_constant(self):
        return not any(self.cos_coeffs) and not any(self.sin_coeffs)


@dataclass
class SpherePotential(Potential):
    """Restriction of F(y) = <c, y> + <y, A y> to the sphere |y| = radius in R^(k+1).

    Base points are embedded vectors y; tangent vectors are ambient vectors
    orthogonal to y.  Uses Hess_S F(v, v) = D^2F(v, v) - <DF, y> |v|^2 / a^2.
    """

    c: np.ndarray
    A: np.ndarray | None = None
    radius: float = 1.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        d = self.c.size
        self.A = np.zeros((d, d)) if self.A is None else np.asarray(self.A, dtype=float)
        self.A = (self.A + self.A.T) / 2

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return float(self.c @ y + y @ self.A @ y)

    def along(self, x, u, sigma):
        a = self.radius
        y = math.cos(sigma / a) * np.asarray(x) + a * math.sin(sigma / a) * np.asarray(u)
        return self.value(y)

    def _dF(self, y):
        return self.c + 2 * self.A @ y

    def grad(self, x, v):
        return float(self._dF(np.asarray(x)) @ np.asarray(v))

    def hess(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(2 * v @ self.A @ v - (self._dF(x) @ x) * (v @ v) / self.radius**2)

    @property
    def is_constant(self):
        return not self.c.any() and not self.A.any()


# -- finite differences -------------------------------------------------------


def central_d1(f: Callable[[float], float], h: float = H_FD) -> float:
    """f'(0) by central differences with one Richardson step over {h, h/2}."""
    def d(s):
        return (f(s) - f(-s)) / (2 * s)
    return (4 * d(h / 2) - d(h)) / 3


def central_d2(f: Callable[[float], float], h: float = H_FD) -> float:
    """f''(0) by central differences with one Richardson step over {h, h/2}."""
    f0 = f(0.0)

    def d(s):
        return (f(s) - 2 * f0 + f(-s)) / (s * s)
    return (4 * d(h / 2) - d(h)) / 3


def fd_grad(V: Potential, x, v, h: float = H_FD) -> float:
    """Differential of V at x applied to v, from values along the geodesic in direction v."""
    nv = _norm(v)
    if nv == 0:
        return 0.0
    u = np.asarray(v, dtype=float) / nv
    return nv * central_d1(lambda s: V.along(x, u, s), h)


def fd_hess(V: Potential, x, v, h: float = H_FD) -> float:
    nv = _norm(v)
    if nv == 0:
        return 0.0
    u = np.asarray(v, dtype=float) / nv
    return nv * nv * central_d2(lambda s: V.along(x, u, s), h)


def _norm(v) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float))))


# -- base manifolds -----------------------------------------------------------


def _split(desc: ManifoldDescriptor, v):
    """Per-factor pieces of a product tangent vector (a sequence with one entry per factor)."""
    if desc.kind != "product":
        return [(desc, v)]
    if len(v) != len(desc.factors):
        raise DomainError("product tangent vector needs one component per factor")
    out = []
    for f, vf in zip(desc.factors, v):
        out.extend(_split(f, vf))
    return out


def _leaf_kinds(desc: ManifoldDescriptor) -> set[str]:
    if desc.kind == "product":
        return set().union(*(_leaf_kinds(f) for f in desc.factors))
    return {desc.kind}


def base_ricci(desc: ManifoldDescriptor, v) -> float:
    """Ric(v, v) on a circle, round sphere or product of these.

    A sphere of dimension k and radius a has Ric = (k - 1)/a^2 g; products add
    the factor contributions.
    """
    total = 0.0
    for f, vf in _split(desc, v):
        if f.kind == "circle":
            continue
        if f.kind == "sphere":
            total += (f.dim - 1) / f.radius**2 * _norm(vf) ** 2
        else:
            raise DomainError(f"no analytic Ricci table for {f.kind!r}")
    return total


@dataclass
class WeightedManifoldPoint:
    """A point x of a model manifold with potential V (dm = exp(-V) dvol)."""

    descriptor: ManifoldDescriptor
    x: object = None
    V: Potential = field(default_factory=ZeroPotential)

    def __post_init__(self):
        if not _leaf_kinds(self.descriptor) <= {"circle", "sphere"}:
            raise DomainError("only circles, spheres and their products have Ricci tables")
        if self.descriptor.kind == "product" and not self.V.is_constant:
            raise DomainError("potentials on products are not supported")

    @property
    def n(self) -> int:
        return self.descriptor.topological_dim

    def grad_agreement(self, v, h: float = H_FD) -> float:
        """|analytic - finite-difference| for the differential of V along v."""
        return abs(self.V.grad(self.x, v) - fd_grad(self.V, self.x, v, h))


def n_ricci(point: WeightedManifoldPoint, v, N: float) -> float:
    """Ric(v, v) + Hess V(v, v) - (dV(v))^2 / (N - n).

    Examples
    --------
    >>> from conecd.metric_space import circle
    >>> p = WeightedManifoldPoint(circle(1.0), 0.0, CirclePotential((1.0,)))
    >>> round(n_ricci(p, 1.0, 2.0), 12)
    -1.0
    """
    n = point.n
    V = point.V
    ric = base_ricci(point.descriptor, v)
    if V.is_constant:
        if N < n:
            raise DomainError("N must be >= n")
        return ric
    if N <= n:
        raise DomainError("N must exceed n for a nonconstant potential")
    g = V.grad(point.x, v)
    return ric + V.hess(point.x, v) - g * g / (N - n)


# -- cone identities ----------------------------------------------------------


@dataclass(frozen=True)
class ConeTangent:
    """Tangent vector (v, t) at cone point (x, r), stored through |v| and t."""

    r: float
    v_norm: float
    t: float

    def norm2(self, kind: ConeKind) -> float:
        if kind.kappa == 0:
            return self.r**2 * self.v_norm**2 + self.t**2
        if kind.kappa == 1:
            return math.sin(self.r) ** 2 * self.v_norm**2 + self.t**2
        raise DomainError("cone tangent norms are implemented for kappa in {0, 1}")

    def scaled(self, lam: float) -> "ConeTangent":
        return ConeTangent(self.r, lam * self.v_norm, lam * self.t)


@dataclass
class RicciEvaluation:
    """Both sides of the cone Ricci identities at one tangent vector.

    ``ric_cone`` is the unweighted cone Ricci from the warped-product formula;
    ``ric_cone_weighted`` is the (N+1)-Ricci tensor for V + W assembled term
    by term (``hess_terms``); ``identity_rhs`` is the closed form in terms of
    base data, and ``residual`` = |ric_cone_weighted - identity_rhs|.
    """

    ric_base: float
    ric_NV_base: float
    ric_cone: float
    ric_cone_weighted: float
    identity_rhs: float
    hess_terms: dict
    residual: float


def _check_dims(n, N, weighted):
    if weighted and N <= n:
        raise DomainError("N must exceed n when V is nonconstant")
    if N < n:
        raise DomainError("N must be >= n")


def euclid_cone_ricci(base_ric: float, n: int, N: float, tangent: ConeTangent,
                      base_hess_v: float = 0.0, base_grad_v: float = 0.0) -> RicciEvaluation:
    """Ricci identities on the N-Euclidean cone.

    Unweighted: Ric_(x,r)((v,t),(v,t)) = Ric_x(v,v) - (n - 1)|v|^2.
    Weighted:   Ric^(N+1, V+W) = Ric^(N,V)_x(v,v) - (N - 1)|v|^2.

    ``base_hess_v`` and ``base_grad_v`` are Hess V_x(v, v) and dV_x(v).  When
    N = n (and V constant) the W terms vanish and the weighted tensor is the
    unweighted one.
    """
    weighted = base_hess_v != 0 or base_grad_v != 0
    _check_dims(n, N, weighted)
    r, vn, t = tangent.r, tangent.v_norm, tangent.t
    if r <= 0:
        raise DomainError("cone tangent needs r > 0")
    v2 = vn * vn
    ric_cone = base_ric - (n - 1) * v2
    hv = base_hess_v - 2 * base_grad_v * t / r
    terms = {"hess_v": hv, "grad_v": base_grad_v}
    if N > n:
        k = N - n
        dW, d2W = -k / r, k / r**2
        hw = d2W * t * t + dW * r * v2
        gw = dW * t
        terms.update(hess_w=hw, grad_w=gw, cross=base_grad_v * gw,
                     w_combo=hw - gw * gw / k)
        weighted_val = ric_cone + hv + hw - (base_grad_v + gw) ** 2 / k
        ric_NV = base_ric + base_hess_v - base_grad_v**2 / k
    else:
        weighted_val = ric_cone + hv
        ric_NV = base_ric + base_hess_v
    rhs = ric_NV - (N - 1) * v2
    return RicciEvaluation(base_ric, ric_NV, ric_cone, weighted_val, rhs, terms, abs(weighted_val - rhs))


def spherical_cone_ricci(base_ric: float, n: int, N: float, r: float, tangent: ConeTangent,
                         base_hess_v: float = 0.0, base_grad_v: float = 0.0) -> RicciEvaluation:
    """Ricci identities on the N-spherical cone, 0 < r < pi.

    Unweighted: Ric_(x,r)((v,t),(v,t)) = Ric_x(v,v) + (1 - n cos^2 r)|v|^2 + n t^2.
    Weighted:   Ric^(N+1, V+W) - N |(v,t)|^2 = Ric^(N,V)_x(v,v) - (N - 1)|v|^2,
    so ``identity_rhs`` is Ric^(N,V)_x(v,v) - (N - 1)|v|^2 + N |(v,t)|^2.
    """
    weighted = base_hess_v != 0 or base_grad_v != 0
    _check_dims(n, N, weighted)
    if not 0 < r < math.pi:
        raise DomainError("spherical cone identities need 0 < r < pi")
    if tangent.r != r:
        tangent = ConeTangent(r, tangent.v_norm, tangent.t)
    vn, t = tangent.v_norm, tangent.t
    v2 = vn * vn
    c, s = math.cos(r), math.sin(r)
    ric_cone = base_ric + (1 - n * c * c) * v2 + n * t * t
    hv = base_hess_v - 2 * base_grad_v * (c / s) * t
    terms = {"hess_v": hv, "grad_v": base_grad_v}
    if N > n:
        k = N - n
        dW, d2W = -k * c / s, k / (s * s)
        hw = d2W * t * t + dW * s * c * v2
        gw = dW * t
        terms.update(hess_w=hw, grad_w=gw, cross=base_grad_v * gw,
                     w_combo=hw - gw * gw / k)
        weighted_val = ric_cone + hv + hw - (base_grad_v + gw) ** 2 / k
        ric_NV = base_ric + base_hess_v - base_grad_v**2 / k
    else:
        weighted_val = ric_cone + hv
        ric_NV = base_ric + base_hess_v
    rhs = ric_NV - (N - 1) * v2 + N * tangent.norm2(ConeKind.spherical())
    return RicciEvaluation(base_ric, ric_NV, ric_cone, weighted_val, rhs, terms, abs(weighted_val - rhs))


def w_combo_closed_form(kind: ConeKind, n: int, N: float, tangent: ConeTangent) -> float:
    """[Hess W - dW (x) dW / (N - n)]((v,t),(v,t)) in closed form."""
    k = N - n
    if kind.kappa == 0:
        return -k * tangent.v_norm**2
    if kind.kappa == 1:
        return k * (tangent.t**2 - math.cos(tangent.r) ** 2 * tangent.v_norm**2)
    raise DomainError("implemented for kappa in {0, 1}")


def _w_curve(kind: ConeKind, n: int, N: float, tangent: ConeTangent):
    """h(s) = W(radius of the cone geodesic through (x, r) with velocity (v, t))."""
    r, vn, t = tangent.r, tangent.v_norm, tangent.t
    k = N - n
    if kind.kappa == 0:
        return lambda s: -k * math.log(math.sqrt((r + s * t) ** 2 + (s * r * vn) ** 2))
    if kind.kappa == 1:
        return lambda s: -k * math.log(math.sin(math.acos(math.cos(r + s * t) * math.cos(s * math.sin(r) * vn))))
    raise DomainError("implemented for kappa in {0, 1}")


def _v_curve(kind: ConeKind, V: Potential, x, v, tangent: ConeTangent):
    """f(s) = V at the base projection of the cone geodesic through (x, r) with velocity (v, t)."""
    r, t = tangent.r, tangent.t
    vn = _norm(v)
    u = np.asarray(v, dtype=float) / vn
    if kind.kappa == 0:
        return lambda s: V.along(x, u, math.atan2(r * s * vn, r + s * t))
    if kind.kappa == 1:
        return lambda s: V.along(x, u, math.atan2(math.tan(math.sin(r) * s * vn), math.sin(r + s * t)))
    raise DomainError("implemented for kappa in {0, 1}")


@dataclass(frozen=True)
class FdCheck:
    """Finite-difference value against its closed form."""

    fd: float
    closed_form: float
    residual: float
    extra: dict = field(default_factory=dict)


def hess_w_fd_check(kind: ConeKind, n: int, N: float, r: float, tangent: ConeTangent,
                    h_fd: float = H_FD) -> FdCheck:
    """h''(0) - h'(0)^2 / (N - n) by finite differences vs. the closed form."""
    if N <= n:
        raise DomainError("needs N > n")
    if not 1e-6 <= h_fd <= 1e-3:
        raise DomainError("finite-difference step must lie in [1e-6, 1e-3]")
    tangent = ConeTangent(r, tangent.v_norm, tangent.t)
    h = _w_curve(kind, n, N, tangent)
    d1, d2 = central_d1(h, h_fd), central_d2(h, h_fd)
    fd = d2 - d1 * d1 / (N - n)
    cf = w_combo_closed_form(kind, n, N, tangent)
    return FdCheck(fd, cf, abs(fd - cf), {"h1": d1, "h2": d2})


def hess_v_cross_check(kind: ConeKind, V: Potential, x, v, r: float, t: float,
                       step: float = H_FD, n: int = 1, N: float = 2.0) -> FdCheck:
    """Cone Hessian of the base potential V, by finite differences vs. closed form.

    Closed form: Hess V_x(v,v) - 2 dV_x(v) t / r (Euclidean), with cot(r) in
    place of 1/r on the spherical cone.  Also compares the product of the
    finite-difference differentials of V and W = -(N-n) log r (log sin r)
    with dV_x(v) W'(r) t; that residual is in ``extra['cross_residual']``.
    """
    vn = _norm(v)
    if vn == 0:
        raise DomainError("needs |v| > 0")
    tangent = ConeTangent(r, vn, t)
    f = _v_curve(kind, V, x, v, tangent)
    fd = central_d2(f, step)
    g = V.grad(x, v)
    geo = (1 / r) if kind.kappa == 0 else math.cos(r) / math.sin(r)
    cf = V.hess(x, v) - 2 * g * geo * t
    dW = -(N - n) * geo
    cross_fd = central_d1(f, step) * central_d1(_w_curve(kind, n, N, tangent), step)
    cross_cf = g * dW * t
    return FdCheck(fd, cf, abs(fd - cf), {"cross_fd": cross_fd, "cross_closed_form": cross_cf,
                                          "cross_residual": abs(cross_fd - cross_cf)})


def unit_tangents(kind: ConeKind, r: float, n_angles: int = 721) -> list[ConeTangent]:
    """Unit cone tangents (cone norm 1) sweeping the angle between base and radial parts."""
    scale = r if kind.kappa == 0 else math.sin(r)
    out = []
    for a in np.linspace(-math.pi / 2, math.pi / 2, n_angles):
        out.append(ConeTangent(r, math.cos(a) / scale, math.sin(a)))
    return out


# -- sectional curvature table ------------------------------------------------


def cone_sectional(sec_base: float, r: float) -> float:
    """Sectional curvature of a plane spanned by two base directions at radius r."""
    return (sec_base - 1.0) / r**2


def product_sphere_curvature_table(r: float) -> dict:
    """Curvatures of the product of two spheres of radius 1/sqrt(3) and of its cone.

    Orthonormal frame: u1, u2 tangent to the first factor, v1, v2 to the
    second, w radial.  Base sectional curvatures are 1/a^2 = 3 within a factor
    and 0 across factors; a plane of base directions on the cone has
    curvature (Sec - 1)/r^2 and planes containing w are flat.
    """
    if not r > 0:
        raise DomainError("r must be positive")
    a2 = 1.0 / 3.0
    sec_same, sec_mixed = 1.0 / a2, 0.0
    base = {"u1,u2": sec_same, "u1,v1": sec_mixed, "u1,v2": sec_mixed}
    cone = {
        "u1,u2": cone_sectional(sec_same, r),
        "u1,v1": cone_sectional(sec_mixed, r),
        "u1,v2": cone_sectional(sec_mixed, r),
        "u1,w": 0.0,
    }
    return {
        "r": r,
        "base_sec": list(base.values()),
        "base_planes": list(base),
        "base_ric": sum(base.values()),
        "sec": list(cone.values()),
        "cone_planes": list(cone),
        "cone_ric": sum(cone.values()),
    }


# -- randomized identity suite --------------------------------------------------


def _random_base_point(rng, n: int):
    """Point, unit tangent and potential on the unit n-sphere (circle for n = 1)."""
    if n == 1:
        V = CirclePotential(tuple(rng.uniform(-1, 1, 2)), tuple(rng.uniform(-1, 1, 2)))
        return V, float(rng.uniform(0, 2 * math.pi)), 1.0
    x = rng.standard_normal(n + 1)
    x /= np.linalg.norm(x)
    u = rng.standard_normal(n + 1)
    u -= (u @ x) * x
    u /= np.linalg.norm(u)
    A = rng.uniform(-1, 1, (n + 1, n + 1))
    V = SpherePotential(rng.uniform(-1, 1, n + 1), A)
    return V, x, u


def weighted_cone_ricci_fd(kind: ConeKind, V: Potential, x, v, base_ric: float, n: int, N: float,
                           r: float, t: float, h: float = H_FD) -> float:
    """(N+1)-Ricci tensor of the weighted cone with every derivative of V and W by finite differences."""
    tangent = ConeTangent(r, _norm(v), t)
    k = N - n
    if kind.kappa == 0:
        ric = base_ric - (n - 1) * tangent.v_norm**2
    else:
        ric = base_ric + (1 - n * math.cos(r) ** 2) * tangent.v_norm**2 + n * t * t
    f = _v_curve(kind, V, x, v, tangent)
    w = _w_curve(kind, n, N, tangent)
    gv, hv = central_d1(f, h), central_d2(f, h)
    gw, hw = central_d1(w, h), central_d2(w, h)
    return ric + hv + hw - (gv + gw) ** 2 / k


def identity_suite(draws: int = 1000, seed: int = 0, n_angles: int = 181) -> dict:
    """Random-parameter check of both cone Ricci identities and their thresholds.

    For each draw (alternating Euclidean and spherical cones) a random
    potential on the unit n-sphere supplies Hess V and dV.  The weighted cone
    tensor is assembled analytically and, separately, with all derivatives
    of V and W from finite differences along the explicit curves; both are
    compared with the closed-form right-hand side.  Threshold cases place the
    base value on, just above and just below N - 1 and scan unit tangents.
    """
    rng = np.random.default_rng(seed)
    worst_an = worst_fd = worst_cross = 0.0
    thr_cases = thr_bad = 0
    for d in range(draws):
        kind = ConeKind.euclidean() if d % 2 == 0 else ConeKind.spherical()
        n = int(rng.integers(1, 5))
        N = n + float(rng.uniform(0.2, 3.0))
        r = float(rng.uniform(0.3, 3.0)) if kind.kappa == 0 else float(rng.uniform(0.3, math.pi - 0.3))
        t = float(rng.uniform(-1, 1))
        vn = float(rng.uniform(0.1, 1.5))
        V, x, u = _random_base_point(rng, n)
        v = u * vn
        ric = (n - 1) * vn * vn
        hv, gv = V.hess(x, v), V.grad(x, v)
        tan = ConeTangent(r, vn, t)
        ev = (euclid_cone_ricci(ric, n, N, tan, hv, gv) if kind.kappa == 0
              else spherical_cone_ricci(ric, n, N, r, tan, hv, gv))
        worst_an = max(worst_an, ev.residual)
        fd = weighted_cone_ricci_fd(kind, V, x, v, ric, n, N, r, t)
        worst_fd = max(worst_fd, abs(fd - ev.identity_rhs))
        worst_cross = max(worst_cross, hess_v_cross_check(kind, V, x, v, r, t, n=n, N=N).extra["cross_residual"])
        if d % 10 == 0:
            for delta in (-0.5, -1e-6, 0.0, 1e-6, 0.5):
                rho = (N - 1) + delta
                lows = []
                for tg in unit_tangents(kind, r, n_angles):
                    b = rho * tg.v_norm**2
                    if kind.kappa == 0:
                        lows.append(euclid_cone_ricci(b, n, N, tg).ric_cone_weighted)
                    else:
                        val = spherical_cone_ricci(b, n, N, r, tg).ric_cone_weighted
                        lows.append(val - N * tg.norm2(kind))
                cone_ok = min(lows) >= -1e-9
                base_ok = rho >= (N - 1) - 1e-9
                thr_cases += 1
                thr_bad += cone_ok != base_ok
    return {
        "draws": draws, "seed": seed,
        "max_residual_analytic": worst_an,
        "max_residual_fd": worst_fd,
        "max_cross_residual": worst_cross,
        "threshold_cases": thr_cases,
        "threshold_counterexamples": thr_bad,
    }
