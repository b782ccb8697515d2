"""Euclidean, spherical and (kappa, N) cones over finite metric measure spaces.

Cone cells are ordered with the south apex first, then base-major blocks of
radial cells (index ``1 + i * n_r + j``), then the north apex for kappa > 0.
Apex cells carry zero weight.

Distances use half-angle forms of the cosine laws, e.g. for the Euclidean
cone ``d^2 = (s - t)^2 + 4 s t sin^2(theta / 2)``.  These agree with the
cosine laws exactly in real arithmetic and need no clamping of arccos
arguments, so nearby points keep full relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .metric_space import (
    TOL_METRIC,
    FiniteMetricMeasureSpace,
    default_antipode_tol,
)

APEX_SOUTH = "APEX_S"
APEX_NORTH = "APEX_N"


@dataclass(frozen=True)
class ConeKind:
    """Model curvature of the cone: 0 (Euclidean), 1 (spherical) or any kappa."""

    name: str
    kappa: float

    def __post_init__(self):
        if self.name not in ("euclidean", "spherical", "kappa"):
            raise ConfigError(f"unknown cone kind {self.name!r}")
        if not math.isfinite(self.kappa):
            raise ConfigError("kappa must be finite")

    @classmethod
    def euclidean(cls) -> "ConeKind":
        return cls("euclidean", 0.0)

    @classmethod
    def spherical(cls) -> "ConeKind":
        return cls("spherical", 1.0)

    @classmethod
    def with_kappa(cls, kappa: float) -> "ConeKind":
        return cls("kappa", float(kappa))

    @classmethod
    def from_json(cls, obj) -> "ConeKind":
        if obj == "euclidean":
            return cls.euclidean()
        if obj == "spherical":
            return cls.spherical()
        if isinstance(obj, Mapping) and set(obj) == {"kappa"}:
            try:
                return cls.with_kappa(float(obj["kappa"]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad kappa value {obj['kappa']!r}") from exc
        raise ConfigError(f"cone kind must be 'euclidean', 'spherical' or {{'kappa': x}}, got {obj!r}")

    def to_json(self):
        return self.name if self.name != "kappa" else {"kappa": self.kappa}

    @property
    def r_max(self) -> float | None:
        """Radius of the north pole, or None when the radial coordinate is unbounded."""
        return math.pi / math.sqrt(self.kappa) if self.kappa > 0 else None

    def S(self, r):
        """Generalized sine S_kappa."""
        k = self.kappa
        r = np.asarray(r, dtype=float)
        if k > 0:
            return np.sin(math.sqrt(k) * r) / math.sqrt(k)
        if k < 0:
            return np.sinh(math.sqrt(-k) * r) / math.sqrt(-k)
        return r

    def C(self, r):
        """Generalized cosine C_kappa."""
        k = self.kappa
        r = np.asarray(r, dtype=float)
        if k > 0:
            return np.cos(math.sqrt(k) * r)
        if k < 0:
            return np.cosh(math.sqrt(-k) * r)
        return np.ones_like(r)

    def radial_weight(self, r, N: float):
        """Density of the radial measure: r^N, sin^N r or S_kappa(r)^N."""
        return np.abs(self.S(r)) ** N


def _check_domain(kind: ConeKind, d_base, s, t):
    if np.any(d_base < 0) or np.any(s < 0) or np.any(t < 0):
        raise DomainError("cone distance needs d_base, s, t >= 0")
    rm = kind.r_max
    if rm is not None and (np.any(s > rm * (1 + 1e-15)) or np.any(t > rm * (1 + 1e-15))):
        raise DomainError(f"radial coordinate exceeds pi/sqrt(kappa) = {rm}")


def _euclid(theta, s, t):
    # hypot avoids underflow and returns |s - t| exactly on a common ray
    return np.hypot(s - t, 2.0 * np.sqrt(s) * np.sqrt(t) * np.sin(theta / 2))


def _spherical(theta, s, t):
    sst = np.sin(s) * np.sin(t)
    h = np.sin((s - t) / 2) ** 2 + sst * np.sin(theta / 2) ** 2
    c = np.cos((s + t) / 2) ** 2 + sst * np.cos(theta / 2) ** 2
    return 2.0 * np.arctan2(np.sqrt(np.maximum(h, 0)), np.sqrt(np.maximum(c, 0)))


def _kappa_pos(k, theta, s, t):
    sk = math.sqrt(k)
    prod = k * (np.sin(sk * s) / sk) * (np.sin(sk * t) / sk)
    h = np.sin(sk * (s - t) / 2) ** 2 + prod * np.sin(theta / 2) ** 2
    c = np.cos(sk * (s + t) / 2) ** 2 + prod * np.cos(theta / 2) ** 2
    return (2.0 / sk) * np.arctan2(np.sqrt(np.maximum(h, 0)), np.sqrt(np.maximum(c, 0)))


def _kappa_neg(k, theta, s, t):
    sk = math.sqrt(-k)
    a, b = sk * s, sk * t
    q = np.sinh((a - b) / 2) ** 2 + np.sinh(a) * np.sinh(b) * np.sin(theta / 2) ** 2
    return (2.0 / sk) * np.arcsinh(np.sqrt(q))


def cone_distance(kind: ConeKind, d_base, s, t):
    """Distance between cone points (x, s) and (x', t) with d(x, x') = d_base.

    Broadcasts over array arguments.  ``d_base`` is truncated at pi first, so
    base pairs at distance >= pi are joined through the apex.

    Examples
    --------
    >>> float(cone_distance(ConeKind.euclidean(), math.pi / 2, 1.0, 1.0))
    1.4142135623730951
    """
    d_base = np.asarray(d_base, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_domain(kind, d_base, s, t)
    theta = np.minimum(d_base, math.pi)
    if kind.name == "spherical":
        out = _spherical(theta, s, t)
    elif kind.kappa > 0:
        out = _kappa_pos(kind.kappa, theta, s, t)
    elif kind.kappa < 0:
        out = _kappa_neg(kind.kappa, theta, s, t)
    else:
        out = _euclid(theta, s, t)
    return out if out.ndim else float(out)


# -- radial grids and cone points ---------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial cells given by midpoints and widths; gaps between cells are allowed."""

    midpoints: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        m = np.array(self.midpoints, dtype=float)
        w = np.array(self.widths, dtype=float)
        if m.ndim != 1 or m.shape != w.shape or m.size == 0:
            raise DomainError("radial grid needs matching nonempty midpoint and width vectors")
        if np.any(m <= 0) or np.any(np.diff(m) <= 0):
            raise DomainError("radial midpoints must be positive and strictly increasing")
        if np.any(w <= 0):
            raise DomainError("radial cell widths must be positive")
        lo, hi = m - w / 2, m + w / 2
        if lo[0] < -1e-12 or np.any(lo[1:] < hi[:-1] - 1e-12):
            raise DomainError("radial cells overlap")
        m.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "midpoints", m)
        object.__setattr__(self, "widths", w)

    @classmethod
    def uniform(cls, cells: int, r_max: float) -> "RadialGrid":
        if cells < 1 or not r_max > 0:
            raise DomainError("uniform radial grid needs cells >= 1 and r_max > 0")
        dr = r_max / cells
        return cls((np.arange(cells) + 0.5) * dr, np.full(cells, dr))

    @classmethod
    def from_edges(cls, edges: Sequence[float]) -> "RadialGrid":
        e = np.asarray(edges, dtype=float)
        return cls((e[1:] + e[:-1]) / 2, np.diff(e))

    @property
    def outer(self) -> float:
        return float(self.midpoints[-1] + self.widths[-1] / 2)

    def __len__(self):
        return self.midpoints.size


@dataclass(frozen=True)
class ConePoint:
    """A point (x, r) of the cone; apexes use the marker strings as base_index."""

    base_index: int | str
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise DomainError("radial coordinate must be >= 0")
        if self.base_index == APEX_SOUTH and self.r != 0:
            raise DomainError("south apex sits at r = 0")
        if self.base_index not in (APEX_SOUTH, APEX_NORTH) and self.r == 0:
            raise DomainError("r = 0 is the south apex")

    @property
    def is_apex(self) -> bool:
        return self.base_index in (APEX_SOUTH, APEX_NORTH)


@dataclass(frozen=True, eq=False)
class ConeSpace:
    """A sampled cone together with its induced finite metric measure space.

    ``base_of[c]`` is the base index of cell c (-1 for apex cells) and
    ``radius_of[c]`` its radial midpoint.
    """

    base: FiniteMetricMeasureSpace
    kind: ConeKind
    N: float
    radial_grid: RadialGrid
    points: tuple[ConePoint, ...]
    as_mms: FiniteMetricMeasureSpace
    base_of: np.ndarray = field(repr=False)
    radius_of: np.ndarray = field(repr=False)

    @property
    def n_radial(self) -> int:
        return len(self.radial_grid)

    @property
    def south(self) -> int:
        return 0

    @property
    def north(self) -> int | None:
        return self.as_mms.n_points - 1 if self.kind.kappa > 0 else None

    @property
    def apex_cells(self) -> tuple[int, ...]:
        return self.as_mms.null_cells

    def cell(self, base_index: int, radial_index: int) -> int:
        return 1 + base_index * self.n_radial + radial_index


def build_cone(
    base: FiniteMetricMeasureSpace,
    kind: ConeKind,
    N: float,
    radial_grid: RadialGrid | None = None,
    *,
    radial_cells: int = 16,
    radius_max: float | None = None,
    allow_wide_base: bool = False,
    tol_metric: float = TOL_METRIC,
) -> ConeSpace:
    """Sample the cone over ``base`` with radial weight r^N / sin^N r / S_kappa(r)^N.

    Parameters
    ----------
    base : FiniteMetricMeasureSpace
        Must have diameter <= pi (within ``tol_metric``) unless
        ``allow_wide_base`` is set; wider bases are still coned with the base
        distance truncated at pi.
    kind : ConeKind
    N : float
        Dimension parameter, N >= 1 (need not be an integer).
    radial_grid : RadialGrid, optional
        Defaults to ``radial_cells`` uniform cells on (0, R] where R is
        ``radius_max`` (default 1 for kappa <= 0) or pi/sqrt(kappa).
    """
    if not N >= 1:
        raise DomainError("cone dimension N must be >= 1")
    if base.diameter > math.pi + tol_metric and not allow_wide_base:
        raise DomainError(
            f"base diameter {base.diameter:.6g} exceeds pi; coning requires diam <= pi"
        )
    rm = kind.r_max
    if radial_grid is None:
        R = radius_max if radius_max is not None else (rm if rm is not None else 1.0)
        if rm is not None and R > rm + 1e-12:
            raise DomainError("radius_max exceeds pi/sqrt(kappa)")
        radial_grid = RadialGrid.uniform(radial_cells, R)
    if rm is not None and radial_grid.outer > rm * (1 + 1e-12):
        raise DomainError("radial grid extends past the north pole")

    nb, nr = base.n_points, len(radial_grid)
    base_of = np.concatenate([[-1], np.repeat(np.arange(nb), nr)])
    radius_of = np.concatenate([[0.0], np.tile(radial_grid.midpoints, nb)])
    widths = np.concatenate([[0.0], np.tile(radial_grid.widths, nb)])
    if rm is not None:
        base_of = np.append(base_of, -1)
        radius_of = np.append(radius_of, rm)
        widths = np.append(widths, 0.0)
    n = base_of.size

    bi = np.where(base_of >= 0, base_of, 0)
    dbase = base.dist[np.ix_(bi, bi)]
    dist = np.asarray(cone_distance(kind, dbase, radius_of[:, None], radius_of[None, :]))
    # apex rows are exact: d(S, (x, s)) = s, d(N, (x, s)) = r_max - s
    dist[0, :] = dist[:, 0] = radius_of
    if rm is not None:
        dist[-1, :] = dist[:, -1] = rm - radius_of
        dist[-1, 0] = dist[0, -1] = rm
        dist[-1, -1] = 0.0
    np.fill_diagonal(dist, 0.0)

    weight = np.zeros(n)
    live = base_of >= 0
    weight[live] = base.weight[base_of[live]] * kind.radial_weight(radius_of[live], N) * widths[live]
    null = (0,) if rm is None else (0, n - 1)

    tags = np.array([""] * n, dtype=object)
    tags[0] = APEX_SOUTH
    points = [ConePoint(APEX_SOUTH, 0.0)]
    points += [ConePoint(int(i), float(r)) for i, r in zip(base_of[1:1 + nb * nr], radius_of[1:1 + nb * nr])]
    if rm is not None:
        tags[-1] = APEX_NORTH
        points.append(ConePoint(APEX_NORTH, float(rm)))
    labels = {"tag": tags, "base_index": base_of, "r": radius_of}
    mms = FiniteMetricMeasureSpace(dist, weight, labels, None, null)
    return ConeSpace(base, kind, float(N), radial_grid, tuple(points), mms, base_of, radius_of)


def cone_from_config(base: FiniteMetricMeasureSpace, cfg: Mapping[str, Any], **kw) -> ConeSpace:
    """Build from {"kind": ..., "N": n, "radial_cells": k, "radius_max": R}."""
    unknown = set(cfg) - {"kind", "N", "radial_cells", "radius_max"}
    if unknown:
        raise ConfigError(f"unknown cone fields: {sorted(unknown)}")
    kind = ConeKind.from_json(cfg.get("kind", "euclidean"))
    return build_cone(
        base, kind, float(cfg.get("N", 1.0)),
        radial_cells=int(cfg.get("radial_cells", 16)),
        radius_max=cfg.get("radius_max"), **kw,
    )


# -- apex detection -----------------------------------------------------------


def _as_point(cone: ConeSpace, p) -> ConePoint:
    return p if isinstance(p, ConePoint) else cone.points[int(p)]


def is_through_apex_pair(cone: ConeSpace, p, q, tol: float | None = None) -> bool:
    """Whether the cone geodesic between p and q passes through an apex.

    That happens exactly when the base points are at distance pi, i.e. after
    truncation at pi: d_base >= pi - tol.  On bases of diameter <= pi this is
    the antipodal test |d_base - pi| <= tol.  ``p`` and ``q`` are cone points
    or cell indices; default tol is half the minimal base spacing.
    """
    p, q = _as_point(cone, p), _as_point(cone, q)
    if p.is_apex or q.is_apex:
        raise DomainError("apex cells have no base point")
    if tol is None:
        tol = default_antipode_tol(cone.base)
    return bool(cone.base.dist[p.base_index, q.base_index] >= math.pi - tol)


def through_apex_identity(cone: ConeSpace, p, q, tol: float | None = None) -> str | None:
    """Which apex the geodesic from p to q passes through, or None.

    For kappa > 0 the pair is joined through the south pole when
    s + t < pi/sqrt(kappa) and through the north pole when s + t exceeds it;
    at exact equality both are geodesics and the south pole is reported.
    """
    if not is_through_apex_pair(cone, p, q, tol):
        return None
    p, q = _as_point(cone, p), _as_point(cone, q)
    rm = cone.kind.r_max
    if rm is not None and p.r + q.r > rm:
        return APEX_NORTH
    return APEX_SOUTH


def through_apex_mask(cone: ConeSpace, tol: float | None = None) -> np.ndarray:
    """Boolean matrix over cone cells: True where the pair's geodesic crosses an apex.

    Pairs involving apex cells are False here (mass on apex cells is counted
    separately by the transport module).
    """
    if tol is None:
        tol = default_antipode_tol(cone.base)
    b = cone.base_of
    live = b >= 0
    bi = np.where(live, b, 0)
    far = cone.base.dist[np.ix_(bi, bi)] >= math.pi - tol
    return far & live[:, None] & live[None, :]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of an identity check: both sides, and whether it applied/held."""

    applicable: bool
    holds: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    reason: str = ""


def verify_apex_midpoint_antipodality(cone: ConeSpace, p, q, t_param: float, tol: float = 1e-9) -> CheckResult:
    """Check that a spherical-cone geodesic through the south pole joins antipodes.

    Hypothesis: d(p, S) = t d(p, q) and d(S, q) = (1 - t) d(p, q).  Writing
    r0 = d(p, S) and r1 = (1 - t) r0 / t, the cosine law solved for the base
    distance gives

        cos d(x0, x1) = (cos(r0/t) - cos r0 cos r1) / (sin r0 sin r1),

    which must equal -1.  ``lhs`` is this quotient and ``rhs`` is -1.
    """
    if cone.kind.name != "spherical" and cone.kind.kappa != 1.0:
        raise DomainError("antipodality check is stated for the spherical cone")
    p, q = _as_point(cone, p), _as_point(cone, q)
    if p == q:
        return CheckResult(False, False, reason="constant geodesic")
    if not 0 < t_param < 1:
        return CheckResult(False, False, reason="t outside (0, 1)")
    if p.is_apex or q.is_apex:
        return CheckResult(False, False, reason="endpoint at an apex")
    D = cone_distance(cone.kind, cone.base.dist[p.base_index, q.base_index], p.r, q.r)
    if abs(p.r - t_param * D) > tol or abs(q.r - (1 - t_param) * D) > tol:
        return CheckResult(False, False, reason="geodesic does not meet the south pole at t")
    r0 = p.r
    r1 = (1 - t_param) * r0 / t_param
    den = math.sin(r0) * math.sin(r1)
    if den == 0:
        return CheckResult(False, False, reason="degenerate radii")
    lhs = (math.cos(r0 / t_param) - math.cos(r0) * math.cos(r1)) / den
    return CheckResult(True, abs(lhs + 1.0) <= tol, lhs, -1.0)
