"""Finite samples of metric measure spaces.

A :class:`FiniteMetricMeasureSpace` is a point sample carrying a full
geodesic distance matrix and one positive quadrature weight per cell.  The
weights play the role of the reference measure: a probability measure on the
sample is a vector of cell masses, and its density is mass / weight.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError

TOL_METRIC = 1e-9
TOL_MASS = 1e-12

_KINDS = ("circle", "sphere", "interval", "product")


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMetricMeasureSpace:
    """Point sample with distances and cell weights.

    ``null_cells`` lists indices that are allowed to carry zero weight (cone
    apexes); every other weight must be strictly positive.
    """

    dist: np.ndarray
    weight: np.ndarray
    labels: Mapping[str, np.ndarray] | None = None
    diameter_cap: float | None = None
    null_cells: tuple[int, ...] = ()

    def __post_init__(self):
        dist = _frozen(self.dist)
        weight = _frozen(self.weight)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise DomainError(f"distance matrix must be square, got {dist.shape}")
        if weight.shape != (dist.shape[0],):
            raise DomainError("weight vector length does not match distance matrix")
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)
        if self.labels is not None:
            labels = {k: _frozen(v, dtype=None) for k, v in self.labels.items()}
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "null_cells", tuple(int(i) for i in self.null_cells))

    @property
    def n_points(self) -> int:
        return self.dist.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n_points else 0.0

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def with_diameter_cap(self, cap: float = math.pi, tol: float = TOL_METRIC):
        """Return a copy marked with ``diameter_cap``; the sample must respect it."""
        if self.diameter > cap + tol:
            raise DomainError(f"sample diameter {self.diameter:.6g} exceeds cap {cap:.6g}")
        return FiniteMetricMeasureSpace(
            self.dist, self.weight, self.labels, float(cap), self.null_cells
        )

    def min_positive_distance(self) -> float:
        d = self.dist[self.dist > 0]
        return float(d.min()) if d.size else 0.0


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Which model space to sample and how finely.

    ``resolution`` counts cells per coordinate: points on a circle, cells on an
    interval, colatitude bands on a sphere (longitudes use twice as many).
    """

    kind: str
    resolution: int = 16
    radius: float = 1.0
    dim: int = 2
    length: float = 1.0
    factors: tuple["ManifoldDescriptor", ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "product":
            if not self.factors:
                raise ConfigError("product needs at least one factor")
            return
        if self.resolution < 2:
            raise ConfigError("resolution must be at least 2 points per factor")
        if self.kind in ("circle", "sphere") and not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.kind == "sphere" and self.dim < 1:
            raise ConfigError("sphere dimension must be >= 1")
        if self.kind == "interval" and not self.length > 0:
            raise ConfigError("interval length must be positive")

    @property
    def topological_dim(self) -> int:
        if self.kind == "product":
            return sum(f.topological_dim for f in self.factors)
        if self.kind == "sphere":
            return self.dim
        return 1

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ManifoldDescriptor":
        d = dict(d)
        allowed = {"kind", "resolution", "radius", "dim", "length", "factors"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown descriptor fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("descriptor needs a 'kind'")
        factors = tuple(cls.from_dict(f) for f in d.pop("factors", ()))
        try:
            return cls(factors=factors, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "product":
            return {"kind": "product", "factors": [f.to_dict() for f in self.factors]}
        out: dict[str, Any] = {"kind": self.kind, "resolution": self.resolution}
        if self.kind in ("circle", "sphere"):
            out["radius"] = self.radius
        if self.kind == "sphere":
            out["dim"] = self.dim
        if self.kind == "interval":
            out["length"] = self.length
        return out


def circle(radius: float = 1.0, resolution: int = 16) -> ManifoldDescriptor:
    return ManifoldDescriptor("circle", resolution=resolution, radius=radius)


def sphere(dim: int = 2, radius: float = 1.0, resolution: int = 16) -> ManifoldDescriptor:
    return ManifoldDescriptor("sphere", resolution=resolution, radius=radius, dim=dim)


def interval(length: float = 1.0, resolution: int = 16) -> ManifoldDescriptor:
    return ManifoldDescriptor("interval", resolution=resolution, length=length)


def product(*factors: ManifoldDescriptor) -> ManifoldDescriptor:
    return ManifoldDescriptor("product", factors=tuple(factors))


# -- sampling -----------------------------------------------------------------


def _sample_circle(desc):
    n, a = desc.resolution, desc.radius
    k = np.arange(n)
    diff = np.abs(k[:, None] - k[None, :])
    # integer arithmetic keeps equal distances bitwise equal (deterministic ties)
    dist = a * (2 * math.pi / n) * np.minimum(diff, n - diff)
    weight = np.full(n, 2 * math.pi * a / n)
    return dist, weight, {"angle": 2 * math.pi * k / n}


def _sample_interval(desc):
    n, L = desc.resolution, desc.length
    k = np.arange(n)
    dist = (L / n) * np.abs(k[:, None] - k[None, :])
    weight = np.full(n, L / n)
    return dist, weight, {"x": (k + 0.5) * L / n}


def _sample_sphere(desc):
    """Hyperspherical-angle grid; polar angles on (0, pi), azimuth on [0, 2pi)."""
    k, a, res = desc.dim, desc.radius, desc.resolution
    if k == 1:
        return _sample_circle(ManifoldDescriptor("circle", resolution=2 * res, radius=a))
    dpol = math.pi / res
    polar = (np.arange(res) + 0.5) * dpol
    naz = 2 * res
    az = 2 * math.pi * np.arange(naz) / naz
    grids = np.meshgrid(*([polar] * (k - 1) + [az]), indexing="ij")
    angles = [g.ravel() for g in grids]
    # embedding x_1 = cos p1, x_2 = sin p1 cos p2, ..., last two use the azimuth
    npts = angles[0].size
    X = np.empty((npts, k + 1))
    s = np.ones(npts)
    for m in range(k - 1):
        X[:, m] = s * np.cos(angles[m])
        s = s * np.sin(angles[m])
    X[:, k - 1] = s * np.cos(angles[-1])
    X[:, k] = s * np.sin(angles[-1])
    w = np.full(npts, a**k * dpol ** (k - 1) * (2 * math.pi / naz))
    for m in range(k - 1):
        w = w * np.sin(angles[m]) ** (k - 1 - m)
    # 2 atan2(|u-v|, |u+v|) is accurate at both small and near-antipodal angles
    diff = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
    summ = np.linalg.norm(X[:, None, :] + X[None, :, :], axis=-1)
    dist = a * 2.0 * np.arctan2(diff, summ)
    np.fill_diagonal(dist, 0.0)
    labels = {f"polar{m + 1}": angles[m] for m in range(k - 1)}
    labels["azimuth"] = angles[-1]
    return dist, w, labels


def _sample(desc):
    if desc.kind == "circle":
        return _sample_circle(desc)
    if desc.kind == "interval":
        return _sample_interval(desc)
    if desc.kind == "sphere":
        return _sample_sphere(desc)
    parts = [_sample(f) for f in desc.factors]
    sizes = [p[1].size for p in parts]
    idx = np.indices(sizes).reshape(len(sizes), -1)
    dist2 = np.zeros((idx.shape[1],) * 2)
    weight = np.ones(idx.shape[1])
    labels = {}
    for f, (d, w, lab) in enumerate(parts):
        sel = idx[f]
        dist2 += d[np.ix_(sel, sel)] ** 2
        weight *= w[sel]
        for name, vals in lab.items():
            labels[f"f{f}.{name}"] = np.asarray(vals)[sel]
    return np.sqrt(dist2), weight, labels


def build_space(desc: ManifoldDescriptor | Mapping[str, Any]) -> FiniteMetricMeasureSpace:
    """Sample ``desc`` into a finite metric measure space.

    Distances are exact geodesic distances between the sample points; product
    distances are never truncated.  When the sample diameter is at most pi the
    result is marked with ``diameter_cap = pi`` so it can be coned directly.
    """
    if not isinstance(desc, ManifoldDescriptor):
        desc = ManifoldDescriptor.from_dict(desc)
    dist, weight, labels = _sample(desc)
    cap = math.pi if dist.max() <= math.pi + TOL_METRIC else None
    return FiniteMetricMeasureSpace(dist, weight, labels, cap)


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    symmetry: list[tuple[int, int, float]] = field(default_factory=list)
    triangle: list[tuple[int, int, int, float]] = field(default_factory=list)
    diagonal: list[tuple[int, float]] = field(default_factory=list)
    negative: list[tuple[int, int, float]] = field(default_factory=list)
    weights: list[tuple[int, float]] = field(default_factory=list)
    diameter: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.symmetry or self.triangle or self.diagonal
            or self.negative or self.weights or self.diameter
        )

    def __len__(self) -> int:
        return sum(
            len(x) for x in (self.symmetry, self.triangle, self.diagonal,
                             self.negative, self.weights, self.diameter)
        )


def validate_metric(space: FiniteMetricMeasureSpace, tol_metric: float = TOL_METRIC) -> ValidationReport:
    """List every metric/measure defect exceeding ``tol_metric``.

    Triangle violations are reported once per unordered endpoint pair (i < k)
    together with the intermediate point j.  Cost is O(n^3).
    """
    D = space.dist
    rep = ValidationReport()
    n = space.n_points
    asym = np.abs(D - D.T)
    for i, j in zip(*np.nonzero(np.triu(asym > tol_metric, 1))):
        rep.symmetry.append((int(i), int(j), float(asym[i, j])))
    for i in np.nonzero(np.abs(np.diag(D)) > tol_metric)[0]:
        rep.diagonal.append((int(i), float(D[i, i])))
    for i, j in zip(*np.nonzero(D < -tol_metric)):
        rep.negative.append((int(i), int(j), float(D[i, j])))
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    for j in range(n):
        excess = D - (D[:, j][:, None] + D[j, :][None, :])
        bad = (excess > tol_metric) & upper
        for i, k in zip(*np.nonzero(bad)):
            rep.triangle.append((int(i), j, int(k), float(excess[i, k])))
    null = set(space.null_cells)
    for i, w in enumerate(space.weight):
        if not np.isfinite(w) or w < 0 or (w == 0 and i not in null):
            rep.weights.append((i, float(w)))
    if not np.isfinite(space.total_weight) or space.total_weight <= 0:
        rep.weights.append((-1, space.total_weight))
    if space.diameter_cap is not None and space.diameter > space.diameter_cap + tol_metric:
        rep.diameter.append(space.diameter)
    return rep


# -- antipodes and midpoints --------------------------------------------------


def default_antipode_tol(space: FiniteMetricMeasureSpace) -> float:
    return 0.5 * space.min_positive_distance()


def antipode_set(space: FiniteMetricMeasureSpace, i: int, tol_antipode: float | None = None) -> list[int]:
    """Indices j with |d(i, j) - pi| <= tol (default: half the minimal spacing)."""
    if space.diameter_cap is None:
        raise DomainError("antipodes are only defined on spaces with diameter_cap = pi")
    if tol_antipode is None:
        tol_antipode = default_antipode_tol(space)
    return [int(j) for j in np.nonzero(np.abs(space.dist[i] - math.pi) <= tol_antipode)[0]]


def _argmin_low(obj: np.ndarray) -> np.ndarray:
    """Row-wise argmin with near-ties resolved to the smallest index."""
    best = obj.min(axis=-1, keepdims=True)
    slack = 1e-12 * (1.0 + np.abs(best))
    return np.argmax(obj <= best + slack, axis=-1)


def midpoint_objective(space: FiniteMetricMeasureSpace, i, j) -> np.ndarray:
    """max(|d(i,k) - d(i,j)/2|, |d(k,j) - d(i,j)/2|) for every k; broadcasts over i, j."""
    D = space.dist
    i = np.asarray(i)
    j = np.asarray(j)
    half = D[i, j][..., None] / 2.0
    return np.maximum(np.abs(D[i] - half), np.abs(D[j] - half))


def midpoint_index(space: FiniteMetricMeasureSpace, i: int, j: int) -> int:
    """Sample point closest to being a metric midpoint of i and j."""
    return int(_argmin_low(midpoint_objective(space, i, j)))


def midpoint_indices(space: FiniteMetricMeasureSpace, i: Sequence[int], j: Sequence[int],
                     chunk: int = 256) -> np.ndarray:
    i = np.asarray(i, dtype=int)
    j = np.asarray(j, dtype=int)
    out = np.empty(i.shape, dtype=int)
    for s in range(0, i.size, chunk):
        out[s:s + chunk] = _argmin_low(midpoint_objective(space, i[s:s + chunk], j[s:s + chunk]))
    return out


# -- measures -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on a sample, stored as cell masses.

    ``density`` is mass / weight; cells of zero weight holding mass get an
    infinite density (the measure is not absolutely continuous there).
    """

    space: FiniteMetricMeasureSpace
    mass: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen(self.mass))
        object.__setattr__(self, "density", _frozen(self.density))
        if self.mass.shape != self.space.weight.shape:
            raise DomainError("mass vector does not match the space")
        if (self.mass < 0).any():
            raise DomainError("masses must be nonnegative")
        if abs(self.mass.sum() - 1.0) > TOL_MASS:
            raise DomainError(f"masses sum to {self.mass.sum()!r}, not 1")

    @classmethod
    def from_density(cls, space, f) -> "DiscreteMeasure":
        f = np.broadcast_to(np.asarray(f, dtype=float), space.weight.shape)
        if (f < 0).any():
            raise DomainError("density must be nonnegative")
        z = float((f * space.weight).sum())
        if not z > 0:
            raise DomainError("density has zero total mass")
        density = f / z
        return cls(space, density * space.weight, density)

    @classmethod
    def from_masses(cls, space, m) -> "DiscreteMeasure":
        m = np.asarray(m, dtype=float)
        if (m < 0).any():
            raise DomainError("masses must be nonnegative")
        total = m.sum()
        if not total > 0:
            raise DomainError("zero total mass")
        m = m / total
        w = space.weight
        with np.errstate(divide="ignore", invalid="ignore"):
            density = np.where(w > 0, m / np.where(w > 0, w, 1.0), np.where(m > 0, np.inf, 0.0))
        return cls(space, m, density)

    @classmethod
    def uniform(cls, space, mask=None) -> "DiscreteMeasure":
        """Uniform with respect to the reference weights on ``mask`` (default: all)."""
        f = np.ones(space.n_points) if mask is None else np.asarray(mask, dtype=float)
        return cls.from_density(space, f)

    @classmethod
    def dirac(cls, space, i: int) -> "DiscreteMeasure":
        m = np.zeros(space.n_points)
        m[i] = 1.0
        return cls.from_masses(space, m)

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.mass > 0)[0]

    @property
    def absolutely_continuous(self) -> bool:
        return bool(np.all(self.space.weight[self.mass > 0] > 0))


# -- export -------------------------------------------------------------------


def export_csv(space: FiniteMetricMeasureSpace, directory: str | Path) -> list[Path]:
    """Write points.csv (index + labels), dist.csv (row-major) and weights.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = space.labels or {}
    names = list(labels)
    points = directory / "points.csv"
    with points.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *names])
        for i in range(space.n_points):
            w.writerow([i, *(_fmt(labels[k][i]) for k in names)])
    dist = directory / "dist.csv"
    np.savetxt(dist, space.dist, delimiter=",", fmt="%.17g")
    weights = directory / "weights.csv"
    with weights.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "weight"])
        for i, x in enumerate(space.weight):
            w.writerow([i, repr(float(x))])
    return [points, dist, weights]


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x
