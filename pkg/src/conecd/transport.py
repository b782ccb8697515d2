"""Exact discrete optimal transport with squared-distance cost.

The linear program is solved by POT's network simplex (``ot.emd``) on the
support of the two marginals.  Displacement interpolation uses chains of
recursive sample midpoints as surrogate geodesics.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

from .cones import ConeSpace, through_apex_mask  # noqa: E402
from .errors import DomainError, NumericalFailure  # noqa: E402
from .metric_space import (  # noqa: E402
    DiscreteMeasure,
    FiniteMetricMeasureSpace,
    midpoint_indices,
)

MASS_FLOOR = 1e-12
TOL_MARGINAL = 1e-9


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling between two measures on one space; ``cost`` is sum q * d^2."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    coupling: np.ndarray
    cost: float

    @property
    def space(self) -> FiniteMetricMeasureSpace:
        return self.source.space

    def support(self, mass_floor: float = MASS_FLOOR):
        """Support pairs (rows, cols, masses) sorted by (row, col)."""
        q = self.coupling
        i, j = np.nonzero(q > mass_floor * q.sum())
        return i, j, q[i, j]

    def marginal_error(self) -> float:
        q = self.coupling
        return float(max(np.abs(q.sum(1) - self.source.mass).max(),
                         np.abs(q.sum(0) - self.target.mass).max()))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        i, j, m = self.support()
        d = self.space.dist[i, j]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass", "dist", "dist2"])
            for row in zip(i, j, m, d, d * d):
                w.writerow([int(row[0]), int(row[1]), *(repr(float(x)) for x in row[2:])])
        return path


def plan_from_coupling(mu0: DiscreteMeasure, mu1: DiscreteMeasure, q) -> TransportPlan:
    """Wrap a hand-built coupling, checking its marginals."""
    q = np.array(q, dtype=float)
    n = mu0.space.n_points
    if q.shape != (n, n):
        raise DomainError("coupling shape does not match the space")
    if (q < 0).any():
        raise DomainError("coupling entries must be nonnegative")
    plan = TransportPlan(mu0, mu1, q, float((q * mu0.space.dist ** 2).sum()))
    if plan.marginal_error() > TOL_MARGINAL:
        raise DomainError("coupling marginals do not match the measures")
    q.setflags(write=False)
    return plan


def solve_ot(space: FiniteMetricMeasureSpace, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> TransportPlan:
    """Exact minimizer of sum q_ij d_ij^2 over couplings of mu0 and mu1."""
    if mu0.space is not space or mu1.space is not space:
        raise DomainError("both measures must live on the given space")
    for mu in (mu0, mu1):
        if abs(mu.mass.sum() - 1.0) > TOL_MARGINAL:
            raise NumericalFailure("marginals are not normalized; the program is infeasible")
    rows = np.nonzero(mu0.mass > 0)[0]
    cols = np.nonzero(mu1.mass > 0)[0]
    a = mu0.mass[rows]
    b = mu1.mass[cols]
    b = b * (a.sum() / b.sum())  # exact balance for the simplex
    M = space.dist[np.ix_(rows, cols)] ** 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        G, log = ot.emd(a, b, M, numItermax=10_000_000, log=True)
    if log.get("result_code", 1) != 1:
        raise NumericalFailure(f"network simplex did not converge: {log.get('warning')}")
    q = np.zeros((space.n_points, space.n_points))
    q[np.ix_(rows, cols)] = G
    q.setflags(write=False)
    return TransportPlan(mu0, mu1, q, float((G * M).sum()))


# -- cyclic monotonicity ------------------------------------------------------


@dataclass(frozen=True)
class CycleViolation:
    """Support pairs whose cyclic reassignment lowers the squared cost by ``excess``."""

    pairs: tuple[tuple[int, int], ...]
    excess: float


def check_cyclic_monotonicity(plan: TransportPlan, k_max: int = 2, tol: float = 1e-9,
                              mass_floor: float = MASS_FLOOR) -> list[CycleViolation]:
    """All k-cycles (2 <= k <= k_max) of support pairs violating d^2-monotonicity.

    A cycle (x_1, y_1), ..., (x_k, y_k) violates when
    sum d^2(x_i, y_i) > sum d^2(x_i, y_{i+1}) + tol.  Each cycle is listed
    once, starting from its smallest support position.  Work is O(m^k) in
    the support size m.
    """
    if k_max not in (2, 3, 4):
        raise DomainError("k_max must be 2, 3 or 4")
    I, J, _ = plan.support(mass_floor)
    m = I.size
    if m < 2:
        return []
    M = plan.space.dist[np.ix_(I, J)] ** 2  # M[a, b] = d^2(x_a, y_b)
    c = np.diag(M).copy()
    out: list[CycleViolation] = []

    def emit(idx, excess):
        out.append(CycleViolation(tuple((int(I[a]), int(J[a])) for a in idx), float(excess)))

    # k = 2
    ex = c[:, None] + c[None, :] - (M + M.T)
    for a, b in zip(*np.nonzero(np.triu(ex > tol, 1))):
        emit((a, b), ex[a, b])
    if k_max >= 3:
        for a in range(m):
            rest = np.arange(a + 1, m)
            if rest.size < 2:
                break
            sub = M[np.ix_(rest, rest)]
            ex = (c[a] + c[rest][:, None] + c[rest][None, :]
                  - (M[a, rest][:, None] + sub + M[rest, a][None, :]))
            np.fill_diagonal(ex, -np.inf)
            for b, cc in zip(*np.nonzero(ex > tol)):
                emit((a, rest[b], rest[cc]), ex[b, cc])
    if k_max >= 4:
        for a in range(m):
            for b in range(a + 1, m):
                rest = np.array([x for x in range(a + 1, m) if x != b])
                if rest.size < 2:
                    continue
                sub = M[np.ix_(rest, rest)]
                ex = (c[a] + c[b] + c[rest][:, None] + c[rest][None, :]
                      - (M[a, b] + M[b, rest][:, None] + sub + M[rest, a][None, :]))
                np.fill_diagonal(ex, -np.inf)
                for cc, d in zip(*np.nonzero(ex > tol)):
                    emit((a, b, rest[cc], rest[d]), ex[cc, d])
    return out


# -- displacement interpolation -----------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscretePathEnsemble:
    """Midpoint chains of a plan: ``chains[c, k]`` is the cell at time k / 2^L.

    ``merges`` counts coalescences: summed over interior times, the number of
    chains minus the number of distinct cells they occupy.
    """

    plan: TransportPlan
    chains: np.ndarray
    masses: np.ndarray
    L: int
    merges: int

    @property
    def space(self) -> FiniteMetricMeasureSpace:
        return self.plan.space

    @property
    def times(self) -> np.ndarray:
        return np.arange(2 ** self.L + 1) / 2 ** self.L

    def time_index(self, t: float) -> int:
        k = t * 2 ** self.L
        if abs(k - round(k)) > 1e-12 or not 0 <= t <= 1:
            raise DomainError(f"time {t} is not on the dyadic grid of level {self.L}")
        return int(round(k))

    def masses_at(self, t: float) -> np.ndarray:
        k = self.time_index(t)
        return np.bincount(self.chains[:, k], weights=self.masses, minlength=self.space.n_points)

    def measure_at(self, t: float) -> DiscreteMeasure:
        """Pushforward of the chain masses to time t; endpoints return the plan marginals."""
        k = self.time_index(t)
        if k == 0:
            return self.plan.source
        if k == 2 ** self.L:
            return self.plan.target
        return DiscreteMeasure.from_masses(self.space, self.masses_at(t))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        times = self.times
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain_id", "time", "point_index", "mass"])
            for c, (chain, m) in enumerate(zip(self.chains, self.masses)):
                for k, p in enumerate(chain):
                    w.writerow([c, repr(float(times[k])), int(p), repr(float(m))])
        return path


def interpolate(plan: TransportPlan, L: int = 1, mass_floor: float = MASS_FLOOR) -> DiscretePathEnsemble:
    """Dyadic midpoint chains of length 2^L + 1 for every support pair of ``plan``."""
    if L < 1:
        raise DomainError("interpolation level L must be >= 1")
    I, J, m = plan.support(mass_floor)
    T = 2 ** L
    chains = np.zeros((I.size, T + 1), dtype=int)
    chains[:, 0], chains[:, T] = I, J
    step = T
    while step > 1:
        half = step // 2
        for k in range(half, T, step):
            chains[:, k] = midpoint_indices(plan.space, chains[:, k - half], chains[:, k + half])
        step = half
    merges = sum(I.size - np.unique(chains[:, k]).size for k in range(1, T))
    chains.setflags(write=False)
    m = m.copy()
    m.setflags(write=False)
    return DiscretePathEnsemble(plan, chains, m, L, int(merges))


# -- apex mass ----------------------------------------------------------------


def apex_mass(plan: TransportPlan, cone: ConeSpace, tol_antipode: float | None = None) -> float:
    """Coupling mass on pairs joined through an apex, plus mass sitting on apex cells."""
    if plan.space is not cone.as_mms:
        raise DomainError("plan does not live on this cone")
    q = plan.coupling
    mask = through_apex_mask(cone, tol_antipode)
    apex = np.zeros(q.shape[0], dtype=bool)
    apex[list(cone.apex_cells)] = True
    mask = mask | apex[:, None] | apex[None, :]
    return float(q[mask].sum())
