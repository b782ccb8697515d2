"""Distortion coefficients, Renyi entropies and discrete CD(K, N) checks.

The integral check compares, at dyadic times t of a displacement
interpolation,

    lhs(t) = sum_i rho_t(i)^(1 - 1/N') w_i
    rhs(t) = sum_ij q_ij [tau^(1-t)(d_ij) rho_0(i)^(-1/N') + tau^(t)(d_ij) rho_1(j)^(-1/N')]

and reports deficit = rhs - lhs; a positive deficit beyond tolerance is a
violation for the computed plan (another optimal plan might satisfy it).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cones import ConeKind, RadialGrid, build_cone
from .errors import DomainError
from .metric_space import (
    DiscreteMeasure,
    FiniteMetricMeasureSpace,
    ManifoldDescriptor,
    build_space,
    interval,
)
from .transport import (
    MASS_FLOOR,
    DiscretePathEnsemble,
    TransportPlan,
    interpolate,
    solve_ot,
)


# -- distortion coefficients ----------------------------------------------------


def _check_tau_args(K, N):
    if not N >= 1:
        raise DomainError("distortion coefficients need N >= 1")
    if N == 1 and K > 0:
        raise DomainError("tau is undefined for N = 1 and K > 0")


def tau(K: float, N: float, t, theta):
    """Volume distortion coefficient tau_{K,N}^{(t)}(theta); broadcasts over t, theta.

    For K > 0 the value is +inf once theta >= pi sqrt((N-1)/K).  theta = 0 gives
    the limit value t.

    Examples
    --------
    >>> tau(0.0, 5.0, 0.3, 1.7)
    0.3
    >>> tau(3.0, 4.0, 0.5, math.pi)
    inf
    """
    _check_tau_args(K, N)
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("theta must be >= 0")
    if np.any((t < 0) | (t > 1)):
        raise DomainError("t must lie in [0, 1]")
    t, theta = np.broadcast_arrays(t, theta)
    if K == 0 or N == 1:
        out = t.astype(float, copy=True)
    else:
        a = math.sqrt(abs(K) / (N - 1))
        x = a * theta
        out = t.astype(float, copy=True)  # theta = 0 limit
        pos = x > 0
        if K > 0:
            finite = x < math.pi
            sel = pos & finite
            ratio = np.sin(t[sel] * x[sel]) / np.sin(x[sel])
            out[~finite] = np.inf
        else:
            sel = pos
            ratio = np.sinh(t[sel] * x[sel]) / np.sinh(x[sel])
        # tiny x: the quotient of sines loses digits (subnormal x), use the series
        xs, ts = x[sel], t[sel]
        small = xs < 1e-4
        sign = 1.0 if K > 0 else -1.0
        ratio[small] = ts[small] * (1 + sign * (1 - ts[small] ** 2) * xs[small] ** 2 / 6)
        out[sel] = t[sel] ** (1.0 / N) * ratio ** (1.0 - 1.0 / N)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DistortionQuery:
    K: float
    N: float
    t: float
    theta: float

    def __post_init__(self):
        _check_tau_args(self.K, self.N)

    @property
    def cutoff(self) -> float:
        """Smallest theta with infinite coefficient (inf if none)."""
        if self.K > 0:
            return math.pi * math.sqrt((self.N - 1) / self.K)
        return math.inf

    def value(self) -> float:
        return tau(self.K, self.N, self.t, self.theta)


# -- entropy --------------------------------------------------------------------


def renyi_entropy(mu: DiscreteMeasure, Nprime: float) -> float:
    """-sum rho^(1 - 1/N') w over cells of positive mass and positive weight.

    Zero-weight cells (apexes) have reference measure zero and contribute
    nothing, so a measure with mass there is scored on its absolutely
    continuous part only.
    """
    if not Nprime >= 1:
        raise DomainError("N' must be >= 1")
    w = mu.space.weight
    sel = (mu.mass > 0) & (w > 0)
    return -float(np.sum(mu.density[sel] ** (1.0 - 1.0 / Nprime) * w[sel]))


def _inv_root(density, N):
    """rho^(-1/N) with rho = inf mapped to 0."""
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(density), 0.0, density ** (-1.0 / N))


# -- integral check -------------------------------------------------------------


@dataclass
class CdReport:
    """Per-time comparison of both sides of the entropy convexity inequality."""

    K: float
    Nprime: float
    times: list[float]
    lhs: list[float]
    rhs: list[float]
    deficit: list[float]
    pointwise_violations: int = 0
    pointwise_worst: float = 0.0
    rhs_convex: list[float] | None = None
    merges: int = 0
    tol_cd: float | None = None

    def holds(self, tol: float | None = None) -> bool:
        tol = self.tol_cd if tol is None else tol
        tol = 0.0 if tol is None else tol
        return all(d <= tol for d in self.deficit)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds"] = self.holds()
        return d


def _require_ac(mu: DiscreteMeasure, name: str):
    if not mu.absolutely_continuous:
        raise DomainError(f"{name} has mass on zero-weight cells; its density is undefined")


def cd_integral_check(space: FiniteMetricMeasureSpace, mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                      plan: TransportPlan, ensemble: DiscretePathEnsemble, K: float, Nprime: float,
                      times: Sequence[float] = (0.5,), pointwise_tol: float = 1e-9,
                      mass_floor: float = MASS_FLOOR) -> CdReport:
    """Evaluate the integrated CD(K, N') inequality along ``ensemble`` at ``times``.

    Pairs with infinite distortion coefficient and coupling mass above
    ``mass_floor`` make the right side +inf (an automatic failure).  For K = 0
    the right side is also returned in convex-combination form
    (1 - t) (-S(mu0)) + t (-S(mu1)) as ``rhs_convex``.
    """
    _require_ac(mu0, "mu0")
    _require_ac(mu1, "mu1")
    if plan.space is not space or ensemble.plan is not plan:
        raise DomainError("plan and ensemble must belong to the given space")
    I, J, q = plan.support(mass_floor)
    theta = space.dist[I, J]
    a0 = _inv_root(mu0.density[I], Nprime)
    a1 = _inv_root(mu1.density[J], Nprime)
    e0, e1 = -renyi_entropy(mu0, Nprime), -renyi_entropy(mu1, Nprime)
    lhs, rhs, conv = [], [], []
    for t in times:
        mt = ensemble.measure_at(t)
        lhs.append(-renyi_entropy(mt, Nprime))
        t0 = tau(K, Nprime, 1 - t, theta)
        t1 = tau(K, Nprime, t, theta)
        with np.errstate(invalid="ignore"):
            terms = q * (t0 * a0 + t1 * a1)
        rhs.append(float(np.inf) if np.any(np.isinf(terms)) else float(terms.sum()))
        conv.append((1 - t) * e0 + t * e1)
    dens = ensemble_densities(ensemble, times)
    viol = cd_pointwise_check(ensemble, dens, K, Nprime, pointwise_tol)
    return CdReport(
        K=float(K), Nprime=float(Nprime), times=[float(t) for t in times],
        lhs=lhs, rhs=rhs, deficit=[r - l for r, l in zip(rhs, lhs)],
        pointwise_violations=len(viol),
        pointwise_worst=max((v.excess for v in viol), default=0.0),
        rhs_convex=conv if K == 0 else None, merges=ensemble.merges,
    )


# -- pointwise check ------------------------------------------------------------


@dataclass(frozen=True)
class PointwiseViolation:
    chain: int
    time: float
    lhs: float
    rhs: float

    @property
    def excess(self) -> float:
        return self.rhs - self.lhs


def ensemble_densities(ensemble: DiscretePathEnsemble, times: Sequence[float]) -> dict[float, np.ndarray]:
    """Densities of the interpolated measures at ``times`` and at both endpoints."""
    ts = sorted({0.0, 1.0, *map(float, times)})
    return {t: ensemble.measure_at(t).density for t in ts}


def cd_pointwise_check(ensemble: DiscretePathEnsemble, densities: Mapping[float, np.ndarray],
                       K: float, N: float, tol: float = 1e-9) -> list[PointwiseViolation]:
    """Check rho_t^(-1/N)(g_t) >= tau^(1-t) rho_0^(-1/N)(g_0) + tau^(t) rho_1^(-1/N)(g_1) per chain.

    ``densities`` maps each time (including 0 and 1) to a density vector.
    An infinite density (mass on an apex cell) gives rho^(-1/N) = 0.
    """
    chains = ensemble.chains
    theta = ensemble.space.dist[chains[:, 0], chains[:, -1]]
    r0 = _inv_root(np.asarray(densities[0.0])[chains[:, 0]], N)
    r1 = _inv_root(np.asarray(densities[1.0])[chains[:, -1]], N)
    out = []
    for t in sorted(densities):
        if t in (0.0, 1.0):
            continue
        k = ensemble.time_index(t)
        left = _inv_root(np.asarray(densities[t])[chains[:, k]], N)
        with np.errstate(invalid="ignore"):
            right = tau(K, N, 1 - t, theta) * r0 + tau(K, N, t, theta) * r1
        for c in np.nonzero(right - left > tol)[0]:
            out.append(PointwiseViolation(int(c), float(t), float(left[c]), float(right[c])))
    return out


# -- full pipeline ---------------------------------------------------------------


def run_cd_check(space, mu0, mu1, K, Nprime_list, times=(0.5,), L=1):
    """Solve, interpolate, and check for every N' in ``Nprime_list``."""
    plan = solve_ot(space, mu0, mu1)
    ens = interpolate(plan, L)
    return plan, ens, [cd_integral_check(space, mu0, mu1, plan, ens, K, n, times) for n in Nprime_list]


def nprime_sweep(N: float) -> list[float]:
    """Representative dimensions N' >= N: N, N + 1 and 2N (deduplicated)."""
    return sorted({float(N), float(N) + 1.0, 2.0 * float(N)})


# -- counterexample on a wide base ---------------------------------------------


@dataclass
class CounterexampleRecord:
    """Entropy values for two far-apart bands and their transport midpoint.

    Entropies are S (negative numbers).  ``midpoint_entropy_bound`` is
    -m(B_eps)^(1/(N+1)) for the sampled neighborhood B_eps of the apex;
    ``convexity_gap`` = S(mu_1/2) - (S(mu_0) + S(mu_1)) / 2, positive when
    midpoint convexity fails.
    """

    R: float
    eps: float
    N: float
    n_cells: int
    endpoint_entropy: float
    endpoint_entropy_analytic: float
    midpoint_entropy_bound: float
    midpoint_bound_analytic: float
    measured_midpoint_entropy: float
    convexity_gap: float
    apex_midpoint_mass: float
    violated: bool
    base: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def counterexample_grid(eps: float, fine: int = 15, filler: int = 2, outer: float = 1.0) -> RadialGrid:
    """``fine`` cells on (0, eps], ``filler`` cells across the gap, ``fine`` cells on [outer - eps, outer]."""
    if not 0 < eps < outer / 2:
        raise DomainError("eps must lie in (0, outer/2)")
    edges = np.concatenate([
        np.linspace(0.0, eps, fine + 1),
        np.linspace(eps, outer - eps, filler + 1)[1:],
        np.linspace(outer - eps, outer, fine + 1)[1:],
    ])
    return RadialGrid.from_edges(edges)


def _far_block(base: FiniteMetricMeasureSpace, I: np.ndarray, k: int) -> np.ndarray:
    """k consecutive indices (cyclically) maximizing the minimal distance to I."""
    n = base.n_points
    best, best_val = None, -1.0
    for start in range(n):
        J = (start + np.arange(k)) % n
        if np.intersect1d(I, J).size:
            continue
        val = base.dist[np.ix_(I, J)].min()
        if val > best_val + 1e-12:
            best, best_val = J, val
    return np.sort(best)


def counterexample_run(R: float = 0.2, eps: float = 0.01, N: float = 1.0, resolution: int = 35,
                       base: ManifoldDescriptor | None = None, radial_fine: int = 15,
                       radial_filler: int = 2) -> CounterexampleRecord:
    """Transport between uniform bands over far-apart base arcs of a wide base.

    The base (default: interval of length 3.5 with ``resolution`` cells) must
    have diameter > pi.  I is the first block of base cells of length about
    R, J the block farthest from it; every I-J distance must exceed pi, so
    all transport between I x [1-eps, 1] and J x [1-eps, 1] runs through the
    apex and the midpoint lands in B_eps = (I u J) x (0, eps] u {apex}.
    """
    desc = base if base is not None else interval(3.5, resolution)
    bspace = build_space(desc)
    if bspace.diameter <= math.pi:
        raise DomainError("counterexample needs a base of diameter > pi")
    spacing = bspace.min_positive_distance()
    k = max(1, int(round(R / spacing)))
    I = np.arange(k)
    J = _far_block(bspace, I, k)
    if bspace.dist[np.ix_(I, J)].min() <= math.pi:
        raise DomainError("intervals I, J are not separated by more than pi at this resolution")
    grid = counterexample_grid(eps, radial_fine, radial_filler)
    cone = build_cone(bspace, ConeKind.euclidean(), N, grid, allow_wide_base=True)
    space = cone.as_mms
    r = cone.radius_of
    band = r >= 1.0 - eps
    inner = (r <= eps) & (cone.base_of >= 0)
    in_I = np.isin(cone.base_of, I)
    in_J = np.isin(cone.base_of, J)
    mu0 = DiscreteMeasure.uniform(space, band & in_I)
    mu1 = DiscreteMeasure.uniform(space, band & in_J)
    plan = solve_ot(space, mu0, mu1)
    ens = interpolate(plan, 1)
    mid = ens.measure_at(0.5)
    p = N + 1
    s0, s1, sm = (renyi_entropy(m, p) for m in (mu0, mu1, mid))
    R_eff = k * spacing
    mB = float(space.weight[inner & (in_I | in_J)].sum())
    gap = sm - 0.5 * (s0 + s1)
    return CounterexampleRecord(
        R=float(R), eps=float(eps), N=float(N), n_cells=space.n_points,
        endpoint_entropy=s0,
        endpoint_entropy_analytic=-(R_eff * (1 - (1 - eps) ** p) / p) ** (1 / p),
        midpoint_entropy_bound=-mB ** (1 / p),
        midpoint_bound_analytic=-((2 * R_eff / p) ** (1 / p)) * eps,
        measured_midpoint_entropy=sm,
        convexity_gap=gap,
        apex_midpoint_mass=float(mid.mass[cone.apex_cells[0]]),
        violated=bool(gap > 0),
        base=desc.to_dict(),
    )


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log|y| against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(lx, ly, 1)[0])
