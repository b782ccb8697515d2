"""Kernel graph Laplacian on weighted samples and spectral-gap checks.

With Gaussian kernel k_ij = exp(-(d_ij / eps)^2), truncated at 3 eps, and
degrees D_i = sum_j k_ij w_j, the operator is

    L f(i) = (4 / eps^2) sum_j kt_ij w_j (f_j - f_i),   kt_ij = k_ij / sqrt(D_i D_j).

Dividing by the degrees removes the sampling density to leading order, and
the factor 4/eps^2 matches the second moment of the normalized Gaussian in
every dimension, so L approximates the Laplacian of the sampled measure
without a dimension-dependent constant.  L is self-adjoint for the weighted
inner product <f, g> = sum f g w.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, NumericalFailure
from .metric_space import FiniteMetricMeasureSpace

EPS_FACTOR = 2.5
CUTOFF = 3.0


def fill_distance(space: FiniteMetricMeasureSpace, cells=None) -> float:
    """Largest nearest-neighbor distance among ``cells`` (a proxy for the fill distance)."""
    D = space.dist if cells is None else space.dist[np.ix_(cells, cells)]
    D = D + np.diag(np.full(D.shape[0], np.inf))
    return float(D.min(axis=1).max())


@dataclass(frozen=True, eq=False)
class WeightedGraphLaplacian:
    """Graph Laplacian on the positive-weight cells of a space.

    ``cells`` maps operator rows to cell indices of ``space``; zero-weight
    cells (cone apexes) are left out.  ``sym`` is the symmetric matrix
    W^(1/2) L W^(-1/2), whose spectrum equals that of L.
    """

    space: FiniteMetricMeasureSpace
    eps: float
    cells: np.ndarray
    kernel: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    @property
    def scale(self) -> float:
        return 4.0 / self.eps**2

    def restrict(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[0] == self.space.n_points and f.shape[0] != self.cells.size:
            f = f[self.cells]
        if f.shape[0] != self.cells.size:
            raise DomainError("function length matches neither the space nor the operator")
        return f

    def apply(self, f) -> np.ndarray:
        """L f on the operator cells; constants map to exactly zero."""
        f = self.restrict(f)
        kw = self.kernel * self.w[None, :]
        # difference form keeps L(const) = 0 exactly
        return self.scale * np.einsum("ij,ij->i", kw, f[None, :] - f[:, None])

    def inner(self, f, g) -> float:
        return float(np.sum(self.restrict(f) * self.restrict(g) * self.w))

    def dirichlet(self, f) -> float:
        """-<f, L f>, the discrete energy of f."""
        return -self.inner(f, self.apply(f))

    @property
    def sym(self) -> np.ndarray:
        sw = np.sqrt(self.w)
        S = self.scale * self.kernel * np.outer(sw, sw)
        S[np.diag_indices_from(S)] -= self.scale * (self.kernel @ self.w)
        return S

    def matrix(self) -> np.ndarray:
        """L as a dense matrix acting on function values."""
        M = self.scale * self.kernel * self.w[None, :]
        M[np.diag_indices_from(M)] -= self.scale * (self.kernel @ self.w)
        return M


def build_laplacian(space: FiniteMetricMeasureSpace, eps: float | None = None) -> WeightedGraphLaplacian:
    """Assemble the operator; default eps is 2.5 times the largest nearest-neighbor distance."""
    cells = np.nonzero(space.weight > 0)[0]
    if cells.size < 2:
        raise DomainError("need at least two positive-weight cells")
    if eps is None:
        eps = EPS_FACTOR * fill_distance(space, cells)
    if not eps > 0:
        raise DomainError("bandwidth must be positive")
    D = space.dist[np.ix_(cells, cells)]
    K = np.exp(-(D / eps) ** 2)
    K[D > CUTOFF * eps] = 0.0
    n_comp, _ = connected_components(K > 0, directed=False)
    if n_comp > 1:
        raise NumericalFailure(f"kernel graph has {n_comp} components at eps = {eps:.4g}")
    w = space.weight[cells]
    deg = K @ w
    Kt = K / np.sqrt(np.outer(deg, deg))
    Kt.setflags(write=False)
    return WeightedGraphLaplacian(space, float(eps), cells, Kt, w.copy())


def spectrum(L: WeightedGraphLaplacian, k: int = 10):
    """Smallest k eigenvalues of -L with eigenfunctions (columns, weight-orthonormal)."""
    k = min(k, L.cells.size)
    vals, vecs = scipy.linalg.eigh(-L.sym, subset_by_index=[0, k - 1])
    return vals, vecs / np.sqrt(L.w)[:, None]


def spectral_gap(L: WeightedGraphLaplacian) -> float:
    """Smallest nonzero eigenvalue of -L (the first one above the constant mode)."""
    vals, _ = spectrum(L, 2)
    return float(vals[1])


@dataclass
class PoincareReport:
    ratios: list[float | None]
    bound: float
    slack: float
    flagged: list[int]

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        return {"ratios": self.ratios, "bound": self.bound, "slack": self.slack,
                "flagged": self.flagged, "pass": self.passed}


def poincare_check(L: WeightedGraphLaplacian, functions, N: float, slack: float = 0.05) -> PoincareReport:
    """Ratios <f, f> / -<f, L f> after removing the weighted mean of each f.

    Functions that are constant up to roundoff are excluded (ratio None).  A
    ratio above (1 + slack)/(N + 1) is flagged.
    """
    bound = 1.0 / (N + 1)
    ratios, flagged = [], []
    total = L.w.sum()
    for idx, f in enumerate(functions):
        f = L.restrict(f)
        f = f - np.sum(f * L.w) / total
        num = L.inner(f, f)
        den = L.dirichlet(f)
        if num <= 1e-24 * max(1.0, float(np.max(np.abs(f))) ** 2) or den <= 0:
            ratios.append(None)
            continue
        r = num / den
        ratios.append(float(r))
        if r > bound * (1 + slack):
            flagged.append(idx)
    return PoincareReport(ratios, bound, slack, flagged)
