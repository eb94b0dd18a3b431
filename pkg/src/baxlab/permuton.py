"""Permutons discretized on a k-by-k grid.

Inside each cell the measure is taken to be uniform, so a grid permuton
describes an honest probability measure on the unit square and any grid can
be resampled to any other resolution.  ``mass[i, j]`` is the mass of the cell
``[i/k, (i+1)/k] x [j/k, (j+1)/k]`` (first index horizontal).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from . import coal, walk
from .errors import InvalidPermuton, ResolutionMismatch, SamplerBudgetExceeded
from .perm import Permutation, std
from .rng import as_rng

MASS_TOL = 1e-12
MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class GridPermuton:
    k: int
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != (self.k, self.k) or self.k < 1:
            raise InvalidPermuton(f"mass must be a {self.k}x{self.k} matrix")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise InvalidPermuton("masses must be finite and non-negative")
        if abs(m.sum() - 1.0) > MASS_TOL * max(1, self.k):
            raise InvalidPermuton(f"total mass {m.sum()!r} is not 1")
        target = 1.0 / self.k
        if (np.abs(m.sum(axis=1) - target).max() > MARGINAL_TOL
                or np.abs(m.sum(axis=0) - target).max() > MARGINAL_TOL):
            raise InvalidPermuton("marginals are not uniform")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @classmethod
    def uniform(cls, k: int) -> "GridPermuton":
        return cls(k, np.full((k, k), 1.0 / (k * k)))

    def to_dict(self) -> dict:
        return {"type": "grid_permuton", "k": self.k, "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GridPermuton":
        if data.get("type") != "grid_permuton":
            raise InvalidPermuton(f"not a grid permuton record: type={data.get('type')!r}")
        return cls(int(data["k"]), np.asarray(data["mass"], dtype=float))

    def rectangle_mass(self, x0: int, x1: int, y0: int, y1: int) -> float:
        """Mass of ``[x0/k, x1/k] x [y0/k, y1/k]``."""
        return float(self.mass[x0:x1, y0:y1].sum())


def overlap_matrix(n: int, k: int) -> sparse.csr_matrix:
    """``A[i, j]`` = fraction of the cell ``[i/n, (i+1)/n]`` lying in ``[j/k, (j+1)/k]``.

    Rows sum to 1.  Computed on the integer lattice of step ``1/(n k)``.
    """
    cuts = np.union1d(np.arange(0, n * k + 1, k), np.arange(0, n * k + 1, n))
    left, right = cuts[:-1], cuts[1:]
    return sparse.csr_matrix(((right - left) / k, (left // k, left // n)), shape=(n, k))


def resample(mu: GridPermuton, k: int) -> GridPermuton:
    """Mass-proportional transfer to a ``k``-grid (refinement or coarsening)."""
    if k == mu.k:
        return mu
    a = overlap_matrix(mu.k, k)
    m = (a.T @ sparse.csr_matrix(mu.mass) @ a).toarray()
    return _trusted(k, m)


def _trusted(k: int, m: np.ndarray) -> GridPermuton:
    # rebalance rounding so the invariants hold to machine precision
    return GridPermuton(k, np.clip(m, 0.0, None) / m.sum())


def mu_sigma(sigma: Permutation, k: int | None = None) -> GridPermuton:
    """Cell measure of the diagram of ``sigma``, optionally transferred to a ``k``-grid.

    With ``k`` given the ``n x n`` matrix is never formed.
    """
    n = len(sigma)
    if n < 1:
        raise InvalidPermuton("the empty permutation has no permuton")
    rows = np.arange(n)
    cols = np.asarray(sigma.values) - 1
    if k is None or k == n:
        m = np.zeros((n, n))
        m[rows, cols] = 1.0 / n
        return GridPermuton(n, m)
    p = sparse.csr_matrix((np.full(n, 1.0 / n), (rows, cols)), shape=(n, n))
    a = overlap_matrix(n, k)
    return _trusted(k, (a.T @ p @ a).toarray())


def d_square(mu: GridPermuton, nu: GridPermuton) -> float:
    """Largest ``|mu(R) - nu(R)|`` over rectangles ``R`` with corners on the grid lines.

    For two column boundaries the mass difference as a function of the row
    boundary is a walk ``c``; the best rectangle between them has value
    ``max(c) - min(c)``.  This gives ``O(k^3)`` time.
    """
    if mu.k != nu.k:
        raise ResolutionMismatch(f"resolutions differ: {mu.k} vs {nu.k}")
    k = mu.k
    diff = mu.mass - nu.mass
    pref = np.zeros((k + 1, k + 1))
    np.cumsum(np.cumsum(diff, axis=0), axis=1, out=pref[1:, 1:])
    best = 0.0
    for x0 in range(k):
        block = pref[x0 + 1:] - pref[x0]
        best = max(best, float(np.ptp(block, axis=1).max()))
    return best


def d_square_bound(mu: GridPermuton, nu: GridPermuton, k: int) -> tuple[float, float]:
    """Grid distance after transfer to a common ``k``-grid, and an upper bound on the true distance.

    Any rectangle can be shrunk to grid lines by moving each side at most
    ``1/k``; with uniform marginals each move changes either mass by at most
    ``1/k``, hence the slack ``4/k``.
    """
    d = d_square(resample(mu, k), resample(nu, k))
    return d, d + 4.0 / k


def perm_k(mu: GridPermuton, k: int, rng=None) -> Permutation:
    """Permutation induced by ``k`` independent points drawn from ``mu``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = as_rng(rng)
    flat = mu.mass.ravel()
    support = np.flatnonzero(flat)
    cells = support[rng.choice(support.size, size=k, p=flat[support] / flat[support].sum())]
    ci, cj = np.divmod(cells, mu.k)
    return _induced(ci, cj, mu.k, rng)


def _induced(ci: np.ndarray, cj: np.ndarray, k_grid: int, rng) -> Permutation:
    x = (ci + rng.random(len(ci))) / k_grid
    y = (cj + rng.random(len(cj))) / k_grid
    order = np.argsort(x, kind="stable")
    return std(y[order].tolist())


def perm_k_of_permutation(sigma: Permutation, k: int, rng=None) -> Permutation:
    """``perm_k(mu_sigma(sigma), k)`` without forming the ``n x n`` grid."""
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = as_rng(rng)
    n = len(sigma)
    i = rng.integers(0, n, size=k)
    return _induced(i, np.asarray(sigma.values)[i] - 1, n, rng)


def rotate_grid(mu: GridPermuton) -> GridPermuton:
    """Image under ``(x, y) -> (y, 1 - x)``, the grid form of ``rotate_star``."""
    return GridPermuton(mu.k, np.ascontiguousarray(mu.mass.T[:, ::-1]))


# ----------------------------------------------------------------------------
# uniform Baxter permutations and their intensity


def sample_baxter(n: int, rng=None, *, window: float = 0.0, time_budget: float | None = None,
                  max_trials: int | None = None) -> Permutation:
    """Uniform Baxter permutation through the rejection sampler and the linear forest build."""
    w, _ = walk.sample_uniform_tandem(n, window, as_rng(rng), time_budget=time_budget,
                                      max_trials=max_trials)
    return coal.permutation_linear(w)


@dataclass(frozen=True)
class IntensityEstimate:
    mean: GridPermuton
    samples: list[GridPermuton]
    sizes: list[int]

    def stderr(self) -> np.ndarray:
        stack = np.stack([s.mass for s in self.samples])
        if len(stack) < 2:
            return np.full(self.mean.mass.shape, np.inf)
        return stack.std(axis=0, ddof=1) / math.sqrt(len(stack))


def baxter_permuton_estimate(
    n: int,
    samples: int,
    rng=None,
    *,
    k: int = 64,
    window: float = 0.0,
    time_budget: float | None = None,
    sampler: Callable[[int, np.random.Generator], Permutation] | None = None,
) -> IntensityEstimate:
    """Average of ``mu_sigma`` on a ``k``-grid over independent uniform Baxter permutations.

    ``sampler`` replaces the uniform sampler, for plumbing checks with cheaper
    laws.  ``time_budget`` caps the whole run.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    rng = as_rng(rng)
    start = time.perf_counter()
    grids: list[GridPermuton] = []
    sizes: list[int] = []
    for child in rng.spawn(samples):
        if sampler is not None:
            sigma = sampler(n, child)
        else:
            left = None
            if time_budget is not None:
                left = time_budget - (time.perf_counter() - start)
                if left <= 0:
                    raise SamplerBudgetExceeded(
                        f"time budget spent after {len(grids)}/{samples} samples", 0,
                        time.perf_counter() - start)
            sigma = sample_baxter(n, child, window=window, time_budget=left)
        grids.append(mu_sigma(sigma, k))
        sizes.append(len(sigma))
    mean = _trusted(k, np.mean([g.mass for g in grids], axis=0))
    return IntensityEstimate(mean, grids, sizes)


@dataclass(frozen=True)
class CellwiseAgreement:
    cells: int
    outside: int
    max_z: float
    allowed: int

    @property
    def ok(self) -> bool:
        return self.outside <= self.allowed


def cellwise_agreement(diff: np.ndarray, se: np.ndarray, z: float = 3.0) -> CellwiseAgreement:
    """Count cells with ``|diff| > z * se``.

    Under agreement each cell exceeds with probability about ``2(1 - Phi(z))``;
    the allowance is that expectation plus three binomial standard deviations.
    """
    from scipy.stats import norm

    diff = np.asarray(diff, dtype=float).ravel()
    se = np.asarray(se, dtype=float).ravel()
    live = se > 0
    zs = np.zeros_like(diff)
    zs[live] = np.abs(diff[live]) / se[live]
    zs[~live] = np.where(diff[~live] == 0, 0.0, np.inf)
    p = 2 * norm.sf(z)
    cells = diff.size
    allowed = int(math.floor(cells * p + 3 * math.sqrt(cells * p * (1 - p))))
    return CellwiseAgreement(cells, int(np.count_nonzero(zs > z)), float(zs.max()), allowed)


def rotation_agreement(est: IntensityEstimate, z: float = 3.0) -> CellwiseAgreement:
    """Compare the intensity with its quarter-turn image using per-sample differences."""
    d = np.stack([g.mass - rotate_grid(g).mass for g in est.samples])
    se = d.std(axis=0, ddof=1) / math.sqrt(len(d))
    return cellwise_agreement(d.mean(axis=0), se, z)


def stability_agreement(a: IntensityEstimate, b: IntensityEstimate, z: float = 3.0) -> CellwiseAgreement:
    if a.mean.k != b.mean.k:
        raise ResolutionMismatch("intensity grids differ in resolution")
    se = np.sqrt(a.stderr() ** 2 + b.stderr() ** 2)
    return cellwise_agreement(a.mean.mass - b.mean.mass, se, z)


def concentration_trials(sigma: Permutation, k: int, trials: int, rng=None,
                         grid: int = 1024) -> list[tuple[float, float]]:
    """``(grid distance, upper bound)`` of ``d(mu_{perm_k(mu_sigma)}, mu_sigma)`` per trial."""
    rng = as_rng(rng)
    base = mu_sigma(sigma, grid)
    out = []
    for child in rng.spawn(trials):
        tau = perm_k_of_permutation(sigma, k, child)
        d = d_square(mu_sigma(tau, grid), base)
        out.append((d, d + 4.0 / grid))
    return out


def baxter_rotation_multiset_invariant(n: int) -> bool:
    from collections import Counter

    from .perm import enumerate_baxter, rotate_star

    base = list(enumerate_baxter(n))
    return Counter(rotate_star(s).values for s in base) == Counter(s.values for s in base)

