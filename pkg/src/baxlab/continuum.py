"""Correlated Brownian paths, the perturbed Tanaka flow, local times and the
densities ``g`` and ``alpha_eps`` of the excursion absolute-continuity identity.

Paths use unit-variance coordinates with correlation ``rho``; the discrete
tandem walk rescaled by ``sqrt(2n)`` has this normalization with ``rho = -1/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import coal, walk
from .errors import BadEpsilon, BadParameter, OffGridStart
from .rng import as_rng

RHO_BAXTER = -0.5
QUAD_RADIUS = 12.0


@dataclass(frozen=True)
class SampledPath2D:
    dt: float
    values: np.ndarray  # shape (N + 1, 2)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise BadParameter("a path needs at least two grid values of shape (., 2)")
        if not np.all(np.isfinite(v)):
            raise BadParameter("path values must be finite")
        if not self.dt > 0:
            raise BadParameter("dt must be positive")
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @property
    def x(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.values[:, 1]

    def grid_index(self, u: float) -> int:
        k = int(round(u / self.dt))
        if abs(k * self.dt - u) > 1e-9 * max(1.0, abs(u)) or not 0 <= k <= self.steps:
            raise OffGridStart(f"start {u} is not a grid point of step {self.dt}")
        return k

    def to_dict(self) -> dict:
        return {"type": "path2d", "dt": self.dt, "values": self.values.tolist()}


@dataclass(frozen=True)
class FlowSolution:
    """Euler solution of the flow started at grid index ``start``.

    ``values[k]`` is ``Z(t_{start + k})``; ``occupation[k]`` counts the grid
    times ``s <= t_{start + k}`` with ``|Z(s)| < epsilon``.
    """

    start: int
    dt: float
    values: np.ndarray
    epsilon: float
    occupation: np.ndarray = field(repr=False)

    @property
    def u(self) -> float:
        return self.start * self.dt

    @property
    def times(self) -> np.ndarray:
        return (self.start + np.arange(len(self.values))) * self.dt

    def local_time(self) -> np.ndarray:
        return self.occupation * (self.dt / (2.0 * self.epsilon))


def correlated_increments(rho: float, dt: float, size: int | tuple, rng) -> np.ndarray:
    """Gaussian increments with covariance ``dt * [[1, rho], [rho, 1]]``; last axis holds (dX, dY)."""
    if not -1.0 <= rho <= 1.0 or not math.isfinite(rho):
        raise BadParameter(f"rho must lie in [-1, 1], got {rho}")
    if not dt > 0:
        raise BadParameter("dt must be positive")
    rng = as_rng(rng)
    shape = (size,) if isinstance(size, int) else tuple(size)
    g = rng.standard_normal(shape + (2,)) * math.sqrt(dt)
    out = np.empty_like(g)
    out[..., 0] = g[..., 0]
    out[..., 1] = rho * g[..., 0] + math.sqrt(max(0.0, 1.0 - rho * rho)) * g[..., 1]
    return out


def sample_correlated_bm(rho: float, dt: float, T: float, rng=None) -> SampledPath2D:
    """A 2D Brownian path from the origin on ``[0, T]`` with correlation ``rho``."""
    if not T > 0:
        raise BadParameter("T must be positive")
    steps = max(1, int(round(T / dt)))
    inc = correlated_increments(rho, dt, steps, rng)
    values = np.zeros((steps + 1, 2))
    np.cumsum(inc, axis=0, out=values[1:])
    return SampledPath2D(dt, values)


def _flow_step(z: np.ndarray, dx, dy) -> np.ndarray:
    return np.where(z > 0, z + dy, z - dx)


def solve_flow(path: SampledPath2D, u: float, epsilon: float | None = None) -> FlowSolution:
    """Explicit Euler for ``dZ = 1{Z > 0} dY - 1{Z <= 0} dX`` with ``Z(u) = 0``."""
    k0 = path.grid_index(u)
    eps = math.sqrt(path.dt) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise BadParameter("epsilon must be positive")
    inc = np.diff(path.values[k0:], axis=0)
    z = np.empty(len(inc) + 1)
    z[0] = 0.0
    cur = 0.0
    for k, (dx, dy) in enumerate(inc, start=1):
        cur = cur + dy if cur > 0 else cur - dx
        z[k] = cur
    occupation = np.cumsum(np.abs(z) < eps)
    return FlowSolution(k0, path.dt, z, eps, occupation)


def local_time_estimate(z: FlowSolution, epsilon: float | None = None) -> np.ndarray:
    """``(dt / 2 eps) * #{grid s <= t : |Z(s)| < eps}`` as a function of ``t``."""
    if epsilon is None:
        return z.local_time()
    if not epsilon > 0:
        raise BadParameter("epsilon must be positive")
    return np.cumsum(np.abs(z.values) < epsilon) * (z.dt / (2.0 * epsilon))


def solve_flows(path: SampledPath2D, starts: Sequence[int]) -> np.ndarray:
    """Coalescing Euler flows from several grid indices in one pass.

    Row ``r`` holds ``Z^(starts[r])`` on the whole grid, ``nan`` before its
    start.  Each step is the Euler step of ``solve_flow``; trajectories whose
    order would reverse during a step are merged onto the higher new value,
    so the family is weakly ordered at all times and merged rows stay equal.
    Plain Euler trajectories would instead jump past each other near 0.
    """
    starts = np.asarray(starts, dtype=np.int64)
    n = path.steps
    if starts.size and (starts.min() < 0 or starts.max() > n):
        raise OffGridStart("start index outside the grid")
    out = np.full((len(starts), n + 1), np.nan)
    z = np.zeros(len(starts))
    inc = np.diff(path.values, axis=0)
    for k in range(n + 1):
        z[starts == k] = 0.0
        live = np.flatnonzero(starts <= k)
        out[live, k] = z[live]
        if k == n or not live.size:
            continue
        cur = z[live]
        order = live[np.argsort(cur, kind="stable")]
        nxt = _flow_step(z[order], inc[k, 0], inc[k, 1])
        z[order] = np.maximum.accumulate(nxt)
    return out


def phi_estimate(path: SampledPath2D, u: float, m_grid: int) -> float:
    """Grid estimate of the rank function of the flow order at time ``u``.

    The starting points are the grid indices ``floor(j N / m_grid)`` for
    ``j < m_grid``, solved jointly with ``u`` as coalescing flows.  A start
    ``x`` is counted when ``x < u`` and ``Z^(x)(u) < 0``, or when ``x >= u``
    and ``Z^(u)(x) >= 0``.
    """
    if not 1 <= m_grid <= path.steps:
        raise BadParameter("m_grid must lie in 1..number of steps")
    k = path.grid_index(u)
    n = path.steps
    starts = (np.arange(m_grid) * n) // m_grid
    flows = solve_flows(path, np.append(starts, k))
    zu = flows[-1]
    before = starts < k
    count = int(np.count_nonzero(flows[:-1][before, k] < 0))
    count += int(np.count_nonzero(zu[starts[~before]] >= 0))
    return count / m_grid


def phi_all(path: SampledPath2D, m_grid: int) -> np.ndarray:
    """Ranks in ``1..m_grid`` of the grid starts of ``phi_estimate`` under the flow order."""
    if not 1 <= m_grid <= path.steps:
        raise BadParameter("m_grid must lie in 1..number of steps")
    starts = (np.arange(m_grid) * path.steps) // m_grid
    flows = solve_flows(path, starts)
    at = flows[:, starts]  # at[i, j] = Z^(starts[i]) at time starts[j]
    upper = np.triu(np.ones((m_grid, m_grid), dtype=bool), 1)
    below = (at < 0) & upper    # i < j and x_i precedes x_j
    after = (at >= 0) & upper   # i < j and x_j precedes x_i
    return 1 + below.sum(axis=0) + after.sum(axis=1)


# ----------------------------------------------------------------------------
# densities


def g_density(x1, x2):
    """``x1 x2 (x1 + x2) exp(-(x1^2 + x2^2 + x1 x2) / 3) / sqrt(3 pi)``, on all of R^2."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    val = x1 * x2 * (x1 + x2) * np.exp(-(x1 * x1 + x2 * x2 + x1 * x2) / 3.0) / math.sqrt(3.0 * math.pi)
    return val if val.ndim else float(val)


def _g_quadrant(x1, x2):
    return np.where((x1 >= 0) & (x2 >= 0), g_density(x1, x2), 0.0)


def g_tail_bound(radius: float) -> float:
    """Upper bound on the mass of ``g`` outside ``[0, radius]^2``.

    On the quadrant ``x1^2 + x2^2 + x1 x2 >= |x|^2`` and
    ``x1 x2 (x1 + x2) <= |x|^3 / sqrt(2)``; integrating in polar
    coordinates over ``|x| > radius`` gives the bound below.
    """
    r = radius
    # int_r^inf s^4 e^{-s^2/3} ds = e^{-r^2/3} (3/2 r^3 + 27/4 r) + (27/4) int_r^inf e^{-s^2/3} ds
    tail4 = (math.exp(-r * r / 3) * (1.5 * r ** 3 + 6.75 * r)
             + 6.75 * math.sqrt(3 * math.pi) / 2 * math.erfc(r / math.sqrt(3)))
    return (math.pi / 2) / math.sqrt(2) / math.sqrt(3 * math.pi) * tail4


def g_integral(radius: float = QUAD_RADIUS, order: int = 120) -> tuple[float, float]:
    """Gauss-Legendre value of the integral of ``g`` over ``[0, radius]^2`` and the tail bound."""
    t, w = leggauss(order)
    nodes = (t + 1) * radius / 2
    weights = w * radius / 2
    a, b = np.meshgrid(nodes, nodes, indexing="ij")
    return float(np.sum(np.outer(weights, weights) * g_density(a, b))), g_tail_bound(radius)


@dataclass(frozen=True)
class AlphaValue:
    value: float
    error: float  # quadrature disagreement plus truncation bound


class AlphaQuadrature:
    """Batch evaluator of ``alpha_eps``.

    With ``s = sqrt(eps / 2)``,
    ``alpha_eps(a, b) = sqrt(3) / (4 eps^4) * int_{x >= -a/s, x >= 0} g(x) g(x + b/s) dx``.
    The domain is truncated to a square of side ``radius`` from its lower corner;
    the remainder is bounded by ``max g`` times the tail mass of ``g``.
    """

    def __init__(self, eps: float, order: int = 80, radius: float = QUAD_RADIUS):
        if not 0 < eps < 0.5:
            raise BadEpsilon(f"epsilon must lie in (0, 1/2), got {eps}")
        self.eps = eps
        self.scale = math.sqrt(eps / 2)
        self.prefactor = math.sqrt(3) / (4 * eps ** 4)
        self.radius = radius
        t, w = leggauss(order)
        self.nodes = (t + 1) * radius / 2
        self.weights = np.outer(w, w) * (radius / 2) ** 2
        self.g_max = 0.27  # sup of g on the quadrant is about 0.267

    def raw(self, a: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        lo = np.maximum(-a / self.scale, 0.0)
        shift = b / self.scale
        out = np.empty(len(a))
        n1 = self.nodes[None, :, None]
        n2 = self.nodes[None, None, :]
        for s in range(0, len(a), chunk):
            e = slice(s, s + chunk)
            x1 = lo[e, 0, None, None] + n1
            x2 = lo[e, 1, None, None] + n2
            f = g_density(x1, x2) * _g_quadrant(x1 + shift[e, 0, None, None], x2 + shift[e, 1, None, None])
            out[e] = np.einsum("kij,ij->k", f, self.weights)
        return self.prefactor * out

    def __call__(self, a, b) -> np.ndarray:
        return self.raw(a, b)

    def tail_error(self) -> float:
        return self.prefactor * self.g_max * g_tail_bound(self.radius)


def alpha_eps(eps: float, a: Sequence[float], b: Sequence[float]) -> float:
    return alpha_eps_with_error(eps, a, b).value


def alpha_eps_with_error(eps: float, a: Sequence[float], b: Sequence[float]) -> AlphaValue:
    """``alpha_eps`` at one point with an error estimate from two quadrature orders."""
    lo = AlphaQuadrature(eps, order=60)
    hi = AlphaQuadrature(eps, order=100)
    v_lo = float(lo(np.asarray([a]), np.asarray([b]))[0])
    v_hi = float(hi(np.asarray([a]), np.asarray([b]))[0])
    return AlphaValue(v_hi, abs(v_hi - v_lo) + hi.tail_error())


# ----------------------------------------------------------------------------
# batched path statistics


def _bridge_min(x0: np.ndarray, x1: np.ndarray, dt: float, rng) -> np.ndarray:
    """Exact minimum of a unit-variance Brownian bridge over one step."""
    u = rng.random(x0.shape)
    d = x1 - x0
    return 0.5 * (x0 + x1 - np.sqrt(d * d - 2.0 * dt * np.log1p(-u)))


def bm_endpoint_and_infimum(rho: float, dt: float, T: float, paths: int, rng=None,
                            chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """``(inf_{[0,T]} W, W(T))`` for ``paths`` independent correlated Brownian motions.

    The infimum is exact in law for each coordinate: in every step the
    minimum of the bridge between the two grid values is sampled.
    """
    rng = as_rng(rng)
    steps = max(1, int(round(T / dt)))
    inf = np.empty((paths, 2))
    end = np.empty((paths, 2))
    for s in range(0, paths, chunk):
        p = min(chunk, paths - s)
        w = np.zeros((p, 2))
        m = np.zeros((p, 2))
        for _ in range(steps):
            nxt = w + correlated_increments(rho, dt, p, rng)
            np.minimum(m, _bridge_min(w, nxt, dt, rng), out=m)
            w = nxt
        inf[s:s + p] = m
        end[s:s + p] = w
    return inf, end


class WedgeKernel:
    """Killed transition density of the ``rho = -1/2`` Brownian motion in a shifted quadrant.

    In whitened coordinates the quadrant ``{x >= -c}`` is a wedge of angle
    ``pi/3``, so the method of images with the six elements of the dihedral
    group generated by the two boundary reflections is exact.
    """

    def __init__(self, T: float, radial: int = 80, angular: int = 40):
        self.T = T
        self.L = np.array([[1.0, 0.0], [-0.5, math.sqrt(3) / 2]])
        n1 = np.array([1.0, 0.0])
        n2 = np.array([-0.5, math.sqrt(3) / 2])
        r1 = np.eye(2) - 2 * np.outer(n1, n1)
        r2 = np.eye(2) - 2 * np.outer(n2, n2)
        self.group = [(np.eye(2), 1.0), (r1, -1.0), (r2, -1.0),
                      (r1 @ r2, 1.0), (r2 @ r1, 1.0), (r1 @ r2 @ r1, -1.0)]
        self.tr, self.wr = leggauss(radial)
        tt, wt = leggauss(angular)
        lo, hi = math.pi / 6, math.pi / 2  # wedge directions around the apex
        self.theta = (tt + 1) / 2 * (hi - lo) + lo
        self.wtheta = wt * (hi - lo) / 2

    def apex(self, c1: float, c2: float) -> np.ndarray:
        return np.array([-c1, (-c2 - c1 / 2) * 2 / math.sqrt(3)])

    def expect(self, c1: float, c2: float, h) -> float:
        """``E[1{inf_{[0,T]} W >= -c} h(W(T))]`` for ``W`` from the origin, ``c >= 0``."""
        p = self.apex(c1, c2)
        # every image Gaussian is centred at distance |p| from the apex
        dist = float(np.linalg.norm(p))
        rmin = max(0.0, dist - 9.0 * math.sqrt(self.T))
        rmax = dist + 9.0 * math.sqrt(self.T)
        r = rmin + (self.tr + 1) / 2 * (rmax - rmin)
        theta, wtheta = self.theta, self.wtheta
        need = int(6 * rmax * (math.pi / 3) / math.sqrt(self.T))
        if need > len(theta):  # far apex: keep a few nodes per standard deviation of arc
            tt, wt = leggauss(need)
            theta = (tt + 1) / 2 * (math.pi / 3) + math.pi / 6
            wtheta = wt * (math.pi / 6)
        rr, th = np.meshgrid(r, theta, indexing="ij")
        weight = np.outer(self.wr * (rmax - rmin) / 2, wtheta) * rr
        beta = np.stack([p[0] + rr * np.cos(th), p[1] + rr * np.sin(th)], -1)
        dens = np.zeros(rr.shape)
        for g, sign in self.group:
            d = beta - (p - g @ p)
            dens += sign * np.exp(-(d * d).sum(-1) / (2 * self.T))
        dens /= 2 * math.pi * self.T
        return float(np.sum(weight * dens * h(beta @ self.L.T)))


class AlphaControl:
    """Fixed-node discretization of ``alpha_eps`` used as a control variate.

    ``alpha_eps(a, b) = C int_{x >= 0} 1{a >= -s x} g(x) g(x + b/s) dx``; freezing
    the nodes gives a path functional whose mean follows from ``WedgeKernel``.
    """

    def __init__(self, eps: float, order: int = 24, radius: float = 8.0):
        if not 0 < eps < 0.5:
            raise BadEpsilon(f"epsilon must lie in (0, 1/2), got {eps}")
        self.eps = eps
        self.scale = math.sqrt(eps / 2)
        self.prefactor = math.sqrt(3) / (4 * eps ** 4)
        t, w = leggauss(order)
        x = (t + 1) / 2 * radius
        self.x1, self.x2 = np.meshgrid(x, x, indexing="ij")
        self.w = np.outer(w, w) * (radius / 2) ** 2 * g_density(self.x1, self.x2)

    def __call__(self, a: np.ndarray, b: np.ndarray, chunk: int = 512) -> np.ndarray:
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        s = self.scale
        out = np.empty(len(a))
        x1 = self.x1[None]
        x2 = self.x2[None]
        for k in range(0, len(a), chunk):
            e = slice(k, k + chunk)
            ind = (a[e, 0, None, None] >= -s * x1) & (a[e, 1, None, None] >= -s * x2)
            gb = _g_quadrant(x1 + b[e, 0, None, None] / s, x2 + b[e, 1, None, None] / s)
            out[e] = np.einsum("kij,ij->k", ind * gb, self.w)
        return self.prefactor * out

    def mean(self, T: float | None = None) -> float:
        T = 1.0 - 2.0 * self.eps if T is None else T
        kern = WedgeKernel(T)
        s = self.scale
        tot = 0.0
        for x1, x2, w in zip(self.x1.ravel(), self.x2.ravel(), self.w.ravel()):
            tot += w * kern.expect(s * x1, s * x2,
                                   lambda y: _g_quadrant(x1 + y[..., 0] / s, x2 + y[..., 1] / s))
        return self.prefactor * tot


def alpha_expectation_exact(eps: float, order: int = 24, radius: float = 8.0) -> float:
    """``E[alpha_eps(inf W, W(1 - 2 eps))]`` by quadrature against the wedge kernel, no sampling."""
    return AlphaControl(eps, order, radius).mean()


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    plain_mean: float
    plain_stderr: float
    control_mean: float = float("nan")
    coefficient: float = float("nan")


def alpha_expectation(eps: float, dt: float, paths: int, rng=None,
                      control_variate: bool = True) -> MeanEstimate:
    """Monte Carlo estimate of ``E[alpha_eps(inf W, W(1 - 2 eps))]`` for ``rho = -1/2``.

    The control variate is ``AlphaControl`` evaluated on the same paths; its
    mean is computed independently of the sample, so the adjusted estimator
    stays consistent and only its variance changes.
    """
    if not 0 < eps < 0.5:
        raise BadEpsilon(f"epsilon must lie in (0, 1/2), got {eps}")
    T = 1.0 - 2.0 * eps
    inf, end = bm_endpoint_and_infimum(RHO_BAXTER, dt, T, paths, rng)
    vals = AlphaQuadrature(eps)(inf, end)
    plain_mean = float(vals.mean())
    plain_se = float(vals.std(ddof=1) / math.sqrt(paths))
    if not control_variate:
        return MeanEstimate(plain_mean, plain_se, plain_mean, plain_se)
    ctl = AlphaControl(eps)
    cv = ctl(inf, end)
    mu = float(ctl.mean(T))
    coef = float(np.cov(vals, cv)[0, 1] / cv.var(ddof=1))
    adj = vals - coef * (cv - mu)
    return MeanEstimate(float(adj.mean()), float(adj.std(ddof=1) / math.sqrt(paths)),
                        plain_mean, plain_se, mu, coef)


@dataclass(frozen=True)
class FlowBatch:
    z_end: np.ndarray
    local_time: np.ndarray


def flow_batch(rho: float, dt: float, T: float, paths: int, rng=None,
               epsilon: float | None = None, chunk: int = 4096) -> FlowBatch:
    """``Z^(0)(T)`` and its local-time estimate for many independent driving paths."""
    rng = as_rng(rng)
    eps = math.sqrt(dt) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise BadParameter("epsilon must be positive")
    steps = max(1, int(round(T / dt)))
    z_end = np.empty(paths)
    lt = np.empty(paths)
    for s in range(0, paths, chunk):
        p = min(chunk, paths - s)
        z = np.zeros(p)
        occ = np.ones(p)  # |Z(0)| = 0 < eps
        for _ in range(steps):
            inc = correlated_increments(rho, dt, p, rng)
            z = _flow_step(z, inc[:, 0], inc[:, 1])
            occ += np.abs(z) < eps
        z_end[s:s + p] = z
        lt[s:s + p] = occ * dt / (2 * eps)
    return FlowBatch(z_end, lt)


# ----------------------------------------------------------------------------
# walk-driven paths


def rescale_walk(w: walk.TandemWalk | walk.LatticeWalk) -> SampledPath2D:
    """The path ``t -> W(floor(n t)) / sqrt(2 n)`` on the grid of step ``1/n``."""
    lw = w.as_lattice() if isinstance(w, walk.TandemWalk) else w
    vals = np.asarray(lw.values, dtype=float)
    n = len(vals)
    return SampledPath2D(1.0 / n, np.vstack([vals, vals[-1:]]) / math.sqrt(2 * n))


def excursion_proxy(n_grid: int, rng=None, *, window: float = 0.0,
                    time_budget: float | None = None,
                    max_trials: int | None = None) -> SampledPath2D:
    """Rescaled uniform tandem walk of size at least ``n_grid``.

    This relies on the rejection sampler, whose acceptance rate decays
    polynomially in ``n_grid``; pass a budget to bound the attempt.
    """
    if n_grid < 1000:
        raise BadParameter("n_grid must be at least 1000")
    w, _ = walk.sample_uniform_tandem(n_grid, window, as_rng(rng),
                                      time_budget=time_budget, max_trials=max_trials)
    return rescale_walk(w)


def discrete_phi(w: walk.TandemWalk | walk.LatticeWalk) -> np.ndarray:
    """``sigma(i) / n`` for the permutation built from ``w``, the discrete counterpart of ``phi``."""
    sigma = coal.permutation_linear(w)
    return np.asarray(sigma.values, dtype=float) / len(sigma)
