"""Lattice walks with steps in A, the step law nu, and the quadrant samplers.

The step set is ``A = {(+1,-1)} U {(-i, j) : i, j >= 0}``.  The law ``nu``
puts mass 1/2 on ``(+1,-1)`` and ``2**(-i-j-3)`` on ``(-i, j)``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    BadEndpoints,
    BadIncrement,
    LeftQuadrant,
    SamplerBudgetExceeded,
    SizeTooLarge,
)

MAX_ENUMERATION_SIZE = 7
UP_DOWN = (1, -1)


def is_step(dx: int, dy: int) -> bool:
    return (dx == 1 and dy == -1) or (dx <= 0 and dy >= 0)


@dataclass(frozen=True)
class Step:
    dx: int
    dy: int

    def __post_init__(self):
        if not is_step(self.dx, self.dy):
            raise BadIncrement(f"({self.dx},{self.dy}) is not in A")

    @property
    def is_up_down(self) -> bool:
        return self.dx == 1


class StepLaw:
    """The fixed law nu on A."""

    def mass(self, dx: int, dy: int) -> float:
        if dx == 1 and dy == -1:
            return 0.5
        if dx <= 0 and dy >= 0:
            return 2.0 ** (dx - dy - 3)
        return 0.0

    def log2_mass(self, dx: int, dy: int) -> int:
        """Exact base-2 logarithm of the mass of a step of A."""
        if dx == 1 and dy == -1:
            return -1
        if dx <= 0 and dy >= 0:
            return dx - dy - 3
        raise BadIncrement(f"({dx},{dy}) is not in A")

    def most_probable(self, count: int) -> list[tuple[int, int]]:
        """The ``count`` heaviest steps, ties broken by ``(i, j)``."""
        out = [UP_DOWN]
        level = 0
        while len(out) < count:
            for i in range(level + 1):
                out.append((-i, level - i))
            level += 1
        return out[:count]


NU = StepLaw()


def _check_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise BadIncrement("a walk is a nonempty sequence of integer pairs")
    return arr


def _bad_step_index(arr: np.ndarray) -> int | None:
    d = np.diff(arr, axis=0)
    ok = ((d[:, 0] == 1) & (d[:, 1] == -1)) | ((d[:, 0] <= 0) & (d[:, 1] >= 0))
    bad = np.flatnonzero(~ok)
    return int(bad[0]) if bad.size else None


@dataclass(frozen=True, eq=False)
class LatticeWalk:
    """A walk with increments in A, indexed by the times ``t0, t0+1, ...``.

    Walks are defined up to an additive constant; constructors pin them so that
    the value at time 0 (or at ``t0`` when 0 is not a time) is ``(0, 0)``.
    """

    values: np.ndarray
    t0: int = 1

    def __post_init__(self):
        arr = _check_values(self.values)
        k = _bad_step_index(arr)
        if k is not None:
            raise BadIncrement(
                f"increment between times {self.t0 + k} and {self.t0 + k + 1} is "
                f"{tuple(int(v) for v in arr[k + 1] - arr[k])}, not in A"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_steps(cls, steps, t0: int = 1, start=(0, 0)) -> "LatticeWalk":
        steps = np.asarray(steps, dtype=np.int64).reshape(-1, 2)
        vals = np.vstack([np.zeros((1, 2), np.int64), np.cumsum(steps, axis=0)]) + np.asarray(start)
        return cls(vals, t0)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> range:
        return range(self.t0, self.t0 + len(self.values))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def value(self, t: int) -> tuple[int, int]:
        x, y = self.values[t - self.t0]
        return int(x), int(y)

    def pinned(self) -> "LatticeWalk":
        """Representative with value ``(0,0)`` at time 0 if present, else at ``t0``."""
        ref = -self.t0 if self.t0 <= 0 < self.t0 + len(self.values) else 0
        return LatticeWalk(self.values - self.values[ref], self.t0)

    def restrict(self, j: int, k: int) -> "LatticeWalk":
        if not (self.t0 <= j <= k < self.t0 + len(self.values)):
            raise BadIncrement(f"[{j},{k}] is not inside the time interval of the walk")
        return LatticeWalk(self.values[j - self.t0:k - self.t0 + 1].copy(), j)

    def same_as(self, other: "LatticeWalk") -> bool:
        """Equality up to an additive constant, with equal time intervals."""
        if self.t0 != other.t0 or len(self) != len(other):
            return False
        return bool(np.array_equal(self.steps, other.steps))

    def to_dict(self) -> dict:
        return {"type": "lattice_walk", "t0": self.t0, "values": self.values.tolist()}


@dataclass(frozen=True)
class TandemViolation:
    index: int
    invariant: str
    detail: str


@dataclass(frozen=True, eq=False)
class TandemWalk:
    """A walk of W_n: steps in A, quadrant-valued, X_1 = 0 and Y_n = 0."""

    values: np.ndarray

    def __post_init__(self):
        arr = _check_values(self.values)
        problem = tandem_violation(arr)
        if problem is not None:
            raise _violation_error(problem)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return isinstance(other, TandemWalk) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def key(self) -> tuple[tuple[int, int], ...]:
        return tuple((int(x), int(y)) for x, y in self.values)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def as_lattice(self) -> LatticeWalk:
        return LatticeWalk(self.values, 1)

    def to_dict(self) -> dict:
        return {"type": "tandem_walk", "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TandemWalk":
        if data.get("type") != "tandem_walk":
            raise BadIncrement(f"not a tandem walk record: type={data.get('type')!r}")
        return cls(data["values"])


def tandem_violation(values) -> TandemViolation | None:
    """First violated tandem invariant, or None.  Indices are 1-based times."""
    arr = _check_values(values)
    k = _bad_step_index(arr)
    if k is not None:
        inc = tuple(int(v) for v in arr[k + 1] - arr[k])
        return TandemViolation(k + 2, "increment", f"step into time {k + 2} is {inc}, not in A")
    neg = np.flatnonzero((arr < 0).any(axis=1))
    if neg.size:
        t = int(neg[0])
        return TandemViolation(t + 1, "quadrant", f"value {tuple(arr[t].tolist())} leaves the quadrant")
    if arr[0, 0] != 0:
        return TandemViolation(1, "endpoints", f"X_1 = {arr[0, 0]} but must be 0")
    if arr[-1, 1] != 0:
        return TandemViolation(len(arr), "endpoints", f"Y_n = {arr[-1, 1]} but must be 0")
    return None


def _violation_error(v: TandemViolation) -> Exception:
    cls = {"increment": BadIncrement, "quadrant": LeftQuadrant, "endpoints": BadEndpoints}[v.invariant]
    err = cls(f"time {v.index}: {v.detail}")
    err.report = v
    return err


def validate_tandem(values) -> TandemWalk:
    """Return the walk, or raise with a ``report`` attribute naming the first violation."""
    return TandemWalk(values)


# -- the law nu ----------------------------------------------------------------

def sample_steps(count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. nu-steps as an int64 array of shape (count, 2)."""
    updown = rng.random(count) < 0.5
    i = rng.geometric(0.5, count) - 1
    j = rng.geometric(0.5, count) - 1
    out = np.empty((count, 2), dtype=np.int64)
    out[:, 0] = np.where(updown, 1, -i)
    out[:, 1] = np.where(updown, -1, j)
    return out


def sample_step(rng: np.random.Generator) -> Step:
    dx, dy = sample_steps(1, rng)[0]
    return Step(int(dx), int(dy))


@dataclass(frozen=True)
class NuMoments:
    mean: tuple[float, float]
    covariance: tuple[tuple[float, float], tuple[float, float]]
    truncation: int
    tail_bound: float

    @property
    def correlation(self) -> float:
        c = self.covariance
        return c[0][1] / math.sqrt(c[0][0] * c[1][1])


def nu_moments(tail: float = 1e-15) -> NuMoments:
    """Mean and covariance of nu by a truncated double series.

    Terms with ``i + j > L`` are dropped, where ``L`` is the smallest level whose
    neglected contribution to any second moment is below ``tail``.  That bound
    is returned alongside the moments.
    """

    def tail_bound(level: int) -> float:
        # sum over s > level of (s + 1) s^2 2^(-s-3) bounds every |E[x y]| piece
        s = np.arange(level + 1, level + 400, dtype=float)
        return float(np.sum((s + 1) * s * s * 2.0 ** (-s - 3)))

    level = 1
    while tail_bound(level) >= tail:
        level += 1
    i, j = np.meshgrid(np.arange(level + 1), np.arange(level + 1), indexing="ij")
    keep = (i + j) <= level
    w = np.where(keep, 2.0 ** (-(i + j) - 3), 0.0)
    x, y = -i.astype(float), j.astype(float)
    mx = 0.5 + math.fsum((w * x).ravel())
    my = -0.5 + math.fsum((w * y).ravel())
    exx = 0.5 + math.fsum((w * x * x).ravel())
    eyy = 0.5 + math.fsum((w * y * y).ravel())
    exy = -0.5 + math.fsum((w * x * y).ravel())
    cov = ((exx - mx * mx, exy - mx * my), (exy - mx * my, eyy - my * my))
    return NuMoments((mx, my), cov, level, tail_bound(level))


def window_probability(walk: LatticeWalk) -> float:
    """Probability that ``len(walk) - 1`` i.i.d. nu-steps are exactly these steps."""
    steps = walk.steps
    return 2.0 ** sum(NU.log2_mass(int(dx), int(dy)) for dx, dy in steps)


def sample_window(h: int, rng: np.random.Generator) -> LatticeWalk:
    """``2h`` i.i.d. nu-steps on the times ``-h..h``, pinned at ``(0,0)`` at time 0."""
    if h < 0:
        raise ValueError("h must be non-negative")
    steps = sample_steps(2 * h, rng)
    vals = np.vstack([np.zeros((1, 2), np.int64), np.cumsum(steps, axis=0)])
    vals -= vals[h]
    return LatticeWalk(vals, -h)


def nu_walk(n: int, rng: np.random.Generator) -> LatticeWalk:
    """Unconditioned nu-walk with ``n`` values, started at ``(0,0)`` at time 1."""
    return LatticeWalk.from_steps(sample_steps(n - 1, rng))


# -- exact enumeration ---------------------------------------------------------

def enumerate_tandem(n: int) -> Iterator[TandemWalk]:
    """Every walk of W_n exactly once (depth-first, lexicographic in the values)."""
    if n > MAX_ENUMERATION_SIZE:
        raise SizeTooLarge(f"enumerate_tandem is limited to n <= {MAX_ENUMERATION_SIZE}")
    if n < 1:
        return
    path: list[tuple[int, int]] = []

    def extend(x: int, y: int):
        path.append((x, y))
        remaining = n - len(path)
        if remaining == 0:
            if y == 0:
                yield TandemWalk(path)
        else:
            # Y drops by at most one per step, so Y <= remaining steps is needed
            for i in range(x + 1):
                for j in range(remaining - y + 1):
                    yield from extend(x - i, y + j)
            if y >= 1:
                yield from extend(x + 1, y - 1)
        path.pop()

    for h in range(n):
        yield from extend(0, h)


def reverse_swap(w: TandemWalk) -> TandemWalk:
    """Time reversal with swapped coordinates: ``r_t = (Y_{n+1-t}, X_{n+1-t})``."""
    return TandemWalk(w.values[::-1, ::-1].copy())


def random_tandem_walk(n: int, rng: np.random.Generator) -> TandemWalk:
    """A random element of W_n, not uniform.

    A nu-walk started at ``(0, h)``, with ``h + 1`` geometric of parameter 1/2
    capped at ``n``, is forced into W_n: ``i`` is clamped to the current ``X``,
    a ``(+1,-1)`` step at ``Y = 0`` becomes ``(0,0)``, ``j`` is clamped so that
    ``Y`` can still reach 0, and ``(+1,-1)`` is forced once ``Y`` equals the
    number of remaining steps.  The support is all of W_n.
    """
    steps = sample_steps(n - 1, rng)
    vals = np.zeros((n, 2), dtype=np.int64)
    x, y = 0, min(int(rng.geometric(0.5)) - 1, n - 1)
    vals[0] = (x, y)
    for t in range(1, n):
        remaining = n - t
        dx, dy = int(steps[t - 1, 0]), int(steps[t - 1, 1])
        if y >= remaining:
            dx, dy = 1, -1
        elif dx == 1:
            if y == 0:
                dx, dy = 0, 0
        else:
            dx = -min(-dx, x)
            dy = min(dy, remaining - 1 - y)
        x += dx
        y += dy
        vals[t] = (x, y)
    return TandemWalk(vals)


# -- the rejection sampler -------------------------------------------------------

@dataclass
class SamplerStats:
    trials: int = 0
    accepted: int = 0
    elapsed: float = 0.0


def _run_batch(rng, batch: int, max_points: int, record: int | None = None, history: bool = False):
    """Run ``batch`` nu-walks from the origin until they leave the quadrant.

    Walks still inside after ``max_points`` values are abandoned (they can no
    longer be accepted).  Returns the number of in-quadrant values of each
    walk, a flag telling whether the last in-quadrant value is the origin
    (only meaningful for walks that exited), and the recorded values: those of
    trial ``record`` as a list, or with ``history`` the full (time, trial, 2)
    array of positions.
    """
    x = np.zeros(batch, dtype=np.int64)
    y = np.zeros(batch, dtype=np.int64)
    alive = np.arange(batch)
    points = np.ones(batch, dtype=np.int64)
    at_origin = np.zeros(batch, dtype=bool)
    track = [(0, 0)] if record is not None else None
    frames = [np.zeros((batch, 2), dtype=np.int64)] if history else None
    while alive.size:
        k = alive.size
        steps = sample_steps(k, rng)
        nx = x[alive] + steps[:, 0]
        ny = y[alive] + steps[:, 1]
        out = (nx < 0) | (ny < 0)
        exited = alive[out]
        at_origin[exited] = (x[exited] == 0) & (y[exited] == 0)
        stay = ~out
        alive = alive[stay]
        x[alive] = nx[stay]
        y[alive] = ny[stay]
        points[alive] += 1
        if track is not None and record in alive:
            track.append((int(x[record]), int(y[record])))
        if frames is not None:
            frames.append(np.stack([x, y], axis=1))
        alive = alive[points[alive] < max_points + 1]
    recorded = np.stack(frames) if frames is not None else track
    return points, at_origin, recorded


def _accepting(points, at_origin, lo: int, hi: int, max_points: int) -> np.ndarray:
    m = points - 2
    return at_origin & (m >= lo) & (m <= hi) & (points <= max_points)


def size_window(n: int, window: float) -> tuple[int, int]:
    if n < 1:
        raise ValueError("n must be at least 1")
    if window < 0:
        raise ValueError("window must be non-negative")
    return n, max(n, math.ceil((1.0 + window) * n - 1e-12))


def sample_uniform_tandem_many(
    n: int,
    count: int,
    window: float,
    rng: np.random.Generator,
    *,
    batch: int = 1 << 16,
    max_trials: int | None = None,
    time_budget: float | None = None,
    progress: Callable[[SamplerStats], None] | None = None,
) -> tuple[list[TandemWalk], SamplerStats]:
    """``count`` independent outputs of the rejection sampler.

    A nu-walk from the origin is run until it first leaves the quadrant.  It is
    accepted when its last in-quadrant value is the origin and it has ``m + 2``
    in-quadrant values with ``n <= m <= ceil((1 + window) n)``.  The first and
    last values are then dropped.  Conditionally on ``m`` the output is uniform
    on W_m, since every such excursion has probability ``8**-(m+1)`` times the
    exit probability.  Trials are consumed in index order, so the outputs do
    not depend on the batch size beyond the random stream layout.
    """
    lo, hi = size_window(n, window)
    max_points = hi + 2
    stats = SamplerStats()
    start = time.perf_counter()
    out: list[TandemWalk] = []
    while len(out) < count:
        if max_trials is not None and stats.trials >= max_trials:
            raise SamplerBudgetExceeded(
                f"no more trials left after {stats.trials} (accepted {len(out)}/{count})",
                stats.trials, time.perf_counter() - start)
        if time_budget is not None and time.perf_counter() - start > time_budget:
            raise SamplerBudgetExceeded(
                f"time budget {time_budget}s exhausted after {stats.trials} trials "
                f"(accepted {len(out)}/{count})", stats.trials, time.perf_counter() - start)
        b = batch if max_trials is None else max(1, min(batch, max_trials - stats.trials))
        sub = rng.spawn(1)[0]
        state = sub.bit_generator.state
        keep = b * (max_points + 1) <= 1 << 22
        points, at_origin, frames = _run_batch(sub, b, max_points, history=keep)
        hits = np.flatnonzero(_accepting(points, at_origin, lo, hi, max_points))
        stats.trials += b
        for idx in hits[: count - len(out)]:
            idx = int(idx)
            if keep:
                track = frames[: points[idx], idx]
            else:
                replay = np.random.Generator(type(sub.bit_generator)())
                replay.bit_generator.state = state
                _, _, track = _run_batch(replay, b, max_points, record=idx)
            out.append(TandemWalk(np.array(track[1:-1], dtype=np.int64)))  # copy: frees the batch
        stats.accepted = len(out)
        stats.elapsed = time.perf_counter() - start
        if progress is not None:
            progress(stats)
    return out, stats


def sample_uniform_tandem(
    n: int,
    window: float,
    rng: np.random.Generator,
    *,
    batch: int | None = None,
    max_trials: int | None = None,
    time_budget: float | None = None,
    progress: Callable[[SamplerStats], None] | None = None,
) -> tuple[TandemWalk, int]:
    """One rejection-sampler output and its realized size ``m``."""
    if batch is None:
        batch = 1024 if n <= 8 else 1 << 14
    walks, _ = sample_uniform_tandem_many(
        n, 1, window, rng, batch=batch, max_trials=max_trials,
        time_budget=time_budget, progress=progress)
    return walks[0], len(walks[0])


def acceptance_probability(n: int, window: float, counts: Sequence[int]) -> float:
    """Exact per-trial acceptance probability given ``|W_m|`` for the sizes in the window.

    ``counts[m]`` must hold ``|W_m|``.  Each accepted excursion of ``m + 2``
    values has nu-probability ``8**-(m+1)``; the exit from the origin has
    probability 3/4.
    """
    lo, hi = size_window(n, window)
    return sum(3 * counts[m] / (4 * 8 ** (m + 1)) for m in range(lo, hi + 1))


def acceptance_probability_large(n: int, window: float) -> float:
    """The same probability from the scaled counts ``|W_m| / 8**m``, usable for any ``n``."""
    from .perm import scaled_baxter_numbers

    lo, hi = size_window(n, window)
    r = scaled_baxter_numbers(hi)
    return float(r[lo: hi + 1].sum() * 0.75 / 8)
