"""Coalescent-walk processes driven by walks with steps in A.

Trajectories are indexed by their start time ``t`` and evaluated at times
``s >= t``.  Dense processes keep the full triangle in memory; for large sizes
the linear-time forest builder and the streaming permutation are used
instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import BadIncrement, IndexOutOfRange, MalformedTree, NotInImage, NotTotalOrder, SizeTooLarge
from .perm import Permutation, inverse, rotate_star
from .walk import LatticeWalk, TandemWalk, reverse_swap, sample_steps

DENSE_LIMIT = 20_000


def _as_lattice(w) -> LatticeWalk:
    if isinstance(w, TandemWalk):
        return w.as_lattice()
    if isinstance(w, LatticeWalk):
        return w
    return LatticeWalk(np.asarray(w), 1)


def _step_update(z: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Apply one step of the coalescent rule to a vector of current values."""
    if dx == 1 and dy == -1:
        return z - 1
    if dx > 0 or dy < 0:
        raise BadIncrement(f"({dx},{dy}) is not in A")
    i, j = -dx, dy
    # Z >= 0: +j.  Z < -i: +i.  -i <= Z < 0: land on j.
    return np.where(z >= 0, z + j, np.where(z < -i, z + i, j))


@dataclass(frozen=True, eq=False)
class CoalescentProcess:
    """Dense triangular storage: ``traj[a, b] = Z^(t0+a)_(t0+b)`` for ``b >= a``.

    Entries below the diagonal are 0, which is the extension by 0 before the
    start time.
    """

    traj: np.ndarray
    t0: int = 1

    @property
    def n(self) -> int:
        return self.traj.shape[0]

    @property
    def times(self) -> range:
        return range(self.t0, self.t0 + self.n)

    def __len__(self) -> int:
        return self.n

    def _idx(self, t: int) -> int:
        a = t - self.t0
        if not 0 <= a < self.n:
            raise IndexOutOfRange(f"time {t} outside [{self.t0},{self.t0 + self.n - 1}]")
        return a

    def value(self, start: int, time: int) -> int:
        a, b = self._idx(start), self._idx(time)
        if b < a:
            raise IndexOutOfRange(f"trajectory {start} is not defined at time {time}")
        return int(self.traj[a, b])

    def trajectory(self, start: int) -> np.ndarray:
        a = self._idx(start)
        return self.traj[a, a:].copy()

    def restrict(self, j: int, k: int) -> "CoalescentProcess":
        a, b = self._idx(j), self._idx(k)
        return CoalescentProcess(self.traj[a:b + 1, a:b + 1].copy(), j)

    def to_dict(self) -> dict:
        return {"type": "coalescent", "n": self.n, "t0": self.t0,
                "trajectories": [self.trajectory(t).tolist() for t in self.times]}

    def __eq__(self, other) -> bool:
        return (isinstance(other, CoalescentProcess) and self.t0 == other.t0
                and np.array_equal(self.traj, other.traj))

    __hash__ = None


def wc(w) -> CoalescentProcess:
    """The coalescent-walk process of a walk with increments in A (dense)."""
    lw = _as_lattice(w)
    n = len(lw)
    if n > DENSE_LIMIT:
        raise SizeTooLarge(f"dense storage is capped at n = {DENSE_LIMIT}; use the forest path")
    steps = lw.steps
    traj = np.zeros((n, n), dtype=np.int32 if n > 2000 else np.int64)
    for ell in range(n - 1):
        dx, dy = int(steps[ell, 0]), int(steps[ell, 1])
        traj[:ell + 1, ell + 1] = _step_update(traj[:ell + 1, ell], dx, dy)
    return CoalescentProcess(traj, lw.t0)


def trajectory_of(w, start: int) -> np.ndarray:
    """Lazy view: the single trajectory ``Z^(start)`` on ``[start, end]``."""
    lw = _as_lattice(w)
    a = start - lw.t0
    if not 0 <= a < len(lw):
        raise IndexOutOfRange(f"time {start} outside the walk")
    steps = lw.steps[a:]
    out = np.zeros(len(steps) + 1, dtype=np.int64)
    z = np.zeros(1, dtype=np.int64)
    for k, (dx, dy) in enumerate(steps, start=1):
        z = _step_update(z, int(dx), int(dy))
        out[k] = z[0]
    return out


def check_coalescent(z: CoalescentProcess) -> None:
    """Assert the start, non-crossing and absorbing properties; raise ValueError otherwise.

    It is enough to look at consecutive times: ordering the live trajectories
    by their value at time ``k``, the values at ``k + 1`` must be weakly
    increasing, equal values must stay equal, and two values that become
    equal must do so at a non-negative height.
    """
    t = z.traj
    n = z.n
    if n and np.any(np.diag(t) != 0):
        raise ValueError("a trajectory does not start at 0")
    for k in range(n - 1):
        now = t[:k + 1, k]
        nxt = t[:k + 1, k + 1]
        order = np.lexsort((nxt, now))
        a, b = now[order], nxt[order]
        if np.any(np.diff(b) < 0):
            bad = int(np.flatnonzero(np.diff(b) < 0)[0])
            raise ValueError(f"trajectories {order[bad] + z.t0} and {order[bad + 1] + z.t0} "
                             f"cross between times {k + z.t0} and {k + 1 + z.t0}")
        same_now = np.diff(a) == 0
        same_next = np.diff(b) == 0
        if np.any(same_now & ~same_next):
            raise ValueError(f"two trajectories separate after meeting at time {k + z.t0}")
        if np.any(~same_now & same_next & (b[1:] < 0)):
            raise ValueError("coalescent point below zero")


def leq_z(z: CoalescentProcess, i: int, j: int) -> bool:
    a, b = z._idx(i), z._idx(j)
    if a == b:
        return True
    if a < b:
        return bool(z.traj[a, b] < 0)
    return bool(z.traj[b, a] >= 0)


def _ranks_from_counts(below: np.ndarray) -> Permutation:
    n = below.size
    vals = below + 1
    if n and not np.array_equal(np.sort(vals), np.arange(1, n + 1)):
        raise NotTotalOrder("the relation <=_Z is not a total order")
    return Permutation._trusted(vals.tolist())


def cp(z: CoalescentProcess) -> Permutation:
    """``sigma(i) = #{j : j <=_Z i}``; distinct scores certify a total order."""
    t = z.traj
    n = z.n
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    neg = (t < 0) & upper        # neg[a, b]: a <=_Z b with a < b
    nonneg = (t >= 0) & upper    # nonneg[a, b]: b <=_Z a with a < b
    below = neg.sum(axis=0) + nonneg.sum(axis=1)
    return _ranks_from_counts(below)


def cp_streaming(w) -> Permutation:
    """``cp(wc(w))`` in O(n^2) time and O(n) memory, without a dense triangle."""
    lw = _as_lattice(w)
    n = len(lw)
    steps = lw.steps
    z = np.zeros(n, dtype=np.int64)
    later_below = np.zeros(n, dtype=np.int64)  # #{k > a : Z^(a)_k >= 0}
    earlier_below = np.zeros(n, dtype=np.int64)  # #{a < k : Z^(a)_k < 0}
    for ell in range(n - 1):
        dx, dy = int(steps[ell, 0]), int(steps[ell, 1])
        cur = _step_update(z[:ell + 1], dx, dy)
        z[:ell + 1] = cur
        nonneg = cur >= 0
        later_below[:ell + 1] += nonneg
        earlier_below[ell + 1] = ell + 1 - int(np.count_nonzero(nonneg))
    return _ranks_from_counts(later_below + earlier_below)


def local_time(z: CoalescentProcess, i: int, j: int) -> int:
    a, b = z._idx(i), z._idx(j)
    if b < a:
        raise IndexOutOfRange(f"local time needs i <= j, got {i} > {j}")
    return int(np.count_nonzero(z.traj[a, a:b + 1] == 0))


def final_local_times(z: CoalescentProcess) -> np.ndarray:
    """``L^(i)(max I)`` for every start ``i`` in order."""
    n = z.n
    upper = np.triu(np.ones((n, n), dtype=bool))
    return ((z.traj == 0) & upper).sum(axis=1)


# -- planted forests -----------------------------------------------------------

@dataclass(frozen=True)
class PlantedForest:
    """An ordered sequence of plane trees whose root edges carry integer indices.

    Edges are identified with their labels.  ``children[e]`` is ordered, roots
    are in forest order, and ``index[r]`` is the root index of root ``r``.
    """

    labels: tuple[int, ...]
    parent: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)
    roots: tuple[int, ...] = ()
    index: dict = field(default_factory=dict)

    def exploration(self) -> list[int]:
        """Preorder: trees in order, parent before children, children in order."""
        out: list[int] = []
        for r in self.roots:
            stack = [r]
            while stack:
                e = stack.pop()
                out.append(e)
                stack.extend(reversed(self.children.get(e, ())))
        return out

    def depths(self) -> dict:
        d = {}
        for e in self.exploration():
            p = self.parent.get(e)
            d[e] = 1 if p is None else d[p] + 1
        return d

    def validate(self) -> None:
        idx = [self.index[r] for r in self.roots]
        if any(a > b for a, b in zip(idx, idx[1:])):
            raise ValueError("root indices are not weakly increasing")
        seen = self.exploration()
        if sorted(seen) != sorted(self.labels) or len(seen) != len(self.labels):
            raise ValueError("edge labels do not form a bijection with the interval")

    def permutation(self) -> Permutation:
        """Position of each label (in increasing label order) in the exploration."""
        pos = {e: k for k, e in enumerate(self.exploration(), start=1)}
        return Permutation._trusted(pos[e] for e in sorted(self.labels))

    def to_dict(self) -> dict:
        return {"type": "coalescent_forest",
                "roots": list(self.roots),
                "index": [self.index[r] for r in self.roots],
                "children": {str(e): list(c) for e, c in sorted(self.children.items()) if c}}


def _forest_from_parents(labels, parent, order_key, index) -> PlantedForest:
    children: dict = {e: [] for e in labels}
    roots = []
    for e in labels:
        p = parent.get(e)
        if p is None:
            roots.append(e)
        else:
            children[p].append(e)
    for e in labels:
        children[e].sort(key=order_key)
    roots.sort(key=lambda r: (index[r], order_key(r)))
    return PlantedForest(tuple(labels), dict(parent),
                         {e: tuple(c) for e, c in children.items()}, tuple(roots),
                         {r: index[r] for r in roots})


def fortree_naive(z: CoalescentProcess) -> PlantedForest:
    """Forest from trajectories: the parent of ``i`` is the first ``j > i`` with ``Z^(i)_j = 0``."""
    n = z.n
    labels = list(z.times)
    parent = {}
    for a in range(n):
        zeros = np.flatnonzero(z.traj[a, a + 1:] == 0)
        if zeros.size:
            parent[a + z.t0] = int(zeros[0]) + a + 1 + z.t0
    sigma = cp(z).values
    key = lambda e: sigma[e - z.t0]
    index = {e: int(z.traj[e - z.t0, n - 1]) for e in labels if e not in parent}
    return _forest_from_parents(labels, parent, key, index)


def fortree_linear(w) -> PlantedForest:
    """Linear-time forest of ``wc(w)`` maintained step by step.

    Parent-less edges are kept in groups sharing a current index.  Groups with
    index <= 0 live on one stack (largest index on top), groups with positive
    index on another (smallest on top).  Each stack stores indices relative to
    its own additive offset, so re-indexing all groups costs O(1).
    """
    lw = _as_lattice(w)
    n = len(lw)
    t0 = lw.t0
    steps = lw.steps.tolist()
    children: list[list[int]] = [[] for _ in range(n)]
    parent = [-1] * n
    neg_keys: list[int] = []
    neg_groups: list[list[int]] = []
    pos_keys: list[int] = []
    pos_groups: list[list[int]] = []
    neg_off = 0
    pos_off = 0
    neg_keys.append(0)
    neg_groups.append([0])
    for k in range(1, n):
        dx, dy = steps[k - 1]
        if dx == 1 and dy == -1:
            neg_off -= 1
            pos_off -= 1
            if pos_keys and pos_keys[-1] + pos_off == 0:
                pos_keys.pop()
                kids = pos_groups.pop()
                children[k] = kids
                for c in kids:
                    parent[c] = k
        else:
            if dx > 0 or dy < 0:
                raise BadIncrement(f"({dx},{dy}) is not in A")
            i, j = -dx, dy
            popped: list[list[int]] = []
            while neg_keys and neg_keys[-1] + neg_off >= -i:
                neg_keys.pop()
                popped.append(neg_groups.pop())
            merged: list[int] = []
            for g in reversed(popped):
                merged.extend(g)
            neg_off += i
            pos_off += j
            if j == 0:
                children[k] = merged
                for c in merged:
                    parent[c] = k
            elif merged:
                pos_keys.append(j - pos_off)
                pos_groups.append(merged)
        neg_keys.append(-neg_off)
        neg_groups.append([k])
    roots: list[int] = []
    index: dict = {}
    for key, g in zip(neg_keys, neg_groups):
        for r in g:
            roots.append(r + t0)
            index[r + t0] = key + neg_off
    for key, g in zip(reversed(pos_keys), reversed(pos_groups)):
        for r in g:
            roots.append(r + t0)
            index[r + t0] = key + pos_off
    return PlantedForest(
        tuple(range(t0, t0 + n)),
        {e + t0: parent[e] + t0 for e in range(n) if parent[e] >= 0},
        {e + t0: tuple(c + t0 for c in children[e]) for e in range(n)},
        tuple(roots), index)


def permutation_linear(w) -> Permutation:
    """``cp(wc(w))`` via the linear-time forest and its exploration."""
    lw = _as_lattice(w)
    forest = fortree_linear(lw)
    return forest.permutation()


def labtree(f: PlantedForest) -> tuple:
    """The forest's trees attached to a common root, as a nested label tuple."""

    def build(e):
        return (e, tuple(build(c) for c in f.children.get(e, ())))

    return tuple(build(r) for r in f.roots)


# -- anti-involutions ----------------------------------------------------------

def wpc(w: TandemWalk) -> tuple[CoalescentProcess, CoalescentProcess]:
    return wc(w), wc(reverse_swap(w))


def pcw(z: CoalescentProcess, z_rev: CoalescentProcess) -> TandemWalk:
    """Walk of the dual map read from the local times of ``(Z, Z_rev)``."""
    n = z.n
    if z_rev.n != n:
        raise NotInImage("the two processes have different sizes")
    sigma = cp(z)
    inv = inverse(sigma).values
    star = rotate_star(sigma).values
    lz = final_local_times(z)
    lr = final_local_times(z_rev)
    xs = [int(lz[inv[i] - 1]) - 1 for i in range(n)]
    ys = [int(lr[star[i] - 1]) - 1 for i in range(n)]
    try:
        return TandemWalk(np.column_stack([xs, ys]))
    except ValueError as exc:
        raise NotInImage(f"pcw output is not a tandem walk: {exc}") from exc


def pcw_wpc(w: TandemWalk) -> TandemWalk:
    return pcw(*wpc(w))


def degree_bound_indices(z: CoalescentProcess, i: int, strict: bool = False) -> tuple[int, int] | None:
    """The stopping times ``(j, s)`` bounding the outdegree of the top vertex of edge ``i``.

    ``j >= i`` is the first time with ``Z^(i)_j = 0`` and ``Z^(i)_(j+1) < 0``;
    ``s >= j + 2`` is the first time after that with ``Z^(i)_s >= 0``.
    With the strict ``j > i`` the bound is false (see the tests).
    """
    tr = z.trajectory(i)
    n = len(tr)
    for a in range(1 if strict else 0, n - 1):
        if tr[a] == 0 and tr[a + 1] < 0:
            for b in range(a + 2, n):
                if tr[b] >= 0:
                    return i + a, i + b
            return None
    return None


# -- trajectory law ------------------------------------------------------------

def increment_law(v: int) -> float:
    """Marginal law of a trajectory increment: -1 w.p. 1/2, v >= 0 w.p. 2^(-v-2)."""
    if v == -1:
        return 0.5
    return 2.0 ** (-v - 2) if v >= 0 else 0.0


@dataclass(frozen=True)
class LawReport:
    samples: int
    k: int
    mass_minus_one: float
    mass_zero: float
    se_minus_one: float
    se_zero: float
    chi2_marginal: float
    p_marginal: float
    chi2_pairs: float
    p_pairs: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.p_marginal > self.alpha and self.p_pairs > self.alpha


def _increment_bins() -> list[int]:
    """The 30 most probable increment values."""
    return [-1] + list(range(29))


def trajectory_increments(k: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Increments of ``Z^(0)`` over ``k`` i.i.d. nu-steps, one row per sample."""
    steps = sample_steps(k * samples, rng).reshape(k, samples, 2)
    z = np.zeros(samples, dtype=np.int64)
    inc = np.empty((samples, k), dtype=np.int64)
    for t in range(k):
        dx, dy = steps[t, :, 0], steps[t, :, 1]
        ud = dx == 1
        i, j = -dx, dy
        new = np.where(ud, z - 1,
                       np.where(z >= 0, z + j, np.where(z < -i, z + i, j)))
        inc[:, t] = new - z
        z = new
    return inc


def trajectory_law_check(k: int, samples: int, rng: np.random.Generator, alpha: float = 0.001) -> LawReport:
    """Compare the increments of ``Z^(0)`` with the law of the Y-increments of nu.

    The marginal test pools all increments (i.i.d. under the claim) into the
    30 most probable values plus a tail bucket.  The independence test uses
    the disjoint pairs of increments ``(1,2), (3,4), ...`` binned over
    ``{-1, 0, 1, 2, >=3}`` against the product of the exact marginals.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    inc = trajectory_increments(k, samples, rng)
    flat = inc.ravel()
    bins = _increment_bins()
    probs = np.array([increment_law(v) for v in bins])
    counts = np.array([np.count_nonzero(flat == v) for v in bins])
    tail_p = 1.0 - probs.sum()
    tail_c = flat.size - counts.sum()
    obs = np.append(counts, tail_c)
    exp = np.append(probs, tail_p) * flat.size
    chi_m, p_m = stats.chisquare(obs, exp)

    coarse = [-1, 0, 1, 2]
    cp_probs = np.array([increment_law(v) for v in coarse] + [1 - sum(increment_law(v) for v in coarse)])

    def code(v):
        c = np.full(v.shape, 4)
        for idx, val in enumerate(coarse):
            c[v == val] = idx
        return c

    if k >= 2:
        a = code(inc[:, 0:k - 1:2].ravel())
        b = code(inc[:, 1:k:2].ravel())
        joint = np.bincount(a * 5 + b, minlength=25)
        exp_joint = np.outer(cp_probs, cp_probs).ravel() * a.size
        chi_p, p_p = stats.chisquare(joint, exp_joint)
    else:
        chi_p, p_p = 0.0, 1.0
    m1 = counts[0] / flat.size
    m0 = counts[1] / flat.size
    return LawReport(samples, k, float(m1), float(m0),
                     float(np.sqrt(0.25 / flat.size)), float(np.sqrt(0.25 * 0.75 / flat.size)),
                     float(chi_m), float(p_m), float(chi_p), float(p_p), alpha)


# -- separable permutations ----------------------------------------------------

@dataclass(frozen=True)
class SignedTree:
    """A rooted plane tree; internal vertices carry a sign ``'+'`` or ``'-'``."""

    sign: str | None = None
    children: tuple["SignedTree", ...] = ()

    def __post_init__(self):
        if self.children and self.sign not in ("+", "-"):
            raise MalformedTree(f"internal vertex with sign {self.sign!r}")
        if not self.children and self.sign is not None:
            raise MalformedTree("a leaf cannot carry a sign")
        for c in self.children:
            if not isinstance(c, SignedTree):
                raise MalformedTree("children must be SignedTree instances")

    @classmethod
    def leaf(cls) -> "SignedTree":
        return cls()

    @classmethod
    def node(cls, sign: str, *children: "SignedTree") -> "SignedTree":
        return cls(sign, tuple(children))

    def leaves(self) -> int:
        return 1 if not self.children else sum(c.leaves() for c in self.children)


def perm_of_signed_tree(t: SignedTree) -> Permutation:
    """Leaves numbered in exploration order; sigma(i) is leaf i's position once minus-children are reversed."""
    labels: dict[int, int] = {}
    counter = [0]

    def number(node, path):
        if not node.children:
            counter[0] += 1
            labels[path] = counter[0]
            return
        for k, c in enumerate(node.children):
            number(c, path + (k,))

    number(t, ())
    order: list[int] = []

    def walk(node, path):
        if not node.children:
            order.append(labels[path])
            return
        ks = range(len(node.children))
        if node.sign == "-":
            ks = reversed(ks)
        for k in ks:
            walk(node.children[k], path + (k,))

    walk(t, ())
    pos = {leaf: p for p, leaf in enumerate(order, start=1)}
    return Permutation._trusted(pos[i] for i in range(1, len(order) + 1))


def _contour(t: SignedTree) -> tuple[list[int], list[SignedTree]]:
    heights = [0]
    nodes = [t]

    def visit(node, h):
        for c in node.children:
            heights.append(h + 1)
            nodes.append(c)
            visit(c, h + 1)
            heights.append(h)
            nodes.append(node)

    visit(t, 0)
    return heights, nodes


@dataclass(frozen=True)
class SeparableProcess:
    contour: tuple[int, ...]
    leaf_times: tuple[int, ...]
    trajectories: tuple[tuple[int, ...], ...]  # trajectory of leaf k on [leaf_times[k], 2e]


def separable_coalescent(t: SignedTree) -> tuple[SeparableProcess, Permutation]:
    """Trajectories driven by the contour of ``t`` and the ordering they induce.

    The ordering is checked against the independent sign-reversal computation.
    """
    if not isinstance(t, SignedTree):
        raise MalformedTree("expected a SignedTree")
    c, nodes = _contour(t)
    end = len(c) - 1
    if end == 0:
        proc = SeparableProcess((0,), (0,), ((0,),))
        return proc, Permutation._trusted((1,))
    leaf_times = [s for s in range(1, end) if c[s - 1] < c[s] > c[s + 1]]
    minima = {s: nodes[s].sign for s in range(1, end) if c[s - 1] > c[s] < c[s + 1]}
    trajs = []
    for start in leaf_times:
        z = 0
        path = [0]
        for s in range(start, end):
            dc = c[s + 1] - c[s]
            if z > 0:
                z += dc
            elif z < 0:
                z -= dc
            elif s in minima:
                z = -1 if minima[s] == "+" else 1
            path.append(z)
        trajs.append(tuple(path))
    k = len(leaf_times)
    below = np.zeros(k, dtype=np.int64)
    for a in range(k):
        for b in range(a + 1, k):
            zab = trajs[a][leaf_times[b] - leaf_times[a]]
            if zab < 0:
                below[b] += 1
            else:
                below[a] += 1
    sigma = _ranks_from_counts(below)
    expected = perm_of_signed_tree(t)
    if sigma != expected:
        raise AssertionError(f"trajectory ordering {sigma} differs from perm(t) = {expected}")
    return SeparableProcess(tuple(c), tuple(leaf_times), tuple(trajs)), sigma


def random_signed_tree(max_leaves: int, rng: np.random.Generator) -> SignedTree:
    """Random signed plane tree with between 1 and ``max_leaves`` leaves.

    Outdegree-one vertices are allowed.
    """
    target = int(rng.integers(1, max_leaves + 1))

    def grow(leaves: int, depth: int) -> SignedTree:
        if leaves == 1 and (depth > 3 or rng.random() < 0.7):
            return SignedTree()
        arity = int(rng.integers(1, min(leaves, 4) + 1))
        if leaves > 1 and arity == 1 and rng.random() < 0.7:
            arity = 2
        arity = min(arity, leaves)
        cuts = np.sort(rng.choice(np.arange(1, leaves), size=arity - 1, replace=False)) if arity > 1 else []
        sizes = np.diff(np.concatenate([[0], cuts, [leaves]])).astype(int)
        sign = "+" if rng.random() < 0.5 else "-"
        return SignedTree(sign, tuple(grow(int(s), depth + 1) for s in sizes))

    return grow(target, 0)
