"""Verification suites: exhaustive over small sizes, then randomized at a larger size."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import bipolar as bp
from . import coal, walk
from .perm import Permutation, enumerate_baxter, rotate_star
from .rng import as_rng

SUITES = ("diagram", "involution", "local_time", "dual_rotation", "forest", "separable")
MAX_EXHAUSTIVE = 6


@dataclass
class SuiteReport:
    suite: str
    instances: int = 0
    exhaustive: int = 0
    randomized: int = 0
    elapsed: float = 0.0
    counterexample: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.counterexample is None

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "instances": self.instances,
                "exhaustive": self.exhaustive, "randomized": self.randomized,
                "elapsed": round(self.elapsed, 3), "counterexample": self.counterexample,
                "notes": self.notes}


def _swap_first_two(sigma: Permutation) -> Permutation:
    if len(sigma) < 2:
        return sigma
    v = list(sigma.values)
    v[0], v[1] = v[1], v[0]
    return Permutation._trusted(v)


def _cp(w, mutate: bool) -> Permutation:
    lw = w.as_lattice() if isinstance(w, walk.TandemWalk) else w
    sigma = coal.cp(coal.wc(lw)) if len(lw) <= 2000 else coal.cp_streaming(lw)
    return _swap_first_two(sigma) if mutate else sigma


# each check returns None on success or a dict describing the failure

def _diagram(w: walk.TandemWalk, mutate: bool):
    m = bp.theta_plain(w)
    a, b = _cp(w, mutate), bp.op(m)
    if a != b:
        return {"walk": w.values.tolist(), "cp_wc": list(a.values), "op_theta": list(b.values)}
    if len(w) <= 50 and bp.bow(m) != w:
        return {"walk": w.values.tolist(), "bow_theta": bp.bow(m).values.tolist()}
    return None


def _involution(w: walk.TandemWalk, mutate: bool):
    cur = w
    for k in range(4):
        cur = coal.pcw_wpc(cur)
    if cur != w:
        return {"walk": w.values.tolist(), "after_four": cur.values.tolist()}
    return None


def _local_time(w: walk.TandemWalk, mutate: bool):
    z = coal.wc(w)
    sigma = _cp(w, mutate)
    m = bp.theta_plain(w)
    xs = bp.bow(bp.dual(m)).values[:, 0]
    lt = coal.final_local_times(z)
    bad = [i for i in range(1, len(w) + 1) if xs[sigma(i) - 1] != lt[i - 1] - 1]
    if bad:
        i = bad[0]
        return {"walk": w.values.tolist(), "index": i, "local_time": int(lt[i - 1]),
                "dual_height": int(xs[sigma(i) - 1])}
    return None


def _dual_rotation(w: walk.TandemWalk, mutate: bool):
    m = bp.theta_plain(w)
    sigma = _cp(w, mutate)
    rotated = bp.op(bp.dual(m))
    if rotated != rotate_star(sigma):
        return {"walk": w.values.tolist(), "op_dual": list(rotated.values),
                "rotate_star_op": list(rotate_star(sigma).values)}
    return None


def _forest(w, mutate: bool):
    mk = bp.theta(w)
    a = bp.dual_forest(mk)
    b = coal.fortree_linear(w)
    if a != b:
        return {"walk": np.asarray(w.values).tolist(), "dual_forest": str(coal.labtree(a)),
                "fortree": str(coal.labtree(b))}
    if len(w) <= 2000 and coal.fortree_naive(coal.wc(w)) != b:
        return {"walk": np.asarray(w.values).tolist(), "reason": "naive and linear forests differ"}
    return None


CHECKS: dict[str, Callable] = {
    "diagram": _diagram,
    "involution": _involution,
    "local_time": _local_time,
    "dual_rotation": _dual_rotation,
    "forest": _forest,
}


def _run(report: SuiteReport, items: Iterable, check, mutate: bool, exhaustive: bool) -> bool:
    for w in items:
        bad = check(w, mutate)
        report.instances += 1
        if exhaustive:
            report.exhaustive += 1
        else:
            report.randomized += 1
        if bad is not None:
            bad["size"] = len(w)
            report.counterexample = bad
            return False
    return True


def run_suite(suite: str, max_size: int = 5, *, random_size: int = 0, random_count: int = 0,
              rng=None, mutate: bool = False) -> SuiteReport:
    """Exhaustive pass over ``n <= max_size``, then ``random_count`` random instances of ``random_size``.

    Sizes are visited in increasing order, so the first counterexample is a
    smallest one among the exhaustive instances.  ``mutate`` swaps two values
    of the composite ``cp o wc`` to exercise the failure path.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    if not 1 <= max_size <= MAX_EXHAUSTIVE:
        raise ValueError(f"max_size must lie in 1..{MAX_EXHAUSTIVE}")
    rng = as_rng(rng)
    report = SuiteReport(suite)
    start = time.perf_counter()
    if suite == "separable":
        _separable(report, max_size, random_count, random_size, rng, mutate)
        report.elapsed = time.perf_counter() - start
        return report
    check = CHECKS[suite]
    ok = _run(report, (w for n in range(1, max_size + 1) for w in walk.enumerate_tandem(n)),
              check, mutate, True)
    if ok and random_count:
        ok = _run(report, (walk.random_tandem_walk(random_size, r) for r in rng.spawn(random_count)),
                  check, mutate, False)
    if ok and suite == "forest":
        # general A-walks, not only tandem ones
        steps = [(1, -1)] + [(-i, j) for i in range(3) for j in range(3)]
        items = (walk.LatticeWalk.from_steps(word) for k in range(2, max_size + 1)
                 for word in _step_words(steps, k - 1))
        _run(report, items, check, mutate, True)
    report.elapsed = time.perf_counter() - start
    return report


def _step_words(steps, length):
    import itertools

    for word in itertools.product(steps, repeat=length):
        yield list(word)


def _separable(report: SuiteReport, max_leaves: int, count: int, size: int, rng, mutate: bool) -> None:
    from .perm import is_baxter

    count = count or 200
    size = max(size, max_leaves, 2)
    for child in rng.spawn(count):
        t = coal.random_signed_tree(size, child)
        report.instances += 1
        report.randomized += 1
        try:
            _, sigma = coal.separable_coalescent(t)
        except AssertionError as exc:
            report.counterexample = {"tree": repr(t), "reason": str(exc)}
            return
        if mutate:
            sigma = _swap_first_two(sigma)
        if sigma != coal.perm_of_signed_tree(t) or not is_baxter(sigma):
            report.counterexample = {"tree": repr(t), "sigma": list(sigma.values)}
            return


def cardinalities(max_n: int = 7) -> list[tuple[int, int, int]]:
    """``(n, |W_n|, number of Baxter permutations of size n)``."""
    return [(n, sum(1 for _ in walk.enumerate_tandem(n)), sum(1 for _ in enumerate_baxter(n)))
            for n in range(1, max_n + 1)]
