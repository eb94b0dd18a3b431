"""Permutations in one-line notation, pattern extraction and the Baxter test."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateValues,
    IndexOutOfRange,
    InvalidPermutation,
    PatternLargerThanHost,
    SizeTooLarge,
)

MAX_ENUMERATION_SIZE = 9


@dataclass(frozen=True)
class Permutation:
    """A permutation of ``{1..n}`` stored as its one-line notation.

    ``values[i - 1]`` is the image of ``i``.  The empty permutation is allowed.
    """

    values: tuple[int, ...]

    def __init__(self, values: Sequence[int] = ()):
        vals = tuple(int(v) for v in values)
        if sorted(vals) != list(range(1, len(vals) + 1)):
            raise InvalidPermutation(f"{vals!r} is not a permutation of 1..{len(vals)}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def _trusted(cls, values) -> "Permutation":
        obj = object.__new__(cls)
        object.__setattr__(obj, "values", tuple(int(v) for v in values))
        return obj

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls._trusted(range(1, n + 1))

    @classmethod
    def from_string(cls, text: str) -> "Permutation":
        """Parse ``"3 1 2"`` or, for sizes below 10, ``"312"``."""
        text = text.strip()
        if not text:
            return cls(())
        if any(c in text for c in " ,"):
            return cls(int(t) for t in text.replace(",", " ").split())
        return cls(int(c) for c in text)

    def __len__(self) -> int:
        return len(self.values)

    def __call__(self, i: int) -> int:
        if not 1 <= i <= len(self.values):
            raise IndexOutOfRange(f"index {i} outside 1..{len(self.values)}")
        return self.values[i - 1]

    def __iter__(self):
        return iter(self.values)

    def __str__(self) -> str:
        return " ".join(map(str, self.values))

    def inverse(self) -> "Permutation":
        return inverse(self)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"type": "permutation", "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: dict) -> "Permutation":
        if data.get("type") != "permutation":
            raise InvalidPermutation(f"not a permutation record: type={data.get('type')!r}")
        return cls(data["values"])


def std(seq: Sequence[float]) -> Permutation:
    """Standardize a sequence of distinct numbers to the permutation with the same relative order."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        raise DuplicateValues("std() needs pairwise distinct entries")
    order = sorted(range(len(seq)), key=seq.__getitem__)
    ranks = [0] * len(seq)
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return Permutation._trusted(ranks)


def pattern(sigma: Permutation, indices: Sequence[int]) -> Permutation:
    """Pattern induced by ``sigma`` on a strictly increasing set of 1-based indices."""
    idx = list(indices)
    n = len(sigma)
    for a, b in zip(idx, idx[1:]):
        if b <= a:
            raise IndexOutOfRange("index set must be strictly increasing")
    if idx and (idx[0] < 1 or idx[-1] > n):
        raise IndexOutOfRange(f"indices must lie in 1..{n}")
    return std([sigma.values[i - 1] for i in idx])


def is_baxter(sigma: Permutation) -> bool:
    """Definitional O(n^3) scan for the two forbidden vincular patterns.

    ``sigma`` is not Baxter iff there are ``i < j < j+1 <= k`` with
    ``s(j+1) < s(i) < s(k) < s(j)`` or ``s(j) < s(k) < s(i) < s(j+1)``.
    """
    s = sigma.values
    n = len(s)
    for j in range(1, n - 2):  # 0-based j, needs i < j and k > j + 1
        a, b = s[j], s[j + 1]
        lo, hi = (b, a) if a > b else (a, b)
        # 2-41-3 when a > b: b < s(i) < s(k) < a
        # 3-14-2 when a < b: a < s(k) < s(i) < b
        left = [s[i] for i in range(j) if lo < s[i] < hi]
        if not left:
            continue
        right = [s[k] for k in range(j + 2, n) if lo < s[k] < hi]
        if not right:
            continue
        if a > b:
            if min(left) < max(right):
                return False
        elif max(left) > min(right):
            return False
    return True


def inverse(sigma: Permutation) -> Permutation:
    out = [0] * len(sigma)
    for i, v in enumerate(sigma.values, start=1):
        out[v - 1] = i
    return Permutation._trusted(out)


def rotate_star(sigma: Permutation) -> Permutation:
    """Rotate the diagram a quarter turn clockwise: ``result(j) = n + 1 - sigma^{-1}(j)``."""
    n = len(sigma)
    inv = inverse(sigma).values
    return Permutation._trusted(n + 1 - v for v in inv)


def compose(sigma: Permutation, tau: Permutation) -> Permutation:
    """``(sigma o tau)(i) = sigma(tau(i))``; the empty permutation acts as identity."""
    if len(sigma) == 0:
        return tau
    if len(tau) == 0:
        return sigma
    if len(sigma) != len(tau):
        raise InvalidPermutation("composition needs equal sizes")
    return Permutation._trusted(sigma.values[t - 1] for t in tau.values)


def consecutive_occurrence_density(pi: Permutation, sigma: Permutation) -> Fraction:
    """Fraction of the ``n - k + 1`` windows of ``sigma`` whose pattern is ``pi``."""
    k, n = len(pi), len(sigma)
    if k < 1:
        raise PatternLargerThanHost("pattern must be nonempty")
    if k > n:
        raise PatternLargerThanHost(f"pattern of size {k} does not fit in size {n}")
    target = pi.values
    s = sigma.values
    hits = sum(1 for i in range(n - k + 1) if std(s[i:i + k]).values == target)
    return Fraction(hits, n - k + 1)


def consecutive_pattern_counts(sigma: Permutation, k: int) -> dict[tuple[int, ...], int]:
    """Counts of every consecutive pattern of size ``k`` in ``sigma``."""
    n = len(sigma)
    if not 1 <= k <= n:
        raise PatternLargerThanHost(f"window size {k} invalid for size {n}")
    counts: dict[tuple[int, ...], int] = {}
    s = sigma.values
    for i in range(n - k + 1):
        key = std(s[i:i + k]).values
        counts[key] = counts.get(key, 0) + 1
    return counts


def all_permutations(n: int) -> Iterator[Permutation]:
    for p in itertools.permutations(range(1, n + 1)):
        yield Permutation._trusted(p)


def baxter_numbers(n_max: int) -> list[int]:
    """Exact counts ``[B_0, ..., B_{n_max}]`` from the three-term recurrence
    ``(n+2)(n+3) B_n = (7n^2 + 7n - 2) B_{n-1} + 8 (n-1)(n-2) B_{n-2}``."""
    b = [1, 1]
    for n in range(2, n_max + 1):
        num = (7 * n * n + 7 * n - 2) * b[-1] + 8 * (n - 1) * (n - 2) * b[-2]
        q, r = divmod(num, (n + 2) * (n + 3))
        assert r == 0
        b.append(q)
    return b[: n_max + 1]


def scaled_baxter_numbers(n_max: int) -> np.ndarray:
    """``B_n / 8**n`` for ``n <= n_max`` in floating point, by the same recurrence.

    The scaled values decay polynomially, so nothing overflows at large ``n``.
    """
    r = np.empty(n_max + 1)
    r[: 2] = [1.0, 0.125][: n_max + 1]
    for n in range(2, n_max + 1):
        r[n] = ((7 * n * n + 7 * n - 2) * r[n - 1] / 8 + (n - 1) * (n - 2) * r[n - 2] / 8) / ((n + 2) * (n + 3))
    return r


def enumerate_baxter(n: int) -> Iterator[Permutation]:
    """All Baxter permutations of size ``n`` in lexicographic order (brute force)."""
    if n > MAX_ENUMERATION_SIZE:
        raise SizeTooLarge(f"enumerate_baxter is limited to n <= {MAX_ENUMERATION_SIZE}")
    if n < 0:
        raise SizeTooLarge("size must be non-negative")
    for sigma in all_permutations(n):
        if is_baxter(sigma):
            yield sigma
