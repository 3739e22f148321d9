"""Small exact-combinatorics helpers shared by the whole package.

Everything here is deliberately boring: binomials, integer partitions in
reverse-lexicographic order, and fixed-size subset enumeration.  All values
are exact Python ints (arbitrary precision).
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Iterator, Sequence


def binomial(n: int, k: int) -> int:
    """C(n, k) as an exact int.

    Out-of-range k (k > n) returns 0, mirroring the usual convention for
    counting arguments.  Negative n or k is a caller bug and raises.
    """
    if n < 0 or k < 0:
        raise ValueError(f"binomial requires n, k >= 0 (got n={n}, k={k})")
    if k > n:
        return 0
    return math.comb(n, k)


def multinomial(counts: Sequence[int]) -> int:
    """Number of distinct orderings of a multiset with the given multiplicities."""
    total = 0
    out = 1
    for c in counts:
        if c < 0:
            raise ValueError("multiplicities must be >= 0")
        total += c
        out *= math.comb(total, c)
    return out


def integer_partitions(
    n: int,
    max_parts: int | None = None,
    max_part: int | None = None,
) -> list[tuple[int, ...]]:
    """All partitions of n into at most ``max_parts`` parts, each <= ``max_part``.

    Parts are non-increasing within a partition; partitions are returned in
    reverse-lexicographic order, i.e. (n,) first and (1,)*n last.  n = 0
    yields the single empty partition ().
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if max_parts is None:
        max_parts = n
    if max_part is None:
        max_part = n
    out: list[tuple[int, ...]] = []

    def rec(remaining: int, cap: int, prefix: list[int]) -> None:
        if remaining == 0:
            out.append(tuple(prefix))
            return
        if len(prefix) >= max_parts:
            return
        for part in range(min(cap, remaining), 0, -1):
            prefix.append(part)
            rec(remaining - part, part, prefix)
            prefix.pop()

    rec(n, max_part, [])
    return out


def subsets(ground: int, size: int) -> Iterator[tuple[int, ...]]:
    """Size-``size`` subsets of {1, ..., ground} in lexicographic order.

    Yields sorted tuples.  size > ground is an error rather than an empty
    iterator, because in this codebase it always indicates a bad parameter
    upstream (t chosen larger than the user count).
    """
    if size < 0 or ground < 0:
        raise ValueError("ground and size must be >= 0")
    if size > ground:
        raise ValueError(f"cannot choose {size} elements from {ground}")
    return combinations(range(1, ground + 1), size)


def num_subsets(ground: int, size: int) -> int:
    """len() companion for :func:`subsets`."""
    if size > ground:
        raise ValueError(f"cannot choose {size} elements from {ground}")
    return math.comb(ground, size)
