"""Groupings of users into equal-size classes, and the type calculus on them.

A grouping splits the users {1, ..., K} into groups with non-increasing
sizes; maximal runs of equal-size groups form *blocks*.  The type of a user
subset records, block by block, the non-increasing profile of its
intersection sizes with the block's groups.  Types are the unit of
aggregation for everything downstream: all subsets of one type are treated
identically by placement and delivery, which is what makes the schemes'
bookkeeping polynomial instead of exponential.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import prod
from typing import Iterable, Sequence

from .combinat import binomial, integer_partitions, multinomial


@dataclass(frozen=True)
class Grouping:
    """A partition of users {1..K} into consecutively numbered groups.

    ``sizes`` is non-increasing; use :func:`make_grouping` instead of the
    raw constructor so that validation and canonicalization happen.
    """

    K: int
    sizes: tuple[int, ...]

    @cached_property
    def num_groups(self) -> int:
        return len(self.sizes)

    @cached_property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        """(group size, group count) per block; sizes strictly decreasing."""
        out: list[tuple[int, int]] = []
        for size in self.sizes:
            if out and out[-1][0] == size:
                out[-1] = (size, out[-1][1] + 1)
            else:
                out.append((size, 1))
        return tuple(out)

    @cached_property
    def group_members(self) -> tuple[tuple[int, ...], ...]:
        out = []
        nxt = 1
        for size in self.sizes:
            out.append(tuple(range(nxt, nxt + size)))
            nxt += size
        return tuple(out)

    @cached_property
    def group_of(self) -> tuple[int, ...]:
        """Map user -> group index (0-based); entry 0 is padding."""
        lookup = [-1] * (self.K + 1)
        for gi, members in enumerate(self.group_members):
            for u in members:
                lookup[u] = gi
        return tuple(lookup)

    @cached_property
    def block_of_group(self) -> tuple[int, ...]:
        out = []
        for bi, (_, count) in enumerate(self.blocks):
            out.extend([bi] * count)
        return tuple(out)

    @cached_property
    def block_groups(self) -> tuple[tuple[int, ...], ...]:
        """Group indices belonging to each block."""
        out: list[list[int]] = [[] for _ in self.blocks]
        for gi, bi in enumerate(self.block_of_group):
            out[bi].append(gi)
        return tuple(tuple(x) for x in out)

    def block_of_user(self, user: int) -> int:
        return self.block_of_group[self.group_of[user]]

    def __str__(self) -> str:
        return "(" + ",".join(str(s) for s in self.sizes) + ")"


def make_grouping(K: int, sizes: Iterable[int]) -> Grouping:
    """Canonicalize ``sizes`` (sort non-increasing) and validate against K."""
    tup = tuple(sorted(sizes, reverse=True))
    if not tup:
        raise ValueError("grouping needs at least one group")
    if any(s <= 0 for s in tup):
        raise ValueError(f"group sizes must be positive, got {tup}")
    if sum(tup) != K:
        raise ValueError(f"group sizes {tup} sum to {sum(tup)}, expected K={K}")
    return Grouping(K=K, sizes=tup)


@dataclass(frozen=True)
class TypeVector:
    """Per-block, non-increasing intersection-size profile of a user subset.

    Entries are kept padded to the full block width (trailing zeros
    retained) so that equality and dict keys are unambiguous; ``display``
    trims trailing zeros for human-facing output.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        for blk in self.blocks:
            if any(e < 0 for e in blk):
                raise ValueError(f"negative entry in type vector {self.blocks}")
            if list(blk) != sorted(blk, reverse=True):
                raise ValueError(f"block {blk} is not non-increasing")

    @property
    def total(self) -> int:
        return sum(sum(blk) for blk in self.blocks)

    @property
    def flat(self) -> tuple[int, ...]:
        return tuple(e for blk in self.blocks for e in blk)

    def text(self) -> str:
        """Canonical text form, e.g. ``2|2,1|1,0,0`` (full padding kept)."""
        return "|".join(",".join(str(e) for e in blk) for blk in self.blocks)

    def display(self) -> str:
        """Like :meth:`text` but with trailing zero entries trimmed."""
        blks = [list(b) for b in self.blocks]
        while blks:
            while blks[-1] and blks[-1][-1] == 0:
                blks[-1].pop()
            if blks[-1]:
                break
            blks.pop()
        if not blks:
            return "0"
        return "|".join(",".join(str(e) for e in blk) for blk in blks)

    @classmethod
    def parse(cls, text: str) -> "TypeVector":
        blocks = tuple(
            tuple(int(e) for e in part.split(",")) for part in text.split("|")
        )
        return cls(blocks=blocks)

    def __str__(self) -> str:
        return self.text()


def canonical_type_order(types: Iterable[TypeVector]) -> list[TypeVector]:
    """Reverse-lexicographic (descending) order on the flattened vector."""
    return sorted(types, key=lambda v: v.flat, reverse=True)


def type_of(g: Grouping, subset: Iterable[int]) -> TypeVector:
    """Type of a user subset under grouping ``g``."""
    chosen = set(subset)
    if not chosen <= set(range(1, g.K + 1)):
        raise ValueError(f"subset {sorted(chosen)} not within users 1..{g.K}")
    blocks = []
    for gis in g.block_groups:
        profile = sorted(
            (sum(1 for u in g.group_members[gi] if u in chosen) for gi in gis),
            reverse=True,
        )
        blocks.append(tuple(profile))
    return TypeVector(blocks=tuple(blocks))


def is_realizable(g: Grouping, v: TypeVector) -> bool:
    if len(v.blocks) != len(g.blocks):
        return False
    for blk, (beta, psi) in zip(v.blocks, g.blocks):
        if len(blk) != psi or any(e > beta for e in blk):
            return False
    return True


def _block_arrangements(entries: Sequence[int], beta: int) -> int:
    # Distinct orderings of the profile across the block's groups, times the
    # number of ways to pick each intersection inside its group.
    mult = Counter(entries)
    return multinomial(list(mult.values())) * prod(binomial(beta, e) for e in entries)


def type_count(g: Grouping, v: TypeVector) -> int:
    """Number of user subsets with type ``v``."""
    if not is_realizable(g, v):
        raise ValueError(f"type {v} is not realizable under grouping {g}")
    return prod(
        _block_arrangements(blk, beta) for blk, (beta, _) in zip(v.blocks, g.blocks)
    )


def enumerate_types(g: Grouping, total: int) -> list[tuple[TypeVector, int]]:
    """All realizable types of ``total`` users, canonically ordered, with counts."""
    if total < 0 or total > g.K:
        raise ValueError(f"total {total} out of range for K={g.K}")
    per_block: list[list[tuple[int, ...]]] = []
    for beta, psi in g.blocks:
        options: list[list[tuple[int, ...]]] = []
        for s in range(0, min(total, beta * psi) + 1):
            padded = [
                p + (0,) * (psi - len(p))
                for p in integer_partitions(s, max_parts=psi, max_part=beta)
            ]
            options.append(padded)
        per_block.append(options)  # type: ignore[arg-type]

    found: list[TypeVector] = []

    def rec(bi: int, remaining: int, prefix: list[tuple[int, ...]]) -> None:
        if bi == len(g.blocks):
            if remaining == 0:
                found.append(TypeVector(blocks=tuple(prefix)))
            return
        opts = per_block[bi]
        for s in range(min(remaining, len(opts) - 1), -1, -1):
            for padded in opts[s]:
                prefix.append(padded)
                rec(bi + 1, remaining - s, prefix)
                prefix.pop()

    rec(0, total, [])
    ordered = canonical_type_order(found)
    return [(v, type_count(g, v)) for v in ordered]


@dataclass(frozen=True)
class UniqueSet:
    """Users of one group type that are interchangeable with each other.

    Two users of a concrete group merge exactly when their groups lie in the
    same block *and* the group intersections have the same cardinality.
    Merging on cardinality alone would be wrong: dropping a user must yield
    the same subfile type for every member, and that only holds per block.
    """

    block: int
    cardinality: int
    members: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def concrete_unique_sets(g: Grouping, S: Iterable[int]) -> tuple[UniqueSet, ...]:
    """Unique sets of a concrete group, ordered (block asc, cardinality desc)."""
    users = sorted(S)
    per_group: Counter[int] = Counter(g.group_of[u] for u in users)
    buckets: dict[tuple[int, int], list[int]] = {}
    for u in users:
        gi = g.group_of[u]
        key = (g.block_of_group[gi], per_group[gi])
        buckets.setdefault(key, []).append(u)
    out = []
    for (bi, card) in sorted(buckets, key=lambda k: (k[0], -k[1])):
        out.append(
            UniqueSet(block=bi, cardinality=card, members=tuple(buckets[(bi, card)]))
        )
    return tuple(out)


@dataclass(frozen=True)
class MGroupStructure:
    """Structure of all concrete groups sharing one group type.

    ``unique_sets`` uses a canonical representative group; ``involved`` is
    aligned with it: entry i is the subfile type obtained by dropping any
    single member of unique set i+1, which is the type that unique set
    "owns" for delivery purposes.
    """

    grouping: Grouping
    gtype: TypeVector
    representative: tuple[int, ...]
    unique_sets: tuple[UniqueSet, ...]
    involved: tuple[TypeVector, ...]

    @property
    def num_unique_sets(self) -> int:
        return len(self.unique_sets)

    def owner_of(self, v: TypeVector) -> int:
        """1-based unique-set index owning subfile type ``v``."""
        return self.involved.index(v) + 1


def mgroup_structure(g: Grouping, gtype: TypeVector) -> MGroupStructure:
    if not is_realizable(g, gtype):
        raise ValueError(f"group type {gtype} is not realizable under {g}")
    rep: list[int] = []
    for blk, gis in zip(gtype.blocks, g.block_groups):
        for entry, gi in zip(blk, gis):
            rep.extend(g.group_members[gi][:entry])
    rep_t = tuple(sorted(rep))
    unique_sets = concrete_unique_sets(g, rep_t)
    involved = tuple(
        type_of(g, set(rep_t) - {us.members[0]}) for us in unique_sets
    )
    return MGroupStructure(
        grouping=g,
        gtype=gtype,
        representative=rep_t,
        unique_sets=unique_sets,
        involved=involved,
    )


def per_user_count(g: Grouping, v: TypeVector, block_index: int) -> int:
    """Number of subsets of type ``v`` containing a fixed user whose group
    lies in grouping block ``block_index`` (1-based).

    The memory-consistency check needs this per block: users are equivalent
    within a block, so one representative per block suffices.
    """
    if not 1 <= block_index <= len(g.blocks):
        raise ValueError(f"block index {block_index} out of range")
    if not is_realizable(g, v):
        raise ValueError(f"type {v} not realizable under {g}")
    b = block_index - 1
    beta, _ = g.blocks[b]
    entries = v.blocks[b]
    other = prod(
        _block_arrangements(blk, bb)
        for i, (blk, (bb, _)) in enumerate(zip(v.blocks, g.blocks))
        if i != b
    )
    total = 0
    for x in sorted(set(entries), reverse=True):
        if x == 0:
            continue
        rest = list(entries)
        rest.remove(x)
        # fix the user's own group at intersection size x, distribute the rest
        total += binomial(beta - 1, x - 1) * _block_arrangements(rest, beta)
    return total * other
