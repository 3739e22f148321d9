"""Exhaustive rule search over all groupings, plus ratio sweeps per family.

The search enumerates every grouping of K and every nonempty transmitter
selection per realizable group type.  Skipping a group type is never
enumerated: a skip is only valid when everything the type involves is
excluded, and in that case the row is inert, so some enumerated candidate
already realizes the same scheme.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from .combinat import binomial, integer_partitions
from .designs import DesignSpec, theorem1_bound, theorem1_design, theorem2_design
from .designs import special_designs, theorem3_design
from .engine import analyze_rules, PlanError
from .fscalc import STAR, FSEntry, NoLcmError, local_fs, mc_check, subpacketization, vector_lcm
from .typevec import (
    TypeVector,
    enumerate_types,
    make_grouping,
    mgroup_structure,
    per_user_count,
)


@dataclass(frozen=True)
class CandidateRecord:
    grouping: tuple[int, ...]
    rules: tuple[tuple[str, tuple[int, ...]], ...]  # (group type text, selection)
    f_pt: int | None
    feasible: bool
    reason: str  # "" | "no_lcm" | "rate" | "mc"

    def rules_dict(self) -> dict[str, list[int]]:
        return {gt: sorted(sel) for gt, sel in self.rules}


@dataclass
class SearchResult:
    K: int
    t: int
    best: "tuple[DesignSpec, int] | None"
    pareto: list[CandidateRecord]  # feasible candidates, ascending subpacketization
    records: list[CandidateRecord]  # everything evaluated, in discovery order
    explored: int
    infeasible: dict[str, int]
    partial: bool


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PT_CACHE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class _GroupingOutcome:
    records: list[CandidateRecord] = field(default_factory=list)
    explored: int = 0
    no_lcm: int = 0
    rate_fail: int = 0
    mc_fail: int = 0
    hit_budget: bool = False


def _rate_exact(structures, chosen, factors, col) -> bool:
    """True when every emitted message would carry t payload terms.

    Mirrors the engine's "rate" stage: a member whose desired type is
    excluded receives nothing, so it may appear in a transmitting group
    type only as the lone transmitter.
    """
    excluded = {j for j, f in enumerate(factors) if f == 0}
    for st, (sel, _row) in zip(structures, chosen):
        if all(col[v] in excluded for v in st.involved):
            continue  # sends nothing at all (emergent skip)
        dead = [i for i, v in enumerate(st.involved, 1) if col[v] in excluded]
        n_dead = sum(st.unique_sets[i - 1].size for i in dead)
        if n_dead == 0:
            continue
        if n_dead == 1 and sel == frozenset(dead):
            continue
        return False
    return True


def _search_one_grouping(
    K: int, t: int, sizes: tuple[int, ...], budget: int | None, prune: bool
) -> _GroupingOutcome:
    g = make_grouping(K, sizes)
    typed = enumerate_types(g, t)
    vtypes = [v for v, _ in typed]
    counts = [c for _, c in typed]
    col = {v: j for j, v in enumerate(vtypes)}
    gtypes = [v for v, _ in enumerate_types(g, t + 1)]
    structures = [mgroup_structure(g, gt) for gt in gtypes]
    mc_rows = [
        [per_user_count(g, v, bi) for v in vtypes]
        for bi in range(1, len(g.blocks) + 1)
    ]

    # Options per group type: every nonempty selection, smallest first, each
    # paired with its precomputed local row.
    options: list[list[tuple[frozenset[int], tuple[FSEntry, ...]]]] = []
    for st in structures:
        n = st.num_unique_sets
        opts = []
        for size in range(1, n + 1):
            for sel in combinations(range(1, n + 1), size):
                local = local_fs(st, sel)
                row: list[FSEntry] = [STAR] * len(vtypes)
                for v, a in local.items():
                    row[col[v]] = a
                opts.append((frozenset(sel), tuple(row)))
        options.append(opts)

    # Columns that no selection of any group type can zero out: a zero needs
    # a single-user unique set transmitting alone for its own type.
    can_exclude = set()
    for st in structures:
        for us, v in zip(st.unique_sets, st.involved):
            if us.size == 1:
                can_exclude.add(col[v])

    out = _GroupingOutcome()
    incumbent: int | None = None
    chosen: list[tuple[frozenset[int], tuple[FSEntry, ...]]] = []

    def lower_bound() -> int:
        lb = 0
        for j in range(len(vtypes)):
            if j in can_exclude:
                continue
            best = 0
            zeroed = False
            for _, row in chosen:
                e = row[j]
                if e == 0:
                    zeroed = True
                    break
                if e is not STAR and e > best:
                    best = e
            if not zeroed and best:
                lb += best * counts[j]
        return lb

    def leaf() -> bool:
        """Evaluate the current full assignment; False aborts (budget)."""
        out.explored += 1
        rules = tuple(
            (gt.text(), tuple(sorted(sel)))
            for gt, (sel, _) in zip(gtypes, chosen)
        )
        reason = ""
        f_pt: int | None = None
        try:
            gfs = vector_lcm([row for _, row in chosen], zero_policy="exclude")
            if not _rate_exact(structures, chosen, gfs.factors, col):
                reason = "rate"
                out.rate_fail += 1
            else:
                mc = mc_check(gfs.factors, mc_rows)
                if not mc.ok:
                    reason = "mc"
                    out.mc_fail += 1
                else:
                    f_pt = subpacketization(gfs.factors, counts)
                    if f_pt <= 0:
                        reason = "mc"  # fully excluded degenerate
                        out.mc_fail += 1
                        f_pt = None
        except NoLcmError:
            reason = "no_lcm"
            out.no_lcm += 1
        out.records.append(
            CandidateRecord(
                grouping=sizes,
                rules=rules,
                f_pt=f_pt,
                feasible=f_pt is not None,
                reason=reason,
            )
        )
        nonlocal incumbent
        if f_pt is not None and (incumbent is None or f_pt < incumbent):
            incumbent = f_pt
        if budget is not None and out.explored >= budget:
            out.hit_budget = True
            return False
        return True

    def dfs(i: int) -> bool:
        if i == len(gtypes):
            return leaf()
        for opt in options[i]:
            chosen.append(opt)
            if prune and incumbent is not None and lower_bound() > incumbent:
                chosen.pop()
                continue
            alive = dfs(i + 1)
            chosen.pop()
            if not alive:
                return False
        return True

    dfs(0)
    return out


def exhaustive_search(
    K: int,
    t: int,
    max_candidates: int | None = None,
    prune: bool = False,
    threads: int | None = None,
) -> SearchResult:
    """Search every (grouping, transmitter rules) candidate at (K, t).

    Deterministic: groupings in reverse-lexicographic order, selections
    smallest-first; ``best`` is the first-discovered minimum.  A budget
    forces sequential execution so that "first max_candidates candidates"
    is well defined.
    """
    if not 1 <= t <= K - 1:
        raise ValueError(f"need 1 <= t <= K-1, got K={K}, t={t}")
    groupings = integer_partitions(K)
    threads = threads if threads is not None else _default_threads()
    if max_candidates is not None:
        threads = 1

    outcomes: list[_GroupingOutcome] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(_search_one_grouping, K, t, sizes, None, prune)
                for sizes in groupings
            ]
            outcomes = [f.result() for f in futs]
    else:
        remaining = max_candidates
        for sizes in groupings:
            o = _search_one_grouping(K, t, sizes, remaining, prune)
            outcomes.append(o)
            if remaining is not None:
                remaining -= o.explored
                if o.hit_budget or remaining <= 0:
                    break

    records: list[CandidateRecord] = []
    explored = 0
    no_lcm = rate_fail = mc_fail = 0
    partial = False
    for o in outcomes:
        records.extend(o.records)
        explored += o.explored
        no_lcm += o.no_lcm
        rate_fail += o.rate_fail
        mc_fail += o.mc_fail
        partial = partial or o.hit_budget

    best_rec: CandidateRecord | None = None
    for rec in records:
        if rec.feasible and (best_rec is None or rec.f_pt < best_rec.f_pt):  # type: ignore[operator]
            best_rec = rec
    best = None
    if best_rec is not None:
        best = (candidate_to_design(K, t, best_rec), best_rec.f_pt)  # type: ignore[arg-type]

    pareto = sorted(
        (r for r in records if r.feasible),
        key=lambda r: (r.f_pt, r.grouping, r.rules),
    )
    return SearchResult(
        K=K,
        t=t,
        best=best,
        pareto=pareto,
        records=records,
        explored=explored,
        infeasible={"no_lcm": no_lcm, "rate": rate_fail, "mc": mc_fail},
        partial=partial,
    )


def candidate_to_design(K: int, t: int, rec: CandidateRecord) -> DesignSpec:
    """Lift a search record back into a DesignSpec (re-deriving expectations)."""
    rules = {
        TypeVector.parse(text): frozenset(sel) for text, sel in rec.rules
    }
    analysis = analyze_rules(K, t, rec.grouping, rules)
    return DesignSpec(
        name=f"search-K{K}-t{t}-" + "_".join(map(str, rec.grouping)),
        K=K,
        t=t,
        grouping_sizes=rec.grouping,
        tx_rules=rules,
        type_order=analysis.subfile_types,
        expected_global_fs=analysis.global_fs.factors,
        expected_f_pt=analysis.f_pt,
        params={"family": "search"},
    )


# --------------------------------------------------------------------------
# Ratio sweeps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    family: str
    label: str
    K: int
    f_pt: int
    f_jcm: int
    ratio: Fraction
    bound: Fraction


@dataclass
class SweepResult:
    rows: list[SweepRow]
    skipped: list[tuple[int, str]]


def _eval_design(ds: DesignSpec) -> int:
    analysis = analyze_rules(ds.K, ds.t, ds.grouping_sizes, ds.tx_rules)
    return analysis.f_pt


def sweep_ratios(
    family: str,
    K_values: Iterable[int],
    *,
    t_bar: int | None = None,
    t: int | None = None,
    m: int | None = None,
) -> SweepResult:
    """Subpacketization ratio vs the baseline along one family's K axis.

    Bad arguments (unknown family, missing family parameter) raise; K values
    where the family simply does not apply are skipped with a note, so
    callers can hand in a plain range.
    """
    if family not in ("thm1", "thm2", "thm3"):
        raise ValueError(f"unknown family {family!r}")
    if family == "thm1" and t_bar is None:
        raise ValueError("thm1 sweep needs t_bar")
    if family == "thm2":
        if t is None:
            raise ValueError("thm2 sweep needs t")
        if t % 2 and t != 3:
            raise ValueError(f"no half-split construction for odd t={t}")
    if family == "thm3" and (m is None or t is None):
        raise ValueError("thm3 sweep needs m and t")

    rows: list[SweepRow] = []
    skipped: list[tuple[int, str]] = []
    for K in K_values:
        try:
            if family == "thm1":
                f_pt = min(
                    _eval_design(theorem1_design(K, t_bar, "orderwise")),
                    _eval_design(theorem1_design(K, t_bar, "fallback")),
                )
                tt = K - t_bar
                bound = theorem1_bound(K, t_bar)
                label = f"t_bar={t_bar}"
            elif family == "thm2":
                if t % 2 == 0:
                    ds = theorem2_design(K, t)
                    bound = Fraction(1, 2)
                else:
                    ds = special_designs("t3_halfsplit", K)
                    bound = Fraction(6, 7)
                f_pt = _eval_design(ds)
                tt = t
                label = f"t={t}"
            else:  # thm3
                if K % m:
                    raise ValueError(f"K={K} is not a multiple of m={m}")
                ds = theorem3_design(m, K // m, t)
                f_pt = _eval_design(ds)
                tt = t
                bound = Fraction(1)
                label = f"m={m},t={t}"
        except ValueError as e:
            skipped.append((K, str(e)))
            continue
        f_jcm = tt * binomial(K, tt)
        rows.append(
            SweepRow(
                family=family,
                label=label,
                K=K,
                f_pt=f_pt,
                f_jcm=f_jcm,
                ratio=Fraction(f_pt, f_jcm),
                bound=bound,
            )
        )
    return SweepResult(rows=rows, skipped=skipped)
