"""Scheme assembly, placement, XOR delivery, decoding, and measurement.

The pipeline is: transmitter rules -> local split-factor rows -> global
reconciliation -> memory-consistency check -> packet map.  A plan that
survives all four stages simulates losslessly: every user reassembles its
demanded file bit-exactly from its cache plus the broadcast, which the
tests check on real byte strings rather than symbolically.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .combinat import binomial, subsets
from .fscalc import (
    STAR,
    FSEntry,
    GlobalFS,
    MCResult,
    NoLcmError,
    local_fs,
    mc_check,
    subpacketization,
    vector_lcm,
)
from .typevec import (
    Grouping,
    TypeVector,
    concrete_unique_sets,
    enumerate_types,
    make_grouping,
    mgroup_structure,
    per_user_count,
    type_of,
)

SCHEMA_VERSION = "1"

# (file index 1-based, subset as sorted tuple, packet index 1-based)
PacketKey = tuple[int, tuple[int, ...], int]


class PlanError(ValueError):
    """Scheme rejected; ``stage`` names the failing pipeline step."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class RuleAnalysis:
    """Everything derivable from (K, t, grouping, rules) without touching
    actual file bytes.  Cheap even for large K."""

    K: int
    t: int
    grouping: Grouping
    subfile_types: tuple[TypeVector, ...]
    type_counts: tuple[int, ...]
    group_types: tuple[TypeVector, ...]
    fs_rows: tuple[tuple[FSEntry, ...], ...]  # aligned with rule_types
    rule_types: tuple[TypeVector, ...]  # group types that carry a row
    global_fs: GlobalFS
    z_of: Mapping[TypeVector, int]
    excluded: frozenset[TypeVector]
    skipped_group_types: frozenset[TypeVector]
    mc_rows: tuple[tuple[int, ...], ...]
    mc_result: MCResult
    f_pt: int

    def factor_of(self, v: TypeVector) -> int:
        return self.global_fs.factors[self.subfile_types.index(v)]


def _normalize_rules(
    analysis_types: Sequence[TypeVector],
    tx_rules: Mapping[TypeVector, "Iterable[int] | None"],
) -> dict[TypeVector, frozenset[int] | None]:
    given = set(tx_rules)
    expected = set(analysis_types)
    if given != expected:
        missing = sorted(v.text() for v in expected - given)
        extra = sorted(v.text() for v in given - expected)
        raise PlanError(
            "rules",
            f"transmitter rules must cover exactly the realizable group types; "
            f"missing={missing} unknown={extra}",
        )
    out: dict[TypeVector, frozenset[int] | None] = {}
    for gt, sel in tx_rules.items():
        out[gt] = None if sel is None else frozenset(int(i) for i in sel)
    return out


def analyze_rules(
    K: int,
    t: int,
    grouping_sizes: Iterable[int],
    tx_rules: Mapping[TypeVector, "Iterable[int] | None"],
) -> RuleAnalysis:
    """Run the symbolic half of the pipeline; raise PlanError when any stage
    rejects the rules."""
    if not (isinstance(t, int) and 1 <= t <= K - 1):
        raise PlanError("params", f"need integer 1 <= t <= K-1, got t={t}, K={K}")
    try:
        g = make_grouping(K, grouping_sizes)
    except ValueError as e:
        raise PlanError("grouping", str(e)) from e

    typed = enumerate_types(g, t)
    vtypes = tuple(v for v, _ in typed)
    counts = tuple(c for _, c in typed)
    col = {v: j for j, v in enumerate(vtypes)}
    gtypes = tuple(v for v, _ in enumerate_types(g, t + 1))
    rules = _normalize_rules(gtypes, tx_rules)

    structures = {gt: mgroup_structure(g, gt) for gt in gtypes}
    rows: list[tuple[FSEntry, ...]] = []
    rule_types: list[TypeVector] = []
    for gt in gtypes:
        sel = rules[gt]
        if sel is None:
            continue
        st = structures[gt]
        try:
            local = local_fs(st, sel)
        except ValueError as e:
            raise PlanError("rules", f"group type {gt}: {e}") from e
        row: list[FSEntry] = [STAR] * len(vtypes)
        for v, a in local.items():
            row[col[v]] = a
        rows.append(tuple(row))
        rule_types.append(gt)
    if not rows:
        raise PlanError("rules", "every group type is marked skip; nothing to send")

    try:
        gfs = vector_lcm(rows, zero_policy="exclude")
    except NoLcmError as e:
        raise PlanError("lcm", f"no consistent global split factors: {e}") from e

    excluded = frozenset(v for v, f in zip(vtypes, gfs.factors) if f == 0)
    z_of = {gt: scale for gt, scale in zip(rule_types, gfs.row_scales)}

    skipped = set()
    for gt in gtypes:
        st = structures[gt]
        if all(v in excluded for v in st.involved):
            skipped.add(gt)
        elif rules[gt] is None:
            raise PlanError(
                "skip",
                f"group type {gt} is marked skip but involves live subfile "
                f"type(s) {[v.text() for v in st.involved if v not in excluded]}",
            )

    # Every transmission must serve t receivers.  A group member whose
    # desired type is excluded receives nothing, so it may appear in a
    # transmitting group type only as the lone transmitter; otherwise some
    # message carries fewer than t payload terms and the delivery overshoots
    # the K(1-M/N)/t rate.
    for gt in rule_types:
        if gt in skipped:
            continue
        st = structures[gt]
        dead = [
            i for i, v in enumerate(st.involved, 1) if v in excluded
        ]
        n_dead = sum(st.unique_sets[i - 1].size for i in dead)
        if n_dead == 0:
            continue
        if n_dead == 1 and set(rules[gt]) == set(dead):
            continue
        raise PlanError(
            "rate",
            f"group type {gt}: transmissions would reach receivers with "
            f"nothing to decode (excluded desired type(s) "
            f"{[st.involved[i - 1].text() for i in dead]}); such members "
            f"must transmit alone",
        )

    mc_rows = tuple(
        tuple(per_user_count(g, v, bi) for v in vtypes)
        for bi in range(1, len(g.blocks) + 1)
    )
    mc = mc_check(gfs.factors, mc_rows)
    if not mc.ok:
        assert mc.dots is not None
        raise PlanError(
            "mc",
            f"user classes {mc.fail_index} and {mc.fail_index + 1} would cache "
            f"unequal amounts ({mc.dots[0]} vs {mc.dots[1]} weighted subsets)",
        )

    f_pt = subpacketization(gfs.factors, counts)
    if f_pt <= 0:
        raise PlanError("lcm", "all subfile types excluded; nothing would be stored")
    return RuleAnalysis(
        K=K,
        t=t,
        grouping=g,
        subfile_types=vtypes,
        type_counts=counts,
        group_types=gtypes,
        fs_rows=tuple(rows),
        rule_types=tuple(rule_types),
        global_fs=gfs,
        z_of=z_of,
        excluded=excluded,
        skipped_group_types=frozenset(skipped),
        mc_rows=mc_rows,
        mc_result=mc,
        f_pt=f_pt,
    )


@dataclass(frozen=True)
class SchemePlan:
    K: int
    N: int
    M: int
    t: int
    analysis: RuleAnalysis
    tx_rules: Mapping[TypeVector, "frozenset[int] | None"]
    rate: Fraction
    # subset -> (first packet offset within a file, packet count)
    subset_map: Mapping[tuple[int, ...], tuple[int, int]]

    @property
    def f_pt(self) -> int:
        return self.analysis.f_pt

    @property
    def grouping(self) -> Grouping:
        return self.analysis.grouping


def build_plan(
    K: int,
    N: int,
    M: int,
    grouping_sizes: Iterable[int],
    tx_rules: Mapping[TypeVector, "Iterable[int] | None"],
) -> SchemePlan:
    if N < 1 or M < 1 or M > N:
        raise PlanError("params", f"need 1 <= M <= N, got N={N}, M={M}")
    if (K * M) % N:
        raise PlanError(
            "params", f"K*M/N = {K}*{M}/{N} is not an integer cache level"
        )
    t = K * M // N
    analysis = analyze_rules(K, t, grouping_sizes, tx_rules)
    rules = _normalize_rules(analysis.group_types, tx_rules)

    g = analysis.grouping
    factor = {
        v: f for v, f in zip(analysis.subfile_types, analysis.global_fs.factors)
    }
    subset_map: dict[tuple[int, ...], tuple[int, int]] = {}
    offset = 0
    for T in subsets(K, t):
        a = factor[type_of(g, T)]
        if a == 0:
            continue
        subset_map[T] = (offset, a)
        offset += a
    assert offset == analysis.f_pt
    return SchemePlan(
        K=K,
        N=N,
        M=M,
        t=t,
        analysis=analysis,
        tx_rules=rules,
        rate=Fraction(K * (N - M), N * t),
        subset_map=subset_map,
    )


@dataclass(frozen=True)
class Message:
    tx: int
    group: tuple[int, ...]
    rx: tuple[int, ...]
    counters_used: tuple[tuple[int, int], ...]  # (receiver, counter consumed)
    terms: tuple[tuple[int, tuple[int, ...], int], ...]  # (receiver, subset, counter)
    payload: bytes


@dataclass
class Session:
    plan: SchemePlan
    files: tuple[bytes, ...]
    demand: tuple[int, ...]
    bytes_per_packet: int
    caches: dict[int, dict[PacketKey, bytes]] = field(default_factory=dict)
    transcript: list[Message] = field(default_factory=list)


@dataclass
class VerifyResult:
    ok: bool
    per_user: dict[int, bool]
    missing: dict[int, list[PacketKey]]


@dataclass(frozen=True)
class Measurement:
    total_bits: int
    rate: Fraction
    per_user_cache_bits: int
    message_count: int


def _xor(a: bytes, b: bytes) -> bytes:
    assert len(a) == len(b)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(
        len(a), "big"
    )


def _packet_bytes(
    session: Session, file_index: int, T: tuple[int, ...], first: int, count: int
) -> bytes:
    """Contiguous packets [first, first+count) (0-based within the subfile)."""
    base, alpha = session.plan.subset_map[T]
    assert first + count <= alpha, "delivery counter overran the subfile"
    B = session.bytes_per_packet
    start = (base + first) * B
    return session.files[file_index - 1][start : start + count * B]


def place(plan: SchemePlan, files: Sequence[bytes]) -> dict[int, dict[PacketKey, bytes]]:
    """Fill every user's cache; exact, deterministic, demand-independent."""
    if len(files) != plan.N:
        raise ValueError(f"expected {plan.N} files, got {len(files)}")
    sizes = {len(f) for f in files}
    if len(sizes) != 1:
        raise ValueError("files must share one length")
    (L,) = sizes
    if L == 0 or L % plan.f_pt:
        raise ValueError(
            f"file length {L} bytes is not a whole number of packets "
            f"(subpacketization {plan.f_pt}); pad files to a multiple"
        )
    B = L // plan.f_pt
    caches: dict[int, dict[PacketKey, bytes]] = {k: {} for k in range(1, plan.K + 1)}
    for T, (base, alpha) in plan.subset_map.items():
        for k in T:
            for n in range(1, plan.N + 1):
                blob = files[n - 1][base * B : (base + alpha) * B]
                for i in range(alpha):
                    caches[k][(n, T, i + 1)] = blob[i * B : (i + 1) * B]
    return caches


def _group_transmitters(plan: SchemePlan, S: tuple[int, ...]) -> tuple[int, ...]:
    gtype = type_of(plan.grouping, S)
    sel = plan.tx_rules[gtype]
    assert sel is not None
    chosen: list[int] = []
    for idx, us in enumerate(concrete_unique_sets(plan.grouping, S), start=1):
        if idx in sel:
            chosen.extend(us.members)
    return tuple(sorted(chosen))


def deliver(session: Session, order_seed: int | None = None) -> list[Message]:
    """Generate the broadcast.  ``order_seed`` shuffles group and transmitter
    order (decoding is order-independent); None keeps the canonical ascending
    order."""
    plan = session.plan
    g = plan.grouping
    demand = session.demand
    out: list[Message] = []
    groups = [
        S
        for S in subsets(plan.K, plan.t + 1)
        if type_of(g, S) not in plan.analysis.skipped_group_types
    ]
    rng = random.Random(order_seed) if order_seed is not None else None
    if rng:
        rng.shuffle(groups)
    for S in groups:
        gtype = type_of(g, S)
        z = plan.analysis.z_of[gtype]
        counters = {k: 0 for k in S}
        txs = list(_group_transmitters(plan, S))
        if rng:
            rng.shuffle(txs)
        for tx in txs:
            terms: list[tuple[int, tuple[int, ...], int]] = []
            chunks: list[bytes] = []
            for k2 in S:
                if k2 == tx:
                    continue
                T = tuple(u for u in S if u != k2)
                if T not in plan.subset_map:
                    continue  # excluded desired type: no slot, no counter bump
                c = counters[k2]
                counters[k2] += 1
                terms.append((k2, T, c))
                chunks.append(_packet_bytes(session, demand[k2 - 1], T, c * z, z))
            if not terms:
                continue  # vacuous message: every other user's type excluded
            payload = chunks[0]
            for ch in chunks[1:]:
                payload = _xor(payload, ch)
            out.append(
                Message(
                    tx=tx,
                    group=S,
                    rx=tuple(k for k in S if k != tx),
                    counters_used=tuple((k2, c) for k2, _, c in terms),
                    terms=tuple(terms),
                    payload=payload,
                )
            )
    session.transcript = out
    return out


def simulate(
    plan: SchemePlan,
    files: Sequence[bytes],
    demand: Sequence[int],
    order_seed: int | None = None,
) -> Session:
    demand_t = tuple(int(d) for d in demand)
    if len(demand_t) != plan.K or any(not 1 <= d <= plan.N for d in demand_t):
        raise ValueError(f"demand must list {plan.K} file indices in 1..{plan.N}")
    caches = place(plan, files)
    session = Session(
        plan=plan,
        files=tuple(bytes(f) for f in files),
        demand=demand_t,
        bytes_per_packet=len(files[0]) // plan.f_pt,
        caches=caches,
    )
    deliver(session, order_seed=order_seed)
    return session


def decode_and_verify(session: Session) -> VerifyResult:
    """Replay the transcript at every user and check bit-exact recovery.

    Counters are replayed from the transcript sequence itself, so any
    delivery order the sender used is reproduced faithfully.
    """
    plan = session.plan
    demand = session.demand
    z_of = plan.analysis.z_of
    g = plan.grouping
    B = session.bytes_per_packet
    decoded: dict[int, dict[PacketKey, bytes]] = {
        k: {} for k in range(1, plan.K + 1)
    }
    counter_state: dict[tuple[int, ...], dict[int, int]] = {}

    for msg in session.transcript:
        S = msg.group
        cnt = counter_state.setdefault(S, {k: 0 for k in S})
        z = z_of[type_of(g, S)]
        terms: list[tuple[int, tuple[int, ...], int]] = []
        for k2 in S:
            if k2 == msg.tx:
                continue
            T = tuple(u for u in S if u != k2)
            if T not in plan.subset_map:
                continue
            c = cnt[k2]
            cnt[k2] += 1
            terms.append((k2, T, c))
        for (k, T_own, c_own) in terms:
            acc = msg.payload
            usable = True
            for (k2, T2, c2) in terms:
                if k2 == k:
                    continue
                pieces = []
                for j in range(z):
                    key = (demand[k2 - 1], T2, c2 * z + j + 1)
                    if key not in session.caches[k]:
                        usable = False
                        break
                    pieces.append(session.caches[k][key])
                if not usable:
                    break
                acc = _xor(acc, b"".join(pieces))
            if not usable:
                continue
            for j in range(z):
                key = (demand[k - 1], T_own, c_own * z + j + 1)
                assert key not in session.caches[k], "decoded a packet already cached"
                decoded[k][key] = acc[j * B : (j + 1) * B]

    per_user: dict[int, bool] = {}
    missing: dict[int, list[PacketKey]] = {}
    for k in range(1, plan.K + 1):
        want = demand[k - 1]
        lost: list[PacketKey] = []
        parts: list[bytes] = []
        intact = True
        for T, (base, alpha) in sorted(
            plan.subset_map.items(), key=lambda kv: kv[1][0]
        ):
            for i in range(1, alpha + 1):
                key = (want, T, i)
                if k in T:
                    parts.append(session.caches[k][key])
                elif key in decoded[k]:
                    parts.append(decoded[k][key])
                else:
                    lost.append(key)
                    intact = False
        ok = intact and b"".join(parts) == session.files[want - 1]
        per_user[k] = ok
        if lost:
            missing[k] = lost
    return VerifyResult(ok=all(per_user.values()), per_user=per_user, missing=missing)


def measure(session: Session) -> Measurement:
    total_bits = sum(8 * len(m.payload) for m in session.transcript)
    L_bits = 8 * len(session.files[0])
    cache_bits = {
        8 * sum(len(p) for p in c.values()) for c in session.caches.values()
    }
    if len(cache_bits) != 1:
        raise AssertionError(f"caches are not uniform: {sorted(cache_bits)}")
    return Measurement(
        total_bits=total_bits,
        rate=Fraction(total_bits, L_bits),
        per_user_cache_bits=cache_bits.pop(),
        message_count=len(session.transcript),
    )


# --------------------------------------------------------------------------
# Independent reference implementation (no type machinery at all): every
# size-t subset is a subfile of t packets, everyone transmits in every
# group.  Kept deliberately separate so it can serve as an oracle.
# --------------------------------------------------------------------------


@dataclass
class JcmResult:
    K: int
    t: int
    transcript: list[Message]
    all_decoded: bool
    total_bits: int
    rate: Fraction
    per_user_cache_bits: int


def run_jcm(
    K: int, N: int, M: int, files: Sequence[bytes], demand: Sequence[int]
) -> JcmResult:
    if (K * M) % N:
        raise ValueError(f"K*M/N = {K}*{M}/{N} is not an integer")
    t = K * M // N
    if not 1 <= t <= K - 1:
        raise ValueError(f"need 1 <= t <= K-1, got t={t}")
    demand_t = tuple(int(d) for d in demand)
    if len(demand_t) != K or any(not 1 <= d <= N for d in demand_t):
        raise ValueError("bad demand vector")
    F = t * binomial(K, t)
    (L,) = {len(f) for f in files}
    if L % F:
        raise ValueError(f"file length {L} not a multiple of {F} packets")
    B = L // F

    base = {T: t * i for i, T in enumerate(subsets(K, t))}

    def packet(n: int, T: tuple[int, ...], idx: int) -> bytes:  # idx 0-based
        start = (base[T] + idx) * B
        return files[n - 1][start : start + B]

    caches: dict[int, dict[PacketKey, bytes]] = {k: {} for k in range(1, K + 1)}
    for T in base:
        for k in T:
            for n in range(1, N + 1):
                for i in range(t):
                    caches[k][(n, T, i + 1)] = packet(n, T, i)

    transcript: list[Message] = []
    for S in subsets(K, t + 1):
        counters = {k: 0 for k in S}
        for tx in S:
            terms = []
            payload = b"\0" * B
            for k2 in S:
                if k2 == tx:
                    continue
                T = tuple(u for u in S if u != k2)
                c = counters[k2]
                counters[k2] += 1
                terms.append((k2, T, c))
                payload = _xor(payload, packet(demand_t[k2 - 1], T, c))
            transcript.append(
                Message(
                    tx=tx,
                    group=S,
                    rx=tuple(k for k in S if k != tx),
                    counters_used=tuple((k2, c) for k2, _, c in terms),
                    terms=tuple(terms),
                    payload=payload,
                )
            )

    decoded: dict[int, dict[PacketKey, bytes]] = {k: {} for k in range(1, K + 1)}
    for msg in transcript:
        for (k, T_own, c_own) in msg.terms:
            acc = msg.payload
            for (k2, T2, c2) in msg.terms:
                if k2 != k:
                    acc = _xor(acc, caches[k][(demand_t[k2 - 1], T2, c2 + 1)])
            decoded[k][(demand_t[k - 1], T_own, c_own + 1)] = acc

    ok = True
    for k in range(1, K + 1):
        want = demand_t[k - 1]
        parts = []
        for T in base:
            for i in range(1, t + 1):
                src = caches[k] if k in T else decoded[k]
                piece = src.get((want, T, i))
                if piece is None:
                    ok = False
                    break
                parts.append(piece)
        if ok and b"".join(parts) != files[want - 1]:
            ok = False
    total_bits = sum(8 * len(m.payload) for m in transcript)
    return JcmResult(
        K=K,
        t=t,
        transcript=transcript,
        all_decoded=ok,
        total_bits=total_bits,
        rate=Fraction(total_bits, 8 * L),
        per_user_cache_bits=8 * B * t * binomial(K - 1, t - 1) * N,
    )


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def plan_json(plan: SchemePlan) -> dict[str, object]:
    a = plan.analysis
    rules: dict[str, object] = {}
    for gt in a.group_types:
        sel = plan.tx_rules[gt]
        rules[gt.text()] = "skip" if sel is None else sorted(sel)
    return {
        "schema_version": SCHEMA_VERSION,
        "K": plan.K,
        "N": plan.N,
        "M": plan.M,
        "t": plan.t,
        "grouping": list(a.grouping.sizes),
        "tx_rules": rules,
        "global_fs": {
            "subfile_types": [v.text() for v in a.subfile_types],
            "factors": list(a.global_fs.factors),
            "row_scales": list(a.global_fs.row_scales),
        },
        "F_PT": a.f_pt,
        "rate": f"{plan.rate.numerator}/{plan.rate.denominator}",
        "excluded_types": sorted(v.text() for v in a.excluded),
    }


def plan_from_json(data: Mapping[str, object]) -> SchemePlan:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
    rules: dict[TypeVector, "frozenset[int] | None"] = {}
    for text, sel in data["tx_rules"].items():  # type: ignore[union-attr]
        rules[TypeVector.parse(text)] = (
            None if sel == "skip" else frozenset(int(i) for i in sel)  # type: ignore[arg-type]
        )
    plan = build_plan(
        K=int(data["K"]),  # type: ignore[arg-type]
        N=int(data["N"]),  # type: ignore[arg-type]
        M=int(data["M"]),  # type: ignore[arg-type]
        grouping_sizes=[int(s) for s in data["grouping"]],  # type: ignore[union-attr]
        tx_rules=rules,
    )
    if plan.f_pt != data["F_PT"]:
        raise ValueError(
            f"stored subpacketization {data['F_PT']} disagrees with rebuilt {plan.f_pt}"
        )
    return plan


def transcript_jsonl(transcript: Iterable[Message]) -> str:
    lines = []
    for m in transcript:
        lines.append(
            json.dumps(
                {
                    "tx": m.tx,
                    "group": list(m.group),
                    "rx": list(m.rx),
                    "counter_snapshot": {str(k): c for k, c in m.counters_used},
                    "payload_hex": m.payload.hex(),
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
