"""End-to-end engine checks: placement, XOR delivery, decoding, accounting.

The sharpest oracle is `run_jcm`, a from-scratch reference implementation of
the classic single-group scheme that shares no code with the planning
pipeline; with the trivial grouping the engine must reproduce its transcript
byte for byte.
"""

import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import roundtrip_design
from ptcache.designs import (
    dpda_specials,
    jcm_design,
    special_designs,
    theorem1_design,
    theorem2_design,
    theorem3_design,
)
from ptcache.engine import (
    PlanError,
    analyze_rules,
    build_plan,
    decode_and_verify,
    measure,
    place,
    plan_from_json,
    plan_json,
    run_jcm,
    simulate,
    transcript_jsonl,
)
from ptcache.typevec import TypeVector, type_of


def make_files(n_files, length, seed=7):
    rng = random.Random(seed)
    return tuple(rng.randbytes(length) for _ in range(n_files))


# ------------------------------------------------- four users, two files


@pytest.fixture(scope="module")
def four_user_session():
    ds = theorem2_design(4, 2)
    plan = build_plan(4, 2, 1, ds.grouping_sizes, ds.tx_rules)
    files = make_files(2, plan.f_pt)
    return simulate(plan, files, demand=(1, 2, 2, 1))


class TestFourUserRegression:
    """The smallest interesting instance: K=4, N=2, M=1."""

    @pytest.fixture
    def session(self, four_user_session):
        return four_user_session

    def test_counts(self, session):
        assert session.plan.f_pt == 4
        m = measure(session)
        assert m.rate == 1
        assert m.message_count == 4
        assert m.total_bits == 8 * len(session.files[0])

    def test_lone_half_member_transmits(self, session):
        txs = {msg.group: msg.tx for msg in session.transcript}
        assert txs == {
            (1, 2, 3): 3,
            (1, 2, 4): 4,
            (1, 3, 4): 1,
            (2, 3, 4): 2,
        }
        for msg in session.transcript:
            assert len(msg.terms) == 2
            assert len(msg.payload) == 1  # z=1, one byte per packet

    def test_xor_of_the_two_cached_packets(self, session):
        # every payload equals the XOR of what the two receivers want,
        # reconstructed here straight from the files
        plan = session.plan
        for msg in session.transcript:
            want = b"\0"
            for (k2, T, c) in msg.terms:
                base, _ = plan.subset_map[T]
                n = session.demand[k2 - 1]
                byte = session.files[n - 1][base + c]
                want = bytes([want[0] ^ byte])
            assert msg.payload == want

    def test_user1_caches_only_cross_half_pairs(self, session):
        keys = {(n, T) for (n, T, _) in session.caches[1]}
        assert keys == {(n, T) for n in (1, 2) for T in [(1, 3), (1, 4)]}

    def test_decodes(self, session):
        res = decode_and_verify(session)
        assert res.ok
        assert res.missing == {}


# ------------------------------------------- nine users, three-way groups


@pytest.fixture(scope="module")
def nine_user_session():
    ds = special_designs("tbar3", 9)
    plan = build_plan(9, 3, 2, ds.grouping_sizes, ds.tx_rules)
    files = make_files(3, plan.f_pt)
    return simulate(plan, files, demand=(1, 2, 3, 1, 2, 3, 1, 2, 3))


class TestNineUserRegression:
    """K=9, N=3, M=2 with groups of three; checks the broadcast anatomy."""

    @pytest.fixture
    def session(self, nine_user_session):
        return nine_user_session

    def test_plan_numbers(self, session):
        plan = session.plan
        assert plan.f_pt == 270
        a = plan.analysis
        assert a.factor_of(TypeVector.parse("2,2,2")) == 4
        assert a.factor_of(TypeVector.parse("3,2,1")) == 3
        assert TypeVector.parse("3,3,0") in a.excluded
        # both realizable group types carry transmissions here
        assert not a.skipped_group_types

    def test_single_transmitter_group(self, session):
        [msg] = [m for m in session.transcript if m.group == tuple(range(1, 8))]
        assert msg.tx == 7
        assert len(msg.terms) == 6
        assert len(msg.payload) == 3  # z=3 packets
        assert {k for k, _, _ in msg.terms} == set(range(1, 7))
        # everyone's desired subfile for this group has three packets,
        # delivered in one shot
        assert all(c == 0 for _, _, c in msg.terms)

    def test_four_transmitter_group(self, session):
        S = (1, 2, 3, 4, 5, 7, 8)
        msgs = [m for m in session.transcript if m.group == S]
        assert [m.tx for m in msgs] == [4, 5, 7, 8]
        per_user = {}
        for m in msgs:
            assert len(m.payload) == 1  # z=1
            kinds = sorted(
                type_of(session.plan.grouping, T).text() for _, T, _ in m.terms
            )
            assert kinds == ["2,2,2"] * 3 + ["3,2,1"] * 3
            for k, _, c in m.terms:
                per_user.setdefault(k, []).append(c)
        # the three outsiders collect four packets, the transmitters three
        for k in (1, 2, 3):
            assert per_user[k] == [0, 1, 2, 3]
        for k in (4, 5, 7, 8):
            assert per_user[k] == [0, 1, 2]

    def test_cache_split_by_type(self, session):
        plan = session.plan
        by_type = {}
        for (n, T, i) in session.caches[1]:
            key = type_of(plan.grouping, T).text()
            by_type[key] = by_type.get(key, 0) + 1
        assert by_type == {"2,2,2": 216, "3,2,1": 324}
        m = measure(session)
        # 540 cached packets = 2 files' worth
        assert m.per_user_cache_bits == 2 * 8 * len(session.files[0])

    def test_decodes_with_half_rate(self, session):
        assert decode_and_verify(session).ok
        from fractions import Fraction

        assert measure(session).rate == Fraction(1, 2)


# ------------------------------------------------------- reference oracle


def test_trivial_grouping_reproduces_reference_exactly():
    for K, N, M in [(4, 2, 1), (4, 4, 2), (5, 5, 2), (6, 3, 1), (6, 3, 2)]:
        t = K * M // N
        ds = jcm_design(K, t)
        plan = build_plan(K, N, M, ds.grouping_sizes, ds.tx_rules)
        files = make_files(N, plan.f_pt, seed=K * 100 + M)
        rng = random.Random(K + N + M)
        demand = tuple(rng.randrange(1, N + 1) for _ in range(K))
        session = simulate(plan, files, demand)
        ref = run_jcm(K, N, M, files, demand)
        assert ref.all_decoded
        assert session.transcript == ref.transcript  # same order, same bytes
        m = measure(session)
        assert m.total_bits == ref.total_bits
        assert m.per_user_cache_bits == ref.per_user_cache_bits


def test_reference_three_user_broadcast():
    """K=N=3, M=2: one group, three pairwise-coded messages."""
    f1 = bytes([1, 2, 3, 4, 5, 6])
    f2 = bytes([11, 12, 13, 14, 15, 16])
    f3 = bytes([21, 22, 23, 24, 25, 26])
    res = run_jcm(3, 3, 2, (f1, f2, f3), demand=(1, 2, 3))
    assert res.all_decoded
    assert len(res.transcript) == 3
    assert [m.tx for m in res.transcript] == [1, 2, 3]
    assert res.transcript[0].payload == bytes([f2[2] ^ f3[0]])
    assert res.transcript[1].payload == bytes([f1[4] ^ f3[1]])
    assert res.transcript[2].payload == bytes([f1[5] ^ f2[3]])
    from fractions import Fraction

    assert res.rate == Fraction(1, 2)  # K(N-M)/(Nt) = 3/(3*2)


# --------------------------------------------------------- property style


DESIGN_POOL = [
    (theorem2_design(4, 2), 2, 1),
    (theorem1_design(6, 2), 3, 2),
    (special_designs("k5_t3", 5), 5, 3),
    (dpda_specials("t2", 6), 6, 2),
    (special_designs("lemma2", 8, q=2), 4, 3),
    (theorem3_design(3, 3, 2), 9, 2),
]


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, len(DESIGN_POOL) - 1),
    st.integers(0, 2 ** 31),
    st.integers(1, 2),
)
def test_any_demand_decodes_and_accounts_exactly(idx, seed, B):
    ds, N, M = DESIGN_POOL[idx]
    plan, session, res = roundtrip_design(
        ds, N=N, M=M, bytes_per_packet=B, seed=seed
    )
    assert res.ok, res.missing
    m = measure(session)
    L_bits = 8 * len(session.files[0])
    # delivered bits: K*(1-M/N)*L/t, exactly
    assert m.total_bits * plan.N * plan.t == plan.K * (plan.N - plan.M) * L_bits
    assert m.rate == plan.rate
    assert m.per_user_cache_bits == plan.M * L_bits
    for msg in session.transcript:
        assert msg.terms  # no vacuous broadcasts
        assert len(msg.payload) == session.bytes_per_packet * plan.analysis.z_of[
            type_of(plan.grouping, msg.group)
        ]


@settings(max_examples=12, deadline=None)
@given(st.integers(0, len(DESIGN_POOL) - 1), st.integers(0, 2 ** 31))
def test_delivery_order_is_irrelevant(idx, order_seed):
    ds, N, M = DESIGN_POOL[idx]
    plan = build_plan(ds.K, N, M, ds.grouping_sizes, ds.tx_rules)
    files = make_files(N, plan.f_pt, seed=3)
    demand = tuple((i % N) + 1 for i in range(ds.K))
    canonical = simulate(plan, files, demand)
    shuffled = simulate(plan, files, demand, order_seed=order_seed)
    assert decode_and_verify(shuffled).ok
    assert measure(shuffled).total_bits == measure(canonical).total_bits
    assert measure(shuffled).message_count == measure(canonical).message_count


def test_traffic_is_demand_independent():
    ds, N, M = DESIGN_POOL[2]
    plan = build_plan(ds.K, N, M, ds.grouping_sizes, ds.tx_rules)
    files = make_files(N, plan.f_pt)
    seen = {
        measure(simulate(plan, files, demand)).total_bits
        for demand in [(1,) * 5, (1, 2, 3, 4, 5), (5, 4, 3, 2, 1), (2, 2, 4, 4, 1)]
    }
    assert len(seen) == 1


# ----------------------------------------------------------- serialization


def test_plan_json_round_trip():
    ds = theorem2_design(6, 2)
    plan = build_plan(6, 3, 1, ds.grouping_sizes, ds.tx_rules)
    data = plan_json(plan)
    assert data["schema_version"] == "1"
    assert data["F_PT"] == plan.f_pt
    back = plan_from_json(data)
    assert back.f_pt == plan.f_pt
    assert back.analysis.global_fs == plan.analysis.global_fs
    assert back.subset_map == plan.subset_map
    assert back.rate == plan.rate


def test_plan_json_rejects_tampering():
    ds = theorem2_design(4, 2)
    plan = build_plan(4, 2, 1, ds.grouping_sizes, ds.tx_rules)
    data = plan_json(plan)
    bad = dict(data, F_PT=5)
    with pytest.raises(ValueError):
        plan_from_json(bad)
    with pytest.raises(ValueError):
        plan_from_json(dict(data, schema_version="0"))


def test_transcript_jsonl_shape():
    ds = theorem2_design(4, 2)
    plan = build_plan(4, 2, 1, ds.grouping_sizes, ds.tx_rules)
    files = make_files(2, plan.f_pt)
    session = simulate(plan, files, (1, 1, 2, 2))
    text = transcript_jsonl(session.transcript)
    import json

    lines = [json.loads(line) for line in text.splitlines()]
    assert len(lines) == 4
    for rec in lines:
        assert set(rec) == {"tx", "group", "rx", "counter_snapshot", "payload_hex"}
        assert rec["tx"] not in rec["rx"]
        assert set(rec["rx"]) < set(rec["group"])
        bytes.fromhex(rec["payload_hex"])
    assert transcript_jsonl([]) == ""


# ------------------------------------------------------------ error paths


def stage_of(excinfo):
    return excinfo.value.stage


def test_plan_error_stages():
    ds = theorem2_design(4, 2)
    with pytest.raises(PlanError) as e:
        build_plan(4, 3, 2, ds.grouping_sizes, ds.tx_rules)
    assert stage_of(e) == "params"
    with pytest.raises(PlanError) as e:
        build_plan(4, 2, 3, ds.grouping_sizes, ds.tx_rules)
    assert stage_of(e) == "params"
    with pytest.raises(PlanError) as e:
        analyze_rules(4, 2, (5,), {})
    assert stage_of(e) == "grouping"
    with pytest.raises(PlanError) as e:
        analyze_rules(4, 2, (2, 2), {})
    assert stage_of(e) == "rules"
    with pytest.raises(PlanError) as e:
        analyze_rules(4, 2, (2, 2), {TypeVector.parse("2,1"): [7]})
    assert stage_of(e) == "rules"


def test_plan_error_skip_stage():
    # marking a group type skip while its subfile type stays live
    rules = {
        TypeVector.parse("1,1"): [1],
        TypeVector.parse("2,0"): None,
    }
    with pytest.raises(PlanError) as e:
        analyze_rules(4, 1, (2, 2), rules)
    assert stage_of(e) == "skip"


def test_plan_error_mc_stage():
    rules = {
        TypeVector.parse("3|0"): [1],
        TypeVector.parse("2|1"): [1],
    }
    with pytest.raises(PlanError) as e:
        analyze_rules(4, 2, (3, 1), rules)
    assert stage_of(e) == "mc"
    assert "unequal" in str(e.value)


def test_plan_error_lcm_stage():
    # three group types form a ratio cycle that cannot be reconciled
    rules = {
        TypeVector.parse("2,1|0"): [1],
        TypeVector.parse("1,1|1"): [1],
        TypeVector.parse("2,0|1"): [1],
    }
    with pytest.raises(PlanError) as e:
        analyze_rules(5, 2, (2, 2, 1), rules)
    assert stage_of(e) == "lcm"


def test_plan_error_rate_stage():
    # the half-pair's lone member excludes its own type by transmitting
    # alone in one group type, but in another group type the idle singleton
    # would sit among the receivers of the pair's messages, so those
    # messages carry fewer than t terms and the delivery over-transmits
    rules = {
        TypeVector.parse("2,1|0"): [2],
        TypeVector.parse("1,1|1"): [1, 2],
        TypeVector.parse("2,0|1"): [1],
    }
    with pytest.raises(PlanError) as e:
        analyze_rules(5, 2, (2, 2, 1), rules)
    assert stage_of(e) == "rate"
    assert "transmit alone" in str(e.value)


def test_place_validates_files():
    ds = theorem2_design(4, 2)
    plan = build_plan(4, 2, 1, ds.grouping_sizes, ds.tx_rules)
    with pytest.raises(ValueError):
        place(plan, [b"abcd"])  # wrong count
    with pytest.raises(ValueError):
        place(plan, [b"abcd", b"ab"])  # ragged
    with pytest.raises(ValueError):
        place(plan, [b"abcde", b"fghij"])  # 5 bytes over 4 packets
    caches = place(plan, [b"abcd", b"wxyz"])
    assert len(caches) == 4


def test_simulate_validates_demand():
    ds = theorem2_design(4, 2)
    plan = build_plan(4, 2, 1, ds.grouping_sizes, ds.tx_rules)
    files = make_files(2, 4)
    with pytest.raises(ValueError):
        simulate(plan, files, (1, 2))
    with pytest.raises(ValueError):
        simulate(plan, files, (1, 2, 3, 1))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
