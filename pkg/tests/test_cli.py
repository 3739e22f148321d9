"""End-to-end checks of the command line front end.

Everything runs through main(argv) in-process so exit codes and the emitted
JSON/CSV can be asserted directly; one subprocess test confirms the module
entry point also works from a shell.
"""

import csv
import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

import ptcache.engine
from ptcache.cli import (
    EXIT_DECODE,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from ptcache.engine import VerifyResult


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------- design


def test_design_reports_known_four_user_scheme(capsys):
    code, out, _ = run_cli(["design", "--thm", "2", "--K", "4", "--t", "2"], capsys)
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["schema_version"] == "1"
    assert report["design"] == "thm2-K4-t2"
    assert (report["K"], report["N"], report["M"], report["t"]) == (4, 4, 2, 2)
    assert report["F_PT"] == 4
    assert report["F_JCM"] == 12
    assert report["ratio"] == "1/3"
    assert report["rate"] == "1/1"
    assert report["grouping"] == [2, 2]
    assert report["tx_rules"] == {"2,1": [2]}
    assert report["excluded_types"] == ["2,0"]
    assert report["global_fs"] == {
        "subfile_types": ["2,0", "1,1"],
        "factors": [0, 1],
        "row_scales": [1],
    }


def test_design_out_file_matches_stdout_form(tmp_path, capsys):
    target = tmp_path / "plan.json"
    code, out, _ = run_cli(
        ["design", "--jcm", "--K", "4", "--t", "2", "--out", str(target)], capsys
    )
    assert code == EXIT_OK
    assert out == ""  # everything went to the file
    report = json.loads(target.read_text())
    assert report["F_PT"] == 12
    assert report["ratio"] == "1/1"
    # the file is the same sorted/indented form _emit prints
    assert target.read_text() == json.dumps(report, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- analyze


def test_analyze_five_user_tables(capsys):
    code, out, _ = run_cli(["analyze", "--special", "k5_t3", "--K", "5"], capsys)
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["design"] == "k5-t3"
    assert report["grouping"] == [3, 2]
    assert report["subfile_types"] == [
        {"type": "3|0", "count": 1, "factor": 0},
        {"type": "2|1", "count": 6, "factor": 2},
        {"type": "1|2", "count": 3, "factor": 1},
    ]
    assert report["fs_table"] == {
        "2|2": ["star", 2, 1],
        "3|1": [0, 1, "star"],
    }
    assert report["row_scales"] == {"2|2": 1, "3|1": 2}
    assert report["mc_table"] == [[1, 4, 1], [0, 3, 3]]
    assert report["mc_ok"] is True
    assert report["excluded_types"] == ["3|0"]
    assert report["skipped_group_types"] == []
    assert report["F_PT"] == 15
    assert report["F_JCM"] == 30
    assert report["ratio"] == "1/2"
    assert report["jcm_rate"] == "2/3"


def test_analyze_custom_grouping_rules_file(tmp_path, capsys):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"2,1": [2]}))
    code, out, _ = run_cli(
        [
            "analyze",
            "--grouping",
            "2,2",
            "--K",
            "4",
            "--t",
            "2",
            "--rules",
            str(rules),
        ],
        capsys,
    )
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["design"] == "custom-K4-t2"
    assert report["F_PT"] == 4
    assert report["ratio"] == "1/3"


# ---------------------------------------------------------------- simulate


def test_simulate_staggered_nine_user_point(capsys):
    code, out, _ = run_cli(
        [
            "simulate",
            "--special",
            "tbar3",
            "--K",
            "9",
            "--N",
            "3",
            "--M",
            "2",
            "--demands",
            "3",
            "--seed",
            "7",
        ],
        capsys,
    )
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["all_decoded"] is True
    assert report["demands_checked"] == 3
    assert report["F_PT"] == 270
    assert report["t"] == 6
    assert report["rate"] == "1/2"
    assert report["message_count"] == 117
    # per-user cache is exactly M files' worth of bits
    assert report["cache_bits"] == 2 * 270 * 8
    assert report["total_bits"] == 1080


def test_simulate_explicit_demand_writes_transcript(tmp_path, capsys):
    transcript = tmp_path / "log.jsonl"
    code, out, _ = run_cli(
        [
            "simulate",
            "--thm",
            "2",
            "--K",
            "4",
            "--t",
            "2",
            "--N",
            "2",
            "--M",
            "1",
            "--demands",
            "1,2,2,1",
            "--transcript",
            str(transcript),
        ],
        capsys,
    )
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["demands_checked"] == 1
    assert report["all_decoded"] is True
    lines = transcript.read_text().splitlines()
    assert len(lines) == report["message_count"] == 4
    for line in lines:
        rec = json.loads(line)
        assert set(rec) == {"group", "tx", "rx", "counter_snapshot", "payload_hex"}
        assert rec["tx"] not in rec["rx"]
        assert set(rec["rx"]) <= set(rec["group"])
        bytes.fromhex(rec["payload_hex"])  # must be valid hex


def test_simulate_all_demands_small_space(capsys):
    code, out, _ = run_cli(
        [
            "simulate",
            "--thm",
            "2",
            "--K",
            "4",
            "--t",
            "2",
            "--N",
            "2",
            "--M",
            "1",
            "--demands",
            "all",
        ],
        capsys,
    )
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["demands_checked"] == 2**4
    assert report["all_decoded"] is True


def test_simulate_same_seed_same_bytes(tmp_path, capsys):
    argv = [
        "simulate",
        "--special",
        "k5_t3",
        "--K",
        "5",
        "--demands",
        "2",
        "--seed",
        "11",
        "--bytes-per-packet",
        "3",
    ]
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        path = tmp_path / name
        code, out, _ = run_cli(argv + ["--transcript", str(path)], capsys)
        assert code == EXIT_OK
        outs.append((out, path.read_bytes()))
    assert outs[0] == outs[1]

    other = tmp_path / "c.jsonl"
    code, out, _ = run_cli(
        argv[:-4] + ["--seed", "12", "--bytes-per-packet", "3",
                     "--transcript", str(other)],
        capsys,
    )
    assert code == EXIT_OK
    assert other.read_bytes() != outs[0][1]  # different seed, different payloads


def test_simulate_decode_failure_exit_code(monkeypatch, capsys):
    def always_fail(session):
        return VerifyResult(ok=False, per_user={1: False}, missing={1: []})

    monkeypatch.setattr(ptcache.engine, "decode_and_verify", always_fail)
    code, out, _ = run_cli(
        ["simulate", "--thm", "2", "--K", "4", "--t", "2"], capsys
    )
    assert code == EXIT_DECODE
    assert json.loads(out)["all_decoded"] is False


# ---------------------------------------------------------------- search


def test_search_summary_and_csv(tmp_path, capsys):
    out_csv = tmp_path / "census.csv"
    code, out, _ = run_cli(
        ["search", "--K", "4", "--t", "2", "--out", str(out_csv)], capsys
    )
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary["explored"] == 17
    assert summary["feasible"] == 9
    assert summary["infeasible"] == {"mc": 8, "no_lcm": 0, "rate": 0}
    assert summary["partial"] is False
    assert summary["best"] == {
        "F_PT": 4,
        "grouping": [2, 2],
        "tx_rules": {"2,1": [2]},
    }

    with open(out_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "K", "t", "grouping", "tx_rules", "F_PT", "F_JCM", "ratio",
        "feasible", "reason",
    ]
    body = rows[1:]
    assert len(body) == 17
    feasible = [r for r in body if r[7] == "True"]
    assert len(feasible) == 9
    best_rows = [r for r in feasible if r[4] == "4"]
    assert best_rows and best_rows[0][2] == "2,2"
    for r in body:
        if r[7] == "True":
            assert Fraction(r[6]) == Fraction(int(r[4]), int(r[5]))
        else:
            assert r[8] in ("mc", "no_lcm", "rate")


def test_search_env_thread_count(monkeypatch, capsys):
    monkeypatch.setenv("PT_CACHE_THREADS", "2")
    code, out, _ = run_cli(["search", "--K", "4", "--t", "2"], capsys)
    assert code == EXIT_OK
    assert json.loads(out)["explored"] == 17


# ---------------------------------------------------------------- sweep


def test_sweep_pair_group_curve_to_stdout(capsys):
    code, out, err = run_cli(
        ["sweep", "--family", "thm1", "--K", "4..12", "--tbar", "2"], capsys
    )
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["family", "label", "K", "F_PT", "F_JCM", "ratio", "bound"]
    assert [r[2] for r in rows[1:]] == ["4", "6", "8", "10", "12"]
    for r in rows[1:]:
        K = int(r[2])
        assert Fraction(r[5]) == Fraction(1, K - 1)
        assert Fraction(r[6]) == Fraction(1, K - 2)
    # odd K land in stderr notes, not the table
    for K in (5, 7, 9, 11):
        assert f"skipped K={K}" in err


def test_sweep_out_file_with_summary(tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    code, out, err = run_cli(
        ["sweep", "--family", "thm1", "--K", "4..8", "--tbar", "4",
         "--out", str(out_csv)],
        capsys,
    )
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary == {
        "schema_version": "1",
        "family": "thm1",
        "rows": 1,
        "skipped": 4,
        "out": str(out_csv),
    }
    rows = list(csv.reader(open(out_csv, newline="")))
    assert len(rows) == 2
    assert rows[1] == ["thm1", "t_bar=4", "8", "144", "280", "18/35", "3/4"]
    assert err.count("note: skipped") == 4


# ---------------------------------------------------------------- failures


def test_inconsistent_rules_exit_infeasible(tmp_path, capsys):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"3|0": [1], "2|1": [1]}))
    code, _, err = run_cli(
        ["design", "--grouping", "3,1", "--K", "4", "--t", "2",
         "--rules", str(rules)],
        capsys,
    )
    assert code == EXIT_INFEASIBLE
    assert "infeasible (mc)" in err
    assert "unequal amounts" in err


def test_ratio_cycle_exit_infeasible(tmp_path, capsys):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"2,1|0": [1], "1,1|1": [1], "2,0|1": [1]}))
    code, _, err = run_cli(
        ["analyze", "--grouping", "2,2,1", "--K", "5", "--t", "2",
         "--rules", str(rules)],
        capsys,
    )
    assert code == EXIT_INFEASIBLE
    assert "infeasible (lcm)" in err


def test_all_skip_rules_rejected_as_usage(tmp_path, capsys):
    # skipping every group type is a malformed rule set, not a near-miss design
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"2,1": "skip"}))
    code, _, err = run_cli(
        ["design", "--grouping", "2,2", "--K", "4", "--t", "2",
         "--rules", str(rules)],
        capsys,
    )
    assert code == EXIT_USAGE
    assert "marked skip" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["design"],
        ["design", "--thm", "2", "--K", "4", "--t", "2", "--jcm"],
        ["design", "--thm", "1", "--K", "8"],
        ["design", "--thm", "2", "--K", "9", "--t", "3"],
        ["design", "--thm", "4", "--K", "8", "--t", "2"],
        ["design", "--grouping", "2,2", "--K", "4", "--t", "2"],
        ["design", "--grouping", "2,2", "--K", "4", "--t", "2",
         "--rules", "/no/such/file.json"],
        ["design", "--jcm", "--K", "4", "--t", "2", "--N", "5"],
        ["simulate", "--jcm", "--K", "4", "--t", "2", "--N", "5", "--M", "2"],
        ["simulate", "--jcm", "--K", "4", "--t", "2", "--demands", "junk"],
        ["simulate", "--jcm", "--K", "4", "--t", "2", "--demands", "1,2"],
        ["simulate", "--jcm", "--K", "4", "--t", "2", "--bytes-per-packet", "0"],
        ["simulate", "--dpda", "t2", "--K", "8", "--demands", "all"],
        ["search", "--K", "4"],
        ["sweep", "--family", "thm1", "--K", "4..8"],
        ["sweep", "--family", "thm2", "--K", "8,10", "--t", "5"],
        ["frobnicate"],
    ],
)
def test_bad_arguments_exit_usage(argv, capsys):
    code = main(argv)
    capsys.readouterr()
    assert code == EXIT_USAGE


def test_module_runs_as_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "ptcache.cli", "design", "--jcm", "--K", "4",
         "--t", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    report = json.loads(proc.stdout)
    assert report["F_PT"] == 12
    assert report["grouping"] == [4]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
