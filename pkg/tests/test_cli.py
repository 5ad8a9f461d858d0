import json
import subprocess
import sys

import pytest

from eqopp.cli import main

from conftest import hand_population


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def write_hand_csv(path):
    pop = hand_population()
    rows = ["group,score,label"] + [
        f"{pop.groups[g].label},{float(s)!r},{int(y)}" for g, s, y in zip(pop.group, pop.score, pop.label)
    ]
    path.write_text("\n".join(rows) + "\n")
    return path


# -- generate ----------------------------------------------------------------------------


def test_generate_twice_byte_identical(tmp_path):
    assert run(["generate", "--preset", "admissions", "--seed", 7, "--out", tmp_path / "a"]) == 0
    assert run(["generate", "--preset", "admissions", "--seed", 7, "--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a/population.csv").read_bytes() == (tmp_path / "b/population.csv").read_bytes()


def test_generate_row_count_matches_spec_sizes(tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text("groups:\n  - {label: A, size: 17, loc: 0.3, scale: 0.1}\n"
                    "  - {label: B, size: 25, loc: 0.6, scale: 0.1}\n")
    assert run(["generate", "--spec", spec, "--out", tmp_path]) == 0
    with open(tmp_path / "population.csv") as fh:
        assert sum(1 for _ in fh) == 1 + 17 + 25


def test_generate_malformed_spec_line_numbered(tmp_path, capsys):
    spec = tmp_path / "bad.yaml"
    spec.write_text("groups:\n  - {label: A, size: 10, loc: 0.3, scale: 0.1}\n  - {label: B, size: -4, loc: 0.6, scale: 0.1}\n")
    assert run(["generate", "--spec", spec, "--out", tmp_path]) == 1
    assert "line 3:" in capsys.readouterr().err


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EQOPP_OUT_DIR", str(tmp_path / "env"))
    assert run(["generate", "--preset", "equal", "--size", 5]) == 0
    assert (tmp_path / "env/population.csv").exists()


# -- audit ----------------------------------------------------------------------------------


def test_audit_perfect_classifier_all_pass(tmp_path):
    data = tmp_path / "perfect.csv"
    data.write_text("group,score,label\nA,0.1,0\nA,0.9,1\nB,0.2,0\nB,0.8,1\nA,0.15,0\nB,0.85,1\n")
    assert run(["audit", "--input", data, "--threshold", 0.5, "--bins", 2, "--out", tmp_path]) == 0
    rows = (tmp_path / "audit_metrics.csv").read_text().splitlines()
    verdicts = [r.rsplit(",", 1)[1] for r in rows if r.startswith(("calibration_gap", "fpr_gap", "doctrine_formal"))]
    assert verdicts and set(verdicts) == {"pass"}


def test_audit_admissions_formal_pass_formal_plus_fail(tmp_path):
    assert run(["audit", "--preset", "admissions", "--size", 100_000, "--out", tmp_path]) == 0
    csv_text = (tmp_path / "audit_metrics.csv").read_text()
    assert "doctrine_formal,A|B,,pass" in csv_text
    assert "doctrine_formal-plus,A|B,,fail" in csv_text
    assert "Substantive: Rawlsian" in (tmp_path / "audit_report.txt").read_text()


def test_audit_unlabelled_input_exit_2(tmp_path, capsys):
    data = tmp_path / "u.csv"
    data.write_text("group,score\nA,0.1\nB,0.2\n")
    assert run(["audit", "--input", data, "--threshold", 0.5, "--out", tmp_path]) == 2
    assert "labels required" in capsys.readouterr().err


def test_audit_with_decisions_file(tmp_path):
    data = write_hand_csv(tmp_path / "hand.csv")
    assert run(["decide", "--input", data, "--doctrine", "formal", "--p", 0.5, "--out", tmp_path / "d"]) == 0
    assert run(["audit", "--input", data, "--decisions", tmp_path / "d/decisions.csv", "--out", tmp_path / "a"]) == 0
    assert run(["audit", "--input", data, "--threshold", 0.5, "--out", tmp_path / "b"]) == 0
    a = (tmp_path / "a/audit_metrics.csv").read_text()
    b = (tmp_path / "b/audit_metrics.csv").read_text()
    assert a == b


def test_audit_bad_data_row_exit_2(tmp_path, capsys):
    data = tmp_path / "bad.csv"
    data.write_text("group,score,label\nA,0.1,1\nB,x,0\n")
    assert run(["audit", "--input", data, "--threshold", 0.5, "--out", tmp_path]) == 2
    assert "row 2" in capsys.readouterr().err


def test_audit_requires_decision_source(tmp_path):
    data = write_hand_csv(tmp_path / "hand.csv")
    assert run(["audit", "--input", data, "--out", tmp_path]) == 1


def test_input_and_preset_are_exclusive(tmp_path):
    data = write_hand_csv(tmp_path / "hand.csv")
    assert run(["audit", "--input", data, "--preset", "admissions", "--threshold", 0.5]) == 1
    assert run(["audit", "--threshold", 0.5]) == 1


def test_missing_input_file_exit_1(tmp_path):
    assert run(["audit", "--input", tmp_path / "nope.csv", "--threshold", 0.5, "--out", tmp_path]) == 1


# -- decide ----------------------------------------------------------------------------------


def test_decide_formal_hand_oracle(tmp_path):
    data = write_hand_csv(tmp_path / "hand.csv")
    assert run(["decide", "--input", data, "--doctrine", "formal", "--p", 0.5, "--out", tmp_path]) == 0
    lines = (tmp_path / "decisions.csv").read_text().splitlines()
    assert lines[0] == "id,group,score,decision,resources"
    assert [int(l.split(",")[3]) for l in lines[1:]] == [1, 1, 0, 0, 1, 1, 0, 0]
    rationale = json.loads((tmp_path / "rationale.json").read_text())
    assert rationale["groups"]["A"]["threshold"] == 0.5


def test_rawlsian_zero_budget_matches_luck_file(tmp_path):
    common = ["decide", "--preset", "admissions", "--q", 0.8]
    assert run(common + ["--doctrine", "rawlsian", "--budget", 0, "--out", tmp_path / "r"]) == 0
    assert run(common + ["--doctrine", "luck", "--out", tmp_path / "l"]) == 0
    assert (tmp_path / "r/decisions.csv").read_bytes() == (tmp_path / "l/decisions.csv").read_bytes()


@pytest.mark.parametrize(
    "flags",
    [["--doctrine", "formal"], ["--doctrine", "luck"], ["--doctrine", "rawls", "--q", 0.5],
     ["--doctrine", "formal-plus"]],
)
def test_decide_missing_rule_flag_usage_error(tmp_path, capsys, flags):
    assert run(["decide", "--preset", "admissions", "--out", tmp_path] + flags) == 1
    assert "usage:" in capsys.readouterr().err


def test_decide_unreachable_target_exit_3(tmp_path):
    assert run(["decide", "--preset", "admissions", "--doctrine", "formal-plus", "--target-tpr", 1.5,
                "--out", tmp_path]) == 3


def test_decide_bad_response_exit_1(tmp_path, capsys):
    assert run(["decide", "--preset", "admissions", "--doctrine", "rawlsian", "--q", 0.8, "--budget", 1,
                "--response", "0:1,1:0", "--out", tmp_path]) == 1
    assert "non-monotone" in capsys.readouterr().err


def test_decide_formal_plus_records_thresholds(tmp_path):
    assert run(["decide", "--preset", "admissions", "--doctrine", "formal-plus", "--p", 0.55,
                "--seed", 4, "--out", tmp_path]) == 0
    groups = json.loads((tmp_path / "rationale.json").read_text())["groups"]
    assert set(groups) == {"A", "B"}
    assert groups["A"]["target_tpr"] == groups["B"]["target_tpr"]


# -- impossibility and simulate ----------------------------------------------------------


def test_impossibility_equal_prevalence_feasible(tmp_path, capsys):
    assert run(["impossibility", "--prev-a", 0.4, "--prev-b", 0.4, "--out", tmp_path]) == 0
    assert "verdict: feasible" in capsys.readouterr().out
    assert "verdict: feasible" in (tmp_path / "impossibility.txt").read_text()


def test_impossibility_unequal_infeasible_with_bound(tmp_path):
    assert run(["impossibility", "--prev-a", 0.3, "--prev-b", 0.6, "--out", tmp_path]) == 0
    text = (tmp_path / "impossibility.txt").read_text()
    assert "verdict: infeasible" in text
    bound = float(text.split("min total violation (ppv gap + fpr gap + fnr gap) = ")[1].split()[0])
    assert bound == pytest.approx(0.015617381104010022, abs=1e-12)
    grid = (tmp_path / "impossibility_grid.csv").read_text().splitlines()
    assert grid[0] == "tpr,fpr,ppv_a,ppv_b,ppv_gap" and len(grid) == 1 + 201 * 201


def test_impossibility_with_sweep(tmp_path):
    assert run(["impossibility", "--prev-a", 0.3, "--prev-b", 0.6, "--preset", "admissions",
                "--sweep-points", 20, "--out", tmp_path]) == 0
    assert len((tmp_path / "tradeoff.csv").read_text().splitlines()) == 21
    assert "empirical sweep: 20 formal thresholds" in (tmp_path / "impossibility.txt").read_text()


def test_simulate_formal_monotone(tmp_path):
    assert run(["simulate", "--preset", "admissions", "--rounds", 20, "--doctrine", "formal",
                "--privilege-boost", "B=0.01", "--out", tmp_path]) == 0
    gaps = [float(l.rsplit(",", 1)[1]) for l in (tmp_path / "trace.csv").read_text().splitlines()
            if ",all,score_gap," in l]
    assert len(gaps) == 21
    assert all(b >= a for a, b in zip(gaps, gaps[1:]))


def test_simulate_all_needs_budget(tmp_path):
    assert run(["simulate", "--preset", "admissions", "--doctrine", "all", "--out", tmp_path]) == 1
    assert run(["simulate", "--preset", "admissions", "--doctrine", "all", "--budget", 1,
                "--rounds", 3, "--out", tmp_path]) == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in summary[1:]] == ["formal", "formal-plus", "luck-egalitarian", "rawlsian"]


def test_simulate_bad_privilege_flag(tmp_path):
    assert run(["simulate", "--preset", "admissions", "--doctrine", "formal", "--privilege-boost", "B:1",
                "--out", tmp_path]) == 1
    assert run(["simulate", "--preset", "admissions", "--doctrine", "formal", "--privilege-boost", "Q=1",
                "--out", tmp_path]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eqopp", "impossibility", "--prev-a", "0.4", "--prev-b", "0.4",
                           "--grid-step", "0.05", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "feasible" in proc.stdout
