import csv
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import pytest

from focuskit.cli import main
from focuskit.config import SCHEMA_VERSION

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_focus(capsys, *argv):
    code = main(["focus", *argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_focus_closed_form(capsys):
    code, out, _ = run_focus(capsys, "--scores", "1,0,0,0", "--rho", "0.5", "--tolerance", "1e-9")
    assert code == 0
    res = json.loads(out)
    assert res["beta"] == pytest.approx(math.log(3 + 2 * math.sqrt(3)), abs=1e-6)
    assert sum(res["weights"]) == pytest.approx(1.0, abs=1e-9)
    assert "diagnostics" in res


def test_focus_scores_file(capsys, tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("0.1\n0.5\n0.9\n")
    code, out, _ = run_focus(capsys, "--scores-file", str(f))
    assert code == 0 and len(json.loads(out)["weights"]) == 3


@pytest.mark.parametrize(
    "argv, code, flag",
    [
        ([], 2, "--scores"),
        (["--scores", "1,abc"], 2, "--scores"),
        (["--scores", "1,nan"], 2, "--scores"),
        (["--scores", "1,0", "--rho", "x"], 2, "--rho"),
        (["--scores", "1,0", "--rho", "1.5"], 3, None),
        (["--scores", "1,0,0,0", "--clip", "0.1"], 3, None),
    ],
)
def test_focus_exit_codes(capsys, argv, code, flag):
    got, out, err = run_focus(capsys, *argv)
    assert got == code and out == ""
    payload = json.loads(err)
    assert "error" in payload
    if flag:
        assert payload.get("flag") == flag


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {"textlab": {"trails": 10}})
    assert main(["textlab", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "trails" in capsys.readouterr().err


def test_malformed_config_is_parse_error(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["textlab", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


SMALL = {
    "textlab": {"seed": 3, "textlab": {"trials": 40, "beam": {"width": 2, "expansions": 5}}},
    "gridlab": {
        "seed": 1,
        "gridlab": {
            "env": {"rows": 3, "cols": 3, "start": [0, 0], "goal": [2, 2], "max_episode_steps": 30},
            "n_seeds": 2,
            "step_budget": 20000,
            "diagnostics": True,
        },
    },
    "theorylab": {
        "seed": 0,
        "theorylab": {
            "batch_success": {"trials": 300},
            "sweep": {"sizes": [16, 32], "n_seeds": 5, "delta": 0.1},
        },
    },
}


def _snapshot(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("command", ["textlab", "gridlab", "theorylab"])
def test_repeated_runs_are_byte_identical(tmp_path, command):
    cfg = _write(tmp_path, "c.json", SMALL[command])
    assert main([command, "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main([command, "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    assert a.keys() == b.keys() and a == b


def test_csv_carries_provenance(tmp_path):
    cfg = _write(tmp_path, "c.json", SMALL["textlab"])
    out = tmp_path / "o"
    assert main(["textlab", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "textlab_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["method"] for r in rows} >= {"icfa", "best_of_n_16", "beam_2"}
    for r in rows:
        assert r["schema_version"] == SCHEMA_VERSION and len(r["config_sha256"]) == 64
    run = json.loads((out / "run.json").read_text())
    assert run["config"]["seed"] == 3


def test_seed_override_changes_digest(tmp_path):
    cfg = _write(tmp_path, "c.json", SMALL["textlab"])
    main(["textlab", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["textlab", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    read = lambda d: next(csv.DictReader(open(d / "textlab_summary.csv")))["config_sha256"]  # noqa: E731
    assert read(tmp_path / "a") != read(tmp_path / "b")


def _summary(out: Path) -> dict:
    with open(out / "textlab_summary.csv", newline="") as fh:
        return {r["method"]: float(r["satisfaction_rate"]) for r in csv.DictReader(fh)}


@pytest.mark.slow
def test_noisy_config_icfa_not_worse_than_best_of_n(tmp_path):
    out = tmp_path / "o"
    assert main(["textlab", "--config", str(CONFIGS / "textlab_noisy.json"), "--out", str(out)]) == 0
    rates = _summary(out)
    assert rates["icfa"] >= rates["best_of_n_16"]


def test_textlab_beta0_icfa_equals_single_draw(tmp_path):
    out = tmp_path / "o"
    assert main(["textlab", "--config", str(CONFIGS / "textlab_beta0.json"), "--out", str(out)]) == 0
    rates = _summary(out)
    assert rates["icfa"] == rates["best_of_n_1"]


def test_gridlab_beta0_arm_equals_baseline(tmp_path):
    out = tmp_path / "o"
    assert main(["gridlab", "--config", str(CONFIGS / "gridlab_beta0.json"), "--out", str(out)]) == 0
    with open(out / "gridlab_reports.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    by = {}
    for r in rows:
        by.setdefault(r["mode"], {})[r["seed"]] = r["env_steps_to_solve"]
    assert by["baseline"] == by["icfa_beta0"]


def test_gridlab_smoke_under_ten_seconds(tmp_path):
    t0 = time.perf_counter()
    code = main(["gridlab", "--config", str(CONFIGS / "gridlab_smoke.json"), "--out", str(tmp_path)])
    assert code == 0 and time.perf_counter() - t0 < 10
    assert (tmp_path / "gridlab_diagnostics.jsonl").exists()
    summary = json.loads((tmp_path / "gridlab_summary.json").read_text())
    assert "median_speedup" in summary


def test_theorylab_two_element(tmp_path):
    cfg = str(CONFIGS / "theorylab_two_element.json")
    assert main(["theorylab", "--config", cfg, "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "theory_advantage.json").read_text())
    text = json.dumps(res)
    assert "kappa" in text and not (tmp_path / "theory_sweep.csv").exists()


def test_kappa_violation_exits_precondition(tmp_path, capsys):
    cfg = str(CONFIGS / "theorylab_kappa_violation.json")
    assert main(["theorylab", "--config", cfg, "--out", str(tmp_path)]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "AdvantageTooWeak"


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "focuskit", "focus", "--scores", "0,1,0,0", "--fallback-ess-floor", "1"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["selected_index"] == 1
