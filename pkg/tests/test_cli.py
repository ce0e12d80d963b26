import hashlib
import json
import subprocess
import sys

import pytest

from csl_lab.cli import SUBCOMMANDS, build_parser, experiment_seed, run

QUICK = {
    "collapse-traj": ["--trajectories", "400", "--steps", "20"],
    "offdiag": ["--samples", "2000", "--x-values", "0.5"],
    "correlator": ["--points", "3"],
    "rates": ["--mu-over-M", "0.1,1"],
    "vacuum-check": ["--pairs", "200"],
    "spread": ["--samples", "20000", "--geometry", "parallel", "--v0", "0.5"],
    "ladder": ["--samples", "500", "--orders", "12"],
    "identity-checks": ["--max-dim", "2"],
}


def invoke(tmp_path, name, *argv):
    out = tmp_path / name
    code = run([*argv, "--out", str(out)])
    return code, out


@pytest.mark.parametrize("command", sorted(QUICK))
def test_subcommand_writes_manifest(tmp_path, command):
    code, out = invoke(tmp_path, "a", command, *QUICK[command], "--seed", "5")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == command and manifest["status"] == "ok"
    assert manifest["seed"] == experiment_seed(5, command)
    assert (out / "config_echo.txt").read_text().startswith(f"# {command}\nseed = ")
    for name, digest in manifest["outputs"].items():
        data = (out / name).read_bytes()
        assert digest["sha256"] == hashlib.sha256(data).hexdigest()
        assert digest["git_blob"] == hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
    assert any(n.endswith(".csv") for n in manifest["outputs"])


@pytest.mark.parametrize("command", ["collapse-traj", "spread", "ladder", "offdiag"])
def test_outputs_are_deterministic(tmp_path, command):
    _, a = invoke(tmp_path, "a", command, *QUICK[command], "--seed", "99", "--format", "csv+svg")
    _, b = invoke(tmp_path, "b", command, *QUICK[command], "--seed", "99", "--format", "csv+svg")
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        if n != "manifest.json":
            assert (a / n).read_bytes() == (b / n).read_bytes(), n
    _, c = invoke(tmp_path, "c", command, *QUICK[command], "--seed", "100")
    csvs = [p.name for p in a.iterdir() if p.suffix == ".csv"]
    assert any((a / n).read_bytes() != (c / n).read_bytes() for n in csvs)


def test_svg_output(tmp_path):
    code, out = invoke(tmp_path, "a", "correlator", "--points", "3", "--format", "csv+svg")
    assert code == 0
    svg = (out / "correlator.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "correlator.svg" in json.loads((out / "manifest.json").read_text())["outputs"]


def test_spread_csv_columns(tmp_path):
    _, out = invoke(tmp_path, "a", *["spread", "--samples", "5000", "--bins", "10"])
    lines = (out / "spread.csv").read_text().splitlines()
    assert lines[0] == "r,count,theory_density"
    assert len(lines) == 11
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == 5000


def test_vacuum_tachyonic_prints_zero(tmp_path, capsys):
    code, out = invoke(tmp_path, "a", "vacuum-check", "--spectrum", "tachyonic", "--pairs", "100")
    assert code == 0
    text = (out / "vacuum.csv").read_text()
    row = text.splitlines()[1].split(",")
    assert row[0] == "tachyonic" and float(row[1]) == 0.0


def test_usage_errors_exit_3(tmp_path):
    for argv in (["bogus"], ["spread", "--seed", "-1"], ["spread", "--seed", "x"],
                 ["spread", "--geometry", "sideways"], [], ["ladder", "--scenario", "nope"]):
        with pytest.raises(SystemExit) as info:
            run(argv + ["--out", str(tmp_path / "u")])
        assert info.value.code == 3, argv


def test_bad_config_exits_3(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("speed = 3\n")
    assert run(["rates", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert run(["rates", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]) == 3


def test_contract_failures_exit_2(tmp_path):
    # below the ensemble minimum
    assert run(["spread", "--samples", "10", "--out", str(tmp_path / "a")]) == 2
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["status"].startswith("computation failed")
    # an impossible tolerance
    assert run(["correlator", "--points", "2", "--tol", "1e-300", "--out", str(tmp_path / "b")]) == 2
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["status"] == "tolerance exceeded"


def test_adversarial_orders_rounded_to_pairs(tmp_path):
    assert run(["ladder", "--scenario", "adversarial_backforth", "--orders", "3", "--out",
                str(tmp_path / "c")]) == 0
    assert len((tmp_path / "c" / "ladder.csv").read_text().splitlines()) == 1 + 4


def test_parser_lists_every_subcommand():
    text = build_parser().format_help()
    for name in SUBCOMMANDS:
        assert name in text
    args = build_parser().parse_args(["ladder", "--seed", "0x10", "--M-over-mu", "5"])
    assert args.seed == 16 and args.M_over_mu == 5.0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "csl_lab", "rates", "--mu-over-M", "0.5",
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "rates.csv").exists()
