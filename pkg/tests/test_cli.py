"""Command-line verbs: validate, ambiguity, sweep, and the plot script."""

import csv
import json
import argparse
import subprocess
import sys
from pathlib import Path

import pytest

from ddlink.cli import (
    SHIPPED_SPEC_NAMES,
    _resolve_spec_source,
    _resolve_workers,
    main,
    validation_checks,
)
from ddlink.errors import ConfigurationError
from ddlink.simulation import ExperimentSpec

TINY_YAML = """\
name: cli-tiny
schemes: [zak-otfs]
modes: [pilot]
snr_dbs: [10.0]
nu_maxes_hz: [815.0]
trials: 3
seed: 5
guard_bins: 1
"""


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One sweep over the tiny YAML spec, shared by the output-format tests."""
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "tiny.yaml"
    spec_path.write_text(TINY_YAML)
    out_dir = root / "run"
    assert main(["sweep", "--spec", str(spec_path), "--out", str(out_dir)]) == 0
    return spec_path, out_dir


# ---------------------------------------------------------------------------
# validate


def test_validation_checks_all_green():
    checks = validation_checks(seed=0, thumbtack_trials=200)
    assert len(checks) == 6
    failed = [c.name for c in checks if not c.passed]
    assert not failed, f"self-checks failed: {failed}"


def test_validate_verb(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "all 6 checks passed" in out
    assert out.count("PASS") == 6


# ---------------------------------------------------------------------------
# ambiguity


def test_ambiguity_verb_writes_surface(tmp_path, capsys):
    out = tmp_path / "surface.csv"
    code = main(["ambiguity", "--scheme", "zak-otfs", "--trials", "40",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    with out.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "l", "re", "im", "abs"]
    assert len(rows) == 1 + 208 * 208
    origin = rows[1]
    assert origin[:2] == ["0", "0"]
    assert float(origin[4]) == pytest.approx(1.0, abs=1e-9)
    assert str(out) in capsys.readouterr().out


def test_ambiguity_verb_rejects_unknown_scheme(tmp_path):
    with pytest.raises(SystemExit):
        main(["ambiguity", "--scheme", "gfdm", "--out", str(tmp_path / "x.csv")])


# ---------------------------------------------------------------------------
# sweep


def test_sweep_outputs(tiny_run):
    _, out_dir = tiny_run
    results = out_dir / "results.csv"
    manifest_path = out_dir / "manifest.json"
    assert results.is_file() and manifest_path.is_file()

    manifest = json.loads(manifest_path.read_text())
    assert manifest["kind"] == "ddlink-sweep-manifest"
    assert manifest["format_version"] == 1
    assert manifest["experiment"]["name"] == "cli-tiny"
    assert manifest["experiment"]["trials"] == 3
    assert manifest["outputs"]["results_csv"] == "results.csv"
    assert manifest["degraded_cells"] == []

    with results.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["scheme"] == "zak-otfs"
    assert rows[0]["trials"] == "3"


def test_manifest_replay_is_byte_identical(tiny_run, tmp_path):
    _, out_dir = tiny_run
    replay_dir = tmp_path / "replay"
    code = main(["sweep", "--manifest", str(out_dir / "manifest.json"),
                 "--out", str(replay_dir)])
    assert code == 0
    original = (out_dir / "results.csv").read_bytes()
    assert (replay_dir / "results.csv").read_bytes() == original


def test_sweep_trials_override(tiny_run, tmp_path):
    spec_path, _ = tiny_run
    out_dir = tmp_path / "short"
    assert main(["sweep", "--spec", str(spec_path), "--trials", "2",
                 "--out", str(out_dir)]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["experiment"]["trials"] == 2
    with (out_dir / "results.csv").open(newline="") as fh:
        assert all(row["trials"] == "2" for row in csv.DictReader(fh))


def test_sweep_unknown_name_exits_2(tmp_path, capsys):
    code = main(["sweep", "--spec", "nope-not-real", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "cannot resolve" in capsys.readouterr().err


def test_sweep_spec_and_manifest_conflict(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", "--spec", "fig5", "--manifest", "m.json",
              "--out", str(tmp_path / "o")])


def test_shipped_specs_parse():
    assert SHIPPED_SPEC_NAMES == ("fig3a", "fig4", "fig5")
    for name in SHIPPED_SPEC_NAMES:
        spec = ExperimentSpec.from_mapping(_resolve_spec_source(name))
        assert spec.name == name
        assert spec.trials >= 800


# ---------------------------------------------------------------------------
# worker resolution


def test_workers_flag_wins(monkeypatch):
    monkeypatch.setenv("DDLINK_WORKERS", "7")
    assert _resolve_workers(argparse.Namespace(workers=2)) == 2
    assert _resolve_workers(argparse.Namespace(workers=0)) == 1  # clamped


def test_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("DDLINK_WORKERS", "3")
    assert _resolve_workers(argparse.Namespace(workers=None)) == 3
    monkeypatch.setenv("DDLINK_WORKERS", "zebra")
    with pytest.raises(ConfigurationError, match="DDLINK_WORKERS"):
        _resolve_workers(argparse.Namespace(workers=None))
    monkeypatch.delenv("DDLINK_WORKERS")
    assert _resolve_workers(argparse.Namespace(workers=None)) == 1


# ---------------------------------------------------------------------------
# plot script


def test_plot_script_writes_pngs(tiny_run, tmp_path):
    pytest.importorskip("matplotlib")
    _, out_dir = tiny_run
    script = Path(__file__).resolve().parents[1] / "scripts" / "plot_results.py"
    proc = subprocess.run(
        [sys.executable, str(script), str(out_dir / "results.csv"),
         "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    pngs = sorted(p.name for p in tmp_path.glob("*.png"))
    assert pngs == ["results_ber.png", "results_nmse.png", "results_se.png"]
