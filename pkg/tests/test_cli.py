"""Command-line entry point."""
import json
import math

import pytest

from igabem.cli import EXIT_CONFIG, build_parser, main

_FAST = ["--quad-n", "10", "--quad-log-n", "10", "--quad-far-n", "8", "--eta-quad-n", "8", "--residual-k", "6"]


def _json(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.mark.parametrize("argv", [["version"], ["--version"]])
def test_version(argv, capsys):
    assert main(argv) == 0
    assert capsys.readouterr().out.startswith("igabem ")


def test_no_command_prints_help(capsys):
    assert main([]) == 0
    assert "usage: igabem" in capsys.readouterr().out


def test_parser_defaults_leave_config_to_run_config():
    args = build_parser().parse_args(["run"])
    assert args.geometry is None
    assert args.max_dofs is None
    assert not args.quiet


def test_geometry_command(capsys):
    assert main(["geometry", "circle", "--samples", "64"]) == 0
    data = _json(capsys)
    assert data["ok"] is True
    assert data["closed"] is True
    assert data["length"] == pytest.approx(math.pi)
    assert "pacman" in data["available"]


def test_geometry_unknown_name(capsys):
    assert main(["geometry", "moon"]) == EXIT_CONFIG
    data = _json(capsys)
    assert data["ok"] is False
    assert data["error"].startswith("unknown_geometry")


def test_run_writes_report(tmp_path, capsys):
    out = tmp_path / "slit.csv"
    code = main(["run", "--geometry", "slit", "--max-iters", "2", "--quiet", "--out", str(out), *_FAST])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.err == ""
    data = json.loads(captured.out)
    assert data["ok"] is True
    assert data["summary"]["stop_reason"] == "max_iters"
    assert data["last"]["iter"] == 2
    assert out.read_text(encoding="utf-8").startswith("# config: ")


def test_run_progress_on_stderr(capsys):
    assert main(["run", "--max-iters", "1", *_FAST]) == 0
    err = capsys.readouterr().err.splitlines()
    assert err[0].startswith("[adaptive] it=0 ")
    assert err[-1] == "[stop] max_iters after it=1"


@pytest.mark.parametrize(
    "argv, code",
    [
        (["run", "--geometry", "moon", "--quiet"], "unknown_geometry"),
        (["run", "--problem", "power", "--max-iters", "0", "--quiet", *_FAST], "estimator_needs_h1_data"),
        (["run", "--weights", "a,b", "--quiet"], "invalid_weights"),
        (["run", "--geometry", "circle", "--n0", "2", "--quiet"], "invalid_initial_size"),
    ],
)
def test_run_configuration_errors(argv, code, capsys):
    assert main(argv) == EXIT_CONFIG
    data = _json(capsys)
    assert data["ok"] is False
    assert code in data["error"]


def test_reference_on_circle(capsys):
    assert main(["reference", "--geometry", "circle", "--levels", "3", "--n0", "4"]) == 0
    data = _json(capsys)
    expected = 2.0 * math.pi / math.log(2.0)
    assert data["closed_form"] == pytest.approx(expected)
    assert data["reference_energy"] == pytest.approx(expected, rel=1e-6)
