import csv
import io
import json

import pytest

from trimspec import cli


def _rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def _run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_delta_lower(capsys):
    code, out, _ = _run(capsys, "bounds", "--no-timestamp", "--param", "d=1", "--param", "K=2", "--param", "Q=1")
    assert code == 0
    row = next(r for r in _rows(out) if r["bound"] == "delta_lower")
    assert float(row["value"]) == pytest.approx(1 / 81, abs=1e-15)
    assert row["valid"] == "true"


def test_bounds_kappa_rows(capsys):
    code, out, _ = _run(capsys, "bounds", "--param", "d=1", "--param", "K=2", "--param", "E1=0.006172839506172839")
    assert code == 0
    assert out.startswith("# generated ")
    rows = {r["bound"]: r for r in _rows(out)}
    assert float(rows["kappa_lb"]["value"]) == pytest.approx(0.2 * (3 * (1 + 1.25 * (2 ** (1 / 3) - 1))) ** -4)


def test_gsenergy_example(capsys):
    code, out, _ = _run(capsys, "gsenergy", "--no-timestamp", "--param", "d=1", "--param", "gamma=3",
                        "--param", "L=31", "--param", "mode=trimmed", "--param", "expected=1.0")
    assert code == 0
    (row,) = _rows(out)
    assert abs(float(row["energy"]) - 1.0) <= 1e-10 and row["ok"] == "true"


def test_gsenergy_mismatch_exits_1(capsys):
    code, _, err = _run(capsys, "gsenergy", "--param", "gamma=3", "--param", "L=31", "--param", "mode=trimmed",
                        "--param", "expected=1.5")
    assert code == 1 and "violation" in err


def test_wegner_below_spectrum(capsys):
    code, out, _ = _run(capsys, "wegner", "--no-timestamp", "--param", "gamma=2", "--param", "L=50",
                        "--param", "lambda=2", "--param", "I=[-1,-0.5]", "--param", "E1=0.5",
                        "--param", "n_samples=50")
    assert code == 0
    (row,) = _rows(out)
    assert float(row["empirical_mean"]) == 0 and row["passed"] == "true"


@pytest.mark.parametrize("argv, param", [
    (["wegner", "--param", "gamma=2", "--param", "L=20", "--param", "I=[0,0.1]", "--param", "E1=3"], "E1"),
    (["wegner", "--param", "gamma=2", "--param", "L=20", "--param", "E1=0.5"], "I"),
    (["bounds", "--param", "d=1", "--param", "K=2", "--param", "Q=5"], "Q"),
    (["bounds", "--param", "K=2"], "d"),
    (["gsenergy", "--param", "L=5", "--param", "mode=sideways"], "mode"),
    (["gsenergy", "--param", "L=5", "--param", "mode=penalized", "--param", "gamma=2"], "t"),
    (["wegner", "--param", "gamma=2", "--param", "L=20", "--param", "I=[0,0.1]", "--param", "E1=0.5",
      "--param", "lambda=-1"], "lambda"),
    (["wegner", "--param", "gamma=2", "--param", "L=20", "--param", "I=[0,0.1]", "--param", "E1=0.5",
      "--param", 'dists={"kind":"cauchy"}'], "dists"),
    (["gsmc", "--param", "gamma=2", "--param", "L=10", "--param", 'dists={"kind":"uniform","a":0.5,"b":1}'],
     "dists"),
    (["cheeger", "--param", "gamma=2", "--param", "L=60"], "L"),
    (["pvp", "--param", "gamma=2", "--param", "L=20", "--param", "E1=0.5"], "E1"),
    (["bounds", "--param", "d=1", "--param", "K=2", "--param", "oops"], "param"),
    (["bounds", "--param", "d=1", "--param", "K=2", "--seed", "-3"], "seed"),
    (["bounds", "--config", "/nonexistent/config.json"], "config"),
])
def test_invalid_config_names_parameter(capsys, argv, param):
    code, _, err = _run(capsys, *argv)
    assert code == 2
    assert f"invalid config: {param}:" in err


def test_verify_bad_level(capsys):
    for level in ("", "bogus"):
        code, _, err = _run(capsys, "verify", "--level", level)
        assert code == 2 and "level" in err


def test_unknown_command_rejected():
    with pytest.raises(SystemExit) as exc:
        cli.run(["explode"])
    assert exc.value.code == 2


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "bounds", "params": {"d": 2, "K": 3, "Q": 1}}))
    code, out, _ = _run(capsys, "bounds", "--config", str(cfg), "--no-timestamp", "--param", "d=1")
    assert code == 0
    row = next(r for r in _rows(out) if r["bound"] == "delta_lower")
    assert row["d"] == "1" and row["K"] == "3"
    wrong = tmp_path / "w.json"
    wrong.write_text(json.dumps({"command": "gsmc", "params": {}}))
    code, _, err = _run(capsys, "bounds", "--config", str(wrong))
    assert code == 2 and "command" in err


def test_outputs_are_reproducible(tmp_path, capsys):
    argv = ["wegner", "--param", "gamma=2", "--param", "L=20", "--param", "I=[0,0.3]", "--param", "E1=0.5",
            "--param", "n_samples=20", "--seed", "5", "--no-timestamp"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(argv + ["--out", str(a)]) == 0
    assert cli.run(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()
    summary = json.loads(a.with_suffix(".json").read_text())
    assert summary["seed"] == 5 and summary["command"] == "wegner"
    c = tmp_path / "c.csv"
    assert cli.run(argv[:-1] + ["--out", str(c)]) == 0
    text = c.read_text()
    assert text.startswith("# generated ")
    assert text.split("\n", 1)[1] == a.read_text()
    capsys.readouterr()


def test_seed_changes_output(tmp_path):
    base = ["specavg", "--param", "gamma=2", "--param", "L=12", "--param", "n_intervals=3", "--no-timestamp"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.run(base + ["--seed", "1", "--out", str(a)])
    cli.run(base + ["--seed", "2", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_float_format_round_trips(capsys):
    code, out, _ = _run(capsys, "bounds", "--no-timestamp", "--param", "d=1", "--param", "K=2")
    row = next(r for r in _rows(out) if r["bound"] == "delta_lower")
    assert float(row["value"]) == 1 / 81


def test_curve_command(capsys):
    code, out, _ = _run(capsys, "curve", "--no-timestamp", "--param", "gamma=2", "--param", "L=6",
                        "--param", "t_grid=[0,0.5,1,2,4]")
    assert code == 0
    rows = _rows(out)
    assert [float(r["t"]) for r in rows] == [0, 0.5, 1, 2, 4]
    assert all(r["ok"] == "true" for r in rows)
    E = [float(r["energy"]) for r in rows]
    assert E == sorted(E)


def test_cheeger_command(capsys):
    code, out, _ = _run(capsys, "cheeger", "--no-timestamp", "--param", "gamma=3", "--param", "L=7")
    assert code == 0
    (row,) = _rows(out)
    assert float(row["value"]) >= float(row["floor"])
    code, out, _ = _run(capsys, "cheeger", "--no-timestamp", "--param", "gamma=2", "--param", "L=5",
                        "--param", "mode=penalized", "--param", "t=[0.5,1,3]")
    vals = [float(r["value"]) for r in _rows(out)]
    assert code == 0 and vals == sorted(vals)


def test_pvp_command(capsys):
    code, out, _ = _run(capsys, "pvp", "--no-timestamp", "--param", "gamma=2", "--param", "L=30",
                        "--param", "lambda=0.002", "--param", "E1=0.0122", "--param", "n_samples=10")
    assert code == 0
    assert all(r["ok"] == "true" for r in _rows(out))
    code, out, _ = _run(capsys, "pvp", "--no-timestamp", "--param", "gamma=2", "--param", "L=30",
                        "--param", "E1=0.5", "--param", "kappa_mode=numeric", "--param", "n_samples=3")
    assert code == 0


def test_specavg_command(capsys):
    code, out, _ = _run(capsys, "specavg", "--no-timestamp", "--param", "gamma=2", "--param", "L=20",
                        "--param", "intervals=[[1.0,1.05]]", "--param", "zeta=[4]")
    assert code == 0
    (row,) = _rows(out)
    assert float(row["bound"]) == pytest.approx(0.4)


def test_gsmc_command(capsys):
    code, out, _ = _run(capsys, "gsmc", "--no-timestamp", "--param", "gamma=2", "--param", "L=40",
                        "--param", "L_list=[10,20,40]", "--param", "n_samples=40")
    assert code == 0
    mins = [float(r["min"]) for r in _rows(out)]
    assert mins == sorted(mins, reverse=True)


def test_verify_fast(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code, _, err = _run(capsys, "verify", "--level", "fast", "--seed", "0", "--no-timestamp", "--out", str(out))
    assert code == 0
    rows = _rows(out.read_text())
    assert {r["id"] for r in rows} == {"1", "4", "9", "10"}
    assert err.count("[PASS]") == 4
    summary = json.loads(out.with_suffix(".json").read_text())
    assert all(r["passed"] for r in summary["results"])


def _documented_columns():
    import re
    from pathlib import Path

    text = (Path(__file__).resolve().parents[1] / "README.md").read_text(encoding="utf-8")
    table = text.split("## CSV columns", 1)[1]
    cols = {}
    for line in table.splitlines():
        cells = [c.strip() for c in line.strip("|").split("|")]
        if len(cells) >= 3 and cells[0] and not cells[0].startswith("-"):
            cols.setdefault(cells[0], set()).update(re.findall(r"`([A-Za-z0-9_]+)`", cells[1]))
    return cols


@pytest.mark.parametrize("argv", [
    ["bounds", "--param", "d=1", "--param", "K=2", "--param", "t=[1]", "--param", "E1=0.001"],
    ["gsenergy", "--param", "gamma=3", "--param", "L=9", "--param", "mode=penalized", "--param", "t=1",
     "--param", "expected=0.5", "--param", "check_tol=10"],
    ["curve", "--param", "gamma=2", "--param", "L=6", "--param", "t_grid=[0,1]"],
    ["cheeger", "--param", "gamma=2", "--param", "L=5"],
    ["wegner", "--param", "gamma=2", "--param", "L=10", "--param", "I=[0,0.1]", "--param", "E1=0.5",
     "--param", "n_samples=2"],
    ["pvp", "--param", "gamma=2", "--param", "L=10", "--param", "E1=0.5", "--param", "kappa_mode=numeric",
     "--param", "n_samples=2"],
    ["specavg", "--param", "gamma=2", "--param", "L=10", "--param", "n_intervals=1"],
    ["gsmc", "--param", "gamma=2", "--param", "L=10", "--param", "n_samples=2"],
    ["verify", "--level", "fast"],
])
def test_every_column_is_documented(capsys, argv):
    code, out, _ = _run(capsys, *argv, "--no-timestamp")
    assert code == 0
    header = next(ln for ln in out.splitlines() if not ln.startswith("#")).split(",")
    assert set(header) <= _documented_columns()[argv[0]]
