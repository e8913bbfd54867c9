import json

import pytest

from fracneumann import cli
from fracneumann.config import ConfigError, apply_overrides, from_dict, load, validate
from fracneumann.io import OUTPUT_ROOT_ENV, read_csv

SOLVE = {"mode": "solve", "domain": "interval", "bounds": [-1.0, 1.0], "s": 0.25, "p": 2.0, "eps": 0.2,
         "h_per_eps": 8, "tol": 1e-8, "seed": 0, "plots": False}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, command, doc, *extra):
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "out"
    return cli.main([*command, "--config", cfg, "--output-dir", str(out), *extra]), out


def test_solve_writes_report(tmp_path):
    code, out = run(tmp_path, ["solve"], SOLVE)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["mode"] == "solve"
    row = rep["tables"]["solve"]["rows"][0]
    assert row["c_eps"] > 0 and row["min_value"] >= 0
    assert rep["provenance"]["seed"] == 0
    assert rep["provenance"]["config"]["eps"] == 0.2
    assert (out / "checks.csv").exists() and (out / "profile.dat").exists()


def test_solve_renders_png(tmp_path):
    code, out = run(tmp_path, ["solve"], dict(SOLVE, plots=True))
    assert code == 0
    assert (out / "profile.png").stat().st_size > 0


def test_synthetic_sweep_slope(tmp_path):
    doc = {"mode": "sweep", "domain": "interval", "bounds": [-1.0, 1.0], "s": 0.25, "p": 2.0,
           "eps_list": [0.4, 0.2, 0.1, 0.05], "synthetic": True, "plots": False}
    code, out = run(tmp_path, ["sweep"], doc)
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    assert [r["slope"] for r in rows][0] == ""
    assert all(float(r["slope"]) == pytest.approx(1.0, abs=1e-12) for r in rows[1:])


def test_missing_key_is_config_error(tmp_path, capsys):
    doc = {k: v for k, v in SOLVE.items() if k != "s"}
    code, _ = run(tmp_path, ["solve"], doc)
    assert code == 2
    assert "'s'" in capsys.readouterr().err


def test_invalid_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"mode": "solve",\n "s": }')
    assert cli.main(["solve", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        from_dict(dict(SOLVE, epsilon=0.1), "solve")


@pytest.mark.parametrize("overrides, expect", [
    ({"domain": "disk", "center": [0.0, 0.0], "radius": 1.0, "s": 0.5}, None),
    ({"domain": "disk", "center": [0.0, 0.0], "radius": 1.0, "s": 0.5, "p": 4.0}, "subcritical"),
    ({"eps": 0.5}, "tent"),
])
def test_validate(overrides, expect):
    doc = {k: v for k, v in SOLVE.items() if k != "bounds" or "domain" not in overrides}
    diags = validate(from_dict(dict(doc, **overrides), "solve"))
    if expect is None:
        assert diags == []
    else:
        assert any(expect in d for d in diags)


def test_validate_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(SOLVE, eps=0.5))
    assert cli.main(["validate", "--config", cfg]) == 1
    assert "tent" in capsys.readouterr().out
    cfg = write_config(tmp_path, SOLVE, "ok.json")
    assert cli.main(["validate", "--config", cfg]) == 0


def test_set_overrides(tmp_path):
    raw = apply_overrides(dict(SOLVE), ["eps=0.1", "init=constant", "bounds=[0, 2]"])
    assert raw["eps"] == 0.1 and raw["init"] == "constant" and raw["bounds"] == [0, 2]
    with pytest.raises(ConfigError):
        apply_overrides(dict(SOLVE), ["eps"])
    cfg = load(write_config(tmp_path, SOLVE), "solve", ["p=1.5"])
    assert cfg.p == 1.5


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SOLVE)
    for d in ("a", "b"):
        assert cli.main(["solve", "--config", cfg, "--output-dir", str(tmp_path / d)]) == 0
    for name in ("solve.csv", "field.csv", "checks.csv", "profile.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = write_config(tmp_path, SOLVE)
    assert cli.main(["solve", "--config", cfg, "--output-dir", "rel"]) == 0
    assert (tmp_path / "root" / "rel" / "report.json").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_config(tmp_path, SOLVE)
    assert cli.main(["solve", "--config", cfg, "--output-dir", str(blocker / "sub")]) == 2
