import csv
import io
import json
import math
import subprocess
import sys

import pytest

from qsqueeze import __version__, cli
from qsqueeze.errors import ConfigurationError


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _csv_rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_fig3_default_variance_law(capsys):
    code, out, _ = _run(["run", "fig3"], capsys)
    assert code == 0
    rows = _csv_rows(out)
    row = next(r for r in rows if r["s"] == "64" and float(r["phi"]) == 0.159)
    assert float(row["var_law"]) == pytest.approx(0.1338, abs=1e-4)
    assert abs(float(row["var_most_likely"]) / float(row["var_law"]) - 1) < 0.02


def test_distribution_weights_normalized(capsys):
    code, out, _ = _run(["run", "distribution", "--s", "64", "--phi", "0.159"], capsys)
    assert code == 0
    rows = _csv_rows(out)
    assert len(rows) == 65
    assert sum(float(r["weight"]) for r in rows) == pytest.approx(1.0, abs=1e-8)


def test_csv_header_metadata(capsys):
    _, out, _ = _run(["run", "distribution", "--s", "4"], capsys)
    header = [line for line in out.splitlines() if line.startswith("#")]
    assert header[0] == f"# qsqueeze {__version__}"
    digest = next(h for h in header if h.startswith("# config_sha256: ")).split(": ")[1]
    config = json.loads(next(h for h in header if h.startswith("# config: "))[len("# config: "):])
    assert cli.config_digest(config) == digest
    assert config["parameters"]["s"] == 4


def test_json_lines_fields_match_csv(capsys):
    _, out_csv, _ = _run(["run", "distribution", "--s", "6"], capsys)
    _, out_json, _ = _run(["run", "distribution", "--s", "6", "--format", "json-lines"], capsys)
    lines = out_json.splitlines()
    meta = json.loads(lines[0])["meta"]
    assert meta["experiment"] == "distribution" and meta["version"] == __version__
    records = [json.loads(line) for line in lines[1:]]
    csv_rows = _csv_rows(out_csv)
    assert list(records[0]) == list(csv_rows[0])
    for rec, row in zip(records, csv_rows):
        assert rec["weight"] == pytest.approx(float(row["weight"]), rel=1e-15)


def test_validation_messages():
    with pytest.raises(ConfigurationError) as exc:
        cli.validate({"experiment": "fig2", "parameters": {"phi": -0.1, "bogus": 1}})
    messages = str(exc.value).split("\n")
    assert "phi must be positive" in messages
    assert any("bogus" in m for m in messages)
    with pytest.raises(ConfigurationError):
        cli.validate({"experiment": "nope"})
    with pytest.raises(ConfigurationError):
        cli.validate({"experiment": "fig2", "output": {"format": "xml"}})


def test_derived_pulse_window():
    resolved = cli.validate({"experiment": "dephasing_scan"})
    p = resolved["parameters"]
    assert p["t_e"] == pytest.approx(1.25e-7, rel=1e-12)
    assert p["phi"] == pytest.approx(2 / math.pi * 1e6 * 1.25e-7, rel=1e-12)
    with pytest.raises(ConfigurationError, match="inconsistent"):
        cli.validate({"experiment": "dephasing_scan", "parameters": {"t_e": 1e-7}})


def test_flux_bias_accepted():
    eps = 2 * math.pi * math.sqrt(10.8**2 - 4**2) * 1e9
    resolved = cli.validate({"experiment": "lindblad_run", "parameters": {"epsilon": eps}})
    assert resolved["parameters"]["epsilon"] == eps
    assert eps == pytest.approx(2 * math.pi * 10.03e9, rel=1e-3)
    derived = cli.validate({"experiment": "lindblad_run"})["parameters"]["epsilon"]
    assert derived == pytest.approx(eps, rel=1e-12)
    with pytest.raises(ConfigurationError):
        cli.validate({"experiment": "lindblad_run", "parameters": {"epsilon": 2 * math.pi * 9e9}})


def test_round_trip_and_overrides(tmp_path, capsys):
    first = tmp_path / "dist.csv"
    assert _run(["run", "distribution", "--s", "8", "--out", str(first)], capsys)[0] == 0
    code, out, _ = _run(["validate", str(first)], capsys)
    assert code == 0
    resolved = json.loads(out)
    assert resolved["parameters"]["s"] == 8
    second = tmp_path / "again.csv"
    assert _run(["run", "--config", str(first), "--out", str(second)], capsys)[0] == 0
    body = lambda path: [l for l in path.read_text().splitlines() if not l.startswith("# config")]
    assert body(first) == body(second)
    code, out, _ = _run(["validate", str(first), "--phi", "0.2", "--set", "alpha0=0.5"], capsys)
    params = json.loads(out)["parameters"]
    assert params["phi"] == 0.2 and params["alpha0"] == 0.5 and params["s"] == 8


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"experiment": "variance_scan", "parameters": {"s_max": 6}}))
    code, out, _ = _run(["run", "--config", str(cfg)], capsys)
    assert code == 0
    assert [r["s"] for r in _csv_rows(out)] == ["2", "4", "6"]


def test_multi_table_outputs(tmp_path, capsys):
    out = tmp_path / "f1.csv"
    argv = ["run", "fig1", "--n-traj", "3", "--s", "20", "--seed", "4", "--out", str(out)]
    assert _run(argv, capsys)[0] == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["f1_corr.csv", "f1_hist.csv", "f1_steps.csv"]
    assert len(_csv_rows((tmp_path / "f1_steps.csv").read_text())) == 60


def test_exit_codes(capsys):
    code, _, err = _run(["run", "fig2", "--phi", "-0.1"], capsys)
    assert code == cli.EXIT_VALIDATION
    assert json.loads(err)["messages"] == ["phi must be positive"]
    code, _, err = _run(["run", "distribution", "--s", "64", "--phi", "0.08", "--precision", "double"], capsys)
    assert code == cli.EXIT_NUMERIC and "PrecisionError" in err
    code, _, err = _run(["run", "fig2", "--dim", "12"], capsys)
    assert code == cli.EXIT_TRUNCATION and json.loads(err)["error"] == "truncation"
    assert _run(["run"], capsys)[0] == cli.EXIT_VALIDATION
    assert _run(["run", "fig2", "--set", "phi"], capsys)[0] == cli.EXIT_VALIDATION


def test_same_seed_same_bytes(capsys):
    argv = ["run", "trajectories", "--n-traj", "5", "--s", "30", "--seed", "11"]
    a = _run(argv, capsys)[1]
    b = _run(argv, capsys)[1]
    c = _run(argv[:-1] + ["12"], capsys)[1]
    assert a == b
    assert a != c


def test_module_entry_point():
    done = subprocess.run(
        [sys.executable, "-m", "qsqueeze", "run", "derivation_checks", "--s", "8", "--format", "json-lines"],
        capture_output=True, text=True, check=False,
    )
    assert done.returncode == 0, done.stderr
    statuses = {json.loads(line)["status"] for line in done.stdout.splitlines()[1:]}
    assert statuses <= {"PASS", "INFO"}
