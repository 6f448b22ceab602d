import csv
import hashlib
import io
import json
import os
import subprocess
import sys

import pytest

from specwn.cli import HEADER, load_config, rows_to_csv, run_command, write_report
from specwn.errors import IoError, ParseError, TierError, ValidationError
from specwn.estimates import EstimateReport

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

HEAT = {
    "schema_version": 1,
    "symbol": {"kind": "FractionalLaplacian", "alpha": 2.0},
    "grid": {"d": 1, "R": 8.0, "nodes": 257},
    "T": 1.0,
    "N": 256,
    "u0": {"kind": "constant", "value": 1.0},
    "seed": 42,
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(argv):
    out = io.StringIO()
    code = run_command(argv, stdout=out)
    rows = list(csv.DictReader(io.StringIO(out.getvalue())))
    return code, rows, out.getvalue()


def digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- configuration


def test_minimal_heat_config_is_valid(tmp_path):
    cfg = load_config(write_cfg(tmp_path, HEAT))
    assert cfg.grid.R == 8.0 and cfg.N == 256 and cfg.seed == 42
    assert cfg.symbol.kind == "FractionalLaplacian"


def test_zero_steps_is_a_validation_error(tmp_path):
    with pytest.raises(ValidationError):
        load_config(write_cfg(tmp_path, {**HEAT, "N": 0}))


@pytest.mark.parametrize(
    "patch",
    [{"colour": 1}, {"schema_version": 2}, {"grid": {"d": 1, "R": 8.0, "nodes": 257, "extra": 1}}, {"symbol": {"kind": "Bogus"}}],
)
def test_schema_violations(tmp_path, patch):
    with pytest.raises(ValidationError):
        load_config(write_cfg(tmp_path, {**HEAT, **patch}))


def test_missing_required_key(tmp_path):
    cfg = dict(HEAT)
    del cfg["seed"]
    with pytest.raises(ValidationError):
        load_config(write_cfg(tmp_path, cfg))


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_config(str(p))


def test_random_symbol_without_envelope_for_simulate(tmp_path):
    cfg = {**HEAT, "symbol": {"kind": "RandomScaled", "base": {"kind": "FractionalLaplacian", "alpha": 2.0}, "lo": 0.5, "hi": 1.0}}
    path = write_cfg(tmp_path, cfg)
    with pytest.raises(TierError, match="envelope"):
        load_config(path, command="simulate")
    assert run(["simulate", "--config", path])[0] == 2


def test_shipped_configs_load():
    for name in sorted(os.listdir(CONFIGS)):
        cfg = load_config(os.path.join(CONFIGS, name))
        assert cfg.N >= 1


# ---------------------------------------------------------------- exit codes


def test_classify_prints_constants_and_tier(tmp_path):
    code, rows, _ = run(["classify", "--config", write_cfg(tmp_path, HEAT), "--R", "2", "--T", "1"])
    assert code == 0
    checks = {r["check"]: r for r in rows}
    for name in ("c_e_int_re", "c_e_abs_int_re", "c_e_int_sup_abs_re", "c_abs_psi", "c_sup_psi", "psi_inf", "tier"):
        assert name in checks
    assert float(checks["psi_inf"]["lhs"]) == pytest.approx(4.0)
    assert "Strong" in checks["tier"]["note"]
    assert list(rows[0].keys()) == list(HEADER)


def test_verify_heat(tmp_path):
    code, rows, _ = run(["verify", "--config", write_cfg(tmp_path, HEAT)])
    assert code == 0
    checks = {r["check"] for r in rows}
    assert {"residual", "residual_order", "uniqueness", "homogeneous"} <= checks


def test_estimate_exit_code_reflects_rows(tmp_path):
    cfg = {**HEAT, "grid": {"d": 1, "R": 2.0, "nodes": 33}, "N": 32, "paths": 3}
    code, rows, _ = run(["estimate", "--config", write_cfg(tmp_path, cfg)])
    assert code == 0
    assert all(r["pass"] == "true" for r in rows)


def test_failed_check_gives_exit_one(tmp_path):
    code, rows, _ = run(["verify", "--config", write_cfg(tmp_path, HEAT), "--residual-tol", "1e-30"])
    assert code == 1
    assert any(r["pass"] == "false" for r in rows)


@pytest.mark.parametrize("argv", [["frobnicate"], ["classify", "--bogus"], [], ["verify"]])
def test_usage_errors(argv):
    assert run(argv)[0] == 2


def test_parseval_and_bdg_without_config():
    code, rows, _ = run(["parseval", "--K", "64"])
    assert code == 0 and len(rows) == 10
    code, rows, _ = run(["bdg", "--integrand", "unit", "--paths", "2000", "--N", "64"])
    assert code == 0 and rows[0]["check"] == "ratio_unit"


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "specwn", "classify", "--config", write_cfg(tmp_path, HEAT), "--R", "2"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert out.stdout.splitlines()[0] == ",".join(HEADER)


# ---------------------------------------------------------------- reports


def test_empty_report_is_header_only(tmp_path):
    out = tmp_path / "r.csv"
    write_report([], str(out))
    assert out.read_text() == ",".join(HEADER) + "\n"
    summary = json.loads((tmp_path / "r.ndjson").read_text())
    assert summary["rows"] == [] and summary["all_pass"] is True


def test_one_estimate_row(tmp_path):
    out = tmp_path / "r.csv"
    write_report([EstimateReport("main_a_priori_2", 2.0, 1.0, {}, 0.1, 0.30000000000000004, 0.01, 100)], str(out))
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1
    assert float(rows[0]["margin"]) == pytest.approx(0.2)
    assert rows[0]["rhs"] == "0.30000000000000004"


def test_unwritable_report(tmp_path):
    with pytest.raises(IoError):
        write_report([], str(tmp_path / "missing" / "r.csv"))


def test_rows_to_csv_formats_floats():
    text = rows_to_csv([{"check": "x", "lhs": 1 / 3, "pass": True}])
    assert "0.33333333333333331" in text and "true" in text


def test_repeated_runs_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {**HEAT, "grid": {"d": 1, "R": 2.0, "nodes": 33}, "N": 32, "paths": 4, "tau": {"kind": "UniformRandom", "a": 0.3, "b": 1.0}})
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert run(["estimate", "--config", cfg, "--out", a])[0] == 0
    assert run(["estimate", "--config", cfg, "--out", b, "--threads", "3"])[0] == 0
    assert digest(a) == digest(b)
    assert digest(a[:-4] + ".ndjson") == digest(b[:-4] + ".ndjson")
    summary = json.loads(open(a[:-4] + ".ndjson").read())
    assert summary["seed"] == 42 and len(summary["config_hash"]) == 64


def test_simulate_writes_trajectories(tmp_path):
    cfg = write_cfg(tmp_path, {**HEAT, "grid": {"d": 1, "R": 2.0, "nodes": 5}, "N": 4})
    out = str(tmp_path / "sim.csv")
    assert run(["simulate", "--config", cfg, "--out", out])[0] == 0
    lines = open(str(tmp_path / "sim.trajectories.ndjson")).read().splitlines()
    assert len(lines) == 5 * 5
    assert set(json.loads(lines[0])) == {"path", "t", "xi", "re", "im", "re_H2", "im_H2"}
