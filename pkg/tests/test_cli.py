"""End-to-end command tests: configs in, artifacts and exit codes out."""

import csv
import json

import numpy as np
import pytest

from nlhomog.cli import main


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "schema_version": 1,
        "kind": "solve",
        "environment": {"dim": 1, "coeff_law": "fixed", "coeff_value": 1.0,
                        "forcing_law": "fixed", "forcing_value": 0.0},
        "kernel": {"sigma": 1.0},
        "numerics": {"eps_list": [0.25], "seeds": [0]},
        "experiment": {},
        "out_dir": str(tmp_path / "out"),
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_rows(out_dir):
    with open(out_dir / "rows.csv") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# happy paths

def test_trivial_solve_writes_all_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    for fname in ("rows.csv", "summary.json", "replay.json", "solution.csv"):
        assert (out / fname).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == 1
    assert summary["kind"] == "solve"
    assert summary["sup_norm"] == 0.0
    with open(out / "solution.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "u"]
    # the dense engine may emit negative zeros, so compare numerically
    assert all(float(r[1]) == 0.0 for r in rows[1:])
    assert "wrote" in capsys.readouterr().out


def test_wall_clock_column_is_pinned_without_timings(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", str(cfg)])
    rows = read_rows(tmp_path / "out")
    assert rows[0][-1] == "wall_ms"
    assert all(r[-1] == "0" for r in rows[1:])


def test_replay_pins_timings_off(tmp_path):
    cfg = write_config(tmp_path, timings=True)
    assert main(["run", str(cfg)]) == 0
    replay = json.loads((tmp_path / "out" / "replay.json").read_text())
    assert replay["timings"] is False
    assert replay["schema_version"] == 1


def test_replay_reproduces_run_byte_for_byte(tmp_path):
    cfg = write_config(
        tmp_path, kind="mbar",
        environment={"n_alpha": 2, "n_beta": 2, "coeff_law": "uniform",
                     "forcing_law": "uniform", "f_bound": 1.0},
        numerics={"eps_list": [0.25], "seeds": [0, 1, 2]},
        experiment={"phi_index": 4, "level": 12.0},
    )
    assert main(["run", str(cfg), "--workers", "2"]) == 0
    out1 = tmp_path / "out"
    out2 = tmp_path / "out2"
    assert main(["run", str(out1 / "replay.json"), "--out", str(out2),
                 "--workers", "1"]) == 0
    for fname in ("rows.csv", "summary.json"):
        assert (out1 / fname).read_bytes() == (out2 / fname).read_bytes()


def test_effective_run_with_check_gate(tmp_path):
    cfg = write_config(
        tmp_path, kind="effective",
        environment={"coeff_value": 1.5, "forcing_value": 0.25},
        experiment={"phi_index": 4},
    )
    assert main(["run", str(cfg), "--check"]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["width"] <= 2.0**-6 * (1 + 1e-9)
    lo, hi = summary["bracket"]
    assert lo <= summary["value"] <= hi


def test_check_gate_fails_on_stalled_corrector(tmp_path, capsys):
    # fixed environment two levels above its exact effective level: the
    # corrector sup norms stall at a positive floor, so the 10x decay
    # gate must fail (exit 4) while the artifacts are still written
    cfg = write_config(
        tmp_path, kind="corrector",
        environment={"coeff_value": 1.5, "forcing_value": 0.25},
        numerics={"eps_list": [0.125, 0.0625], "seeds": [0]},
        experiment={"phi_index": 4, "level": 40.0},
    )
    assert main(["run", str(cfg), "--check"]) == 4
    assert (tmp_path / "out" / "summary.json").exists()
    captured = capsys.readouterr()
    assert "FAIL sup-decays-10x" in captured.out
    assert json.loads(captured.err.splitlines()[-1])["error"]["type"] == "CheckFailure"


def test_check_suite_invariants(capsys):
    assert main(["check", "invariants"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out
    assert "FAIL" not in out


def test_unknown_suite_exits_2(capsys):
    assert main(["check", "nonsense"]) == 2
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"]["type"] == "ConfigurationError"


def test_missing_subcommand_is_an_argparse_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# config validation

@pytest.mark.parametrize("overrides", [
    {"bogus_key": 1},
    {"schema_version": 2},
    {"kind": "explode"},
    {"environment": {"flavor": "sour"}},
    {"kernel": {"sigma": 2.5}},
    {"numerics": {"eps_list": []}},
    {"numerics": {"eps_list": [4.0]}},
    {"numerics": {"seeds": []}},
    {"numerics": {"seeds": [-1]}},
    {"numerics": {"h": 0.25}},        # violates h <= eps_min / 4
    {"numerics": {"method": "magic"}},
    {"numerics": {"theta": 1.5}},
    {"experiment": {"rhs": 0.0, "shape": "triangle"}},
    {"experiment": {"exterior": "noise"}},
    {"workers": 0},
    {"out_dir": ""},
], ids=[
    "unknown-top-key", "schema-version", "unknown-kind", "unknown-env-key",
    "sigma-range", "empty-eps", "eps-above-one", "empty-seeds",
    "negative-seed", "h-vs-eps", "bad-method", "theta-range", "bad-shape",
    "bad-exterior", "zero-workers", "empty-out-dir",
])
def test_bad_configs_exit_2(tmp_path, capsys, overrides):
    cfg = write_config(tmp_path, **overrides)
    assert main(["run", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"]["type"] == "ConfigurationError"


def test_phi_index_bounds_checked(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="effective",
                       experiment={"phi_index": 99})
    assert main(["run", str(cfg)]) == 2
    assert "bank" in json.loads(
        capsys.readouterr().err.splitlines()[-1])["error"]["message"]


def test_required_experiment_fields(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="mbar", experiment={"phi_index": 4})
    assert main(["run", str(cfg)]) == 2
    msg = json.loads(capsys.readouterr().err.splitlines()[-1])["error"]["message"]
    assert "level" in msg


def test_cmi_scalar_class_requires_conjecture_flag(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="cmi")
    assert main(["run", str(cfg)]) == 2
    msg = json.loads(capsys.readouterr().err.splitlines()[-1])["error"]["message"]
    assert "conjecture" in msg


def test_unreadable_and_malformed_configs(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    for line in capsys.readouterr().err.splitlines():
        assert json.loads(line)["error"]["type"] == "ConfigurationError"


def test_solver_failure_exits_3(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        environment={"n_alpha": 2, "n_beta": 2, "coeff_law": "uniform",
                     "forcing_law": "uniform", "f_bound": 1.0},
        numerics={"solver_tol": 1e-300, "method": "sweeps"},
        experiment={"rhs": 0.05},
    )
    assert main(["run", str(cfg)]) == 3
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"]["type"] == "SolverError"
