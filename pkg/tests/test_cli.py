import csv
import json
import math
import subprocess
import sys
from types import SimpleNamespace

import pytest

from pnplayer import ConvergenceError
from pnplayer import cli
from pnplayer.analysis import CSV_COLUMNS, DiagnosticsRecorder
from pnplayer.cli import ConfigError, emit_diagnostics_csv, main, parse_config, run_scenario
from pnplayer.dynamics import initial_state, run


# -- config -------------------------------------------------------------------

def test_defaults_filled_in():
    s = parse_config('{"kind": "linear_decay", "epsilon": 1e-3}')
    assert s.params.gamma_eps == pytest.approx(6 * math.sqrt(1e-3))
    assert s.n_cells == 400 and s.T == 1.4 and s.dt is None and s.theta == 0.5
    assert s.eps_values() == [1e-3] and s.warnings == []
    snap = s.snapshot()
    assert snap["epsilon"] == 1e-3 and snap["kind"] == "linear_decay"


def test_sweep_uses_gamma_factor():
    s = parse_config({"kind": "steady", "sweep": [1e-3, 1e-2], "gamma_factor": 2.0})
    assert s.eps_values() == [1e-2, 1e-3]
    assert s.params_for(1e-3).gamma_eps == pytest.approx(2 * math.sqrt(1e-3))


@pytest.mark.parametrize("cfg,match", [
    ({"kind": "steady", "epsilon": 1e-3, "theta": 1.5}, r"\(0, 1\)"),
    ({"kind": "steady", "epsilon": 1e-3, "bogus": 1}, "bogus"),
    ({"kind": "steady"}, "epsilon"),
    ({"kind": "nope", "epsilon": 1e-3}, "kind"),
    ({"kind": "steady", "epsilon": -1.0}, "epsilon"),
    ({"kind": "steady", "epsilon": 1e-3, "n_cells": 33}, "n_cells"),
    ({"kind": "linear_decay", "epsilon": 1e-3, "T": 1.0, "dt": 0.3}, "dt"),
    ({"kind": "blowup_scan", "sweep": [1e-3]}, "sweep"),
    ({"kind": "steady", "sweep": [1e-3, 1e-2], "gamma_eps": 0.1}, "gamma_eps"),
    ({"kind": "energy_audit", "epsilon": 1e-3, "audit_dynamics": "both"}, "audit_dynamics"),
])
def test_config_errors_name_the_key(cfg, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(cfg)


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{epsilon: 1")


def test_subcommand_kind_conflict():
    with pytest.raises(ConfigError, match="kind"):
        parse_config({"kind": "steady", "epsilon": 1e-3}, kind="blowup_scan")


def test_below_threshold_warns_but_runs(tmp_path):
    s = parse_config({"kind": "linear_decay", "epsilon": 1e-3, "gamma_factor": 0.01,
                      "T": 0.01, "output_dir": str(tmp_path)})
    assert len(s.warnings) == 1 and "threshold" in s.warnings[0]
    m = run_scenario(s)
    assert m.warnings == s.warnings
    saved = json.loads((tmp_path / "manifest.json").read_text())
    assert saved["warnings"] == s.warnings


# -- CSV ----------------------------------------------------------------------

def test_csv_header_only_when_empty(tmp_path):
    p = emit_diagnostics_csv([], tmp_path / "d.csv")
    assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_csv_round_trips_exactly(tmp_path, ss3):
    from pnplayer.dynamics import make_initial_perturbation
    pert = make_initial_perturbation(ss3, 0.05, seed=5)
    traj = run(initial_state(ss3, pert, "linearized"), 0.005, 1e-3, DiagnosticsRecorder())
    p = emit_diagnostics_csv(traj.records, tmp_path / "d.csv")
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(traj.records)
    for r, row in zip(traj.records, rows):
        for c in CSV_COLUMNS:
            v = getattr(r, c)
            assert float(row[c]) == v or (math.isnan(v) and math.isnan(float(row[c])))


def test_csv_zero_perturbation_energy_column(tmp_path, ss3):
    traj = run(initial_state(ss3, None, "linearized"), 0.004, 1e-3, DiagnosticsRecorder())
    p = emit_diagnostics_csv(traj.records, tmp_path / "d.csv")
    with open(p) as fh:
        assert all(float(row["I"]) == 0.0 for row in csv.DictReader(fh))


# -- runs ---------------------------------------------------------------------

def _short(tmp_path, name, **kw):
    cfg = {"kind": "linear_decay", "epsilon": 1e-2, "n_cells": 200, "T": 0.05,
           "dt": 1e-3, "output_dir": str(tmp_path / name)}
    cfg.update(kw)
    return parse_config(cfg)


def test_runs_are_deterministic(tmp_path):
    a = run_scenario(_short(tmp_path, "a"))
    b = run_scenario(_short(tmp_path, "b"))
    assert a.outputs == b.outputs
    for name in a.outputs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_matches_serial(tmp_path, monkeypatch):
    kw_cfg = {"kind": "steady", "n_cells": 400, "sweep": [1e-2, 1e-3]}
    serial = run_scenario(parse_config(dict(kw_cfg, output_dir=str(tmp_path / "s"))))
    monkeypatch.setenv("PNP_LAYER_THREADS", "2")
    par = run_scenario(parse_config(dict(kw_cfg, output_dir=str(tmp_path / "p"))))
    assert serial.outputs == par.outputs and serial.checks == par.checks
    for name in serial.outputs:
        a = json.loads((tmp_path / "s" / name).read_text())
        b = json.loads((tmp_path / "p" / name).read_text())
        a.pop("solve_seconds"), b.pop("solve_seconds")
        assert a == b


def test_manifest_lists_existing_outputs(tmp_path):
    # long enough for the fit window to sit in the exponential regime
    m = run_scenario(_short(tmp_path, "m", T=0.3))
    assert m.exit_code == 0 and m.ok
    assert "decay_eps1e-02.csv" in m.outputs and "alpha_summary.csv" in m.outputs
    for name in m.outputs + ["manifest.json"]:
        assert (tmp_path / "m" / name).is_file()
    saved = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert saved["config"]["epsilon"] == 1e-2 and saved["exit_code"] == 0
    assert saved["resolutions"]["dt"] == {"eps1e-02": 1e-3}


def test_exit_ok(tmp_path):
    assert main(["steady", "--epsilon", "1e-2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "steady_report_eps1e-02.json").is_file()


def test_exit_check_failure(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "check_steady_estimates",
                        lambda ss: SimpleNamespace(checks=[], all_ok=False))
    assert main(["steady", "--epsilon", "1e-2", "--out", str(tmp_path)]) == 1
    saved = json.loads((tmp_path / "manifest.json").read_text())
    assert saved["checks"]["eps1e-02.estimates"] is False


def test_exit_numeric_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ConvergenceError("Newton stalled")
    monkeypatch.setattr(cli, "solve_pb", boom)
    assert main(["steady", "--epsilon", "1e-2", "--out", str(tmp_path)]) == 2
    saved = json.loads((tmp_path / "manifest.json").read_text())
    assert saved["errors"][0]["type"] == "ConvergenceError"


def test_exit_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"epsilon": 1e-3, "theta": 1.5}')
    assert main(["steady", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "theta" in capsys.readouterr().err
    assert main(["steady", "--config", str(tmp_path / "missing.json")]) == 3


def test_unresolvable_grid_is_config_error(tmp_path):
    m = run_scenario(parse_config({"kind": "steady", "epsilon": 1e-9, "n_cells": 32,
                                   "output_dir": str(tmp_path)}))
    assert m.exit_code == 3 and m.errors[0]["type"] == "UnresolvedLayerError"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pnplayer", "equiv", "--epsilon", "1e-2",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "all checks pass" in r.stdout
    rows = list(csv.DictReader(open(tmp_path / "norm_equivalence.csv")))
    assert len(rows) == 4 * 100
    assert all(0.1 <= float(x["ratio_delta"]) <= 1 + 1e-9 for x in rows)
