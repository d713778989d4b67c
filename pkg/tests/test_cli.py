import csv
import json

import pytest
from scipy.special import jn_zeros

from tocloak.cli import (
    ENERGY_HEADER,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    SWEEP_HEADER,
    ConfigError,
    main,
    parse_config,
)


def _write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def _run(tmp_path, doc, *extra, out="out.csv"):
    cfg = _write(tmp_path, doc)
    return main(["--config", str(cfg), "--output", str(tmp_path / out), *extra])


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, {"command": "cloak-sweep"}))
    assert cfg.omega == 1.0
    assert cfg.solver.n_max == 16
    assert cfg.solver.type == "spectral"


@pytest.mark.parametrize("doc,key", [
    ({"command": "cloak-sweep", "omegaa": 1.0}, "omegaa"),
    ({"command": "cloak-sweep", "cloak": {"epsilon": 1.5}}, "cloak.epsilon"),
    ({"command": "cloak-sweep", "background": {"A": "banana"}}, "background.A"),
    ({"command": "launch"}, "command"),
    ({"command": "general-cloak", "cloak": {"G": {"type": "affine", "matrix": [[1, 0], [0, -1]]}}}, "cloak.G"),
])
def test_config_errors_name_the_key(tmp_path, doc, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(_write(tmp_path, doc))


def test_invalid_config_exits_2(tmp_path, capsys):
    assert _run(tmp_path, {"command": "dtn", "omega": -1}) == EXIT_CONFIG
    assert "omega" in capsys.readouterr().err


def test_cloak_sweep_outputs_and_serial_determinism(tmp_path):
    doc = {"command": "cloak-sweep", "solver": {"n_max": 3}, "cloak": {"epsilon": [0.1, 0.01]}}
    assert _run(tmp_path, doc, "--serial", out="a.csv") == EXIT_OK
    assert _run(tmp_path, doc, "--serial", out="b.csv") == EXIT_OK
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_modes.csv").read_bytes() == (tmp_path / "b_modes.csv").read_bytes()
    assert ",".join(_header(a)) == "epsilon,mode,lambda_bg_re,lambda_bg_im,lambda_cloak_re,lambda_cloak_im,abs_err"
    assert _header(a) == SWEEP_HEADER
    rows = list(csv.reader(open(a)))[1:]
    assert [float(r[0]) for r in rows] == [0.1, 0.01]
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["results"]["strictly_decreasing"] is True
    assert summary["mode"] == "serial"


def test_parallel_run_matches_serial(tmp_path):
    doc = {"command": "cloak-sweep", "solver": {"n_max": 3}, "cloak": {"epsilon": [0.1, 0.01]}}
    assert _run(tmp_path, doc, "--serial", out="s.csv") == EXIT_OK
    assert _run(tmp_path, doc, out="p.csv") == EXIT_OK
    s = list(csv.reader(open(tmp_path / "s.csv")))[1:]
    p = list(csv.reader(open(tmp_path / "p.csv")))[1:]
    for rs, rp in zip(s, p):
        assert all(abs(float(x) - float(y)) <= 1e-12 * max(1.0, abs(float(x))) for x, y in zip(rs, rp))
    assert "reproducibility" in json.loads((tmp_path / "p.summary.json").read_text())


def test_mesh_command_round_trips(tmp_path):
    assert _run(tmp_path, {"command": "mesh", "solver": {"h": 0.2}}, out="disk.mesh") == EXIT_OK
    summary = json.loads((tmp_path / "disk.summary.json").read_text())
    assert summary["results"]["round_trip"] is True
    assert (tmp_path / "disk.mesh").read_text().startswith("meshfmt 1\n")


def test_energy_decay_command(tmp_path):
    assert _run(tmp_path, {"command": "energy-decay", "cloak": {"epsilon": [0.01, 0.0001]}}) == EXIT_OK
    assert _header(tmp_path / "out.csv") == ENERGY_HEADER


def test_verify_thm2_reports_hidden_conditions(tmp_path):
    doc = {"command": "verify-thm2", "cloak": {"epsilon": 0.0}, "solver": {"type": "decoupled", "h": 0.1},
           "boundary": "angular-mode:0,1.0"}
    assert _run(tmp_path, doc) == EXIT_OK
    rows = dict(csv.reader(open(tmp_path / "out.csv")))
    assert float(rows["trace_constant_deviation"]) <= 1e-10


def test_incompatible_interior_source_exits_nonzero(tmp_path):
    doc = {"command": "verify-thm2", "omega": float(jn_zeros(1, 1)[0]), "cloak": {"epsilon": 0.0},
           "solver": {"type": "decoupled", "h": 0.1}, "interior": {"source": "gaussian:0.2,0.1,0.2,1.0"}}
    assert _run(tmp_path, doc) == EXIT_SOLVER
    summary = json.loads((tmp_path / "out.summary.json").read_text())
    assert "orthogonal" in summary["results"]["condition"]
    assert summary["results"]["null_dim"] == 3


def test_general_cloak_requires_map(tmp_path):
    assert _run(tmp_path, {"command": "general-cloak"}) == EXIT_CONFIG
