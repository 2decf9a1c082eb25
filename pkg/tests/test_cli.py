import json
from pathlib import Path

import pytest
import tomli_w

from apfplatoon.cli import main
from apfplatoon.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write(tmp_path, doc, name="s.toml"):
    p = tmp_path / name
    p.write_text(tomli_w.dumps(doc))
    return p


def small(**sections):
    doc = {
        "name": "small",
        "platoon": {"n": 3, "spacings": [10.0]},
        "model": {"family": "linear_drag", "c1": 0.5},
        "controller": {"beta": 1.0, "apf_amplitude": 1.0, "apf_delta_gap": 10.0},
        "leader": {"kind": "constant", "value": 0.0},
        "sim": {"T": 2.0, "dt": 0.01},
    }
    for k, v in sections.items():
        doc[k] = v if k == "leader" else {**doc.get(k, {}), **v}
    return doc


def test_run_equilibrium(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(write(tmp_path, small())), "--out", str(out)]) == 0
    info = json.loads((out / "summary.json").read_text())
    assert info["status"] == "completed"
    assert info["min_gap_per_agent"] == pytest.approx([10.0] * 3, abs=1e-9)
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,k,y,v,u,z,zv,L_k"
    # the echoed scenario reloads to the same thing
    assert load_scenario(out / "scenario.toml") == load_scenario(tmp_path / "s.toml")


def test_negative_spacing_is_config_error_without_output(tmp_path, capsys):
    out = tmp_path / "out"
    doc = small(platoon={"spacings": [10.0, -1.0]})
    assert main(["run", "--scenario", str(write(tmp_path, doc)), "--out", str(out)]) == 2
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path):
    doc = small(sim={"tickrate": 3})
    assert main(["run", "--scenario", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 2


def test_gate_refusal(tmp_path, capsys):
    # linear drag c1 = 0.5 has alpha = -0.5; beta = alpha - 0.1
    doc = small(controller={"beta": -0.6})
    out = tmp_path / "out"
    assert main(["certify", "--scenario", str(write(tmp_path, doc)), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "refusing" in err and "beta > alpha" in err
    assert not out.exists()


def test_collision_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(SCENARIOS / "near_barrier_collision.toml"), "--out", str(out)]) == 3
    assert json.loads((out / "summary.json").read_text())["status"] == "collision"


def test_certify_local_only_is_not_applicable(tmp_path):
    out = tmp_path / "o"
    code = main(["certify", "--scenario", str(write(tmp_path, small())), "--out", str(out), "--variant", "local-only"])
    assert code == 0
    rep = json.loads((out / "certification.json").read_text())
    assert {c["verdict"] for c in rep["checks"]} == {"not-applicable"}
    assert "max_relative_speed" in rep["scenario"]["metrics"]


def test_certification_failure_exit_code(tmp_path):
    # an impossibly tight velocity-matching tolerance fails the check
    doc = small(certify={"tol_match": 0.0, "tail_window": 1.0}, platoon={"spacings": [10.5, 9.5]})
    assert main(["certify", "--scenario", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 5


def test_stiff_run_exit_code(tmp_path):
    doc = small(sim={"guard_ceiling": 1e-12, "guard_max_halvings": 1}, platoon={"spacings": [10.5, 9.5]})
    assert main(["run", "--scenario", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 4


def test_default_output_root_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("APFPLATOON_OUT", str(tmp_path / "root"))
    assert main(["run", "--scenario", str(write(tmp_path, small(), "eq.toml"))]) == 0
    assert (tmp_path / "root" / "eq" / "trajectory.csv").exists()


def test_single_entry_sweep(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--scenario", str(write(tmp_path, small())), "--out", str(out), "--n-list", "2"]) == 0
    verdict = json.loads((out / "sweep.json").read_text())
    assert verdict["passed"] and verdict["prefix_equivalence"]["ok"] is None
    assert (out / "feedforward_n2" / "certification.json").exists()
    assert len((out / "comparison.csv").read_text().splitlines()) == 3


def test_paired_sweep(tmp_path):
    out = tmp_path / "o"
    doc = small(platoon={"spacings": [10.5, 9.5]}, leader={"kind": "sinusoid", "amplitude": 0.5, "frequency": 0.2})
    code = main(["sweep", "--scenario", str(write(tmp_path, doc)), "--out", str(out), "--n-list", "2,4",
                 "--paired", "--workers", "2", "--no-trajectories"])
    assert code == 0
    rows = (out / "comparison.csv").read_text().splitlines()
    assert rows[0] == "variant,n,k,L0,max_L,max_zv,settling_time"
    assert {r.split(",")[0] for r in rows[1:]} == {"feedforward", "local-only"}
    assert len(rows) == 1 + 2 * (2 + 4)
    assert not (out / "local-only_n4" / "trajectory.csv").exists()
    verdict = json.loads((out / "sweep.json").read_text())
    assert verdict["prefix_equivalence"]["ok"] is True


def test_bad_n_list(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", "--scenario", str(write(tmp_path, small())), "--n-list", "0,x"])
