import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apfplatoon.apf import ApfParams
from apfplatoon.controller import ControllerConfig, PiecewiseLinearInput, SinusoidInput, Variant
from apfplatoon.dynamics import CustomModel, LinearDrag, SignedQuadraticDrag
from apfplatoon.errors import ConfigError, GateError
from apfplatoon.scenario import (
    GuardSettings,
    Scenario,
    dump_scenario,
    flagship,
    load_scenario,
    scenario_from_dict,
    scenario_hash,
)
from apfplatoon.sigma_math import SigmaParam

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def roundtrip(s, tmp_path):
    p = tmp_path / "s.toml"
    dump_scenario(s, p)
    return load_scenario(p)


def test_flagship_file_matches_builder():
    assert load_scenario(SCENARIOS / "flagship.toml") == flagship()


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_roundtrip(path, tmp_path):
    s = load_scenario(path)
    assert roundtrip(s, tmp_path) == s
    assert scenario_hash(roundtrip(s, tmp_path)) == scenario_hash(s)


def test_roundtrip_all_profile_kinds(tmp_path):
    sp = SigmaParam(2.0)
    s = Scenario(
        n=4,
        dim=2,
        model=SignedQuadraticDrag(0.2, 0.03),
        spacings=(3.0, 4.0),
        controller=ControllerConfig((1.0, 1.5), ApfParams.from_gap(2.0, 3.5, sp), sp, Variant.LOCAL_ONLY),
        profile=PiecewiseLinearInput(((0.0, 0.0), (2.0, 1.0), (4.0, -1.0))),
        guard=GuardSettings(ceiling=math.inf, max_halvings=3),
        name="mixed",
    )
    assert roundtrip(s, tmp_path) == s
    s2 = s.replace(profile=SinusoidInput(0.3, 0.05, 1.0))
    assert roundtrip(s2, tmp_path) == s2


@given(st.floats(0.1, 50.0), st.floats(0.01, 10.0), st.integers(1, 200))
def test_dict_roundtrip_property(gap, amplitude, n):
    s = flagship(n=n, controller=ControllerConfig(1.0, ApfParams.from_gap(amplitude, gap)))
    from apfplatoon.scenario import scenario_to_dict

    assert scenario_from_dict(scenario_to_dict(s)) == s


def test_defaults_from_empty_document():
    s = scenario_from_dict({})
    assert s == Scenario()
    s.validate()


@pytest.mark.parametrize(
    "doc, match",
    [
        ({"platoon": {"n": 2, "colour": "red"}}, "unknown key"),
        ({"extras": {}}, "unknown section"),
        ({"model": {"family": "rocket"}}, "unknown model family"),
        ({"leader": {"kind": "sinusoid", "value": 1.0}}, "does not take"),
        ({"leader": {"kind": "zigzag"}}, "unknown leader profile"),
        ({"controller": {"apf_delta_gap": 1.0, "apf_delta_sigma": 1.0}}, "not both"),
        ({"controller": {"variant": "telepathy"}}, "telepathy"),
        ({"model": {"family": "linear_drag", "c2": 1.0}}, "only c1"),
    ],
)
def test_rejects_bad_documents(doc, match):
    with pytest.raises(ConfigError, match=match):
        scenario_from_dict(doc)


def test_unreadable_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("n = = 3")
    with pytest.raises(ConfigError):
        load_scenario(p)
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.toml")


def test_validation_rules():
    with pytest.raises(ConfigError):
        flagship(leader_offset=-1.0).validate()
    with pytest.raises(ConfigError):
        flagship(n=0).validate()
    with pytest.raises(ConfigError):
        flagship(dt=0.0).validate()
    with pytest.raises(ConfigError):
        flagship(stride=0).validate()
    with pytest.raises(GateError):
        flagship(controller=ControllerConfig(-0.6, ApfParams.from_gap(1.0, 10.0)), model=LinearDrag(0.5)).validate()
    with pytest.raises(ConfigError, match="beta must be > 0"):
        flagship(controller=ControllerConfig(0.0, ApfParams.from_gap(1.0, 10.0))).validate()


def test_custom_model_checked_on_validate():
    bad = flagship(model=CustomModel(lambda v: -2 * v, alpha_hint=-3.0))
    with pytest.raises(ConfigError):
        bad.validate()
    flagship(model=CustomModel(lambda v: -2 * v, alpha_hint=-2.0)).validate()


def test_spacings_cycle_and_hash_changes():
    s = flagship(n=7)
    assert list(s.ell()) == [1.0, 10.2, 10.4, 10.6, 10.3, 10.5, 10.2, 10.4]
    assert scenario_hash(s) != scenario_hash(flagship(n=8))
    assert len(scenario_hash(s)) == 16
