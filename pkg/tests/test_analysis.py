import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apfplatoon.analysis import (
    CHECK_NAMES,
    certify,
    check_rate_identity,
    check_concave_bound,
    check_formation,
    check_invariance,
    lyap_formation,
    lyap_local,
    lyap_rate_direct,
    lyap_rate_rhs,
    scalability_study,
    series_derivative,
    settling_time,
)
from apfplatoon.apf import ApfParams
from apfplatoon.controller import ConstantInput, ControllerConfig, SinusoidInput, Variant
from apfplatoon.dynamics import LinearDrag, SignedQuadraticDrag
from apfplatoon.errors import CollisionError, InvalidInputError
from apfplatoon.scenario import CertifySettings, Scenario, flagship
from apfplatoon.sigma_math import SigmaParam, euclid_from_sigma
from apfplatoon.simulator import run

SP = SigmaParam(1.0)
APF = ApfParams(1.0, 2.0)
GAP_EQ = euclid_from_sigma(2.0, SP)


def test_lyap_local_values():
    assert lyap_local([GAP_EQ], [0.0], APF, SP) == pytest.approx(0.0, abs=1e-15)
    assert lyap_local([GAP_EQ, 0.0], [0.0, 2.0], APF, SP) == pytest.approx(2.0, abs=1e-14)
    assert lyap_local([math.sqrt(3.0)], [0.0], APF, SP) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(CollisionError):
        lyap_local([0.0], [1.0], APF, SP)


@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20))
def test_lyap_rate_rhs_properties(v_prev, v_k, beta):
    m = LinearDrag(0.5)
    zv = v_prev - v_k
    r = lyap_rate_rhs([zv], [v_prev], [v_k], beta, m)
    assert r == pytest.approx((-0.5 - beta) * zv * zv, rel=1e-9, abs=1e-9)
    assert lyap_rate_rhs([0.0], [v_prev], [v_prev], beta, m) == 0.0
    if beta > -0.5:
        assert r <= 1e-12


@given(st.lists(st.floats(0.5, 15.0), min_size=3, max_size=3), st.lists(st.floats(-4, 4), min_size=4, max_size=4),
       st.floats(0.0, 20.0))
def test_direct_rate_equals_closed_form(gaps, vel, t):
    s = Scenario(n=3, model=SignedQuadraticDrag(0.1, 0.05), spacings=(5.0,),
                 controller=ControllerConfig((1.0, 2.0, 0.5), APF, SP), profile=SinusoidInput(1.0, 0.3), T=20.0)
    y = np.zeros((4, 1))
    y[1:, 0] = -np.cumsum(gaps)
    v = np.array(vel)[:, None]
    direct = lyap_rate_direct(y, v, t, s)
    closed = lyap_rate_rhs(v[:-1] - v[1:], v[:-1], v[1:], s.betas(), s.model)
    assert np.allclose(direct, closed, rtol=1e-9, atol=1e-9)


def test_series_derivative_orders():
    t = np.linspace(0, 1, 101)
    x = np.sin(t)[:, None]
    assert np.allclose(series_derivative(x, 0.01)[:, 0], np.cos(t[1:-1]), atol=2e-5)
    assert np.allclose(series_derivative(x, 0.01, order=4)[:, 0], np.cos(t[2:-2]), atol=1e-9)
    with pytest.raises(InvalidInputError):
        series_derivative(x, 0.01, order=3)
    with pytest.raises(InvalidInputError):
        series_derivative(x[:2], 0.01)


def test_settling_time():
    t = np.arange(5.0)
    assert settling_time(t, [5, 4, 0, 0, 0], 1.0) == 2.0
    assert settling_time(t, [0, 0, 0, 0, 0], 1.0) == 0.0
    assert settling_time(t, [0, 0, 0, 0, 3], 1.0) == math.inf


def equilibrium(n=3, **kw):
    base = dict(n=n, model=LinearDrag(0.5), spacings=(GAP_EQ,),
                controller=ControllerConfig(1.0, APF, SP), profile=ConstantInput(0.0), T=5.0)
    base.update(kw)
    return Scenario(**base)


def test_checks_on_equilibrium_run():
    s = equilibrium()
    log = run(s)
    assert np.max(np.abs(log.L)) < 1e-12
    assert check_rate_identity(log, s).ok
    for r in check_invariance(log, s):
        assert r.ok, r
    assert check_concave_bound(log, s).ok
    assert check_formation(log, s).ok


def test_flagship_certifies(flagship_log, flagship_scenario):
    rep = certify(flagship_log, flagship_scenario)
    assert rep.passed
    assert [c.name for c in rep.checks] == list(CHECK_NAMES)
    assert all(c.verdict == "pass" for c in rep.checks)
    doc = json.loads(rep.to_json())
    assert doc["scenario"]["status"] == "completed"
    assert len(doc["scenario"]["metrics"]["max_L"]) == 10


def test_formation_function_and_rate_residuals(flagship_log, flagship_scenario):
    Lf = lyap_formation(flagship_log)
    assert Lf.shape == flagship_log.t.shape
    r = check_formation(flagship_log, flagship_scenario)
    assert r.detail["rate_residual"] < 1e-6
    # the swapped-order variant of the formation rate is not an identity
    assert r.detail["rate_residual_swapped"] > 1e-3


def test_rate_identity_fails_with_tiny_constant(flagship_log, flagship_scenario):
    assert check_rate_identity(flagship_log, flagship_scenario, C=1e-12).verdict == "fail"


def test_quadratic_drag_concave_bound_not_applicable():
    s = Scenario(n=2, model=SignedQuadraticDrag(0.1, 0.01), spacings=(9.0, 11.0),
                 controller=ControllerConfig(1.0, ApfParams.from_gap(1.0, 10.0, SP), SP),
                 profile=SinusoidInput(0.5, 0.1), T=2.0)
    log = run(s)
    r = check_concave_bound(log, s)
    assert r.verdict == "not-applicable" and "concave" in r.detail["reason"]
    rep = certify(log, s)
    assert rep.by_name("rate_identity").ok
    assert rep.by_name("velocity_matching").verdict == "not-applicable"


def test_local_only_is_not_applicable():
    s = flagship(n=2, T=2.0, controller=ControllerConfig(1.0, ApfParams.from_gap(1.0, 10.0, SP), SP,
                                                         Variant.LOCAL_ONLY))
    rep = certify(run(s), s)
    assert {c.verdict for c in rep.checks} == {"not-applicable"}
    assert rep.passed


def test_failed_certified_run_fails_every_check():
    s = flagship(n=2, T=2.0)
    log = run(s)
    object.__setattr__(log, "status", "collision")
    rep = certify(log, s)
    assert not rep.passed
    assert {c.verdict for c in rep.checks} == {"fail"}


def test_uncertified_run_skips_guarantees():
    s = equilibrium(certify=CertifySettings(enabled=False))
    rep = certify(run(s), s)
    assert rep.by_name("sublevel_invariance").verdict == "not-applicable"
    assert rep.by_name("rate_identity").ok


def test_scalability_prefix_and_mismatch():
    base = flagship(T=3.0)
    res = scalability_study(base, [2, 4], variants=("feedforward", "local-only"))
    assert res.prefix_ok and res.prefix_max_diff == 0.0
    assert set(res.statuses) == {"feedforward:n=2", "feedforward:n=4", "local-only:n=2", "local-only:n=4"}
    assert res.invariance == {2: True, 4: True}
    assert len(res.peak_profile("feedforward", 4)) == 4
    bad = [base.replace(n=2), base.replace(n=3, spacings=(12.0,))]
    with pytest.raises(InvalidInputError):
        scalability_study(base, [2, 3], scenarios=bad)
    with pytest.raises(InvalidInputError):
        scalability_study(base, [])
