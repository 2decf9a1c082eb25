"""Numerical certification of the closed-loop guarantees on logged runs.

Every check reads a :class:`~apfplatoon.simulator.TrajectoryLog` and returns a
:class:`CheckResult`. Derivatives of logged quantities are taken by central
differences on the log itself, never from the simulator's vector field, so a
check stays independent of the code path it verifies.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .apf import ApfParams, apf_deriv, apf_value, eta_c
from .controller import Variant, compute_all_controls
from .dynamics import NotApplicable, VehicleModel, alpha_bound, gamma_bound
from .errors import CollisionError, InvalidInputError
from .sigma_math import SigmaParam, sigma_norm

if TYPE_CHECKING:
    from .scenario import Scenario
    from .simulator import TrajectoryLog

PASS, FAIL, NA = "pass", "fail", "not-applicable"


@dataclass
class CheckResult:
    name: str
    verdict: str
    worst_residual: Optional[float] = None
    location: Optional[dict] = None
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.verdict != FAIL


@dataclass
class CertificationReport:
    checks: list
    scenario: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def by_name(self, name) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "scenario": self.scenario, "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return repr(o)


# -- Lyapunov functions ------------------------------------------------------------

def lyap_local(z, z_v, apf: ApfParams, sp: SigmaParam = SigmaParam()):
    """(V(||z||_sigma) + |z_v|^2) / 2, vectorised over leading axes."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z_v = np.atleast_1d(np.asarray(z_v, dtype=float))
    sq = np.sum(z * z, axis=-1)
    if np.any(sq == 0):
        raise CollisionError("zero gap: local Lyapunov function undefined", gap=0.0)
    out = 0.5 * (apf_value(sigma_norm(z, sp), apf) + np.sum(z_v * z_v, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def lyap_rate_rhs(z_v, v_prev, v_k, beta, m: VehicleModel):
    """z_v.(f(v_prev) - f(v_k)) - beta |z_v|^2."""
    z_v = np.atleast_1d(np.asarray(z_v, dtype=float))
    df = m.f(np.atleast_1d(np.asarray(v_prev, dtype=float))) - m.f(np.atleast_1d(np.asarray(v_k, dtype=float)))
    out = np.sum(z_v * df, axis=-1) - np.asarray(beta, dtype=float) * np.sum(z_v * z_v, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def lyap_rate_direct(y, v, t, scenario: "Scenario"):
    """Chain-rule rate of every L_k along the closed-loop vector field.

    Uses the controller and the model, not the closed-form rate, so comparing
    the two tests the cancellation of the potential terms. Accepts one state
    (n+1, d) or a batch (m, n+1, d) with times of shape (m,).
    """
    c = scenario.controller
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    u = compute_all_controls(y, v, t, c, scenario.profile, scenario.T)
    acc = scenario.model.f(v) + u
    z = y[..., :-1, :] - y[..., 1:, :]
    zv = v[..., :-1, :] - v[..., 1:, :]
    zv_dot = acc[..., :-1, :] - acc[..., 1:, :]
    sq = np.sum(z * z, axis=-1, keepdims=True)
    root = np.sqrt(1.0 + sq)
    dV_dz = apf_deriv(sigma_norm(z, c.sigma), c.apf)[..., None] * z / (c.sigma.sigma * root)
    return 0.5 * np.sum(dV_dz * zv, axis=-1) + np.sum(zv * zv_dot, axis=-1)


def lyap_formation(log: "TrajectoryLog") -> np.ndarray:
    """Formation-level function: half the sum of the local L_k."""
    return 0.5 * np.sum(log.L, axis=1)


# -- finite differences -----------------------------------------------------------

def series_derivative(values, dt: float, order: int = 2):
    """Central-difference time derivative along axis 0.

    ``order=2`` returns rows 1..m-2, ``order=4`` rows 2..m-3.
    """
    x = np.asarray(values, dtype=float)
    if order == 2:
        if x.shape[0] < 3:
            raise InvalidInputError("need at least 3 samples for a central difference")
        return (x[2:] - x[:-2]) / (2.0 * dt)
    if order == 4:
        if x.shape[0] < 5:
            raise InvalidInputError("need at least 5 samples for a 5-point difference")
        return (-x[4:] + 8.0 * x[3:-1] - 8.0 * x[1:-3] + x[:-4]) / (12.0 * dt)
    raise InvalidInputError("order must be 2 or 4")


def _uniform_log(log: "TrajectoryLog", need: int = 3):
    if not log.completed:
        raise InvalidInputError(f"log status is {log.status!r}; checks need a completed run")
    if log.t.size < need:
        raise InvalidInputError(f"log too short ({log.t.size} records)")
    h = np.diff(log.t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise InvalidInputError("log time grid is not uniform (T not a multiple of dt*stride?)")
    return float(h[0])


def _rhs_series(log, scenario):
    betas = scenario.betas()
    return lyap_rate_rhs(log.zv, log.v[:, :-1], log.v[:, 1:], betas[None, :], scenario.model)


def _worst(res, log, offset):
    i, k = np.unravel_index(int(np.argmax(res)), res.shape)
    return float(res[i, k]), {"t": float(log.t[i + offset]), "k": int(k) + 1}


# -- checks -------------------------------------------------------------------------

def _feedforward_gate(scenario, what):
    if scenario.controller.variant is not Variant.FEEDFORWARD:
        return f"{what} assumes the feedforward law; variant is {scenario.controller.variant.value}"
    return None


def check_rate_identity(log: "TrajectoryLog", scenario: "Scenario", C: Optional[float] = None) -> CheckResult:
    """Central-difference rate of each logged L_k against the closed-form rate.

    Pass iff the max absolute residual is at most ``C * h**2`` with ``h`` the
    log spacing. Per-agent maxima are in ``detail['per_agent']``.
    """
    h = _uniform_log(log)
    if (why := _feedforward_gate(scenario, "the rate identity")):
        return CheckResult("rate_identity", NA, detail={"reason": why})
    C = scenario.certify.rate_c if C is None else C
    res = np.abs(series_derivative(log.L, h) - _rhs_series(log, scenario)[1:-1])
    worst, loc = _worst(res, log, 1)
    bound = C * h * h
    return CheckResult(
        "rate_identity",
        PASS if worst <= bound else FAIL,
        worst,
        loc,
        {"bound": bound, "C": C, "h": h, "per_agent": res.max(axis=0).tolist()},
    )


def check_invariance(log: "TrajectoryLog", scenario: "Scenario") -> list:
    """Sub-level-set invariance, the eta_c gap bound and terminal velocity matching."""
    names = ("sublevel_invariance", "min_gap_bound", "velocity_matching")
    if not scenario.certified():
        why = _feedforward_gate(scenario, "invariance") or "scenario is not certified (certification off or beta <= alpha)"
        return [CheckResult(nm, NA, detail={"reason": why}) for nm in names]
    if not log.completed:
        return [CheckResult(nm, FAIL, detail={"reason": f"run ended with status {log.status}: {log.message}"}) for nm in names]
    cs = scenario.certify
    c = scenario.controller
    L0 = log.L[0]

    # (A) no L_k rises above its initial level
    excess = log.L - L0[None, :] * (1.0 + cs.tol_inv)
    worst, loc = _worst(excess, log, 0)
    inv = CheckResult(names[0], PASS if worst <= 1e-12 else FAIL, worst, loc,
                      {"tol_inv": cs.tol_inv, "L0": L0.tolist(), "max_L": log.L.max(axis=0).tolist()})

    # (B) minimum gap strictly above eta_c(2 L_k(0))
    gaps = log.gaps()
    etas = []
    margins = []
    for k in range(log.n):
        level = 2.0 * L0[k]
        if level > 0:
            eta = eta_c(level, c.apf, c.sigma)
            margins.append(gaps[:, k].min() - eta)
        else:
            # zero level: the gap is pinned to the equilibrium distance
            eta = c.apf.delta_euclid(c.sigma)
            margins.append(gaps[:, k].min() - eta + 1e-9 * max(1.0, eta))
        etas.append(eta)
    margins = np.array(margins)
    k_worst = int(np.argmin(margins))
    gap_res = CheckResult(
        names[1],
        PASS if np.all(margins > 0) else FAIL,
        float(-margins[k_worst]),
        {"t": float(log.t[int(np.argmin(gaps[:, k_worst]))]), "k": k_worst + 1},
        {"eta_c": etas, "min_gap": gaps.min(axis=0).tolist()},
    )

    # (B) velocity matching needs a constant-input tail
    tail_start = scenario.profile.constant_after()
    final = np.linalg.norm(log.zv[-1], axis=-1)
    if tail_start <= log.t[-1] - cs.tail_window:
        k = int(np.argmax(final))
        match = CheckResult(names[2], PASS if np.all(final < cs.tol_match) else FAIL, float(final[k]),
                            {"t": float(log.t[-1]), "k": k + 1}, {"tol_match": cs.tol_match})
    else:
        match = CheckResult(names[2], NA, detail={"reason": f"leader input not constant over the final {cs.tail_window:g} s"})
    return [inv, gap_res, match]


def check_concave_bound(log: "TrajectoryLog", scenario: "Scenario") -> CheckResult:
    """Concave-drift bound dL_k/dt <= (gamma - beta) |z_v|^2 + tol."""
    name = "concave_drift_bound"
    gamma = gamma_bound(scenario.model)
    if isinstance(gamma, NotApplicable):
        return CheckResult(name, NA, detail={"reason": gamma.reason})
    if (why := _feedforward_gate(scenario, "the concave-drift bound")):
        return CheckResult(name, NA, detail={"reason": why})
    betas = scenario.betas()
    if not np.all(betas > gamma):
        return CheckResult(name, NA, detail={"reason": f"needs beta > gamma = {gamma:g}"})
    h = _uniform_log(log, need=5)
    rate = series_derivative(log.L, h, order=4)
    zv2 = np.sum(log.zv * log.zv, axis=-1)[2:-2]
    excess = rate - (gamma - betas[None, :]) * zv2
    worst, loc = _worst(excess, log, 2)
    tol = scenario.certify.concave_tol
    return CheckResult(name, PASS if worst <= tol else FAIL, worst, loc, {"gamma": gamma, "tol": tol})


def check_formation(log: "TrajectoryLog", scenario: "Scenario") -> CheckResult:
    """Formation function non-increasing; also reports both forms of its rate.

    ``rate_residual`` compares the differenced formation function with half
    the sum of the local rates; ``rate_residual_swapped`` uses the sum with
    swapped drift difference and no 1/2, kept for comparison only.
    """
    name = "formation_decrease"
    if not scenario.certified():
        why = _feedforward_gate(scenario, "formation invariance") or "scenario is not certified"
        return CheckResult(name, NA, detail={"reason": why})
    h = _uniform_log(log)
    Lf = lyap_formation(log)
    rises = np.diff(Lf)
    i = int(np.argmax(rises))
    tol = scenario.certify.formation_tol
    rate = series_derivative(Lf, h)
    rhs = _rhs_series(log, scenario)[1:-1]
    consistent = np.abs(rate - 0.5 * rhs.sum(axis=1))
    betas = scenario.betas()
    zv = log.zv[1:-1]
    swapped_drift = np.sum(zv * (scenario.model.f(log.v[1:-1, 1:]) - scenario.model.f(log.v[1:-1, :-1])), axis=-1)
    swapped = swapped_drift.sum(axis=1) - (betas[None, :] * np.sum(zv * zv, axis=-1)).sum(axis=1)
    return CheckResult(
        name,
        PASS if rises[i] <= tol else FAIL,
        float(rises[i]),
        {"t": float(log.t[i + 1]), "k": None},
        {
            "tol": tol,
            "L_start": float(Lf[0]),
            "L_end": float(Lf[-1]),
            "rate_residual": float(consistent.max()),
            "rate_residual_swapped": float(np.abs(rate - swapped).max()),
        },
    )


CHECK_NAMES = (
    "rate_identity",
    "sublevel_invariance",
    "min_gap_bound",
    "velocity_matching",
    "concave_drift_bound",
    "formation_decrease",
)


def run_metrics(log: "TrajectoryLog", settle_threshold: float = 1e-3) -> dict:
    """Per-follower peaks and settling times; produced for every variant."""
    speed = np.linalg.norm(log.zv, axis=-1)
    return {
        "max_L": log.L.max(axis=0).tolist(),
        "max_relative_speed": speed.max(axis=0).tolist(),
        "settling_time": [settling_time(log.t, speed[:, k], settle_threshold) for k in range(log.n)],
        "min_gap": log.gaps().min(axis=0).tolist(),
    }


def certify(log: "TrajectoryLog", scenario: "Scenario") -> CertificationReport:
    """Run every check on one log; each name in :data:`CHECK_NAMES` appears once."""
    from .scenario import scenario_to_dict

    def skipped(verdict, **detail):
        return [CheckResult(nm, verdict, detail=detail) for nm in CHECK_NAMES]

    if scenario.controller.variant is not Variant.FEEDFORWARD:
        checks = skipped(NA, reason=_feedforward_gate(scenario, "every guarantee"))
    elif not log.completed:
        checks = skipped(FAIL if scenario.certified() else NA,
                         reason=f"run ended with status {log.status}: {log.message}")
    elif log.stride != 1:
        checks = check_invariance(log, scenario)
        checks.insert(0, CheckResult(CHECK_NAMES[0], NA, detail={"reason": "needs a stride-1 log"}))
        checks += [CheckResult(nm, NA, detail={"reason": "needs a stride-1 log"}) for nm in CHECK_NAMES[4:]]
    else:
        checks = [check_rate_identity(log, scenario), *check_invariance(log, scenario),
                  check_concave_bound(log, scenario), check_formation(log, scenario)]
    meta = scenario_to_dict(scenario)
    meta["status"] = log.status
    meta["scenario_hash"] = log.scenario_hash
    meta["alpha"] = alpha_bound(scenario.model)
    meta["metrics"] = run_metrics(log)
    return CertificationReport(checks, meta)


# -- scalability ----------------------------------------------------------------------

@dataclass
class ScalabilityResult:
    rows: list
    invariance: dict
    prefix_max_diff: Optional[float]
    prefix_ok: Optional[bool]
    statuses: dict
    logs: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(s == "completed" for s in self.statuses.values()) and all(self.invariance.values())

    def peak_profile(self, variant: str, n: int) -> np.ndarray:
        return np.array([r["max_zv"] for r in self.rows if r["variant"] == variant and r["n"] == n])

    def write_csv(self, path):
        fields = ["variant", "n", "k", "L0", "max_L", "max_zv", "settling_time"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in fields})


def settling_time(t, values, threshold=1e-3) -> float:
    """First time after which ``values`` stays below ``threshold`` (inf if never)."""
    above = np.flatnonzero(np.asarray(values) >= threshold)
    if above.size == 0:
        return float(t[0])
    if above[-1] == len(t) - 1:
        return float("inf")
    return float(t[above[-1] + 1])


def _shared_parameters_match(scenarios: Sequence["Scenario"]):
    """Raise unless all scenarios agree on every per-agent quantity of the shared prefix."""
    n_min = min(s.n for s in scenarios)
    ref = scenarios[0]
    for s in scenarios[1:]:
        same = (
            s.model == ref.model
            and s.dim == ref.dim
            and s.controller.apf == ref.controller.apf
            and s.controller.sigma == ref.controller.sigma
            and s.profile == ref.profile
            and s.T == ref.T
            and s.dt == ref.dt
            and np.array_equal(s.betas()[:n_min], ref.betas()[:n_min])
            and np.array_equal(s.ell()[: n_min + 1], ref.ell()[: n_min + 1])
        )
        if not same:
            raise InvalidInputError("scalability runs must share per-agent parameters and spacings")


def _run_one(scenario):
    from .simulator import run

    return run(scenario)


def run_many(scenarios, workers: int = 1):
    if workers <= 1 or len(scenarios) == 1:
        return [_run_one(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, scenarios))


def scalability_study(
    base: "Scenario",
    n_list: Sequence[int],
    variants: Sequence = (Variant.FEEDFORWARD,),
    workers: int = 1,
    scenarios: Optional[Sequence["Scenario"]] = None,
    prefix_tol: float = 1e-9,
    settle_threshold: float = 1e-3,
) -> ScalabilityResult:
    """Run ``base`` for every n (and variant) and tabulate per-position metrics.

    The invariance verdict per n is the bound max_k max_t L_k <= max_k L_k(0)
    (1 + tol_inv) on feedforward runs. Prefix equivalence compares agents
    0..min(n) across the feedforward runs.
    """
    if not n_list:
        raise InvalidInputError("n_list must be non-empty")
    variants = [Variant(v) for v in variants]
    if scenarios is None:
        scenarios = [
            base.replace(n=int(n), controller=_with_variant(base.controller, v)) for v in variants for n in n_list
        ]
    for v in variants:
        group = [s for s in scenarios if s.controller.variant is v]
        if group:
            _shared_parameters_match(group)
    logs = run_many(list(scenarios), workers)

    rows, invariance, statuses, by_key = [], {}, {}, {}
    for s, log in zip(scenarios, logs):
        key = (s.controller.variant.value, s.n)
        by_key[key] = log
        statuses[f"{key[0]}:n={key[1]}"] = log.status
        speed = np.linalg.norm(log.zv, axis=-1)
        for k in range(log.n):
            rows.append({
                "variant": key[0],
                "n": s.n,
                "k": k + 1,
                "L0": float(log.L[0, k]),
                "max_L": float(log.L[:, k].max()),
                "max_zv": float(speed[:, k].max()),
                "settling_time": settling_time(log.t, speed[:, k], settle_threshold),
            })
        if s.controller.variant is Variant.FEEDFORWARD:
            bound = log.L[0].max() * (1.0 + s.certify.tol_inv) + 1e-12
            invariance[s.n] = bool(log.completed and log.L.max() <= bound)

    ff = [(s, by_key[(s.controller.variant.value, s.n)]) for s in scenarios if s.controller.variant is Variant.FEEDFORWARD]
    prefix_diff, prefix_ok = None, None
    if len(ff) > 1:
        n_min = min(s.n for s, _ in ff)
        ref = next(log for s, log in ff if s.n == n_min)
        prefix_diff = 0.0
        for s, log in ff:
            m = min(ref.t.size, log.t.size)
            for a, b in ((ref.y, log.y), (ref.v, log.v)):
                prefix_diff = max(prefix_diff, float(np.abs(a[:m, : n_min + 1] - b[:m, : n_min + 1]).max()))
        prefix_ok = prefix_diff <= prefix_tol
    return ScalabilityResult(rows, invariance, prefix_diff, prefix_ok, statuses, by_key)


def _with_variant(cfg, variant):
    from dataclasses import replace

    return replace(cfg, variant=variant)
