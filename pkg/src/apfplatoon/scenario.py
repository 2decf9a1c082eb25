"""Scenario description and its TOML file format.

A scenario file has the sections ``[platoon]``, ``[model]``, ``[controller]``,
``[leader]``, ``[sim]`` and ``[certify]``; every key is optional and falls back
to the defaults of :class:`Scenario`. Unknown sections or keys are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .apf import ApfParams
from .controller import (
    PROFILE_KINDS,
    ConstantInput,
    ControllerConfig,
    LeaderProfile,
    PiecewiseLinearInput,
    StopAndGo,
    Variant,
)
from .dynamics import CustomModel, LinearDrag, SignedQuadraticDrag, VehicleModel, alpha_bound
from .errors import ConfigError, GateError, PlatoonError
from .sigma_math import SigmaParam


@dataclass(frozen=True)
class GuardSettings:
    """Step-halving guard: halve dt while a follower's local control changes by
    more than ``ceiling`` across the stages of one RK4 step."""

    ceiling: float = 10.0
    max_halvings: int = 16


@dataclass(frozen=True)
class CertifySettings:
    enabled: bool = True
    tol_inv: float = 1e-6
    tol_match: float = 1e-3
    tail_window: float = 20.0
    # residual bound C * dt^2 for the central-difference Lyapunov rate check
    rate_c: float = 0.01
    concave_tol: float = 1e-6
    formation_tol: float = 1e-6


@dataclass(frozen=True)
class Scenario:
    n: int = 10
    dim: int = 1
    model: VehicleModel = LinearDrag(0.5)
    # l_1.. for the followers, repeated cyclically up to n
    spacings: tuple = (10.0,)
    # l_0: the leader starts at -l_0
    leader_offset: float = 1.0
    controller: ControllerConfig = ControllerConfig()
    profile: LeaderProfile = ConstantInput(0.0)
    T: float = 60.0
    dt: float = 0.01
    collision_epsilon: float = 0.01
    stride: int = 1
    guard: GuardSettings = GuardSettings()
    certify: CertifySettings = CertifySettings()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "spacings", tuple(float(x) for x in np.atleast_1d(self.spacings)))

    def ell(self) -> np.ndarray:
        """Full spacing vector l_0..l_n."""
        return np.concatenate([[self.leader_offset], np.resize(np.asarray(self.spacings, dtype=float), self.n)])

    def betas(self) -> np.ndarray:
        return self.controller.betas(self.n)

    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))

    def certified(self) -> bool:
        """Certification enabled, feedforward law, and every gain above alpha."""
        return (
            self.certify.enabled
            and self.controller.variant is Variant.FEEDFORWARD
            and bool(np.all(self.betas() > alpha_bound(self.model)))
        )

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def validate(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise ConfigError(f"dim must be an integer >= 1, got {self.dim!r}")
        ell = self.ell()
        if len(self.spacings) == 0 or not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise ConfigError(f"spacings must be positive, got l = {ell.tolist()}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T must be positive and finite")
        if not (0 < self.dt <= self.T):
            raise ConfigError("dt must satisfy 0 < dt <= T")
        if not (0 < self.collision_epsilon < ell[1:].min()):
            raise ConfigError("collision_epsilon must be positive and below every initial gap")
        if not (isinstance(self.stride, (int, np.integer)) and self.stride >= 1):
            raise ConfigError("stride must be an integer >= 1")
        if not (self.guard.ceiling > 0 and self.guard.max_halvings >= 0):
            raise ConfigError("guard ceiling must be > 0 and max_halvings >= 0")
        if self.certify.enabled:
            betas = self.betas()
            alpha = alpha_bound(self.model)
            if np.any(betas <= alpha):
                raise GateError(
                    f"beta = {betas.min():g} does not exceed the model's Lipschitz-like constant alpha = {alpha:g}; "
                    "the invariance and collision-avoidance guarantees require beta > alpha"
                )
            if np.any(betas <= 0):
                raise ConfigError("beta must be > 0 (only a run with certification disabled may force beta <= 0)")
        if isinstance(self.model, CustomModel):
            from .dynamics import check_custom_alpha

            check_custom_alpha(self.model, dim=self.dim)


# -- dict / TOML conversion --------------------------------------------------

def _model_to_dict(m):
    if isinstance(m, LinearDrag):
        return {"family": "linear_drag", "c1": m.c1}
    if isinstance(m, SignedQuadraticDrag):
        return {"family": "signed_quadratic_drag", "c1": m.c1, "c2": m.c2}
    out = {"family": "custom", "fn": repr(m.fn), "alpha_hint": m.alpha_hint}
    if m.gamma_hint is not None:
        out["gamma_hint"] = m.gamma_hint
    return out


def _profile_to_dict(p):
    d = {"kind": p.kind}
    for f in dataclasses.fields(p):
        val = getattr(p, f.name)
        d[f.name] = [list(b) for b in val] if isinstance(p, PiecewiseLinearInput) else val
    return d


def scenario_to_dict(s: Scenario) -> dict:
    c = s.controller
    beta = c.beta if isinstance(c.beta, float) else list(c.beta)
    return {
        "name": s.name,
        "platoon": {"n": int(s.n), "dim": int(s.dim), "leader_offset": s.leader_offset, "spacings": list(s.spacings)},
        "model": _model_to_dict(s.model),
        "controller": {
            "variant": c.variant.value,
            "beta": beta,
            "apf_family": c.apf.family,
            "apf_amplitude": c.apf.amplitude,
            "apf_delta_sigma": c.apf.delta_sigma,
            "sigma": c.sigma.sigma,
        },
        "leader": _profile_to_dict(s.profile),
        "sim": {
            "T": s.T,
            "dt": s.dt,
            "collision_epsilon": s.collision_epsilon,
            "stride": int(s.stride),
            "guard_ceiling": s.guard.ceiling,
            "guard_max_halvings": int(s.guard.max_halvings),
        },
        "certify": dataclasses.asdict(s.certify),
    }


_KEYS = {
    "platoon": {"n", "dim", "leader_offset", "spacings"},
    "model": {"family", "c1", "c2"},
    "controller": {"variant", "beta", "apf_family", "apf_amplitude", "apf_delta_sigma", "apf_delta_gap", "sigma"},
    "leader": {"kind"} | {f.name for cls in PROFILE_KINDS.values() for f in dataclasses.fields(cls)},
    "sim": {"T", "dt", "collision_epsilon", "stride", "guard_ceiling", "guard_max_halvings"},
    "certify": {f.name for f in dataclasses.fields(CertifySettings)},
}


def _check_keys(doc: dict):
    for section, body in doc.items():
        if section == "name":
            continue
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - _KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc)
    base = Scenario()
    try:
        pl = doc.get("platoon", {})
        md = dict(doc.get("model", {}))
        family = md.pop("family", "linear_drag")
        if family == "linear_drag":
            if "c2" in md:
                raise ConfigError("linear_drag takes only c1")
            model = LinearDrag(**md) if md else base.model
        elif family == "signed_quadratic_drag":
            model = SignedQuadraticDrag(**md)
        else:
            raise ConfigError(f"unknown model family {family!r} (custom models are Python-API only)")

        ct = doc.get("controller", {})
        sigma = SigmaParam(ct.get("sigma", base.controller.sigma.sigma))
        if "apf_delta_sigma" in ct and "apf_delta_gap" in ct:
            raise ConfigError("give apf_delta_sigma or apf_delta_gap, not both")
        amplitude = ct.get("apf_amplitude", base.controller.apf.amplitude)
        family_apf = ct.get("apf_family", base.controller.apf.family)
        if "apf_delta_gap" in ct:
            apf = ApfParams.from_gap(amplitude, ct["apf_delta_gap"], sigma, family_apf)
        else:
            apf = ApfParams(amplitude, ct.get("apf_delta_sigma", base.controller.apf.delta_sigma), family_apf)
        controller = ControllerConfig(
            beta=ct.get("beta", base.controller.beta),
            apf=apf,
            sigma=sigma,
            variant=Variant(ct.get("variant", base.controller.variant.value)),
        )

        ld = dict(doc.get("leader", {}))
        kind = ld.pop("kind", "constant")
        if kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown leader profile {kind!r}; known: {sorted(PROFILE_KINDS)}")
        cls = PROFILE_KINDS[kind]
        allowed = {f.name for f in dataclasses.fields(cls)}
        if set(ld) - allowed:
            raise ConfigError(f"leader profile {kind!r} does not take {sorted(set(ld) - allowed)}")
        if "breakpoints" in ld:
            ld["breakpoints"] = tuple(tuple(b) for b in ld["breakpoints"])
        profile = cls(**ld)

        sm = doc.get("sim", {})
        guard = GuardSettings(
            ceiling=float(sm.get("guard_ceiling", base.guard.ceiling)),
            max_halvings=int(sm.get("guard_max_halvings", base.guard.max_halvings)),
        )
        certify = CertifySettings(**doc.get("certify", {}))
        return Scenario(
            n=pl.get("n", base.n),
            dim=pl.get("dim", base.dim),
            model=model,
            spacings=pl.get("spacings", base.spacings),
            leader_offset=float(pl.get("leader_offset", base.leader_offset)),
            controller=controller,
            profile=profile,
            T=float(sm.get("T", base.T)),
            dt=float(sm.get("dt", base.dt)),
            collision_epsilon=float(sm.get("collision_epsilon", base.collision_epsilon)),
            stride=sm.get("stride", base.stride),
            guard=guard,
            certify=certify,
            name=doc.get("name", ""),
        )
    except PlatoonError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)


def dump_scenario(s: Scenario, path=None) -> str:
    text = tomli_w.dumps(scenario_to_dict(s))
    if path is not None:
        Path(path).write_text(text)
    return text


def scenario_hash(s: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(s), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def flagship(n: int = 10, **changes) -> Scenario:
    """Reference certified run: linear drag, 10 m desired gaps, stop-and-go leader."""
    sigma = SigmaParam(1.0)
    s = Scenario(
        n=n,
        model=LinearDrag(0.5),
        spacings=(10.2, 10.4, 10.6, 10.3, 10.5),
        leader_offset=1.0,
        controller=ControllerConfig(beta=1.0, apf=ApfParams.from_gap(1.0, 10.0, sigma), sigma=sigma),
        profile=StopAndGo(accel=2.0, accel_time=8.0, cruise_input=2.0, cruise_time=15.0,
                          decel=4.0, decel_time=2.0, start_time=5.0),
        T=60.0,
        dt=0.01,
        name="flagship",
    )
    return s.replace(**changes) if changes else s

