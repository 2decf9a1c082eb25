"""Distributed platoon control: predecessor feedforward plus a local APF law.

Agent k applies ``u_k = u_{k-1} + u_k^l`` where the local part only uses the
gap ``z_k = y_{k-1} - y_k`` and relative velocity ``z_k^v = v_{k-1} - v_k``:

    u_k^l = beta_k * z_k^v - grad_{y_k} (V(||z_k||_sigma) / 2)

The damping term opposes the relative velocity and the potential force is the
gradient of half the APF, i.e. the same weight the potential carries in the
local Lyapunov function ``(V + |z^v|^2) / 2``. With this weighting the Lyapunov
rate along the closed loop is ``z^v.(f(v_{k-1}) - f(v_k)) - beta |z^v|^2``,
whatever the APF.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .apf import ApfParams, apf_deriv
from .errors import CollisionError, InvalidInputError
from .sigma_math import SigmaParam

POTENTIAL_WEIGHT = 0.5


class Variant(str, enum.Enum):
    FEEDFORWARD = "feedforward"
    LOCAL_ONLY = "local-only"


@dataclass(frozen=True)
class ControllerConfig:
    beta: Union[float, Sequence[float]] = 1.0
    apf: ApfParams = ApfParams()
    sigma: SigmaParam = SigmaParam()
    variant: Variant = Variant.FEEDFORWARD

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if b.size == 0 or not np.all(np.isfinite(b)):
            raise InvalidInputError("beta must be a finite scalar or non-empty list")
        object.__setattr__(self, "beta", float(b[0]) if np.ndim(self.beta) == 0 else tuple(float(x) for x in b))

    def betas(self, n: int) -> np.ndarray:
        """Per-follower gains for agents 1..n; a list is repeated cyclically."""
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        return np.resize(b, n)


# -- leader reference profiles ----------------------------------------------

@dataclass(frozen=True)
class ConstantInput:
    value: float = 0.0
    kind = "constant"

    def __call__(self, t):
        return float(self.value)

    def constant_after(self):
        return 0.0


@dataclass(frozen=True)
class PiecewiseLinearInput:
    """Linear interpolation through ``(t, u)`` breakpoints, held flat outside.

    Repeated times encode jumps; the value at a jump is the right limit.
    """

    breakpoints: tuple = ((0.0, 0.0),)
    kind = "piecewise_linear"

    def __post_init__(self):
        bp = tuple((float(t), float(u)) for t, u in self.breakpoints)
        if not bp:
            raise InvalidInputError("piecewise-linear profile needs at least one breakpoint")
        if any(b[0] < a[0] for a, b in zip(bp, bp[1:])):
            raise InvalidInputError("breakpoint times must be non-decreasing")
        object.__setattr__(self, "breakpoints", bp)

    def __call__(self, t):
        ts = [b[0] for b in self.breakpoints]
        us = [b[1] for b in self.breakpoints]
        i = int(np.searchsorted(ts, t, side="right"))
        if i == 0:
            return us[0]
        if i == len(ts):
            return us[-1]
        t0, t1 = ts[i - 1], ts[i]
        return us[i - 1] + (us[i] - us[i - 1]) * (t - t0) / (t1 - t0)

    def constant_after(self):
        return self.breakpoints[-1][0]


@dataclass(frozen=True)
class SinusoidInput:
    amplitude: float = 1.0
    frequency: float = 0.1
    phase: float = 0.0
    kind = "sinusoid"

    def __call__(self, t):
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)

    def constant_after(self):
        return 0.0 if self.amplitude == 0 else math.inf


@dataclass(frozen=True)
class StopAndGo:
    """Piecewise-constant input: accelerate, cruise, brake, then coast at zero input."""

    accel: float = 2.0
    accel_time: float = 8.0
    cruise_input: float = 2.0
    cruise_time: float = 15.0
    decel: float = 4.0
    decel_time: float = 2.0
    start_time: float = 0.0
    kind = "stop_and_go"

    def __post_init__(self):
        for name in ("accel_time", "cruise_time", "decel_time", "start_time"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")

    def __call__(self, t):
        t1 = self.start_time
        t2 = t1 + self.accel_time
        t3 = t2 + self.cruise_time
        t4 = t3 + self.decel_time
        if t < t1 or t >= t4:
            return 0.0
        if t < t2:
            return float(self.accel)
        if t < t3:
            return float(self.cruise_input)
        return -float(self.decel)

    def constant_after(self):
        return self.start_time + self.accel_time + self.cruise_time + self.decel_time


LeaderProfile = Union[ConstantInput, PiecewiseLinearInput, SinusoidInput, StopAndGo]
PROFILE_KINDS = {cls.kind: cls for cls in (ConstantInput, PiecewiseLinearInput, SinusoidInput, StopAndGo)}


def leader_input(profile: LeaderProfile, t: float, T: float = math.inf, dim: int = 1) -> np.ndarray:
    """Reference input u_0(t) applied along the direction of travel (axis 0)."""
    # slack for the float accumulation of stage times
    if not (-1e-9 <= t <= T + 1e-9 * max(1.0, T)):
        raise InvalidInputError(f"time {t} outside [0, {T}]")
    u = np.zeros(dim)
    u[0] = profile(t)
    return u


# -- control laws --------------------------------------------------------------

def _local_controls(z, zv, beta, apf: ApfParams, sp: SigmaParam):
    """Vectorised local law over followers; z, zv have shape (n, d), beta (n,)."""
    sq = np.sum(z * z, axis=-1, keepdims=True)
    if np.any(sq == 0):
        k = int(np.argwhere(sq[..., 0] == 0)[0][-1])
        raise CollisionError(f"agents {k} and {k + 1} coincide", pair=(k, k + 1), gap=0.0)
    root = np.sqrt(1.0 + sq)
    s = sq / (root + 1.0) / sp.sigma
    # grad_{y_k} V = V'(s) * (-z) / (sigma * root)
    grad_follower = apf_deriv(s, apf) * (-z) / (sp.sigma * root)
    return beta[:, None] * zv - POTENTIAL_WEIGHT * grad_follower


def local_control(z, z_v, cfg: ControllerConfig, k: int = 1):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z_v = np.atleast_1d(np.asarray(z_v, dtype=float))
    beta = cfg.betas(k)[k - 1 : k]
    return _local_controls(z[None, :], z_v[None, :], beta, cfg.apf, cfg.sigma)[0]


def compose_control(u_prev, u_local):
    return np.asarray(u_prev, dtype=float) + np.asarray(u_local, dtype=float)


def compute_all_controls(y, v, t, cfg: ControllerConfig, profile: LeaderProfile, T: float = math.inf):
    """Controls for all agents; ``y``, ``v`` have shape (n+1, d), leader first.

    A leading batch axis (m, n+1, d) with ``t`` of shape (m,) evaluates many
    states at once. The feedforward chain ``u_k = u_{k-1} + u_k^l`` is
    evaluated in one pass, so agent k always receives the predecessor input of
    the same evaluation.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    n1, d = y.shape[-2:]
    u = np.empty(y.shape)
    if y.ndim == 2:
        u[0] = leader_input(profile, t, T, d)
    else:
        u[:, 0] = [leader_input(profile, ti, T, d) for ti in np.asarray(t, dtype=float)]
    if n1 == 1:
        return u
    z = y[..., :-1, :] - y[..., 1:, :]
    zv = v[..., :-1, :] - v[..., 1:, :]
    ul = _local_controls(z, zv, cfg.betas(n1 - 1), cfg.apf, cfg.sigma)
    if cfg.variant is Variant.FEEDFORWARD:
        # same association order as repeated compose_control; a prefix never
        # sees later agents
        u[:] = np.cumsum(np.concatenate([u[..., :1, :], ul], axis=-2), axis=-2)
    else:
        u[..., 1:, :] = ul
    return u


class ClosedLoopLaw:
    """Precomputed form of :func:`compute_all_controls` for repeated evaluation.

    Same arithmetic, minus per-call validation; used inside the integrator.
    """

    def __init__(self, cfg: ControllerConfig, profile: LeaderProfile, n: int, dim: int, T: float = math.inf):
        from .apf import FAMILIES

        self.beta = cfg.betas(n)[:, None]
        self.sigma = cfg.sigma.sigma
        self.a = cfg.apf.amplitude
        self.delta = cfg.apf.delta_sigma
        self.deriv = FAMILIES[cfg.apf.family][1]
        self.feedforward = cfg.variant is Variant.FEEDFORWARD
        self.profile = profile
        self.T = T
        self.dim = dim

    def __call__(self, y, v, t):
        return self.evaluate(y, v, t)[0]

    def evaluate(self, y, v, t):
        """Controls of all agents and the local components of the followers."""
        if not (-1e-9 <= t <= self.T + 1e-9 * max(1.0, self.T)):
            raise InvalidInputError(f"time {t} outside [0, {self.T}]")
        m = y.shape[0] - 1
        if m == 0:
            u0 = np.zeros((1, y.shape[1]))
            u0[0, 0] = self.profile(t)
            return u0, u0[1:]
        z = y[:-1] - y[1:]
        zv = v[:-1] - v[1:]
        sq = np.einsum("ij,ij->i", z, z)[:, None]
        if m and sq.min() == 0:
            k = int(np.flatnonzero(sq[:, 0] == 0)[0])
            raise CollisionError(f"agents {k} and {k + 1} coincide", pair=(k, k + 1), gap=0.0)
        root = np.sqrt(1.0 + sq)
        s = sq / (root + 1.0) / self.sigma
        grad_follower = self.deriv(s, self.a, self.delta) * (-z) / (self.sigma * root)
        ul = self.beta[:m] * zv - POTENTIAL_WEIGHT * grad_follower
        u0 = np.zeros((1, y.shape[1]))
        u0[0, 0] = self.profile(t)
        if self.feedforward:
            return np.cumsum(np.concatenate([u0, ul]), axis=0), ul
        return np.concatenate([u0, ul]), ul
