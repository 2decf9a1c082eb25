"""Double-integrator agents with a velocity-dependent drift: y' = v, v' = f(v) + u."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise InvalidInputError("agent state must be finite")


@dataclass(frozen=True)
class LinearDrag:
    c1: float = 0.0
    name = "linear_drag"

    def __post_init__(self):
        if not self.c1 >= 0:
            raise ConfigError("linear drag coefficient c1 must be >= 0")

    def f(self, v):
        return -self.c1 * np.asarray(v, dtype=float)


@dataclass(frozen=True)
class SignedQuadraticDrag:
    """f(v) = -c1 v - c2 v ||v||, the quadratic term scaled by speed."""

    c1: float = 0.0
    c2: float = 0.0
    name = "signed_quadratic_drag"

    def __post_init__(self):
        if not (self.c1 >= 0 and self.c2 >= 0):
            raise ConfigError("drag coefficients c1, c2 must be >= 0")

    def f(self, v):
        v = np.asarray(v, dtype=float)
        speed = np.sqrt(np.sum(v * v, axis=-1, keepdims=True)) if v.ndim else np.abs(v)
        return -self.c1 * v - self.c2 * v * speed


@dataclass(frozen=True)
class CustomModel:
    """User drift ``fn`` with a claimed Lipschitz-like constant ``alpha_hint``.

    ``gamma_hint`` is the supremum of f' for a concave differentiable ``fn``;
    leave it ``None`` when that does not apply.
    """

    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    alpha_hint: float = 0.0
    gamma_hint: Optional[float] = None
    name = "custom"

    def f(self, v):
        return np.asarray(self.fn(np.asarray(v, dtype=float)), dtype=float)


VehicleModel = Union[LinearDrag, SignedQuadraticDrag, CustomModel]


@dataclass(frozen=True)
class NotApplicable:
    reason: str

    def __bool__(self):
        return False


def accel(m: VehicleModel, v, u):
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(u))):
        raise InvalidInputError("accel inputs must be finite")
    return m.f(v) + u


def alpha_bound(m: VehicleModel) -> float:
    """Tightest analytic alpha with (v2-v1).(f(v2)-f(v1)) <= alpha ||v2-v1||^2."""
    if isinstance(m, LinearDrag):
        return -m.c1
    if isinstance(m, SignedQuadraticDrag):
        # v -> v||v|| is the gradient of the convex ||v||^3 / 3, hence monotone
        return -m.c1
    return float(m.alpha_hint)


def alpha_estimate(m: VehicleModel, box, samples: int = 10_000, dim: int = 1, seed: int = 0) -> float:
    """Sampled max of the Lipschitz-like quotient over random pairs in ``box``.

    ``box`` is ``(low, high)``; scalars apply to every axis.
    """
    if samples < 2:
        raise InvalidInputError("need at least 2 samples")
    low, high = (np.broadcast_to(np.asarray(b, dtype=float), (dim,)) for b in box)
    if np.any(~(high > low)):
        raise InvalidInputError("velocity box has zero volume")
    rng = np.random.default_rng(seed)
    v1 = rng.uniform(low, high, size=(samples, dim))
    v2 = rng.uniform(low, high, size=(samples, dim))
    dv = v2 - v1
    keep = np.sum(dv * dv, axis=1) > 0
    dv, v1, v2 = dv[keep], v1[keep], v2[keep]
    q = np.sum(dv * (m.f(v2) - m.f(v1)), axis=1) / np.sum(dv * dv, axis=1)
    return float(np.max(q))


def gamma_bound(m: VehicleModel):
    """sup f' for concave differentiable drifts, else :class:`NotApplicable`."""
    if isinstance(m, LinearDrag):
        return -m.c1
    if isinstance(m, SignedQuadraticDrag):
        if m.c2 == 0:
            return -m.c1
        return NotApplicable("signed quadratic drag is concave only for v >= 0 (f'' changes sign at v = 0)")
    if m.gamma_hint is not None:
        return float(m.gamma_hint)
    return NotApplicable("custom model without a concavity bound")


def check_custom_alpha(m: VehicleModel, box=(-50.0, 50.0), samples=10_000, dim=1, tol=1e-9):
    """Refuse a custom model whose sampled quotient exceeds its claimed alpha."""
    if not isinstance(m, CustomModel):
        return
    est = alpha_estimate(m, box, samples, dim)
    if est > m.alpha_hint + tol:
        raise ConfigError(f"custom model alpha_hint={m.alpha_hint} is violated: sampled value {est:.6g}")


def initial_positions(spacings, dim: int = 1):
    """Positions y_k(0) = -(l_0 + ... + l_k) along the first axis, shape (n+1, dim)."""
    ell = np.asarray(spacings, dtype=float).reshape(-1)
    if ell.size == 0 or np.any(~(ell > 0)) or not np.all(np.isfinite(ell)):
        raise ConfigError(f"initial spacings must be positive and finite, got {ell.tolist()}")
    y = np.zeros((ell.size, dim))
    y[:, 0] = -np.cumsum(ell)
    return y


def initial_platoon(spacings, dim: int = 1) -> list[AgentState]:
    y = initial_positions(spacings, dim)
    return [AgentState(row.copy(), np.zeros(dim)) for row in y]
