"""Fixed-step RK4 integration of the closed-loop platoon.

State is a single array ``x`` of shape ``(2, n+1, d)``: ``x[0]`` positions,
``x[1]`` velocities, leader first. Controls are re-evaluated at every RK4
stage, so the integrator approximates the continuous-time loop.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import lyap_local
from .controller import ClosedLoopLaw
from .dynamics import initial_positions
from .errors import CollisionError, DivergenceError, StiffnessError
from .scenario import Scenario, scenario_hash

COMPLETED = "completed"
COLLISION = "collision"
DIVERGED = "diverged"
STIFF = "stiff"


def _law(scenario: Scenario, n_agents: int):
    return ClosedLoopLaw(scenario.controller, scenario.profile, max(n_agents - 1, 0), scenario.dim, scenario.T)


def _rk4(x, t, dt, scenario, law=None):
    """Returns the new state, the largest change of each follower's local control
    across the four stages, and the controls at the start of the step."""
    law = law or _law(scenario, x.shape[1])
    f = scenario.model.f

    def field(xs, ts):
        if not np.isfinite(xs).all():
            _check_finite(xs)
        u, ul = law.evaluate(xs[0], xs[1], ts)
        return np.stack([xs[1], f(xs[1]) + u]), u, ul

    k1, u1, l1 = field(x, t)
    k2, _, l2 = field(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3, _, l3 = field(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4, _, l4 = field(x + dt * k3, t + dt)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if np.isfinite(scenario.guard.ceiling) and l1.size:
        spread = np.stack([l2, l3, l4]) - l1
        umag = np.sqrt(np.max(np.sum(spread * spread, axis=-1), axis=0))
    else:
        umag = None
    return x_new, umag, u1


def _check_finite(x):
    bad = ~np.all(np.isfinite(x), axis=(0, 2))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DivergenceError(f"non-finite state for agent {k}", agent=k)


def rk4_step(x, t: float, dt: float, scenario: Scenario):
    """One classical RK4 step; the number of agents is taken from ``x``."""
    x_new, _, _ = _rk4(np.asarray(x, dtype=float), t, dt, scenario)
    _check_finite(x_new)
    return x_new


def guard_step(x, t: float, dt: float, scenario: Scenario, _depth: int = 0, _law_obj=None):
    """RK4 step that splits into halves while a follower's local control moves by
    more than the guard ceiling across the stages of one step.

    The APF barrier is the only stiff term; near it the control changes fast
    within a step and halving resolves it. Dynamics are untouched.

    Returns ``(x_new, smallest substep used, number of substeps, controls at x)``.
    """
    x = np.asarray(x, dtype=float)
    law = _law_obj or _law(scenario, x.shape[1])
    x_new, umag, u_start = _rk4(x, t, dt, scenario, law)
    if umag is not None:
        # NaN controls are left to the divergence check below
        umag = np.where(np.isnan(umag), -np.inf, umag)
        if umag.max() > scenario.guard.ceiling:
            if _depth >= scenario.guard.max_halvings:
                # an overflowing step is a divergence, not stiffness
                _check_finite(x_new)
                k = int(np.argmax(umag)) + 1
                gap = float(np.linalg.norm(x[0, k - 1] - x[0, k]))
                raise StiffnessError(
                    f"local control of agent {k} still varies by more than {scenario.guard.ceiling:g} after "
                    f"{_depth} halvings (dt = {dt:.3g}, gap = {gap:.6g})",
                    agent=k,
                    gap=gap,
                )
            half = 0.5 * dt
            x_mid, h1, n1, _ = guard_step(x, t, half, scenario, _depth + 1, law)
            _raise_on_collision(x_mid, t + half, scenario.collision_epsilon)
            x_end, h2, n2, _ = guard_step(x_mid, t + half, half, scenario, _depth + 1, law)
            return x_end, min(h1, h2), n1 + n2, u_start
    _check_finite(x_new)
    return x_new, dt, 1, u_start


@dataclass
class TrajectoryLog:
    t: np.ndarray
    y: np.ndarray
    v: np.ndarray
    u: np.ndarray
    z: np.ndarray
    zv: np.ndarray
    L: np.ndarray
    dt: float
    stride: int
    status: str = COMPLETED
    message: str = ""
    scenario_hash: str = ""
    substeps: int = 0
    min_dt_used: float = 0.0
    wall_time: float = 0.0
    collision_pair: tuple | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.shape[1] - 1

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    def gaps(self) -> np.ndarray:
        """Euclidean gap norms, shape (m, n)."""
        return np.linalg.norm(self.z, axis=-1)

    def freeze(self):
        for a in (self.t, self.y, self.v, self.u, self.z, self.zv, self.L):
            a.setflags(write=False)
        return self


def _lyapunov_series(z, zv, scenario):
    m, n = z.shape[:2]
    L = np.full((m, n), np.inf)
    ok = np.sum(z * z, axis=-1) > 0
    if np.any(ok):
        with np.errstate(all="ignore"):
            L[ok] = lyap_local(z[ok], zv[ok], scenario.controller.apf, scenario.controller.sigma)
    return L


def _collided(x, eps):
    z = x[0, :-1] - x[0, 1:]
    if z.shape[-1] == 1:
        # 1-D: a sign flip means the follower passed through its predecessor
        gap = z[:, 0]
        hit = gap <= eps
    else:
        gap = np.linalg.norm(z, axis=-1)
        hit = gap <= eps
    if np.any(hit):
        k = int(np.flatnonzero(hit)[0])
        return (k, k + 1), float(gap[k])
    return None


def _raise_on_collision(x, t, eps):
    hit = _collided(x, eps)
    if hit is not None:
        pair, gap = hit
        exc = CollisionError(f"gap between agents {pair[0]} and {pair[1]} fell to {gap:.6g} <= {eps:g} at t = {t:.6g}",
                             pair=pair, gap=gap)
        exc.state, exc.t = x, t
        raise exc


def run(scenario: Scenario, x0=None) -> TrajectoryLog:
    """Integrate the scenario from its initial platoon over [0, T].

    ``x0`` overrides the initial state (shape (2, n+1, d)). Configuration errors
    are raised before any stepping; collisions, divergence and stiffness end
    the run early and are reported through ``status``.
    """
    scenario.validate()
    start = time.perf_counter()
    n1, d = scenario.n + 1, scenario.dim
    if x0 is None:
        x = np.zeros((2, n1, d))
        x[0] = initial_positions(scenario.ell(), d)
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (2, n1, d):
            raise ValueError(f"x0 must have shape {(2, n1, d)}")

    steps = scenario.n_steps()
    law = _law(scenario, n1)
    ts, ys, vs, us = [0.0], [x[0].copy()], [x[1].copy()], [None]
    status, message, pair = COMPLETED, "", None
    substeps, min_dt = 0, scenario.dt
    for i in range(steps):
        t = i * scenario.dt
        h = min(scenario.dt, scenario.T - t)
        try:
            x, h_used, nsub, u_start = guard_step(x, t, h, scenario, _law_obj=law)
        except CollisionError as exc:
            status, message, pair = COLLISION, str(exc), exc.pair
            if getattr(exc, "state", None) is not None:
                ts.append(exc.t)
                ys.append(exc.state[0].copy())
                vs.append(exc.state[1].copy())
                us.append(None)
            break
        except DivergenceError as exc:
            status, message = DIVERGED, str(exc)
            break
        except StiffnessError as exc:
            status, message = STIFF, str(exc)
            break
        if us[-1] is None and ts[-1] == t:
            us[-1] = u_start
        substeps += nsub
        if nsub > 1:
            min_dt = min(min_dt, h_used)
        t_next = scenario.T if i == steps - 1 else (i + 1) * scenario.dt
        hit = _collided(x, scenario.collision_epsilon)
        if hit is not None or (i + 1) % scenario.stride == 0 or i == steps - 1:
            ts.append(t_next)
            ys.append(x[0].copy())
            vs.append(x[1].copy())
            us.append(None)
        if hit is not None:
            pair, gap = hit
            status = COLLISION
            message = (f"gap between agents {pair[0]} and {pair[1]} fell to {gap:.6g} "
                       f"<= {scenario.collision_epsilon:g} at t = {t_next:.6g}")
            break
    for j, u in enumerate(us):
        if u is None:
            try:
                us[j] = law(ys[j], vs[j], ts[j])
            except CollisionError:
                us[j] = np.full((n1, d), np.nan)

    y = np.array(ys)
    v = np.array(vs)
    z = y[:, :-1] - y[:, 1:]
    zv = v[:, :-1] - v[:, 1:]
    log = TrajectoryLog(
        t=np.array(ts),
        y=y,
        v=v,
        u=np.array(us),
        z=z,
        zv=zv,
        L=_lyapunov_series(z, zv, scenario),
        dt=scenario.dt,
        stride=scenario.stride,
        status=status,
        message=message,
        scenario_hash=scenario_hash(scenario),
        substeps=substeps,
        min_dt_used=min_dt,
        wall_time=time.perf_counter() - start,
        collision_pair=pair,
    )
    return log.freeze()


# -- output files ----------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_csv(log: TrajectoryLog, path):
    """One row per (record, agent): ``t,k,y,v,u,z,zv,L_k``; vector columns get
    ``_0, _1, ...`` suffixes when d > 1, and z/zv/L_k are empty for the leader."""
    d = log.y.shape[-1]

    def cols(name):
        return [name] if d == 1 else [f"{name}_{j}" for j in range(d)]

    header = ["t", "k"] + cols("y") + cols("v") + cols("u") + cols("z") + cols("zv") + ["L_k"]
    blank = [""] * (2 * d + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(log.t):
            ts = _fmt(t)
            for k in range(log.n + 1):
                row = [ts, str(k)]
                row += [_fmt(a) for a in log.y[i, k]]
                row += [_fmt(a) for a in log.v[i, k]]
                row += [_fmt(a) for a in log.u[i, k]]
                if k == 0:
                    row += blank
                else:
                    row += [_fmt(a) for a in log.z[i, k - 1]]
                    row += [_fmt(a) for a in log.zv[i, k - 1]]
                    row.append(_fmt(log.L[i, k - 1]))
                w.writerow(row)


def summary(log: TrajectoryLog, scenario: Scenario) -> dict:
    gaps = log.gaps()
    desired = scenario.controller.apf.delta_euclid(scenario.controller.sigma)
    final_zv = np.linalg.norm(log.zv[-1], axis=-1)
    return {
        "name": scenario.name,
        "status": log.status,
        "message": log.message,
        "scenario_hash": log.scenario_hash,
        "n": log.n,
        "t_end": float(log.t[-1]),
        "records": int(log.t.size),
        "substeps": log.substeps,
        "min_dt_used": log.min_dt_used,
        "collision_pair": list(log.collision_pair) if log.collision_pair else None,
        "min_gap": float(gaps.min()),
        "min_gap_per_agent": [float(g) for g in gaps.min(axis=0)],
        "final_gap_error": [float(g - desired) for g in gaps[-1]],
        "final_relative_speed": [float(g) for g in final_zv],
        "wall_time": log.wall_time,
    }


def write_summary(log: TrajectoryLog, scenario: Scenario, path):
    Path(path).write_text(json.dumps(summary(log, scenario), indent=2) + "\n")
