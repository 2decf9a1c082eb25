"""Artificial potential functions of the sigma-norm gap between neighbours.

A family is a pair (value, derivative) of functions of the sigma-norm gap ``s``
that is infinite at contact and has a unique zero minimum at ``delta_sigma``.
The built-in ``"rational"`` family is

    V(s) = a * (s - delta)**2 / s
    V'(s) = a * (s - delta) * (s + delta) / s**2

Other families can be added with :func:`register_family`, which runs the
axiom checks numerically before accepting them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CollisionError, DomainError, InvalidInputError
from .sigma_math import SigmaParam, euclid_from_sigma, sigma_norm

Scalar = Callable[[np.ndarray, float, float], np.ndarray]


@dataclass(frozen=True)
class ApfParams:
    amplitude: float = 1.0
    delta_sigma: float = 1.0
    family: str = "rational"

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise InvalidInputError(f"APF amplitude must be positive, got {self.amplitude!r}")
        if not (np.isfinite(self.delta_sigma) and self.delta_sigma > 0):
            raise InvalidInputError(f"APF delta_sigma must be positive, got {self.delta_sigma!r}")
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown APF family {self.family!r}; known: {sorted(FAMILIES)}")

    @classmethod
    def from_gap(cls, amplitude: float, gap: float, sigma: SigmaParam = SigmaParam(), family="rational"):
        """Parameters whose minimum sits at the Euclidean gap ``gap``."""
        return cls(amplitude, float(sigma_norm([gap], sigma)), family)

    def delta_euclid(self, sigma: SigmaParam = SigmaParam()) -> float:
        return euclid_from_sigma(self.delta_sigma, sigma)


def _rational_value(s, a, delta):
    return a * (s - delta) ** 2 / s


def _rational_deriv(s, a, delta):
    return a * (s - delta) * (s + delta) / (s * s)


FAMILIES: dict[str, tuple[Scalar, Scalar]] = {"rational": (_rational_value, _rational_deriv)}


def check_axioms(value: Scalar, deriv: Scalar, amplitude=1.0, delta=1.0, n_grid=2001):
    """Numerical axiom checks for an APF family; returns a list of failure messages.

    Checked: barrier (value at s=1e-12 above 1e10), zero value and zero slope at
    ``delta``, a single - to + sign change of the derivative located at ``delta``,
    nonnegativity and growth for large ``s``.
    """
    problems = []
    if not value(np.float64(1e-12), amplitude, delta) > 1e10:
        problems.append("value does not blow up as the gap tends to 0")
    if abs(value(np.float64(delta), amplitude, delta)) > 1e-12:
        problems.append("minimum value at delta is not 0")
    if abs(deriv(np.float64(delta), amplitude, delta)) > 1e-9:
        problems.append("derivative does not vanish at delta")
    s = delta * np.geomspace(1e-6, 1e6, n_grid)
    vals = value(s, amplitude, delta)
    if np.any(vals < 0):
        problems.append("value is negative somewhere")
    signs = np.sign(deriv(s, amplitude, delta))
    signs = signs[signs != 0]
    changes = np.flatnonzero(np.diff(signs))
    if len(changes) != 1 or signs[0] >= 0:
        problems.append("derivative must change sign exactly once, from - to +")
    else:
        lo, hi = s[changes[0]], s[changes[0] + 1]
        if not lo <= delta <= hi:
            problems.append("derivative sign change is not at delta")
    if not value(np.float64(delta * 1e6), amplitude, delta) > value(np.float64(delta * 1e3), amplitude, delta):
        problems.append("value is not growing for large gaps")
    return problems


def register_family(name: str, value: Scalar, deriv: Scalar):
    problems = check_axioms(value, deriv)
    if problems:
        raise InvalidInputError(f"APF family {name!r} rejected: " + "; ".join(problems))
    FAMILIES[name] = (value, deriv)


def _positive_gap(s):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("APF is only defined for a strictly positive sigma-norm gap")
    return s


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def apf_value(s, p: ApfParams):
    value, _ = FAMILIES[p.family]
    return _out(value(_positive_gap(s), p.amplitude, p.delta_sigma))


def apf_deriv(s, p: ApfParams):
    _, deriv = FAMILIES[p.family]
    return _out(deriv(_positive_gap(s), p.amplitude, p.delta_sigma))


def _grad_wrt_gap(z, p: ApfParams, sp: SigmaParam):
    """dV/dz for z = y_prev - y_k, vectorised over leading axes."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    sq = np.sum(z * z, axis=-1, keepdims=True)
    if np.any(sq == 0):
        idx = np.flatnonzero(sq.reshape(-1) == 0)
        raise CollisionError("coincident positions: APF gradient undefined", pair=int(idx[0]) if idx.size else None, gap=0.0)
    root = np.sqrt(1.0 + sq)
    s = sq / (root + 1.0) / sp.sigma
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        g = apf_deriv(s, p) * z / (sp.sigma * root)
    if not np.all(np.isfinite(g)):
        raise CollisionError("gap too small: the potential barrier overflows", gap=float(np.sqrt(sq.min())))
    return g


def apf_grad_follower(y_k, y_prev, p: ApfParams, sp: SigmaParam = SigmaParam()):
    """Gradient of V(||y_k - y_prev||_sigma) with respect to the follower position y_k."""
    z = np.asarray(y_prev, dtype=float) - np.asarray(y_k, dtype=float)
    return -_grad_wrt_gap(z, p, sp)


def apf_grad_predecessor(y_k, y_prev, p: ApfParams, sp: SigmaParam = SigmaParam()):
    """Gradient of V(||y_k - y_prev||_sigma) with respect to y_prev."""
    z = np.asarray(y_prev, dtype=float) - np.asarray(y_k, dtype=float)
    return _grad_wrt_gap(z, p, sp)


def eta_c(c: float, p: ApfParams, sp: SigmaParam = SigmaParam(), tol=1e-10) -> float:
    """Euclidean gap below which the potential exceeds ``c``.

    Bisection for the root of V(s) = c on (0, delta]; returns the conversion of
    the lower bracket end, so V > c holds on the whole returned interval.
    """
    if not (np.isfinite(c) and c > 0):
        raise InvalidInputError(f"level c must be positive, got {c!r}")
    value, _ = FAMILIES[p.family]
    a, delta = p.amplitude, p.delta_sigma
    lo, hi = max(1e-14, np.finfo(float).tiny), delta
    if value(lo, a, delta) <= c:
        # barrier does not reach c above the bracket floor
        return float(euclid_from_sigma(lo, sp))
    # geometric midpoints while the bracket spans decades; the stopping rule is
    # absolute tol, tightened to relative tol for roots below 1
    while hi - lo > tol * min(1.0, hi):
        mid = np.sqrt(lo * hi) if hi / lo > 4.0 else 0.5 * (lo + hi)
        if value(mid, a, delta) > c:
            lo = mid
        else:
            hi = mid
    return float(euclid_from_sigma(lo, sp))
