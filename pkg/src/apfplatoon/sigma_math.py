"""Sigma-norm: a smooth surrogate of the Euclidean norm.

    ||x||_sigma = (sqrt(1 + ||x||^2) - 1) / sigma

All functions accept a single vector or a stack of vectors (last axis is the
spatial dimension) and broadcast accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class SigmaParam:
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInputError(f"sigma must be a positive finite number, got {self.sigma!r}")


def _as_vectors(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("sigma-norm input contains non-finite values")
    if x.ndim == 0:
        x = x.reshape(1)
    return x


def sigma_norm(x, p: SigmaParam = SigmaParam()):
    x = _as_vectors(x)
    sq = np.sum(x * x, axis=-1)
    # sqrt(1 + q) - 1 == q / (sqrt(1 + q) + 1), free of cancellation near 0
    out = sq / (np.sqrt(1.0 + sq) + 1.0) / p.sigma
    return float(out) if out.ndim == 0 else out


def sigma_norm_grad(x, p: SigmaParam = SigmaParam()):
    """Gradient x / (sigma * sqrt(1 + ||x||^2)); its norm is always below 1/sigma."""
    x = _as_vectors(x)
    root = np.sqrt(1.0 + np.sum(x * x, axis=-1, keepdims=True))
    return x / (p.sigma * root)


def euclid_from_sigma(s, p: SigmaParam = SigmaParam()):
    """Euclidean length whose sigma-norm is ``s`` (inverse of :func:`sigma_norm`)."""
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise InvalidInputError("sigma-norm value must be finite and nonnegative")
    # (sigma*s + 1)^2 - 1 written as t*(t + 2) to avoid cancellation for small s
    t = p.sigma * s
    out = np.sqrt(t * (t + 2.0))
    return float(out) if out.ndim == 0 else out
