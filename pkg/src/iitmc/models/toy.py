"""Path-graph targets on ``{0, 1, ..., p}``."""

from __future__ import annotations

import math

import numpy as np

from ..core import GraphTarget

PROFILES = ("tie", "power", "geometric")


def toy_log_masses(p: int, r: float, profile: str = "tie", c: float = 1.0) -> np.ndarray:
    """Unnormalized log-masses of the path target.

    ``tie``: ``pi(0) = pi(1)`` and ``pi(k)/pi(k+1) = r`` for ``k >= 1``.
    ``power``: ``pi(0) = pi(1)`` and ``pi(k) ∝ r^{-k^c}`` for ``k >= 1``.
    ``geometric``: ``pi(k) ∝ r^{-k}``, a unique mode at 0.
    """
    k = np.arange(p + 1, dtype=float)
    lr = math.log(r)
    if profile == "tie":
        out = -np.maximum(k - 1.0, 0.0) * lr
    elif profile == "power":
        out = -(k**c) * lr
        out[0] = out[1]
    elif profile == "geometric":
        out = -k * lr
    else:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    return out - out.max()


def toy_chain(p: int, r: float, profile: str = "tie", c: float = 1.0) -> GraphTarget:
    """Target on ``{0..p}`` with ``N(x) = {x - 1, x + 1}`` and problem size ``p``."""
    if p < 2:
        raise ValueError("p must be >= 2")
    if not r > 1:
        raise ValueError("r must exceed 1")
    adjacency = [[j for j in (k - 1, k + 1) if 0 <= j <= p] for k in range(p + 1)]
    target = GraphTarget(adjacency, toy_log_masses(p, r, profile, c), dimension_p=p)
    target.profile = profile
    target.r = float(r)
    return target
