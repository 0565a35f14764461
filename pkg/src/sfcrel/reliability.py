"""Chain reliability and convex piecewise-linear penalty functions."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

INCREASING = "increasing"
DECREASING = "decreasing"

DEFAULT_GAMMA = 10.0
DEFAULT_BREAKPOINTS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def chain_reliability_simple(reliabilities: Sequence[float]) -> float:
    """Reliability of a chain whose functions each run exactly once."""
    if len(reliabilities) == 0:
        raise ValueError("chain needs at least one function")
    return math.prod(float(r) for r in reliabilities)


def chain_reliability_replicated(groups: Sequence[Sequence[float]]) -> float:
    """Reliability of a chain where function ``i`` runs on servers ``groups[i]``.

    A function survives while at least one replica is up, so each group
    contributes ``1 - prod(1 - R)``.
    """
    if len(groups) == 0:
        raise ValueError("chain needs at least one function")
    total = 1.0
    for group in groups:
        if len(group) == 0:
            raise ValueError("every function needs at least one replica")
        total *= 1.0 - math.prod(1.0 - float(r) for r in group)
    return total


def exp_penalty(u, gamma: float = DEFAULT_GAMMA):
    """Normalized exponential ``(e^(gamma u) - 1) / (e^gamma - 1)``."""
    return np.expm1(gamma * np.asarray(u, dtype=float)) / math.expm1(gamma)


def inverse_exp_penalty(u, gamma: float = DEFAULT_GAMMA):
    return exp_penalty(1.0 - np.asarray(u, dtype=float), gamma)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Convex function ``max_i (a_i u - b_i)`` on [0, 1].

    For a decreasing penalty the slopes are negative and rise toward zero.
    """

    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    orientation: str = INCREASING

    def __post_init__(self):
        if len(self.slopes) == 0 or len(self.slopes) != len(self.intercepts):
            raise ValueError("need one intercept per slope and at least one piece")
        if any(b <= a for a, b in zip(self.slopes, self.slopes[1:])):
            raise ValueError("slopes must strictly increase across pieces")
        if self.orientation == DECREASING and self.slopes[-1] > 0:
            raise ValueError("decreasing penalty cannot have positive slopes")

    @property
    def pieces(self) -> list[tuple[float, float]]:
        return list(zip(self.slopes, self.intercepts))

    def __len__(self) -> int:
        return len(self.slopes)

    def __call__(self, u):
        return penalty_eval(self, u)


def build_penalty(
    gamma: float = DEFAULT_GAMMA,
    breakpoints: Sequence[float] = DEFAULT_BREAKPOINTS,
    orientation: str = INCREASING,
) -> PiecewiseLinear:
    """Secant interpolation of the (inverse) exponential penalty.

    Piece ``i`` is the chord of the target curve over
    ``[breakpoints[i], breakpoints[i + 1]]``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    u = np.asarray(breakpoints, dtype=float)
    if u.size < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(u) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    if abs(u[0]) > 0 or abs(u[-1] - 1.0) > 0:
        raise ValueError("breakpoints must span [0, 1]")
    if orientation == INCREASING:
        g = exp_penalty(u, gamma)
        g[0], g[-1] = 0.0, 1.0
    elif orientation == DECREASING:
        g = inverse_exp_penalty(u, gamma)
        g[0], g[-1] = 1.0, 0.0
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    a = np.diff(g) / np.diff(u)
    b = a * u[:-1] - g[:-1]
    return PiecewiseLinear(tuple(a.tolist()), tuple(b.tolist()), orientation)


def default_penalties(gamma: float = DEFAULT_GAMMA) -> tuple[PiecewiseLinear, PiecewiseLinear]:
    """(utilization penalty, reliability penalty) with the default breakpoints."""
    return build_penalty(gamma, orientation=INCREASING), build_penalty(gamma, orientation=DECREASING)


def penalty_eval(pwl: PiecewiseLinear, u):
    """Epigraph value ``max_i (a_i u - b_i)``; ``u`` outside [0, 1] is clamped."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)):
        warnings.warn("penalty argument outside [0, 1] clamped", RuntimeWarning, stacklevel=2)
        arr = np.clip(arr, 0.0, 1.0)
    a = np.asarray(pwl.slopes)
    b = np.asarray(pwl.intercepts)
    vals = np.max(np.multiply.outer(arr, a) - b, axis=-1)
    return float(vals) if vals.ndim == 0 else vals
