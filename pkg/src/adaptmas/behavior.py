"""Agent decision rules and the policy-belief layer.

Actions are handled as arrays over the whole population; every rule is
elementwise, so a scalar call behaves like a single agent.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, InsufficientHistory


def static_action(theta):
    """Baseline action g(theta) = theta."""
    return np.array(theta, dtype=float)


def adaptive_update(x, theta, eta, effective_price, congestion, relax=0.0, x_max=np.inf):
    """One learning step: relax toward the baseline, abate by eta * (price + congestion).

    With ``relax=0`` this is x - eta * (price + congestion), clamped to
    [0, x_max].
    """
    x = np.asarray(x, dtype=float)
    if not 0.0 <= relax <= 1.0:
        raise ValueError("relax must lie in [0, 1]")
    if np.any(np.asarray(congestion) < 0):
        raise ValueError("congestion must be >= 0")
    new = x + relax * (np.asarray(theta, dtype=float) - x) - np.asarray(eta, dtype=float) * (
        effective_price + congestion
    )
    return np.clip(new, 0.0, x_max)


@dataclass
class BeliefState:
    """Smoothed policy estimate, smoothed per-step slope and a short history."""

    estimate: np.ndarray
    slope: np.ndarray = None
    history: deque = field(default_factory=deque)
    max_history: int = 4

    def __post_init__(self):
        self.estimate = np.asarray(self.estimate, dtype=float).copy()
        if self.slope is None:
            self.slope = np.zeros_like(self.estimate)
        self.slope = np.asarray(self.slope, dtype=float).copy()
        if self.slope.shape != self.estimate.shape:
            raise DimensionMismatch("slope and estimate shapes differ")
        if self.max_history < 4:
            raise ValueError("belief history must hold at least 4 policy vectors")
        self.history = deque((np.asarray(h, dtype=float) for h in self.history), maxlen=self.max_history)
        if not self.history:
            self.history.append(self.estimate.copy())

    @classmethod
    def initial(cls, policy_values, max_history=4):
        return cls(np.asarray(policy_values, dtype=float), max_history=max_history)


def belief_update(belief, observed, smoothing):
    """Exponential smoothing of the policy level and its per-step change."""
    if not 0.0 < smoothing <= 1.0:
        raise ValueError("smoothing must lie in (0, 1]")
    p = np.asarray(observed, dtype=float)
    if p.shape != belief.estimate.shape:
        raise DimensionMismatch(f"policy of shape {p.shape} vs belief {belief.estimate.shape}")
    prev = belief.history[-1]
    est = smoothing * p + (1.0 - smoothing) * belief.estimate
    slope = smoothing * (p - prev) + (1.0 - smoothing) * belief.slope
    hist = deque(belief.history, maxlen=belief.max_history)
    hist.append(p.copy())
    return BeliefState(est, slope, hist, belief.max_history)


def anticipated_policy(belief, lookahead):
    """Linear extrapolation estimate + lookahead * slope of the whole vector."""
    if lookahead < 0:
        raise ValueError("lookahead must be >= 0")
    return belief.estimate + lookahead * belief.slope


def anticipated_price(belief, lookahead, index=0):
    """Extrapolated price coordinate, floored at zero."""
    return max(0.0, float(anticipated_policy(belief, lookahead)[index]))


def trend_predicate(history, coordinate=0, threshold=0.0):
    """True iff the least-squares slope of the last four values exceeds ``threshold``."""
    hist = [np.atleast_1d(np.asarray(h, dtype=float)) for h in history]
    if len(hist) < 4:
        raise InsufficientHistory(f"need 4 policy vectors, have {len(hist)}")
    y = np.array([h[coordinate] for h in hist[-4:]])
    # slope of y on t = 0..3: sum((t - 1.5) * y) / 5
    slope = float(np.dot(np.arange(4) - 1.5, y) / 5.0)
    return slope > threshold
