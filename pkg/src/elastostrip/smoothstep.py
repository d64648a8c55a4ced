"""C2 quintic smoothstep and the cutoff/lifting profiles built from it."""
from __future__ import annotations

import numpy as np


def smoothstep(t):
    """0 for t <= 0, 1 for t >= 1, 6t^5 - 15t^4 + 10t^3 in between."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def smoothstep_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc ** 2 * (1.0 - tc) ** 2, 0.0)


def cutoff(x, a: float = 1.0, b: float = 2.0):
    """Cutoff rising from 0 at x = a to 1 at x = b."""
    return smoothstep((np.asarray(x, dtype=float) - a) / (b - a))


def cutoff_derivative(x, a: float = 1.0, b: float = 2.0):
    return smoothstep_derivative((np.asarray(x, dtype=float) - a) / (b - a)) / (b - a)
