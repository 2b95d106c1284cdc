"""Long-training speedup projections from per-epoch times.

With the baseline epoch time normalized to 1, an n-epoch run of a cached
configuration takes t_first + (n-1) * t_warm, so its speedup over the
baseline is n / (t_first + (n-1) * t_warm). Fitting inverts that relation
from measured (n, speedup) pairs.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def speedup_projection(t_first: float, t_warm: float, t_rem_epoch: float,
                       n_epochs: int) -> float:
    """Speedup of an n-epoch training vs. a flat-baseline epoch time."""
    if min(t_first, t_warm, t_rem_epoch) <= 0:
        raise ConfigError("epoch times must be positive")
    if n_epochs < 1:
        raise ConfigError("n_epochs must be >= 1")
    return (n_epochs * t_rem_epoch) / (t_first + (n_epochs - 1) * t_warm)


def fit_epoch_times(speedup_rows: list[tuple[int, float]]) -> tuple[float, float]:
    """Recover (t_first, t_warm), baseline epoch normalized to 1, from
    (n_epochs, speedup) rows: each row gives n / speedup = t_first +
    (n-1) * t_warm. Exact for two rows, least squares beyond."""
    if len(speedup_rows) < 2:
        raise ConfigError("need at least two (n, speedup) rows")
    ns = [n for n, _ in speedup_rows]
    if len(set(ns)) < 2:
        raise ConfigError("degenerate fit: all rows share the same epoch count")
    for n, s in speedup_rows:
        if n < 1 or s <= 0:
            raise ConfigError(f"invalid row ({n}, {s})")
    a = np.array([[1.0, n - 1.0] for n, _ in speedup_rows])
    b = np.array([n / s for n, s in speedup_rows])
    (t_first, t_warm), *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(t_first), float(t_warm)
