"""Log-log regression shared by every scaling check."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class DecayFitReport:
    slope: float
    intercept: float
    max_residual: float
    R_grid: list[float]
    values: list[float]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def loglog_fit(x, y, min_points: int = 4) -> DecayFitReport:
    """Least-squares fit of log|y| = slope * log x + intercept.

    Raises ValueError on an unsorted grid, too few points, or a zero value
    (whose logarithm is undefined).
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if len(x) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(x)}")
    if np.any(np.diff(x) <= 0) or x[0] <= 0:
        raise ValueError("grid must be positive and strictly ascending")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("values must be finite and nonzero for a log-log fit")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return DecayFitReport(
        slope=float(slope),
        intercept=float(intercept),
        max_residual=float(np.max(np.abs(resid))),
        R_grid=x.tolist(),
        values=y.tolist(),
    )
