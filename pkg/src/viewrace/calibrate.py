"""Estimate a content's adoption rate from an observed viewcount series."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np


class DegenerateSeries(ValueError):
    pass


class LambdaFit(NamedTuple):
    lambda_hat: float
    z_hat: float
    rms_residual: float


def estimate_lambda(series: Sequence[tuple[float, float]], M: float,
                    u_assumed: float = 1.0) -> LambdaFit:
    """Least-squares fit of the single-content fluid solution.

    With ``x = views/M`` the model predicts ``-ln(1 - x) = lambda u t + const``,
    so a straight-line fit gives ``lambda = slope/u`` and ``z = 1 - e^(-const)``.
    """
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise DegenerateSeries("need at least 3 (t, views) pairs")
    t, views = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise DegenerateSeries("times must be strictly increasing")
    if np.ptp(views) == 0:
        raise DegenerateSeries("viewcount never changes")
    frac = views / M
    if np.any(frac >= 1):
        raise DegenerateSeries("views reach the whole viewer base")
    target = -np.log1p(-frac)
    slope, const = np.polyfit(t, target, 1)
    if not slope > 0:
        raise DegenerateSeries(f"non-positive fitted slope {slope:.3g}")
    resid = target - (slope * t + const)
    return LambdaFit(float(slope / u_assumed), float(-math.expm1(-const)),
                     float(np.sqrt(np.mean(resid ** 2))))
