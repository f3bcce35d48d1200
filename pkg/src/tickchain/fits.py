"""Power-law fits y = a x^b by least squares in log-log coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FitResult:
    exponent: float
    prefactor: float
    r_squared: float
    points_used: tuple  # ((x, y), ...)
    excluded: tuple  # ((x, y, reason), ...)


def fit_power_law(points, min_points: int = 3) -> FitResult:
    """Ordinary least squares of log y on log x.

    Non-finite or non-positive points are excluded with a reason; at least
    ``min_points`` usable points are required.
    """
    used, excluded = [], []
    for x, y in points:
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            excluded.append((x, y, "non-finite"))
        elif x <= 0 or y <= 0:
            excluded.append((x, y, "non-positive"))
        else:
            used.append((x, y))
    if len(used) < min_points:
        raise ValueError(
            f"power-law fit needs at least {min_points} usable points, got {len(used)}"
        )
    lx = np.log(np.array([p[0] for p in used]))
    ly = np.log(np.array([p[1] for p in used]))
    slope, intercept = np.polyfit(lx, ly, 1)
    residuals = ly - (slope * lx + intercept)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        r_squared=r_squared,
        points_used=tuple(used),
        excluded=tuple(excluded),
    )


def exponent_convergence(points, min_points: int = 3) -> list[tuple[float, float]]:
    """Fit exponent as the smallest retained x is raised step by step.

    Returns (x_min, exponent) rows: the full-set fit first, then refits after
    progressively dropping the smallest-x points, while at least
    ``min_points`` remain.  Mirrors a finite-size-effect convergence trace.
    """
    pts = sorted(((float(x), float(y)) for x, y in points), key=lambda p: p[0])
    trace = []
    while len(pts) >= min_points:
        fit = fit_power_law(pts, min_points)
        trace.append((pts[0][0], fit.exponent))
        pts = pts[1:]
    if not trace:
        raise ValueError(f"need at least {min_points} points")
    return trace
