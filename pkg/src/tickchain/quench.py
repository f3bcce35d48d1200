"""Sudden-quench study: detach the first site at T_DC, track the precision.

The first site is decoupled instantly (J_1 -> 0), trapping whatever
population it still holds.  The effective precision is the precision of the
tick distribution conditioned on the tick actually occurring, evaluated from
the piecewise survival curve by quadrature: the trapped share never ticks and
is removed by the normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec, build_effective_matrix, quench_decouple_first
from .metrics import ImproperTickError, auto_horizon, tick_statistics
from .spectral import (
    EffectiveSpectrum,
    SeriesKind,
    TimeSeries,
    decompose_effective,
)

PLATEAU_THRESHOLD = 0.99


@dataclass(frozen=True)
class QuenchSweep:
    n_sites: int
    tdc_grid: np.ndarray
    n_eff: np.ndarray  # NaN where no tick occurred
    baseline: float
    plateau_onset: float


def _mode_coefficients(spectrum: EffectiveSpectrum, state: np.ndarray) -> np.ndarray:
    # <l_k|psi> = r_k . psi under the transpose pairing.
    return spectrum.right_vectors.T @ state


def piecewise_survival(
    spec: ChainSpec, t_dc: float, grid: np.ndarray
) -> TimeSeries:
    """Survival of |1> evolved under the full chain up to t_dc, quenched after."""
    if t_dc < 0:
        raise ValueError("decoupling time must be non-negative")
    grid = np.asarray(grid, dtype=float)
    if grid[-1] < t_dc:
        raise ValueError("grid must cover the decoupling time")
    full = decompose_effective(build_effective_matrix(spec))
    quenched = decompose_effective(
        build_effective_matrix(quench_decouple_first(spec))
    )

    psi0 = np.zeros(spec.n_sites, dtype=complex)
    psi0[0] = 1.0
    c_full = _mode_coefficients(full, psi0)

    def state_full(t):
        return full.right_vectors @ (np.exp(-1j * full.eigenvalues * t) * c_full)

    psi_dc = state_full(t_dc)
    c_quenched = _mode_coefficients(quenched, psi_dc)

    before = grid <= t_dc
    values = np.empty(grid.size)
    modes_b = np.exp(-1j * np.multiply.outer(grid[before], full.eigenvalues)) * c_full
    psi_b = modes_b @ full.right_vectors.T
    values[before] = np.einsum("ij,ij->i", psi_b.conj(), psi_b).real
    tau = grid[~before] - t_dc
    modes_a = np.exp(-1j * np.multiply.outer(tau, quenched.eigenvalues)) * c_quenched
    psi_a = modes_a @ quenched.right_vectors.T
    values[~before] = np.einsum("ij,ij->i", psi_a.conj(), psi_a).real
    return TimeSeries(grid, np.clip(values, 0.0, None), SeriesKind.SURVIVAL)


def effective_precision(
    series: TimeSeries, s_inf: float | None = None, floor: float = 1e-3
) -> float:
    """Precision of the absorption-conditioned tick distribution.

    Trapezoidal quadrature of the survival curve over its grid; ``s_inf`` is
    the population that never ticks (defaults to the final sample).
    """
    if series.kind is not SeriesKind.SURVIVAL:
        raise ValueError("effective precision needs a survival series")
    t = series.times
    s = series.values
    if s_inf is None:
        s_inf = float(s[-1])
    absorbed = 1.0 - s_inf
    if absorbed < floor:
        raise ImproperTickError("absorbed fraction below floor: no tick to condition on")
    excess = s - s_inf
    horizon = t[-1]
    m1 = (np.trapezoid(excess, t) - horizon * max(s[-1] - s_inf, 0.0)) / absorbed
    m2 = (
        2.0 * np.trapezoid(t * excess, t) - horizon**2 * max(s[-1] - s_inf, 0.0)
    ) / absorbed
    variance = m2 - m1 * m1
    if m1 <= 0 or variance <= 0:
        raise ImproperTickError("conditioned tick moments are degenerate")
    return float(m1 * m1 / variance)


def _observation_grid(spec: ChainSpec, points_per_unit: float = 40.0) -> np.ndarray:
    matrix = build_effective_matrix(spec)
    spectrum = decompose_effective(matrix)
    stats = tick_statistics(spectrum, matrix)
    horizon = auto_horizon(spectrum) or 2.0 * stats.mu
    n = int(math.ceil(horizon * points_per_unit))
    return np.linspace(0.0, horizon, n + 1)


def baseline_precision(spec: ChainSpec) -> float:
    matrix = build_effective_matrix(spec)
    return tick_statistics(decompose_effective(matrix), matrix).precision


def default_tdc_grid(spec: ChainSpec, points: int = 60) -> np.ndarray:
    """Log-spaced decoupling times from 1e-2 up to the mean tick time."""
    matrix = build_effective_matrix(spec)
    mu = tick_statistics(decompose_effective(matrix), matrix).mu
    return np.geomspace(1e-2, mu, points)


def sweep_quench(
    spec: ChainSpec,
    tdc_grid: np.ndarray | None = None,
    points_per_unit: float = 40.0,
) -> QuenchSweep:
    """Effective precision over a grid of decoupling times, plus plateau onset."""
    if tdc_grid is None:
        tdc_grid = default_tdc_grid(spec)
    tdc_grid = np.asarray(tdc_grid, dtype=float)
    if np.any(np.diff(tdc_grid) <= 0):
        raise ValueError("decoupling-time grid must be strictly increasing")
    grid = _observation_grid(spec, points_per_unit)
    baseline = effective_precision(
        piecewise_survival(spec, grid[-1], grid)
    )

    n_eff = np.full(tdc_grid.size, np.nan)
    for i, t_dc in enumerate(tdc_grid):
        obs = grid if grid[-1] >= t_dc else np.linspace(0.0, t_dc, grid.size)
        series = piecewise_survival(spec, t_dc, obs)
        try:
            n_eff[i] = effective_precision(series)
        except ImproperTickError:
            pass

    finite = np.isfinite(n_eff)
    if not np.any(finite):
        raise ImproperTickError("no decoupling time produced a tick")
    plateau_value = n_eff[finite][-1]
    onset_mask = finite & (n_eff >= PLATEAU_THRESHOLD * plateau_value)
    plateau_onset = float(tdc_grid[onset_mask][0]) if np.any(onset_mask) else math.nan
    return QuenchSweep(
        n_sites=spec.n_sites,
        tdc_grid=tdc_grid,
        n_eff=n_eff,
        baseline=baseline,
        plateau_onset=plateau_onset,
    )
