"""Tick-time moments, precision/resolution figures of merit, trade-off bounds.

Moments come from a closed double sum over mode pairs of the effective
spectrum.  The overlap between right eigenvectors in that sum is the
conjugating inner product (it originates from the forward and backward
propagators), while the site-basis overlaps use the plain transpose:
<l_k|1> = r_k1.

Engineered chains carry near-dark modes: eigenmodes with exponentially small
support on both chain ends, whose decay rates can sit at 1e-14 in units of
the sink rate.  They hold a ~1e-15 share of the excitation yet release it on
timescales of 1e13, so the infinite-horizon second moment is dominated by an
event that no finite observation would ever record.  When such a heavy tail
is detected, tick statistics are therefore evaluated over a finite
observation window (default twice the mean tick time, i.e. between the first
and second transfer pulse) and conditioned on the tick occurring within it.
The windowed moments are still exact spectral expressions; thin-tailed
spectra use the plain infinite-horizon sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    DegenerateSpectrumError,
    EffectiveSpectrum,
    propagate_timeseries,
    survival,
)

MOMENT_IMAG_TOL = 1e-10
DARK_RATE_TOL = 1e-10
TRAPPED_WEIGHT_TOL = 1e-6
SLOW_MODE_FACTOR = 0.1  # "slow" = decay time beyond 10 mean tick times
HEAVY_TAIL_SHARE = 0.25  # slow-mode share of t2 that triggers windowing


class ImproperTickError(RuntimeError):
    """The tick distribution is not normalized: population stays trapped."""


@dataclass(frozen=True)
class TickStatistics:
    mu: float
    t2: float
    variance: float
    precision: float
    resolution: float


@dataclass(frozen=True)
class PRTBounds:
    lower: float
    upper: float


def prt_bounds(gamma: float, resolution: float) -> PRTBounds:
    """Allowed precision window [gamma/nu, gamma^2/nu^2] at resolution nu."""
    if not (gamma > 0 and resolution > 0):
        raise ValueError("gamma and resolution must be positive")
    return PRTBounds(gamma / resolution, (gamma / resolution) ** 2)


def _overlap_weights(spectrum: EffectiveSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """Numerators C_kk' and exponents Z_kk' of the survival expansion.

    S(t) = sum_kk' C_kk' exp(Z_kk' t) with C_kk' = conj(r_k1) <r_k|r_k'> r_k'1
    and Z_kk' = (Im e_k + Im e_k') + i (Re e_k - Re e_k').
    """
    eps = spectrum.eigenvalues
    w = spectrum.right_vectors[0, :]
    gram = spectrum.gram()
    numer = np.conj(w)[:, None] * gram * w[None, :]
    exponent = 1j * (np.conj(eps)[:, None] - eps[None, :])
    return numer, exponent


def _require_absorbing(spectrum: EffectiveSpectrum) -> None:
    """Reject spectra that trap a non-negligible population forever.

    Near-dark modes (tiny rate, tiny weight) are fine; a decoupled site with
    order-one weight is not.
    """
    numer, _ = _overlap_weights(spectrum)
    rates = -2.0 * spectrum.eigenvalues.imag
    slow = rates < DARK_RATE_TOL
    trapped = float(np.sum(np.abs(np.diag(numer))[slow]))
    if trapped > TRAPPED_WEIGHT_TOL:
        raise ImproperTickError(
            f"population {trapped:.3e} is trapped in non-decaying modes"
        )


def _windowed_integrals(z: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """int_0^T exp(zt) dt and int_0^T t exp(zt) dt, stable for |zT| -> 0."""
    zt = z * t
    small = np.abs(zt) < 1e-4
    zs = np.where(small, 1.0, z)  # placeholder to avoid 0/0 warnings
    i1 = np.where(small, t * (1.0 + zt / 2.0 + zt**2 / 6.0), np.expm1(zt) / zs)
    i2 = np.where(
        small,
        t * t * (0.5 + zt / 3.0 + zt**2 / 8.0),
        (t * np.exp(zt) - i1) / zs,
    )
    return i1, i2


def _real_sum(total: complex, label: str) -> float:
    if abs(total.imag) > MOMENT_IMAG_TOL * max(1.0, abs(total.real)):
        raise ValueError(f"{label} has imaginary residue {total.imag:.3e}")
    return float(total.real)


def moment(
    spectrum: EffectiveSpectrum,
    n: int,
    matrix: np.ndarray | None = None,
    horizon: float | None = None,
) -> float:
    """n-th tick-time moment from the closed spectral double sum.

    With a finite ``horizon`` T the returned value is the unnormalized
    windowed moment int_0^T t^n p_tick dt (n <= 2 only); with ``horizon=None``
    it is the full infinite-horizon moment.
    """
    if n < 1:
        raise ValueError("moment order must be a positive integer")
    if horizon is None:
        # windowed moments stay finite with trapped population (the caller
        # conditions on absorption); the infinite-horizon sums do not
        _require_absorbing(spectrum)
    if spectrum.degenerate_flag:
        return _moment_fallback(spectrum, n, matrix)

    numer, z = _overlap_weights(spectrum)

    if horizon is None:
        # Dark-mode diagonals legitimately give tiny denominators (their
        # numerators shrink in step); only an exactly vanishing one is fatal.
        if np.min(np.abs(z)) == 0.0:
            return _moment_fallback(spectrum, n, matrix)
        total = (-1) ** n * float(math.factorial(n)) * np.sum(numer / z**n)
        return _real_sum(total, f"moment {n}")

    if n > 2:
        raise ValueError("windowed moments are implemented for n = 1, 2")
    i1, i2 = _windowed_integrals(z, horizon)
    s_end = _real_sum(np.sum(numer * np.exp(z * horizon)), "survival at horizon")
    if n == 1:
        total = np.sum(numer * i1) - horizon * s_end
    else:
        total = 2.0 * np.sum(numer * i2) - horizon**2 * s_end
    return _real_sum(total, f"windowed moment {n}")


def _moment_fallback(
    spectrum: EffectiveSpectrum, n: int, matrix: np.ndarray | None
) -> float:
    if n > 2:
        raise DegenerateSpectrumError("quadrature fallback only covers n = 1, 2")
    mu, t2 = moments_by_quadrature(spectrum, matrix)
    return mu if n == 1 else t2


def auto_horizon(spectrum: EffectiveSpectrum) -> float | None:
    """Observation window for the tick statistics, or None for infinite.

    A spectrum is heavy-tailed when modes decaying on timescales far beyond
    the mean tick time dominate the second moment (or when population is
    trapped outright).  Such spectra get a window of twice the live-mode mean
    tick time, which lands between the first and the second transfer pulse of
    engineered chains; everything else is evaluated on the full half-line.
    """
    numer, z = _overlap_weights(spectrum)
    rates = -2.0 * spectrum.eigenvalues.imag
    dark = rates < DARK_RATE_TOL
    live = ~dark
    # moments of the live-mode part only; dark diagonals would divide by ~0
    sub = np.ix_(live, live)
    weight_live = _real_sum(np.sum(numer[sub]), "live weight")
    if weight_live < 1e-3:
        raise ImproperTickError("population is trapped in non-decaying modes")
    mu = _real_sum(-np.sum(numer[sub] / z[sub]), "live mean")
    if mu <= 0:
        return None
    trapped = float(np.sum(np.abs(np.diag(numer))[dark]))
    if trapped > TRAPPED_WEIGHT_TOL:
        return 2.0 * mu
    slow = live & (rates < SLOW_MODE_FACTOR / mu)
    if not np.any(slow):
        return None
    t2 = _real_sum(2.0 * np.sum(numer[sub] / z[sub] ** 2), "live second moment")
    t2_slow = 2.0 * float(np.sum(np.real(np.diag(numer))[slow] / rates[slow] ** 2))
    if t2_slow > HEAVY_TAIL_SHARE * t2:
        return 2.0 * mu
    return None


def tick_statistics(
    spectrum: EffectiveSpectrum,
    matrix: np.ndarray | None = None,
    horizon: float | str | None = "auto",
) -> TickStatistics:
    """Mean, second moment, variance, precision and resolution of the tick.

    ``horizon="auto"`` selects the observation window via ``auto_horizon``;
    an explicit float windows (and conditions) the statistics there, and
    ``None`` forces the infinite-horizon moments.
    """
    if horizon == "auto":
        horizon = auto_horizon(spectrum)
    if horizon is None:
        mu = moment(spectrum, 1, matrix)
        t2 = moment(spectrum, 2, matrix)
    else:
        horizon = float(horizon)
        absorbed = 1.0 - float(survival(spectrum, horizon))
        if absorbed < 1e-3:
            raise ImproperTickError("no tick occurs within the observation window")
        mu = moment(spectrum, 1, matrix, horizon=horizon) / absorbed
        t2 = moment(spectrum, 2, matrix, horizon=horizon) / absorbed
    variance = t2 - mu * mu
    if mu <= 0 or variance < 0:
        raise ValueError(f"invalid moments: mu={mu}, variance={variance}")
    return TickStatistics(
        mu=mu,
        t2=t2,
        variance=variance,
        precision=mu * mu / variance,
        resolution=1.0 / mu,
    )


def _two_segment_grid(t_fast: float, t_slow: float, dt: float) -> np.ndarray:
    """Dense uniform grid to t_fast, coarser uniform grid out to t_slow."""
    n_fast = int(math.ceil(t_fast / dt))
    grid = np.linspace(0.0, t_fast, n_fast + 1)
    if t_slow > t_fast:
        step = max((t_slow - t_fast) / 1e6, dt)
        n_slow = int(math.ceil((t_slow - t_fast) / step))
        grid = np.concatenate([grid, t_fast + np.arange(1, n_slow + 1) * step])
    return grid


def moments_by_quadrature(
    spectrum: EffectiveSpectrum,
    matrix: np.ndarray | None = None,
    dt: float = 0.02,
    cutoff: float = 1e-12,
    horizon: float | None = None,
) -> tuple[float, float]:
    """mu and t2 by Simpson quadrature of the propagated survival.

    With ``horizon=None``: mu = int_0^inf S dt, t2 = 2 int_0^inf t S dt, with
    an exponential tail correction at the slowest non-dark rate past the grid.
    With a finite ``horizon`` T the unnormalized windowed moments are returned
    (int_0^T t^n p dt = n int t^{n-1} S dt - T^n S(T)), matching the windowed
    closed form.  Serves as the independent oracle and degenerate-spectrum
    fallback.
    """
    from scipy.integrate import simpson

    _require_absorbing(spectrum)
    if matrix is None:
        matrix = _reconstruct_matrix(spectrum)

    if horizon is not None:
        n = int(math.ceil(horizon / dt))
        grid = np.linspace(0.0, horizon, max(n, 10) + 1)
        series, _ = propagate_timeseries(matrix, 1, grid)
        s, t = series.values, series.times
        s_end = float(s[-1])
        mu = float(simpson(s, x=t)) - horizon * s_end
        t2 = 2.0 * float(simpson(t * s, x=t)) - horizon**2 * s_end
        return mu, t2

    rates = -2.0 * spectrum.eigenvalues.imag
    live = rates[rates > DARK_RATE_TOL]
    if live.size == 0:
        raise ImproperTickError("no decaying modes")
    rate = float(np.min(live))
    # dense segment resolves the coherent dynamics; the coarse one resolves
    # the slowest surviving exponential
    t_fast = min(np.log(1.0 / cutoff) / rate, 2000.0)
    t_slow = np.log(1.0 / cutoff) / rate
    grid = _two_segment_grid(t_fast, t_slow, dt)
    series, _ = propagate_timeseries(matrix, 1, grid)
    s, t = series.values, series.times
    split = np.searchsorted(t, t_fast)
    mu = float(simpson(s[: split + 1], x=t[: split + 1]))
    t2 = 2.0 * float(simpson((t * s)[: split + 1], x=t[: split + 1]))
    if split + 1 < t.size:
        mu += float(simpson(s[split:], x=t[split:]))
        t2 += 2.0 * float(simpson((t * s)[split:], x=t[split:]))
    # exponential tail: S(t > T) ~ S(T) exp(-rate (t - T))
    tail0 = s[-1] / rate
    mu += tail0
    t2 += 2.0 * (t[-1] * tail0 + s[-1] / rate**2)
    return float(mu), float(t2)


def moments_by_lyapunov(matrix: np.ndarray) -> tuple[float, float]:
    """mu and t2 from Sylvester equations, no eigendecomposition involved.

    Integrating rho' = -i(H rho - rho H^dag) gives H M1 - M1 H^dag = -i rho0
    with M1 = int rho dt and mu = tr M1; one more integration by parts gives
    H M2 - M2 H^dag = -i M1 with t2 = 2 tr M2.  Accurate only when the slowest
    decay rate is well above round-off (not for near-dark spectra).
    """
    from scipy.linalg import solve_sylvester

    matrix = np.asarray(matrix, dtype=complex)
    n = matrix.shape[0]
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[0, 0] = 1.0
    m1 = solve_sylvester(matrix, -matrix.conj().T, -1j * rho0)
    m2 = solve_sylvester(matrix, -matrix.conj().T, -1j * m1)
    return float(np.trace(m1).real), float(2.0 * np.trace(m2).real)


def _reconstruct_matrix(spectrum: EffectiveSpectrum) -> np.ndarray:
    # H = R diag(eps) R^T under the biorthogonal (transpose) normalization.
    r = spectrum.right_vectors
    return (r * spectrum.eigenvalues[None, :]) @ r.T
