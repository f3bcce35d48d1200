"""Spectral decomposition of the chain matrices and time-domain observables.

The effective matrix is complex symmetric (not Hermitian), so its left
eigenvectors are transposes of the right ones and the natural normalization
is sum_j r_kj^2 = 1 (no conjugation).  With that convention the transfer
amplitude, survival probability and tick PDF all reduce to short spectral
sums; a dense matrix-exponential propagator is kept alongside as an
independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

DEGENERACY_RTOL = 1e-8


class SpectralError(RuntimeError):
    """Eigendecomposition failed to converge."""


class DegenerateSpectrumError(RuntimeError):
    """Spectral formulas are unreliable; use the time-domain path."""


class PairingError(ValueError):
    """Modes cannot be matched into (epsilon, -epsilon*) pairs."""


class SeriesKind(str, Enum):
    SURVIVAL = "survival"
    TICK_PDF = "tick_pdf"
    FIDELITY = "fidelity"


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    kind: SeriesKind

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", SeriesKind(self.kind))


@dataclass(frozen=True)
class HermitianSpectrum:
    """Eigenvalues (ascending) and orthonormal eigenvectors of the closed chain."""

    frequencies: np.ndarray
    eigenvectors: np.ndarray  # columns


@dataclass(frozen=True)
class EffectiveSpectrum:
    """Biorthogonally normalized eigensystem of the effective matrix.

    Columns of right_vectors satisfy sum_j r_kj^2 = 1; the left eigenvector of
    mode k is the plain transpose of the right one, so overlaps with the site
    basis need no conjugation: <l_k|j> = r_kj.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray  # columns
    degenerate_flag: bool

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def gram(self) -> np.ndarray:
        """Conjugating overlaps <r_k|r_k'> (identity only in the Hermitian case)."""
        return self.right_vectors.conj().T @ self.right_vectors


def decompose_hermitian(matrix: np.ndarray) -> HermitianSpectrum:
    matrix = np.asarray(matrix)
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    frequencies, vectors = np.linalg.eigh(matrix)
    return HermitianSpectrum(frequencies, vectors)


def decompose_effective(matrix: np.ndarray) -> EffectiveSpectrum:
    matrix = np.asarray(matrix, dtype=complex)
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise ValueError("matrix is not complex symmetric")
    try:
        eigenvalues, vectors = scipy.linalg.eig(matrix)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpectralError("complex eigendecomposition did not converge") from exc

    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]

    # Biorthogonal normalization: divide each column by a square root of
    # sum_j v_j^2, choosing the branch that puts the phase of the anchor
    # component (first site, or the largest one when that vanishes) in
    # (-pi/2, pi/2].
    squares = np.sum(vectors**2, axis=0)
    if np.any(np.abs(squares) < 1e-14):
        raise SpectralError("self-orthogonal eigenvector; biorthogonal basis undefined")
    vectors = vectors / np.sqrt(squares)[None, :]
    for k in range(vectors.shape[1]):
        anchor = vectors[0, k]
        if abs(anchor) < 1e-12 * np.max(np.abs(vectors[:, k])):
            anchor = vectors[np.argmax(np.abs(vectors[:, k])), k]
        if anchor.real < 0 or (anchor.real == 0 and anchor.imag < 0):
            vectors[:, k] = -vectors[:, k]

    scale = np.max(np.abs(eigenvalues)) or 1.0
    gaps = np.abs(eigenvalues[None, :] - eigenvalues[:, None])
    np.fill_diagonal(gaps, np.inf)
    degenerate = bool(np.min(gaps) < DEGENERACY_RTOL * scale)
    return EffectiveSpectrum(eigenvalues, vectors, degenerate)


def fidelity(spectrum: HermitianSpectrum, t) -> np.ndarray | float:
    """End-to-end transfer probability |<N|exp(-iHt)|1>|^2."""
    t = np.asarray(t, dtype=float)
    weights = spectrum.eigenvectors[-1, :] * spectrum.eigenvectors[0, :]
    amp = np.exp(-1j * np.multiply.outer(t, spectrum.frequencies)) @ weights
    return np.abs(amp) ** 2


def survival(spectrum: EffectiveSpectrum, t) -> np.ndarray | float:
    """Remaining no-tick population <psi(t)|psi(t)> for the |1>-seeded state.

    Evaluated as the double spectral sum over mode overlaps; the imaginary
    residue is checked below 1e-10 and discarded.
    """
    if spectrum.degenerate_flag:
        raise DegenerateSpectrumError("degenerate spectrum: use propagate_timeseries")
    t = np.asarray(t, dtype=float)
    w = spectrum.right_vectors[0, :]  # <l_k|1>
    gram = spectrum.gram()
    phases = np.exp(-1j * np.multiply.outer(t, spectrum.eigenvalues)) * w
    s = np.einsum("...k,kl,...l->...", phases.conj(), gram, phases)
    if np.max(np.abs(s.imag)) > 1e-10:
        raise SpectralError("survival sum has a non-negligible imaginary part")
    return s.real


def survival_amplitudes(spectrum: EffectiveSpectrum, times: np.ndarray) -> np.ndarray:
    """Site amplitudes psi_j(t) on a grid, shape (len(times), N)."""
    w = spectrum.right_vectors[0, :]
    modes = np.exp(-1j * np.multiply.outer(times, spectrum.eigenvalues)) * w
    return modes @ spectrum.right_vectors.T


def survival_grid(spectrum: EffectiveSpectrum, times: np.ndarray) -> np.ndarray:
    """survival() over a grid via the equivalent site-amplitude norm (faster)."""
    if spectrum.degenerate_flag:
        raise DegenerateSpectrumError("degenerate spectrum: use propagate_timeseries")
    psi = survival_amplitudes(spectrum, np.asarray(times, dtype=float))
    return np.einsum("ij,ij->i", psi.conj(), psi).real


def tick_pdf(spectrum: EffectiveSpectrum, t, gamma: float) -> np.ndarray | float:
    """Tick PDF gamma * |<N|exp(-iH_eff t)|1>|^2 from the spectral expansion."""
    if spectrum.degenerate_flag:
        raise DegenerateSpectrumError("degenerate spectrum: use propagate_timeseries")
    t = np.asarray(t, dtype=float)
    weights = spectrum.right_vectors[-1, :] * spectrum.right_vectors[0, :]
    amp = np.exp(-1j * np.multiply.outer(t, spectrum.eigenvalues)) @ weights
    return gamma * np.abs(amp) ** 2


def pair_modes(
    spectrum: EffectiveSpectrum, rtol: float = 1e-8, allow_self: bool = False
) -> np.ndarray:
    """Match modes into (epsilon, -epsilon*) pairs; returns (n_pairs, 2) indices.

    The first index of each pair has the larger real part.  Purely imaginary
    (overdamped) eigenvalues are their own partners; they appear as (k, k)
    rows when ``allow_self`` is set and raise otherwise.  Fails loudly for odd
    N or when any matched distance exceeds tolerance.
    """
    from scipy.optimize import linear_sum_assignment

    eps = spectrum.eigenvalues
    n = eps.size
    if n % 2:
        raise PairingError("mode pairing requires an even number of sites")
    scale = np.max(np.abs(eps)) or 1.0
    dist = np.abs(eps[:, None] - (-np.conj(eps))[None, :])
    rows, cols = linear_sum_assignment(dist)
    worst = float(dist[rows, cols].max())
    if worst > rtol * scale:
        raise PairingError(f"unmatched mode: pairing distance {worst:.3e}")
    partner = np.empty(n, dtype=int)
    partner[rows] = cols
    pairs = []
    seen = set()
    for k in range(n):
        if k in seen:
            continue
        mk = int(partner[k])
        if mk == k and not allow_self:
            raise PairingError(
                f"mode {k} is purely imaginary (self-paired); pair reduction undefined"
            )
        seen.update((k, mk))
        first, second = (k, mk) if eps[k].real >= eps[mk].real else (mk, k)
        pairs.append((first, second))
    return np.array(pairs)


def tick_pdf_paired(spectrum: EffectiveSpectrum, t, gamma: float) -> np.ndarray | float:
    """Tick PDF via the half-spectrum pair-reduced sum (even N only)."""
    pairs = pair_modes(spectrum)
    t = np.asarray(t, dtype=float)
    k = pairs[:, 0]
    a = spectrum.right_vectors[-1, k] * spectrum.right_vectors[0, k]
    eps = spectrum.eigenvalues[k]
    envelope = np.exp(np.multiply.outer(t, eps.imag))
    carrier = np.sin(np.multiply.outer(t, eps.real) - np.angle(a))
    inner = (envelope * carrier) @ np.abs(a)
    return 4.0 * gamma * inner**2


def propagate_timeseries(
    matrix: np.ndarray, initial_site: int, grid: np.ndarray
) -> tuple[TimeSeries, TimeSeries]:
    """Time-domain oracle: dense-propagator evolution from |initial_site>.

    Returns survival <psi|psi> and tick PDF gamma |psi_N|^2 on the grid.  Each
    step uses a Pade matrix exponential, exact to round-off, so the norm error
    per unit time stays far below 1e-9.
    """
    matrix = np.asarray(matrix, dtype=complex)
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be monotone and start at 0")
    n = matrix.shape[0]
    gamma = -2.0 * matrix[-1, -1].imag

    psi = np.zeros(n, dtype=complex)
    psi[initial_site - 1] = 1.0  # sites are 1-based
    steps = np.diff(grid)
    survival_vals = np.empty(grid.size)
    pdf_vals = np.empty(grid.size)
    survival_vals[0] = np.vdot(psi, psi).real
    pdf_vals[0] = gamma * abs(psi[-1]) ** 2

    propagators: dict[float, np.ndarray] = {}
    for i, dt in enumerate(steps):
        u = propagators.get(dt)
        if u is None:
            if dt < 1e-15:
                raise ValueError("step size underflow in propagation grid")
            u = scipy.linalg.expm(-1j * matrix * dt)
            propagators[dt] = u
        psi = u @ psi
        survival_vals[i + 1] = np.vdot(psi, psi).real
        pdf_vals[i + 1] = gamma * abs(psi[-1]) ** 2

    return (
        TimeSeries(grid, np.clip(survival_vals, 0.0, None), SeriesKind.SURVIVAL),
        TimeSeries(grid, np.clip(pdf_vals, 0.0, None), SeriesKind.TICK_PDF),
    )


def default_grid(t_max: float, points_per_unit: float = 20.0) -> np.ndarray:
    """Uniform grid over [0, t_max] with the given density (at least 2 points)."""
    n = max(int(np.ceil(t_max * points_per_unit)), 1)
    return np.linspace(0.0, t_max, n + 1)
