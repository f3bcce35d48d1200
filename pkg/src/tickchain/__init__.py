"""Dissipative XX spin-chain clock: spectral tick statistics and optimization."""

from .chain import (
    ChainError,
    ChainSpec,
    CouplingProfile,
    ProfileKind,
    build_effective_matrix,
    build_xx_matrix,
    expand_profile,
    pst_couplings,
    quench_decouple_first,
)
from .de import (
    Candidate,
    DEConfig,
    OptimizationResult,
    ResumeMismatchError,
    cost,
    optimize,
    params_to_spec,
)
from .fits import FitResult, exponent_convergence, fit_power_law
from .metrics import (
    ImproperTickError,
    PRTBounds,
    TickStatistics,
    auto_horizon,
    moment,
    moments_by_quadrature,
    prt_bounds,
    tick_statistics,
)
from .quench import (
    QuenchSweep,
    baseline_precision,
    effective_precision,
    piecewise_survival,
    sweep_quench,
)
from .spectral import (
    DegenerateSpectrumError,
    EffectiveSpectrum,
    HermitianSpectrum,
    PairingError,
    SeriesKind,
    SpectralError,
    TimeSeries,
    decompose_effective,
    decompose_hermitian,
    fidelity,
    pair_modes,
    propagate_timeseries,
    survival,
    survival_grid,
    tick_pdf,
    tick_pdf_paired,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
