"""Coupling profiles and single-excitation matrices for dissipative XX chains.

Bond indexing convention: bond i (1-based, i = 1..N-1) connects sites i and
i+1, so ``couplings[i - 1]`` in 0-based storage is J_i.  All couplings are in
units of the sink rate, all times in units of its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ChainError(ValueError):
    """Invalid chain specification."""


class ProfileKind(str, Enum):
    PST = "pst"
    PST_TAIL = "pst_tail"
    UNIFORM = "uniform"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class ChainSpec:
    """A dissipative chain: N sites, N-1 bonds, sink of rate gamma on site N.

    gamma = 0 describes the closed chain (no sink); tick statistics then do
    not exist, but transfer-fidelity studies remain valid.
    """

    n_sites: int
    couplings: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        couplings = np.asarray(self.couplings, dtype=float).copy()
        couplings.setflags(write=False)
        object.__setattr__(self, "couplings", couplings)
        validate_spec(self)

    @property
    def j_max(self) -> float:
        return float(np.max(self.couplings))

    @property
    def j_last(self) -> float:
        return float(self.couplings[-1])


def validate_spec(spec: ChainSpec, allow_quenched: bool = False) -> None:
    """Check spec invariants; quenched specs may have J_1 = 0 only if allowed."""
    if spec.n_sites < 2:
        raise ChainError(f"n_sites must be >= 2, got {spec.n_sites}")
    if spec.couplings.shape != (spec.n_sites - 1,):
        raise ChainError(
            f"expected {spec.n_sites - 1} couplings, got {spec.couplings.shape}"
        )
    if not spec.gamma >= 0:
        raise ChainError(f"gamma must be non-negative, got {spec.gamma}")
    body = spec.couplings[1:] if allow_quenched else spec.couplings
    if not np.all(body > 0):
        raise ChainError("couplings must be strictly positive")
    if allow_quenched and spec.couplings[0] < 0:
        raise ChainError("J_1 may be zero in a quenched spec, not negative")


@dataclass(frozen=True)
class CouplingProfile:
    """Parametric coupling layout, expanded to a ChainSpec for a given N."""

    kind: ProfileKind
    j0: float = 1.0
    tail_overrides: tuple = ()
    explicit: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        object.__setattr__(self, "tail_overrides", tuple(float(x) for x in self.tail_overrides))
        object.__setattr__(self, "explicit", tuple(float(x) for x in self.explicit))


def pst_couplings(n_sites: int, j0: float) -> np.ndarray:
    """Mirror-symmetric profile J_i = j0 * sqrt(i (N - i)), i = 1..N-1."""
    if n_sites < 2:
        raise ChainError(f"n_sites must be >= 2, got {n_sites}")
    if not j0 > 0:
        raise ChainError(f"j0 must be positive, got {j0}")
    i = np.arange(1, n_sites)
    return j0 * np.sqrt(i * (n_sites - i))


def expand_profile(profile: CouplingProfile, n_sites: int, gamma: float = 1.0) -> ChainSpec:
    """Turn a CouplingProfile into a concrete ChainSpec of length n_sites."""
    kind = profile.kind
    if kind is ProfileKind.EXPLICIT:
        if len(profile.explicit) != n_sites - 1:
            raise ChainError(
                f"explicit profile has {len(profile.explicit)} couplings, need {n_sites - 1}"
            )
        return ChainSpec(n_sites, np.asarray(profile.explicit), gamma)
    if kind is ProfileKind.UNIFORM:
        return ChainSpec(n_sites, np.full(n_sites - 1, profile.j0), gamma)

    couplings = pst_couplings(n_sites, profile.j0)
    o = len(profile.tail_overrides)
    if kind is ProfileKind.PST and o:
        raise ChainError("plain PST profile must not carry tail overrides")
    if o >= n_sites:
        raise ChainError(f"{o} tail overrides do not fit a chain of {n_sites} sites")
    if o:
        couplings[n_sites - 1 - o :] = profile.tail_overrides
    return ChainSpec(n_sites, couplings, gamma)


def build_xx_matrix(spec: ChainSpec) -> np.ndarray:
    """Hopping matrix of the closed chain in the single-excitation basis."""
    m = np.zeros((spec.n_sites, spec.n_sites))
    idx = np.arange(spec.n_sites - 1)
    m[idx, idx + 1] = spec.couplings
    m[idx + 1, idx] = spec.couplings
    return m


def build_effective_matrix(spec: ChainSpec) -> np.ndarray:
    """Complex symmetric matrix: hopping plus -i*gamma/2 sink on the last site."""
    m = build_xx_matrix(spec).astype(complex)
    m[-1, -1] = -0.5j * spec.gamma
    return m


def quench_decouple_first(spec: ChainSpec) -> ChainSpec:
    """Detach site 1: same spec with J_1 set to zero."""
    couplings = np.array(spec.couplings)
    couplings[0] = 0.0
    quenched = object.__new__(ChainSpec)
    object.__setattr__(quenched, "n_sites", spec.n_sites)
    couplings.setflags(write=False)
    object.__setattr__(quenched, "couplings", couplings)
    object.__setattr__(quenched, "gamma", spec.gamma)
    validate_spec(quenched, allow_quenched=True)
    return quenched
