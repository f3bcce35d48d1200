"""Differential evolution (rand/1/bin) over the chain-end couplings and J0.

The search vector is (J_{N-o}, ..., J_{N-1}, J0): the last o bonds plus the
global scale of the underlying mirror-symmetric profile.  The cost rewards
survival staying near 1 before half the window and penalizes it after.

Determinism: every random draw comes from a stream derived from the master
seed and the (generation, member) pair, so results are bit-identical for a
given config regardless of evaluation order, thread count, or
checkpoint/resume boundaries.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .chain import ChainSpec, CouplingProfile, ProfileKind, expand_profile, build_effective_matrix
from .metrics import TickStatistics, tick_statistics
from .spectral import SpectralError, decompose_effective, survival_grid

CHECKPOINT_VERSION = 1


class ResumeMismatchError(RuntimeError):
    """Checkpoint was produced under a different config."""


def default_bounds(n_sites: int, o: int) -> list[tuple[float, float]]:
    """Tail couplings in [0.01, 1], J0 bracketing the ~N^-1/2 scaling.

    The tail ceiling of 1 (in sink-rate units) matters: a looser ceiling opens
    a worse local optimum for long chains in which the bond before the last is
    pushed far above the terminal one, and the population reliably stalls
    there.  Within this box the best solutions carry the terminal-bond
    enhancement and a strictly lower cost.
    """
    j0 = 1.0 / math.sqrt(n_sites)
    return [(0.01, 1.0)] * o + [(0.1 * j0, 10.0 * j0)]


@dataclass(frozen=True)
class DEConfig:
    population: int = 30
    mutation_factor: float = 0.7
    crossover_rate: float = 0.9
    generations: int = 200
    lam: float = 1.0
    window: float | None = None  # defaults to 10 sqrt(N) at run time
    o: int = 4
    bounds: tuple | None = None  # defaults via default_bounds at run time
    seed: int = 0
    grid_step: float = 0.05
    stall_generations: int = 50  # stop after this many stagnant generations
    stall_tol: float = 1e-4  # relative improvement below this counts as stagnant

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not 0.0 <= self.mutation_factor <= 2.0:
            raise ValueError("mutation_factor must lie in [0, 2]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.lam <= 0:
            raise ValueError("lambda weight must be positive")
        if self.o < 1:
            raise ValueError("at least one tail coupling must be optimized")
        if self.stall_tol < 0:
            raise ValueError("stall tolerance must be non-negative")
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            for lo, hi in bounds:
                if not 0.0 < lo < hi:
                    raise ValueError(f"invalid bound ({lo}, {hi})")
            object.__setattr__(self, "bounds", bounds)

    def resolved_window(self, n_sites: int) -> float:
        return self.window if self.window is not None else 10.0 * math.sqrt(n_sites)

    def resolved_bounds(self, n_sites: int) -> list[tuple[float, float]]:
        if self.bounds is not None:
            if len(self.bounds) != self.o + 1:
                raise ValueError(
                    f"need {self.o + 1} bounds for o={self.o}, got {len(self.bounds)}"
                )
            return list(self.bounds)
        return default_bounds(n_sites, self.o)


@dataclass(frozen=True)
class Candidate:
    params: np.ndarray
    cost: float


@dataclass(frozen=True)
class OptimizationResult:
    best: Candidate
    cost_trace: np.ndarray
    evaluations: int
    statistics: TickStatistics
    spec: ChainSpec
    generations_run: int


def params_to_spec(params: np.ndarray, n_sites: int, gamma: float = 1.0) -> ChainSpec:
    """(tail couplings..., j0) -> concrete chain."""
    profile = CouplingProfile(
        ProfileKind.PST_TAIL, j0=float(params[-1]), tail_overrides=tuple(params[:-1])
    )
    return expand_profile(profile, n_sites, gamma)


def cost(params: np.ndarray, n_sites: int, config: DEConfig) -> float:
    """Window cost: sum_{t<=T/2} (1-S)^2 + lambda sum_{t>T/2} S^2."""
    window = config.resolved_window(n_sites)
    try:
        spec = params_to_spec(params, n_sites)
        matrix = build_effective_matrix(spec)
        spectrum = decompose_effective(matrix)
        grid = np.arange(config.grid_step, window + 0.5 * config.grid_step, config.grid_step)
        s = survival_grid(spectrum, grid)
    except (SpectralError, np.linalg.LinAlgError, ValueError):
        return math.inf
    early = grid <= window / 2.0  # points exactly at T/2 count as early
    value = np.sum((1.0 - s[early]) ** 2) + config.lam * np.sum(s[~early] ** 2)
    return float(value) if np.isfinite(value) else math.inf


def _stream(seed: int, generation: int, member: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(generation, member))
    )


def _reflect(value: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo, hi = bounds[:, 0], bounds[:, 1]
    out = value.copy()
    below = out < lo
    out[below] = lo[below] + (lo[below] - out[below])
    above = out > hi
    out[above] = hi[above] - (out[above] - hi[above])
    return np.clip(out, lo, hi)  # guards double overshoots


def mutate(
    population: np.ndarray,
    target_index: int,
    rng: np.random.Generator,
    mutation_factor: float,
    bounds: np.ndarray,
) -> np.ndarray:
    """v = x_a + F (x_b - x_c) over three distinct non-target members."""
    m = population.shape[0]
    others = np.delete(np.arange(m), target_index)
    a, b, c = rng.choice(others, size=3, replace=False)
    mutant = population[a] + mutation_factor * (population[b] - population[c])
    return _reflect(mutant, bounds)


def crossover(
    mutant: np.ndarray,
    target: np.ndarray,
    rng: np.random.Generator,
    crossover_rate: float,
) -> np.ndarray:
    """Binomial crossover; one component is always taken from the mutant."""
    d = mutant.size
    mask = rng.random(d) < crossover_rate
    mask[rng.integers(d)] = True
    return np.where(mask, mutant, target)


def select(
    trial: np.ndarray, trial_cost: float, target: np.ndarray, target_cost: float
) -> tuple[np.ndarray, float]:
    """Greedy selection; ties keep the incumbent."""
    if trial_cost < target_cost:
        return trial, trial_cost
    return target, target_cost


def _evaluate(vectors, n_sites, config, threads):
    if threads > 1 and len(vectors) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda v: cost(v, n_sites, config), vectors))
    return [cost(v, n_sites, config) for v in vectors]


@dataclass
class _DEState:
    generation: int
    population: np.ndarray
    costs: np.ndarray
    cost_trace: list
    evaluations: int
    stall: int = 0


def _init_state(n_sites: int, config: DEConfig, threads: int) -> _DEState:
    bounds = np.array(config.resolved_bounds(n_sites))
    rng = _stream(config.seed, 0, 0)
    population = bounds[:, 0] + rng.random((config.population, config.o + 1)) * (
        bounds[:, 1] - bounds[:, 0]
    )
    costs = np.array(_evaluate(list(population), n_sites, config, threads))
    if not np.any(np.isfinite(costs)):
        raise RuntimeError(
            "every member of the initial population failed to evaluate; widen the bounds"
        )
    return _DEState(0, population, costs, [float(np.min(costs))], config.population)


def save_checkpoint(path, n_sites: int, config: DEConfig, state: _DEState) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "n_sites": n_sites,
        "config": asdict(config),
        "generation": state.generation,
        "population": state.population.tolist(),
        "costs": state.costs.tolist(),
        "cost_trace": state.cost_trace,
        "evaluations": state.evaluations,
        "stall": state.stall,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path, n_sites: int, config: DEConfig) -> _DEState:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ResumeMismatchError(f"unsupported checkpoint version {payload.get('version')}")
    stored = payload["config"]
    if stored.get("bounds") is not None:
        stored["bounds"] = tuple(tuple(b) for b in stored["bounds"])
    if DEConfig(**stored) != config:
        raise ResumeMismatchError("checkpoint config differs from the requested one")
    if payload["n_sites"] != n_sites:
        raise ResumeMismatchError("checkpoint was produced for a different chain length")
    return _DEState(
        payload["generation"],
        np.array(payload["population"]),
        np.array(payload["costs"]),
        list(payload["cost_trace"]),
        payload["evaluations"],
        payload["stall"],
    )


def optimize(
    n_sites: int,
    config: DEConfig,
    threads: int = 1,
    checkpoint_path=None,
    resume: bool = False,
) -> OptimizationResult:
    """Run rand/1/bin DE; returns the best candidate with its tick statistics."""
    bounds = np.array(config.resolved_bounds(n_sites))
    if resume:
        if checkpoint_path is None:
            raise ResumeMismatchError("resume requested without a checkpoint path")
        state = load_checkpoint(checkpoint_path, n_sites, config)
    else:
        state = _init_state(n_sites, config, threads)

    # reference cost at the last stall reset; recoverable from the trace
    # because the running best is non-increasing
    best_ref = state.cost_trace[-(state.stall + 1)] if state.cost_trace else math.inf
    while state.generation < config.generations:
        if config.stall_generations and state.stall >= config.stall_generations:
            break
        gen = state.generation + 1
        trials = []
        for i in range(config.population):
            rng = _stream(config.seed, gen, i)
            mutant = mutate(state.population, i, rng, config.mutation_factor, bounds)
            trials.append(crossover(mutant, state.population[i], rng, config.crossover_rate))
        trial_costs = _evaluate(trials, n_sites, config, threads)
        state.evaluations += config.population
        for i in range(config.population):
            winner, won_cost = select(
                trials[i], trial_costs[i], state.population[i], state.costs[i]
            )
            state.population[i] = winner
            state.costs[i] = won_cost
        gen_best = float(np.min(state.costs))
        state.cost_trace.append(gen_best)
        state.generation = gen
        if gen_best < best_ref * (1.0 - config.stall_tol):
            best_ref = gen_best
            state.stall = 0
        else:
            state.stall += 1
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, n_sites, config, state)

    k = int(np.argmin(state.costs))
    best = Candidate(state.population[k].copy(), float(state.costs[k]))
    spec = params_to_spec(best.params, n_sites)
    matrix = build_effective_matrix(spec)
    stats = tick_statistics(decompose_effective(matrix), matrix)
    return OptimizationResult(
        best=best,
        cost_trace=np.array(state.cost_trace),
        evaluations=state.evaluations,
        statistics=stats,
        spec=spec,
        generations_run=state.generation,
    )
