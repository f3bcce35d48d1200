"""Command-line front end: analyze, optimize, sweep, quench, fit, plot.

Configs are versioned JSON with strict schema checking (unknown keys are
rejected).  Single runs emit JSON reports; sweeps append to a CSV store whose
rows contain no timing data, so repeated runs with the same seed are
bit-identical.  Wall-clock times go into the per-run JSON blobs only.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 resume mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .chain import (
    ChainError,
    ChainSpec,
    CouplingProfile,
    ProfileKind,
    build_effective_matrix,
    build_xx_matrix,
    expand_profile,
)
from .de import DEConfig, OptimizationResult, ResumeMismatchError, optimize
from .fits import exponent_convergence, fit_power_law
from .metrics import ImproperTickError, auto_horizon, prt_bounds, tick_statistics
from .quench import default_tdc_grid, sweep_quench
from .spectral import (
    DegenerateSpectrumError,
    PairingError,
    SpectralError,
    decompose_effective,
    decompose_hermitian,
    fidelity,
    survival_grid,
    tick_pdf,
)

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESUME = 4


class ConfigError(ValueError):
    """The run config violates the schema."""


# --------------------------------------------------------------------------
# config loading


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


_CHAIN_KEYS = {"n_sites", "profile", "j0", "tail", "gamma", "couplings"}
_DE_KEYS = {
    "population",
    "mutation_factor",
    "crossover_rate",
    "generations",
    "lam",
    "window",
    "o",
    "bounds",
    "seed",
    "grid_step",
    "stall_generations",
}
_SWEEP_KEYS = {"n_list", "seeds", "fit_exclude_max"}
_QUENCH_KEYS = {"tdc_points", "points_per_unit", "specs"}
_FIT_KEYS = {"points"}
_PLOT_KEYS = {"kind", "input"}
_TOP_KEYS = {"version", "chain", "optimize", "sweep", "quench", "fit", "plot"}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be an object")
    _check_keys(config, _TOP_KEYS, "config root")
    if config.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"config version must be {CONFIG_VERSION}, got {config.get('version')!r}"
        )
    for key, allowed in (
        ("chain", _CHAIN_KEYS),
        ("optimize", _DE_KEYS),
        ("sweep", _SWEEP_KEYS),
        ("quench", _QUENCH_KEYS),
        ("fit", _FIT_KEYS),
        ("plot", _PLOT_KEYS),
    ):
        if key in config:
            if not isinstance(config[key], dict):
                raise ConfigError(f"section {key!r} must be an object")
            _check_keys(config[key], allowed, f"section {key!r}")
    if "quench" in config:
        for i, entry in enumerate(config["quench"].get("specs", [])):
            _check_keys(entry, _CHAIN_KEYS, f"quench.specs[{i}]")
    return config


def chain_from_config(section: dict) -> ChainSpec:
    if "n_sites" not in section:
        raise ConfigError("chain section needs n_sites")
    n_sites = int(section["n_sites"])
    gamma = float(section.get("gamma", 1.0))
    try:
        if "couplings" in section:
            return ChainSpec(n_sites, np.array(section["couplings"], dtype=float), gamma)
        kind = ProfileKind(section.get("profile", "pst"))
        profile = CouplingProfile(
            kind,
            j0=float(section.get("j0", 1.0)),
            tail_overrides=tuple(section.get("tail", ())),
        )
        return expand_profile(profile, n_sites, gamma)
    except (ChainError, ValueError) as exc:
        raise ConfigError(f"invalid chain: {exc}") from exc


def de_config_from_config(section: dict, seed_override: int | None) -> DEConfig:
    section = dict(section)
    if seed_override is not None:
        section["seed"] = seed_override
    if section.get("bounds") is not None:
        section["bounds"] = tuple(tuple(b) for b in section["bounds"])
    try:
        return DEConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimizer config: {exc}") from exc


# --------------------------------------------------------------------------
# serialization helpers


def _spec_dict(spec: ChainSpec) -> dict:
    return {
        "n_sites": spec.n_sites,
        "couplings": [float(j) for j in spec.couplings],
        "gamma": spec.gamma,
    }


def _stats_dict(stats) -> dict:
    return {
        "mu": stats.mu,
        "t2": stats.t2,
        "variance": stats.variance,
        "precision": stats.precision,
        "resolution": stats.resolution,
    }


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


SWEEP_COLUMNS = [
    "n_sites",
    "seed",
    "tail",
    "j0",
    "nu",
    "precision",
    "prt_lower",
    "prt_upper",
    "j_max",
]


def append_sweep_record(path: Path, result: OptimizationResult, seed: int) -> None:
    """One CSV row per (N, seed); full-precision reprs keep rows bit-identical."""
    stats = result.statistics
    bounds = prt_bounds(result.spec.gamma, stats.resolution)
    row = {
        "n_sites": result.spec.n_sites,
        "seed": seed,
        "tail": " ".join(repr(float(v)) for v in result.best.params[:-1]),
        "j0": repr(float(result.best.params[-1])),
        "nu": repr(stats.resolution),
        "precision": repr(stats.precision),
        "prt_lower": repr(bounds.lower),
        "prt_upper": repr(bounds.upper),
        "j_max": repr(float(result.spec.j_max)),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow(row)


def read_sweep_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["n_sites"] = int(row["n_sites"])
        row["seed"] = int(row["seed"])
        row["tail"] = [float(v) for v in row["tail"].split()]
        for key in ("j0", "nu", "precision", "prt_lower", "prt_upper", "j_max"):
            row[key] = float(row[key])
    return rows


# --------------------------------------------------------------------------
# plotting (SVG via matplotlib Agg)


def _plot_analyze(report: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    t = report["series"]["times"]
    if "survival" in report["series"]:
        ax.plot(t, report["series"]["survival"], color="tab:red", label="S(t)")
        ax.set_xlabel("t")
        ax.set_ylabel("survival", color="tab:red")
        ax2 = ax.twinx()
        ax2.plot(t, report["series"]["tick_pdf"], color="tab:blue", label="p_tick(t)")
        ax2.set_ylabel("tick PDF", color="tab:blue")
    else:
        ax.plot(t, report["series"]["fidelity"], color="tab:green")
        ax.set_xlabel("t")
        ax.set_ylabel("transfer fidelity")
    inset = fig.add_axes((0.42, 0.45, 0.25, 0.3))
    couplings = report["spec"]["couplings"]
    inset.plot(range(1, len(couplings) + 1), couplings, ".-", ms=3)
    inset.set_xlabel("bond", fontsize=7)
    inset.set_ylabel("J", fontsize=7)
    inset.tick_params(labelsize=7)
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_sweep(report: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    nu = np.array([p["nu"] for p in report["best_per_n"]])
    prec = np.array([p["precision"] for p in report["best_per_n"]])
    ax.loglog(nu, prec, "o", label="optimized chains")
    grid = np.geomspace(nu.min() / 2, nu.max() * 2, 50)
    gamma = report.get("gamma", 1.0)
    ax.loglog(grid, gamma / grid, "--", label="lower bound")
    ax.loglog(grid, (gamma / grid) ** 2, ":", label="upper bound")
    fit = report["fits"]["precision_vs_nu"]
    ax.loglog(grid, fit["prefactor"] * grid ** fit["exponent"], "-",
              label=f"fit b={fit['exponent']:.2f}")
    ax.set_xlabel("resolution")
    ax.set_ylabel("precision")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_quench(report: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for entry in report["sweeps"]:
        ax.semilogx(entry["tdc_grid"], entry["n_eff"], ".-",
                    label=f"N={entry['n_sites']}")
        if math.isfinite(entry["plateau_onset"]):
            ax.axvline(entry["plateau_onset"], ls=":", color="gray", lw=0.8)
    ax.set_xlabel("decoupling time")
    ax.set_ylabel("effective precision")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)


_PLOTTERS = {"analyze": _plot_analyze, "sweep": _plot_sweep, "quench": _plot_quench}


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(config: dict, args) -> int:
    if "chain" not in config:
        raise ConfigError("analyze needs a chain section")
    spec = chain_from_config(config["chain"])
    closed = decompose_hermitian(build_xx_matrix(spec))
    report = {"spec": _spec_dict(spec)}

    stats = None
    if spec.gamma > 0:
        matrix = build_effective_matrix(spec)
        spectrum = decompose_effective(matrix)
        try:
            stats = tick_statistics(spectrum, matrix)
        except ImproperTickError:
            stats = None
    if stats is not None:
        bounds = prt_bounds(spec.gamma, stats.resolution)
        horizon = auto_horizon(spectrum) or 2.0 * stats.mu
        report["statistics"] = _stats_dict(stats)
        report["prt_bounds"] = {"lower": bounds.lower, "upper": bounds.upper}
    else:
        # closed (or non-absorbing) chain: transfer-fidelity study only,
        # window set by the slowest end-to-end traversal scale
        horizon = 3.0 * spec.n_sites / spec.j_max
    report["observation_horizon"] = horizon

    grid = np.linspace(0.0, horizon, 2001)
    fid = np.asarray(fidelity(closed, grid))
    report["series"] = {"times": grid.tolist(), "fidelity": fid.tolist()}
    # first local maximum at the global peak height (revivals repeat the peak
    # and grid sampling jitters which copy lands highest)
    interior = (fid[1:-1] >= fid[:-2]) & (fid[1:-1] >= fid[2:])
    near_max = fid[1:-1] >= fid.max() - 1e-3
    hits = np.flatnonzero(interior & near_max)
    peak = int(hits[0] + 1) if hits.size else int(np.argmax(fid))
    report["fidelity_peak"] = {"time": float(grid[peak]), "value": float(fid[peak])}
    if stats is not None:
        report["series"]["survival"] = survival_grid(spectrum, grid).tolist()
        report["series"]["tick_pdf"] = tick_pdf(spectrum, grid, spec.gamma).tolist()

    out = Path(args.out)
    write_json(out / "analyze.json", report)
    _plot_analyze(report, out / "analyze.svg")
    if stats is not None:
        print(f"nu={stats.resolution:.6g} precision={stats.precision:.6g} -> {out}")
    else:
        print(
            f"closed-chain fidelity peak {report['fidelity_peak']['value']:.6g} "
            f"at t={report['fidelity_peak']['time']:.6g} -> {out}"
        )
    return EXIT_OK


def _run_optimization(
    n_sites: int, de_config: DEConfig, threads: int, out: Path, resume_path
) -> OptimizationResult:
    checkpoint = Path(resume_path) if resume_path else out / (
        f"checkpoint_n{n_sites}_o{de_config.o}_s{de_config.seed}.json"
    )
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    return optimize(
        n_sites,
        de_config,
        threads=threads,
        checkpoint_path=checkpoint,
        resume=bool(resume_path),
    )


def cmd_optimize(config: dict, args) -> int:
    if "chain" not in config or "n_sites" not in config["chain"]:
        raise ConfigError("optimize needs chain.n_sites")
    n_sites = int(config["chain"]["n_sites"])
    de_config = de_config_from_config(config.get("optimize", {}), args.seed)
    out = Path(args.out)
    started = time.time()
    result = _run_optimization(n_sites, de_config, args.threads, out, args.resume)
    wall = time.time() - started
    stats = result.statistics
    bounds = prt_bounds(result.spec.gamma, stats.resolution)
    report = {
        "n_sites": n_sites,
        "seed": de_config.seed,
        "best_params": [float(v) for v in result.best.params],
        "best_cost": result.best.cost,
        "cost_trace": result.cost_trace.tolist(),
        "evaluations": result.evaluations,
        "generations_run": result.generations_run,
        "statistics": _stats_dict(stats),
        "prt_bounds": {"lower": bounds.lower, "upper": bounds.upper},
        "spec": _spec_dict(result.spec),
        "wall_time_s": wall,
    }
    write_json(out / f"optimize_n{n_sites}_o{de_config.o}_s{de_config.seed}.json", report)
    append_sweep_record(out / "sweep.csv", result, de_config.seed)
    print(
        f"N={n_sites} cost={result.best.cost:.6g} nu={stats.resolution:.6g} "
        f"precision={stats.precision:.6g} -> {out}"
    )
    return EXIT_OK


def run_sweep(
    n_list,
    seeds,
    base_config: dict,
    threads: int = 1,
    out: Path | None = None,
    fit_exclude_max: int = 10,
) -> dict:
    """Optimize every (N, seed), keep the best cost per N, fit the scalings."""
    records = []
    best_per_n = []
    for n_sites in n_list:
        best = None
        for seed in seeds:
            de_config = de_config_from_config({**base_config, "seed": seed}, None)
            started = time.time()
            if out is not None:
                result = _run_optimization(n_sites, de_config, threads, out, None)
            else:
                result = optimize(n_sites, de_config, threads=threads)
            wall = time.time() - started
            stats = result.statistics
            bounds = prt_bounds(result.spec.gamma, stats.resolution)
            record = {
                "n_sites": n_sites,
                "seed": seed,
                "cost": result.best.cost,
                "params": [float(v) for v in result.best.params],
                "nu": stats.resolution,
                "precision": stats.precision,
                "prt_lower": bounds.lower,
                "prt_upper": bounds.upper,
                "j0": float(result.best.params[-1]),
                "j_last": float(result.spec.j_last),
                "j_max": float(result.spec.j_max),
                "wall_time_s": wall,
            }
            records.append(record)
            if out is not None:
                append_sweep_record(out / "sweep.csv", result, seed)
            if best is None or record["cost"] < best["cost"]:
                best = record
        best_per_n.append(best)

    fit_points = [
        (r["nu"], r["precision"]) for r in best_per_n if r["n_sites"] > fit_exclude_max
    ]
    fits = {
        "precision_vs_nu": fit_power_law(fit_points).__dict__,
        "j0_vs_n": fit_power_law(
            [(r["n_sites"], r["j0"]) for r in best_per_n]
        ).__dict__,
        "jlast_over_jmax_vs_n": fit_power_law(
            [(r["n_sites"], r["j_last"] / r["j_max"]) for r in best_per_n]
        ).__dict__,
    }
    convergence = exponent_convergence(
        [(r["precision"], r["nu"]) for r in best_per_n], min_points=3
    )
    return {
        "gamma": 1.0,
        "records": records,
        "best_per_n": best_per_n,
        "fits": fits,
        "exponent_convergence": [
            {"min_precision": x, "exponent": b} for x, b in convergence
        ],
    }


def cmd_sweep(config: dict, args) -> int:
    section = config.get("sweep", {})
    if "n_list" not in section:
        raise ConfigError("sweep needs sweep.n_list")
    n_list = [int(n) for n in section["n_list"]]
    seeds = [int(s) for s in section.get("seeds", [1, 2, 3])]
    out = Path(args.out)
    report = run_sweep(
        n_list,
        seeds,
        config.get("optimize", {}),
        threads=args.threads,
        out=out,
        fit_exclude_max=int(section.get("fit_exclude_max", 10)),
    )
    write_json(out / "sweep_report.json", report)
    _plot_sweep(report, out / "sweep.svg")
    fit = report["fits"]["precision_vs_nu"]
    print(f"b={fit['exponent']:.4f} r2={fit['r_squared']:.4f} -> {out}")
    return EXIT_OK


def cmd_quench(config: dict, args) -> int:
    section = config.get("quench", {})
    chains = list(section.get("specs", []))
    if "chain" in config:
        chains.insert(0, config["chain"])
    if not chains:
        raise ConfigError("quench needs a chain section or quench.specs")
    points = int(section.get("tdc_points", 60))
    ppu = float(section.get("points_per_unit", 40.0))
    sweeps = []
    for entry in chains:
        spec = chain_from_config(entry)
        sweep = sweep_quench(
            spec, tdc_grid=default_tdc_grid(spec, points), points_per_unit=ppu
        )
        matrix = build_effective_matrix(spec)
        mu = tick_statistics(decompose_effective(matrix), matrix).mu
        sweeps.append(
            {
                "n_sites": sweep.n_sites,
                "tdc_grid": sweep.tdc_grid.tolist(),
                "n_eff": [v if math.isfinite(v) else None for v in sweep.n_eff],
                "baseline": sweep.baseline,
                "plateau_onset": sweep.plateau_onset,
                "mu": mu,
            }
        )
    report = {"sweeps": sweeps}
    if len(sweeps) >= 3:
        onset_fit = fit_power_law(
            [
                (s["n_sites"], s["plateau_onset"] / s["mu"])
                for s in sweeps
                if math.isfinite(s["plateau_onset"])
            ]
        )
        report["onset_over_mu_fit"] = onset_fit.__dict__
        print(f"onset/mu exponent: {onset_fit.exponent:.4f}")
    out = Path(args.out)
    write_json(out / "quench_report.json", report)
    for entry in report["sweeps"]:
        entry["n_eff"] = [v if v is not None else math.nan for v in entry["n_eff"]]
    _plot_quench(report, out / "quench.svg")
    print(f"plateau onsets: {[round(s['plateau_onset'], 4) for s in sweeps]} -> {out}")
    return EXIT_OK


def cmd_fit(config: dict, args) -> int:
    section = config.get("fit", {})
    if "points" not in section:
        raise ConfigError("fit needs fit.points")
    try:
        result = fit_power_law([(float(x), float(y)) for x, y in section["points"]])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {
        "exponent": result.exponent,
        "prefactor": result.prefactor,
        "r_squared": result.r_squared,
        "points_used": list(result.points_used),
        "excluded": list(result.excluded),
    }
    write_json(Path(args.out) / "fit.json", report)
    print(f"exponent={result.exponent:.6g} r2={result.r_squared:.6g}")
    return EXIT_OK


def cmd_plot(config: dict, args) -> int:
    section = config.get("plot", {})
    kind = section.get("kind")
    if kind not in _PLOTTERS:
        raise ConfigError(f"plot.kind must be one of {sorted(_PLOTTERS)}")
    if "input" not in section:
        raise ConfigError("plot needs plot.input (a report JSON path)")
    try:
        with open(section["input"]) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from exc
    if kind == "quench":
        for entry in report.get("sweeps", []):
            entry["n_eff"] = [v if v is not None else math.nan for v in entry["n_eff"]]
    out = Path(args.out) / f"{kind}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    _PLOTTERS[kind](report, out)
    print(f"-> {out}")
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "quench": cmd_quench,
    "fit": cmd_fit,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tickchain",
        description="Dissipative spin-chain clock simulator and optimizer.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override optimizer seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--resume", default=None, help="checkpoint file to resume from")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResumeMismatchError as exc:
        print(f"resume mismatch: {exc}", file=sys.stderr)
        return EXIT_RESUME
    except (
        SpectralError,
        DegenerateSpectrumError,
        PairingError,
        ImproperTickError,
        ChainError,
        np.linalg.LinAlgError,
        FloatingPointError,
        RuntimeError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
