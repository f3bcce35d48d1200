"""Acceptance suite: one test per criterion, one pass/fail line each.

Criteria 6-9 share a batch of deterministic optimizations through the
session-scoped ``optimize_cached`` fixture; the full suite is a batch job
(~1.5 h single-core), dominated by the N-sweep of criterion 6.
"""

import sys
import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import REFERENCE_J0, REFERENCE_TAIL, random_spec
from tickchain.chain import (
    ChainSpec,
    CouplingProfile,
    ProfileKind,
    build_effective_matrix,
    build_xx_matrix,
    expand_profile,
)
from tickchain.de import DEConfig, optimize, params_to_spec, select
from tickchain.fits import fit_power_law
from tickchain.metrics import (
    ImproperTickError,
    auto_horizon,
    moment,
    moments_by_quadrature,
    prt_bounds,
    tick_statistics,
)
from tickchain.quench import sweep_quench
from tickchain.spectral import (
    PairingError,
    decompose_effective,
    decompose_hermitian,
    fidelity,
    pair_modes,
    survival,
    tick_pdf,
    tick_pdf_paired,
)

SWEEP_N = (20, 30, 50, 80, 120, 200, 300)
SWEEP_SEEDS = (1, 2, 3)


_CAPTURE_MANAGER = None


@pytest.fixture(autouse=True)
def _criterion_lines(request):
    # the pass/fail line must reach the terminal even when the test passes,
    # so emit it outside pytest's output capture
    global _CAPTURE_MANAGER
    _CAPTURE_MANAGER = request.config.pluginmanager.getplugin("capturemanager")
    yield


def report(num, ok, detail):
    line = f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    if _CAPTURE_MANAGER is not None:
        with _CAPTURE_MANAGER.global_and_fixture_disabled():
            print(f"\n{line}", file=sys.stderr, flush=True)
    else:
        print(line, file=sys.stderr)
    assert ok, detail


# ---------------------------------------------------------------- 1


def test_criterion_01_reference_regression(reference_spec):
    started = time.time()
    matrix = build_effective_matrix(reference_spec)
    stats = tick_statistics(decompose_effective(matrix), matrix)
    elapsed = time.time() - started
    nu_err = abs(stats.resolution / 1.22e-2 - 1.0)
    prec_err = abs(stats.precision / 361.62 - 1.0)
    report(
        1,
        nu_err < 0.02 and prec_err < 0.02 and elapsed < 1.0,
        f"nu={stats.resolution:.5g} ({nu_err:.2%} off), "
        f"precision={stats.precision:.5g} ({prec_err:.2%} off), {elapsed:.2f}s",
    )


# ---------------------------------------------------------------- 2


def test_criterion_02_pst_transfer():
    started = time.time()
    worst = 1.0
    for n in (4, 6, 10, 50):
        j0 = 1.0
        spec = expand_profile(CouplingProfile(ProfileKind.PST, j0=j0), n, gamma=0.0)
        spectrum = decompose_hermitian(build_xx_matrix(spec))
        worst = min(worst, float(fidelity(spectrum, np.pi / (2 * j0))))
    elapsed = time.time() - started
    report(
        2,
        worst >= 1.0 - 1e-8 and elapsed < 1.0,
        f"min F(t_transfer)={worst:.12f}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------- 3


def test_criterion_03_moment_oracle():
    started = time.time()
    specs = []
    for n in (2, 10, 50, 100):
        specs.append((f"pst{n}", expand_profile(CouplingProfile(ProfileKind.PST, j0=1.0), n)))
        specs.append((f"uni{n}", expand_profile(CouplingProfile(ProfileKind.UNIFORM, j0=1.0), n)))
    specs.append(
        (
            "ref50",
            expand_profile(
                CouplingProfile(ProfileKind.PST_TAIL, j0=REFERENCE_J0, tail_overrides=REFERENCE_TAIL),
                50,
            ),
        )
    )
    worst = 0.0
    for name, spec in specs:
        matrix = build_effective_matrix(spec)
        spectrum = decompose_effective(matrix)
        # compare over a shared window: the auto observation window for
        # heavy-tailed spectra, otherwise far past the slowest decay
        horizon = auto_horizon(spectrum)
        if horizon is None:
            rates = -2.0 * spectrum.eigenvalues.imag
            horizon = min(23.0 / float(np.min(rates[rates > 1e-10])), 3000.0)
        mu_c = moment(spectrum, 1, horizon=horizon)
        t2_c = moment(spectrum, 2, horizon=horizon)
        mu_q, t2_q = moments_by_quadrature(spectrum, matrix, horizon=horizon)
        worst = max(worst, abs(mu_q / mu_c - 1.0), abs(t2_q / t2_c - 1.0))
    elapsed = time.time() - started
    report(
        3,
        worst < 1e-6 and elapsed < 30.0,
        f"worst relative moment deviation {worst:.2e} over {len(specs)} specs, "
        f"{elapsed:.1f}s",
    )


# ---------------------------------------------------------------- 4


def test_criterion_04_paired_form():
    worst = 0.0
    for n in (10, 50):
        spec = expand_profile(CouplingProfile(ProfileKind.PST, j0=0.3), n)
        spectrum = decompose_effective(build_effective_matrix(spec))
        t = np.linspace(0.0, 50.0, 1000)
        worst = max(
            worst,
            float(np.max(np.abs(tick_pdf(spectrum, t, 1.0) - tick_pdf_paired(spectrum, t, 1.0)))),
        )
    odd_rejected = False
    spec = expand_profile(CouplingProfile(ProfileKind.PST, j0=0.3), 11)
    try:
        tick_pdf_paired(decompose_effective(build_effective_matrix(spec)), 1.0, 1.0)
    except PairingError:
        odd_rejected = True
    report(
        4,
        worst < 1e-8 and odd_rejected,
        f"max |direct - paired| = {worst:.2e}, odd N rejected: {odd_rejected}",
    )


# ---------------------------------------------------------------- 5


def test_criterion_05_spectral_symmetries():
    rng = np.random.default_rng(2024)
    worst = {"pairing": 0.0, "biorth": 0.0, "vectors": 0.0, "residue": 0.0}
    for _ in range(50):
        spec = random_spec(rng)
        spectrum = decompose_effective(build_effective_matrix(spec))
        eps = spectrum.eigenvalues
        scale = max(1.0, float(np.max(np.abs(eps))))
        dist = np.abs(eps[:, None] - (-np.conj(eps))[None, :])
        rows, cols = linear_sum_assignment(dist)
        worst["pairing"] = max(worst["pairing"], float(dist[rows, cols].max()) / scale)
        r = spectrum.right_vectors
        worst["biorth"] = max(
            worst["biorth"], float(np.max(np.abs(r.T @ r - np.eye(spec.n_sites))))
        )
        if spec.n_sites % 2 == 0:
            signs = (-1.0) ** np.arange(1, spec.n_sites + 1)
            for k, mk in pair_modes(spectrum, rtol=1e-7, allow_self=True):
                a = r[:, mk]
                b = signs * np.conj(r[:, k])
                s = a[np.argmax(np.abs(b))] / b[np.argmax(np.abs(b))]
                worst["vectors"] = max(worst["vectors"], float(np.max(np.abs(a - s * b))))
        # moment() raises if the imaginary residue exceeds 1e-10 relative;
        # random chains can Anderson-localize most of the weight in near-dark
        # modes, in which case the designed behavior is an explicit rejection
        try:
            horizon = auto_horizon(spectrum)
            mu = moment(spectrum, 1, horizon=horizon)
            t2 = moment(spectrum, 2, horizon=horizon)
            assert mu > 0 and t2 > 0
        except ImproperTickError:
            pass
    ok = (
        worst["pairing"] < 1e-8
        and worst["biorth"] < 1e-8
        and worst["vectors"] < 1e-7
    )
    report(
        5,
        ok,
        f"pairing {worst['pairing']:.1e}, biorthogonality {worst['biorth']:.1e}, "
        f"vector pairing {worst['vectors']:.1e}, residues checked in moments",
    )


# ---------------------------------------------------------------- 6 / 7 (shared sweep)


@pytest.fixture(scope="module")
def sweep_best(optimize_cached):
    best = {}
    for n in SWEEP_N:
        runs = [(seed, optimize_cached(n, seed=seed)) for seed in SWEEP_SEEDS]
        best[n] = min(runs, key=lambda item: item[1].best.cost)[1]
    return best


def test_criterion_06_scaling(sweep_best):
    points = []
    in_prt = True
    for n in SWEEP_N:
        stats = sweep_best[n].statistics
        bounds = prt_bounds(1.0, stats.resolution)
        in_prt &= bounds.lower <= stats.precision <= bounds.upper
        if n > 10:
            points.append((stats.resolution, stats.precision))
    fit = fit_power_law(points)
    report(
        6,
        abs(fit.exponent + 2.0) <= 0.3 and in_prt,
        f"b = {fit.exponent:.3f} (target -2 +/- 0.3), all points in PRT: {in_prt}",
    )


def test_criterion_07_coupling_scalings(sweep_best):
    j0_fit = fit_power_law([(n, float(r.best.params[-1])) for n, r in sweep_best.items()])
    jl_fit = fit_power_law(
        [(n, r.spec.j_last / r.spec.j_max) for n, r in sweep_best.items()]
    )
    ordered = all(r.spec.couplings[-1] > r.spec.couplings[-2] for r in sweep_best.values())
    ok = (
        abs(j0_fit.exponent + 0.49) <= 0.1
        and abs(jl_fit.exponent + 0.50) <= 0.1
        and ordered
    )
    report(
        7,
        ok,
        f"J0 ~ N^{j0_fit.exponent:.3f} (target -0.49 +/- 0.1), "
        f"J_last/J_max ~ N^{jl_fit.exponent:.3f} (target -0.50 +/- 0.1), "
        f"terminal bond enhanced everywhere: {ordered}",
    )


# ---------------------------------------------------------------- 8


def test_criterion_08_tail_engineering(optimize_cached):
    best = {}
    for o in (1, 2, 3, 4):
        runs = [optimize_cached(40, seed=seed, o=o) for seed in SWEEP_SEEDS]
        best[o] = min(runs, key=lambda r: r.best.cost)
    s_late = {}
    for o, result in best.items():
        spectrum = decompose_effective(build_effective_matrix(result.spec))
        s_late[o] = float(survival(spectrum, 2.0 * result.statistics.mu))
    decreasing = all(s_late[o + 1] < s_late[o] for o in (1, 2, 3))
    prec_up = best[4].statistics.precision > best[3].statistics.precision
    nu_ratio = best[4].statistics.resolution / best[3].statistics.resolution
    ok = decreasing and prec_up and abs(nu_ratio - 1.0) < 0.15
    report(
        8,
        ok,
        f"S(2mu) by o: {[f'{s_late[o]:.2e}' for o in (1, 2, 3, 4)]} decreasing={decreasing}, "
        f"precision o4>o3: {prec_up}, nu ratio {nu_ratio:.3f}",
    )


# ---------------------------------------------------------------- 9


def test_criterion_09_quench_plateau(reference_spec, optimize_cached):
    matrix = build_effective_matrix(reference_spec)
    stats = tick_statistics(decompose_effective(matrix), matrix)
    sweep = sweep_quench(reference_spec)
    mask = np.isfinite(sweep.n_eff) & (sweep.tdc_grid < stats.mu / 3.0)
    early_plateau = bool(np.any(sweep.n_eff[mask] >= 0.99 * stats.precision))

    points = []
    for n in (20, 50, 100, 200):
        result = optimize_cached(n, seed=1)
        qs = sweep_quench(result.spec)
        points.append((n, qs.plateau_onset / result.statistics.mu))
    fit = fit_power_law(points)
    ok = early_plateau and abs(fit.exponent + 0.5) <= 0.15
    report(
        9,
        ok,
        f"early plateau below mu/3: {early_plateau}, "
        f"onset/mu ~ N^{fit.exponent:.3f} (target -0.5 +/- 0.15)",
    )


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(tmp_path):
    config = DEConfig(seed=42, population=10, generations=8, stall_generations=0)
    r1 = optimize(20, config, threads=1)
    r2 = optimize(20, config, threads=3)
    bitwise = (
        np.array_equal(r1.best.params, r2.best.params)
        and r1.best.cost == r2.best.cost
        and np.array_equal(r1.cost_trace, r2.cost_trace)
    )

    # checkpoint-resume equals uninterrupted execution
    from tickchain.de import load_checkpoint, save_checkpoint

    half_cfg = DEConfig(seed=42, population=10, generations=4, stall_generations=0)
    optimize(20, half_cfg, checkpoint_path=tmp_path / "half.json")
    state = load_checkpoint(tmp_path / "half.json", 20, half_cfg)
    save_checkpoint(tmp_path / "cont.json", 20, config, state)
    resumed = optimize(20, config, checkpoint_path=tmp_path / "cont.json", resume=True)
    resume_ok = (
        np.array_equal(resumed.best.params, r1.best.params)
        and np.array_equal(resumed.cost_trace, r1.cost_trace)
    )

    # bit-identical sweep CSV emission
    from tickchain.cli import append_sweep_record

    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    append_sweep_record(p1, r1, 42)
    append_sweep_record(p2, r2, 42)
    csv_ok = p1.read_bytes() == p2.read_bytes()

    report(
        10,
        bitwise and resume_ok and csv_ok,
        f"thread invariance: {bitwise}, resume==uninterrupted: {resume_ok}, "
        f"CSV bit-identical: {csv_ok}",
    )


# ---------------------------------------------------------------- 11


def test_criterion_11_monotone_traces():
    rng = np.random.default_rng(77)
    monotone = True
    for _ in range(20):
        n = int(rng.integers(8, 25))
        config = DEConfig(
            seed=int(rng.integers(0, 2**31)),
            population=8,
            generations=12,
            stall_generations=0,
        )
        trace = optimize(n, config).cost_trace
        monotone &= bool(np.all(np.diff(trace) <= 0))

    target = np.array([1.0])
    trial = np.array([2.0])
    winner, _ = select(trial, 3.0, target, 3.0)
    ties_keep = winner is target
    report(
        11,
        monotone and ties_keep,
        f"20 randomized traces non-increasing: {monotone}, ties keep incumbent: {ties_keep}",
    )
