#!/usr/bin/env python3
"""
Test the verification probes against closed forms and degenerate data
"""

import math

import numpy as np
import pytest

from besov_analysis import Trajectory, build_filter_bank, parse_marker
from initial_data import random_bandlimited
from mild_solver import evolve_etd, evolve_on_nodes, semigroup_trajectory
from models import GronwallParams, Grid2D, ProbeReport, SolverConfig, TimeGrid
from spectral_core import RealField
from verification import (
    bilinear_estimate_probe,
    bilinear_ratio,
    blowup_lower_bound_probe,
    calibrate_characterization,
    convergence_diagnostic,
    duhamel_smoothing_probe,
    embedding_constant_probe,
    fit_exponent,
    fluctuation_regularity_probe,
    gronwall_bound,
    kernel_exponent,
    kernel_exponent_probe,
    kernel_mass_probe,
    max_principle_report,
    nonlinear_continuity_probe,
    persistence_rows,
    persistence_tracker,
    riesz_growth_report,
    scaling_covariance_probe,
    solve_volterra_equality,
)

CFG = SolverConfig(alpha=0.75)
GRID = Grid2D(n=32)
BANK = build_filter_bank(GRID)


def cos_x1(grid: Grid2D = GRID) -> RealField:
    return RealField.from_function(grid, lambda x1, x2: np.cos(x1))


def cosine_run() -> Trajectory:
    return evolve_etd(cos_x1(), CFG, dt=1e-2, n_steps=100, save_every=10)


def test_fit_exponent_recovers_power_law():
    xs = [0.1, 0.2, 0.4, 0.8]
    assert fit_exponent(xs, [x ** -0.75 for x in xs]) == pytest.approx(-0.75)
    with pytest.raises(ValueError):
        fit_exponent([1.0], [1.0])


def test_probe_report_rejects_inconsistent_verdict():
    with pytest.raises(ValueError):
        ProbeReport(name="inconsistent", deviation=1.0, tolerance=0.5, passed=True)


def test_kernel_exponents():
    assert kernel_exponent(0.75, 1.0) == 0.0
    assert kernel_exponent(0.75, 2.0) == pytest.approx(-2 / 3)
    assert kernel_exponent(0.75, math.inf) == pytest.approx(-4 / 3)
    assert kernel_exponent(0.75, 2.0, kind="gradient") == pytest.approx(-2 / 3 - 2 / 3)


@pytest.mark.parametrize("r", [1.0, 2.0, math.inf])
def test_kernel_exponent_probe(r):
    report = kernel_exponent_probe(CFG, r)
    assert report.passed, report.details


def test_gradient_kernel_exponent_probe():
    assert kernel_exponent_probe(CFG, 2.0, kind="gradient").passed
    assert kernel_exponent_probe(CFG, 2.0, kind="riesz_gradient").passed


def test_kernel_mass_probe():
    report = kernel_mass_probe(CFG)
    assert report.passed
    assert report.deviation < 1e-6


def test_bilinear_ratio_of_zero_data():
    zero = RealField.zeros(GRID)
    assert bilinear_ratio(zero, cos_x1(), CFG, 0.5, 8.0) == 0.0


def test_bilinear_probe_rejects_subcritical_exponent():
    with pytest.raises(ValueError):
        bilinear_estimate_probe(CFG, p=3.0)


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["ess", "ess3"])
def test_bilinear_estimate_probe(variant):
    report = bilinear_estimate_probe(CFG, p=8.0, variant=variant)
    assert report.passed, report.details


def test_gronwall_closed_form():
    params = GronwallParams(c1=1.0, c2=1.0, kappa=0.5)
    assert params.rate == pytest.approx(4 * math.pi)
    assert params.bound(0.0) == pytest.approx(2.0)


def test_gronwall_bound_holds_for_volterra_solution():
    params = GronwallParams(c1=1.0, c2=1.0, kappa=0.5)
    times, values = solve_volterra_equality(params, T=1.0, M=400)
    assert values[0] == 1.0
    assert np.all(np.diff(values) > 0)
    report = gronwall_bound(params, times, values)
    assert report.passed
    assert report.measured < 1.0


def test_gronwall_reports_failed_hypothesis():
    params = GronwallParams(c1=1.0, c2=0.1, kappa=0.5)
    report = gronwall_bound(params, [0.0, 0.5, 1.0], [10.0, 10.0, 10.0])
    assert not report.passed
    assert report.notice == "hypothesis not satisfied"


def test_gronwall_rejects_unordered_samples():
    params = GronwallParams(c1=1.0, c2=1.0, kappa=0.5)
    with pytest.raises(ValueError):
        gronwall_bound(params, [0.0, 0.5, 0.5], [1.0, 1.0, 1.0])


def _geometric_sequence(count: int):
    sigma = [2.0 ** -n for n in range(count + 1)]
    norms, diffs = [1.0], [0.5]
    for n in range(count):
        norms.append(norms[-1] + diffs[-1])
        diffs.append(sigma[n + 1] * (norms[n + 1] + norms[n]))
    return diffs[:count], norms[:count + 1], sigma


def test_convergence_diagnostic_geometric_sigma():
    diffs, norms, sigma = _geometric_sequence(60)
    report = convergence_diagnostic(diffs, norms, 0.0, sigma)
    assert report.passed
    assert report.details["hypothesis"] and report.details["bounded"]
    # sum of 2 sigma_m over m is 4
    assert report.details["envelope"][-1] == pytest.approx(1.5 * math.exp(4.0), rel=1e-9)


def test_convergence_diagnostic_detects_broken_hypothesis():
    diffs, norms, sigma = _geometric_sequence(10)
    diffs[3] *= 100
    report = convergence_diagnostic(diffs, norms, 0.0, sigma)
    assert not report.passed
    assert not report.details["hypothesis"]


def test_convergence_diagnostic_rejects_lambda_of_one():
    with pytest.raises(ValueError):
        convergence_diagnostic([0.1], [1.0, 1.1], 1.0, [0.1, 0.1])


def test_max_principle_on_cosine():
    report = max_principle_report(cosine_run())
    assert report.passed
    linf = report.details["linf"]
    assert all(later < earlier for earlier, later in zip(linf, linf[1:]))


def test_max_principle_flags_growth():
    times = np.array([0.0, 0.5, 1.0])
    stack = np.stack([cos_x1().samples * scale for scale in (1.0, 1.1, 1.2)])
    report = max_principle_report(Trajectory.from_stack(times, stack, GRID))
    assert not report.passed


def test_riesz_growth_on_cosine_and_zero():
    report = riesz_growth_report(cosine_run(), CFG)
    assert report.passed
    assert report.measured == 0.0

    zero = Trajectory.from_stack([0.0, 1.0], np.zeros((2, GRID.n, GRID.n)), GRID)
    skipped = riesz_growth_report(zero, CFG)
    assert skipped.skipped
    assert skipped.notice


def test_blowup_lower_bound():
    zero = Trajectory.from_stack([0.0, 1.0], np.zeros((2, GRID.n, GRID.n)), GRID)
    report = blowup_lower_bound_probe(zero, CFG, t_star=1.5)
    assert report.measured == 0.0
    with pytest.raises(ValueError):
        blowup_lower_bound_probe(zero, CFG, t_star=1.0)


def test_persistence_tracker_on_cosine():
    markers = [parse_marker(token) for token in ("l2", "linf", "besov:0.5,2,2,h", "btilde")]
    traj = cosine_run()
    report = persistence_tracker(traj, markers, CFG, BANK)
    assert report.passed
    assert report.measured == pytest.approx(1.0)
    assert all(report.details["nonincreasing"].values())
    assert len(persistence_rows(report)) == len(traj) * len(markers)


def test_fluctuation_of_one_dimensional_run_is_negligible():
    traj = cosine_run()
    report = fluctuation_regularity_probe(cos_x1(), traj, CFG, BANK)
    assert report.details["fluctuation_b01"] < 1e-10
    assert report.details["negligible"]
    assert report.passed


def test_fluctuation_probe_needs_a_positive_node():
    traj = cosine_run()
    with pytest.raises(ValueError):
        fluctuation_regularity_probe(cos_x1(), traj, CFG, BANK, t=0.0)
    with pytest.raises(ValueError):
        fluctuation_regularity_probe(cos_x1(), traj, CFG, BANK, t=0.123)


def test_nonlinear_part_vanishes_at_start():
    theta0 = random_bandlimited(GRID, seed=3, amplitude=0.2)
    traj = evolve_etd(theta0, CFG, dt=1e-2, n_steps=50, save_every=1)
    report = nonlinear_continuity_probe(theta0, traj, CFG, BANK)
    assert report.passed
    assert report.details["btilde"][0] < 0.5 * max(report.details["btilde"])


def test_duhamel_smoothing_probe():
    tg = TimeGrid(T=1.0, M=16, gamma=2.0)
    free = semigroup_trajectory(random_bandlimited(GRID, seed=1), CFG, tg)
    report = duhamel_smoothing_probe((free, free), CFG, tg, mu=0.5)
    assert report.passed
    assert report.measured > 0
    with pytest.raises(ValueError):
        duhamel_smoothing_probe((free, free), CFG, tg, mu=0.1)


def test_scaling_covariance_probe():
    grid = Grid2D(n=16)
    theta0 = random_bandlimited(grid, seed=2, k_max=3, amplitude=0.2)
    report = scaling_covariance_probe(theta0, CFG, dt=1e-3, n_steps=5)
    assert report.passed
    assert report.measured < 1e-10
    with pytest.raises(ValueError):
        scaling_covariance_probe(theta0, CFG, dt=1e-3, n_steps=5, lam=3)


def test_embedding_and_characterization_constants():
    family = [random_bandlimited(GRID, seed=seed) for seed in range(4)]
    embedding = embedding_constant_probe(family, CFG, BANK)
    assert embedding.passed and embedding.measured > 0

    r_min, r_max, spread = calibrate_characterization(family, -0.5, 2.0, CFG, BANK)
    assert 0 < r_min <= r_max
    assert spread >= 1.0
    with pytest.raises(ValueError):
        calibrate_characterization([RealField.zeros(GRID)], -0.5, 2.0, CFG, BANK)


@pytest.mark.parametrize("seed", range(5))
def test_max_principle_on_random_data(seed):
    grid = Grid2D(n=64)
    theta0 = random_bandlimited(grid, seed=seed, amplitude=0.1)
    traj = evolve_etd(theta0, CFG, dt=1e-2, n_steps=100, save_every=10)
    report = max_principle_report(traj)
    assert report.passed, report.details


@pytest.mark.parametrize("seed", range(5))
def test_persistence_on_random_data(seed):
    markers = [parse_marker(token) for token in ("l2", "linf", "besov:0.5,2,2,h", "btilde")]
    theta0 = random_bandlimited(GRID, seed=seed, amplitude=0.1)
    traj = evolve_etd(theta0, CFG, dt=2e-2, n_steps=100, save_every=10)
    assert traj.horizon == pytest.approx(2.0)
    report = persistence_tracker(traj, markers, CFG, BANK)
    assert report.passed
    assert report.details["nonincreasing"]["l2"]


@pytest.mark.parametrize("seed", [0, 1])
def test_fluctuation_decays_faster_than_free_part(seed):
    grid = Grid2D(n=64)
    theta0 = random_bandlimited(grid, seed=seed, amplitude=0.2)
    traj = evolve_etd(theta0, CFG, dt=5e-3, n_steps=100, save_every=10)
    report = fluctuation_regularity_probe(theta0, traj, CFG, build_filter_bank(grid))
    assert not report.details["negligible"]
    assert report.passed, report.details
    assert report.details["fluctuation_tail_slope"] < report.details["tendency_tail_slope"]


def test_rough_fluctuation_fails():
    grid = Grid2D(n=64)
    theta0 = cos_x1(grid)
    rough = random_bandlimited(grid, seed=0, k_max=30, amplitude=1e-3)
    final = math.exp(-0.5) * theta0.samples + rough.samples
    traj = Trajectory.from_stack([0.0, 0.5], np.stack([theta0.samples, final]), grid)
    report = fluctuation_regularity_probe(theta0, traj, CFG, build_filter_bank(grid))
    assert not report.details["negligible"]
    assert report.details["fluctuation_tail_slope"] > 0
    assert not report.passed


def test_nonlinear_part_vanishes_on_graded_nodes():
    tg = TimeGrid(T=1.0, M=32, gamma=2.0)
    theta0 = random_bandlimited(GRID, seed=3, amplitude=0.2)
    traj = evolve_on_nodes(theta0, CFG, tg.nodes(), max_dt=1e-2)
    report = nonlinear_continuity_probe(theta0, traj, CFG, BANK)
    assert report.passed
    assert report.details["times"][0] == pytest.approx(1.0 / 32 ** 2)
    # N(theta)(t) ~ t near the start
    assert report.details["btilde"][0] < 0.05 * max(report.details["btilde"])


@pytest.mark.parametrize("data", ["two_modes", "random"])
def test_scaling_covariance_over_fifty_steps(data):
    grid = Grid2D(n=16)
    if data == "two_modes":
        theta0 = RealField.from_function(grid, lambda x1, x2: 0.5 * np.cos(x1) + 0.3 * np.sin(2 * x2))
    else:
        theta0 = random_bandlimited(grid, seed=5, k_max=3, amplitude=0.2)
    report = scaling_covariance_probe(theta0, CFG, dt=1e-3, n_steps=50)
    assert report.passed
    assert report.measured < 1e-3


@pytest.mark.slow
def test_characterization_and_embedding_stable_under_refinement():
    results = []
    for n in (128, 256):
        grid = Grid2D(n=n)
        bank = build_filter_bank(grid)
        family = [random_bandlimited(grid, seed=seed) for seed in range(4)]
        r_min, r_max, _ = calibrate_characterization(family, -0.5, 2.0, CFG, bank)
        embedding = embedding_constant_probe(family, CFG, bank).measured
        results.append((r_min, r_max, embedding))
    coarse, fine = results
    for a, b in zip(coarse, fine):
        assert b == pytest.approx(a, rel=0.1)


@pytest.mark.slow
def test_riesz_growth_stable_under_refinement():
    rates = []
    for n in (64, 128):
        theta0 = random_bandlimited(Grid2D(n=n), seed=1, amplitude=0.5)
        traj = evolve_etd(theta0, CFG, dt=1e-2, n_steps=100, save_every=10)
        rates.append(riesz_growth_report(traj, CFG).measured)
    assert rates[1] == pytest.approx(rates[0], rel=0.2, abs=1e-6)
