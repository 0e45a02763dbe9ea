#!/usr/bin/env python3
"""
Test the Littlewood-Paley bank, the Besov and Btilde norms and the time-weighted norms
"""

import math

import numpy as np
import pytest

from besov_analysis import (
    Trajectory,
    besov_norm,
    btilde_norm,
    build_filter_bank,
    dyadic_profile,
    etnu_norm,
    etnu_stack_norm,
    lp_block,
    lq_combine,
    low_pass,
    marker_token,
    parse_marker,
    semigroup_characterization,
    smooth_cutoff,
    weighted_sup_norm,
)
from initial_data import random_bandlimited
from models import BesovSpec, BTildeSpec, Grid2D, LebesgueSpec, SolverConfig, TimeGrid, WeightedNormSpec
from mild_solver import semigroup_trajectory
from spectral_core import RealField

GRID = Grid2D(n=32)
CFG = SolverConfig(alpha=0.75)
BANK = build_filter_bank(GRID)


def mode(k: int) -> RealField:
    return RealField.from_function(GRID, lambda x1, x2: np.cos(k * x1))


def test_smooth_cutoff_shape():
    values = smooth_cutoff(np.array([0.0, 1.0, 1.5, 2.0, 3.0]))
    assert values.tolist()[:2] == [1.0, 1.0]
    assert values[2] == pytest.approx(0.5)
    assert values.tolist()[3:] == [0.0, 0.0]


def test_partition_of_unity():
    for grid in (GRID, Grid2D(n=64), Grid2D(n=32, period=20.0)):
        inhomogeneous, homogeneous = build_filter_bank(grid).partition_residual()
        assert inhomogeneous <= 1e-12
        assert homogeneous <= 1e-12


def test_bank_range_on_standard_torus():
    assert BANK.j_min == 0
    # corner mode sqrt(2) * 16 lies below 2^5
    assert BANK.j_max == 5


def test_single_mode_sits_in_one_block():
    f = mode(1)
    assert np.allclose(lp_block(f, BANK, 0).samples, f.samples, atol=1e-12)
    for j in BANK.inhomogeneous_range:
        if j != 0:
            assert np.max(np.abs(lp_block(f, BANK, j).samples)) < 1e-12
    assert np.max(np.abs(low_pass(f, BANK).samples)) < 1e-12


def test_block_outside_bank_is_rejected():
    with pytest.raises(ValueError):
        lp_block(mode(1), BANK, BANK.j_max + 3)


def test_dyadic_profile_of_mode_four():
    profile = dyadic_profile(mode(4), BANK, 2.0)
    assert profile[2] == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)
    assert all(value < 1e-12 for j, value in profile.items() if j != 2)


def test_homogeneous_besov_norm_of_cosine():
    value = besov_norm(mode(1), BesovSpec(s=0.0, p=2, q=2, homogeneous=True), BANK)
    assert value == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)


def test_besov_weight_follows_block_index():
    value = besov_norm(mode(4), BesovSpec(s=0.5, p=2, q=2, homogeneous=False), BANK)
    assert value == pytest.approx(2 * math.pi * math.sqrt(2), rel=1e-12)


def test_btilde_norm_of_cosine():
    assert btilde_norm(mode(1), CFG, BANK) == pytest.approx(2.0, rel=1e-10)


def test_lq_combine():
    assert lq_combine([3.0, 4.0], 2) == pytest.approx(5.0)
    assert lq_combine([3.0, 4.0], math.inf) == 4.0
    assert lq_combine([], 2) == 0.0


def test_marker_tokens():
    assert parse_marker("btilde") == BTildeSpec()
    assert parse_marker("linf") == LebesgueSpec(p=math.inf)
    assert parse_marker("l2") == LebesgueSpec(p=2)
    assert parse_marker("besov:0.5,2,inf,h") == BesovSpec(s=0.5, p=2, q=math.inf, homogeneous=True)
    for token in ("btilde", "linf", "lp:4", "besov:0.5,2,2,h", "besov:-0.5,inf,inf"):
        assert marker_token(parse_marker(token)) == token
    with pytest.raises(ValueError):
        parse_marker("sobolev:1")


def test_trajectory_times_must_increase():
    fields = [mode(1), mode(1)]
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.5, 0.5]), fields=fields)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0]), fields=fields)


def test_weighted_sup_norm_of_linear_ramp():
    times = np.linspace(0.0, 1.0, 5)
    traj = Trajectory.from_stack(times, np.stack([t * mode(1).samples for t in times]), GRID)
    spec = WeightedNormSpec(mu=0.5, T=1.0, base_norm="linf")
    assert weighted_sup_norm(traj, spec) == pytest.approx(1.0, rel=1e-12)


def test_etnu_norm_of_decaying_cosine():
    tg = TimeGrid(T=1.0, M=16, gamma=2.0)
    traj = semigroup_trajectory(mode(1), CFG, tg)
    nodes = tg.nodes()
    expected = max(t ** CFG.nu * math.exp(-t) * 2.0 for t in nodes[1:])
    assert etnu_norm(traj, CFG) == pytest.approx(expected, rel=1e-10)
    assert etnu_norm(traj, CFG) < 2.0
    assert etnu_stack_norm(traj.stack(), traj.times, GRID, CFG) == pytest.approx(expected, rel=1e-10)


def test_semigroup_characterization_of_cosine():
    nodes = np.linspace(1e-3, 4.0, 4000)
    value, series = semigroup_characterization(mode(1), -0.5, math.inf, CFG, nodes)
    assert series.shape == nodes.shape
    assert value == pytest.approx((1 / 3) ** (1 / 3) * math.exp(-1 / 3), rel=1e-5)


def test_semigroup_characterization_needs_negative_regularity():
    with pytest.raises(ValueError):
        semigroup_characterization(mode(1), 0.0, 2.0, CFG, [0.5, 1.0])
    with pytest.raises(ValueError):
        semigroup_characterization(mode(1), -0.5, 2.0, CFG, [0.0, 1.0])


def test_besov_norm_decreases_in_q():
    f = random_bandlimited(GRID, seed=0, k_max=12)
    values = [besov_norm(f, BesovSpec(s=0.5, p=2.0, q=q, homogeneous=True), BANK) for q in (1.0, 2.0, 4.0, math.inf)]
    assert all(later <= earlier * (1 + 1e-12) for earlier, later in zip(values, values[1:]))


def test_blocks_two_apart_are_orthogonal():
    f = random_bandlimited(GRID, seed=1, k_max=14)
    blocks = {j: lp_block(f, BANK, j).samples for j in BANK.homogeneous_range}
    energy = float(np.sum(f.samples ** 2))
    for j in blocks:
        for other in blocks:
            if abs(j - other) >= 2:
                inner = float(np.sum(blocks[j] * blocks[other]))
                assert abs(inner) <= 1e-12 * energy


@pytest.mark.parametrize("c", [-3.0, 0.5, 2.0])
def test_btilde_is_homogeneous(c):
    f = random_bandlimited(GRID, seed=2)
    assert btilde_norm(f.scaled(c), CFG, BANK) == pytest.approx(abs(c) * btilde_norm(f, CFG, BANK), rel=1e-12)


def test_dyadic_profile_shifts_under_doubling():
    grid = Grid2D(n=64)
    bank = build_filter_bank(grid)
    f = random_bandlimited(grid, seed=0, k_max=4)
    index = (2 * np.arange(grid.n)) % grid.n
    doubled = RealField(grid=grid, samples=f.samples[np.ix_(index, index)])
    original = dyadic_profile(f, bank, 2.0)
    shifted = dyadic_profile(doubled, bank, 2.0)
    for j, value in original.items():
        if j + 1 in shifted:
            assert shifted[j + 1] == pytest.approx(value, rel=1e-10, abs=1e-12)
