#!/usr/bin/env python3
"""
Test the initial data presets and the seeded random generators
"""

import math

import numpy as np
import pytest

from field_io import write_snapshot
from initial_data import InitialDataSpec, build_initial_data, cosine, power_law, random_bandlimited
from models import Grid2D
from spectral_core import FieldValidationError, forward_array

GRID = Grid2D(n=32)


def test_random_field_has_requested_rms_and_zero_mean():
    field = random_bandlimited(GRID, seed=11, k_min=1, k_max=4, amplitude=0.25)
    assert math.sqrt(np.mean(field.samples ** 2)) == pytest.approx(0.25, rel=1e-12)
    assert abs(field.mean()) < 1e-14


def test_random_field_is_band_limited():
    field = random_bandlimited(GRID, seed=5, k_min=2, k_max=4)
    coeffs = np.abs(forward_array(field.samples, GRID))
    m = np.fft.fftfreq(GRID.n, d=1.0 / GRID.n)
    radius = np.hypot(*np.meshgrid(m, m, indexing="ij"))
    outside = (radius < 2) | (radius > 4)
    assert np.max(coeffs[outside]) < 1e-12 * np.max(coeffs)


def test_seed_describes_the_same_field_on_every_grid():
    coarse = random_bandlimited(Grid2D(n=16), seed=3, k_max=4)
    fine = random_bandlimited(Grid2D(n=64), seed=3, k_max=4)
    assert np.allclose(fine.samples[::4, ::4], coarse.samples, atol=1e-12)


def test_seeds_are_reproducible_and_distinct():
    first = random_bandlimited(GRID, seed=7)
    again = random_bandlimited(GRID, seed=7)
    other = random_bandlimited(GRID, seed=8)
    assert np.array_equal(first.samples, again.samples)
    assert not np.allclose(first.samples, other.samples)


def test_band_must_fit_the_grid():
    with pytest.raises(FieldValidationError):
        random_bandlimited(Grid2D(n=8), seed=0, k_max=4)


def test_power_law_spectrum_decays():
    field = power_law(GRID, seed=1, slope=2.0, k_min=1, k_max=8)
    coeffs = np.abs(forward_array(field.samples, GRID))
    assert math.sqrt(np.mean(field.samples ** 2)) == pytest.approx(1.0, rel=1e-12)
    assert np.mean(coeffs[1:3, 0]) > np.mean(coeffs[6:9, 0])


def test_cosine_preset():
    field = cosine(Grid2D(n=16, period=4 * math.pi), amplitude=2.0)
    assert field.samples[0, 0] == pytest.approx(2.0)
    # k0 = 1/2 on a 4 pi box
    assert field.samples[8, 3] == pytest.approx(2.0 * math.cos(0.5 * 8 * math.pi / 4))


def test_spec_validation():
    with pytest.raises(ValueError):
        InitialDataSpec(preset="random-bandlimited")
    with pytest.raises(ValueError):
        InitialDataSpec(preset="power-law", seed=1, k_min=5, k_max=2)
    with pytest.raises(ValueError):
        InitialDataSpec(preset="file")
    with pytest.raises(ValueError):
        InitialDataSpec(preset="gaussian")


def test_build_presets():
    assert np.array_equal(build_initial_data(InitialDataSpec(preset="zero"), GRID).samples, np.zeros((32, 32)))
    cos = build_initial_data(InitialDataSpec(preset="cosx", amplitude=0.5), GRID)
    assert cos.lp_norm(math.inf) == pytest.approx(0.5)
    rand = build_initial_data(InitialDataSpec(preset="random-bandlimited", seed=2, amplitude=0.1), GRID)
    assert np.array_equal(rand.samples, random_bandlimited(GRID, seed=2, amplitude=0.1).samples)


def test_file_preset(tmp_path):
    source = random_bandlimited(GRID, seed=4)
    path = write_snapshot(tmp_path / "theta0.qgf", source)
    loaded = build_initial_data(InitialDataSpec(preset="file", path=str(path)), GRID)
    assert np.array_equal(loaded.samples, source.samples)

    with pytest.raises(FieldValidationError):
        build_initial_data(InitialDataSpec(preset="file", path=str(path)), Grid2D(n=64))
