#!/usr/bin/env python3
"""
Initial data presets

Random fields are drawn from numpy's counter-based Philox generator. For a
seed s and cutoff K the generator emits, in this order, a (2K+1, 2K+1)
array of standard normals for the real parts and one for the imaginary
parts, indexed by (m1 + K, m2 + K). The coefficient at m is the Hermitian
average (Z(m) + conj Z(-m)) / 2, kept when k_min <= |m| <= K, and the field
is rescaled so that its RMS value ||f||_2 / L equals the amplitude. The
draw depends only on the mode box, so a seed describes the same continuous
field on every grid with n > 2K.
"""

import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from models import Grid2D
from spectral_core import FieldValidationError, RealField, coordinates, inverse_array

logger = logging.getLogger(__name__)

PRESETS = ("zero", "cosx", "random-bandlimited", "power-law", "file")
RANDOM_PRESETS = ("random-bandlimited", "power-law")


class InitialDataSpec(BaseModel):
    preset: Literal["zero", "cosx", "random-bandlimited", "power-law", "file"] = "cosx"
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64)
    k_min: int = Field(default=1, ge=0)
    k_max: int = Field(default=4, ge=1)
    amplitude: float = Field(default=1.0, ge=0)
    slope: float = Field(default=1.0, ge=0)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check_preset(self) -> "InitialDataSpec":
        if self.preset in RANDOM_PRESETS and self.seed is None:
            raise ValueError(f"preset {self.preset} needs a seed")
        if self.preset in RANDOM_PRESETS and self.k_min > self.k_max:
            raise ValueError(f"k_min {self.k_min} exceeds k_max {self.k_max}")
        if self.preset == "file" and not self.path:
            raise ValueError("preset file needs a path")
        return self


def _mode_box(seed: int, k_max: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    size = 2 * k_max + 1
    real = rng.standard_normal((size, size))
    imag = rng.standard_normal((size, size))
    draw = real + 1j * imag
    # (m1, m2) -> (-m1, -m2) is a flip of the centred box
    return 0.5 * (draw + np.conj(np.flip(draw, axis=(0, 1))))


def _place_modes(box: np.ndarray, weights: np.ndarray, grid: Grid2D) -> np.ndarray:
    k_max = (box.shape[0] - 1) // 2
    if 2 * k_max >= grid.n:
        raise FieldValidationError(f"k_max={k_max} is not resolved on n={grid.n}")
    m = np.arange(-k_max, k_max + 1)
    rows, cols = np.meshgrid(m % grid.n, m % grid.n, indexing="ij")
    coeffs = np.zeros((grid.n, grid.n), dtype=complex)
    coeffs[rows, cols] = box * weights
    return coeffs


def _normalized(samples: np.ndarray, grid: Grid2D, amplitude: float) -> RealField:
    rms = float(np.sqrt(np.mean(samples ** 2)))
    if rms == 0.0:
        raise FieldValidationError("the requested band holds no modes")
    return RealField(grid=grid, samples=samples * (amplitude / rms))


def _spectral_draw(grid: Grid2D, seed: int, k_min: int, k_max: int, slope: float) -> np.ndarray:
    box = _mode_box(seed, k_max)
    m = np.arange(-k_max, k_max + 1)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    radius = np.hypot(m1, m2)
    band = (radius >= max(k_min, 1)) & (radius <= k_max)
    weights = np.where(band, np.where(radius > 0, radius, 1.0) ** (-slope), 0.0)
    return inverse_array(_place_modes(box, weights, grid), grid)


def random_bandlimited(grid: Grid2D, seed: int, k_min: int = 1, k_max: int = 4, amplitude: float = 1.0) -> RealField:
    """Mean-free real field with flat Gaussian spectrum on k_min <= |m| <= k_max"""
    return _normalized(_spectral_draw(grid, seed, k_min, k_max, slope=0.0), grid, amplitude)


def power_law(
    grid: Grid2D,
    seed: int,
    slope: float = 1.0,
    k_min: int = 1,
    k_max: int = 16,
    amplitude: float = 1.0,
) -> RealField:
    """Random field whose Fourier coefficients decay like |m|^(-slope)"""
    return _normalized(_spectral_draw(grid, seed, k_min, k_max, slope=slope), grid, amplitude)


def cosine(grid: Grid2D, amplitude: float = 1.0) -> RealField:
    """amplitude * cos(k0 x1) with k0 = 2 pi / L (cos x1 on the standard torus)"""
    x1, _ = coordinates(grid)
    return RealField(grid=grid, samples=amplitude * np.cos(grid.fundamental * x1))


def build_initial_data(spec: InitialDataSpec, grid: Grid2D) -> RealField:
    logger.info(f"🌱 Building initial data: preset={spec.preset}")
    if spec.preset == "zero":
        return RealField.zeros(grid)
    if spec.preset == "cosx":
        return cosine(grid, spec.amplitude)
    if spec.preset == "random-bandlimited":
        return random_bandlimited(grid, spec.seed, spec.k_min, spec.k_max, spec.amplitude)
    if spec.preset == "power-law":
        return power_law(grid, spec.seed, spec.slope, spec.k_min, spec.k_max, spec.amplitude)

    from field_io import read_snapshot

    field = read_snapshot(spec.path)
    if field.grid.n != grid.n or not np.isclose(field.grid.period, grid.period):
        raise FieldValidationError(
            f"snapshot {spec.path} is on n={field.grid.n}, L={field.grid.period}; run expects n={grid.n}, L={grid.period}"
        )
    return RealField(grid=grid, samples=field.samples)
