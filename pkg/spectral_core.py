#!/usr/bin/env python3
"""
Spectral core - periodic fields and the Fourier multipliers of the QG equation

Conventions:
    - samples[i1, i2] is the value at x = (i1 L/n, i2 L/n); axis 0 is x1
    - forward transform is the unnormalized integral
      F(m) = sum_x f(x) exp(-i k(m).x) (L/n)^2, k(m) = (2 pi / L) m
    - odd multipliers (derivatives, Riesz) vanish on the Nyquist line of
      their component so that every multiplier keeps Hermitian symmetry
    - homogeneous operators send the zero mode to 0
"""

import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, model_validator

from models import Grid2D, SolverConfig

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-10


class FieldValidationError(ValueError):
    """Raised for non-finite samples, grid mismatches and broken symmetry"""


def fft_threads(workers: int = 1, deterministic: bool = True):
    """Context manager scoping the FFT thread count to the current thread; deterministic mode pins it to 1"""
    count = 1 if deterministic else max(1, int(workers))
    logger.debug(f"🔧 FFT workers set to {count} for this thread")
    return scipy.fft.set_workers(count)


class RealField(BaseModel):
    """Scalar field sampled on the periodic grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid2D
    samples: np.ndarray

    @model_validator(mode="after")
    def _check_samples(self) -> "RealField":
        shape = (self.grid.n, self.grid.n)
        if self.samples.shape != shape:
            raise FieldValidationError(f"samples shape {self.samples.shape} does not match grid {shape}")
        if np.iscomplexobj(self.samples):
            raise FieldValidationError("RealField samples must be real")
        if not np.all(np.isfinite(self.samples)):
            bad = int(np.size(self.samples) - np.count_nonzero(np.isfinite(self.samples)))
            raise FieldValidationError(f"RealField has {bad} non-finite samples")
        return self

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> "RealField":
        x1, x2 = coordinates(grid)
        return cls(grid=grid, samples=np.asarray(func(x1, x2), dtype=float))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "RealField":
        return cls(grid=grid, samples=np.zeros((grid.n, grid.n)))

    def __add__(self, other: "RealField") -> "RealField":
        _require_same_grid(self.grid, other.grid)
        return RealField(grid=self.grid, samples=self.samples + other.samples)

    def __sub__(self, other: "RealField") -> "RealField":
        _require_same_grid(self.grid, other.grid)
        return RealField(grid=self.grid, samples=self.samples - other.samples)

    def scaled(self, factor: float) -> "RealField":
        return RealField(grid=self.grid, samples=factor * self.samples)

    def lp_norm(self, p: float) -> float:
        return lp_norm(self.samples, self.grid, p)

    def mean(self) -> float:
        return float(np.mean(self.samples))


class SpectralField(BaseModel):
    """Fourier coefficients in numpy FFT layout, indexed by mode pair"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid2D
    coeffs: np.ndarray

    @model_validator(mode="after")
    def _check_coeffs(self) -> "SpectralField":
        shape = (self.grid.n, self.grid.n)
        if self.coeffs.shape != shape:
            raise FieldValidationError(f"coeffs shape {self.coeffs.shape} does not match grid {shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise FieldValidationError("SpectralField has non-finite coefficients")
        return self

    def coeff(self, m1: int, m2: int) -> complex:
        return complex(self.coeffs[m1 % self.grid.n, m2 % self.grid.n])

    def hermitian_defect(self) -> float:
        return hermitian_defect(self.coeffs)

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(grid=self.grid, coeffs=factor * self.coeffs)


# ---------------------------------------------------------------------------
# Lattice helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _lattice(n: int, period: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m = np.fft.fftfreq(n, d=1.0 / n)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    scale = 2 * math.pi / period
    k1 = scale * m1
    k2 = scale * m2
    kabs = np.hypot(k1, k2)
    for array in (m1, m2, k1, k2, kabs):
        array.setflags(write=False)
    return m1, m2, k1, k2, kabs


def mode_indices(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Integer mode numbers m1, m2 in [-n/2, n/2)"""
    m1, m2, _, _, _ = _lattice(grid.n, grid.period)
    return m1, m2


def wavenumbers(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """k1, k2 and |k| on the FFT lattice"""
    _, _, k1, k2, kabs = _lattice(grid.n, grid.period)
    return k1, k2, kabs


@lru_cache(maxsize=32)
def _odd_masks(n: int) -> Tuple[np.ndarray, np.ndarray]:
    m = np.fft.fftfreq(n, d=1.0 / n)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    keep1 = (m1 != -n // 2).astype(float)
    keep2 = (m2 != -n // 2).astype(float)
    keep1.setflags(write=False)
    keep2.setflags(write=False)
    return keep1, keep2


def derivative_symbols(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """i k1 and i k2 with the Nyquist lines zeroed"""
    k1, k2, _ = wavenumbers(grid)
    keep1, keep2 = _odd_masks(grid.n)
    return 1j * k1 * keep1, 1j * k2 * keep2


def riesz_symbols(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """-i k_j / |k| for j = 1, 2 (zero mode and Nyquist lines set to 0)"""
    k1, k2, kabs = wavenumbers(grid)
    keep1, keep2 = _odd_masks(grid.n)
    safe = np.where(kabs > 0, kabs, 1.0)
    r1 = np.where(kabs > 0, -1j * k1 / safe, 0.0) * keep1
    r2 = np.where(kabs > 0, -1j * k2 / safe, 0.0) * keep2
    return r1, r2


def dealias_mask(grid: Grid2D) -> np.ndarray:
    m1, m2 = mode_indices(grid)
    cutoff = grid.dealias_cutoff + 1e-9
    return ((np.abs(m1) <= cutoff) & (np.abs(m2) <= cutoff)).astype(float)


def dissipation_symbol(grid: Grid2D, alpha: float) -> np.ndarray:
    """|k|^(2 alpha), zero at the zero mode"""
    _, _, kabs = wavenumbers(grid)
    return kabs ** (2 * alpha)


def coordinates(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    x = np.arange(grid.n) * grid.spacing
    return np.meshgrid(x, x, indexing="ij")


def hermitian_defect(coeffs: np.ndarray) -> float:
    """max |F(m) - conj(F(-m))| relative to max |F|"""
    flipped = np.roll(np.flip(coeffs, axis=(0, 1)), shift=1, axis=(0, 1))
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(coeffs - np.conj(flipped)))) / scale


def lp_norm(samples: np.ndarray, grid: Grid2D, p: float) -> float:
    """Unnormalized L^p integral over the torus; p = inf is the sample max"""
    values = np.abs(samples)
    if math.isinf(p):
        return float(np.max(values)) if values.size else 0.0
    if p == 1:
        return float(np.sum(values) * grid.cell_area)
    if p == 2:
        return float(math.sqrt(np.sum(values * values) * grid.cell_area))
    peak = float(np.max(values))
    if peak == 0.0:
        return 0.0
    # scale by the peak so large p does not overflow
    return peak * float(np.sum((values / peak) ** p) * grid.cell_area) ** (1.0 / p)


def _require_same_grid(first: Grid2D, second: Grid2D) -> None:
    if first != second:
        raise FieldValidationError(f"grid mismatch: {first} vs {second}")


# ---------------------------------------------------------------------------
# Array-level transforms (used by the solver loops)
# ---------------------------------------------------------------------------

def forward_array(samples: np.ndarray, grid: Grid2D) -> np.ndarray:
    return scipy.fft.fft2(samples, axes=(-2, -1)) * grid.cell_area


def inverse_array(coeffs: np.ndarray, grid: Grid2D) -> np.ndarray:
    return scipy.fft.ifft2(coeffs, axes=(-2, -1)).real / grid.cell_area


def nonlinear_hat(theta_hat: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Spectral coefficients of div(theta R_perp theta), dealiased"""
    r1, r2 = riesz_symbols(grid)
    d1, d2 = derivative_symbols(grid)
    theta = inverse_array(theta_hat, grid)
    u1 = inverse_array(-r2 * theta_hat, grid)
    u2 = inverse_array(r1 * theta_hat, grid)
    mask = dealias_mask(grid)
    flux1 = forward_array(theta * u1, grid) * mask
    flux2 = forward_array(theta * u2, grid) * mask
    return d1 * flux1 + d2 * flux2


def product_flux_hat(theta1_hat: np.ndarray, theta2_hat: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Dealiased spectral components of theta1 * R_perp(theta2)"""
    r1, r2 = riesz_symbols(grid)
    theta1 = inverse_array(theta1_hat, grid)
    u1 = inverse_array(-r2 * theta2_hat, grid)
    u2 = inverse_array(r1 * theta2_hat, grid)
    mask = dealias_mask(grid)
    return forward_array(theta1 * u1, grid) * mask, forward_array(theta1 * u2, grid) * mask


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def transform_forward(f: RealField) -> SpectralField:
    """Forward transform with the unnormalized integral convention"""
    if not np.all(np.isfinite(f.samples)):
        raise FieldValidationError("cannot transform a field with non-finite samples")
    return SpectralField(grid=f.grid, coeffs=forward_array(f.samples, f.grid))


def transform_inverse(F: SpectralField) -> RealField:
    """Inverse transform; rejects coefficients that are not Hermitian"""
    defect = F.hermitian_defect()
    if defect > HERMITIAN_TOLERANCE:
        raise FieldValidationError(f"Hermitian symmetry violated (relative defect {defect:.3e})")
    return RealField(grid=F.grid, samples=inverse_array(F.coeffs, F.grid))


def fractional_laplacian(F: SpectralField, alpha: float) -> SpectralField:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return SpectralField(grid=F.grid, coeffs=dissipation_symbol(F.grid, alpha) * F.coeffs)


def semigroup_multiplier(grid: Grid2D, alpha: float, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return np.exp(-t * dissipation_symbol(grid, alpha))


def semigroup_apply(F: SpectralField, alpha: float, t: float) -> SpectralField:
    """exp(-t (-Delta)^alpha) applied mode by mode"""
    return SpectralField(grid=F.grid, coeffs=semigroup_multiplier(F.grid, alpha, t) * F.coeffs)


def riesz(F: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """(R1 F, R2 F)"""
    r1, r2 = riesz_symbols(F.grid)
    return SpectralField(grid=F.grid, coeffs=r1 * F.coeffs), SpectralField(grid=F.grid, coeffs=r2 * F.coeffs)


def riesz_perp(F: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """R_perp F = (-R2 F, R1 F), the velocity of the active scalar"""
    r1, r2 = riesz_symbols(F.grid)
    return SpectralField(grid=F.grid, coeffs=-r2 * F.coeffs), SpectralField(grid=F.grid, coeffs=r1 * F.coeffs)


def gradient(F: SpectralField) -> Tuple[SpectralField, SpectralField]:
    d1, d2 = derivative_symbols(F.grid)
    return SpectralField(grid=F.grid, coeffs=d1 * F.coeffs), SpectralField(grid=F.grid, coeffs=d2 * F.coeffs)


def divergence(Fx: SpectralField, Fy: SpectralField) -> SpectralField:
    _require_same_grid(Fx.grid, Fy.grid)
    d1, d2 = derivative_symbols(Fx.grid)
    return SpectralField(grid=Fx.grid, coeffs=d1 * Fx.coeffs + d2 * Fy.coeffs)


def riesz_perp_field(f: RealField) -> Tuple[RealField, RealField]:
    u1, u2 = riesz_perp(transform_forward(f))
    return (
        RealField(grid=f.grid, samples=inverse_array(u1.coeffs, f.grid)),
        RealField(grid=f.grid, samples=inverse_array(u2.coeffs, f.grid)),
    )


def riesz_perp_linf(samples: np.ndarray, grid: Grid2D) -> float:
    """||R_perp f||_inf with the component norms summed"""
    r1, r2 = riesz_symbols(grid)
    f_hat = forward_array(samples, grid)
    return float(np.max(np.abs(inverse_array(-r2 * f_hat, grid)))) + float(
        np.max(np.abs(inverse_array(r1 * f_hat, grid)))
    )


def nonlinear_term(theta: RealField, cfg: SolverConfig) -> RealField:
    """div(theta u) with u = R_perp theta, product dealiased by the grid's rule; independent of alpha"""
    del cfg
    theta_hat = forward_array(theta.samples, theta.grid)
    return RealField(grid=theta.grid, samples=inverse_array(nonlinear_hat(theta_hat, theta.grid), theta.grid))


# ---------------------------------------------------------------------------
# Kernel norms
# ---------------------------------------------------------------------------

def kernel_resolution_ok(alpha: float, t: float, grid: Grid2D) -> bool:
    """Domain at least 16 t^(1/2alpha) wide and Nyquist damping below 1e-12"""
    wide_enough = grid.period >= 16 * t ** (1 / (2 * alpha)) * (1 - 1e-12)
    nyquist = math.pi * grid.n / grid.period
    decayed = math.exp(-t * nyquist ** (2 * alpha)) < 1e-12
    return wide_enough and decayed


def kernel_grid(alpha: float, t_min: float, t_max: float, dealias_fraction: float = 2.0 / 3.0) -> Grid2D:
    """Smallest grid meeting the kernel accuracy contract on [t_min, t_max]"""
    period = max(2 * math.pi, 16 * t_max ** (1 / (2 * alpha)))
    # exp(-t_min (pi n / L)^(2 alpha)) < 1e-12
    needed = (math.log(1e12) / t_min) ** (1 / (2 * alpha)) * period / math.pi
    n = 8
    while n <= needed:
        n *= 2
    return Grid2D(n=n, period=period, dealias_fraction=dealias_fraction)


def _kernel_hat(alpha: float, t: float, grid: Grid2D) -> np.ndarray:
    if t <= 0:
        raise ValueError(f"kernel time must be > 0, got {t}")
    return np.exp(-t * dissipation_symbol(grid, alpha))


def kernel_samples(alpha: float, t: float, grid: Grid2D) -> np.ndarray:
    return inverse_array(_kernel_hat(alpha, t, grid), grid)


def kernel_norm(alpha: float, t: float, r: float, grid: Grid2D) -> float:
    """||K_t||_r of the sampled (periodized) kernel of exp(-t(-Delta)^alpha)"""
    return lp_norm(kernel_samples(alpha, t, grid), grid, r)


def kernel_gradient_norm(alpha: float, t: float, r: float, grid: Grid2D) -> float:
    """||grad K_t||_r with the pointwise Euclidean norm of the gradient"""
    kernel_hat = _kernel_hat(alpha, t, grid)
    d1, d2 = derivative_symbols(grid)
    g1 = inverse_array(d1 * kernel_hat, grid)
    g2 = inverse_array(d2 * kernel_hat, grid)
    return lp_norm(np.hypot(g1, g2), grid, r)


def riesz_gradient_kernel_norm(alpha: float, t: float, r: float, grid: Grid2D, j: int = 1) -> float:
    """sum_i ||R_j d_i K_t||_r"""
    if j not in (1, 2):
        raise ValueError(f"Riesz index must be 1 or 2, got {j}")
    kernel_hat = _kernel_hat(alpha, t, grid)
    r1, r2 = riesz_symbols(grid)
    rj = r1 if j == 1 else r2
    d1, d2 = derivative_symbols(grid)
    return sum(lp_norm(inverse_array(rj * di * kernel_hat, grid), grid, r) for di in (d1, d2))
