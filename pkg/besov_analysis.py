#!/usr/bin/env python3
"""
Besov analysis - Littlewood-Paley filter bank and the norms of the mild theory

The dyadic blocks are built from the smooth cutoff

    h(r) = 1                               r <= 1
    h(r) = w(2-r) / (w(2-r) + w(r-1))      1 < r < 2,   w(x) = exp(-1/x)
    h(r) = 0                               r >= 2

with psi_hat(xi) = h(|xi|) - h(2|xi|) and phi_hat(xi) = h(2|xi|), so the
partition of unity telescopes exactly and a plane wave with |k| = 2^j sits
in block j alone.
"""

import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models import BesovSpec, BTildeSpec, Grid2D, LebesgueSpec, NormMarker, SolverConfig, WeightedNormSpec
from spectral_core import (
    FieldValidationError,
    RealField,
    dissipation_symbol,
    forward_array,
    inverse_array,
    lp_norm,
    riesz_symbols,
    wavenumbers,
)

logger = logging.getLogger(__name__)


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = np.exp(-1.0 / x[positive])
    return out


def smooth_cutoff(r: np.ndarray) -> np.ndarray:
    """The cutoff h: 1 on [0, 1], 0 on [2, inf), smooth in between"""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 1.0, 1.0, 0.0)
    middle = (r > 1.0) & (r < 2.0)
    if np.any(middle):
        left = _bump(2.0 - r[middle])
        right = _bump(r[middle] - 1.0)
        out[middle] = left / (left + right)
    return out


class FilterBank(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid2D
    j_min: int
    j_max: int
    psi_hat: Dict[int, np.ndarray]
    phi_hat: np.ndarray

    @property
    def homogeneous_range(self) -> range:
        return range(self.j_min, self.j_max + 1)

    @property
    def inhomogeneous_range(self) -> range:
        return range(0, self.j_max + 1)

    def block_multiplier(self, j: int) -> np.ndarray:
        if j not in self.psi_hat:
            raise ValueError(f"block {j} outside the bank range [{min(self.psi_hat)}, {max(self.psi_hat)}]")
        return self.psi_hat[j]

    def partition_residual(self) -> Tuple[float, float]:
        """Max residuals of the inhomogeneous and homogeneous partitions of unity"""
        _, _, kabs = wavenumbers(self.grid)
        nonzero = kabs > 0
        inhomogeneous = self.phi_hat + sum(self.psi_hat[j] for j in self.inhomogeneous_range)
        homogeneous = sum(self.psi_hat[j] for j in self.homogeneous_range)
        return (
            float(np.max(np.abs(inhomogeneous - 1.0))),
            float(np.max(np.abs(homogeneous[nonzero] - 1.0))),
        )


def build_filter_bank(grid: Grid2D) -> FilterBank:
    """Dyadic blocks covering the lattice from 2*pi/L out to the corner mode"""
    _, _, kabs = wavenumbers(grid)
    k_lowest = grid.fundamental
    k_highest = grid.fundamental * math.sqrt(2) * grid.n / 2
    j_min = math.floor(math.log2(k_lowest) + 1e-12)
    j_max = math.ceil(math.log2(k_highest) - 1e-12)

    psi_hat = {}
    for j in range(min(j_min, 0), j_max + 1):
        block = smooth_cutoff(kabs / 2.0 ** j) - smooth_cutoff(kabs / 2.0 ** (j - 1))
        block.setflags(write=False)
        psi_hat[j] = block
    phi_hat = smooth_cutoff(2.0 * kabs)
    phi_hat.setflags(write=False)

    logger.debug(f"📐 Filter bank for n={grid.n}: blocks {j_min}..{j_max}")
    return FilterBank(grid=grid, j_min=j_min, j_max=j_max, psi_hat=psi_hat, phi_hat=phi_hat)


def _require_bank(grid: Grid2D, bank: FilterBank) -> None:
    if bank.grid != grid:
        raise FieldValidationError(f"filter bank built for {bank.grid}, field lives on {grid}")


def lp_block(f: RealField, bank: FilterBank, j: int) -> RealField:
    """Delta_j f"""
    _require_bank(f.grid, bank)
    multiplier = bank.block_multiplier(j)
    return RealField(grid=f.grid, samples=inverse_array(multiplier * forward_array(f.samples, f.grid), f.grid))


def low_pass(f: RealField, bank: FilterBank) -> RealField:
    """S_0 f"""
    _require_bank(f.grid, bank)
    return RealField(grid=f.grid, samples=inverse_array(bank.phi_hat * forward_array(f.samples, f.grid), f.grid))


def block_norms(f_hat: np.ndarray, bank: FilterBank, p: float, blocks: Iterable[int]) -> Dict[int, float]:
    """||Delta_j f||_p for each requested block, from precomputed coefficients"""
    grid = bank.grid
    return {j: lp_norm(inverse_array(bank.block_multiplier(j) * f_hat, grid), grid, p) for j in blocks}


def lq_combine(values: Sequence[float], q: float) -> float:
    terms = np.abs(np.asarray(values, dtype=float))
    if terms.size == 0:
        return 0.0
    peak = float(np.max(terms))
    if math.isinf(q) or peak == 0.0:
        return peak
    return peak * float(np.sum((terms / peak) ** q)) ** (1.0 / q)


def _besov_from_hat(f_hat: np.ndarray, spec: BesovSpec, bank: FilterBank) -> float:
    blocks = bank.homogeneous_range if spec.homogeneous else bank.inhomogeneous_range
    norms = block_norms(f_hat, bank, spec.p, blocks)
    weighted = [2.0 ** (j * spec.s) * norms[j] for j in blocks]
    dyadic = lq_combine(weighted, spec.q)
    if spec.homogeneous:
        return dyadic
    low = lp_norm(inverse_array(bank.phi_hat * f_hat, bank.grid), bank.grid, spec.p)
    return low + dyadic


def besov_norm(f: RealField, spec: BesovSpec, bank: FilterBank) -> float:
    """Inhomogeneous ||S_0 f||_p + l^q over j >= 0, or homogeneous l^q over all resolved j"""
    _require_bank(f.grid, bank)
    return _besov_from_hat(forward_array(f.samples, f.grid), spec, bank)


def btilde_spec(cfg: SolverConfig) -> BesovSpec:
    return BesovSpec(s=1 - 2 * cfg.alpha, p=math.inf, q=math.inf, homogeneous=False)


def btilde_norm(f: RealField, cfg: SolverConfig, bank: FilterBank) -> float:
    """||f||_{B^{1-2alpha,inf}_inf} + sum of the same norm of both R_perp components"""
    _require_bank(f.grid, bank)
    spec = btilde_spec(cfg)
    r1, r2 = riesz_symbols(f.grid)
    f_hat = forward_array(f.samples, f.grid)
    return (
        _besov_from_hat(f_hat, spec, bank)
        + _besov_from_hat(-r2 * f_hat, spec, bank)
        + _besov_from_hat(r1 * f_hat, spec, bank)
    )


def evaluate_marker(f: RealField, marker: NormMarker, cfg: SolverConfig, bank: FilterBank) -> float:
    if isinstance(marker, LebesgueSpec):
        return f.lp_norm(marker.p)
    if isinstance(marker, BTildeSpec):
        return btilde_norm(f, cfg, bank)
    return besov_norm(f, marker, bank)


def norm_report(f: RealField, markers: Sequence[NormMarker], cfg: SolverConfig, bank: FilterBank) -> List[Tuple]:
    """Rows (quantity, s, p, q, homogeneous, value) for the CSV norm report"""
    rows = []
    for marker in markers:
        value = evaluate_marker(f, marker, cfg, bank)
        if isinstance(marker, BesovSpec):
            rows.append((marker.label, marker.s, marker.p, marker.q, marker.homogeneous, value))
        elif isinstance(marker, LebesgueSpec):
            rows.append((marker.label, "", marker.p, "", "", value))
        else:
            spec = btilde_spec(cfg)
            rows.append((marker.label, spec.s, spec.p, spec.q, False, value))
    return rows


# ---------------------------------------------------------------------------
# Time-dependent norms
# ---------------------------------------------------------------------------

class Trajectory(BaseModel):
    """Fields sampled on strictly increasing time nodes"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    fields: List[RealField]
    gamma: float = Field(default=1.0, ge=1)

    @model_validator(mode="after")
    def _check_nodes(self) -> "Trajectory":
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size != len(self.fields):
            raise FieldValidationError(f"{times.size} times for {len(self.fields)} fields")
        if times.size and times[0] < 0:
            raise FieldValidationError(f"trajectory starts at negative time {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise FieldValidationError("trajectory times must be strictly increasing")
        if self.fields and any(field.grid != self.fields[0].grid for field in self.fields):
            raise FieldValidationError("trajectory fields live on different grids")
        return self

    @classmethod
    def from_stack(cls, times: Sequence[float], stack: np.ndarray, grid: Grid2D, gamma: float = 1.0) -> "Trajectory":
        fields = [RealField(grid=grid, samples=np.array(frame, dtype=float)) for frame in stack]
        return cls(times=np.asarray(times, dtype=float), fields=fields, gamma=gamma)

    @property
    def grid(self) -> Grid2D:
        if not self.fields:
            raise ValueError("empty trajectory has no grid")
        return self.fields[0].grid

    @property
    def horizon(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    def __len__(self) -> int:
        return len(self.fields)

    def stack(self) -> np.ndarray:
        return np.stack([field.samples for field in self.fields])

    def scaled(self, factor: float) -> "Trajectory":
        return Trajectory.from_stack(self.times, factor * self.stack(), self.grid, self.gamma)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.times, other.times):
            raise FieldValidationError("trajectories are sampled on different times")
        return Trajectory.from_stack(self.times, self.stack() - other.stack(), self.grid, self.gamma)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.times, other.times):
            raise FieldValidationError("trajectories are sampled on different times")
        return Trajectory.from_stack(self.times, self.stack() + other.stack(), self.grid, self.gamma)


def _base_norm(samples: np.ndarray, grid: Grid2D, base: str, p: float) -> float:
    if base == "linf":
        return lp_norm(samples, grid, math.inf)
    if base == "lp":
        return lp_norm(samples, grid, p)
    exponent = math.inf if base == "linf_riesz" else p
    r1, r2 = riesz_symbols(grid)
    f_hat = forward_array(samples, grid)
    return (
        lp_norm(samples, grid, exponent)
        + lp_norm(inverse_array(-r2 * f_hat, grid), grid, exponent)
        + lp_norm(inverse_array(r1 * f_hat, grid), grid, exponent)
    )


def weighted_profile(traj: Trajectory, spec: WeightedNormSpec) -> np.ndarray:
    """t_m^mu ||f(t_m)||_X per node; 0 at t = 0 and beyond the horizon"""
    if len(traj) == 0:
        raise ValueError("weighted norm of an empty trajectory")
    values = np.zeros(len(traj))
    horizon = spec.T * (1 + 1e-12)
    for index, (t, field) in enumerate(zip(traj.times, traj.fields)):
        if 0 < t <= horizon:
            values[index] = t ** spec.mu * _base_norm(field.samples, field.grid, spec.base_norm, spec.p)
    return values


def weighted_sup_norm(traj: Trajectory, spec: WeightedNormSpec) -> float:
    """sup over nodes 0 < t_m <= T of t_m^mu ||f(t_m)||_X"""
    return float(np.max(weighted_profile(traj, spec)))


def etnu_spec(cfg: SolverConfig, horizon: float) -> WeightedNormSpec:
    return WeightedNormSpec(mu=cfg.nu, T=horizon, base_norm="linf_riesz")


def etnu_profile(traj: Trajectory, cfg: SolverConfig) -> np.ndarray:
    if len(traj) == 0:
        raise ValueError("E_T^nu norm of an empty trajectory")
    if traj.horizon <= 0:
        return np.zeros(len(traj))
    return weighted_profile(traj, etnu_spec(cfg, traj.horizon))


def etnu_norm(traj: Trajectory, cfg: SolverConfig) -> float:
    """sup_{0<t<=T} t^nu (||v(t)||_inf + ||R_perp v(t)||_inf)"""
    return float(np.max(etnu_profile(traj, cfg)))


def etnu_hat_profile(stack_hat: np.ndarray, times: np.ndarray, grid: Grid2D, cfg: SolverConfig) -> np.ndarray:
    """t^nu (||v||_inf + ||R_perp v||_inf) per node from a (nodes, n, n) coefficient stack"""
    r1, r2 = riesz_symbols(grid)
    frames = inverse_array(stack_hat, grid)
    u1 = inverse_array(-r2 * stack_hat, grid)
    u2 = inverse_array(r1 * stack_hat, grid)
    peaks = (
        np.max(np.abs(frames), axis=(-2, -1))
        + np.max(np.abs(u1), axis=(-2, -1))
        + np.max(np.abs(u2), axis=(-2, -1))
    )
    weights = np.where(times > 0, np.abs(times) ** cfg.nu, 0.0)
    return weights * peaks


def etnu_stack_norm(stack: np.ndarray, times: np.ndarray, grid: Grid2D, cfg: SolverConfig) -> float:
    """E_T^nu norm straight from a (nodes, n, n) sample array"""
    return float(np.max(etnu_hat_profile(forward_array(stack, grid), np.asarray(times, dtype=float), grid, cfg)))


def semigroup_characterization(
    f: RealField,
    s: float,
    p: float,
    cfg: SolverConfig,
    t_nodes: Sequence[float],
) -> Tuple[float, np.ndarray]:
    """sup_t t^(-s/2alpha) ||exp(-t(-Delta)^alpha) f||_p over the given nodes"""
    if s >= 0:
        raise ValueError(f"semigroup characterization needs s < 0, got {s}")
    nodes = np.asarray(t_nodes, dtype=float)
    if nodes.size == 0 or np.any(nodes <= 0):
        raise ValueError("characterization nodes must be positive")
    f_hat = forward_array(f.samples, f.grid)
    symbol = dissipation_symbol(f.grid, cfg.alpha)
    series = np.array([
        t ** (-s / (2 * cfg.alpha)) * lp_norm(inverse_array(np.exp(-t * symbol) * f_hat, f.grid), f.grid, p)
        for t in nodes
    ])
    return float(np.max(series)), series


def parse_marker(text: str) -> NormMarker:
    """'l2', 'linf', 'lp:4', 'btilde', 'besov:s,p,q[,h]' into a norm marker"""
    token = text.strip().lower()
    if token == "btilde":
        return BTildeSpec()
    if token in ("linf", "l_inf"):
        return LebesgueSpec(p=math.inf)
    if token.startswith("l") and token[1:].isdigit():
        return LebesgueSpec(p=float(token[1:]))
    if token.startswith("lp:"):
        return LebesgueSpec(p=_parse_exponent(token[3:]))
    if token.startswith("besov:"):
        parts = [part.strip() for part in token[6:].split(",")]
        if len(parts) not in (3, 4):
            raise ValueError(f"besov marker needs s,p,q[,h]: {text!r}")
        homogeneous = len(parts) == 4 and parts[3] in ("h", "hom", "homogeneous")
        return BesovSpec(s=float(parts[0]), p=_parse_exponent(parts[1]), q=_parse_exponent(parts[2]), homogeneous=homogeneous)
    raise ValueError(f"unknown norm marker {text!r}")


def marker_token(marker: NormMarker) -> str:
    """Inverse of parse_marker"""
    if isinstance(marker, BTildeSpec):
        return "btilde"
    if isinstance(marker, LebesgueSpec):
        return "linf" if math.isinf(marker.p) else f"lp:{marker.p:g}"
    suffix = ",h" if marker.homogeneous else ""
    return f"besov:{marker.s:g},{_token_exponent(marker.p)},{_token_exponent(marker.q)}{suffix}"


def _parse_exponent(text: str) -> float:
    return math.inf if text.strip() in ("inf", "infinity") else float(text)


def _token_exponent(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"


def dyadic_profile(f: RealField, bank: FilterBank, p: float, blocks: Optional[Iterable[int]] = None) -> Dict[int, float]:
    """Block norms ||Delta_j f||_p over the homogeneous range (or given blocks)"""
    _require_bank(f.grid, bank)
    chosen = bank.homogeneous_range if blocks is None else blocks
    return block_norms(forward_array(f.samples, f.grid), bank, p, chosen)
