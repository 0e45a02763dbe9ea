#!/usr/bin/env python3
"""
Mild solver - Duhamel and bilinear operators, Picard iteration, ETD stepper

All loops run on (nodes, n, n) coefficient stacks; Trajectory objects are
built only at the API boundary.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from besov_analysis import Trajectory, etnu_hat_profile
from models import CalibrationRecord, Grid2D, SmallnessReport, SolverConfig, TimeGrid
from spectral_core import (
    FieldValidationError,
    RealField,
    derivative_symbols,
    dissipation_symbol,
    forward_array,
    inverse_array,
    nonlinear_hat,
    product_flux_hat,
)

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1e-3
DIVERGENCE_RUN = 3
BRACKET_LIMIT = 12


class SolverDivergenceError(RuntimeError):
    """Non-finite values appeared inside a solver stage"""

    def __init__(self, stage: str, step: int, message: str = ""):
        self.stage = stage
        self.step = step
        super().__init__(message or f"non-finite values in {stage} at step {step}")


# ---------------------------------------------------------------------------
# Exponential weights
# ---------------------------------------------------------------------------

def phi1(x: np.ndarray) -> np.ndarray:
    """(1 - e^-x) / x, equal to 1 at x = 0"""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -np.expm1(-safe) / safe, 1.0)


def phi2(x: np.ndarray) -> np.ndarray:
    """(1 - e^-x (1 + x)) / x^2"""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_THRESHOLD
    safe = np.where(small, 1.0, x)
    closed = (1.0 - np.exp(-safe) * (1.0 + safe)) / safe ** 2
    series = 0.5 - x / 3.0 + x ** 2 / 8.0 - x ** 3 / 30.0
    return np.where(small, series, closed)


def phi_corrector(x: np.ndarray) -> np.ndarray:
    """(e^-x - 1 + x) / x^2"""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_THRESHOLD
    safe = np.where(small, 1.0, x)
    closed = (np.expm1(-safe) + safe) / safe ** 2
    series = 0.5 - x / 6.0 + x ** 2 / 24.0 - x ** 3 / 120.0
    return np.where(small, series, closed)


# ---------------------------------------------------------------------------
# Array-level operators
# ---------------------------------------------------------------------------

def duhamel_hat(g_hat: np.ndarray, times: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """int_0^{t_m} exp(-(t_m - s) a) g(s) ds per mode, g piecewise linear between nodes"""
    out = np.zeros_like(g_hat, dtype=complex)
    for m in range(len(times) - 1):
        step = times[m + 1] - times[m]
        x = symbol * step
        e0 = step * phi1(x)
        e1 = step * phi2(x)
        out[m + 1] = np.exp(-x) * out[m] + e1 * g_hat[m] + (e0 - e1) * g_hat[m + 1]
    return out


def bilinear_hat(theta1_hat: np.ndarray, theta2_hat: np.ndarray, times: np.ndarray, grid: Grid2D, symbol: np.ndarray) -> np.ndarray:
    """B[theta1, theta2] = -L(theta1 R_perp theta2) on coefficient stacks"""
    d1, d2 = derivative_symbols(grid)
    g_hat = np.empty_like(theta1_hat, dtype=complex)
    for m in range(len(times)):
        flux1, flux2 = product_flux_hat(theta1_hat[m], theta2_hat[m], grid)
        g_hat[m] = d1 * flux1 + d2 * flux2
    return -duhamel_hat(g_hat, times, symbol)


def semigroup_stack(theta0_hat: np.ndarray, times: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return np.exp(-times[:, None, None] * symbol[None, :, :]) * theta0_hat[None, :, :]


def _trajectory_hat(traj: Trajectory) -> np.ndarray:
    return forward_array(traj.stack(), traj.grid)


def _require_on_grid(traj: Trajectory, tg: TimeGrid) -> np.ndarray:
    nodes = tg.nodes()
    if len(traj) != len(nodes) or not np.allclose(traj.times, nodes, rtol=1e-12, atol=0.0):
        raise FieldValidationError(f"trajectory with {len(traj)} nodes is not sampled on the time grid (M={tg.M})")
    return nodes


def _to_trajectory(stack_hat: np.ndarray, times: np.ndarray, grid: Grid2D, gamma: float) -> Trajectory:
    return Trajectory.from_stack(times, inverse_array(stack_hat, grid), grid, gamma)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def duhamel_linear(forcing: Tuple[Trajectory, Trajectory], cfg: SolverConfig, tg: TimeGrid) -> Trajectory:
    """L(v)(t) = int_0^t exp(-(t-s)(-Delta)^alpha) div v(s) ds on the time-grid nodes"""
    v1, v2 = forcing
    nodes = _require_on_grid(v1, tg)
    _require_on_grid(v2, tg)
    if v1.grid != v2.grid:
        raise FieldValidationError("forcing components live on different grids")
    grid = v1.grid
    d1, d2 = derivative_symbols(grid)
    g_hat = d1 * _trajectory_hat(v1) + d2 * _trajectory_hat(v2)
    out = duhamel_hat(g_hat, nodes, dissipation_symbol(grid, cfg.alpha))
    return _to_trajectory(out, nodes, grid, tg.gamma)


def bilinear_B(traj1: Trajectory, traj2: Trajectory, cfg: SolverConfig, tg: TimeGrid) -> Trajectory:
    """B[theta1, theta2] = -L(theta1 R_perp theta2), product dealiased node by node"""
    nodes = _require_on_grid(traj1, tg)
    _require_on_grid(traj2, tg)
    if traj1.grid != traj2.grid:
        raise FieldValidationError("trajectories live on different grids")
    grid = traj1.grid
    out = bilinear_hat(_trajectory_hat(traj1), _trajectory_hat(traj2), nodes, grid, dissipation_symbol(grid, cfg.alpha))
    return _to_trajectory(out, nodes, grid, tg.gamma)


def semigroup_trajectory(theta0: RealField, cfg: SolverConfig, tg: TimeGrid) -> Trajectory:
    """phi_0(t) = exp(-t(-Delta)^alpha) theta0 on the time-grid nodes"""
    nodes = tg.nodes()
    symbol = dissipation_symbol(theta0.grid, cfg.alpha)
    stack = semigroup_stack(forward_array(theta0.samples, theta0.grid), nodes, symbol)
    return _to_trajectory(stack, nodes, theta0.grid, tg.gamma)


class PicardResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    iterates_norms: List[float]
    diff_norms: List[float]
    converged: bool
    diverged: bool = False
    iterations: int
    tolerance: float
    phi0_norm: float
    residual: float
    limit: Trajectory
    mu0_margin: Optional[float] = None

    @property
    def contraction_ratios(self) -> List[float]:
        """d_n / d_{n-1} for n >= 1; 0 once the previous difference is exactly 0"""
        ratios = []
        for previous, current in zip(self.diff_norms, self.diff_norms[1:]):
            ratios.append(current / previous if previous > 0 else 0.0)
        return ratios


def _increasing_run(diffs: Sequence[float]) -> bool:
    if len(diffs) <= DIVERGENCE_RUN:
        return False
    tail = diffs[-(DIVERGENCE_RUN + 1):]
    return all(later > earlier for earlier, later in zip(tail, tail[1:]))


def _picard_core(theta0: RealField, cfg: SolverConfig, tg: TimeGrid, max_iter: int, tol: float):
    grid = theta0.grid
    nodes = tg.nodes()
    symbol = dissipation_symbol(grid, cfg.alpha)
    phi0_hat = semigroup_stack(forward_array(theta0.samples, grid), nodes, symbol)
    phi0_norm = float(np.max(etnu_hat_profile(phi0_hat, nodes, grid, cfg)))

    current = phi0_hat
    iterates_norms = [phi0_norm]
    diff_norms: List[float] = []
    converged = diverged = False
    for step in range(1, max_iter + 1):
        following = phi0_hat + bilinear_hat(current, current, nodes, grid, symbol)
        if not np.all(np.isfinite(following)):
            raise SolverDivergenceError("picard", step)
        diff = float(np.max(etnu_hat_profile(following - current, nodes, grid, cfg)))
        iterates_norms.append(float(np.max(etnu_hat_profile(following, nodes, grid, cfg))))
        diff_norms.append(diff)
        current = following
        logger.debug(f"🧮 Picard step {step}: diff={diff:.3e}")
        if diff <= tol:
            converged = True
            break
        if _increasing_run(diff_norms):
            diverged = True
            logger.warning(f"⚠️ Picard iteration stopped contracting after {step} steps (diff={diff:.3e})")
            break
    return nodes, symbol, phi0_hat, phi0_norm, current, iterates_norms, diff_norms, converged, diverged


def picard_iterate(
    theta0: RealField,
    cfg: SolverConfig,
    tg: TimeGrid,
    max_iter: int = 30,
    tol: float = 1e-10,
    calib: Optional[CalibrationRecord] = None,
) -> PicardResult:
    """phi_{n+1} = exp(-t(-Delta)^alpha) theta0 + B[phi_n, phi_n] until the E_T^nu diff drops below tol"""
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    grid = theta0.grid
    nodes, symbol, phi0_hat, phi0_norm, limit_hat, iterates, diffs, converged, diverged = _picard_core(
        theta0, cfg, tg, max_iter, tol
    )
    residual_hat = limit_hat - phi0_hat - bilinear_hat(limit_hat, limit_hat, nodes, grid, symbol)
    residual = float(np.max(etnu_hat_profile(residual_hat, nodes, grid, cfg)))
    margin = phi0_norm / calib.mu0_empirical if calib is not None else None

    status = "converged" if converged else ("diverged" if diverged else "stopped")
    logger.info(f"🧮 Picard {status} after {len(diffs)} steps: ||phi0||={phi0_norm:.4e}, residual={residual:.3e}")
    return PicardResult(
        iterates_norms=iterates,
        diff_norms=diffs,
        converged=converged,
        diverged=diverged,
        iterations=len(diffs),
        tolerance=tol,
        phi0_norm=phi0_norm,
        residual=residual,
        limit=_to_trajectory(limit_hat, nodes, grid, tg.gamma),
        mu0_margin=margin,
    )


def mild_residual(theta: Trajectory, theta0: RealField, cfg: SolverConfig, tg: TimeGrid) -> float:
    """||theta - exp(-t(-Delta)^alpha) theta0 - B[theta, theta]||_{E_T^nu}"""
    nodes = _require_on_grid(theta, tg)
    grid = theta.grid
    symbol = dissipation_symbol(grid, cfg.alpha)
    theta_hat = _trajectory_hat(theta)
    phi0_hat = semigroup_stack(forward_array(theta0.samples, grid), nodes, symbol)
    residual_hat = theta_hat - phi0_hat - bilinear_hat(theta_hat, theta_hat, nodes, grid, symbol)
    return float(np.max(etnu_hat_profile(residual_hat, nodes, grid, cfg)))


# ---------------------------------------------------------------------------
# Exponential time differencing
# ---------------------------------------------------------------------------

class _EtdCoefficients:
    def __init__(self, symbol: np.ndarray, dt: float):
        x = symbol * dt
        self.decay = np.exp(-x)
        self.predictor = dt * phi1(x)
        self.corrector = dt * phi_corrector(x)


def _etd_step(theta_hat: np.ndarray, grid: Grid2D, coeffs: _EtdCoefficients) -> np.ndarray:
    tendency = -nonlinear_hat(theta_hat, grid)
    predicted = coeffs.decay * theta_hat + coeffs.predictor * tendency
    return predicted + coeffs.corrector * (-nonlinear_hat(predicted, grid) - tendency)


def evolve_etd(theta0: RealField, cfg: SolverConfig, dt: float, n_steps: int, save_every: int = 1) -> Trajectory:
    """Second-order exponential predictor-corrector with an exact integrating factor"""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if n_steps < 0 or save_every < 1:
        raise ValueError(f"need n_steps >= 0 and save_every >= 1, got {n_steps}, {save_every}")
    grid = theta0.grid
    coeffs = _EtdCoefficients(dissipation_symbol(grid, cfg.alpha), dt)
    theta_hat = forward_array(theta0.samples, grid)

    times = [0.0]
    frames = [theta0.samples.copy()]
    for step in range(1, n_steps + 1):
        theta_hat = _etd_step(theta_hat, grid, coeffs)
        if not np.all(np.isfinite(theta_hat)):
            logger.error(f"❌ ETD produced non-finite values at step {step}")
            raise SolverDivergenceError("evolve_etd", step)
        if step % save_every == 0 or step == n_steps:
            times.append(step * dt)
            frames.append(inverse_array(theta_hat, grid))
    logger.info(f"⏱️ ETD finished {n_steps} steps of dt={dt:g} (t={n_steps * dt:g})")
    return Trajectory.from_stack(times, np.stack(frames), grid)


def evolve_on_nodes(theta0: RealField, cfg: SolverConfig, nodes: Sequence[float], max_dt: float) -> Trajectory:
    """ETD run that lands exactly on the given nodes, with sub-steps no longer than max_dt"""
    nodes = np.asarray(nodes, dtype=float)
    if max_dt <= 0:
        raise ValueError(f"max_dt must be > 0, got {max_dt}")
    if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must start at 0 and increase strictly")
    grid = theta0.grid
    symbol = dissipation_symbol(grid, cfg.alpha)
    theta_hat = forward_array(theta0.samples, grid)
    frames = [theta0.samples.copy()]
    step_count = 0
    for start, stop in zip(nodes, nodes[1:]):
        substeps = max(1, math.ceil((stop - start) / max_dt - 1e-12))
        coeffs = _EtdCoefficients(symbol, (stop - start) / substeps)
        for _ in range(substeps):
            step_count += 1
            theta_hat = _etd_step(theta_hat, grid, coeffs)
            if not np.all(np.isfinite(theta_hat)):
                raise SolverDivergenceError("evolve_on_nodes", step_count)
        frames.append(inverse_array(theta_hat, grid))
    return Trajectory.from_stack(nodes, np.stack(frames), grid)


# ---------------------------------------------------------------------------
# Smallness
# ---------------------------------------------------------------------------

def smallness_check(theta0: RealField, cfg: SolverConfig, tg: TimeGrid, calib: CalibrationRecord) -> SmallnessReport:
    """Compare ||phi_0||_{E_T^nu} with mu0 and find the largest node horizon still within it"""
    nodes = tg.nodes()
    grid = theta0.grid
    stack = semigroup_stack(forward_array(theta0.samples, grid), nodes, dissipation_symbol(grid, cfg.alpha))
    running = np.maximum.accumulate(etnu_hat_profile(stack, nodes, grid, cfg))
    phi0_norm = float(running[-1])
    mu0 = calib.mu0_empirical
    margin = phi0_norm / mu0
    within = margin <= 1.0

    safe_horizon: Optional[float] = tg.T
    if not within:
        last = int(np.searchsorted(running, mu0, side="right")) - 1
        safe_horizon = float(nodes[last]) if last >= 1 else None
        logger.warning(f"⚠️ ||phi0|| exceeds mu0 by {margin:.3f}x; safe horizon {safe_horizon}")
    return SmallnessReport(
        phi0_norm=phi0_norm,
        mu0=mu0,
        margin=margin,
        within=within,
        horizon=tg.T,
        safe_horizon=safe_horizon,
    )


def contraction_factor(
    theta0: RealField,
    cfg: SolverConfig,
    tg: TimeGrid,
    max_iter: int = 30,
    tol: float = 1e-10,
) -> float:
    """Largest ratio d_n / d_{n-1} over the whole Picard run

    Differences at round-off count as 0. A run that diverges or whose iterates leave
    the ball of radius 2 ||phi0|| reports inf.
    """
    try:
        _, _, _, phi0_norm, _, iterates, diffs, _, diverged = _picard_core(theta0, cfg, tg, max_iter, tol)
    except SolverDivergenceError:
        return math.inf
    if diverged or max(iterates, default=0.0) > 2 * phi0_norm:
        return math.inf
    floor = 1e-12 * phi0_norm
    worst = 0.0
    for previous, current in zip(diffs, diffs[1:]):
        if previous <= floor or current <= floor:
            break
        worst = max(worst, current / previous)
    return worst


def calibrate_mu0(
    cfg: SolverConfig,
    grid: Grid2D,
    tg: TimeGrid,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    k_min: int = 1,
    k_max: int = 4,
    target: float = 0.5,
    bisection_steps: int = 12,
    max_iter: int = 30,
    tol: float = 1e-10,
) -> CalibrationRecord:
    """Bisect the data amplitude per seed until the whole-run contraction factor crosses the target"""
    from initial_data import random_bandlimited

    per_seed = []
    for seed in seeds:
        base = random_bandlimited(grid, seed=seed, k_min=k_min, k_max=k_max, amplitude=1.0)
        base_norm = float(np.max(etnu_hat_profile(
            semigroup_stack(forward_array(base.samples, grid), tg.nodes(), dissipation_symbol(grid, cfg.alpha)),
            tg.nodes(),
            grid,
            cfg,
        )))

        def passes(amplitude: float) -> bool:
            return contraction_factor(base.scaled(amplitude), cfg, tg, max_iter, tol) <= target

        low, high = 1e-3, 1e-1
        for _ in range(BRACKET_LIMIT):
            if passes(low):
                break
            low, high = low / 10, low
        for _ in range(BRACKET_LIMIT):
            if not passes(high):
                break
            low, high = high, high * 10
        for _ in range(bisection_steps):
            middle = math.sqrt(low * high)
            if passes(middle):
                low = middle
            else:
                high = middle
        per_seed.append(low * base_norm)
        logger.info(f"📏 Seed {seed}: largest contracting ||phi0|| = {low * base_norm:.4e}")

    record = CalibrationRecord(
        mu0_empirical=min(per_seed),
        alpha=cfg.alpha,
        grid=grid,
        time_grid=tg,
        seeds=list(seeds),
        contraction_target=target,
        per_seed_mu0=per_seed,
    )
    logger.info(f"✅ Calibrated mu0 = {record.mu0_empirical:.4e} over {len(per_seed)} seeds")
    return record
