#!/usr/bin/env python3
"""
Experiment runner - the simulate, picard, probe, verify and calibrate-mu0 workflows

Shared by the command line and the HTTP service. Every workflow writes its
artifacts below the configured output directory and returns a RunSummary.
"""

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from besov_analysis import FilterBank, Trajectory, build_filter_bank, etnu_profile, norm_report
from field_io import (
    write_csv,
    write_manifest,
    write_norm_rows,
    write_probe_reports,
    write_snapshot,
    write_trajectory_snapshots,
)
from initial_data import build_initial_data, random_bandlimited
from mild_solver import (
    calibrate_mu0,
    evolve_etd,
    evolve_on_nodes,
    picard_iterate,
    semigroup_trajectory,
    smallness_check,
)
from models import CalibrationRecord, GronwallParams, ProbeReport
from run_config import RunConfig, write_echo
from spectral_core import RealField, fft_threads, lp_norm, riesz_perp_linf
from verification import (
    bilinear_estimate_probe,
    blowup_lower_bound_probe,
    calibrate_characterization,
    convergence_diagnostic,
    duhamel_smoothing_probe,
    embedding_constant_probe,
    fluctuation_regularity_probe,
    gronwall_bound,
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

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROBE_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

FAMILY_SEEDS = tuple(range(10))
CHARACTERIZATION_S = -0.5
CHARACTERIZATION_P = 2.0


class RunSummary(BaseModel):
    workflow: str
    status: str = "ok"
    exit_code: int = EXIT_OK
    values: Dict[str, Any] = {}
    reports: List[ProbeReport] = []
    artifacts: List[str] = []


class ExperimentRunner:
    """
    Runs one workflow for a resolved configuration
    """

    def __init__(self, config: RunConfig, out_dir: Optional[str] = None):
        self.config = config
        self.out_dir = Path(out_dir or config.output.dir)
        self.cfg = config.solver_config()
        self.grid = config.grid2d()
        self._theta0: Optional[RealField] = None
        self._trajectory: Optional[Trajectory] = None
        self._node_trajectory: Optional[Trajectory] = None
        self._bank: Optional[FilterBank] = None
        self.probes: Dict[str, Callable[[], List[ProbeReport]]] = {
            "kernel": self._probe_kernel,
            "kernel_gradient": self._probe_kernel_gradient,
            "bilinear": self._probe_bilinear,
            "gronwall": self._probe_gronwall,
            "max_principle": lambda: [max_principle_report(self.trajectory)],
            "riesz_growth": lambda: [riesz_growth_report(self.trajectory, self.cfg)],
            "blowup": self._probe_blowup,
            "persistence": self._probe_persistence,
            "fluctuation": self._probe_fluctuation,
            "nonlinear_continuity": lambda: [
                nonlinear_continuity_probe(self.theta0, self.node_trajectory, self.cfg, self.bank)
            ],
            "scaling": self._probe_scaling,
            "convergence": self._probe_convergence,
            "duhamel_smoothing": self._probe_duhamel_smoothing,
            "characterization": self._probe_characterization,
            "embedding": lambda: [embedding_constant_probe(self._family(), self.cfg, self.bank)],
        }

    # -- lazily shared state ------------------------------------------------

    @property
    def theta0(self) -> RealField:
        if self._theta0 is None:
            self._theta0 = build_initial_data(self.config.initial, self.grid)
        return self._theta0

    @property
    def bank(self) -> FilterBank:
        if self._bank is None:
            self._bank = build_filter_bank(self.grid)
        return self._bank

    @property
    def trajectory(self) -> Trajectory:
        if self._trajectory is None:
            time = self.config.time
            self._trajectory = evolve_etd(self.theta0, self.cfg, time.dt, time.n_steps, time.save_every)
        return self._trajectory

    @property
    def node_trajectory(self) -> Trajectory:
        """ETD run landing on the graded Picard nodes, resolving t -> 0"""
        if self._node_trajectory is None:
            nodes = self.config.time_grid().nodes()
            self._node_trajectory = evolve_on_nodes(self.theta0, self.cfg, nodes, max_dt=self.config.time.dt)
        return self._node_trajectory

    def _family(self) -> List[RealField]:
        calibration = self.config.calibration
        return [
            random_bandlimited(self.grid, seed, max(calibration.k_min, 1), calibration.k_max)
            for seed in FAMILY_SEEDS
        ]

    def _calibration_record(self) -> Optional[CalibrationRecord]:
        mu0 = self.config.calibration.mu0
        if mu0 is None:
            return None
        return CalibrationRecord(
            mu0_empirical=mu0,
            alpha=self.cfg.alpha,
            grid=self.grid,
            time_grid=self.config.time_grid(),
            seeds=self.config.calibration.seeds,
        )

    def _start(self, workflow: str) -> RunSummary:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        echo = write_echo(self.config, self.out_dir)
        logger.info(f"🚀 Starting {workflow} in {self.out_dir}")
        return RunSummary(workflow=workflow, artifacts=[str(echo)])

    # -- workflows ----------------------------------------------------------

    def simulate(self) -> RunSummary:
        summary = self._start("simulate")
        traj = self.trajectory
        save_every = self.config.time.save_every
        steps = [min(index * save_every, self.config.time.n_steps) for index in range(len(traj))]
        markers = self.config.markers()

        artifacts = [
            write_manifest(self.out_dir / "manifest.csv", traj, steps=steps),
            write_norm_rows(self.out_dir / "norms_initial.csv", norm_report(traj.fields[0], markers, self.cfg, self.bank)),
            write_norm_rows(self.out_dir / "norms_final.csv", norm_report(traj.fields[-1], markers, self.cfg, self.bank)),
        ]
        artifacts += write_trajectory_snapshots(self.out_dir / "snapshots", traj, every=self.config.output.snapshot_every)
        final = traj.fields[-1]
        summary.values = {
            "time": float(traj.horizon),
            "linf": lp_norm(final.samples, final.grid, math.inf),
            "l2": lp_norm(final.samples, final.grid, 2),
            "riesz_linf": riesz_perp_linf(final.samples, final.grid),
            "mean": final.mean(),
        }
        summary.artifacts += [str(path) for path in artifacts]
        return summary

    def picard(self) -> RunSummary:
        summary = self._start("picard")
        tg = self.config.time_grid()
        calib = self._calibration_record()
        result = picard_iterate(self.theta0, self.cfg, tg, self.config.picard.max_iter, self.config.picard.tol, calib)

        iterations = [
            [index, norm, result.diff_norms[index - 1] if index else None]
            for index, norm in enumerate(result.iterates_norms)
        ]
        artifacts = [
            write_csv(self.out_dir / "picard_iterations.csv", ["iteration", "iterate_norm", "diff_norm"], iterations),
            write_manifest(
                self.out_dir / "picard_manifest.csv",
                result.limit,
                etnu_running=np.maximum.accumulate(etnu_profile(result.limit, self.cfg)),
            ),
            write_snapshot(self.out_dir / "picard_limit.qgf", result.limit.fields[-1]),
        ]
        artifacts += write_trajectory_snapshots(
            self.out_dir / "picard_snapshots", result.limit, every=self.config.output.snapshot_every
        )
        summary.values = {
            "converged": result.converged,
            "diverged": result.diverged,
            "iterations": result.iterations,
            "phi0_norm": result.phi0_norm,
            "residual": result.residual,
            "mu0_margin": result.mu0_margin,
        }
        if calib is not None:
            report = smallness_check(self.theta0, self.cfg, tg, calib)
            summary.values["local_existence_time"] = report.safe_horizon
        if result.diverged:
            summary.status = "diverged"
        summary.artifacts += [str(path) for path in artifacts]
        return summary

    def calibrate(self) -> RunSummary:
        summary = self._start("calibrate-mu0")
        calibration = self.config.calibration
        record = calibrate_mu0(
            self.cfg,
            self.grid,
            self.config.time_grid(),
            seeds=calibration.seeds,
            k_min=calibration.k_min,
            k_max=calibration.k_max,
            bisection_steps=calibration.bisection_steps,
            max_iter=self.config.picard.max_iter,
            tol=self.config.picard.tol,
        )
        path = self.out_dir / "calibration.json"
        path.write_text(record.model_dump_json(indent=2))
        summary.values = {"mu0": record.mu0_empirical, "per_seed_mu0": record.per_seed_mu0}
        summary.artifacts.append(str(path))
        return summary

    def probe(self, name: str) -> RunSummary:
        if name not in self.probes:
            raise ValueError(f"unknown probe {name!r}; available: {sorted(self.probes)}")
        summary = self._start(f"probe {name}")
        return self._finish_probes(summary, self.probes[name]())

    def verify(self) -> RunSummary:
        summary = self._start("verify")
        selection = self.config.probes.selection
        names = list(self.probes) if "all" in selection else selection
        unknown = [name for name in names if name not in self.probes]
        if unknown:
            raise ValueError(f"unknown probes {unknown}; available: {sorted(self.probes)}")
        reports: List[ProbeReport] = []
        for name in names:
            logger.info(f"🔬 Running probe {name}")
            reports.extend(self.probes[name]())
        return self._finish_probes(summary, reports)

    def _finish_probes(self, summary: RunSummary, reports: List[ProbeReport]) -> RunSummary:
        path = write_probe_reports(self.out_dir / "probes.csv", reports)
        summary.artifacts.append(str(path))
        for report in reports:
            if report.name == "persistence":
                rows = persistence_rows(report)
                summary.artifacts.append(str(write_csv(self.out_dir / "persistence.csv", ["time", "quantity", "value"], rows)))
        failed = [report.name for report in reports if not report.passed and not report.skipped]
        summary.reports = reports
        summary.values = {"failed": failed, "count": len(reports)}
        if failed:
            logger.warning(f"⚠️ Failed probes: {', '.join(failed)}")
            summary.status = "failed"
            summary.exit_code = EXIT_PROBE_FAILED
        else:
            logger.info(f"✅ All {len(reports)} probes passed")
        return summary

    # -- probe adapters -------------------------------------------------------

    def _probe_kernel(self) -> List[ProbeReport]:
        reports = [kernel_exponent_probe(self.cfg, r) for r in (1.0, 2.0, math.inf)]
        reports.append(kernel_mass_probe(self.cfg))
        return reports

    def _probe_kernel_gradient(self) -> List[ProbeReport]:
        return [
            kernel_exponent_probe(self.cfg, r, kind=kind)
            for kind in ("gradient", "riesz_gradient")
            for r in (1.0, 2.0)
        ]

    def _probe_bilinear(self) -> List[ProbeReport]:
        p = self.config.probes.bilinear_p
        return [
            bilinear_estimate_probe(self.cfg, p=p, variant="ess"),
            bilinear_estimate_probe(self.cfg, p=p, variant="ess3"),
        ]

    def _probe_gronwall(self) -> List[ProbeReport]:
        params = GronwallParams(c1=1.0, c2=1.0, kappa=0.5)
        times, values = solve_volterra_equality(params, T=1.0, M=400)
        return [gronwall_bound(params, times, values)]

    def _probe_blowup(self) -> List[ProbeReport]:
        t_star = self.config.probes.t_star_factor * self.trajectory.horizon
        if t_star <= 0:
            return [ProbeReport(name="blowup_lower_bound", skipped=True, notice="trajectory has no positive horizon")]
        return [blowup_lower_bound_probe(self.trajectory, self.cfg, t_star)]

    def _probe_persistence(self) -> List[ProbeReport]:
        return [
            persistence_tracker(self.trajectory, self.config.markers(), self.cfg, self.bank, self.config.probes.ceiling)
        ]

    def _probe_fluctuation(self) -> List[ProbeReport]:
        if self.trajectory.horizon <= 0:
            return [ProbeReport(name="fluctuation_regularity", skipped=True, notice="trajectory has no positive horizon")]
        return [
            fluctuation_regularity_probe(self.theta0, self.trajectory, self.cfg, self.bank, p=self.config.probes.fluctuation_p)
        ]

    def _probe_scaling(self) -> List[ProbeReport]:
        time = self.config.time
        return [scaling_covariance_probe(self.theta0, self.cfg, time.dt, min(time.n_steps, 50))]

    def _probe_convergence(self) -> List[ProbeReport]:
        tg = self.config.time_grid()
        result = picard_iterate(self.theta0, self.cfg, tg, self.config.picard.max_iter, self.config.picard.tol)
        sigma = [0.0] * len(result.iterates_norms)
        return [convergence_diagnostic(result.diff_norms, result.iterates_norms, self.config.probes.lam, sigma)]

    def _probe_duhamel_smoothing(self) -> List[ProbeReport]:
        tg = self.config.time_grid()
        free = semigroup_trajectory(self.theta0, self.cfg, tg)
        mu = min(0.9, 1 - 1 / (2 * self.cfg.alpha) + 0.1)
        return [duhamel_smoothing_probe((free, free), self.cfg, tg, mu)]

    def _probe_characterization(self) -> List[ProbeReport]:
        r_min, r_max, spread = calibrate_characterization(
            self._family(), CHARACTERIZATION_S, CHARACTERIZATION_P, self.cfg, self.bank
        )
        return [ProbeReport(
            name="characterization",
            measured=spread,
            passed=math.isfinite(spread),
            details={"r_min": r_min, "r_max": r_max, "s": CHARACTERIZATION_S, "p": CHARACTERIZATION_P},
        )]


def run_workflow(config: RunConfig, workflow: str, probe_name: Optional[str] = None, out_dir: Optional[str] = None) -> RunSummary:
    """Dispatch a workflow by its command name; the FFT thread count is scoped to the calling thread"""
    runner = ExperimentRunner(config, out_dir)
    with fft_threads(config.run.workers, config.run.deterministic):
        if workflow == "simulate":
            return runner.simulate()
        if workflow == "picard":
            return runner.picard()
        if workflow == "calibrate-mu0":
            return runner.calibrate()
        if workflow == "verify":
            return runner.verify()
        if workflow == "probe":
            if not probe_name:
                raise ValueError("probe workflow needs a probe name")
            return runner.probe(probe_name)
    raise ValueError(f"unknown workflow {workflow!r}")


def probe_names() -> List[str]:
    return list(ExperimentRunner(RunConfig()).probes)
