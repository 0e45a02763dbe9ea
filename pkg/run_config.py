#!/usr/bin/env python3
"""
Run configuration - profiles, flat key = value files and the resolved echo

Resolution order: profile -> batch adjustments -> config file -> --set
overrides -> dedicated CLI flags. Every key is "section.key"; derived.*
keys are written to the echo for reference and ignored when read back.
"""

import copy
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from besov_analysis import parse_marker
from initial_data import InitialDataSpec
from models import Grid2D, SolverConfig, TimeGrid

load_dotenv()

logger = logging.getLogger(__name__)

ECHO_FILENAME = "resolved_config.cfg"
LIST_SEPARATORS = {"norms.markers": ";", "probes.selection": ",", "calibration.seeds": ","}
OPTIONAL_KEYS = {"initial.seed", "initial.path", "calibration.mu0"}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and file line when known"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SolverSection(BaseModel):
    alpha: float = Field(default=0.75, gt=0.5, lt=1.0)


class GridSection(BaseModel):
    n: int = Field(default=128, ge=8)
    period: float = Field(default=2 * math.pi, gt=0)
    dealias: float = Field(default=2.0 / 3.0, gt=0, le=1)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value


class TimeSection(BaseModel):
    T: float = Field(default=1.0, gt=0)
    M: int = Field(default=32, ge=1)
    gamma: float = Field(default=2.0, ge=1)
    dt: float = Field(default=1e-3, gt=0)
    n_steps: int = Field(default=1000, ge=0)
    save_every: int = Field(default=100, ge=1)


class NormsSection(BaseModel):
    markers: List[str] = ["l2", "linf", "besov:0.5,2,2,h", "btilde"]

    @field_validator("markers")
    @classmethod
    def _parseable(cls, value: List[str]) -> List[str]:
        for token in value:
            parse_marker(token)
        return value


class ProbesSection(BaseModel):
    selection: List[str] = ["all"]
    ceiling: float = Field(default=10.0, gt=1)
    t_star_factor: float = Field(default=1.25, gt=1)
    bilinear_p: float = Field(default=8.0, gt=1)
    fluctuation_p: float = Field(default=2.0, ge=1)
    lam: float = Field(default=0.5, ge=0, lt=1)


class PicardSection(BaseModel):
    max_iter: int = Field(default=30, ge=1)
    tol: float = Field(default=1e-10, gt=0)


class CalibrationSection(BaseModel):
    seeds: List[int] = [0, 1, 2, 3, 4]
    k_min: int = Field(default=1, ge=0)
    k_max: int = Field(default=4, ge=1)
    bisection_steps: int = Field(default=12, ge=1)
    mu0: Optional[float] = Field(default=None, gt=0)


class OutputSection(BaseModel):
    dir: str = Field(default_factory=lambda: os.getenv("QG_OUTPUT_DIR", "runs"))
    snapshot_every: int = Field(default=1, ge=1)


class RunSection(BaseModel):
    deterministic: bool = True
    workers: int = Field(default_factory=lambda: int(os.getenv("QG_FFT_WORKERS", "1")), ge=1)


class RunConfig(BaseModel):
    solver: SolverSection = SolverSection()
    grid: GridSection = GridSection()
    time: TimeSection = TimeSection()
    initial: InitialDataSpec = InitialDataSpec(preset="random-bandlimited", seed=0, amplitude=0.1)
    norms: NormsSection = NormsSection()
    probes: ProbesSection = ProbesSection()
    picard: PicardSection = PicardSection()
    calibration: CalibrationSection = CalibrationSection()
    output: OutputSection = OutputSection()
    run: RunSection = RunSection()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(alpha=self.solver.alpha)

    def grid2d(self) -> Grid2D:
        return Grid2D(n=self.grid.n, period=self.grid.period, dealias_fraction=self.grid.dealias)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(T=self.time.T, M=self.time.M, gamma=self.time.gamma)

    def markers(self):
        return [parse_marker(token) for token in self.norms.markers]

    def derived(self) -> Dict[str, float]:
        return self.solver_config().derived()


# Named starting points; batch adjustments and files refine them
RUN_PROFILES: Dict[str, Dict[str, Dict[str, Any]]] = {
    "default": {},
    "quick": {
        "grid": {"n": 64},
        "time": {"T": 0.5, "M": 16, "dt": 5e-3, "n_steps": 100, "save_every": 20},
        "calibration": {"seeds": [0, 1], "bisection_steps": 6},
        "probes": {"selection": ["max_principle", "riesz_growth", "persistence", "gronwall", "convergence"]},
    },
    "acceptance": {
        "grid": {"n": 256},
        "time": {"T": 2.0, "M": 64, "dt": 1e-3, "n_steps": 2000, "save_every": 100},
        "initial": {"preset": "random-bandlimited", "seed": 0, "amplitude": 0.1},
    },
}


def _default_tree() -> Dict[str, Dict[str, Any]]:
    return RunConfig().model_dump()


def known_keys() -> List[str]:
    return [f"{section}.{key}" for section, values in _default_tree().items() for key in values]


def _split_key(key: str) -> Tuple[str, str]:
    if key.count(".") != 1:
        raise ConfigError("keys must look like section.key", key=key)
    section, name = key.split(".")
    if f"{section}.{name}" not in known_keys():
        raise ConfigError("unknown key", key=key)
    return section, name


def _coerce(key: str, raw: Any) -> Any:
    """Text values from files and --set; pydantic does the typed conversion"""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key in LIST_SEPARATORS:
        return [item.strip() for item in text.split(LIST_SEPARATORS[key]) if item.strip()]
    if key in OPTIONAL_KEYS and text.lower() in ("", "none"):
        return None
    return text


def _validate(tree: Dict[str, Dict[str, Any]], lines: Optional[Dict[str, int]] = None) -> RunConfig:
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"][:2])
        line = (lines or {}).get(key)
        raise ConfigError(error["msg"], key=key, line=line) from e


def parse_config_text(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Flat 'section.key = value' lines into {key: raw value} plus the line of each key"""
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'section.key = value'", line=number)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("derived."):
            continue
        try:
            _split_key(key)
        except ConfigError as e:
            raise ConfigError("unknown key", key=key, line=number) from e
        values[key] = raw
        lines[key] = number
    return values, lines


class RunConfigPanel:
    """
    Builds a RunConfig from a profile plus layered adjustments
    """

    def __init__(self, profile: Optional[str] = None):
        self.tree = _default_tree()
        self.lines: Dict[str, int] = {}
        self.profile = profile or os.getenv("QG_PROFILE", "default")
        self.load_profile(self.profile)

    def load_profile(self, profile_name: str) -> None:
        """Reset to defaults and apply a named profile"""
        if profile_name not in RUN_PROFILES:
            raise ConfigError(f"unknown profile {profile_name!r}; available: {sorted(RUN_PROFILES)}", key="profile")
        self.tree = _default_tree()
        for section, values in RUN_PROFILES[profile_name].items():
            self.tree[section].update(copy.deepcopy(values))
        self.profile = profile_name
        logger.info(f"✅ Loaded {profile_name.upper()} run profile")

    def adjust(self, key: str, value: Any, line: Optional[int] = None) -> None:
        section, name = _split_key(key)
        old_value = self.tree[section].get(name)
        self.tree[section][name] = _coerce(key, value)
        if line is not None:
            self.lines[key] = line
        logger.debug(f"🔧 {key}: {old_value} → {self.tree[section][name]}")

    def batch_adjust(self, adjustments: Dict[str, Any]) -> None:
        """Adjust several keys at once; unknown keys are rejected"""
        if adjustments:
            logger.info(f"🔧 Applying {len(adjustments)} adjustments")
        for key, value in adjustments.items():
            self.adjust(key, value)

    def apply_file(self, path: Union[str, Path]) -> None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        values, lines = parse_config_text(path.read_text())
        for key, raw in values.items():
            self.adjust(key, raw, line=lines[key])
        logger.info(f"📄 Applied {len(values)} settings from {path}")

    def apply_overrides(self, pairs: List[str]) -> None:
        """--set key=value pairs"""
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            key, raw = (part.strip() for part in pair.split("=", 1))
            self.adjust(key, raw)

    def resolve(self) -> RunConfig:
        return _validate(self.tree, self.lines)

    def show_current_settings(self) -> None:
        for line in to_flat_lines(_validate(self.tree, self.lines)):
            logger.debug(f"   {line}")


def _format_value(value: Any, separator: str = ",") -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return f"{separator} ".join(_format_value(item) for item in value)
    return str(value)


def to_flat_lines(config: RunConfig) -> List[str]:
    lines = []
    for section, values in config.model_dump().items():
        for key, value in values.items():
            separator = LIST_SEPARATORS.get(f"{section}.{key}", ",")
            lines.append(f"{section}.{key} = {_format_value(value, separator)}")
    for key, value in config.derived().items():
        lines.append(f"derived.{key} = {_format_value(value)}")
    return lines


def write_echo(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Write the fully resolved configuration, derived exponents included"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / ECHO_FILENAME
    path.write_text("# resolved run configuration\n" + "\n".join(to_flat_lines(config)) + "\n")
    return path


def load_config(
    path: Optional[Union[str, Path]] = None,
    profile: Optional[str] = None,
    overrides: Optional[List[str]] = None,
    adjustments: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Resolve a configuration the way the CLI does"""
    panel = RunConfigPanel(profile)
    panel.batch_adjust(adjustments or {})
    if path is not None:
        panel.apply_file(path)
    panel.apply_overrides(overrides or [])
    return panel.resolve()
