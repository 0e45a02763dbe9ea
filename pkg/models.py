import math
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Grid2D(BaseModel):
    """Periodic square domain [0, period)^2 sampled with n points per axis"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=8)
    period: float = Field(default=2 * math.pi, gt=0)
    dealias_fraction: float = Field(default=2.0 / 3.0, gt=0, le=1)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def cell_area(self) -> float:
        """Quadrature weight (L/n)^2 of one sample"""
        return self.spacing ** 2

    @property
    def fundamental(self) -> float:
        """Smallest nonzero wavenumber 2*pi/L"""
        return 2 * math.pi / self.period

    @property
    def dealias_cutoff(self) -> float:
        """Largest retained |m_j| after the quadratic-term truncation"""
        return self.dealias_fraction * self.n / 2

    def refined(self, factor: int) -> "Grid2D":
        return Grid2D(n=self.n * factor, period=self.period, dealias_fraction=self.dealias_fraction)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.75, gt=0.5, lt=1.0)

    @property
    def nu(self) -> float:
        return 1 - 1 / (2 * self.alpha)

    @property
    def p_c(self) -> float:
        return 2 / (2 * self.alpha - 1)

    @property
    def s_c(self) -> float:
        return 2 - 2 * self.alpha

    def derived(self) -> Dict[str, float]:
        return {"nu": self.nu, "p_c": self.p_c, "s_c": self.s_c}


class BesovSpec(BaseModel):
    """Regularity s, integrability p, summability q (math.inf allowed)"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["besov"] = "besov"
    s: float
    p: float = Field(ge=1)
    q: float = Field(ge=1)
    homogeneous: bool = False

    @property
    def label(self) -> str:
        prefix = "Bdot" if self.homogeneous else "B"
        return f"{prefix}_{_fmt_exp(self.p)}^{{{self.s:g},{_fmt_exp(self.q)}}}"


class LebesgueSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["lebesgue"] = "lebesgue"
    p: float = Field(ge=1)

    @property
    def label(self) -> str:
        return f"L^{_fmt_exp(self.p)}"


class BTildeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["btilde"] = "btilde"

    @property
    def label(self) -> str:
        return "Btilde^alpha"


NormMarker = Union[BesovSpec, LebesgueSpec, BTildeSpec]


class WeightedNormSpec(BaseModel):
    """sup_{0<t<=T} t^mu ||f(t)||_X for the base norm X"""
    model_config = ConfigDict(frozen=True)

    mu: float = Field(ge=0)
    T: float = Field(gt=0)
    base_norm: Literal["linf", "lp", "linf_riesz", "lp_riesz"] = "linf"
    p: float = Field(default=2.0, ge=1)


class TimeGrid(BaseModel):
    """Nodes t_m = T (m/M)^gamma, clustered at 0 when gamma > 1"""
    model_config = ConfigDict(frozen=True)

    T: float = Field(gt=0)
    M: int = Field(ge=1)
    gamma: float = Field(default=2.0, ge=1)

    def nodes(self) -> np.ndarray:
        m = np.arange(self.M + 1, dtype=float)
        nodes = self.T * (m / self.M) ** self.gamma
        nodes[-1] = self.T
        return nodes


class GronwallParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c1: float = Field(ge=0)
    c2: float = Field(ge=0)
    kappa: float = Field(gt=0, lt=1)

    @property
    def gamma_kappa(self) -> float:
        """Gamma(1 - kappa) = integral of e^{-t} t^{-kappa} over (0, inf)"""
        from scipy.special import gamma

        return float(gamma(1 - self.kappa))

    @property
    def rate(self) -> float:
        """Solves c2 * gamma_kappa * rho^(kappa-1) = 1/2"""
        return (2 * self.c2 * self.gamma_kappa) ** (1 / (1 - self.kappa))

    def bound(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return 2 * self.c1 * np.exp(self.rate * np.asarray(t, dtype=float))


class CalibrationRecord(BaseModel):
    """Empirical smallness threshold for the Picard contraction"""
    mu0_empirical: float = Field(gt=0)
    alpha: float
    grid: Grid2D
    time_grid: TimeGrid
    seeds: List[int] = []
    contraction_target: float = 0.5
    per_seed_mu0: List[float] = []


class SmallnessReport(BaseModel):
    phi0_norm: float
    mu0: float
    margin: float
    within: bool
    horizon: float
    safe_horizon: Optional[float] = None


class ProbeReport(BaseModel):
    name: str
    expected: Optional[float] = None
    measured: Optional[float] = None
    deviation: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool = True
    skipped: bool = False
    notice: Optional[str] = None
    details: Dict[str, Any] = {}
    config: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _pass_matches_tolerance(self) -> "ProbeReport":
        if self.tolerance is not None and self.deviation is not None and not self.skipped:
            within = bool(np.isfinite(self.deviation) and self.deviation <= self.tolerance)
            if within != self.passed:
                raise ValueError(
                    f"probe {self.name}: passed={self.passed} disagrees with deviation "
                    f"{self.deviation} vs tolerance {self.tolerance}"
                )
        return self

    @classmethod
    def from_exponent(
        cls,
        name: str,
        expected: float,
        measured: float,
        tolerance: float,
        **extra: Any,
    ) -> "ProbeReport":
        """Relative deviation, or absolute when the expected exponent is 0"""
        if expected == 0:
            deviation = abs(measured)
        else:
            deviation = abs(measured - expected) / abs(expected)
        passed = bool(np.isfinite(deviation) and deviation <= tolerance)
        return cls(
            name=name,
            expected=expected,
            measured=measured,
            deviation=float(deviation),
            tolerance=tolerance,
            passed=passed,
            **extra,
        )

    def csv_row(self) -> List[Any]:
        return [
            self.name,
            "" if self.expected is None else repr(self.expected),
            "" if self.measured is None else repr(self.measured),
            "" if self.deviation is None else repr(self.deviation),
            "" if self.tolerance is None else repr(self.tolerance),
            "skipped" if self.skipped else ("pass" if self.passed else "fail"),
        ]


def _fmt_exp(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"
