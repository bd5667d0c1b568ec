from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Integrator(str, Enum):
    IF_RK4 = "ifrk4"       # integrating-factor RK4
    ETDRK4 = "etdrk4"      # exponential time differencing RK4
    STRANG = "strang"      # Strang splitting, exact linear half steps


class DtPolicy(str, Enum):
    FIXED = "fixed"
    HEURISTIC = "heuristic"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    REPORT_ONLY = "report-only"


# Simulation configuration (one run file)
class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    k: int = Field(ge=1)
    nx: int
    ny: int
    Lx: float = Field(gt=0)
    Ly: float = Field(gt=0)
    T: float = Field(gt=0)
    dt: float = Field(gt=0)
    integrator: Integrator = Integrator.IF_RK4
    dealias: bool = True
    dt_policy: DtPolicy = DtPolicy.FIXED
    snapshot_stride: int = Field(default=100, ge=1)
    diagnostic_stride: int = Field(default=10, ge=1)

    # Heuristic dt knobs: dt_n = min(dt, dt_prefactor * (1 + ||u||_{H^dt_sobolev})^(-2/gamma))
    dt_prefactor: float = Field(default=0.1, gt=0)
    dt_sobolev: float = 1.0
    dt_min: float = Field(default=1e-6, gt=0)
    seed: int = 1234

    @field_validator("nx", "ny")
    @classmethod
    def _even_resolution(cls, v: int) -> int:
        if v < 8 or v % 2:
            raise ValueError(f"must be even and >= 8, got {v}")
        return v

    @model_validator(mode="after")
    def _dt_floor(self):
        if self.dt_min > self.dt:
            raise ValueError("dt_min must not exceed dt")
        return self

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


# One row of the conserved-quantity time series
class DiagnosticsRow(BaseModel):
    t: float
    I1: float
    I2: float
    H1: float
    Linf: float
    grad_L2: float


class ProbeSample(BaseModel):
    kind: str
    sample_seed: int
    ratio: float
    grid: str
    T: float


class ProbeSummary(BaseModel):
    kind: str
    grid: str
    T: float
    max_ratio: float
    mean_ratio: float
    samples: List[ProbeSample]


class GroundStateMetadata(BaseModel):
    k: int
    c: float
    residual: float
    mass: float
    gradient_energy: float
    potential: float


class ExperimentVerdict(BaseModel):
    """Machine-readable outcome of one experiment."""
    experiment: str
    verdict: Verdict
    seed: Optional[int] = None
    measured: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.verdict is Verdict.FAIL


class RunManifest(BaseModel):
    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    version: str
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)
