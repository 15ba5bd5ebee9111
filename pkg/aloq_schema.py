"""
Schema for hyperparameters, run configuration and run records.
Every model here is serialisable so result headers can carry it verbatim.
"""

import math
from enum import Enum
from typing import List, Optional, Tuple, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _all_finite(values: List[float], name: str) -> List[float]:
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} must be finite")
    return values


class KernelHyper(BaseModel):
    """Squared-exponential kernel hyperparameters"""
    model_config = ConfigDict(frozen=True)

    w0: float
    lengthscales: List[float]
    noise_var: float = 0.0

    @field_validator("lengthscales")
    @classmethod
    def _finite_lengthscales(cls, v):
        return _all_finite(v, "lengthscales")

    def is_positive(self, jitter_floor: float = 0.0) -> bool:
        return self.w0 > 0 and all(w > 0 for w in self.lengthscales) and self.noise_var >= jitter_floor


class WarpParams(BaseModel):
    """Per-dimension Beta-CDF warp parameters"""
    model_config = ConfigDict(frozen=True)

    alpha: List[float]
    beta: List[float]

    @model_validator(mode="after")
    def _matching_dims(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta must have the same length")
        _all_finite(self.alpha + self.beta, "warp parameters")
        return self

    @classmethod
    def identity(cls, dim: int) -> "WarpParams":
        return cls(alpha=[1.0] * dim, beta=[1.0] * dim)

    def is_positive(self) -> bool:
        return all(a > 0 for a in self.alpha) and all(b > 0 for b in self.beta)


class HyperSample(BaseModel):
    """One draw of every GP hyperparameter; warp is None when warping is disabled"""
    model_config = ConfigDict(frozen=True)

    kernel: KernelHyper
    warp: Optional[WarpParams] = None
    log_posterior: float = 0.0

    @field_validator("log_posterior")
    @classmethod
    def _finite_log_posterior(cls, v):
        if not math.isfinite(v):
            raise ValueError("log_posterior must be finite")
        return v


class HyperPrior(BaseModel):
    """Log-normal (mu, sigma) hyperpriors and which hyperparameters are sampled"""
    model_config = ConfigDict(frozen=True)

    signal: Tuple[float, float] = (0.0, 1.0)
    lengthscale: Tuple[float, float] = (0.0, 0.75)
    warp: Tuple[float, float] = (0.0, 0.5)
    noise: Tuple[float, float] = (-4.0, 1.0)
    warp_enabled: bool = True
    learn_noise: bool = False
    fixed_noise_ratio: float = Field(default=1e-6, ge=0.0)


class ChainConfig(BaseModel):
    """Slice-sampler chain settings; thinning=0 records the current state without sweeping"""

    seed: int = 0
    n_samples: int = Field(default=10, ge=1)
    burn_in: int = Field(default=50, ge=0)
    thinning: int = Field(default=5, ge=0)
    initial_point: Optional[List[float]] = None
    step_width: List[float] = Field(default_factory=lambda: [1.0])
    max_step_outs: int = Field(default=50, ge=0)
    max_shrinks: int = Field(default=200, ge=1)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None

    @field_validator("step_width")
    @classmethod
    def _positive_widths(cls, v):
        if not v or any(w <= 0 for w in v):
            raise ValueError("step widths must be positive")
        return v

    def widths(self, dim: int) -> List[float]:
        if len(self.step_width) == 1:
            return self.step_width * dim
        if len(self.step_width) != dim:
            raise ValueError(f"step_width has {len(self.step_width)} entries, expected {dim}")
        return list(self.step_width)


class AcquisitionConfig(BaseModel):
    kappa: float = Field(default=1.5, ge=0.0)
    direct_budget: int = Field(default=500, ge=1)
    direct_tol: float = Field(default=1e-4, gt=0.0)
    direct_eps: float = Field(default=1e-4, ge=0.0)


class Variant(str, Enum):
    ALOQ = "ALOQ"
    RQ_ALOQ = "RQ-ALOQ"
    UNWARPED = "UNWARPED"
    ONE_STEP = "ONE-STEP"
    NAIVE = "NAIVE"
    US_ALOQ = "US-ALOQ"

    @property
    def intensifies(self) -> bool:
        return self in (Variant.ALOQ, Variant.RQ_ALOQ, Variant.UNWARPED, Variant.US_ALOQ)


class HyperChainSettings(BaseModel):
    """Per-iteration hyperposterior chain sizes; the seed is derived from the run seed"""

    n_samples: int = Field(default=10, ge=1)
    burn_in: int = Field(default=50, ge=0)
    thinning: int = Field(default=5, ge=0)
    step_width: float = Field(default=1.0, gt=0.0)
    max_step_outs: int = Field(default=50, ge=0)


class RunConfig(BaseModel):
    task: str
    budget: int = Field(ge=2)
    initial_design: Optional[int] = Field(default=None, ge=2)
    seed: int = 0
    variant: Variant = Variant.ALOQ
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    hyper_chain: HyperChainSettings = Field(default_factory=HyperChainSettings)
    mc_size: int = Field(default=200, ge=100)

    @model_validator(mode="after")
    def _budget_fits_design(self):
        if self.initial_design is not None:
            self.check_budget(self.initial_design)
        return self

    def check_budget(self, initial_design: int) -> None:
        if self.budget < initial_design:
            raise ValueError(
                f"budget {self.budget} is smaller than the initial design {initial_design}")
        if self.variant.intensifies and (self.budget - initial_design) % 2 != 0:
            raise ValueError(
                f"{self.variant.value} makes two calls per iteration: budget - initial design "
                f"({self.budget} - {initial_design}) must be even")


Phase = Literal["init", "explore", "intensify"]


class CallRecord(BaseModel):
    call: int
    policy: List[float]
    env: List[float]
    value: float
    phase: Phase
    wall_ms: float = 0.0


class IncumbentRecord(BaseModel):
    call: int
    policy: List[float]
    estimated_fbar: float
    oracle_fbar: Optional[float] = None


class Trace(BaseModel):
    task: str
    variant: Variant
    seed: int
    gp_input_dim: int
    calls: List[CallRecord] = Field(default_factory=list)
    incumbents: List[IncumbentRecord] = Field(default_factory=list)
    final_policy: List[float] = Field(default_factory=list)
    final_oracle_fbar: Optional[float] = None
    final_hyper_samples: List[HyperSample] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)

    def incumbent_at(self, call: int) -> Optional[IncumbentRecord]:
        """Latest incumbent recorded at or before `call`; None while no model has been fit yet"""
        if not self.incumbents:
            raise ValueError("trace has no incumbent records")
        chosen = None
        for record in self.incumbents:
            if record.call <= call:
                chosen = record
            else:
                break
        return chosen


class ExperimentSpec(BaseModel):
    task: str
    variants: List[Variant]
    seeds: List[int]
    budget: int = Field(ge=2)
    kappa: Optional[float] = Field(default=None, ge=0.0)
    initial_design: Optional[int] = Field(default=None, ge=2)
    mc_size: Optional[int] = Field(default=None, ge=100)
    hyper_samples: Optional[int] = Field(default=None, ge=1)
    hyper_burn_in: Optional[int] = Field(default=None, ge=0)
    hyper_thinning: Optional[int] = Field(default=None, ge=0)
    direct_budget: Optional[int] = Field(default=None, ge=1)
    output_dir: str = "outputs"
    jobs: int = Field(default=1, ge=1)
    force: bool = False

    @field_validator("variants", "seeds")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("at least one entry is required")
        return v


class ResultRow(BaseModel):
    task: str
    variant: Variant
    seed: int
    call: int
    incumbent: Optional[List[float]] = None
    fbar_oracle: Optional[float] = None
