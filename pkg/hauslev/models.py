"""Pydantic models for configuration, diagnostics, reports and API payloads"""
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ShapeName = Literal["interval", "ball", "two-component", "ribbon", "uniform"]
SweepMethod = Literal["adaptive", "oracle", "fixed-j", "support"]
LossName = Literal["hausdorff", "symdiff"]
SelectionMode = Literal["adaptive", "oracle", "fixed", "support"]
SnRule = Literal["loglog", "log"]


def _split_csv(v):
    """Accept comma-separated strings where a list is expected"""
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


class ModelSpec(BaseModel):
    """Synthetic density model description"""

    shape: ShapeName = Field("interval", description="Shape of the level set G*_gamma")
    d: int = Field(1, ge=1, le=3, description="Dimension of the unit hypercube")
    gamma: float = Field(0.8, ge=0, description="Target level; 0 selects the support-set model")
    alpha: float = Field(1.0, ge=0, description="Regularity exponent around the level")
    center: Optional[List[float]] = Field(
        None, description="Component center (ball/interval) or slab center (ribbon, first entry)"
    )
    radius: Optional[float] = Field(None, gt=0, description="Component radius (interval half-width)")
    width: Optional[float] = Field(None, gt=0, description="Ribbon width")
    r_cap: Optional[float] = Field(None, gt=0, description="Distance beyond which the power term is capped")

    model_config = ConfigDict(frozen=True)

    @field_validator("center", mode="before")
    @classmethod
    def parse_center(cls, v):
        """Parse center - can be comma-separated string or list"""
        return _split_csv(v)


class EstimatorConfig(BaseModel):
    """Tuning knobs of the plug-in level set estimator"""

    gamma: float = Field(..., ge=0, description="Level; 0 routes to support-set estimation")
    delta: Optional[float] = Field(
        None, gt=0, lt=1, description="Confidence parameter; defaults to 1/n"
    )
    s_n: Union[float, SnRule] = Field(
        "loglog", description="Diverging sequence: 'loglog', 'log' or an explicit value >= 2"
    )
    j_max: Optional[int] = Field(None, ge=0, description="Override of the search ceiling J")
    alpha: Optional[float] = Field(
        None, ge=0, description="Known regularity; enables the nonadaptive oracle resolution"
    )
    jump_mode: bool = Field(False, description="Scale vernier and penalty by 2^(-j'/2)")
    j_fixed: Optional[int] = Field(None, ge=0, description="Estimate at this resolution, no selection")
    cell_budget: Optional[int] = Field(None, ge=1, description="Override of the settings cell budget")

    model_config = ConfigDict(frozen=True)

    @field_validator("s_n", mode="before")
    @classmethod
    def parse_s_n(cls, v):
        """Numbers given as strings are explicit values"""
        if isinstance(v, str) and v not in ("loglog", "log"):
            try:
                return float(v)
            except ValueError:
                raise ValueError("s_n must be 'loglog', 'log' or a number")
        return v

    @field_validator("s_n")
    @classmethod
    def check_s_n(cls, v):
        if isinstance(v, float) and v < 2:
            raise ValueError("explicit s_n must be at least 2")
        return v


class SelectionRecord(BaseModel):
    """Objective trace at one candidate resolution"""

    j: int
    j_prime: int
    vernier: float
    penalty: float
    objective: float
    epsilon: Optional[float] = Field(
        None, description="(Psi_j/C_1)^(1/alpha) + sqrt(d) 2^-j when the model constants are known"
    )


class SelectionDiagnostics(BaseModel):
    """How the estimate's resolution was chosen"""

    mode: SelectionMode
    chosen_j: int
    j_max: Optional[int] = None
    s_n: float
    delta: float
    records: List[SelectionRecord] = Field(default_factory=list)


class SweepPlan(BaseModel):
    """Monte Carlo sweep definition"""

    model: ModelSpec
    method: SweepMethod = "adaptive"
    n_grid: List[int]
    replications: int = Field(1, ge=1)
    base_seed: int = Field(0, ge=0)
    losses: List[LossName] = Field(default_factory=lambda: ["hausdorff", "symdiff"])
    j_ref: Optional[int] = Field(None, ge=0)
    j_fixed: Optional[int] = Field(None, ge=0)
    delta: Optional[float] = Field(None, gt=0, lt=1)
    s_n: Union[float, SnRule] = "loglog"
    jump_mode: bool = False
    workers: Optional[int] = Field(None, ge=1)
    record_timing: bool = False

    @field_validator("n_grid", "losses", mode="before")
    @classmethod
    def parse_lists(cls, v):
        """Parse lists - can be comma-separated string or list"""
        return _split_csv(v)

    @field_validator("n_grid")
    @classmethod
    def check_n_grid(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("n_grid must not be empty")
        if any(n < 2 for n in v):
            raise ValueError("every sample size must be at least 2")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return v

    @model_validator(mode="after")
    def check_method(self):
        if self.method == "fixed-j" and self.j_fixed is None:
            raise ValueError("method fixed-j needs j")
        if self.method == "support" and self.model.gamma != 0:
            raise ValueError("method support needs a model with gamma = 0")
        if self.method != "support" and self.model.gamma == 0:
            raise ValueError("gamma = 0 models are only estimated by the support method")
        return self

    def estimator_config(self) -> EstimatorConfig:
        """Estimator settings implied by the method"""
        return EstimatorConfig(
            gamma=self.model.gamma,
            delta=self.delta,
            s_n=self.s_n,
            alpha=self.model.alpha if self.method in ("oracle", "support") else None,
            jump_mode=self.jump_mode,
            j_fixed=self.j_fixed if self.method == "fixed-j" else None,
        )


class SweepRow(BaseModel):
    """One (n, replication) run of a sweep"""

    n: int
    rep: int
    method: SweepMethod
    j_hat: int
    hausdorff: float
    symdiff: float
    raster_bias: float
    seconds: float


class RatePoint(BaseModel):
    """Aggregated loss at one sample size"""

    n: int
    x: float = Field(..., description="ln(n / ln n)")
    y: float = Field(..., description="ln of the fitted statistic (mean loss, or median 2^-j for resolution fits)")
    mean: float
    median: float
    count: int


class RateFit(BaseModel):
    """Least-squares fit of ln(mean loss) on ln(n / ln n)"""

    quantity: str = "hausdorff"
    points: List[RatePoint]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    slope_stderr: Optional[float] = None
    target_exponent: float
    error: Optional[str] = None


class LemmaA1Report(BaseModel):
    """Empirical check of max_A |fbar(A) - fhat(A)| <= Psi_j over j <= j_max"""

    n: int
    j_max: int
    trials: int
    delta: float
    violations: int
    violation_rate: float
    slack: float
    passed: bool


class VernierBoundRow(BaseModel):
    """Vernier quantities at one resolution"""

    j: int
    j_prime: int
    vernier_true: float
    vernier_empirical: float = Field(..., description="Mean over trials; nan without trials")
    penalty: float = Field(..., description="Mean Psi_j' over trials; nan without trials")
    lower_bound: float
    upper_bound: float
    sandwich_ok: bool
    deviation_ok_fraction: float


class VernierBoundsReport(BaseModel):
    """Vernier deviation and sandwich checks"""

    n: int
    trials: int
    delta: float
    rows: List[VernierBoundRow]
    deviation_violation_rate: float
    passed: bool


class PenaltyScalingRow(BaseModel):
    """Penalty relative to sqrt(2^(jd) ln n / n) at one resolution"""

    j: int
    ratio_min: float
    ratio_max: float
    lower_bound_ok: bool


class PenaltyScalingReport(BaseModel):
    n: int
    trials: int
    rows: List[PenaltyScalingRow]
    passed: bool


class DecompositionRow(BaseModel):
    """Symmetric-difference cells against the error radius epsilon_j"""

    j: int
    epsilon_mean: float
    hausdorff_mean: float
    violation_rate: float


class DecompositionReport(BaseModel):
    n: int
    trials: int
    rows: List[DecompositionRow]


class ValidationCheck(BaseModel):
    """One assumption check of cmd_validate"""

    name: str
    passed: bool
    detail: str
    warning: bool = False


class ValidationReport(BaseModel):
    shape: ShapeName
    d: int
    gamma: float
    alpha: float
    checks: List[ValidationCheck]
    passed: bool


class GridSetPayload(BaseModel):
    """Wire form of a GridSet"""

    d: int = Field(..., ge=1, examples=[2])
    j: int = Field(..., ge=0, examples=[2])
    cells: List[List[int]] = Field(default_factory=list, examples=[[[1, 2], [2, 2]]])


class EstimateRequest(BaseModel):
    """Request model for a level set estimate"""

    points: List[List[float]] = Field(..., min_length=2, description="Samples in [0,1]^d, one row each")
    config: EstimatorConfig

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "points": [[0.1], [0.2], [0.4], [0.45], [0.9]],
                    "config": {"gamma": 1.0}
                }
            ]
        }
    }


class EstimateResponse(BaseModel):
    """Response model for a level set estimate"""

    estimate: GridSetPayload
    diagnostics: SelectionDiagnostics


class HausdorffRequest(BaseModel):
    a: GridSetPayload
    b: GridSetPayload


class HausdorffResponse(BaseModel):
    distance: float


class SampleRequest(BaseModel):
    model: ModelSpec
    n: int = Field(..., ge=1, le=1_000_000)
    seed: int = Field(0, ge=0)


class SampleResponse(BaseModel):
    d: int
    n: int
    seed: int
    acceptance_rate: float
    points: List[List[float]]


class HealthResponse(BaseModel):
    """Response model for health check endpoint"""

    status: str = Field(
        ...,
        description="Health status of the service"
    )
    version: str = Field(
        ...,
        description="Application version"
    )
    app_name: str = Field(
        ...,
        description="Application name"
    )


class ErrorResponse(BaseModel):
    """Response model for errors"""

    detail: str = Field(
        ...,
        description="Error details"
    )
    status_code: int = Field(
        ...,
        description="HTTP status code"
    )
