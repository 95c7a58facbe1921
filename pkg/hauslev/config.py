"""Application configuration management"""
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from hauslev.exceptions import ConfigError
from hauslev.models import (
    EstimatorConfig,
    LossName,
    ModelSpec,
    ShapeName,
    SnRule,
    SweepMethod,
    SweepPlan,
    _split_csv,
)


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    # API Configuration
    app_name: str = "Hausdorff Level Set Estimation API"
    app_version: str = "1.0.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_file: str = ""  # empty: console only

    # Estimator / harness resources
    cell_budget: int = 2 ** 26
    workers: int = 1
    quadrature_tol: float = 1e-4
    output_dir: str = "runs"

    # CORS Configuration (parsed from comma-separated strings in .env)
    cors_origins: List[str] = ["*"]
    cors_allow_credentials: bool = True
    cors_allow_methods: List[str] = ["*"]
    cors_allow_headers: List[str] = ["*"]

    model_config = SettingsConfigDict(
        env_prefix="HAUSLEV_",
        env_file=".env",
        case_sensitive=False
    )

    @field_validator("cors_origins", "cors_allow_methods", "cors_allow_headers", mode="before")
    @classmethod
    def parse_cors_lists(cls, v):
        """Parse CORS lists - can be comma-separated string or list"""
        return _split_csv(v)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


class RunConfig(BaseModel):
    """
    Fully resolved command configuration.

    Built from a key = value file overlaid by command-line flags. The same
    keys serve every subcommand; `alpha` is the model regularity for sample,
    validate and sweep, and the known regularity (oracle mode) for estimate.
    """

    # model
    model: ShapeName = "interval"
    d: int = Field(1, ge=1, le=3)
    gamma: float = Field(0.8, ge=0)
    alpha: Optional[float] = Field(None, ge=0)
    center: Optional[List[float]] = None
    radius: Optional[float] = Field(None, gt=0)
    width: Optional[float] = Field(None, gt=0)
    r_cap: Optional[float] = Field(None, gt=0)

    # sampling
    n: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)

    # estimator
    delta: Optional[float] = Field(None, gt=0, lt=1)
    s_n: Union[float, SnRule] = "loglog"
    jump_mode: bool = False
    j: Optional[int] = Field(None, ge=0)
    j_max: Optional[int] = Field(None, ge=0)

    # sweep
    method: SweepMethod = "adaptive"
    n_grid: Optional[List[int]] = None
    replications: int = Field(1, ge=1)
    base_seed: int = Field(0, ge=0)
    losses: List[LossName] = Field(default_factory=lambda: ["hausdorff", "symdiff"])
    j_ref: Optional[int] = Field(None, ge=0)
    workers: Optional[int] = Field(None, ge=1)
    record_timing: bool = False

    # files
    samples: Optional[str] = None
    out: Optional[str] = None

    model_config = ConfigDict(extra="forbid")

    @field_validator("center", "n_grid", "losses", mode="before")
    @classmethod
    def parse_lists(cls, v):
        """Parse lists - can be comma-separated string or list"""
        return _split_csv(v)

    @field_validator("s_n", mode="before")
    @classmethod
    def parse_s_n(cls, v):
        if isinstance(v, str) and v not in ("loglog", "log"):
            try:
                return float(v)
            except ValueError:
                raise ValueError("s_n must be 'loglog', 'log' or a number")
        return v

    def model_spec(self) -> ModelSpec:
        """Synthetic model described by this config (alpha defaults to 1)"""
        return ModelSpec(
            shape=self.model,
            d=self.d,
            gamma=self.gamma,
            alpha=1.0 if self.alpha is None else self.alpha,
            center=self.center,
            radius=self.radius,
            width=self.width,
            r_cap=self.r_cap,
        )

    def estimator_config(self) -> EstimatorConfig:
        """Estimator settings; alpha here switches to the oracle resolution"""
        return EstimatorConfig(
            gamma=self.gamma,
            delta=self.delta,
            s_n=self.s_n,
            j_max=self.j_max,
            alpha=self.alpha,
            jump_mode=self.jump_mode,
            j_fixed=self.j,
        )

    def sweep_plan(self) -> SweepPlan:
        """Sweep plan described by this config"""
        if not self.n_grid:
            raise ConfigError("a sweep needs n_grid")
        try:
            return SweepPlan(
                model=self.model_spec(),
                method=self.method,
                n_grid=self.n_grid,
                replications=self.replications,
                base_seed=self.base_seed,
                losses=self.losses,
                j_ref=self.j_ref,
                j_fixed=self.j,
                delta=self.delta,
                s_n=self.s_n,
                jump_mode=self.jump_mode,
                workers=self.workers,
                record_timing=self.record_timing,
            )
        except ValidationError as e:
            raise ConfigError(f"invalid sweep plan: {_describe(e)}") from e

    def to_lines(self) -> List[str]:
        """key = value lines with every effective value"""
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                text = ""
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, list):
                text = ", ".join(str(v) for v in value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        return lines


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def _describe(error: ValidationError) -> str:
    parts = []
    for err in error.errors():
        location = ".".join(str(p) for p in err.get("loc", ()))
        parts.append(f"{location}: {err.get('msg')}" if location else str(err.get("msg")))
    return "; ".join(parts)


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a line-oriented key = value config file.

    Blank lines and lines starting with # are skipped; empty values are
    treated as unset.

    Raises:
        ConfigError: unreadable file, malformed line or repeated key
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e

    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = _normalize_key(key)
        if not key:
            raise ConfigError(f"{path}:{number}: missing key")
        if key in values:
            raise ConfigError(f"{path}:{number}: key '{key}' given twice")
        value = value.strip()
        if value:
            values[key] = value
    return values


def resolve_run_config(
    file_values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Merge file values with command-line overrides (None means not given).

    Raises:
        ConfigError: unknown keys or invalid values
    """
    merged: Dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is not None:
                merged[_normalize_key(key)] = value

    unknown = sorted(set(merged) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_describe(e)}") from e


def write_resolved_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Write resolved_config.txt into out_dir and return its path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.txt"
    path.write_text("\n".join(config.to_lines()) + "\n")
    return path
