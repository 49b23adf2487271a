import hashlib
import os
from pathlib import Path
from typing import Any, Literal, Optional

import orjson
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Calculate the absolute path to the .env file.
# It finds this file's location and navigates up to the project root.
_config_dir = os.path.dirname(os.path.abspath(__file__))
_backend_dir = os.path.dirname(os.path.dirname(_config_dir))
_project_root = os.path.dirname(_backend_dir)
_dotenv_path = os.path.join(_project_root, '.env')


RegistrationMode = Literal["elastic", "nonelastic"]


class AnalysisConfig(BaseSettings):
    # Discretization
    m: int = Field(128, ge=32)
    render_points: int = Field(7, ge=5)
    geodesic_points: int = Field(7, ge=5)
    seed_stride: Optional[int] = Field(None, ge=1)
    slope_set: Literal["default"] = "default"

    # Geometry tolerances
    projection_tol: float = Field(1e-8, gt=0)
    projection_max_iter: int = Field(200, ge=1)
    geodesic_tol: float = Field(1e-6, gt=0)
    geodesic_max_iter: int = Field(300, ge=1)
    exp_substeps: int = Field(8, ge=1)
    log_tol: float = Field(1e-8, gt=0)
    log_max_iter: int = Field(30, ge=1)

    # Registration
    rotation_tol: float = Field(1e-6, gt=0)
    rotation_rounds: int = Field(20, ge=1)
    warp_smoothing: float = Field(1.5, ge=0)
    # Finest node spacing, in grid cells, of the sub-grid warp refinement; 0 disables it.
    subgrid_spacing: float = Field(1e-4, ge=0, lt=0.5)
    mode: RegistrationMode = "elastic"

    # Karcher mean / sPCA
    mean_tol: float = Field(1e-4, gt=0)
    mean_max_iter: int = Field(100, ge=1)
    mean_step: float = Field(0.5, gt=0, le=1)
    rank_tol: float = Field(1e-10, gt=0)

    # Inference
    rng_seed: int = 0
    draws: int = Field(100_000, ge=10_000)
    permutations: int = Field(1000, ge=99)
    k_clusters: int = Field(2, ge=1)
    mds_dims: int = Field(2, ge=1)

    # Outputs
    render_directions: int = Field(3, ge=1)
    direction_steps: list[float] = [0.0, 2.0, 4.0, 6.0]
    survival_covariate: str = "survival"
    output_dir: str = "out"
    workers: int = Field(1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix='ELASTISHAPE_',
        env_file=_dotenv_path,
        env_file_encoding='utf-8',
        extra='ignore'
    )

    @field_validator("direction_steps")
    @classmethod
    def _steps_not_empty(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("direction_steps must not be empty")
        return value

    @model_validator(mode="after")
    def _stride_divides_m(self) -> "AnalysisConfig":
        if self.seed_stride is not None and self.m % self.seed_stride != 0:
            raise ValueError(f"seed_stride {self.seed_stride} does not divide m={self.m}")
        return self

    @property
    def effective_seed_stride(self) -> int:
        if self.seed_stride is not None:
            return self.seed_stride
        return max(1, self.m // 16)

    @classmethod
    def load(cls, path: Optional[Path] = None, **overrides: Any) -> "AnalysisConfig":
        """Flat JSON file merged under explicit overrides (CLI flags win)."""
        values: dict[str, Any] = {}
        if path is not None:
            values.update(orjson.loads(Path(path).read_bytes()))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_json(self) -> bytes:
        return orjson.dumps(self.model_dump(), option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2)

    def dump(self, path: Path) -> None:
        Path(path).write_bytes(self.to_json())

    def digest(self) -> str:
        canonical = orjson.dumps(self.model_dump(exclude={"output_dir", "workers"}), option=orjson.OPT_SORT_KEYS)
        return hashlib.sha256(canonical).hexdigest()


settings = AnalysisConfig()
