from typing import Optional

from pydantic import BaseModel, ConfigDict

from app.models.inference import EnrichmentFlag
from app.schemas.arrays import FloatList, Matrix


class ClusterReport(BaseModel):
    config_digest: str
    k: int
    linkage: str
    ids: list[str]
    labels: list[int]
    merge_heights: FloatList
    mds_coordinates: Matrix
    mds_eigenvalues: FloatList
    mds_negative_mass: float


class PermutationRowOut(BaseModel):
    covariate: str
    cutoff: Optional[float] = None
    observed_statistic: float
    p_value: float
    B: int
    rng_seed: int
    group_sizes: list[int]

    model_config = ConfigDict(from_attributes=True)


class EnrichmentRowOut(BaseModel):
    name: str
    level: Optional[str] = None
    probability: float
    y1: int
    n1: int
    y2: int
    n2: int
    draws: int
    flag: EnrichmentFlag
